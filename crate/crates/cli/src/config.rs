//! Run configuration: flat `key=value` files, `--set` overrides, then
//! dedicated flags, in increasing precedence.

use std::path::Path;
use std::str::FromStr;

use rmdereverb::blind::{BlindConfig, DecayConfig, DrrSearchConfig};
use rmdereverb::dereverb::{PipelineConfig, SolverConfig, StepRule};
use rmdereverb::kv::KvRecord;
use rmdereverb::loss::{LossConfig, Variant};
use rmdereverb::rir::{AcousticParams, NoiseMode};
use rmdereverb::signal::DEFAULT_SAMPLE_RATE;
use rmdereverb::tfconv::BandRadius;
use rmdereverb::{Error, Result};

const KNOWN_KEYS: &[&str] = &[
    "rt60",
    "drr_db",
    "n_d",
    "noise_mode",
    "rir_len",
    "band_radius",
    "variant",
    "draws",
    "noise_floor",
    "mag_weight",
    "max_iters",
    "step_rule",
    "step_size",
    "stop_rel_tol",
    "drr_grid",
    "draws_per_point",
    "k_inner",
    "inner_step_size",
    "bins_per_band",
    "min_run",
    "dynamic_range_db",
    "smooth_half_width",
    "min_drop_db",
    "synthetic_len_s",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    rec: KvRecord,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(files: &[impl AsRef<Path>], overrides: &[String], seed: u64) -> Result<Self> {
        let mut rec = KvRecord::new();
        for f in files {
            let text = std::fs::read_to_string(f.as_ref()).map_err(|e| {
                Error::InvalidConfig(format!("cannot read config {}: {e}", f.as_ref().display()))
            })?;
            rec.merge(&text.parse()?);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{o}` is not key=value")))?;
            rec.set(k.trim(), v.trim());
        }
        let cfg = Self { rec, seed };
        cfg.check_keys()?;
        Ok(cfg)
    }

    fn check_keys(&self) -> Result<()> {
        match self.rec.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            Some(k) => Err(Error::InvalidConfig(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        self.rec.set(key, value);
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.rec.parse_value(key)
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn acoustic_params(&self) -> Result<AcousticParams> {
        let rt60 = self.get("rt60")?.ok_or_else(|| Error::InvalidConfig("rt60 is required".into()))?;
        let drr = self.get("drr_db")?.ok_or_else(|| Error::InvalidConfig("drr_db is required".into()))?;
        let mut p = AcousticParams::new(rt60, drr, DEFAULT_SAMPLE_RATE)?;
        if let Some(n_d) = self.get("n_d")? {
            p = p.with_direct_delay(n_d);
        }
        p = p.with_noise_mode(self.get_or("noise_mode", NoiseMode::Gaussian)?);
        p.validate()?;
        Ok(p)
    }

    pub fn band(&self) -> Result<BandRadius> {
        self.get_or("band_radius", BandRadius::default())
    }

    pub fn loss(&self) -> Result<LossConfig> {
        let variant: Variant = self.get_or("variant", Variant::Single)?;
        let mut cfg = LossConfig::with_variant(variant, self.get("draws")?).with_band(self.band()?);
        cfg.noise_floor = self.get_or("noise_floor", cfg.noise_floor)?;
        cfg.mag_weight = self.get_or("mag_weight", cfg.mag_weight)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            max_iters: self.get_or("max_iters", d.max_iters)?,
            step_rule: self.get_or("step_rule", StepRule::default())?,
            step_size: self.get_or("step_size", d.step_size)?,
            stop_rel_tol: self.get_or("stop_rel_tol", d.stop_rel_tol)?,
            loss: self.loss()?,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn decay(&self) -> Result<DecayConfig> {
        let d = DecayConfig::default();
        Ok(DecayConfig {
            bins_per_band: self.get_or("bins_per_band", d.bins_per_band)?,
            min_run: self.get_or("min_run", d.min_run)?,
            dynamic_range_db: self.get_or("dynamic_range_db", d.dynamic_range_db)?,
            smooth_half_width: self.get_or("smooth_half_width", d.smooth_half_width)?,
            min_drop_db: self.get_or("min_drop_db", d.min_drop_db)?,
        })
    }

    pub fn blind(&self) -> Result<BlindConfig> {
        let d = DrrSearchConfig::default();
        let grid = match self.rec.get("drr_grid") {
            Some(text) => text
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("drr_grid value `{v}`: {e}"))))
                .collect::<Result<Vec<_>>>()?,
            None => d.grid,
        };
        if grid.is_empty() {
            return Err(Error::InvalidConfig("drr_grid is empty".into()));
        }
        let drr = DrrSearchConfig {
            grid,
            draws_per_point: self.get_or("draws_per_point", d.draws_per_point)?,
            k_inner: self.get_or("k_inner", d.k_inner)?,
            step_size: self.get_or("inner_step_size", d.step_size)?,
            band: self.band()?,
            seed: self.seed,
        };
        if drr.draws_per_point == 0 {
            return Err(Error::InvalidConfig("draws_per_point must be at least 1".into()));
        }
        Ok(BlindConfig { decay: self.decay()?, drr })
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig { blind: self.blind()?, solver: self.solver()? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# room\nrt60=0.4\ndrr_db=3\n").unwrap();
        let cfg = RunConfig::load(&[&path], &["drr_db=-2".into()], 1).unwrap();
        let p = cfg.acoustic_params().unwrap();
        assert_eq!((p.rt60, p.drr_db), (0.4, -2.0));
        assert!(RunConfig::load(&[&path], &["rt6=1".into()], 1).is_err());
        assert!(RunConfig::load(&[&path], &["novalue".into()], 1).is_err());
    }

    #[test]
    fn typed_sections() {
        let cfg = RunConfig::load(
            &[] as &[&Path],
            &["variant=best".into(), "draws=3".into(), "drr_grid=-3, 0,3".into(), "band_radius=full".into()],
            9,
        )
        .unwrap();
        let loss = cfg.loss().unwrap();
        assert_eq!((loss.variant, loss.num_draws, loss.band), (Variant::Best, 3, BandRadius::Full));
        let blind = cfg.blind().unwrap();
        assert_eq!(blind.drr.grid, vec![-3.0, 0.0, 3.0]);
        assert_eq!(blind.drr.seed, 9);
        assert!(cfg.acoustic_params().is_err());
    }
}
