//! Blind estimation of RT60 and DRR from a reverberant spectrogram.
//!
//! RT60 comes from free-decay regions: in each subband, maximal runs of
//! strictly decreasing log-energy are fitted with a line and the median
//! decay time is mapped through a calibrated polynomial. DRR is picked from
//! a grid by how well a short masked solve reproduces the observed
//! log-magnitudes in those same decay regions.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dereverb::{solve, SolverConfig};
use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::loss::{gradnorm_alpha, loss_complex, loss_mag, LossConfig, Variant};
use crate::rir::{AcousticParams, PolackSampler, RirSampler};
use crate::seed::{derive_seed, domain};
use crate::signal::Spectrogram;
use crate::tfconv::{BandRadius, KernelBuilder};
use crate::Complex64;

/// Smallest RT60 reported by [`analyze_blind`]; lower mappings are clamped
/// and flagged.
pub const RT60_FLOOR: f64 = 0.1;

pub const DEFAULT_DRR_GRID: [f64; 6] = [-6.0, -3.0, 0.0, 3.0, 6.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConfig {
    /// Adjacent non-negative-frequency bins summed into one band.
    pub bins_per_band: usize,
    pub min_run: usize,
    /// Band energies further than this below the loudest are ignored.
    pub dynamic_range_db: f64,
    /// Half-width of the centered moving average applied to band energies
    /// before taking logs. Exponential decays keep their slope.
    pub smooth_half_width: usize,
    /// Runs whose fitted line spans less than this many dB are ignored.
    pub min_drop_db: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self { bins_per_band: 32, min_run: 3, dynamic_range_db: 80.0, smooth_half_width: 1, min_drop_db: 10.0 }
    }
}

/// A maximal strictly decreasing run of one band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRun {
    pub band: usize,
    pub start: usize,
    pub len: usize,
    /// Seconds for a 60 dB decay at the fitted slope.
    pub decay_time: f64,
}

fn band_log_energy(y: &Spectrogram, cfg: &DecayConfig) -> Vec<Vec<Option<f64>>> {
    let half = y.num_bins() / 2 + 1;
    let width = cfg.bins_per_band.max(1);
    let bands = half.div_ceil(width);
    let energy: Vec<Vec<f64>> = (0..bands)
        .map(|b| {
            let lo = b * width;
            let hi = (lo + width).min(half);
            (0..y.num_frames()).map(|t| y.frame(t)[lo..hi].iter().map(|c| c.norm_sqr()).sum()).collect()
        })
        .collect();
    let peak = energy.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    if peak == 0.0 {
        return vec![vec![None; y.num_frames()]; bands];
    }
    let floor = 10.0 * peak.log10() - cfg.dynamic_range_db;
    let (first, last) = interior_frames(y);
    let k = cfg.smooth_half_width;
    let (first, last) = (first + k, last.saturating_sub(k));
    energy
        .into_iter()
        .map(|row| {
            (0..row.len())
                .map(|t| {
                    if t < first || t >= last {
                        return None;
                    }
                    let e = row[t - k..=t + k].iter().sum::<f64>() / (2 * k + 1) as f64;
                    (e > 0.0).then(|| 10.0 * e.log10()).filter(|db| *db >= floor)
                })
                .collect()
        })
        .collect()
}

/// Frames whose window lies entirely inside the signal; edge frames see
/// zero padding and would fake onsets and decays.
fn interior_frames(y: &Spectrogram) -> (usize, usize) {
    let cfg = y.config();
    let (hop, pad, n) = (cfg.hop(), cfg.lead_pad(), cfg.window_len());
    let first = pad.div_ceil(hop);
    let last = if y.signal_len() + pad >= n { (y.signal_len() + pad - n) / hop + 1 } else { 0 };
    (first, last.min(y.num_frames()))
}

fn slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean_t = (n - 1.0) / 2.0;
    let mean_v = values.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, v) in values.iter().enumerate() {
        let dt = t as f64 - mean_t;
        num += dt * (v - mean_v);
        den += dt * dt;
    }
    num / den
}

/// All decay runs of `y`, band-major.
pub fn decay_runs(y: &Spectrogram, cfg: &DecayConfig) -> Vec<DecayRun> {
    let frame_secs = y.config().hop() as f64 / y.sample_rate() as f64;
    let mut runs = Vec::new();
    for (band, row) in band_log_energy(y, cfg).iter().enumerate() {
        let mut t = 0;
        while t < row.len() {
            let Some(first) = row[t] else {
                t += 1;
                continue;
            };
            let mut vals = vec![first];
            let mut end = t + 1;
            while let Some(Some(v)) = row.get(end) {
                if *v >= *vals.last().expect("non-empty") {
                    break;
                }
                vals.push(*v);
                end += 1;
            }
            let s = if vals.len() >= cfg.min_run.max(2) { slope(&vals) } else { 0.0 };
            if s < 0.0 && -s * (vals.len() - 1) as f64 >= cfg.min_drop_db {
                runs.push(DecayRun { band, start: t, len: vals.len(), decay_time: -60.0 / s * frame_secs });
            }
            t = end;
        }
    }
    runs
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median decay time over all runs and bands, in seconds, before
/// calibration.
pub fn raw_decay_estimate(y: &Spectrogram, cfg: &DecayConfig) -> Result<f64> {
    let span = y.signal_len().max(y.num_frames() * y.config().hop());
    if (span as f64) < y.sample_rate() as f64 {
        return Err(Error::InvalidParam(format!(
            "blind analysis needs at least 1 s of audio, got {:.3} s",
            span as f64 / y.sample_rate() as f64
        )));
    }
    let mut times: Vec<f64> = decay_runs(y, cfg).into_iter().map(|r| r.decay_time).collect();
    if times.is_empty() {
        return Err(Error::InsufficientDecay);
    }
    Ok(median(&mut times))
}

/// Least-squares polynomial mapping from raw decay time to RT60.
#[derive(Debug, Clone, PartialEq)]
pub struct Rt60Calibration {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// Root-mean-square fit error in seconds.
    pub residual: f64,
    pub n_pairs: usize,
    /// Raw-estimate range seen during fitting; inputs are clamped to it.
    pub raw_min: f64,
    pub raw_max: f64,
}

impl Rt60Calibration {
    /// Identity map over `[0, ∞)`, for use without a fitted calibration.
    pub fn identity() -> Self {
        Self { c0: 0.0, c1: 1.0, c2: 0.0, residual: 0.0, n_pairs: 0, raw_min: 0.0, raw_max: f64::MAX }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        let r = raw.clamp(self.raw_min, self.raw_max);
        self.c0 + self.c1 * r + self.c2 * r * r
    }

    pub fn to_kv(&self) -> KvRecord {
        KvRecord::new()
            .with("c0", format!("{:e}", self.c0))
            .with("c1", format!("{:e}", self.c1))
            .with("c2", format!("{:e}", self.c2))
            .with("residual", format!("{:e}", self.residual))
            .with("n_pairs", self.n_pairs)
            .with("raw_min", format!("{:e}", self.raw_min))
            .with("raw_max", format!("{:e}", self.raw_max))
    }

    pub fn from_kv(rec: &KvRecord) -> Result<Self> {
        let cal = Self {
            c0: rec.require("c0")?,
            c1: rec.require("c1")?,
            c2: rec.require("c2")?,
            residual: rec.require("residual")?,
            n_pairs: rec.require("n_pairs")?,
            raw_min: rec.parse_value("raw_min")?.unwrap_or(0.0),
            raw_max: rec.parse_value("raw_max")?.unwrap_or(f64::MAX),
        };
        if ![cal.c0, cal.c1, cal.c2, cal.raw_min, cal.raw_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("calibration coefficients must be finite".into()));
        }
        Ok(cal)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_kv().to_string())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&std::fs::read_to_string(path)?.parse()?)
    }
}

/// Least-squares polynomial of the given order through `(x, y)`; returns
/// coefficients in ascending powers and the RMS residual.
pub fn fit_polynomial(points: &[(f64, f64)], order: usize) -> Result<(Vec<f64>, f64)> {
    if points.len() < order + 1 {
        return Err(Error::InsufficientCalibration(points.len()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidParam("calibration points must be finite".into()));
    }
    let x0 = points[0].0;
    if order > 0 && points.iter().all(|(x, _)| *x == x0) {
        return Err(Error::DegenerateCalibration);
    }
    // center and scale for conditioning, then expand back
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let scale = points.iter().map(|p| (p.0 - mean).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(points.len(), order + 1, |i, j| ((points[i].0 - mean) / scale).powi(j as i32));
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let u = a.clone().svd(true, true).solve(&b, 1e-12).map_err(|_| Error::DegenerateCalibration)?;
    let fitted = &a * &u;
    let residual = ((&b - fitted).norm_squared() / n).sqrt();

    // p(x) = Σ u_j ((x - mean)/scale)^j
    let mut coeffs = vec![0.0; order + 1];
    for (j, uj) in u.iter().enumerate() {
        let k = uj / scale.powi(j as i32);
        for (i, c) in coeffs.iter_mut().enumerate().take(j + 1) {
            *c += k * binomial(j, i) * (-mean).powi((j - i) as i32);
        }
    }
    Ok((coeffs, residual))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Fits `rt60 ≈ c0 + c1 r + c2 r²` on precomputed raw estimates.
pub fn calibrate_from_raw(pairs: &[(f64, f64)]) -> Result<Rt60Calibration> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientCalibration(pairs.len()));
    }
    let (c, residual) = fit_polynomial(pairs, 2)?;
    let raw_min = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let raw_max = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(Rt60Calibration { c0: c[0], c1: c[1], c2: c[2], residual, n_pairs: pairs.len(), raw_min, raw_max })
}

pub fn calibrate_rt60(pairs: &[(Spectrogram, f64)], cfg: &DecayConfig) -> Result<Rt60Calibration> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientCalibration(pairs.len()));
    }
    let raw: Vec<(f64, f64)> =
        pairs.iter().map(|(y, rt60)| Ok((raw_decay_estimate(y, cfg)?, *rt60))).collect::<Result<_>>()?;
    calibrate_from_raw(&raw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrrSearchConfig {
    pub grid: Vec<f64>,
    pub draws_per_point: usize,
    /// Masked solver updates per grid point before scoring.
    pub k_inner: usize,
    pub step_size: f64,
    pub band: BandRadius,
    pub seed: u64,
}

impl Default for DrrSearchConfig {
    fn default() -> Self {
        Self {
            grid: DEFAULT_DRR_GRID.to_vec(),
            draws_per_point: 4,
            k_inner: 0,
            step_size: 5e-2,
            band: BandRadius::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlindConfig {
    pub decay: DecayConfig,
    pub drr: DrrSearchConfig,
}

/// Index of the smallest loss; ties go to the lowest grid value.
pub fn select_grid_point(grid: &[f64], losses: &[f64]) -> Option<usize> {
    let mut order: Vec<usize> = (0..grid.len().min(losses.len())).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    order.into_iter().fold(None, |best, i| match best {
        Some(b) if losses[b] <= losses[i] => Some(b),
        _ => Some(i),
    })
}

/// Per grid point: the log-magnitude mismatch restricted to decay regions
/// (the selection score) and the total RM loss, both averaged over draws.
pub fn drr_grid_losses(
    y: &Spectrogram,
    rt60: f64,
    decay: &DecayConfig,
    cfg: &DrrSearchConfig,
) -> Result<Vec<(f64, f64)>> {
    if cfg.grid.is_empty() {
        return Err(Error::InvalidParam("DRR grid is empty".into()));
    }
    if cfg.draws_per_point == 0 {
        return Err(Error::InvalidParam("draws_per_point must be at least 1".into()));
    }
    let f = y.num_bins();
    let half = f / 2 + 1;
    let width = decay.bins_per_band.max(1);
    // decay regions: every frame of a run after its first, mirrored to
    // negative frequencies
    let mut mask = vec![false; y.data().len()];
    for run in decay_runs(y, decay) {
        for t in run.start + 1..run.start + run.len {
            for k in run.band * width..((run.band + 1) * width).min(half) {
                mask[t * f + k] = true;
                mask[t * f + (f - k) % f] = true;
            }
        }
    }
    let init = y.with_data(
        y.data().iter().zip(&mask).map(|(c, m)| if *m { Complex64::default() } else { *c }).collect(),
    );
    let builder = Arc::new(KernelBuilder::new(y.shared_config().clone()));
    let variant = if cfg.draws_per_point == 1 { Variant::Single } else { Variant::Average };
    let loss_cfg = LossConfig { variant, num_draws: cfg.draws_per_point, band: cfg.band, ..LossConfig::default() };
    // common random numbers: every grid point sees the same draw seeds
    let seed = derive_seed(cfg.seed, domain::GRID_POINT, 0);
    let gain = ((y.data().len() as f64) / y.norm_sqr()).sqrt();
    let yn = y.scaled(gain);

    cfg.grid
        .par_iter()
        .map(|&drr| {
            let params = AcousticParams::new(rt60, drr, y.sample_rate())?;
            let sampler = PolackSampler::new(params)?;
            let shat = if cfg.k_inner > 0 {
                let solver = SolverConfig {
                    max_iters: cfg.k_inner + 1,
                    step_size: cfg.step_size,
                    stop_rel_tol: 0.0,
                    loss: loss_cfg,
                    seed,
                    ..SolverConfig::default()
                };
                solve(y, &sampler, &builder, &solver, init.clone(), Some(&mask))?.0
            } else {
                init.clone()
            };
            let shat = shat.scaled(gain);
            let (mut score, mut total) = (0.0, 0.0);
            for j in 0..cfg.draws_per_point {
                let h = sampler.sample(derive_seed(seed, domain::RIR_DRAW, j as u64))?;
                let yhat = builder.build(&h, cfg.band).apply(&shat)?.with_frames(yn.num_frames());
                score += yn
                    .data()
                    .iter()
                    .zip(yhat.data())
                    .zip(&mask)
                    .filter(|(_, m)| **m)
                    .map(|((a, b), _)| (a.norm().ln_1p() - b.norm().ln_1p()).powi(2))
                    .sum::<f64>();
                let alpha = gradnorm_alpha(&yn, &yhat).unwrap_or(1.0);
                total += loss_complex(&yn, &yhat)? + alpha * loss_mag(&yn, &yhat, 1.0)?;
            }
            let n = cfg.draws_per_point as f64;
            Ok((score / n, total / n))
        })
        .collect()
}

/// Grid DRR (dB) whose short masked solve best matches `Y`'s
/// log-magnitudes; ties go to the lowest DRR.
pub fn blind_drr(y: &Spectrogram, rt60: f64, decay: &DecayConfig, cfg: &DrrSearchConfig) -> Result<f64> {
    let losses = drr_grid_losses(y, rt60, decay, cfg)?;
    let scores: Vec<f64> = losses.iter().map(|l| l.0).collect();
    let i = select_grid_point(&cfg.grid, &scores).expect("non-empty grid");
    Ok(cfg.grid[i])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlindEstimate {
    pub rt60: f64,
    pub drr_db: f64,
    pub raw_median_decay: f64,
    /// Total RM loss of the selected grid point (unit-RMS observation).
    pub rm_loss_at_estimate: f64,
    /// The raw decay fell below the calibrated range, or the mapped RT60
    /// below [`RT60_FLOOR`]: the input looks less reverberant than anything
    /// the calibration covers.
    pub below_floor: bool,
}

impl BlindEstimate {
    pub fn to_kv(&self) -> KvRecord {
        KvRecord::new()
            .with("rt60", format!("{:.6}", self.rt60))
            .with("drr_db", self.drr_db)
            .with("raw_median_decay", format!("{:.6}", self.raw_median_decay))
            .with("rm_loss_at_estimate", format!("{:e}", self.rm_loss_at_estimate))
            .with("below_floor", self.below_floor)
    }
}

/// Raw decay estimate, calibration map, DRR grid search.
pub fn analyze_blind(y: &Spectrogram, cal: &Rt60Calibration, cfg: &BlindConfig) -> Result<BlindEstimate> {
    let raw = raw_decay_estimate(y, &cfg.decay)?;
    let mapped = cal.apply(raw);
    let below_floor = raw < cal.raw_min || !(mapped >= RT60_FLOOR);
    let rt60 = mapped.max(RT60_FLOOR);
    let losses = drr_grid_losses(y, rt60, &cfg.decay, &cfg.drr)?;
    let scores: Vec<f64> = losses.iter().map(|l| l.0).collect();
    let i = select_grid_point(&cfg.drr.grid, &scores).expect("non-empty grid");
    Ok(BlindEstimate {
        rt60,
        drr_db: cfg.drr.grid[i],
        raw_median_decay: raw,
        rm_loss_at_estimate: losses[i].1,
        below_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, Signal, StftConfig};

    fn spec_of(samples: Vec<f64>) -> Spectrogram {
        let cfg = Arc::new(StftConfig::default_speech());
        stft(&Signal::new(samples, 16_000).unwrap(), &cfg).unwrap()
    }

    #[test]
    fn silence_and_growth_have_no_decay() {
        assert!(matches!(
            raw_decay_estimate(&spec_of(vec![0.0; 20_000]), &DecayConfig::default()),
            Err(Error::InsufficientDecay)
        ));
        let growing: Vec<f64> =
            (0..20_000).map(|n| (n as f64 / 1500.0).exp() * (0.3 * n as f64).sin() * 1e-6).collect();
        assert!(matches!(
            raw_decay_estimate(&spec_of(growing), &DecayConfig::default()),
            Err(Error::InsufficientDecay)
        ));
    }

    #[test]
    fn short_input_is_rejected() {
        assert!(matches!(
            raw_decay_estimate(&spec_of(vec![1.0; 8000]), &DecayConfig::default()),
            Err(Error::InvalidParam(_))
        ));
    }

    #[test]
    fn clean_exponential_decay_is_exact() {
        // a decaying sinusoid has a noise-free log-energy line
        let tau0 = 1600.0;
        let x: Vec<f64> = (0..24_000).map(|n| (-(n as f64) / tau0).exp() * (0.37 * n as f64).sin()).collect();
        let raw = raw_decay_estimate(&spec_of(x), &DecayConfig::default()).unwrap();
        let expected = 3.0 * 10f64.ln() * tau0 / 16_000.0;
        assert!((raw - expected).abs() < 0.02 * expected, "{raw} vs {expected}");
    }

    #[test]
    fn exact_linear_calibration() {
        let pairs: Vec<(f64, f64)> = [0.1, 0.3, 0.45, 0.7, 1.1].iter().map(|r| (*r, 2.0 * r)).collect();
        let cal = calibrate_from_raw(&pairs).unwrap();
        assert!(cal.c0.abs() < 1e-8 && (cal.c1 - 2.0).abs() < 1e-8 && cal.c2.abs() < 1e-8, "{cal:?}");
        assert!(cal.residual < 1e-10);
        assert_eq!(cal.n_pairs, 5);
    }

    #[test]
    fn quadratic_recovered_in_original_coordinates() {
        let pairs: Vec<(f64, f64)> = (0..7).map(|i| 0.2 + 0.1 * i as f64).map(|r| (r, 0.3 - r + 4.0 * r * r)).collect();
        let (c, res) = fit_polynomial(&pairs, 2).unwrap();
        assert!((c[0] - 0.3).abs() < 1e-10 && (c[1] + 1.0).abs() < 1e-10 && (c[2] - 4.0).abs() < 1e-10);
        assert!(res < 1e-12);
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(calibrate_from_raw(&[(0.1, 0.2), (0.2, 0.4)]), Err(Error::InsufficientCalibration(2))));
        assert!(matches!(
            calibrate_from_raw(&[(0.3, 0.2), (0.3, 0.4), (0.3, 0.5)]),
            Err(Error::DegenerateCalibration)
        ));
    }

    #[test]
    fn calibration_round_trips_through_kv() {
        let cal = calibrate_from_raw(&[(0.1, 0.25), (0.2, 0.41), (0.4, 0.8), (0.5, 1.1)]).unwrap();
        let back = Rt60Calibration::from_kv(&cal.to_kv().to_string().parse().unwrap()).unwrap();
        assert_eq!(cal, back);
        assert_eq!(cal.apply(10.0), cal.apply(cal.raw_max));
    }

    #[test]
    fn grid_selection_tie_break() {
        assert_eq!(select_grid_point(&[3.0, -3.0, 0.0], &[1.0, 1.0, 2.0]), Some(1));
        assert_eq!(select_grid_point(&[0.0], &[5.0]), Some(0));
        assert_eq!(select_grid_point(&[], &[]), None);
    }
}
