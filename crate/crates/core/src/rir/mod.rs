//! Acoustic parameters, Polack-model RIR sampling and energy-decay analysis.

mod edc;
mod sampler;

pub use edc::{analyze_rir, edc, EdcAnalysis};
pub use sampler::{DiracSampler, PolackSampler, RirSampler};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::seed;

/// Direct-path extent at 16 kHz (about 2.5 ms).
pub const DEFAULT_DIRECT_DELAY: usize = 40;

const LN10: f64 = std::f64::consts::LN_10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// `b(n) ~ N(0, σ²)`, for measured RIRs.
    #[default]
    Gaussian,
    /// `b(n) ~ |N(0, σ²)|`, for simulated RIRs with energy at DC.
    HalfNormal,
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "centered-gaussian" => Ok(Self::Gaussian),
            "half-normal" | "halfnormal" => Ok(Self::HalfNormal),
            other => Err(Error::Parse(format!("unknown noise mode `{other}`"))),
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::HalfNormal => "half-normal",
        })
    }
}

/// Scalar reverberation descriptors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcousticParams {
    pub rt60: f64,
    pub drr_db: f64,
    /// Direct-path delay in samples.
    pub n_d: usize,
    pub sample_rate: u32,
    pub noise_mode: NoiseMode,
}

impl AcousticParams {
    pub fn new(rt60: f64, drr_db: f64, sample_rate: u32) -> Result<Self> {
        let params = Self {
            rt60,
            drr_db,
            n_d: DEFAULT_DIRECT_DELAY,
            sample_rate,
            noise_mode: NoiseMode::Gaussian,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_direct_delay(mut self, n_d: usize) -> Self {
        self.n_d = n_d;
        self
    }

    pub fn with_noise_mode(mut self, mode: NoiseMode) -> Self {
        self.noise_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rt60.is_finite() && self.rt60 > 0.0) {
            return Err(Error::InvalidParam(format!("rt60 must be positive, got {}", self.rt60)));
        }
        if !self.drr_db.is_finite() {
            return Err(Error::InvalidParam("drr_db must be finite".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidParam("sample rate must be positive".into()));
        }
        Ok(())
    }

    /// Decay constant in samples.
    pub fn tau(&self) -> f64 {
        self.rt60 * self.sample_rate as f64 / (3.0 * LN10)
    }

    pub fn polack_draw(&self, seed: u64) -> PolackDraw {
        let tau = self.tau();
        PolackDraw { sigma: sigma_from_drr(self.drr_db, tau, self.n_d as f64), tau, seed }
    }

    /// Shortest RIR whose truncated tail holds < 0.1% of the tail energy.
    pub fn min_rir_len(&self) -> usize {
        self.n_d + 1 + (self.tau() * 1000f64.ln() / 2.0).ceil() as usize
    }

    /// Tail of `τ·ln(1000)` samples: 60 dB of energy decay after the direct path.
    pub fn default_rir_len(&self) -> usize {
        self.n_d + 1 + (self.tau() * 1000f64.ln()).ceil() as usize
    }

    pub fn to_kv(&self) -> KvRecord {
        KvRecord::new()
            .with("rt60", self.rt60)
            .with("drr_db", self.drr_db)
            .with("n_d", self.n_d)
            .with("sample_rate", self.sample_rate)
            .with("noise_mode", self.noise_mode)
    }

    pub fn from_kv(rec: &KvRecord) -> Result<Self> {
        let params = Self {
            rt60: rec.require("rt60")?,
            drr_db: rec.require("drr_db")?,
            n_d: rec.parse_value("n_d")?.unwrap_or(DEFAULT_DIRECT_DELAY),
            sample_rate: rec.parse_value("sample_rate")?.unwrap_or(16_000),
            noise_mode: rec.parse_value("noise_mode")?.unwrap_or_default(),
        };
        params.validate()?;
        Ok(params)
    }
}

/// Resolved Polack parameters for one draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolackDraw {
    /// Linear amplitude standard deviation of `b(n)`.
    pub sigma: f64,
    /// Decay constant in samples.
    pub tau: f64,
    pub seed: u64,
}

/// `τ = RT60·fs / (3 ln 10)`.
pub fn tau_from_rt60(rt60: f64, fs: f64) -> Result<f64> {
    if !(rt60 > 0.0 && fs > 0.0) || !rt60.is_finite() || !fs.is_finite() {
        return Err(Error::InvalidParam(format!(
            "rt60 and fs must be positive, got rt60={rt60}, fs={fs}"
        )));
    }
    Ok(rt60 * fs / (3.0 * LN10))
}

/// Tail standard deviation giving the requested DRR when the direct path has
/// unit energy: `σ = sqrt(2 e^{2 n_d/τ} / (τ · DRR_lin))`.
pub fn sigma_from_drr(drr_db: f64, tau: f64, n_d: f64) -> f64 {
    let drr_lin = db_to_power(drr_db);
    (2.0 * (2.0 * n_d / tau).exp() / (tau * drr_lin)).sqrt()
}

/// Expected tail energy `σ²(τ/2) e^{-2 n_d/τ}` of the Polack model.
pub fn polack_tail_energy(sigma: f64, tau: f64, n_d: f64) -> f64 {
    sigma * sigma * tau / 2.0 * (-2.0 * n_d / tau).exp()
}

pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn power_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

/// Time-domain room impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    taps: Vec<f64>,
    sample_rate: u32,
}

impl Rir {
    pub fn new(taps: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::EmptyInput("RIR has no taps"));
        }
        if taps.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParam("RIR has non-finite taps".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidParam("sample rate must be positive".into()));
        }
        Ok(Self { taps, sample_rate })
    }

    /// Unit impulse.
    pub fn dirac(sample_rate: u32) -> Self {
        Self { taps: vec![1.0], sample_rate }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self { taps: self.taps.iter().map(|x| x * gain).collect(), sample_rate: self.sample_rate }
    }

    /// One tap per line, preceded by a `# sample_rate=` header.
    pub fn to_text(&self) -> String {
        let mut out = format!("# sample_rate={}\n", self.sample_rate);
        for t in &self.taps {
            out.push_str(&format!("{t:e}\n"));
        }
        out
    }

    /// Parses [`Rir::to_text`] output; a missing header means 16 kHz.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut sample_rate = 16_000;
        let mut taps = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("sample_rate=") {
                    sample_rate =
                        v.trim().parse().map_err(|_| Error::Parse(format!("bad header `{line}`")))?;
                }
                continue;
            }
            taps.push(line.parse().map_err(|_| Error::Parse(format!("bad tap `{line}`")))?);
        }
        Self::new(taps, sample_rate)
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Draws `R(Θ)`: `h(0) = 1`, `h(1..=n_d) = 0`,
/// `h(n) = b(n) e^{-3 ln10 · n / (RT60 fs)}` beyond the direct path.
pub fn sample_rir(params: &AcousticParams, len: usize, seed: u64) -> Result<Rir> {
    params.validate()?;
    let min = params.min_rir_len();
    if len < min {
        return Err(Error::RirTooShort { len, min });
    }
    let draw = params.polack_draw(seed);
    let normal = Normal::new(0.0, draw.sigma)
        .map_err(|e| Error::InvalidParam(format!("tail deviation {}: {e}", draw.sigma)))?;
    let mut rng = seed::rng(seed);
    let mut taps = vec![0.0; len];
    taps[0] = 1.0;
    for (n, tap) in taps.iter_mut().enumerate().skip(params.n_d + 1) {
        let b: f64 = normal.sample(&mut rng);
        let b = match params.noise_mode {
            NoiseMode::Gaussian => b,
            NoiseMode::HalfNormal => b.abs(),
        };
        *tap = b * (-(n as f64) / draw.tau).exp();
    }
    Rir::new(taps, params.sample_rate)
}
