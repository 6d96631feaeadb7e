//! Reverberation-matching losses.
//!
//! For an observation `Y`, a dry estimate `Ŝ` and a sampled RIR `ĥ`, the
//! reverberant estimate is `Ŷ = C(Ŝ, ĥ)` cropped (or zero-extended) to the
//! frames of `Y`, and the per-draw loss is `L = L_C + α L_MAG` with
//!
//! - `L_C = ‖Y - Ŷ‖²_F`
//! - `L_MAG = ‖log(δ + |Y|) - log(δ + |Ŷ|)‖²_F` (δ = 1 by default)
//!
//! `α` balances the two gradient norms with respect to `Ŷ` and is
//! recomputed for every draw. Gradients are returned in the packed form
//! `∂L/∂Re + i ∂L/∂Im`, which is what the adjoint operator consumes.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::rir::RirSampler;
use crate::seed::{derive_seed, domain};
use crate::signal::Spectrogram;
use crate::tfconv::{BandRadius, ConvKernel, KernelBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// One draw.
    #[default]
    Single,
    /// Mean over draws.
    Average,
    /// Lowest-loss draw only.
    Best,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "average" | "avg" => Ok(Self::Average),
            "best" => Ok(Self::Best),
            other => Err(Error::Parse(format!("unknown loss variant `{other}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Single => "single",
            Self::Average => "average",
            Self::Best => "best",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub variant: Variant,
    pub num_draws: usize,
    /// Offset δ inside `log(δ + |·|)`.
    pub noise_floor: f64,
    pub band: BandRadius,
    /// Scales the balancing weight α; zero leaves the plain complex loss.
    pub mag_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { variant: Variant::Single, num_draws: 1, noise_floor: 1.0, band: BandRadius::default(), mag_weight: 1.0 }
    }
}

impl LossConfig {
    pub fn single() -> Self {
        Self::default()
    }

    /// `draws` defaults to 10 for the multi-draw variants.
    pub fn with_variant(variant: Variant, draws: Option<usize>) -> Self {
        let num_draws = match variant {
            Variant::Single => 1,
            _ => draws.unwrap_or(10),
        };
        Self { variant, num_draws, ..Self::default() }
    }

    pub fn with_band(mut self, band: BandRadius) -> Self {
        self.band = band;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_draws == 0 {
            return Err(Error::InvalidParam("num_draws must be at least 1".into()));
        }
        if self.variant == Variant::Single && self.num_draws != 1 {
            return Err(Error::InvalidParam("the single variant uses exactly one draw".into()));
        }
        if !(self.noise_floor > 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::InvalidParam("noise floor must be positive".into()));
        }
        if !(self.mag_weight >= 0.0 && self.mag_weight.is_finite()) {
            return Err(Error::InvalidParam("magnitude weight must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_complex: f64,
    pub l_mag: f64,
    pub alpha: f64,
    /// `l_complex + alpha · l_mag`.
    pub total: f64,
    pub selected_draw: Option<usize>,
}

impl LossReport {
    pub fn to_kv(&self) -> KvRecord {
        let mut rec = KvRecord::new()
            .with("l_complex", format!("{:e}", self.l_complex))
            .with("l_mag", format!("{:e}", self.l_mag))
            .with("alpha", format!("{:e}", self.alpha))
            .with("total", format!("{:e}", self.total));
        rec.set("selected_draw", self.selected_draw.map_or("none".to_string(), |i| i.to_string()));
        rec
    }
}

fn check_shapes(y: &Spectrogram, yhat: &Spectrogram) -> Result<()> {
    if !y.same_shape(yhat) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            y.num_bins(),
            y.num_frames(),
            yhat.num_bins(),
            yhat.num_frames()
        )));
    }
    Ok(())
}

/// `‖Y - Ŷ‖²_F` over the full band.
pub fn loss_complex(y: &Spectrogram, yhat: &Spectrogram) -> Result<f64> {
    check_shapes(y, yhat)?;
    Ok(y.data().iter().zip(yhat.data()).map(|(a, b)| (a - b).norm_sqr()).sum())
}

/// `‖log(δ + |Y|) - log(δ + |Ŷ|)‖²_F`.
pub fn loss_mag(y: &Spectrogram, yhat: &Spectrogram, noise_floor: f64) -> Result<f64> {
    check_shapes(y, yhat)?;
    Ok(y.data()
        .iter()
        .zip(yhat.data())
        .map(|(a, b)| ((noise_floor + a.norm()).ln() - (noise_floor + b.norm()).ln()).powi(2))
        .sum())
}

/// Packed gradient of [`loss_complex`] with respect to `Ŷ`: `2(Ŷ - Y)`.
pub fn grad_complex(y: &Spectrogram, yhat: &Spectrogram) -> Result<Vec<Complex64>> {
    check_shapes(y, yhat)?;
    Ok(y.data().iter().zip(yhat.data()).map(|(a, b)| 2.0 * (b - a)).collect())
}

/// Packed gradient of [`loss_mag`] with respect to `Ŷ`. Bins where `Ŷ = 0`
/// get the zero subgradient.
pub fn grad_mag(y: &Spectrogram, yhat: &Spectrogram, noise_floor: f64) -> Result<Vec<Complex64>> {
    check_shapes(y, yhat)?;
    Ok(y.data()
        .iter()
        .zip(yhat.data())
        .map(|(a, b)| {
            let mag = b.norm();
            if mag == 0.0 {
                return Complex64::default();
            }
            let diff = (noise_floor + a.norm()).ln() - (noise_floor + mag).ln();
            b * (-2.0 * diff / ((noise_floor + mag) * mag))
        })
        .collect())
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn alpha_from_grads(gc: &[Complex64], gm: &[Complex64]) -> Result<f64> {
    let nm = norm(gm);
    if nm == 0.0 || !nm.is_finite() {
        return Err(Error::DegenerateBalance);
    }
    Ok(norm(gc) / nm)
}

/// `α = ‖∂L_C/∂Ŷ‖_F / ‖∂L_MAG/∂Ŷ‖_F` (δ = 1).
pub fn gradnorm_alpha(y: &Spectrogram, yhat: &Spectrogram) -> Result<f64> {
    alpha_from_grads(&grad_complex(y, yhat)?, &grad_mag(y, yhat, 1.0)?)
}

struct DrawEval {
    kernel: ConvKernel,
    yhat_frames: usize,
    yhat: Spectrogram,
    l_complex: f64,
    l_mag: f64,
    alpha: f64,
}

impl DrawEval {
    fn total(&self) -> f64 {
        self.l_complex + self.alpha * self.l_mag
    }
}

/// Monte-Carlo reverberation-matching loss bound to one STFT configuration.
#[derive(Debug, Clone)]
pub struct RmLoss {
    builder: Arc<KernelBuilder>,
    cfg: LossConfig,
}

impl RmLoss {
    pub fn new(builder: Arc<KernelBuilder>, cfg: LossConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { builder, cfg })
    }

    pub fn config(&self) -> &LossConfig {
        &self.cfg
    }

    pub fn builder(&self) -> &Arc<KernelBuilder> {
        &self.builder
    }

    fn eval_draw(
        &self,
        y: &Spectrogram,
        shat: &Spectrogram,
        sampler: &dyn RirSampler,
        seed: u64,
        fallback_alpha: f64,
    ) -> Result<DrawEval> {
        let h = sampler.sample(seed)?;
        if h.sample_rate() != y.sample_rate() {
            return Err(Error::InvalidParam(format!(
                "sampler yields {} Hz RIRs for a {} Hz observation",
                h.sample_rate(),
                y.sample_rate()
            )));
        }
        let kernel = self.builder.build(&h, self.cfg.band);
        let full = kernel.apply(shat)?;
        let yhat_frames = full.num_frames();
        let yhat = full.with_frames(y.num_frames());
        let l_complex = loss_complex(y, &yhat)?;
        let l_mag = loss_mag(y, &yhat, self.cfg.noise_floor)?;
        let gc = grad_complex(y, &yhat)?;
        let gm = grad_mag(y, &yhat, self.cfg.noise_floor)?;
        let alpha = alpha_from_grads(&gc, &gm).unwrap_or(fallback_alpha) * self.cfg.mag_weight;
        Ok(DrawEval { kernel, yhat_frames, yhat, l_complex, l_mag, alpha })
    }

    fn draw_gradient(
        &self,
        y: &Spectrogram,
        shat: &Spectrogram,
        draw: &DrawEval,
    ) -> Result<Vec<Complex64>> {
        let gc = grad_complex(y, &draw.yhat)?;
        let gm = grad_mag(y, &draw.yhat, self.cfg.noise_floor)?;
        let packed: Vec<Complex64> = gc.iter().zip(&gm).map(|(c, m)| c + m * draw.alpha).collect();
        let g = y.with_data(packed).with_frames(draw.yhat_frames);
        Ok(draw.kernel.apply_adjoint(&g, shat.num_frames())?.into_data())
    }

    /// Evaluates the loss and, on request, its gradient with respect to `Ŝ`.
    ///
    /// Draw `i` uses seed `derive_seed(seed, RIR_DRAW, i)`. `fallback_alpha`
    /// replaces the balanced α (before `mag_weight`) for any draw whose
    /// log-magnitude gradient vanishes.
    pub fn evaluate(
        &self,
        y: &Spectrogram,
        shat: &Spectrogram,
        sampler: &dyn RirSampler,
        seed: u64,
        fallback_alpha: f64,
        with_gradient: bool,
    ) -> Result<(LossReport, Option<Spectrogram>)> {
        if shat.num_frames() == 0 {
            return Err(Error::EmptyInput("dry estimate has no frames"));
        }
        if !y.same_config(shat) {
            return Err(Error::ConfigMismatch);
        }
        // a Dirac measure collapses the expectation to one evaluation
        let draws = if sampler.is_degenerate() { 1 } else { self.cfg.num_draws };
        let evals: Vec<DrawEval> = (0..draws)
            .into_par_iter()
            .map(|i| {
                let s = derive_seed(seed, domain::RIR_DRAW, i as u64);
                self.eval_draw(y, shat, sampler, s, fallback_alpha)
            })
            .collect::<Result<_>>()?;

        let (report, chosen): (LossReport, Vec<usize>) = match self.cfg.variant {
            _ if evals.len() == 1 => {
                let e = &evals[0];
                let selected = (self.cfg.variant == Variant::Best).then_some(0);
                (
                    LossReport {
                        l_complex: e.l_complex,
                        l_mag: e.l_mag,
                        alpha: e.alpha,
                        total: e.total(),
                        selected_draw: selected,
                    },
                    vec![0],
                )
            }
            Variant::Best => {
                // first minimum wins ties
                let (best, e) = evals
                    .iter()
                    .enumerate()
                    .fold(None::<(usize, &DrawEval)>, |acc, (i, e)| match acc {
                        Some((_, b)) if b.total() <= e.total() => acc,
                        _ => Some((i, e)),
                    })
                    .expect("at least one draw");
                (
                    LossReport {
                        l_complex: e.l_complex,
                        l_mag: e.l_mag,
                        alpha: e.alpha,
                        total: e.total(),
                        selected_draw: Some(best),
                    },
                    vec![best],
                )
            }
            Variant::Single | Variant::Average => {
                let n = evals.len() as f64;
                let l_complex = evals.iter().map(|e| e.l_complex).sum::<f64>() / n;
                let l_mag = evals.iter().map(|e| e.l_mag).sum::<f64>() / n;
                let total = evals.iter().map(DrawEval::total).sum::<f64>() / n;
                // effective weight of the averaged log-magnitude term
                let alpha = if l_mag > 0.0 {
                    (total - l_complex) / l_mag
                } else {
                    evals.iter().map(|e| e.alpha).sum::<f64>() / n
                };
                (
                    LossReport { l_complex, l_mag, alpha, total, selected_draw: None },
                    (0..evals.len()).collect(),
                )
            }
        };

        if !with_gradient {
            return Ok((report, None));
        }
        let parts: Vec<Vec<Complex64>> = chosen
            .par_iter()
            .map(|&i| self.draw_gradient(y, shat, &evals[i]))
            .collect::<Result<_>>()?;
        let weight = 1.0 / parts.len() as f64;
        let mut grad = vec![Complex64::default(); shat.data().len()];
        for part in &parts {
            for (g, p) in grad.iter_mut().zip(part) {
                *g += p * weight;
            }
        }
        Ok((report, Some(shat.with_data(grad))))
    }
}

/// One-shot form of [`RmLoss::evaluate`].
pub fn rm_loss(
    y: &Spectrogram,
    shat: &Spectrogram,
    sampler: &dyn RirSampler,
    cfg: &LossConfig,
    seed: u64,
    with_gradient: bool,
) -> Result<(LossReport, Option<Spectrogram>)> {
    let builder = Arc::new(KernelBuilder::new(y.shared_config().clone()));
    RmLoss::new(builder, *cfg)?.evaluate(y, shat, sampler, seed, 1.0, with_gradient)
}
