//! Training-less dereverberation: per-sample gradient descent on the
//! reverberation-matching objective over the dry spectrogram.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use crate::blind::{analyze_blind, BlindConfig, Rt60Calibration};
use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::loss::{LossConfig, LossReport, RmLoss};
use crate::rir::{AcousticParams, DiracSampler, PolackSampler, Rir, RirSampler};
use crate::seed::{derive_seed, domain};
use crate::signal::{istft, stft, Signal, Spectrogram, StftConfig};
use crate::tfconv::KernelBuilder;
use crate::Complex64;

/// Losses at or below this fraction of `‖Y‖²` count as an exact fit.
const EXACT_FIT: f64 = 1e-20;
/// Abort once the loss exceeds this multiple of its initial value.
const DIVERGENCE_FACTOR: f64 = 10.0;
/// Window (in iterations) for the relative-decrease stopping rule.
const STALL_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    Fixed,
    #[default]
    Adam,
}

impl FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" | "gd" => Ok(Self::Fixed),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Parse(format!("unknown step rule `{other}`"))),
        }
    }
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fixed => "fixed",
            Self::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    pub step_size: f64,
    /// Stop once the loss decreased by less than this fraction over the
    /// last ten iterations. Zero disables the rule.
    pub stop_rel_tol: f64,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            step_rule: StepRule::Adam,
            step_size: 5e-2,
            stop_rel_tol: 1e-4,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParam("max_iters must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParam("step size must be positive".into()));
        }
        if !(self.stop_rel_tol >= 0.0) {
            return Err(Error::InvalidParam("stop_rel_tol must be nonnegative".into()));
        }
        self.loss.validate()
    }

    pub fn to_kv(&self) -> KvRecord {
        KvRecord::new()
            .with("max_iters", self.max_iters)
            .with("step_rule", self.step_rule)
            .with("step_size", self.step_size)
            .with("stop_rel_tol", self.stop_rel_tol)
            .with("variant", self.loss.variant)
            .with("draws", self.loss.num_draws)
            .with("band_radius", self.loss.band)
            .with("seed", self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub report: LossReport,
}

/// Per-iteration losses of one solve, measured on the unit-RMS observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    pub entries: Vec<TraceEntry>,
    pub best_iter: usize,
}

impl SolveTrace {
    pub fn iterations_used(&self) -> usize {
        self.entries.len()
    }

    pub fn initial_loss(&self) -> f64 {
        self.entries.first().map_or(f64::NAN, |e| e.report.total)
    }

    pub fn best_loss(&self) -> f64 {
        self.entries.get(self.best_iter).map_or(f64::NAN, |e| e.report.total)
    }

    pub fn best_report(&self) -> Option<&LossReport> {
        self.entries.get(self.best_iter).map(|e| &e.report)
    }

    pub fn totals(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.report.total).collect()
    }

    /// One `iter=… l_complex=… l_mag=… alpha=… total=…` line per iteration.
    pub fn write_records(&self, mut w: impl Write) -> Result<()> {
        for e in &self.entries {
            let rec = KvRecord::new()
                .with("iter", e.iter)
                .with("l_complex", format!("{:e}", e.report.l_complex))
                .with("l_mag", format!("{:e}", e.report.l_mag))
                .with("alpha", format!("{:e}", e.report.alpha))
                .with("total", format!("{:e}", e.report.total));
            writeln!(w, "{}", rec.to_line())?;
        }
        Ok(())
    }
}

/// Where the solver draws its RIRs from.
#[derive(Debug, Clone)]
pub enum RirModel {
    Params(AcousticParams),
    Dirac(Rir),
}

impl RirModel {
    fn sampler(&self) -> Result<Box<dyn RirSampler>> {
        Ok(match self {
            Self::Params(p) => Box::new(PolackSampler::new(*p)?),
            Self::Dirac(h) => Box::new(DiracSampler::new(h.clone())),
        })
    }

    fn sample_rate(&self) -> u32 {
        match self {
            Self::Params(p) => p.sample_rate,
            Self::Dirac(h) => h.sample_rate(),
        }
    }
}

struct Adam {
    m: Vec<Complex64>,
    v: Vec<Complex64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![Complex64::default(); n], v: vec![Complex64::default(); n], t: 0 }
    }

    /// Real and imaginary parts are independent coordinates.
    fn step(&mut self, x: &mut [Complex64], g: &[Complex64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((x, g), m), v) in x.iter_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
            *m = *m * Self::B1 + g * (1.0 - Self::B1);
            *v = *v * Self::B2 + Complex64::new(g.re * g.re, g.im * g.im) * (1.0 - Self::B2);
            let mh = *m / c1;
            let vh = *v / c2;
            x.re -= lr * mh.re / (vh.re.sqrt() + Self::EPS);
            x.im -= lr * mh.im / (vh.im.sqrt() + Self::EPS);
        }
    }
}

/// Shared solver core. `frozen` marks coefficients pinned to zero.
pub(crate) fn solve(
    y: &Spectrogram,
    sampler: &dyn RirSampler,
    builder: &Arc<KernelBuilder>,
    cfg: &SolverConfig,
    init: Spectrogram,
    frozen: Option<&[bool]>,
) -> Result<(Spectrogram, SolveTrace)> {
    cfg.validate()?;
    let energy = y.norm_sqr();
    if energy == 0.0 {
        return Err(Error::EmptyInput("observation is silent"));
    }
    if !init.same_shape(y) || !init.same_config(y) {
        return Err(Error::ShapeMismatch("initial estimate must match the observation".into()));
    }
    // unit RMS per coefficient
    let gain = ((y.data().len() as f64) / energy).sqrt();
    let yn = y.scaled(gain);
    let mut shat = init.scaled(gain);
    let loss = RmLoss::new(builder.clone(), cfg.loss)?;

    let mut trace = SolveTrace::default();
    let mut best = shat.clone();
    let mut adam = Adam::new(shat.data().len());
    for iter in 0..cfg.max_iters {
        let seed = derive_seed(cfg.seed, domain::SOLVER_ITER, iter as u64);
        let (report, grad) = loss.evaluate(&yn, &shat, sampler, seed, 1.0, true)?;
        let total = report.total;
        if !total.is_finite() {
            return Err(Error::Divergence { iter, loss: total, initial: trace.initial_loss() });
        }
        if let Some(first) = trace.entries.first() {
            let initial = first.report.total;
            if total > DIVERGENCE_FACTOR * initial {
                return Err(Error::Divergence { iter, loss: total, initial });
            }
        }
        if trace.entries.is_empty() || total < trace.best_loss() {
            trace.best_iter = iter;
            best = shat.clone();
        }
        trace.entries.push(TraceEntry { iter, report });
        if total <= EXACT_FIT * yn.norm_sqr() {
            break;
        }
        if cfg.stop_rel_tol > 0.0 && iter >= STALL_WINDOW {
            let then = trace.entries[iter - STALL_WINDOW].report.total;
            if (then - total) / then < cfg.stop_rel_tol {
                break;
            }
        }
        if iter + 1 == cfg.max_iters {
            break;
        }

        let mut grad = grad.expect("gradient requested").into_data();
        if let Some(mask) = frozen {
            grad.iter_mut().zip(mask).filter(|(_, m)| **m).for_each(|(g, _)| *g = Complex64::default());
        }
        let x = shat.data_mut();
        match cfg.step_rule {
            StepRule::Fixed => x.iter_mut().zip(&grad).for_each(|(x, g)| *x -= g * cfg.step_size),
            StepRule::Adam => adam.step(x, &grad, cfg.step_size),
        }
    }
    Ok((best.scaled(1.0 / gain), trace))
}

/// Minimizes the reverberation-matching loss over `Ŝ`, starting from
/// `Ŝ = Y`, and returns the lowest-loss iterate.
///
/// A probabilistic model redraws its RIR at every iteration from
/// `derive_seed(cfg.seed, SOLVER_ITER, iter)`.
pub fn trainingless_dereverb(
    y: &Spectrogram,
    model: &RirModel,
    cfg: &SolverConfig,
) -> Result<(Spectrogram, SolveTrace)> {
    if model.sample_rate() != y.sample_rate() {
        return Err(Error::InvalidParam(format!(
            "model rate {} Hz differs from observation rate {} Hz",
            model.sample_rate(),
            y.sample_rate()
        )));
    }
    let sampler = model.sampler()?;
    let builder = Arc::new(KernelBuilder::new(y.shared_config().clone()));
    solve(y, sampler.as_ref(), &builder, cfg, y.clone(), None)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub blind: BlindConfig,
    pub solver: SolverConfig,
}

/// What the pipeline did with one input.
#[derive(Debug, Clone, PartialEq)]
pub enum PipelineOutcome {
    Dereverberated { estimate: crate::blind::BlindEstimate, trace: SolveTrace },
    /// The analyzer found no usable reverberation; the input is returned.
    PassThrough { reason: String },
}

/// STFT, blind analysis, training-less solve, inverse STFT. Output length
/// equals input length. Inputs without decay evidence, or whose RT60 maps
/// below the calibration floor, pass through unchanged.
pub fn dereverb_pipeline(
    y: &Signal,
    cal: &Rt60Calibration,
    cfg: &PipelineConfig,
) -> Result<(Signal, PipelineOutcome)> {
    let stft_cfg = Arc::new(StftConfig::default_speech());
    let spec = stft(y, &stft_cfg)?;
    let estimate = match analyze_blind(&spec, cal, &cfg.blind) {
        Ok(e) if !e.below_floor => e,
        Ok(e) => {
            return Ok((
                y.clone(),
                PipelineOutcome::PassThrough { reason: format!("rt60 below floor ({:.3} s)", e.rt60) },
            ))
        }
        Err(Error::InsufficientDecay) => {
            return Ok((y.clone(), PipelineOutcome::PassThrough { reason: Error::InsufficientDecay.to_string() }))
        }
        Err(e) => return Err(e),
    };
    let params = AcousticParams::new(estimate.rt60, estimate.drr_db, y.sample_rate())?;
    let (shat, trace) = trainingless_dereverb(&spec, &RirModel::Params(params), &cfg.solver)?;
    let out = istft(&shat)?.resized(y.len());
    Ok((out, PipelineOutcome::Dereverberated { estimate, trace }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rir::sample_rir;
    use crate::signal::reverberate;
    use crate::synth::speech_shaped_noise;

    fn small_problem() -> (Spectrogram, Rir, Spectrogram) {
        let cfg = Arc::new(StftConfig::hann(64, 32).unwrap());
        let dry = speech_shaped_noise(2048, 16_000, 3);
        let params = AcousticParams::new(0.05, 0.0, 16_000).unwrap().with_direct_delay(4);
        let h = sample_rir(&params, params.default_rir_len(), 9).unwrap();
        let wet = reverberate(&dry, &h).unwrap();
        (stft(&wet, &cfg).unwrap(), h, stft(&dry, &cfg).unwrap())
    }

    #[test]
    fn identity_filter_stops_immediately() {
        let (y, _, _) = small_problem();
        let cfg = SolverConfig {
            loss: LossConfig::default().with_band(crate::tfconv::BandRadius::Full),
            ..SolverConfig::default()
        };
        let (shat, trace) = trainingless_dereverb(&y, &RirModel::Dirac(Rir::dirac(16_000)), &cfg).unwrap();
        assert_eq!(trace.iterations_used(), 1);
        assert!(trace.initial_loss() < 1e-20);
        let diff: f64 = shat.data().iter().zip(y.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(diff <= 1e-24 * y.norm_sqr());
    }

    #[test]
    fn fixed_step_descends_monotonically_without_magnitude_term() {
        let (y, h, _) = small_problem();
        let cfg = SolverConfig {
            max_iters: 40,
            step_rule: StepRule::Fixed,
            step_size: 5e-2,
            stop_rel_tol: 0.0,
            loss: LossConfig { mag_weight: 0.0, ..LossConfig::default().with_band(crate::tfconv::BandRadius::Full) },
            ..SolverConfig::default()
        };
        let (_, trace) = trainingless_dereverb(&y, &RirModel::Dirac(h), &cfg).unwrap();
        let totals = trace.totals();
        assert_eq!(totals.len(), 40);
        assert!(totals.windows(2).all(|w| w[1] <= w[0]), "{totals:?}");
        assert!(totals[39] < totals[0]);
    }

    #[test]
    fn probabilistic_solve_is_deterministic_and_non_worsening() {
        let (y, _, _) = small_problem();
        let params = AcousticParams::new(0.05, 0.0, 16_000).unwrap().with_direct_delay(4);
        let cfg = SolverConfig { max_iters: 15, seed: 5, ..SolverConfig::default() };
        let (a, ta) = trainingless_dereverb(&y, &RirModel::Params(params), &cfg).unwrap();
        let (b, tb) = trainingless_dereverb(&y, &RirModel::Params(params), &cfg).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(ta, tb);
        assert!(ta.best_loss() <= ta.initial_loss());
        assert_eq!(ta.iterations_used(), ta.entries.len());
    }

    #[test]
    fn trace_records() {
        let (y, h, _) = small_problem();
        let cfg = SolverConfig { max_iters: 3, ..SolverConfig::default() };
        let (_, trace) = trainingless_dereverb(&y, &RirModel::Dirac(h), &cfg).unwrap();
        let mut buf = Vec::new();
        trace.write_records(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("iter=0 l_complex="));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { max_iters: 0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { step_size: 0.0, ..SolverConfig::default() }.validate().is_err());
        assert_eq!("adam".parse::<StepRule>().unwrap(), StepRule::Adam);
    }
}
