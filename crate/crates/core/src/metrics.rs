//! Evaluation metrics.

use crate::blind::BlindEstimate;
use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::rir::{AcousticParams, EdcAnalysis};
use crate::signal::Signal;

/// Reported SI-SDR ceiling; zero-residual estimates are flagged as perfect.
pub const SISDR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sisdr {
    /// Capped at [`SISDR_CAP_DB`].
    pub db: f64,
    pub perfect: bool,
}

/// Scale-invariant SDR: `10 log10(‖a·ref‖² / ‖est - a·ref‖²)` with
/// `a = ⟨est, ref⟩ / ‖ref‖²`.
pub fn sisdr(est: &[f64], reference: &[f64]) -> Result<Sisdr> {
    if est.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|x| x * x).sum();
    if ref_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let dot: f64 = est.iter().zip(reference).map(|(e, r)| e * r).sum();
    let a = dot / ref_energy;
    let target = a * a * ref_energy;
    let residual: f64 = est.iter().zip(reference).map(|(e, r)| (e - a * r).powi(2)).sum();
    if residual == 0.0 {
        return Ok(Sisdr { db: SISDR_CAP_DB, perfect: true });
    }
    let db = 10.0 * (target / residual).log10();
    if db >= SISDR_CAP_DB {
        return Ok(Sisdr { db: SISDR_CAP_DB, perfect: true });
    }
    Ok(Sisdr { db, perfect: false })
}

pub fn sisdr_signals(est: &Signal, reference: &Signal) -> Result<Sisdr> {
    sisdr(est.samples(), reference.samples())
}

/// Anything that carries an RT60 / DRR estimate.
pub trait ParamEstimate {
    fn rt60(&self) -> f64;
    fn drr_db(&self) -> f64;
}

impl ParamEstimate for EdcAnalysis {
    fn rt60(&self) -> f64 {
        self.rt60_est
    }
    fn drr_db(&self) -> f64 {
        self.drr_est_db
    }
}

impl ParamEstimate for BlindEstimate {
    fn rt60(&self) -> f64 {
        self.rt60
    }
    fn drr_db(&self) -> f64 {
        self.drr_db
    }
}

impl ParamEstimate for AcousticParams {
    fn rt60(&self) -> f64 {
        self.rt60
    }
    fn drr_db(&self) -> f64 {
        self.drr_db
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamErrors {
    pub rt60_abs_err_s: f64,
    pub drr_abs_err_db: f64,
}

pub fn param_errors(est: &impl ParamEstimate, truth: &AcousticParams) -> ParamErrors {
    ParamErrors {
        rt60_abs_err_s: (est.rt60() - truth.rt60).abs(),
        drr_abs_err_db: (est.drr_db() - truth.drr_db).abs(),
    }
}

/// Mean of per-sample errors.
pub fn mean_param_errors(errors: &[ParamErrors]) -> ParamErrors {
    if errors.is_empty() {
        return ParamErrors::default();
    }
    let n = errors.len() as f64;
    ParamErrors {
        rt60_abs_err_s: errors.iter().map(|e| e.rt60_abs_err_s).sum::<f64>() / n,
        drr_abs_err_db: errors.iter().map(|e| e.drr_abs_err_db).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub sisdr: Sisdr,
    pub params: Option<ParamErrors>,
}

impl MetricReport {
    pub fn to_kv(&self) -> KvRecord {
        let mut rec = KvRecord::new()
            .with("sisdr_db", format!("{:.6}", self.sisdr.db))
            .with("perfect", self.sisdr.perfect);
        if let Some(p) = self.params {
            rec.set("rt60_abs_err_s", format!("{:.6}", p.rt60_abs_err_s));
            rec.set("drr_abs_err_db", format!("{:.6}", p.drr_abs_err_db));
        }
        rec
    }
}
