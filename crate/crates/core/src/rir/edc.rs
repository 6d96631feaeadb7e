use super::{power_to_db, Rir};
use crate::error::{Error, Result};

const LN10: f64 = std::f64::consts::LN_10;

/// Upper and lower edges of the regression window, in dB below the EDC
/// level just after the direct path.
pub const EDC_UPPER_DB: f64 = -5.0;
pub const EDC_LOWER_DB: f64 = -25.0;

/// Schroeder backward integral `edc(t) = Σ_{u ≥ t} h(u)²`.
pub fn edc(h: &Rir) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    let mut acc = 0.0;
    for (slot, &x) in out.iter_mut().zip(h.taps()).rev() {
        acc += x * x;
        *slot = acc;
    }
    out
}

/// Non-blind estimate of the Polack parameters of a measured RIR.
#[derive(Debug, Clone, PartialEq)]
pub struct EdcAnalysis {
    pub edc: Vec<f64>,
    /// First sample at or below -5 dB.
    pub t5: usize,
    /// First sample at or below -25 dB.
    pub t25: usize,
    /// Energy between `t5` and `t25`.
    pub e_5_25: f64,
    pub rt60_est: f64,
    pub sigma_est: f64,
    pub drr_est_db: f64,
}

/// Fits the decay on the -5..-25 dB span of the EDC, referenced to the level
/// at `n_d + 1`, then recovers σ from the energy in that span:
///
/// `E = σ² (τ/2) (e^{-2 T5/τ} - e^{-2 T25/τ})`
///
/// and the DRR from the direct energy `Σ_{n ≤ n_d} h²` over the modelled tail
/// energy `σ² (τ/2) e^{-2 n_d/τ}`. Late-tail noise below -25 dB does not
/// enter either estimate.
pub fn analyze_rir(h: &Rir, n_d: usize) -> Result<EdcAnalysis> {
    if h.len() <= n_d + 1 {
        return Err(Error::InsufficientDynamicRange(EDC_LOWER_DB));
    }
    let fs = h.sample_rate() as f64;
    let curve = edc(h);
    let start = n_d + 1;
    let reference = curve[start];
    if reference <= 0.0 {
        return Err(Error::InsufficientDynamicRange(EDC_LOWER_DB));
    }
    let level = |t: usize| power_to_db(curve[t] / reference);
    let t5 = (start..curve.len())
        .find(|&t| level(t) <= EDC_UPPER_DB)
        .ok_or(Error::InsufficientDynamicRange(EDC_UPPER_DB))?;
    let t25 = (t5..curve.len())
        .find(|&t| level(t) <= EDC_LOWER_DB)
        .ok_or(Error::InsufficientDynamicRange(EDC_LOWER_DB))?;
    if t25 <= t5 + 1 || curve[t25] <= 0.0 {
        return Err(Error::InsufficientDynamicRange(EDC_LOWER_DB));
    }

    let slope_db_per_sample = regression_slope((t5..=t25).map(|t| (t as f64, level(t))));
    if slope_db_per_sample >= 0.0 {
        return Err(Error::InsufficientDynamicRange(EDC_LOWER_DB));
    }
    let rt60_est = -60.0 / slope_db_per_sample / fs;
    let tau = rt60_est * fs / (3.0 * LN10);

    let e_5_25 = curve[t5] - curve[t25];
    let window = (-2.0 * t5 as f64 / tau).exp() - (-2.0 * t25 as f64 / tau).exp();
    let sigma_est = (e_5_25 / (tau / 2.0 * window)).sqrt();

    let direct: f64 = h.taps()[..=n_d].iter().map(|x| x * x).sum();
    let tail = super::polack_tail_energy(sigma_est, tau, n_d as f64);
    let drr_est_db = power_to_db(direct / tail);

    Ok(EdcAnalysis { edc: curve, t5, t25, e_5_25, rt60_est, sigma_est, drr_est_db })
}

/// Least-squares slope of `y` against `x`.
fn regression_slope(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let pts: Vec<(f64, f64)> = points.collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(sxy, sxx), &(x, y)| {
        (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
    });
    sxy / sxx
}
