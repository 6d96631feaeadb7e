//! Synthetic test material: speech-shaped noise and decaying noise.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::Result;
use crate::rir::{sample_rir, AcousticParams, Rir};
use crate::seed::{self, derive_seed, domain};
use crate::signal::{reverberate, Signal};

/// White noise through a one-pole low-pass at 500 Hz, gated by syllable-like
/// bursts (80-300 ms on, 40-250 ms off, 5 ms raised-cosine ramps), scaled to
/// an RMS of 0.1.
pub fn speech_shaped_noise(len: usize, sample_rate: u32, seed: u64) -> Signal {
    let fs = sample_rate as f64;
    let mut rng = seed::rng(derive_seed(seed, domain::SYNTH, 0));
    let pole = (-2.0 * std::f64::consts::PI * 500.0 / fs).exp();
    let mut state = 0.0;
    let mut samples: Vec<f64> = (0..len)
        .map(|_| {
            let w: f64 = StandardNormal.sample(&mut rng);
            state = w + pole * state;
            state
        })
        .collect();

    let ramp = ((0.005 * fs) as usize).max(1);
    let mut gate = vec![0.0; len];
    let mut pos = (rng.gen_range(0.0..0.1) * fs) as usize;
    while pos < len {
        let on = (rng.gen_range(0.08..0.30) * fs) as usize;
        let off = (rng.gen_range(0.04..0.25) * fs) as usize;
        let end = (pos + on).min(len);
        for (i, g) in gate[pos..end].iter_mut().enumerate() {
            let edge = i.min(on - 1 - i);
            *g = if edge < ramp {
                0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
        }
        pos = end + off;
    }
    for (x, g) in samples.iter_mut().zip(&gate) {
        *x *= g;
    }
    let rms = (samples.iter().map(|x| x * x).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        samples.iter_mut().for_each(|x| *x *= 0.1 / rms);
    }
    Signal::new(samples, sample_rate).expect("finite samples")
}

/// `n(t) e^{-t/τ0}` with white Gaussian `n`.
pub fn decaying_noise(len: usize, tau0: f64, sample_rate: u32, seed: u64) -> Signal {
    let mut rng = seed::rng(derive_seed(seed, domain::SYNTH, 1));
    let samples = (0..len)
        .map(|n| {
            let w: f64 = StandardNormal.sample(&mut rng);
            w * (-(n as f64) / tau0).exp()
        })
        .collect();
    Signal::new(samples, sample_rate).expect("finite samples")
}

/// Dry speech-shaped noise, a Polack RIR, and their convolution truncated
/// to the dry length.
#[derive(Debug, Clone)]
pub struct ReverberantExample {
    pub params: AcousticParams,
    pub dry: Signal,
    pub rir: Rir,
    pub wet: Signal,
}

pub fn reverberant_example(params: &AcousticParams, len: usize, seed: u64) -> Result<ReverberantExample> {
    let dry = speech_shaped_noise(len, params.sample_rate, derive_seed(seed, domain::DATASET, 0));
    let rir = sample_rir(params, params.default_rir_len(), derive_seed(seed, domain::DATASET, 1))?;
    let wet = reverberate(&dry, &rir)?.resized(len);
    Ok(ReverberantExample { params: *params, dry, rir, wet })
}

/// `n` examples with RT60 and DRR drawn uniformly from the given ranges.
/// Example `i` depends only on `(seed, i)`.
pub fn random_reverberant_set(
    n: usize,
    len: usize,
    rt60: Range<f64>,
    drr_db: Range<f64>,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<ReverberantExample>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let room_seed = derive_seed(seed, domain::DATASET, i);
            let mut rng = seed::rng(derive_seed(room_seed, domain::DATASET, 2));
            let params =
                AcousticParams::new(rng.gen_range(rt60.clone()), rng.gen_range(drr_db.clone()), sample_rate)?;
            reverberant_example(&params, len, room_seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speech_shaped_noise_has_gaps_and_unit_level() {
        let x = speech_shaped_noise(32_000, 16_000, 4);
        let rms = (x.energy() / x.len() as f64).sqrt();
        assert!((rms - 0.1).abs() < 1e-9);
        let silent = x.samples().iter().filter(|v| **v == 0.0).count();
        assert!(silent > 1000, "expected gaps, got {silent} silent samples");
        assert_eq!(x, speech_shaped_noise(32_000, 16_000, 4));
    }

    #[test]
    fn decaying_noise_decays() {
        let x = decaying_noise(8000, 500.0, 16_000, 1);
        let head: f64 = x.samples()[..1000].iter().map(|v| v * v).sum();
        let tail: f64 = x.samples()[7000..].iter().map(|v| v * v).sum();
        assert!(tail < head * 1e-4);
    }

    #[test]
    fn random_set_is_indexed_by_seed() {
        let a = random_reverberant_set(3, 4000, 0.2..0.4, -3.0..3.0, 16_000, 5).unwrap();
        let b = random_reverberant_set(2, 4000, 0.2..0.4, -3.0..3.0, 16_000, 5).unwrap();
        assert_eq!(a[1].wet, b[1].wet);
        assert!(a.iter().all(|e| (0.2..0.4).contains(&e.params.rt60)));
        assert_ne!(a[0].params, a[1].params);
    }
}
