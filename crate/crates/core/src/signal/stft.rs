use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::Signal;
use crate::error::{Error, Result};

const PR_TOLERANCE: f64 = 1e-10;

/// Window pair and framing of a full-band STFT.
///
/// Frames are left-aligned on the signal after prepending `lead_pad()`
/// zeros, where `lead_pad` is the largest multiple of the hop shorter than
/// the window. Every sample of the signal is then covered by the same number
/// of frames, which is what perfect reconstruction needs at the head. The
/// convolution kernel algebra is shift invariant, so the padding cancels out
/// of it. The tail is zero-padded up to the last frame.
///
/// The number of bins equals the window length (full band).
#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    hop: usize,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
}

impl StftConfig {
    /// Builds a config from an explicit window pair, checking perfect
    /// reconstruction: `Σ_k g_s(n + kL) g_a(n + kL) = 1` for every `n`.
    pub fn new(analysis: Vec<f64>, synthesis: Vec<f64>, hop: usize) -> Result<Self> {
        let n = analysis.len();
        if n == 0 {
            return Err(Error::InvalidConfig("empty window".into()));
        }
        if synthesis.len() != n {
            return Err(Error::InvalidConfig(format!(
                "analysis window has {} taps, synthesis window {}",
                n,
                synthesis.len()
            )));
        }
        if hop == 0 || hop > n {
            return Err(Error::InvalidConfig(format!("hop {hop} must be in 1..={n}")));
        }
        if analysis.iter().chain(&synthesis).any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("non-finite window coefficient".into()));
        }
        let cfg = Self { hop, analysis, synthesis };
        let worst = (0..hop)
            .map(|r| (cfg.overlap_sum(r, |a, s| a * s) - 1.0).abs())
            .fold(0.0, f64::max);
        if worst > PR_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "window pair is not perfect-reconstruction (max deviation {worst:.3e})"
            )));
        }
        Ok(cfg)
    }

    /// Periodic Hann analysis window with its canonical dual as synthesis
    /// window, `g_s = g_a / Σ_k g_a²(· + kL)`.
    pub fn hann(window_len: usize, hop: usize) -> Result<Self> {
        if window_len < 2 {
            return Err(Error::InvalidConfig("window length must be at least 2".into()));
        }
        let analysis = hann_periodic(window_len);
        Self::with_dual_window(analysis, hop)
    }

    /// Uses the canonical dual of `analysis` as synthesis window.
    pub fn with_dual_window(analysis: Vec<f64>, hop: usize) -> Result<Self> {
        let n = analysis.len();
        if hop == 0 || hop > n {
            return Err(Error::InvalidConfig(format!("hop {hop} must be in 1..={n}")));
        }
        let probe = Self { hop, analysis: analysis.clone(), synthesis: vec![0.0; n] };
        let mut synthesis = vec![0.0; n];
        for (i, s) in synthesis.iter_mut().enumerate() {
            let denom = probe.overlap_sum(i % hop, |a, _| a * a);
            if denom <= f64::EPSILON {
                return Err(Error::InvalidConfig(format!(
                    "analysis window has no overlap energy at offset {}",
                    i % hop
                )));
            }
            *s = analysis[i] / denom;
        }
        Self::new(analysis, synthesis, hop)
    }

    /// N = 512 Hann, L = 256.
    pub fn default_speech() -> Self {
        Self::hann(512, 256).expect("default STFT configuration is valid")
    }

    fn overlap_sum(&self, offset: usize, term: impl Fn(f64, f64) -> f64) -> f64 {
        (offset..self.window_len())
            .step_by(self.hop)
            .map(|i| term(self.analysis[i], self.synthesis[i]))
            .sum()
    }

    pub fn window_len(&self) -> usize {
        self.analysis.len()
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Number of frequency bins F (= window length).
    pub fn num_bins(&self) -> usize {
        self.analysis.len()
    }

    pub fn analysis(&self) -> &[f64] {
        &self.analysis
    }

    pub fn synthesis(&self) -> &[f64] {
        &self.synthesis
    }

    /// Zeros prepended before framing.
    pub fn lead_pad(&self) -> usize {
        (self.window_len() - 1) / self.hop * self.hop
    }

    /// Frames produced for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        (len + self.lead_pad()).div_ceil(self.hop)
    }

    /// Bounds `(lo, hi)` with `lo·‖x‖² ≤ ‖stft(x)‖²_F ≤ hi·‖x‖²`.
    ///
    /// Over the full band each frame holds `F·Σ_n |x g_a|²`, so the energy
    /// ratio is `F` times the overlap sum of `g_a²`, whose extremes these are.
    pub fn energy_bounds(&self) -> (f64, f64) {
        let f = self.num_bins() as f64;
        (0..self.hop)
            .map(|r| self.overlap_sum(r, |a, _| a * a))
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(f * v), hi.max(f * v)))
    }
}

fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Complex full-band STFT grid, stored frame-major (`data[t * F + f]`).
#[derive(Debug, Clone)]
pub struct Spectrogram {
    data: Vec<Complex64>,
    num_frames: usize,
    config: Arc<StftConfig>,
    sample_rate: u32,
    signal_len: usize,
}

impl Spectrogram {
    pub fn new(
        data: Vec<Complex64>,
        num_frames: usize,
        config: Arc<StftConfig>,
        sample_rate: u32,
    ) -> Result<Self> {
        let f = config.num_bins();
        if data.len() != f * num_frames {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} bins x {} frames",
                data.len(),
                f,
                num_frames
            )));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidParam("sample rate must be positive".into()));
        }
        let signal_len = num_frames * config.hop();
        Ok(Self { data, num_frames, config, sample_rate, signal_len })
    }

    pub fn zeros(config: Arc<StftConfig>, num_frames: usize, sample_rate: u32) -> Self {
        let f = config.num_bins();
        Self {
            data: vec![Complex64::default(); f * num_frames],
            num_frames,
            signal_len: num_frames * config.hop(),
            config,
            sample_rate,
        }
    }

    /// Same geometry, new values.
    pub fn with_data(&self, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), self.data.len());
        Self { data, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> Self {
        Self {
            data: Vec::new(),
            num_frames: self.num_frames,
            config: self.config.clone(),
            sample_rate: self.sample_rate,
            signal_len: self.signal_len,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.config.num_bins()
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn shared_config(&self) -> &Arc<StftConfig> {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Length of the time-domain signal `istft` returns.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn set_signal_len(&mut self, len: usize) {
        self.signal_len = len;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[frame * self.num_bins() + bin]
    }

    pub fn set(&mut self, bin: usize, frame: usize, value: Complex64) {
        let f = self.num_bins();
        self.data[frame * f + bin] = value;
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let f = self.num_bins();
        &self.data[t * f..(t + 1) * f]
    }

    pub fn same_config(&self, other: &Spectrogram) -> bool {
        Arc::ptr_eq(&self.config, &other.config) || *self.config == *other.config
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.num_frames == other.num_frames && self.num_bins() == other.num_bins()
    }

    /// Truncates or zero-extends along time.
    pub fn with_frames(&self, num_frames: usize) -> Self {
        let f = self.num_bins();
        let mut data = vec![Complex64::default(); f * num_frames];
        let keep = num_frames.min(self.num_frames) * f;
        data[..keep].copy_from_slice(&self.data[..keep]);
        Self { data, num_frames, signal_len: num_frames * self.config.hop(), ..self.clone_meta() }
    }

    pub fn scaled(&self, gain: f64) -> Self {
        self.with_data(self.data.iter().map(|c| c * gain).collect())
    }

    /// Squared Frobenius norm.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `⟨self, other⟩ = Σ conj(self)·other`.
    pub fn inner(&self, other: &Spectrogram) -> Complex64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// Largest deviation from `X[F-f] = conj(X[f])`.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let f = self.num_bins();
        let mut worst = 0.0_f64;
        for t in 0..self.num_frames {
            let fr = self.frame(t);
            for k in 0..f {
                let mirror = (f - k) % f;
                worst = worst.max((fr[k] - fr[mirror].conj()).norm());
            }
        }
        worst
    }
}

/// Full-band STFT: `X(f, t) = Σ_n x_pad(n + tL) g_a(n) e^{-j2πfn/F}`.
pub fn stft(x: &Signal, cfg: &Arc<StftConfig>) -> Result<Spectrogram> {
    if x.is_empty() {
        return Err(Error::EmptyInput("stft of an empty signal"));
    }
    let n = cfg.window_len();
    let hop = cfg.hop();
    let pad = cfg.lead_pad();
    let frames = cfg.num_frames(x.len());
    let samples = x.samples();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut data = vec![Complex64::default(); frames * n];
    for (t, frame) in data.chunks_exact_mut(n).enumerate() {
        let start = (t * hop) as isize - pad as isize;
        for (i, c) in frame.iter_mut().enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < samples.len() {
                *c = Complex64::new(samples[idx as usize] * cfg.analysis[i], 0.0);
            }
        }
        fft.process(frame);
    }
    let mut spec = Spectrogram::new(data, frames, cfg.clone(), x.sample_rate())?;
    spec.set_signal_len(x.len());
    Ok(spec)
}

/// Weighted overlap-add inverse with the synthesis window.
///
/// Returns `spec.signal_len()` samples. Non-Hermitian input is projected onto
/// real signals by keeping the real part of each inverse frame.
pub fn istft(spec: &Spectrogram) -> Result<Signal> {
    let cfg = spec.config();
    let n = cfg.window_len();
    let hop = cfg.hop();
    let pad = cfg.lead_pad();
    let frames = spec.num_frames();
    let padded_len = if frames == 0 { 0 } else { (frames - 1) * hop + n };
    let mut out = vec![0.0; padded_len];
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut buf = vec![Complex64::default(); n];
    let scale = 1.0 / n as f64;
    for t in 0..frames {
        buf.copy_from_slice(spec.frame(t));
        ifft.process(&mut buf);
        let start = t * hop;
        for (i, c) in buf.iter().enumerate() {
            out[start + i] += c.re * scale * cfg.synthesis[i];
        }
    }
    let len = spec.signal_len();
    let mut samples: Vec<f64> = out.into_iter().skip(pad).take(len).collect();
    samples.resize(len, 0.0);
    Signal::new(samples, spec.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn default_config_is_hann_512_256() {
        let cfg = StftConfig::default_speech();
        assert_eq!(cfg.window_len(), 512);
        assert_eq!(cfg.hop(), 256);
        assert_eq!(cfg.num_bins(), 512);
        assert_eq!(cfg.lead_pad(), 256);
        assert!((cfg.analysis()[256] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn frame_count_covers_signal() {
        let cfg = StftConfig::default_speech();
        assert_eq!(cfg.num_frames(1), 2);
        assert_eq!(cfg.num_frames(256), 2);
        assert_eq!(cfg.num_frames(257), 3);
        assert_eq!(cfg.num_frames(16_000), 64);
        let odd = StftConfig::hann(12, 4).unwrap();
        assert_eq!(odd.lead_pad(), 8);
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(StftConfig::hann(512, 0).is_err());
        assert!(StftConfig::hann(512, 513).is_err());
        // Hann with its own copy as synthesis window is not PR at 50% overlap.
        let w = hann_periodic(16);
        assert!(StftConfig::new(w.clone(), w, 8).is_err());
        // Hann at hop = N has zeros that no other frame covers.
        assert!(StftConfig::hann(16, 16).is_err());
    }

    #[test]
    fn zeros_map_to_zeros() {
        let cfg = Arc::new(StftConfig::default_speech());
        let spec = stft(&Signal::zeros(1000, 16_000), &cfg).unwrap();
        assert!(spec.data().iter().all(|c| c.norm() == 0.0));
        let back = istft(&spec).unwrap();
        assert_eq!(back.len(), 1000);
        assert!(back.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn impulse_at_origin_lands_after_the_lead_pad() {
        let cfg = Arc::new(StftConfig::hann(16, 8).unwrap());
        let mut x = vec![0.0; 40];
        x[0] = 1.0;
        let spec = stft(&Signal::new(x, 16_000).unwrap(), &cfg).unwrap();
        // frame 0 sees the impulse at window position lead_pad = 8:
        // X(f, 0) = g_a(8) e^{-j2πf·8/16} = g_a(8)(-1)^f
        let ga = cfg.analysis()[8];
        for f in 0..16 {
            let expect = if f % 2 == 0 { ga } else { -ga };
            assert!((spec.get(f, 0) - Complex64::new(expect, 0.0)).norm() < 1e-12);
        }
        // frame 1 sees it at position 0 where the periodic Hann vanishes
        for f in 0..16 {
            assert!(spec.get(f, 1).norm() < 1e-12);
        }
    }

    #[test]
    fn perfect_reconstruction_one_second() {
        let cfg = Arc::new(StftConfig::default_speech());
        let x = random_signal(16_000, 3);
        let back = istft(&stft(&x, &cfg).unwrap()).unwrap();
        assert_eq!(back.len(), x.len());
        assert!(rel_err(back.samples(), x.samples()) <= 1e-10);
    }

    #[test]
    fn istft_is_linear() {
        let cfg = Arc::new(StftConfig::hann(64, 16).unwrap());
        let spec = stft(&random_signal(500, 9), &cfg).unwrap();
        let a = istft(&spec).unwrap();
        let b = istft(&spec.scaled(2.0)).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn real_input_is_conjugate_symmetric() {
        let cfg = Arc::new(StftConfig::hann(32, 8).unwrap());
        let spec = stft(&random_signal(300, 1), &cfg).unwrap();
        assert!(spec.conjugate_asymmetry() < 1e-12);
    }

    #[test]
    fn empty_signal_is_rejected() {
        let cfg = Arc::new(StftConfig::default_speech());
        assert!(matches!(stft(&Signal::zeros(0, 16_000), &cfg), Err(Error::EmptyInput(_))));
    }
}
