//! Inter-band / inter-frame convolution in the STFT domain.
//!
//! A time-domain filter `h` acts on STFT coefficients as
//!
//! `Y(f, t) = Σ_{f'} Σ_{t'} H(f, f', t') S(f', t - t')`
//!
//! with `H(f, f', t') = Σ_m h(t'L - m) W_{f,f'}(m)` and
//! `W_{f,f'}(m) = (1/F) Σ_n g_s(n + m) g_a(n) e^{j2π(f'(n+m) - fn)/F}`.
//!
//! Writing `q = -m` and `d = f' - f` separates the window cross-term from the
//! filter:
//!
//! `H(f, f+d, t') = (1/F) Σ_q e^{-j2πfq/F} A_d(q) h(t'L + q)`,
//! `A_d(q) = Σ_p g_a(p + q) g_s(p) e^{j2πdp/F}`.
//!
//! `A` depends only on the window pair and is tabulated once per
//! [`KernelBuilder`]; each kernel slice is then one length-F FFT per band
//! offset and frame lag.
//!
//! With overlapping frames (`N > L`) the synthesis window reaches into the
//! next frame, so the operator also has lags `t' < 0`, down to
//! `-(ceil(N/L) - 1)`. These lead taps are kept: without them the identity
//! filter does not map an STFT to itself.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::{Complex32, Complex64};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rir::Rir;
use crate::signal::{Spectrogram, StftConfig};

/// Circular band half-width kept around the diagonal `f' = f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandRadius {
    Full,
    Limited(usize),
}

impl Default for BandRadius {
    fn default() -> Self {
        Self::Limited(8)
    }
}

impl std::str::FromStr for BandRadius {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(Self::Full);
        }
        s.parse()
            .map(Self::Limited)
            .map_err(|_| Error::Parse(format!("band radius must be `full` or an integer, got `{s}`")))
    }
}

impl std::fmt::Display for BandRadius {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Full => f.write_str("full"),
            Self::Limited(b) => write!(f, "{b}"),
        }
    }
}

/// Builds kernels for one STFT configuration.
pub struct KernelBuilder {
    cfg: Arc<StftConfig>,
    /// `A_d(q)` laid out as `[q + N - 1][d]`, `d` in `0..F`.
    cross: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for KernelBuilder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelBuilder").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl KernelBuilder {
    pub fn new(cfg: Arc<StftConfig>) -> Self {
        let n = cfg.window_len();
        let mut planner = FftPlanner::<f64>::new();
        let inverse = planner.plan_fft_inverse(n);
        let fft = planner.plan_fft_forward(n);
        let (ga, gs) = (cfg.analysis(), cfg.synthesis());
        let cross: Vec<Complex64> = (0..2 * n - 1)
            .into_par_iter()
            .flat_map_iter(|qi| {
                let q = qi as isize - (n as isize - 1);
                let mut row: Vec<Complex64> = (0..n)
                    .map(|p| {
                        let idx = p as isize + q;
                        if (0..n as isize).contains(&idx) {
                            Complex64::new(ga[idx as usize] * gs[p], 0.0)
                        } else {
                            Complex64::default()
                        }
                    })
                    .collect();
                // unnormalized inverse DFT: Σ_p v(p) e^{+j2πdp/F}
                inverse.process(&mut row);
                row
            })
            .collect();
        Self { cfg, cross, fft }
    }

    pub fn config(&self) -> &Arc<StftConfig> {
        &self.cfg
    }

    /// Window cross-term `W_{f,f'}(m)` evaluated directly from its
    /// definition. Slow; meant for checks.
    pub fn window_cross_term(&self, f: usize, f_prime: usize, m: isize) -> Complex64 {
        let n = self.cfg.window_len();
        let nf = self.cfg.num_bins() as f64;
        let (ga, gs) = (self.cfg.analysis(), self.cfg.synthesis());
        let mut acc = Complex64::default();
        for i in 0..n as isize {
            let j = i + m;
            if !(0..n as isize).contains(&j) {
                continue;
            }
            let phase = 2.0 * std::f64::consts::PI
                * (f_prime as f64 * j as f64 - f as f64 * i as f64)
                / nf;
            acc += Complex64::from_polar(gs[j as usize] * ga[i as usize], phase);
        }
        acc / nf
    }

    pub fn build(&self, h: &Rir, band: BandRadius) -> ConvKernel {
        let n = self.cfg.window_len();
        let f = self.cfg.num_bins();
        let hop = self.cfg.hop();
        let offsets = band_offsets(f, band);
        let lead = n.div_ceil(hop) - 1;
        let t_h = (h.len() + n - 1).div_ceil(hop);
        let taps = h.taps();
        let d_count = offsets.len();
        let scale = 1.0 / f as f64;

        let slices: Vec<Vec<Complex64>> = (0..lead + t_h)
            .into_par_iter()
            .map(|k| {
                let lag = k as isize - lead as isize;
                let base = lag * hop as isize;
                let q_lo = (-(n as isize - 1)).max(-base);
                let q_hi = (n as isize - 1).min(taps.len() as isize - 1 - base);
                let mut slice = vec![Complex64::default(); f * d_count];
                let mut z = vec![Complex64::default(); f];
                for (j, &d) in offsets.iter().enumerate() {
                    z.iter_mut().for_each(|c| *c = Complex64::default());
                    for q in q_lo..=q_hi {
                        let a = self.cross[(q + n as isize - 1) as usize * f + d];
                        let r = q.rem_euclid(f as isize) as usize;
                        z[r] += a * taps[(base + q) as usize];
                    }
                    self.fft.process(&mut z);
                    for (bin, value) in z.iter().enumerate() {
                        slice[bin * d_count + j] = value * scale;
                    }
                }
                slice
            })
            .collect();

        ConvKernel {
            data: slices.concat(),
            offsets,
            band,
            cfg: self.cfg.clone(),
            t_h,
            lead,
        }
    }
}

fn band_offsets(f: usize, band: BandRadius) -> Vec<usize> {
    match band {
        BandRadius::Limited(b) if 2 * b + 1 < f => {
            (-(b as isize)..=b as isize).map(|d| d.rem_euclid(f as isize) as usize).collect()
        }
        _ => (0..f).collect(),
    }
}

/// Kernel `H` of one RIR, stored as `[lag][f][offset]`.
#[derive(Debug, Clone)]
pub struct ConvKernel {
    data: Vec<Complex64>,
    /// Circular bin offsets `f' - f mod F` kept in the band.
    offsets: Vec<usize>,
    band: BandRadius,
    cfg: Arc<StftConfig>,
    /// Causal lags `0..t_h`.
    t_h: usize,
    /// Anti-causal lags `-lead..0`.
    lead: usize,
}

impl ConvKernel {
    pub fn t_h(&self) -> usize {
        self.t_h
    }

    pub fn lead(&self) -> usize {
        self.lead
    }

    pub fn band(&self) -> BandRadius {
        self.band
    }

    pub fn config(&self) -> &Arc<StftConfig> {
        &self.cfg
    }

    pub fn num_bins(&self) -> usize {
        self.cfg.num_bins()
    }

    /// Output frames for an input of `input_frames`: `T_s + T_h - 1`.
    pub fn output_frames(&self, input_frames: usize) -> usize {
        input_frames + self.t_h - 1
    }

    /// `H(f, f', lag)`; zero outside the band or the lag range.
    pub fn entry(&self, f: usize, f_prime: usize, lag: isize) -> Complex64 {
        let nf = self.num_bins();
        let k = lag + self.lead as isize;
        if k < 0 || k as usize >= self.lead + self.t_h {
            return Complex64::default();
        }
        let d = (f_prime + nf - f) % nf;
        match self.offsets.iter().position(|&o| o == d) {
            Some(j) => self.data[(k as usize * nf + f) * self.offsets.len() + j],
            None => Complex64::default(),
        }
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self { data: self.data.iter().map(|c| c * gain).collect(), ..self.clone() }
    }

    fn check_config(&self, s: &Spectrogram) -> Result<()> {
        if !(Arc::ptr_eq(&self.cfg, s.shared_config()) || *self.cfg == *s.config()) {
            return Err(Error::ConfigMismatch);
        }
        Ok(())
    }

    /// `Y = C(S, h)` with `T_s + T_h - 1` output frames.
    pub fn apply(&self, s: &Spectrogram) -> Result<Spectrogram> {
        self.check_config(s)?;
        let nf = self.num_bins();
        let d_count = self.offsets.len();
        let t_s = s.num_frames();
        let t_out = self.output_frames(t_s);
        let frames: Vec<Vec<Complex64>> = (0..t_out)
            .into_par_iter()
            .map(|t| {
                let mut acc = vec![Complex64::default(); nf];
                for k in 0..self.lead + self.t_h {
                    let src = t as isize + self.lead as isize - k as isize;
                    if src < 0 || src as usize >= t_s {
                        continue;
                    }
                    let input = s.frame(src as usize);
                    let slice = &self.data[k * nf * d_count..(k + 1) * nf * d_count];
                    for (bin, (out, row)) in acc.iter_mut().zip(slice.chunks_exact(d_count)).enumerate() {
                        let mut sum = Complex64::default();
                        for (h, &d) in row.iter().zip(&self.offsets) {
                            let mut idx = bin + d;
                            if idx >= nf {
                                idx -= nf;
                            }
                            sum += h * input[idx];
                        }
                        *out += sum;
                    }
                }
                acc
            })
            .collect();
        let mut out = Spectrogram::new(frames.concat(), t_out, s.shared_config().clone(), s.sample_rate())?;
        out.set_signal_len(t_out * self.cfg.hop());
        Ok(out)
    }

    /// Adjoint of [`ConvKernel::apply`] for `input_frames` input frames:
    /// `⟨apply(S), G⟩ = ⟨S, apply_adjoint(G)⟩`.
    pub fn apply_adjoint(&self, g: &Spectrogram, input_frames: usize) -> Result<Spectrogram> {
        self.check_config(g)?;
        let t_out = self.output_frames(input_frames);
        if g.num_frames() != t_out {
            return Err(Error::ShapeMismatch(format!(
                "adjoint expects {} frames for {} input frames, got {}",
                t_out,
                input_frames,
                g.num_frames()
            )));
        }
        let nf = self.num_bins();
        let d_count = self.offsets.len();
        let frames: Vec<Vec<Complex64>> = (0..input_frames)
            .into_par_iter()
            .map(|ts| {
                let mut acc = vec![Complex64::default(); nf];
                for k in 0..self.lead + self.t_h {
                    let t = ts as isize + k as isize - self.lead as isize;
                    if t < 0 || t as usize >= t_out {
                        continue;
                    }
                    let grad = g.frame(t as usize);
                    let slice = &self.data[k * nf * d_count..(k + 1) * nf * d_count];
                    for (bin, (row, &gv)) in slice.chunks_exact(d_count).zip(grad).enumerate() {
                        for (h, &d) in row.iter().zip(&self.offsets) {
                            let mut idx = bin + d;
                            if idx >= nf {
                                idx -= nf;
                            }
                            acc[idx] += h.conj() * gv;
                        }
                    }
                }
                acc
            })
            .collect();
        Spectrogram::new(frames.concat(), input_frames, g.shared_config().clone(), g.sample_rate())
    }

    /// Binary dump for debugging. Little-endian layout:
    ///
    /// ```text
    /// magic  b"RMKERNL1"
    /// u32    F (bins)
    /// u32    B (band radius, u32::MAX for full)
    /// u32    T_h (causal lags)
    /// u32    lead (anti-causal lags)
    /// u32    D (offsets per row)
    /// i32×D  signed bin offsets f' - f
    /// then (lead + T_h)·F·D complex64 values (f32 re, f32 im),
    /// row-major over [lag][f][offset], lags from -lead upward
    /// ```
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        let nf = self.num_bins();
        w.write_all(KERNEL_MAGIC)?;
        let band = match self.band {
            BandRadius::Full => u32::MAX,
            BandRadius::Limited(b) => b as u32,
        };
        for v in [nf as u32, band, self.t_h as u32, self.lead as u32, self.offsets.len() as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &d in &self.offsets {
            let signed = if d > nf / 2 { d as i32 - nf as i32 } else { d as i32 };
            w.write_all(&signed.to_le_bytes())?;
        }
        for c in &self.data {
            let c = Complex32::new(c.re as f32, c.im as f32);
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        Ok(())
    }
}

const KERNEL_MAGIC: &[u8; 8] = b"RMKERNL1";

/// Header and values of a kernel dump.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDump {
    pub num_bins: usize,
    pub band: BandRadius,
    pub t_h: usize,
    pub lead: usize,
    pub offsets: Vec<i32>,
    pub values: Vec<Complex32>,
}

impl KernelDump {
    pub fn read(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != KERNEL_MAGIC {
            return Err(Error::Parse("not a kernel dump".into()));
        }
        let mut word = [0u8; 4];
        let mut next = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let num_bins = next(&mut r)? as usize;
        let band = match next(&mut r)? {
            u32::MAX => BandRadius::Full,
            b => BandRadius::Limited(b as usize),
        };
        let t_h = next(&mut r)? as usize;
        let lead = next(&mut r)? as usize;
        let d = next(&mut r)? as usize;
        let offsets = (0..d).map(|_| next(&mut r).map(|v| v as i32)).collect::<Result<_>>()?;
        let count = (lead + t_h) * num_bins * d;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let re = f32::from_bits(next(&mut r)?);
            let im = f32::from_bits(next(&mut r)?);
            values.push(Complex32::new(re, im));
        }
        Ok(Self { num_bins, band, t_h, lead, offsets, values })
    }
}

/// `C(S, h)`.
pub fn apply(kernel: &ConvKernel, s: &Spectrogram) -> Result<Spectrogram> {
    kernel.apply(s)
}

/// Adjoint of `C(·, h)`; the input frame count is `T_y - T_h + 1`.
pub fn apply_adjoint(kernel: &ConvKernel, g: &Spectrogram) -> Result<Spectrogram> {
    let input_frames = (g.num_frames() + 1).checked_sub(kernel.t_h()).filter(|&t| t > 0).ok_or_else(|| {
        Error::ShapeMismatch(format!(
            "{} frames cannot be the output of a kernel with {} lags",
            g.num_frames(),
            kernel.t_h()
        ))
    })?;
    kernel.apply_adjoint(g, input_frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, Signal};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// `H(f, f', t')` straight from the double sum over `m` and `n`.
    fn brute_entry(cfg: &StftConfig, h: &[f64], f: usize, fp: usize, lag: isize) -> Complex64 {
        let n = cfg.window_len() as isize;
        let nf = cfg.num_bins() as f64;
        let hop = cfg.hop() as isize;
        let mut acc = Complex64::default();
        for m in -(n - 1)..n {
            let idx = lag * hop - m;
            if idx < 0 || idx as usize >= h.len() {
                continue;
            }
            let mut w = Complex64::default();
            for i in 0..n {
                if !(0..n).contains(&(i + m)) {
                    continue;
                }
                let phase = 2.0 * std::f64::consts::PI
                    * (fp as f64 * (i + m) as f64 - f as f64 * i as f64)
                    / nf;
                w += Complex64::from_polar(
                    cfg.synthesis()[(i + m) as usize] * cfg.analysis()[i as usize],
                    phase,
                );
            }
            acc += w / nf * h[idx as usize];
        }
        acc
    }

    fn direct_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    fn rel_frobenius(a: &Spectrogram, b: &Spectrogram) -> f64 {
        let frames = a.num_frames().max(b.num_frames());
        let (a, b) = (a.with_frames(frames), b.with_frames(frames));
        let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum();
        (diff / b.norm_sqr()).sqrt()
    }

    #[test]
    fn entries_match_double_sum() {
        let cfg = Arc::new(StftConfig::hann(8, 4).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_vec(13, &mut rng);
        let kernel = KernelBuilder::new(cfg.clone()).build(&Rir::new(h.clone(), 16_000).unwrap(), BandRadius::Full);
        assert_eq!(kernel.lead(), 1);
        assert_eq!(kernel.t_h(), (13 + 8 - 1usize).div_ceil(4));
        for lag in -2..kernel.t_h() as isize + 1 {
            for f in 0..8 {
                for fp in 0..8 {
                    let expect = brute_entry(&cfg, &h, f, fp, lag);
                    let got = kernel.entry(f, fp, lag);
                    assert!((expect - got).norm() < 1e-12, "lag {lag} f {f} f' {fp}: {expect} vs {got}");
                }
            }
        }
    }

    #[test]
    fn window_cross_term_matches_builder_table() {
        let cfg = Arc::new(StftConfig::hann(8, 2).unwrap());
        let builder = KernelBuilder::new(cfg.clone());
        // a unit tap at t'L - m isolates W_{f,f'}(m)
        let m = -3isize;
        let lag = 2isize;
        let mut taps = vec![0.0; 8];
        taps[(lag * 2 - m) as usize] = 1.0;
        let k = builder.build(&Rir::new(taps, 16_000).unwrap(), BandRadius::Full);
        for f in 0..8 {
            for fp in 0..8 {
                let w = builder.window_cross_term(f, fp, m);
                assert!((k.entry(f, fp, lag) - w).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_filter_reproduces_the_stft() {
        let cfg = Arc::new(StftConfig::hann(16, 8).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = stft(&Signal::new(random_vec(200, &mut rng), 16_000).unwrap(), &cfg).unwrap();
        let kernel = KernelBuilder::new(cfg.clone()).build(&Rir::dirac(16_000), BandRadius::Full);
        let y = kernel.apply(&s).unwrap();
        assert_eq!(y.num_frames(), s.num_frames() + kernel.t_h() - 1);
        assert!(rel_frobenius(&y, &s) < 1e-12);
    }

    #[test]
    fn matches_time_domain_convolution() {
        let cfg = Arc::new(StftConfig::hann(32, 16).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_vec(700, &mut rng);
        let h = random_vec(90, &mut rng);
        let y = direct_convolution(&s, &h);
        let big_s = stft(&Signal::new(s, 16_000).unwrap(), &cfg).unwrap();
        let big_y = stft(&Signal::new(y, 16_000).unwrap(), &cfg).unwrap();
        let kernel = KernelBuilder::new(cfg.clone()).build(&Rir::new(h, 16_000).unwrap(), BandRadius::Full);
        let est = kernel.apply(&big_s).unwrap();
        assert!(est.num_frames() >= big_y.num_frames());
        assert!(rel_frobenius(&est, &big_y) < 1e-10);
    }

    #[test]
    fn kernel_is_linear_in_the_rir() {
        let cfg = Arc::new(StftConfig::hann(16, 8).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = Rir::new(random_vec(40, &mut rng), 16_000).unwrap();
        let builder = KernelBuilder::new(cfg);
        let k1 = builder.build(&h, BandRadius::Limited(3));
        let k3 = builder.build(&h.scaled(3.0), BandRadius::Limited(3));
        for (a, b) in k1.data.iter().zip(&k3.data) {
            assert!((a * 3.0 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn band_truncation_zeroes_far_entries() {
        let cfg = Arc::new(StftConfig::hann(16, 8).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = Rir::new(random_vec(30, &mut rng), 16_000).unwrap();
        let builder = KernelBuilder::new(cfg);
        let full = builder.build(&h, BandRadius::Full);
        let band = builder.build(&h, BandRadius::Limited(2));
        for f in 0..16 {
            for fp in 0..16 {
                let circ = (fp as isize - f as isize).rem_euclid(16).min((f as isize - fp as isize).rem_euclid(16));
                let got = band.entry(f, fp, 1);
                if circ <= 2 {
                    assert_eq!(got, full.entry(f, fp, 1));
                } else {
                    assert_eq!(got, Complex64::default());
                }
            }
        }
        // a radius covering the whole band is the full kernel
        let wide = builder.build(&h, BandRadius::Limited(8));
        assert_eq!(wide.offsets.len(), 16);
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let cfg = Arc::new(StftConfig::hann(8, 4).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let builder = KernelBuilder::new(cfg.clone());
        for band in [BandRadius::Full, BandRadius::Limited(1), BandRadius::Limited(2)] {
            let h = Rir::new(random_vec(11, &mut rng), 16_000).unwrap();
            let kernel = builder.build(&h, band);
            let t_s = 5;
            let rand_spec = |frames: usize, rng: &mut ChaCha8Rng| {
                let data = (0..frames * 8)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                Spectrogram::new(data, frames, cfg.clone(), 16_000).unwrap()
            };
            let s = rand_spec(t_s, &mut rng);
            let g = rand_spec(kernel.output_frames(t_s), &mut rng);
            let lhs = kernel.apply(&s).unwrap().inner(&g);
            let rhs = s.inner(&apply_adjoint(&kernel, &g).unwrap());
            assert!((lhs - rhs).norm() / lhs.norm() < 1e-12);
        }
    }

    #[test]
    fn zero_kernel_and_zero_input() {
        let cfg = Arc::new(StftConfig::hann(8, 4).unwrap());
        let builder = KernelBuilder::new(cfg.clone());
        let zero_h = Rir::new(vec![0.0; 5], 16_000).unwrap();
        let kernel = builder.build(&zero_h, BandRadius::Full);
        let g = Spectrogram::new(vec![Complex64::new(1.0, -1.0); 8 * kernel.output_frames(3)], kernel.output_frames(3), cfg.clone(), 16_000).unwrap();
        assert_eq!(kernel.apply_adjoint(&g, 3).unwrap().norm_sqr(), 0.0);
        let k2 = builder.build(&Rir::dirac(16_000), BandRadius::Full);
        let zero = Spectrogram::zeros(cfg, 4, 16_000);
        assert_eq!(k2.apply(&zero).unwrap().norm_sqr(), 0.0);
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let a = Arc::new(StftConfig::hann(8, 4).unwrap());
        let b = Arc::new(StftConfig::hann(16, 8).unwrap());
        let kernel = KernelBuilder::new(a).build(&Rir::dirac(16_000), BandRadius::Full);
        assert!(matches!(kernel.apply(&Spectrogram::zeros(b, 3, 16_000)), Err(Error::ConfigMismatch)));
    }

    #[test]
    fn dump_round_trip() {
        let cfg = Arc::new(StftConfig::hann(8, 4).unwrap());
        let h = Rir::new(vec![1.0, 0.5, -0.25, 0.1], 16_000).unwrap();
        let kernel = KernelBuilder::new(cfg).build(&h, BandRadius::Limited(1));
        let mut buf = Vec::new();
        kernel.write_binary(&mut buf).unwrap();
        let dump = KernelDump::read(buf.as_slice()).unwrap();
        assert_eq!(dump.num_bins, 8);
        assert_eq!(dump.band, BandRadius::Limited(1));
        assert_eq!(dump.offsets, vec![-1, 0, 1]);
        assert_eq!(dump.values.len(), (dump.lead + dump.t_h) * 8 * 3);
        let e = kernel.entry(2, 3, 0);
        let idx = ((dump.lead * 8) + 2) * 3 + 2;
        assert!((dump.values[idx].re as f64 - e.re).abs() < 1e-6);
    }
}
