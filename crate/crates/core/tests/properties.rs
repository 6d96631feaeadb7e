use std::sync::Arc;

use proptest::prelude::*;
use rmdereverb::blind::{fit_polynomial, raw_decay_estimate, select_grid_point, DecayConfig};
use rmdereverb::kv::KvRecord;
use rmdereverb::metrics::sisdr;
use rmdereverb::rir::Rir;
use rmdereverb::signal::{istft, stft, Signal, Spectrogram, StftConfig};
use rmdereverb::synth::decaying_noise;
use rmdereverb::tfconv::{BandRadius, KernelBuilder};
use rmdereverb::Complex64;

fn spec_from(values: &[(f64, f64)], cfg: &Arc<StftConfig>) -> Spectrogram {
    let frames = values.len() / cfg.num_bins();
    let data = values[..frames * cfg.num_bins()].iter().map(|(re, im)| Complex64::new(*re, *im)).collect();
    Spectrogram::new(data, frames, cfg.clone(), 16_000).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stft_round_trip(samples in prop::collection::vec(-1.0f64..1.0, 1..900)) {
        let cfg = Arc::new(StftConfig::hann(64, 16).unwrap());
        let x = Signal::new(samples, 16_000).unwrap();
        let back = istft(&stft(&x, &cfg).unwrap()).unwrap();
        prop_assert_eq!(back.len(), x.len());
        let err: f64 = back.samples().iter().zip(x.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10);
    }

    #[test]
    fn operator_is_linear_and_adjoint_consistent(
        s in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16..48),
        g in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64),
        taps in prop::collection::vec(-1.0f64..1.0, 1..12),
        radius in 0usize..5,
    ) {
        let cfg = Arc::new(StftConfig::hann(8, 4).unwrap());
        let band = if radius == 4 { BandRadius::Full } else { BandRadius::Limited(radius) };
        let k = KernelBuilder::new(cfg.clone()).build(&Rir::new(taps, 16_000).unwrap(), band);
        let s = spec_from(&s, &cfg);
        let y = k.apply(&s).unwrap();
        let g = spec_from(&g.iter().cycle().take(y.data().len()).copied().collect::<Vec<_>>(), &cfg);
        let lhs = y.inner(&g);
        let rhs = s.inner(&k.apply_adjoint(&g, s.num_frames()).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));

        let doubled = k.apply(&s.scaled(2.0)).unwrap();
        for (a, b) in doubled.data().iter().zip(y.data()) {
            prop_assert!((a - b * 2.0).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn sisdr_is_scale_invariant(
        pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..200),
        gain in 1e-3f64..1e3,
    ) {
        let est: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let reference: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(reference.iter().any(|r| *r != 0.0));
        let a = sisdr(&est, &reference).unwrap();
        let scaled: Vec<f64> = est.iter().map(|e| e * gain).collect();
        let b = sisdr(&scaled, &reference).unwrap();
        prop_assert_eq!(a.perfect, b.perfect);
        prop_assert!((a.db - b.db).abs() < 1e-8);
    }

    #[test]
    fn higher_order_fits_never_increase_residual(
        points in prop::collection::vec((0.05f64..1.5, 0.1f64..2.0), 4..40),
    ) {
        prop_assume!(points.iter().any(|p| (p.0 - points[0].0).abs() > 1e-3));
        let (_, r1) = fit_polynomial(&points, 1).unwrap();
        let (_, r2) = fit_polynomial(&points, 2).unwrap();
        prop_assert!(r2 <= r1 + 1e-12);
    }

    #[test]
    fn grid_choice_ignores_loss_scale(
        losses in prop::collection::vec(0.0f64..10.0, 1..8),
        gain in 1e-6f64..1e6,
    ) {
        let grid: Vec<f64> = (0..losses.len()).map(|i| -6.0 + 3.0 * i as f64).collect();
        let scaled: Vec<f64> = losses.iter().map(|l| l * gain).collect();
        prop_assert_eq!(select_grid_point(&grid, &losses), select_grid_point(&grid, &scaled));
    }

    #[test]
    fn kv_text_round_trip(
        pairs in prop::collection::vec(("[a-z][a-z0-9_]{0,8}", "[A-Za-z0-9_.+-]{0,12}"), 0..10),
    ) {
        let mut rec = KvRecord::new();
        for (k, v) in &pairs {
            rec.set(k, v);
        }
        let back: KvRecord = rec.to_string().parse().unwrap();
        prop_assert_eq!(back, rec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn raw_decay_ignores_amplitude(seed in 0u64..1000, log_gain in -3.0f64..3.0) {
        let cfg = Arc::new(StftConfig::default_speech());
        let x = decaying_noise(20_000, 2000.0, 16_000, seed);
        let a = raw_decay_estimate(&stft(&x, &cfg).unwrap(), &DecayConfig::default()).unwrap();
        let b = raw_decay_estimate(&stft(&x.scaled(10f64.powf(log_gain)), &cfg).unwrap(), &DecayConfig::default())
            .unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }
}
