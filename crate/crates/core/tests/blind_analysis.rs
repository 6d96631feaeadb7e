use std::sync::Arc;

use rmdereverb::blind::{
    analyze_blind, blind_drr, calibrate_rt60, drr_grid_losses, raw_decay_estimate, BlindConfig, DecayConfig,
    DrrSearchConfig, Rt60Calibration,
};
use rmdereverb::rir::AcousticParams;
use rmdereverb::signal::{stft, StftConfig};
use rmdereverb::synth::{decaying_noise, reverberant_example, speech_shaped_noise};
use rmdereverb::Error;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn decaying_noise_raw_estimate_tracks_decay_constant() {
    let cfg = Arc::new(StftConfig::default_speech());
    for tau0 in [400.0, 1000.0, 1800.0] {
        let expected = 3.0 * 10f64.ln() * tau0 / 16_000.0;
        let raws: Vec<f64> = (0..20)
            .map(|seed| {
                let x = decaying_noise(24_000, tau0, 16_000, seed);
                raw_decay_estimate(&stft(&x, &cfg).unwrap(), &DecayConfig::default()).unwrap()
            })
            .collect();
        let m = median(raws);
        assert!((m / expected - 1.0).abs() <= 0.2, "tau0 {tau0}: {m} vs {expected}");
    }
}

#[test]
fn single_point_grid_returns_that_point() {
    let cfg = Arc::new(StftConfig::default_speech());
    let p = AcousticParams::new(0.4, 2.0, 16_000).unwrap();
    let ex = reverberant_example(&p, 16_000, 3).unwrap();
    let y = stft(&ex.wet, &cfg).unwrap();
    let search = DrrSearchConfig { grid: vec![4.5], draws_per_point: 1, ..DrrSearchConfig::default() };
    assert_eq!(blind_drr(&y, 0.4, &DecayConfig::default(), &search).unwrap(), 4.5);
    let empty = DrrSearchConfig { grid: vec![], ..DrrSearchConfig::default() };
    assert!(blind_drr(&y, 0.4, &DecayConfig::default(), &empty).is_err());
}

#[test]
fn drr_search_centers_on_zero_db_rooms() {
    let cfg = Arc::new(StftConfig::default_speech());
    let grid = vec![-6.0, -3.0, 0.0, 3.0, 6.0];
    let picks: Vec<f64> = (0..50)
        .map(|i| {
            let p = AcousticParams::new(0.5, 0.0, 16_000).unwrap();
            let ex = reverberant_example(&p, 16_000, 1000 + i).unwrap();
            let y = stft(&ex.wet, &cfg).unwrap();
            let search = DrrSearchConfig { grid: grid.clone(), seed: i, ..DrrSearchConfig::default() };
            blind_drr(&y, 0.5, &DecayConfig::default(), &search).unwrap()
        })
        .collect();
    let m = median(picks);
    assert!(m.abs() <= 3.0, "median pick {m}");
}

#[test]
fn drr_search_is_deterministic() {
    let cfg = Arc::new(StftConfig::default_speech());
    let p = AcousticParams::new(0.3, 0.0, 16_000).unwrap();
    let y = stft(&reverberant_example(&p, 16_000, 8).unwrap().wet, &cfg).unwrap();
    let search = DrrSearchConfig { seed: 4, ..DrrSearchConfig::default() };
    let a = drr_grid_losses(&y, 0.3, &DecayConfig::default(), &search).unwrap();
    let b = drr_grid_losses(&y, 0.3, &DecayConfig::default(), &search).unwrap();
    assert_eq!(a, b);
}

fn small_calibration() -> Rt60Calibration {
    let cfg = Arc::new(StftConfig::default_speech());
    let pairs: Vec<_> = (0..24)
        .map(|i| {
            let rt60 = 0.2 + 0.8 * (i as f64 / 23.0);
            let p = AcousticParams::new(rt60, (i % 5) as f64 * 3.0 - 6.0, 16_000).unwrap();
            (stft(&reverberant_example(&p, 32_000, 200 + i).unwrap().wet, &cfg).unwrap(), rt60)
        })
        .collect();
    calibrate_rt60(&pairs, &DecayConfig::default()).unwrap()
}

#[test]
fn analysis_equals_manual_composition() {
    let cal = small_calibration();
    let cfg = Arc::new(StftConfig::default_speech());
    let p = AcousticParams::new(0.7, 3.0, 16_000).unwrap();
    let y = stft(&reverberant_example(&p, 32_000, 77).unwrap().wet, &cfg).unwrap();
    let blind = BlindConfig::default();
    let est = analyze_blind(&y, &cal, &blind).unwrap();
    let raw = raw_decay_estimate(&y, &blind.decay).unwrap();
    let rt60 = cal.apply(raw);
    assert_eq!(est.raw_median_decay, raw);
    assert_eq!(est.rt60, rt60);
    assert_eq!(est.drr_db, blind_drr(&y, rt60, &blind.decay, &blind.drr).unwrap());
    assert!(!est.below_floor);
    assert!(est.rt60 > 0.0 && est.rm_loss_at_estimate.is_finite());
}

#[test]
fn anechoic_input_is_flagged_or_rejected() {
    // The analysis window caps the steepest measurable decay near 0.2 s, so
    // dry bursts read as "below the calibrated range" rather than as zero.
    // Pinned from a sweep over these seeds: at least 4 of 5 are flagged.
    let cal = small_calibration();
    let cfg = Arc::new(StftConfig::default_speech());
    let flagged = (0..5)
        .filter(|i| {
            let dry = speech_shaped_noise(32_000, 16_000, 900 + i);
            match analyze_blind(&stft(&dry, &cfg).unwrap(), &cal, &BlindConfig::default()) {
                Ok(e) => e.below_floor,
                Err(Error::InsufficientDecay) => true,
                Err(e) => panic!("{e}"),
            }
        })
        .count();
    assert!(flagged >= 4, "only {flagged} of 5 anechoic inputs flagged");
}

#[test]
fn calibration_needs_three_pairs() {
    let cfg = Arc::new(StftConfig::default_speech());
    let p = AcousticParams::new(0.5, 0.0, 16_000).unwrap();
    let pairs: Vec<_> =
        (0..2).map(|i| (stft(&reverberant_example(&p, 20_000, i).unwrap().wet, &cfg).unwrap(), 0.5)).collect();
    let err = calibrate_rt60(&pairs, &DecayConfig::default()).unwrap_err();
    assert!(err.to_string().contains("insufficient calibration data"));
}
