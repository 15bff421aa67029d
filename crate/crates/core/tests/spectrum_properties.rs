use autoeq::audio::Audio;
use autoeq::spectrum::{
    fft_freqs, gaussian_smooth, measure_spectrum, spectral_difference, stft_mag_db, to_log_grid, LogFrequencyGrid,
    SpectrumDb, StftConfig,
};
use autoeq::targets::{build_target, TargetBank};
use proptest::prelude::*;

fn spectrum() -> impl Strategy<Value = SpectrumDb> {
    prop::collection::vec(-60.0f64..60.0, 256).prop_map(|v| SpectrumDb::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothing_is_linear(x in spectrum(), y in spectrum(), a in -3.0f64..3.0, b in -3.0f64..3.0, sigma in 0.5f64..8.0) {
        let combo = x.scale(a).add(&y.scale(b));
        let lhs = gaussian_smooth(&combo, sigma);
        let rhs = gaussian_smooth(&x, sigma).scale(a).add(&gaussian_smooth(&y, sigma).scale(b));
        for (l, r) in lhs.values().iter().zip(rhs.values()) {
            prop_assert!((l - r).abs() < 1e-9);
        }
    }

    #[test]
    fn difference_curves_are_zero_mean_and_limited(t in spectrum(), m in spectrum(), sigma in 0.5f64..6.0, limit in 0.5f64..20.0) {
        let d = spectral_difference(&t, &m, sigma, limit);
        prop_assert!(d.curve().mean().abs() < 1e-6);
        prop_assert!(d.curve().max_abs() <= limit + 1e-9);
    }

    #[test]
    fn log_grid_is_exact_at_knots(vals in prop::collection::vec(-100.0f64..20.0, 256)) {
        // source bins placed exactly on the grid frequencies
        let grid = LogFrequencyGrid::canonical();
        let out = to_log_grid(&vals, grid.freqs(), grid);
        prop_assert_eq!(out.values(), &vals[..]);
    }

    #[test]
    fn sine_peak_lands_within_one_bin(f in 60.0f64..15_000.0) {
        let fs = 44_100.0;
        let x: Vec<f64> = (0..8192).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin()).collect();
        let frames = stft_mag_db(&x, fs, StftConfig::default()).unwrap();
        let freqs = fft_freqs(2048, fs);
        let grid = LogFrequencyGrid::canonical();
        let s = to_log_grid(&frames[1], &freqs, grid);
        let peak = s.values().iter().enumerate().fold(0, |best, (i, v)| if *v > s[best] { i } else { best });
        let expect = grid.nearest_bin(f);
        prop_assert!((peak as i64 - expect as i64).abs() <= 1, "f={} peak bin {} expected {}", f, peak, expect);
    }

    #[test]
    fn classify_ignores_level_offsets(m in spectrum(), offset in -40.0f64..40.0) {
        let mut bank = TargetBank::new();
        bank.insert("a", &SpectrumDb::from_fn(|i| (i as f64 / 20.0).sin() * 6.0), 1).unwrap();
        bank.insert("b", &SpectrumDb::from_fn(|i| i as f64 / 25.0), 1).unwrap();
        bank.insert("c", &SpectrumDb::zeros(), 1).unwrap();
        let (c1, d1) = bank.classify(&m).unwrap();
        let (c2, d2) = bank.classify(&m.add(&SpectrumDb::constant(offset))).unwrap();
        prop_assert_eq!(c1, c2);
        prop_assert!((d1 - d2).abs() < 1e-9);
    }

    #[test]
    fn nearest_classes_exclude_the_query(curves in prop::collection::vec(spectrum(), 2..6), k_raw in 0usize..5) {
        let mut bank = TargetBank::new();
        for (i, c) in curves.iter().enumerate() {
            bank.insert(&format!("class{i}"), c, 1).unwrap();
        }
        let k = k_raw % curves.len();
        for i in 0..curves.len() {
            let q = format!("class{i}");
            let near = bank.nearest_classes(&q, k).unwrap();
            prop_assert_eq!(near.len(), k);
            prop_assert!(!near.contains(&q));
        }
    }
}

fn tone(freq: f64, amp: f64, frames: usize) -> Audio {
    let fs = 44_100.0;
    Audio::mono(
        44_100,
        (0..frames).map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin() + 1e-3 * ((i * 7919) % 101) as f64 / 101.0).collect(),
    )
}

#[test]
fn build_target_is_order_free_and_idempotent_under_duplication() {
    let cfg = StftConfig::default();
    let a = tone(220.0, 0.5, 8192);
    let b = tone(1500.0, 0.2, 12_000);
    let c = tone(5000.0, 0.8, 6000);
    let abc = build_target(&[a.clone(), b.clone(), c.clone()], cfg).unwrap();
    let cab = build_target(&[c.clone(), a.clone(), b.clone()], cfg).unwrap();
    assert_eq!(abc, cab);
    let one = build_target(&[a.clone()], cfg).unwrap();
    let twice = build_target(&[a.clone(), a.clone()], cfg).unwrap();
    for (x, y) in one.values().iter().zip(twice.values()) {
        assert!((x - y).abs() < 1e-9);
    }
    assert!(one.mean().abs() < 1e-9);
}

#[test]
fn measuring_at_48k_matches_44k() {
    // the same band-limited noise rendered at two rates measures alike
    let make = |fs: u32| {
        let n = fs as usize * 3;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs as f64;
                [110.0, 440.0, 1760.0, 7040.0]
                    .iter()
                    .map(|f| (2.0 * std::f64::consts::PI * f * t).sin())
                    .sum::<f64>()
                    * 0.2
            })
            .collect();
        Audio::mono(fs, x)
    };
    let a = measure_spectrum(&make(44_100), StftConfig::default()).unwrap();
    let b = measure_spectrum(&make(48_000), StftConfig::default()).unwrap();
    let grid = LogFrequencyGrid::canonical();
    for f in [110.0, 440.0, 1760.0, 7040.0] {
        let i = grid.nearest_bin(f);
        assert!((a[i] - b[i]).abs() < 0.5, "{f} Hz: {} vs {}", a[i], b[i]);
    }
}
