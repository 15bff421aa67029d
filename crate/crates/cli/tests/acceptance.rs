//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Tolerances are the constants below.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use autoeq::audio::Audio;
use autoeq::corpus::MeasuredSample;
use autoeq::datagen::{build_realworld_dataset_default, build_synthetic_dataset, sample_random_settings, NoiseConfig};
use autoeq::demo::{demo_corpus, matching_noise, DemoConfig};
use autoeq::eq::{
    cascade_response_db, cascade_response_db_with, denormalize_params, normalize_params, process_audio, BandKind,
    BandParams, EqSettings, NormalizedParams, PeakDesign, BAND_RANGES, PARAM_COUNT,
};
use autoeq::model::{
    evaluate_mae, finetune, finetune_loss, penalty_loss, train_base, Architecture, MatchingModel, TrainingConfig,
    CNN_FLAT_LEN,
};
use autoeq::nn::{DiffCascadeResponse, ValueGrid};
use autoeq::pipeline::{auto_eq, spectral_deviation_db, AutoEqOptions};
use autoeq::spectrum::{measure_spectrum, LogFrequencyGrid, SpectrumDb, StftConfig};
use autoeq::targets::TargetBank;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use statrs::distribution::{ChiSquared, ContinuousCDF};

// 1
const ORACLE_TOL_DB: f64 = 1e-9;
const ORACLE_SETTINGS: usize = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
// 2
const FORWARD_TOL_DB: f64 = 1e-9;
const FD_STEP: f64 = 1e-4;
const FD_REL_TOL: f64 = 1e-3;
const FD_CASES: usize = 100;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
// 3
const WELCH_TOL_DB: f64 = 1.0;
const WELCH_SETTINGS: usize = 20;
const WELCH_BAND_HZ: (f64, f64) = (50.0, 16_000.0);
const WELCH_BUDGET: Duration = Duration::from_secs(60);
// 4
const ROUND_TRIP_TOL: f64 = 1e-9;
const ROUND_TRIPS: usize = 10_000;
// 5
const DRAWS: usize = 100_000;
const CHI_SQUARE_BINS: usize = 20;
const CHI_SQUARE_MIN_P: f64 = 0.01;
const MEDIAN_GAIN_DB: (f64, f64) = (1.5, 0.05);
const NEGATIVE_SHARE: (f64, f64) = (0.5, 0.01);
// 6
const TRAIN_CURVES: usize = 20_000;
const TEST_CURVES: usize = 2_000;
const DEMO_TRAIN_PER_CLASS: usize = 400;
const DEMO_TEST_PER_CLASS: usize = 40;
const DEMO_BANK_PER_CLASS: usize = 40;
const FINETUNE_MIN_GAIN_DB: f64 = 0.3;
const ARCH_SLACK_DB: f64 = 0.02;
const TREND_BUDGET: Duration = Duration::from_secs(30 * 60);
// 8
const FIXED_POINT_DIFF_DB: f64 = 0.5;
const FIXED_POINT_DEVIATION_DB: f64 = 1.0;
const MATCHING_REFINEMENTS: usize = 8;
// 9
const PENALTY_TOL: f64 = 0.0;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn uniform_settings(rng: &mut ChaCha8Rng) -> EqSettings {
    let bands = std::array::from_fn(|i| {
        let r = &BAND_RANGES[i];
        BandParams {
            kind: r.kind,
            freq_hz: r.f_min * (r.f_max / r.f_min).powf(rng.gen::<f64>()),
            gain_db: rng.gen_range(r.g_min..=r.g_max),
            q: if r.q_is_fixed() { r.q_min } else { rng.gen_range(r.q_min..=r.q_max) },
        }
    });
    EqSettings::new(bands).unwrap()
}

/// Cookbook biquad `[b0, b1, b2, a0, a1, a2]`.
fn rbj(kind: BandKind, f: f64, gain_db: f64, q: f64, fs: f64) -> [f64; 6] {
    let a = 10f64.powf(gain_db / 40.0);
    let w0 = 2.0 * PI * f / fs;
    let (sn, cs) = w0.sin_cos();
    let alpha = sn / (2.0 * q);
    let sa = 2.0 * a.sqrt() * alpha;
    match kind {
        BandKind::Peak => [1.0 + alpha * a, -2.0 * cs, 1.0 - alpha * a, 1.0 + alpha / a, -2.0 * cs, 1.0 - alpha / a],
        BandKind::LowShelf => [
            a * ((a + 1.0) - (a - 1.0) * cs + sa),
            2.0 * a * ((a - 1.0) - (a + 1.0) * cs),
            a * ((a + 1.0) - (a - 1.0) * cs - sa),
            (a + 1.0) + (a - 1.0) * cs + sa,
            -2.0 * ((a - 1.0) + (a + 1.0) * cs),
            (a + 1.0) + (a - 1.0) * cs - sa,
        ],
        BandKind::HighShelf => [
            a * ((a + 1.0) + (a - 1.0) * cs + sa),
            -2.0 * a * ((a - 1.0) + (a + 1.0) * cs),
            a * ((a + 1.0) + (a - 1.0) * cs - sa),
            (a + 1.0) - (a - 1.0) * cs + sa,
            2.0 * ((a - 1.0) - (a + 1.0) * cs),
            (a + 1.0) - (a - 1.0) * cs - sa,
        ],
    }
}

/// 20·log10 |B(e^{jω}) / A(e^{jω})|, polynomials expanded around z = 1.
fn complex_db(c: [f64; 6], w: f64) -> f64 {
    let d1 = Complex64::new(-2.0 * (w / 2.0).sin().powi(2), -w.sin());
    let d2 = Complex64::new(-2.0 * w.sin().powi(2), -(2.0 * w).sin());
    let num = Complex64::new(c[0] + c[1] + c[2], 0.0) + d1 * c[1] + d2 * c[2];
    let den = Complex64::new(c[3] + c[4] + c[5], 0.0) + d1 * c[4] + d2 * c[5];
    20.0 * (num.norm() / den.norm()).log10()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = LogFrequencyGrid::canonical();
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_SETTINGS {
        let s = uniform_settings(&mut rng);
        for fs in [44_100.0, 48_000.0, 96_000.0] {
            let got = cascade_response_db(&s, grid, fs).map_err(|e| e.to_string())?;
            let coeffs: Vec<[f64; 6]> = s.bands.iter().map(|b| rbj(b.kind, b.freq_hz, b.gain_db, b.q, fs)).collect();
            for (i, f) in grid.freqs().iter().enumerate() {
                let w = 2.0 * PI * f / fs;
                let expect: f64 = coeffs.iter().map(|c| complex_db(*c, w)).sum();
                worst = worst.max((got[i] - expect).abs());
            }
        }
    }
    let t = start.elapsed();
    check(worst < ORACLE_TOL_DB, format!("max |err| {worst:.3e} dB >= {ORACLE_TOL_DB:e}"))?;
    check(t < ORACLE_BUDGET, format!("took {t:?}"))?;
    Ok(format!("max |err| {worst:.2e} dB over {} settings x 3 rates (tol {ORACLE_TOL_DB:e}), {t:.2?}", ORACLE_SETTINGS))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = LogFrequencyGrid::canonical();

    // forward agreement on in-range parameters
    let resp = DiffCascadeResponse::new(PeakDesign::Cookbook);
    let mut worst_fwd = 0.0f64;
    for _ in 0..FD_CASES {
        let v: [f64; PARAM_COUNT] = std::array::from_fn(|_| rng.gen());
        let ours = resp.response_row(&v);
        let s = denormalize_params(&NormalizedParams(v), false);
        let reference = cascade_response_db_with(&s, grid, 44_100.0, PeakDesign::Cookbook).map_err(|e| e.to_string())?;
        for (a, b) in ours.iter().zip(reference.values()) {
            worst_fwd = worst_fwd.max((a - b).abs());
        }
    }
    check(worst_fwd < FORWARD_TOL_DB, format!("forward max |err| {worst_fwd:.3e} dB"))?;

    // gradient of the full fine-tuning loss with respect to the 10 outputs.
    // Targets keep every bin at least 1 dB from the response and parameters
    // stay clear of 0 and 1, so no ℓ1 kink lies inside the stencil.
    let mut worst_rel = 0.0f64;
    for _ in 0..FD_CASES {
        let v: [f64; PARAM_COUNT] = std::array::from_fn(|i| {
            let lo = if [4, 7].contains(&i) { 0.05 } else { -0.2 };
            loop {
                let x: f64 = rng.gen_range(lo..1.2);
                if x.abs() > 10.0 * FD_STEP && (x - 1.0).abs() > 10.0 * FD_STEP {
                    break x;
                }
            }
        });
        let base = resp.response_row(&v);
        let x: Vec<f64> = base
            .iter()
            .map(|r| r + if rng.gen::<bool>() { 1.0 } else { -1.0 } * rng.gen_range(1.0..4.0))
            .collect();
        let xg = ValueGrid::new(vec![1, 256], x).unwrap();
        let lambda = rng.gen_range(0.5..2.0);
        let loss_at = |vv: &[f64; PARAM_COUNT]| -> f64 {
            let vg = ValueGrid::new(vec![1, PARAM_COUNT], vv.to_vec()).unwrap();
            let r = ValueGrid::new(vec![1, 256], resp.response_row(vv)).unwrap();
            finetune_loss(&xg, &r, &vg, lambda).unwrap().0
        };
        let vg = ValueGrid::new(vec![1, PARAM_COUNT], v.to_vec()).unwrap();
        let mut diff = DiffCascadeResponse::new(PeakDesign::Cookbook);
        let r = diff.forward(&vg).map_err(|e| e.to_string())?;
        let (_, gx, gv) = finetune_loss(&xg, &r, &vg, lambda).map_err(|e| e.to_string())?;
        let dv = diff.backward(&gx).map_err(|e| e.to_string())?;
        for k in 0..PARAM_COUNT {
            let analytic = dv.values[k] + gv.values[k];
            let (mut up, mut down) = (v, v);
            up[k] += FD_STEP;
            down[k] -= FD_STEP;
            let fd = (loss_at(&up) - loss_at(&down)) / (2.0 * FD_STEP);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
            worst_rel = worst_rel.max(rel);
        }
    }
    let t = start.elapsed();
    check(worst_rel < FD_REL_TOL, format!("gradient max rel err {worst_rel:.3e}"))?;
    check(t < GRAD_BUDGET, format!("took {t:?}"))?;
    Ok(format!(
        "forward max |err| {worst_fwd:.2e} dB (tol {FORWARD_TOL_DB:e}); gradient max rel err {worst_rel:.2e} over {FD_CASES} cases x 10 params (h {FD_STEP:e}, tol {FD_REL_TOL:e}), {t:.2?}"
    ))
}

/// Averaged periodogram with a Hann window and 50 % overlap.
fn welch(x: &[f64], seg: usize) -> Vec<f64> {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let win: Vec<f64> = (0..seg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).collect();
    let mut acc = vec![0.0; seg / 2 + 1];
    let mut start = 0;
    while start + seg <= x.len() {
        let mut buf: Vec<Complex64> = x[start..start + seg].iter().zip(&win).map(|(v, w)| Complex64::new(v * w, 0.0)).collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        start += seg / 2;
    }
    acc
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let fs = 48_000u32;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise: Vec<f64> = (0..fs as usize * 10).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let input = Audio::mono(fs, noise);
    let seg = 8192;
    let pxx = welch(&input.channels[0], seg);
    let grid = LogFrequencyGrid::canonical();
    let mut worst = 0.0f64;
    for _ in 0..WELCH_SETTINGS {
        let s = uniform_settings(&mut rng);
        let out = process_audio(&input, &s, PeakDesign::Cookbook).map_err(|e| e.to_string())?;
        let pyy = welch(&out.channels[0], seg);
        let design = cascade_response_db(&s, grid, fs as f64).map_err(|e| e.to_string())?;
        for (i, f) in grid.freqs().iter().enumerate() {
            if *f < WELCH_BAND_HZ.0 || *f > WELCH_BAND_HZ.1 {
                continue;
            }
            // linear interpolation of the measured ratio between FFT bins
            let pos = f * seg as f64 / fs as f64;
            let k = pos.floor() as usize;
            let t = pos - k as f64;
            let ratio = |k: usize| 10.0 * (pyy[k] / pxx[k]).log10();
            let measured = ratio(k) * (1.0 - t) + ratio(k + 1) * t;
            worst = worst.max((measured - design[i]).abs());
        }
    }
    let t = start.elapsed();
    check(worst < WELCH_TOL_DB, format!("max |err| {worst:.3} dB"))?;
    check(t < WELCH_BUDGET, format!("took {t:?}"))?;
    Ok(format!(
        "max |Welch - design| {worst:.3} dB over {WELCH_SETTINGS} settings, {}-{} Hz (tol {WELCH_TOL_DB}), {t:.2?}",
        WELCH_BAND_HZ.0, WELCH_BAND_HZ.1
    ))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..ROUND_TRIPS {
        let s = uniform_settings(&mut rng);
        let back = denormalize_params(&normalize_params(&s).map_err(|e| e.to_string())?, false);
        for (a, b) in s.bands.iter().zip(&back.bands) {
            for (x, y) in [(a.freq_hz, b.freq_hz), (a.gain_db, b.gain_db), (a.q, b.q)] {
                worst = worst.max((x - y).abs() / x.abs().max(1.0));
            }
        }
    }
    check(worst < ROUND_TRIP_TOL, format!("max rel err {worst:.3e}"))?;
    let mut s = EqSettings::flat();
    s.bands[0].freq_hz = 30.0;
    check(normalize_params(&s).unwrap().0[0] == 0.0, "30 Hz low shelf does not map to 0".into())?;
    s.bands[0].freq_hz = 450.0;
    let v = normalize_params(&s).unwrap();
    check((v.0[0] - 1.0).abs() < 1e-15, format!("450 Hz maps to {}", v.0[0]))?;
    check(v.0[1] == 0.5, format!("0 dB maps to {}", v.0[1]))?;
    s.bands[0].freq_hz = (30.0f64 * 450.0).sqrt();
    let mid = normalize_params(&s).unwrap().0[0];
    check((mid - 0.5).abs() < 1e-15, format!("geometric mean maps to {mid}"))?;
    Ok(format!("max rel err {worst:.2e} over {ROUND_TRIPS} settings (tol {ROUND_TRIP_TOL:e}); endpoints and midpoints exact"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws: Vec<EqSettings> = (0..DRAWS).map(|_| sample_random_settings(&mut rng)).collect();
    let chi = ChiSquared::new((CHI_SQUARE_BINS - 1) as f64).unwrap();
    let mut notes = Vec::new();
    for (bi, r) in BAND_RANGES.iter().enumerate() {
        let mut counts = vec![0usize; CHI_SQUARE_BINS];
        let mut gains = Vec::with_capacity(DRAWS);
        let mut negative = 0usize;
        for s in &draws {
            let b = &s.bands[bi];
            let ok = b.kind == r.kind
                && (r.f_min..=r.f_max).contains(&b.freq_hz)
                && (r.g_min..=r.g_max).contains(&b.gain_db)
                && (r.q_min..=r.q_max).contains(&b.q);
            check(ok, format!("band {} draw out of range: {b:?}", bi + 1))?;
            let x = (b.freq_hz / r.f_min).ln() / (r.f_max / r.f_min).ln();
            counts[((x * CHI_SQUARE_BINS as f64) as usize).min(CHI_SQUARE_BINS - 1)] += 1;
            gains.push(b.gain_db.abs());
            negative += (b.gain_db < 0.0) as usize;
        }
        let expect = DRAWS as f64 / CHI_SQUARE_BINS as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        let p = 1.0 - chi.cdf(stat);
        gains.sort_by(f64::total_cmp);
        let median = 0.5 * (gains[DRAWS / 2 - 1] + gains[DRAWS / 2]);
        let share = negative as f64 / DRAWS as f64;
        check(p > CHI_SQUARE_MIN_P, format!("band {} log-frequency chi-square p = {p:.4}", bi + 1))?;
        check(
            (median - MEDIAN_GAIN_DB.0).abs() <= MEDIAN_GAIN_DB.1,
            format!("band {} median |gain| {median:.4}", bi + 1),
        )?;
        check(
            (share - NEGATIVE_SHARE.0).abs() <= NEGATIVE_SHARE.1,
            format!("band {} negative share {share:.4}", bi + 1),
        )?;
        notes.push(format!("b{} p={p:.3} med={median:.3} neg={share:.4}", bi + 1));
    }
    Ok(format!(
        "{DRAWS} draws, all in range; {} (p > {CHI_SQUARE_MIN_P}, median {}±{}, negative {}±{})",
        notes.join(", "),
        MEDIAN_GAIN_DB.0,
        MEDIAN_GAIN_DB.1,
        NEGATIVE_SHARE.0,
        NEGATIVE_SHARE.1
    ))
}

fn measured_demo(per_class: usize, seed: u64) -> Vec<MeasuredSample> {
    demo_corpus(per_class, seed, &DemoConfig::default())
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, it)| MeasuredSample {
            source_id: format!("{}_{i}", it.class),
            spectrum: measure_spectrum(&it.audio, StftConfig::default()).unwrap(),
            class: it.class,
        })
        .collect()
}

/// Everything criterion 6 trains, kept for criterion 8.
struct Trained {
    bank: TargetBank,
    model: MatchingModel,
}

fn criterion_6(trained: &mut Option<Trained>) -> Outcome {
    let start = Instant::now();
    let train = build_synthetic_dataset(TRAIN_CURVES, &NoiseConfig::default(), 61).map_err(|e| e.to_string())?;
    let test = build_synthetic_dataset(TEST_CURVES, &NoiseConfig::default(), 62).map_err(|e| e.to_string())?;
    let bank = TargetBank::from_measured(&measured_demo(DEMO_BANK_PER_CLASS, 63)).map_err(|e| e.to_string())?;
    let rw_train = build_realworld_dataset_default(&measured_demo(DEMO_TRAIN_PER_CLASS, 64), &bank, 4)
        .map_err(|e| e.to_string())?;
    let rw_test = build_realworld_dataset_default(&measured_demo(DEMO_TEST_PER_CLASS, 65), &bank, 4)
        .map_err(|e| e.to_string())?;
    let (curves, params) = (train.curves(), train.params().map_err(|e| e.to_string())?);
    let (test_c, rw_c, rw_test_c) = (test.curves(), rw_train.curves(), rw_test.curves());
    let cfg = TrainingConfig {
        seed: 6,
        ..Default::default()
    };
    let mae = |m: &MatchingModel, c: &[SpectrumDb]| evaluate_mae(m, c, m.peak_design).map(|r| r.mean_db).map_err(|e| e.to_string());

    // [arch][base, ft synthetic, ft real-world] on (synthetic test, real-world test)
    let mut table = Vec::new();
    let mut keep = None;
    for arch in [Architecture::Mlp, Architecture::Cnn] {
        let mut base = MatchingModel::new(arch, 60);
        train_base(&mut base, &curves, &params, &cfg, None).map_err(|e| e.to_string())?;
        let mut ft_syn = base.clone();
        finetune(&mut ft_syn, &curves, &cfg, None).map_err(|e| e.to_string())?;
        let mut ft_rw = base.clone();
        finetune(&mut ft_rw, &rw_c, &cfg, None).map_err(|e| e.to_string())?;
        let row = [
            (mae(&base, &test_c)?, mae(&base, &rw_test_c)?),
            (mae(&ft_syn, &test_c)?, mae(&ft_syn, &rw_test_c)?),
            (mae(&ft_rw, &test_c)?, mae(&ft_rw, &rw_test_c)?),
        ];
        println!(
            "      {arch}: base {:.3}/{:.3}  ft-synthetic {:.3}/{:.3}  ft-realworld {:.3}/{:.3}  (synthetic/real-world test MAE, dB)",
            row[0].0, row[0].1, row[1].0, row[1].1, row[2].0, row[2].1
        );
        table.push(row);
        if arch == Architecture::Cnn {
            keep = Some(ft_rw);
        }
    }
    *trained = keep.map(|model| Trained { bank, model });
    let t = start.elapsed();
    let (mlp, cnn) = (&table[0], &table[1]);
    let mut failures = Vec::new();
    for (name, row) in [("mlp", mlp), ("cnn", cnn)] {
        let gain = row[0].0 - row[1].0;
        if gain < FINETUNE_MIN_GAIN_DB {
            failures.push(format!("(a) {name} fine-tuning gains only {gain:.3} dB"));
        }
        if row[2].1 >= row[1].1 {
            failures.push(format!(
                "(c) {name} real-world fine-tune {:.3} dB not below synthetic fine-tune {:.3} dB",
                row[2].1, row[1].1
            ));
        }
    }
    for (regime, name) in ["base", "ft-synthetic", "ft-realworld"].iter().enumerate() {
        let (m, c) = if regime == 2 { (mlp[2].1, cnn[2].1) } else { (mlp[regime].0, cnn[regime].0) };
        if c > m + ARCH_SLACK_DB {
            failures.push(format!("(b) {name}: cnn {c:.3} dB > mlp {m:.3} dB + {ARCH_SLACK_DB}"));
        }
    }
    if t >= TREND_BUDGET {
        failures.push(format!("took {t:?}"));
    }
    if !failures.is_empty() {
        return Err(failures.join("; "));
    }
    Ok(format!(
        "(a) gains mlp {:.3} / cnn {:.3} dB (min {FINETUNE_MIN_GAIN_DB}); (b) cnn <= mlp + {ARCH_SLACK_DB} in all regimes; (c) real-world test mlp {:.3} < {:.3}, cnn {:.3} < {:.3}; {t:.0?}",
        mlp[0].0 - mlp[1].0,
        cnn[0].0 - cnn[1].0,
        mlp[2].1,
        mlp[1].1,
        cnn[2].1,
        cnn[1].1
    ))
}

fn criterion_7() -> Outcome {
    let m = MatchingModel::new(Architecture::Cnn, 7);
    check(m.flatten_len() == CNN_FLAT_LEN, format!("flatten width {}", m.flatten_len()))?;
    let y = m.predict(&ValueGrid::zeros(vec![3, 256])).map_err(|e| e.to_string())?;
    check(y.shape() == [3, PARAM_COUNT], format!("output shape {:?}", y.shape()))?;
    Ok(format!("flatten width {} for 256-bin input; output [3, 10]", m.flatten_len()))
}

fn criterion_8(trained: &Option<Trained>) -> Outcome {
    let Some(Trained { bank, model }) = trained else {
        return Err("no trained model (criterion 6 did not finish)".into());
    };
    let mut worst_diff = 0.0f64;
    let mut worst_dev = 0.0f64;
    for (i, class) in bank.classes().enumerate() {
        let fs = if i % 2 == 0 { 44_100 } else { 48_000 };
        let audio = matching_noise(bank.target(class).unwrap(), fs, 8.0, 80 + i as u64, MATCHING_REFINEMENTS).map_err(|e| e.to_string())?;
        let out = auto_eq(&audio, bank, model, &AutoEqOptions::default()).map_err(|e| e.to_string())?;
        check(out.result.predicted_class == class, format!("{class} classified as {}", out.result.predicted_class))?;
        let processed = out.audio.expect("not a dry run");
        check(
            processed.frames() == audio.frames() && processed.channel_count() == audio.channel_count(),
            "output shape differs from input".into(),
        )?;
        worst_diff = worst_diff.max(out.result.difference.curve().max_abs());
        worst_dev = worst_dev.max(spectral_deviation_db(&audio, &processed, StftConfig::default()).map_err(|e| e.to_string())?);
    }
    check(worst_diff < FIXED_POINT_DIFF_DB, format!("difference max |value| {worst_diff:.3} dB"))?;
    check(worst_dev < FIXED_POINT_DEVIATION_DB, format!("spectral deviation {worst_dev:.3} dB"))?;
    Ok(format!(
        "{} class targets: max |difference| {worst_diff:.3} dB (tol {FIXED_POINT_DIFF_DB}), max spectral deviation {worst_dev:.3} dB (tol {FIXED_POINT_DEVIATION_DB})",
        bank.len()
    ))
}

fn criterion_9() -> Outcome {
    let row = |v: [f64; PARAM_COUNT]| ValueGrid::new(vec![1, PARAM_COUNT], v.to_vec()).unwrap();
    let mut inside = [0.0; PARAM_COUNT];
    for (i, v) in inside.iter_mut().enumerate() {
        *v = i as f64 / 9.0;
    }
    let (l, g) = penalty_loss(&row(inside)).unwrap();
    check(l == 0.0 && g.values.iter().all(|x| *x == 0.0), format!("in-range penalty {l}"))?;
    let mut high = [0.5; PARAM_COUNT];
    high[3] = 1.2;
    let (l, g) = penalty_loss(&row(high)).unwrap();
    check((l - 0.2).abs() <= PENALTY_TOL + 1e-16, format!("1.2 -> {l}"))?;
    check(g.values[3] == 1.0 && g.values.iter().filter(|x| **x != 0.0).count() == 1, "gradient above 1".into())?;
    let mut low = [0.5; PARAM_COUNT];
    low[8] = -0.3;
    let (l, g) = penalty_loss(&row(low)).unwrap();
    check((l - 0.3).abs() <= PENALTY_TOL, format!("-0.3 -> {l}"))?;
    check(g.values[8] == -1.0 && g.values.iter().filter(|x| **x != 0.0).count() == 1, "gradient below 0".into())?;
    // boundaries count as inside
    let (l, g) = penalty_loss(&row([0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0])).unwrap();
    check(l == 0.0 && g.values.iter().all(|x| *x == 0.0), "boundary values penalized".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10_000 {
        let v: [f64; PARAM_COUNT] = std::array::from_fn(|_| rng.gen_range(-2.0..3.0));
        let (_, g) = penalty_loss(&row(v)).unwrap();
        for (x, d) in v.iter().zip(&g.values) {
            let expect = if *x > 1.0 { 1.0 } else if *x < 0.0 { -1.0 } else { 0.0 };
            check(*d == expect, format!("gradient {d} at {x}"))?;
        }
    }
    Ok("examples exact (0, 0.2, 0.3); gradient +1 above, -1 below, 0 inside on 10^4 random vectors".into())
}

fn autoeq_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_autoeq"))
}

fn run_cli(args: &[&str], threads: usize) -> Result<(), String> {
    let out = autoeq_bin()
        .args(args)
        .arg("--threads")
        .arg(threads.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`autoeq {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

/// Every artifact-producing command in sequence inside `dir`.
fn cli_session(dir: &Path, threads: usize) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| dir.join(name).display().to_string();
    let corpus = p("corpus");
    let manifest = p("corpus/manifest.csv");
    let steps: Vec<Vec<String>> = vec![
        vec!["demo-corpus", "--out-dir", &corpus, "--per-class", "3", "--seed", "4", "--duration", "1.0"],
        vec!["targets", "build", "--manifest", &manifest, "--out", &p("bank.bin"), "--csv", &p("bank.csv")],
        vec!["gen-data", "--kind", "synthetic", "--n", "600", "--seed", "7", "--out", &p("syn.bin"), "--csv", &p("syn.csv")],
        vec!["gen-data", "--kind", "synthetic", "--n", "100", "--seed", "8", "--out", &p("test.bin")],
        vec!["gen-data", "--kind", "realworld", "--manifest", &manifest, "--bank", &p("bank.bin"), "--k", "4", "--out", &p("rw.bin")],
        vec!["train", "--arch", "cnn", "--stage", "base", "--data", &p("syn.bin"), "--test", &p("test.bin"), "--out-ckpt", &p("base.ckpt"), "--epochs", "2", "--batch-size", "64", "--lr", "1e-3"],
        vec!["train", "--stage", "finetune", "--in-ckpt", &p("base.ckpt"), "--data", &p("rw.bin"), "--out-ckpt", &p("ft.ckpt"), "--epochs", "1", "--batch-size", "32"],
        vec!["eval", "--ckpt", &p("ft.ckpt"), "--data", &p("test.bin"), "--out", &p("eval.json")],
        vec!["plot-data", "--out-dir", &p("plots"), "--bank", &p("bank.bin"), "--ckpt", &p("ft.ckpt"), "--data", &p("rw.bin")],
        vec!["autoeq", "--input", &p("corpus/vocal_0001.wav"), "--bank", &p("bank.bin"), "--ckpt", &p("ft.ckpt"), "--out", &p("out.wav")],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for s in &steps {
        run_cli(&s.iter().map(String::as_str).collect::<Vec<_>>(), threads)?;
    }
    // a curve for `match`
    std::fs::copy(dir.join("out.wav.diagnostics.csv"), dir.join("diag.csv")).map_err(|e| e.to_string())?;
    let diag = std::fs::read_to_string(dir.join("diag.csv")).map_err(|e| e.to_string())?;
    let curve: String = std::iter::once("freq_hz,value_db".to_string())
        .chain(diag.lines().skip(1).map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!("{},{}", f[0], f[1])
        }))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(dir.join("curve.csv"), curve + "\n").map_err(|e| e.to_string())?;
    run_cli(
        &["match", "--curve", &p("curve.csv"), "--ckpt", &p("ft.ckpt"), "--out-settings", &p("m.txt"), "--out-response", &p("m.csv")],
        threads,
    )?;

    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let path = e.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with(".manifest.json") {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&path).map_err(|e| e.to_string())?));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let one = cli_session(a.path(), 1)?;
    let four = cli_session(b.path(), 4)?;
    let names = |v: &[(String, Vec<u8>)]| v.iter().map(|f| f.0.clone()).collect::<Vec<_>>();
    check(names(&one) == names(&four), "different file sets".into())?;
    let differing: Vec<&str> = one.iter().zip(&four).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();
    check(differing.is_empty(), format!("outputs differ: {}", differing.join(", ")))?;
    let manifests = std::fs::read_dir(a.path())
        .map_err(|e| e.to_string())?
        .filter(|e| e.as_ref().is_ok_and(|e| e.path().to_string_lossy().ends_with(".manifest.json")))
        .count();
    check(manifests >= 8, format!("only {manifests} run manifests"))?;
    Ok(format!("{} artifacts byte-identical between --threads 1 and --threads 4", one.len()))
}

fn main() {
    let mut trained = None;
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match &outcome {
            Ok(m) => println!("[PASS] {n:>2} {name}: {m}"),
            Err(m) => println!("[FAIL] {n:>2} {name}: {m}"),
        }
        results.push((n, name, outcome));
    };
    run(1, "filter-response oracle equivalence", &mut criterion_1);
    run(2, "differentiable-path consistency", &mut criterion_2);
    run(3, "time-domain/design consistency", &mut criterion_3);
    run(4, "normalization round trip", &mut criterion_4);
    run(5, "sampler statistics", &mut criterion_5);
    run(6, "training trends at desk scale", &mut || criterion_6(&mut trained));
    run(7, "CNN flatten width", &mut criterion_7);
    run(8, "pipeline zero-difference fixed point", &mut || criterion_8(&trained));
    run(9, "penalty-loss exactness", &mut criterion_9);
    run(10, "CLI determinism", &mut criterion_10);
    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
