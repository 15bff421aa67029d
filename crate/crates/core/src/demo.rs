//! A small synthetic stand-in for a labeled instrument corpus.
//!
//! Each class has a characteristic spectral envelope; pitched classes add a
//! harmonic comb at a random fundamental. Every sample also gets a random
//! "production" EQ, drawn like the synthetic training settings, applied in the
//! time domain. Audio is built by inverse FFT from a magnitude spectrum with
//! random phases.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::audio::Audio;
use crate::corpus::{write_manifest, CorpusEntry};
use crate::datagen::{index_rng, sample_random_settings};
use crate::eq::{process_audio, EqSettings, PeakDesign};
use crate::error::{Error, Result};
use crate::spectrum::{measure_spectrum, zero_mean, LogFrequencyGrid, SpectrumDb, StftConfig, GRID_LEN};

pub const DEMO_CLASSES: [&str; 5] = ["bass", "guitar", "hihat", "snare", "vocal"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoConfig {
    pub duration_s: f64,
    /// Every other sample is rendered at 48 kHz instead of 44.1 kHz.
    pub mixed_rates: bool,
    /// Scales the production EQ gains; 0 disables it.
    pub production_gain_scale: f64,
    /// Per-sample spectral tilt is drawn from ±this many dB per octave.
    pub tilt_db_per_octave: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            duration_s: 1.5,
            mixed_rates: true,
            production_gain_scale: 0.5,
            tilt_db_per_octave: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoItem {
    pub class: String,
    pub audio: Audio,
    /// The random EQ baked into the sample.
    pub production_eq: EqSettings,
}

fn lowpass(f: f64, fc: f64, order: i32) -> f64 {
    -10.0 * (1.0 + (f / fc).powi(2 * order)).log10()
}

fn highpass(f: f64, fc: f64, order: i32) -> f64 {
    -10.0 * (1.0 + (fc / f).powi(2 * order)).log10()
}

fn bump(f: f64, fc: f64, gain_db: f64, width_oct: f64) -> f64 {
    gain_db * (-0.5 * ((f / fc).log2() / width_oct).powi(2)).exp()
}

/// Envelope in dB and fundamental range (Hz) of a class; `None` range means
/// unpitched.
fn class_shape(class: &str) -> Result<(fn(f64) -> f64, Option<(f64, f64)>)> {
    let shape: (fn(f64) -> f64, Option<(f64, f64)>) = match class {
        "bass" => (|f| highpass(f, 35.0, 2) + lowpass(f, 250.0, 2) + bump(f, 80.0, 6.0, 0.5), Some((41.0, 98.0))),
        "guitar" => (
            |f| highpass(f, 90.0, 2) + lowpass(f, 4000.0, 2) + bump(f, 250.0, 4.0, 0.7) + bump(f, 2500.0, 5.0, 0.5),
            Some((82.0, 330.0)),
        ),
        "hihat" => (|f| highpass(f, 6000.0, 3) + lowpass(f, 18_000.0, 2) + bump(f, 10_000.0, 6.0, 0.4), None),
        "snare" => (
            |f| highpass(f, 120.0, 2) + lowpass(f, 9000.0, 1) + bump(f, 200.0, 10.0, 0.3) + bump(f, 4000.0, 4.0, 1.0),
            None,
        ),
        "vocal" => (
            |f| {
                highpass(f, 100.0, 2)
                    + lowpass(f, 5000.0, 2)
                    + bump(f, 500.0, 10.0, 0.4)
                    + bump(f, 1500.0, 8.0, 0.4)
                    + bump(f, 2800.0, 6.0, 0.4)
            },
            Some((110.0, 330.0)),
        ),
        other => return Err(Error::UnknownClass(other.to_string())),
    };
    Ok(shape)
}

/// Real signal of `frames` samples whose magnitude spectrum follows
/// `mag_db(f)`, with uniformly random phases.
fn synth_from_magnitude<R: Rng>(frames: usize, fs: f64, rng: &mut R, mag_db: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = frames;
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..=n / 2 {
        let f = k as f64 * fs / n as f64;
        let a = 10f64.powf(mag_db(f).max(-120.0) / 20.0);
        let phase = rng.gen_range(0.0..2.0 * PI);
        spec[k] = Complex64::from_polar(a, phase);
        if k != n - k {
            spec[n - k] = spec[k].conj();
        } else {
            spec[k] = Complex64::new(spec[k].re, 0.0);
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let x: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.into_iter().map(|v| 0.5 * v / peak.max(f64::MIN_POSITIVE)).collect()
}

/// Sample `index` of `class`, determined by `(seed, index)`.
pub fn demo_sample(class: &str, seed: u64, index: u64, cfg: &DemoConfig) -> Result<DemoItem> {
    let (envelope, pitch) = class_shape(class)?;
    let class_no = DEMO_CLASSES.iter().position(|c| *c == class).unwrap_or(0) as u64;
    let mut rng = index_rng(seed ^ (class_no + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15), index);
    let fs: u32 = if cfg.mixed_rates && index % 2 == 1 { 48_000 } else { 44_100 };
    let frames = ((cfg.duration_s * fs as f64).round() as usize).max(4096) & !1;
    let tilt = rng.gen_range(-1.0..=1.0) * cfg.tilt_db_per_octave;
    let f0 = pitch.map(|(lo, hi)| lo * (hi / lo).powf(rng.gen::<f64>()));
    let mut production_eq = sample_random_settings(&mut rng);
    for b in &mut production_eq.bands {
        b.gain_db *= cfg.production_gain_scale;
    }
    let samples = synth_from_magnitude(frames, fs as f64, &mut rng, |f| {
        let mut db = envelope(f) + tilt * (f / 1000.0).log2();
        if let Some(f0) = f0 {
            let h = (f / f0).round().max(1.0);
            let d = (f - h * f0) / (0.01 * f0 + 2.0);
            db += 20.0 * (0.05 + (-0.5 * d * d).exp()).log10();
        }
        db
    });
    let dry = Audio::mono(fs, samples);
    let audio = process_audio(&dry, &production_eq, PeakDesign::Cookbook)?.peak_normalized();
    Ok(DemoItem {
        class: class.to_string(),
        audio,
        production_eq,
    })
}

/// `per_class` samples of every demo class, class-major order.
pub fn demo_corpus(per_class: usize, seed: u64, cfg: &DemoConfig) -> Result<Vec<DemoItem>> {
    let jobs: Vec<(&str, u64)> = DEMO_CLASSES
        .iter()
        .flat_map(|c| (0..per_class as u64).map(move |i| (*c, i)))
        .collect();
    jobs.par_iter().map(|(c, i)| demo_sample(c, seed, *i, cfg)).collect()
}

/// Writes `<class>_<index>.wav` files and `manifest.csv` into `dir`.
pub fn write_demo_corpus(dir: &Path, per_class: usize, seed: u64, cfg: &DemoConfig) -> Result<Vec<CorpusEntry>> {
    std::fs::create_dir_all(dir)?;
    let items = demo_corpus(per_class, seed, cfg)?;
    let entries: Vec<CorpusEntry> = items
        .iter()
        .enumerate()
        .map(|(i, it)| CorpusEntry {
            path: dir.join(format!("{}_{:04}.wav", it.class, i % per_class.max(1))),
            class: it.class.clone(),
        })
        .collect();
    items
        .par_iter()
        .zip(&entries)
        .try_for_each(|(it, e)| it.audio.write_wav(&e.path))?;
    write_manifest(&entries, dir, std::fs::File::create(dir.join("manifest.csv"))?)?;
    Ok(entries)
}

/// Noise whose measured time-averaged spectrum follows `target` on the
/// analysis grid, up to a constant offset.
///
/// The magnitude is refined `refinements` times by feeding the measured
/// error back into the synthesis, which compensates the analysis window's
/// smearing at low frequencies. Each bin's step halves whenever its error
/// changes sign, and the best of all rounds is returned. Outside the grid the
/// end values are held.
pub fn matching_noise(target: &SpectrumDb, sample_rate: u32, duration_s: f64, seed: u64, refinements: usize) -> Result<Audio> {
    let grid = LogFrequencyGrid::canonical();
    let logf: Vec<f64> = grid.freqs().iter().map(|f| f.ln()).collect();
    let interp = |vals: &[f64], f: f64| -> f64 {
        let lf = f.ln();
        if lf <= logf[0] {
            return vals[0];
        }
        let i = logf.partition_point(|x| *x < lf);
        if i >= logf.len() {
            return vals[vals.len() - 1];
        }
        let t = (lf - logf[i - 1]) / (logf[i] - logf[i - 1]);
        vals[i - 1] + t * (vals[i] - vals[i - 1])
    };
    let frames = ((duration_s * sample_rate as f64).round() as usize).max(4096) & !1;
    let mut shape = target.values().to_vec();
    let render = |shape: &[f64]| {
        let mut rng = index_rng(seed, 0);
        Audio::mono(sample_rate, synth_from_magnitude(frames, sample_rate as f64, &mut rng, |f| interp(shape, f)))
    };
    let mut audio = render(&shape);
    // per-bin steps shrink where the error changes sign; low bins share few
    // FFT bins and overshoot with a full step
    let mut step = vec![1.0f64; GRID_LEN];
    let mut prev = vec![0.0f64; GRID_LEN];
    let mut best: Option<(f64, Audio)> = None;
    for round in 0..=refinements {
        let measured = measure_spectrum(&audio, StftConfig::default())?;
        let err = zero_mean(&target.sub(&measured));
        let worst = err.max_abs();
        if best.as_ref().map_or(true, |(w, _)| worst < *w) {
            best = Some((worst, audio.clone()));
        }
        if round == refinements {
            break;
        }
        for i in 0..GRID_LEN {
            let e = err.values()[i];
            step[i] = if e * prev[i] < 0.0 { step[i] * 0.5 } else { (step[i] * 1.5).min(1.0) };
            shape[i] += step[i] * e;
            prev[i] = e;
        }
        audio = render(&shape);
    }
    Ok(best.expect("at least one round").1)
}
