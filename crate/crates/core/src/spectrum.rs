//! Spectral analysis on the canonical 256-bin log-frequency grid.
//!
//! Everything downstream (targets, difference curves, filter responses, model
//! inputs) is a [`SpectrumDb`] on [`LogFrequencyGrid::canonical`].

use std::io::{Read, Write};
use std::ops::Index;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use sha2::{Digest, Sha256};

use crate::audio::{Audio, ANALYSIS_RATE};
use crate::error::{Error, Result};

pub const GRID_LEN: usize = 256;
pub const GRID_MIN_HZ: f64 = 20.0;
pub const GRID_MAX_HZ: f64 = 22_000.0;

/// Magnitudes are floored here before taking 20·log10 (-160 dB).
pub const MAG_FLOOR: f64 = 1e-8;
pub const DB_FLOOR: f64 = -160.0;

pub const DEFAULT_SMOOTH_SIGMA: f64 = 3.0;
pub const DEFAULT_LIMIT_DB: f64 = 12.0;

/// 256 log-spaced frequencies from 20 Hz to 22 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFrequencyGrid {
    freqs_hz: Vec<f64>,
}

impl LogFrequencyGrid {
    fn build() -> Self {
        let lo = GRID_MIN_HZ.ln();
        let step = (GRID_MAX_HZ.ln() - lo) / (GRID_LEN - 1) as f64;
        let mut freqs_hz: Vec<f64> = (0..GRID_LEN).map(|i| (lo + step * i as f64).exp()).collect();
        freqs_hz[0] = GRID_MIN_HZ;
        freqs_hz[GRID_LEN - 1] = GRID_MAX_HZ;
        LogFrequencyGrid { freqs_hz }
    }

    pub fn canonical() -> &'static LogFrequencyGrid {
        static GRID: OnceLock<LogFrequencyGrid> = OnceLock::new();
        GRID.get_or_init(Self::build)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    /// Stable 64-bit fingerprint of the grid, stored in file headers.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for f in &self.freqs_hz {
            h.update(f.to_le_bytes());
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
    }

    /// Index of the grid bin closest to `hz` in log distance.
    pub fn nearest_bin(&self, hz: f64) -> usize {
        let target = hz.ln();
        let mut best = 0;
        for (i, f) in self.freqs_hz.iter().enumerate() {
            if (f.ln() - target).abs() < (self.freqs_hz[best].ln() - target).abs() {
                best = i;
            }
        }
        best
    }
}

/// dB values aligned to the canonical grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDb(Vec<f64>);

impl SpectrumDb {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != GRID_LEN {
            return Err(Error::Shape(format!(
                "spectrum needs {GRID_LEN} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("spectrum bin {i} is {}", values[i])));
        }
        Ok(SpectrumDb(values))
    }

    pub fn zeros() -> Self {
        SpectrumDb(vec![0.0; GRID_LEN])
    }

    pub fn constant(db: f64) -> Self {
        SpectrumDb(vec![db; GRID_LEN])
    }

    /// Curve whose bin `i` holds `f(i)`.
    pub fn from_fn(f: impl FnMut(usize) -> f64) -> Self {
        SpectrumDb((0..GRID_LEN).map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / GRID_LEN as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Mean absolute difference in dB.
    pub fn mean_abs_diff(&self, other: &SpectrumDb) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / GRID_LEN as f64
    }

    pub fn sub(&self, other: &SpectrumDb) -> SpectrumDb {
        SpectrumDb(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &SpectrumDb) -> SpectrumDb {
        SpectrumDb(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, k: f64) -> SpectrumDb {
        SpectrumDb(self.0.iter().map(|v| v * k).collect())
    }

    /// Writes `freq_hz,value_db` CSV with 9 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["freq_hz", "value_db"])?;
        for (f, v) in LogFrequencyGrid::canonical().freqs().iter().zip(&self.0) {
            out.write_record([fmt_sig9(*f), fmt_sig9(*v)])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["freq_hz", "value_db"] {
            return Err(Error::format("spectrum csv", "header must be `freq_hz,value_db`"));
        }
        let grid = LogFrequencyGrid::canonical();
        let mut values = Vec::with_capacity(GRID_LEN);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::format("spectrum csv", format!("row {}: {e}", i + 1)))
            };
            let f = parse(&rec[0])?;
            let v = parse(&rec[1])?;
            if let Some(expect) = grid.freqs().get(i) {
                if ((f - expect) / expect).abs() > 1e-6 {
                    return Err(Error::format(
                        "spectrum csv",
                        format!("row {}: frequency {f} is not on the canonical grid ({expect})", i + 1),
                    ));
                }
            }
            values.push(v);
        }
        SpectrumDb::new(values)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

impl Index<usize> for SpectrumDb {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for SpectrumDb {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Formats with 9 significant digits.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-4..1e9).contains(&a) {
        return format!("{v:.8e}");
    }
    let mag = a.log10().floor() as i32;
    let decimals = (8 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Zero-meaned, smoothed, amplitude-limited `target - measured` curve.
/// This is the matching model's input.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceCurve(SpectrumDb);

impl DifferenceCurve {
    pub const MEAN_TOL: f64 = 1e-6;

    /// Accepts an existing curve if it satisfies the zero-mean and limit invariants.
    pub fn try_from_spectrum(s: SpectrumDb, limit_db: f64) -> Result<Self> {
        let mean = s.mean();
        if mean.abs() > Self::MEAN_TOL {
            return Err(Error::OutOfRange(format!("difference curve mean {mean} is not zero")));
        }
        if s.max_abs() > limit_db + 1e-9 {
            return Err(Error::OutOfRange(format!(
                "difference curve peak {} exceeds {limit_db} dB",
                s.max_abs()
            )));
        }
        Ok(DifferenceCurve(s))
    }

    pub fn curve(&self) -> &SpectrumDb {
        &self.0
    }

    pub fn into_spectrum(self) -> SpectrumDb {
        self.0
    }
}

impl std::ops::Deref for DifferenceCurve {
    type Target = SpectrumDb;
    fn deref(&self) -> &SpectrumDb {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
}

impl StftConfig {
    pub fn new(window_len: usize) -> Self {
        StftConfig {
            window_len,
            hop: window_len / 2,
        }
    }

    pub fn frame_count(&self, n: usize) -> usize {
        if n < self.window_len {
            0
        } else {
            (n - self.window_len) / self.hop + 1
        }
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig::new(2048)
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Frequencies of the `window_len / 2 + 1` one-sided FFT bins.
pub fn fft_freqs(window_len: usize, sample_rate: f64) -> Vec<f64> {
    (0..=window_len / 2)
        .map(|k| k as f64 * sample_rate / window_len as f64)
        .collect()
}

fn fft_plan(len: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(len)
}

/// Magnitude STFT in dB, one vector of `window_len / 2 + 1` bins per frame.
pub fn stft_mag_db(samples: &[f64], sample_rate: f64, cfg: StftConfig) -> Result<Vec<Vec<f64>>> {
    if !(sample_rate > 0.0) {
        return Err(Error::OutOfRange(format!("sample rate {sample_rate}")));
    }
    if cfg.hop == 0 || cfg.window_len == 0 {
        return Err(Error::OutOfRange("stft window and hop must be positive".into()));
    }
    if samples.len() < cfg.window_len {
        return Err(Error::InsufficientAudio {
            got: samples.len(),
            need: cfg.window_len,
        });
    }
    let window = hann(cfg.window_len);
    let fft = fft_plan(cfg.window_len);
    let bins = cfg.window_len / 2 + 1;
    let frames = (0..cfg.frame_count(samples.len()))
        .into_par_iter()
        .map_init(
            || {
                (
                    vec![Complex::new(0.0, 0.0); cfg.window_len],
                    vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), t| {
                let start = t * cfg.hop;
                for ((b, x), w) in buf.iter_mut().zip(&samples[start..]).zip(&window) {
                    *b = Complex::new(x * w, 0.0);
                }
                fft.process_with_scratch(buf, scratch);
                buf[..bins]
                    .iter()
                    .map(|c| 20.0 * c.norm().max(MAG_FLOOR).log10())
                    .collect::<Vec<f64>>()
            },
        )
        .collect();
    Ok(frames)
}

/// Linear interpolation of a linear-frequency frame onto the grid. Grid
/// frequencies beyond the last FFT bin take the last bin's value.
pub fn to_log_grid(frame: &[f64], fft_freqs: &[f64], grid: &LogFrequencyGrid) -> SpectrumDb {
    assert_eq!(frame.len(), fft_freqs.len(), "frame and frequency axis differ in length");
    let last = fft_freqs.len() - 1;
    SpectrumDb(
        grid.freqs()
            .iter()
            .map(|&f| {
                if f >= fft_freqs[last] {
                    return frame[last];
                }
                if f <= fft_freqs[0] {
                    return frame[0];
                }
                // first bin with freq > f; f lies in [hi - 1, hi)
                let hi = fft_freqs.partition_point(|&x| x <= f);
                let lo = hi - 1;
                let t = (f - fft_freqs[lo]) / (fft_freqs[hi] - fft_freqs[lo]);
                frame[lo] + t * (frame[hi] - frame[lo])
            })
            .collect(),
    )
}

/// Sum that does not depend on the order of its inputs.
pub(crate) fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Per-bin arithmetic mean in the dB domain. The result does not depend on
/// frame order.
pub fn average_spectrum(frames: &[SpectrumDb]) -> Result<SpectrumDb> {
    if frames.is_empty() {
        return Err(Error::Empty("no frames to average"));
    }
    let n = frames.len() as f64;
    let mut column = Vec::with_capacity(frames.len());
    Ok(SpectrumDb::from_fn(|i| {
        column.clear();
        column.extend(frames.iter().map(|f| f.0[i]));
        order_free_sum(&mut column) / n
    }))
}

pub fn zero_mean(s: &SpectrumDb) -> SpectrumDb {
    let m = s.mean();
    SpectrumDb(s.0.iter().map(|v| v - m).collect())
}

/// Unit-sum Gaussian kernel truncated at radius ceil(4σ); index `r` is the centre.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

/// Gaussian smoothing across bins with edge replication at both ends.
pub fn gaussian_smooth(s: &SpectrumDb, sigma: f64) -> SpectrumDb {
    assert!(sigma > 0.0, "smoothing sigma must be positive");
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let last = GRID_LEN as isize - 1;
    SpectrumDb::from_fn(|i| {
        kernel
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let idx = (i as isize + j as isize - radius).clamp(0, last);
                w * s.0[idx as usize]
            })
            .sum()
    })
}

/// `target - measured`, smoothed, zero-meaned, then scaled down so the peak
/// magnitude does not exceed `limit_db`.
pub fn spectral_difference(
    target: &SpectrumDb,
    measured: &SpectrumDb,
    sigma: f64,
    limit_db: f64,
) -> DifferenceCurve {
    assert!(limit_db > 0.0, "limit must be positive");
    let raw = target.sub(measured);
    let centred = zero_mean(&gaussian_smooth(&raw, sigma));
    let peak = centred.max_abs();
    let limited = if peak > limit_db {
        centred.scale(limit_db / peak)
    } else {
        centred
    };
    DifferenceCurve(limited)
}

/// Time-averaged spectrum of an audio clip on the canonical grid.
///
/// The clip is downmixed to mono and analysed at 44.1 kHz.
pub fn measure_spectrum(audio: &Audio, cfg: StftConfig) -> Result<SpectrumDb> {
    let mono = audio.to_mono();
    let analysed = mono.resampled(ANALYSIS_RATE)?;
    let rate = analysed.sample_rate as f64;
    let frames = stft_mag_db(&analysed.channels[0], rate, cfg)?;
    let freqs = fft_freqs(cfg.window_len, rate);
    let grid = LogFrequencyGrid::canonical();
    let on_grid: Vec<SpectrumDb> = frames.iter().map(|f| to_log_grid(f, &freqs, grid)).collect();
    average_spectrum(&on_grid)
}
