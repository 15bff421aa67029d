//! Training data: random EQ curves with their parameters, and spectral
//! difference curves from labeled audio with neighbour-class augmentation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::audio::ANALYSIS_RATE;
use crate::binio::{read_f64s, read_header, read_str, write_f64s, write_header, write_str};
use crate::corpus::MeasuredSample;
use crate::eq::{
    cascade_response_db, normalize_params, BandParams, EqSettings, NormalizedParams, BAND_RANGES, PARAM_COUNT,
};
use crate::error::{Error, Result};
use crate::spectrum::{
    fmt_sig9, gaussian_smooth, spectral_difference, zero_mean, LogFrequencyGrid, SpectrumDb, DEFAULT_LIMIT_DB,
    DEFAULT_SMOOTH_SIGMA, GRID_LEN,
};
use crate::targets::TargetBank;

pub const DATASET_MAGIC: &[u8; 8] = b"AEQDATA\0";
pub const DATASET_VERSION: u32 = 1;
const WHAT: &str = "dataset";
const NONE_INDEX: u32 = u32::MAX;

/// Band `idx` from uniform draws: log-uniform frequency, cubed gain
/// magnitude with the given sign, and (peaks only) uniform Q.
pub fn band_from_draws(idx: usize, x_freq: f64, x_gain: f64, negative: bool, x_q: f64) -> BandParams {
    let r = &BAND_RANGES[idx];
    let sign = if negative { -1.0 } else { 1.0 };
    BandParams {
        kind: r.kind,
        freq_hz: r.f_min * (r.f_max / r.f_min).powf(x_freq),
        gain_db: x_gain.powi(3) * r.g_max * sign,
        q: if r.q_is_fixed() {
            r.q_min
        } else {
            r.q_min + x_q * (r.q_max - r.q_min)
        },
    }
}

pub fn sample_random_settings<R: Rng + ?Sized>(rng: &mut R) -> EqSettings {
    let bands = std::array::from_fn(|i| {
        let x_freq: f64 = rng.gen();
        let x_gain: f64 = rng.gen();
        let negative: bool = rng.gen();
        let x_q: f64 = rng.gen();
        band_from_draws(i, x_freq, x_gain, negative, x_q)
    });
    EqSettings { bands }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Standard deviation of the additive per-bin Gaussian noise.
    pub amplitude_db: f64,
    /// Gaussian smoothing applied after the noise; 0 disables it.
    pub post_smooth_sigma: f64,
    /// Subtract the mean so curves follow the difference-curve convention.
    pub zero_mean: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            amplitude_db: 0.25,
            post_smooth_sigma: 0.0,
            zero_mean: true,
        }
    }
}

impl NoiseConfig {
    /// Noise-free curves that equal the clean response exactly.
    pub fn clean() -> Self {
        NoiseConfig {
            amplitude_db: 0.0,
            post_smooth_sigma: 0.0,
            zero_mean: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude_db >= 0.0 && self.amplitude_db.is_finite())
            || !(self.post_smooth_sigma >= 0.0 && self.post_smooth_sigma.is_finite())
        {
            return Err(Error::OutOfRange(format!("noise config {self:?}")));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!(
            "amplitude_db={};post_smooth_sigma={};zero_mean={}",
            self.amplitude_db, self.post_smooth_sigma, self.zero_mean
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub curve: SpectrumDb,
    pub target_params: NormalizedParams,
    pub clean_response: SpectrumDb,
}

pub fn synth_sample<R: Rng + ?Sized>(settings: &EqSettings, noise: &NoiseConfig, rng: &mut R) -> Result<SyntheticSample> {
    noise.validate()?;
    let target_params = normalize_params(settings)?;
    let clean_response = cascade_response_db(settings, LogFrequencyGrid::canonical(), ANALYSIS_RATE as f64)?;
    let mut curve = clean_response.clone();
    if noise.amplitude_db > 0.0 {
        let n = Normal::new(0.0, noise.amplitude_db).expect("validated std");
        let noisy = curve.values().iter().map(|v| v + n.sample(rng)).collect();
        curve = SpectrumDb::new(noisy)?;
    }
    if noise.post_smooth_sigma > 0.0 {
        curve = gaussian_smooth(&curve, noise.post_smooth_sigma);
    }
    if noise.zero_mean {
        curve = zero_mean(&curve);
    }
    Ok(SyntheticSample {
        curve,
        target_params,
        clean_response,
    })
}

/// Generator for sample `index` of a dataset seeded with `seed`.
pub fn index_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    RealWorld,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Synthetic => "synthetic",
            DatasetKind::RealWorld => "realworld",
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(DatasetKind::Synthetic),
            "realworld" => Ok(DatasetKind::RealWorld),
            _ => Err(Error::OutOfRange(format!("unknown dataset kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub curve: SpectrumDb,
    /// Generating parameters (synthetic data only).
    pub params: Option<NormalizedParams>,
    pub source_id: Option<String>,
    /// Class whose target formed the difference (real-world data only).
    pub target_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub seed: u64,
    /// Free-form description of the generation settings.
    pub config: String,
    pub records: Vec<Record>,
}

/// `n` synthetic samples; sample `i` depends only on `(seed, i)`.
pub fn build_synthetic_dataset(n: usize, noise: &NoiseConfig, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty("synthetic dataset needs at least one sample"));
    }
    noise.validate()?;
    let records = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = index_rng(seed, i as u64);
            let settings = sample_random_settings(&mut rng);
            let s = synth_sample(&settings, noise, &mut rng)?;
            Ok(Record {
                curve: s.curve,
                params: Some(s.target_params),
                source_id: None,
                target_class: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        kind: DatasetKind::Synthetic,
        seed,
        config: noise.describe(),
        records,
    })
}

/// Per sample, one difference curve against its own class target followed by
/// `k_neighbors` curves against the nearest other classes.
pub fn build_realworld_dataset(
    samples: &[MeasuredSample],
    bank: &TargetBank,
    k_neighbors: usize,
    sigma: f64,
    limit_db: f64,
) -> Result<Dataset> {
    if samples.is_empty() {
        return Err(Error::Empty("real-world dataset needs at least one sample"));
    }
    let unknown: Vec<String> = samples
        .iter()
        .filter(|s| bank.get(&s.class).is_err())
        .map(|s| format!("{} ({})", s.source_id, s.class))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownLabels(unknown));
    }
    let mut neighbours: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for s in samples {
        if !neighbours.contains_key(s.class.as_str()) {
            neighbours.insert(&s.class, bank.nearest_classes(&s.class, k_neighbors)?);
        }
    }
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let classes = std::iter::once(&s.class).chain(&neighbours[s.class.as_str()]);
            classes
                .map(|c| {
                    let d = spectral_difference(bank.target(c)?, &s.spectrum, sigma, limit_db);
                    Ok(Record {
                        curve: d.into_spectrum(),
                        params: None,
                        source_id: Some(s.source_id.clone()),
                        target_class: Some(c.clone()),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        kind: DatasetKind::RealWorld,
        seed: 0,
        config: format!("k_neighbors={k_neighbors};sigma={sigma};limit_db={limit_db}"),
        records: per_sample.into_iter().flatten().collect(),
    })
}

/// Real-world dataset with the default smoothing and limit.
pub fn build_realworld_dataset_default(samples: &[MeasuredSample], bank: &TargetBank, k: usize) -> Result<Dataset> {
    build_realworld_dataset(samples, bank, k, DEFAULT_SMOOTH_SIGMA, DEFAULT_LIMIT_DB)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn curves(&self) -> Vec<SpectrumDb> {
        self.records.iter().map(|r| r.curve.clone()).collect()
    }

    /// Generating parameters of every record; errors if any is missing.
    pub fn params(&self) -> Result<Vec<NormalizedParams>> {
        self.records
            .iter()
            .map(|r| r.params.ok_or_else(|| Error::format(WHAT, "records carry no parameter targets")))
            .collect()
    }

    /// Binary layout, little-endian:
    ///
    /// ```text
    /// magic "AEQDATA\0", u32 version, u8 kind (0 synthetic, 1 realworld),
    /// u64 count, u64 grid fingerprint, u64 seed, config string,
    /// source table (u32 n + strings), class table (u32 n + strings),
    /// count × record: 256 f64 curve, 10 f64 params (NaN when absent),
    ///                 u32 source index, u32 class index (u32::MAX when absent)
    /// ```
    /// Strings are u32 length + utf-8; tables are in first-use order.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut sources = Table::default();
        let mut classes = Table::default();
        let idx: Vec<(u32, u32)> = self
            .records
            .iter()
            .map(|r| (sources.index(r.source_id.as_deref()), classes.index(r.target_class.as_deref())))
            .collect();
        write_header(w, DATASET_MAGIC, DATASET_VERSION)?;
        w.write_u8(match self.kind {
            DatasetKind::Synthetic => 0,
            DatasetKind::RealWorld => 1,
        })?;
        w.write_u64::<LE>(self.records.len() as u64)?;
        w.write_u64::<LE>(LogFrequencyGrid::canonical().fingerprint())?;
        w.write_u64::<LE>(self.seed)?;
        write_str(w, &self.config)?;
        for t in [&sources, &classes] {
            w.write_u32::<LE>(t.names.len() as u32)?;
            for n in &t.names {
                write_str(w, n)?;
            }
        }
        for (r, (si, ci)) in self.records.iter().zip(idx) {
            write_f64s(w, r.curve.values())?;
            match &r.params {
                Some(p) => write_f64s(w, &p.0)?,
                None => write_f64s(w, &[f64::NAN; PARAM_COUNT])?,
            }
            w.write_u32::<LE>(si)?;
            w.write_u32::<LE>(ci)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let version = read_header(r, DATASET_MAGIC, WHAT)?;
        if version != DATASET_VERSION {
            return Err(Error::format(WHAT, format!("unsupported version {version}")));
        }
        let kind = match r.read_u8()? {
            0 => DatasetKind::Synthetic,
            1 => DatasetKind::RealWorld,
            k => return Err(Error::format(WHAT, format!("kind tag {k}"))),
        };
        let count = r.read_u64::<LE>()?;
        if r.read_u64::<LE>()? != LogFrequencyGrid::canonical().fingerprint() {
            return Err(Error::format(WHAT, "frequency grid differs from this build"));
        }
        let seed = r.read_u64::<LE>()?;
        let config = read_str(r, WHAT)?;
        let mut tables = Vec::new();
        for _ in 0..2 {
            let n = r.read_u32::<LE>()?;
            tables.push((0..n).map(|_| read_str(r, WHAT)).collect::<Result<Vec<_>>>()?);
        }
        let lookup = |t: &Vec<String>, i: u32| -> Result<Option<String>> {
            match i {
                NONE_INDEX => Ok(None),
                i => t
                    .get(i as usize)
                    .cloned()
                    .map(Some)
                    .ok_or_else(|| Error::format(WHAT, format!("string index {i} out of range"))),
            }
        };
        let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            let curve = SpectrumDb::new(read_f64s(r, GRID_LEN)?)?;
            let p = read_f64s(r, PARAM_COUNT)?;
            let params = if p.iter().all(|v| v.is_nan()) {
                None
            } else {
                Some(NormalizedParams(p.try_into().expect("10 values")))
            };
            let si = r.read_u32::<LE>()?;
            let ci = r.read_u32::<LE>()?;
            records.push(Record {
                curve,
                params,
                source_id: lookup(&tables[0], si)?,
                target_class: lookup(&tables[1], ci)?,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::format(WHAT, "trailing bytes"));
        }
        Ok(Dataset {
            kind,
            seed,
            config,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// One row per record: `index,source_id,target_class,param_0..9,db_0..255`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["index".to_string(), "source_id".into(), "target_class".into()];
        header.extend((0..PARAM_COUNT).map(|i| format!("param_{i}")));
        header.extend((0..GRID_LEN).map(|i| format!("db_{i}")));
        out.write_record(&header)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                r.source_id.clone().unwrap_or_default(),
                r.target_class.clone().unwrap_or_default(),
            ];
            match &r.params {
                Some(p) => row.extend(p.0.iter().map(|v| fmt_sig9(*v))),
                None => row.extend(std::iter::repeat(String::new()).take(PARAM_COUNT)),
            }
            row.extend(r.curve.values().iter().map(|v| fmt_sig9(*v)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Default)]
struct Table {
    names: Vec<String>,
    map: BTreeMap<String, u32>,
}

impl Table {
    fn index(&mut self, name: Option<&str>) -> u32 {
        let Some(name) = name else { return NONE_INDEX };
        if let Some(i) = self.map.get(name) {
            return *i;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_string());
        self.map.insert(name.to_string(), i);
        i
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eq::{denormalize_params, BandKind};

    #[test]
    fn draw_endpoints() {
        let lo = band_from_draws(0, 0.0, 0.5, false, 0.0);
        assert_eq!(lo.kind, BandKind::LowShelf);
        assert!((lo.freq_hz - 30.0).abs() < 1e-12);
        assert_eq!(lo.gain_db, 1.5);
        assert_eq!(lo.q, 0.75);
        let hi = band_from_draws(0, 1.0, 1.0, true, 0.0);
        assert!((hi.freq_hz - 450.0).abs() < 1e-9);
        assert_eq!(hi.gain_db, -12.0);
        let p = band_from_draws(1, 0.5, 0.0, false, 1.0);
        assert!((p.q - 3.0).abs() < 1e-12);
        assert_eq!(p.gain_db, 0.0);
    }

    #[test]
    fn noiseless_curve_is_zero_meaned_clean_response() {
        let mut rng = index_rng(1, 0);
        let s = sample_random_settings(&mut rng);
        let cfg = NoiseConfig {
            amplitude_db: 0.0,
            ..NoiseConfig::default()
        };
        let out = synth_sample(&s, &cfg, &mut rng).unwrap();
        let expect = zero_mean(&out.clean_response);
        for (a, b) in out.curve.values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = denormalize_params(&out.target_params, false);
        for (a, b) in back.bands.iter().zip(&s.bands) {
            assert!((a.freq_hz - b.freq_hz).abs() < 1e-9 * b.freq_hz);
            assert!((a.gain_db - b.gain_db).abs() < 1e-9);
            assert!((a.q - b.q).abs() < 1e-9);
        }
        let clean = synth_sample(&s, &NoiseConfig::clean(), &mut rng).unwrap();
        assert_eq!(clean.curve, clean.clean_response);
    }

    #[test]
    fn unit_noise_has_folded_normal_mean() {
        let cfg = NoiseConfig {
            amplitude_db: 1.0,
            post_smooth_sigma: 0.0,
            zero_mean: false,
        };
        let mut total = 0.0;
        for i in 0..1000 {
            let mut rng = index_rng(5, i);
            let s = sample_random_settings(&mut rng);
            let out = synth_sample(&s, &cfg, &mut rng).unwrap();
            total += out.curve.mean_abs_diff(&out.clean_response);
        }
        let mean = total / 1000.0;
        assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.01, "{mean}");
    }

    #[test]
    fn dataset_is_reproducible_and_round_trips() {
        let a = build_synthetic_dataset(50, &NoiseConfig::default(), 7).unwrap();
        let b = build_synthetic_dataset(50, &NoiseConfig::default(), 7).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_to(&mut ba).unwrap();
        b.write_to(&mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(Dataset::read_from(&mut ba.as_slice()).unwrap(), a);
        let c = build_synthetic_dataset(50, &NoiseConfig::default(), 8).unwrap();
        assert_ne!(a, c);
        // prefixes agree: sample i depends only on (seed, i)
        let short = build_synthetic_dataset(10, &NoiseConfig::default(), 7).unwrap();
        assert_eq!(short.records[..], a.records[..10]);
        assert!(build_synthetic_dataset(0, &NoiseConfig::default(), 7).is_err());
    }

    fn tilt(slope: f64) -> SpectrumDb {
        SpectrumDb::new((0..GRID_LEN).map(|i| slope * i as f64 / 255.0).collect()).unwrap()
    }

    fn toy_bank() -> TargetBank {
        let mut bank = TargetBank::new();
        for (i, name) in ["a", "b", "c", "d", "e"].iter().enumerate() {
            bank.insert(name, &tilt(i as f64 * 3.0 - 6.0), 1).unwrap();
        }
        bank
    }

    fn measured(n: usize) -> Vec<MeasuredSample> {
        (0..n)
            .map(|i| MeasuredSample {
                source_id: format!("s{i}"),
                class: ["a", "b", "c", "d", "e"][i % 5].into(),
                spectrum: tilt(i as f64 - 4.0),
            })
            .collect()
    }

    #[test]
    fn realworld_counts_and_invariants() {
        let bank = toy_bank();
        let d = build_realworld_dataset_default(&measured(10), &bank, 4).unwrap();
        assert_eq!(d.len(), 50);
        for r in &d.records {
            assert!(r.curve.mean().abs() < 1e-6);
            assert!(r.curve.max_abs() <= 12.0 + 1e-12);
        }
        // the first curve of each sample uses the sample's own class
        assert_eq!(d.records[0].target_class.as_deref(), Some("a"));
        assert_eq!(d.records[5].target_class.as_deref(), Some("b"));
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert_eq!(Dataset::read_from(&mut buf.as_slice()).unwrap(), d);
        assert!(d.params().is_err());
    }

    #[test]
    fn unknown_labels_are_listed() {
        let mut m = measured(3);
        m[1].class = "zither".into();
        m[2].class = "kazoo".into();
        match build_realworld_dataset_default(&m, &toy_bank(), 4) {
            Err(Error::UnknownLabels(l)) => assert_eq!(l.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_export_shape() {
        let d = build_synthetic_dataset(3, &NoiseConfig::default(), 1).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0].split(',').count(), 3 + PARAM_COUNT + GRID_LEN);
    }
}
