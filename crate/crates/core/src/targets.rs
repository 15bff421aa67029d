//! Ideal per-instrument spectra and a nearest-centroid classifier over them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::audio::Audio;
use crate::corpus::MeasuredSample;
use crate::binio::{read_f64s, read_header, read_str, write_f64s, write_header, write_str};
use crate::error::{Error, Result};
use crate::spectrum::{
    fmt_sig9, measure_spectrum, order_free_sum, zero_mean, LogFrequencyGrid, SpectrumDb, StftConfig, GRID_LEN,
};

pub const BANK_MAGIC: &[u8; 8] = b"AEQBANK\0";
pub const BANK_VERSION: u32 = 1;
const WHAT: &str = "target bank";

/// Mean of the per-sample time-averaged spectra, zero-meaned. Independent of
/// sample order.
pub fn build_target(samples: &[Audio], cfg: StftConfig) -> Result<SpectrumDb> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples for target"));
    }
    let spectra = samples
        .par_iter()
        .map(|a| measure_spectrum(a, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(target_from_spectra(&spectra))
}

/// As [`build_target`] for already measured spectra.
pub fn target_from_spectra(spectra: &[SpectrumDb]) -> SpectrumDb {
    let n = spectra.len() as f64;
    let mut column = Vec::with_capacity(spectra.len());
    let mean: Vec<f64> = (0..GRID_LEN)
        .map(|i| {
            column.clear();
            column.extend(spectra.iter().map(|s| s[i]));
            order_free_sum(&mut column) / n
        })
        .collect();
    zero_mean(&SpectrumDb::new(mean).expect("mean of finite spectra"))
}

fn check_name(class: &str) -> Result<()> {
    if class.trim().is_empty() || class.contains([',', '\n', '\r']) {
        return Err(Error::OutOfRange(format!("invalid class name `{class}`")));
    }
    Ok(())
}

/// Mean absolute dB distance between the zero-meaned curves.
pub fn curve_distance(a: &SpectrumDb, b: &SpectrumDb) -> f64 {
    zero_mean(a).mean_abs_diff(&zero_mean(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetEntry {
    pub curve: SpectrumDb,
    pub sample_count: u64,
}

/// Instrument class name to zero-mean target curve, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TargetBank {
    entries: BTreeMap<String, TargetEntry>,
}

impl TargetBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a class. The curve is zero-meaned on insertion.
    pub fn insert(&mut self, class: &str, curve: &SpectrumDb, sample_count: u64) -> Result<()> {
        check_name(class)?;
        self.entries.insert(
            class.to_string(),
            TargetEntry {
                curve: zero_mean(curve),
                sample_count,
            },
        );
        Ok(())
    }

    /// One target per class from measured corpus samples.
    pub fn from_measured(samples: &[MeasuredSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("no samples for target bank"));
        }
        let mut groups: BTreeMap<&str, Vec<SpectrumDb>> = BTreeMap::new();
        for s in samples {
            groups.entry(&s.class).or_default().push(s.spectrum.clone());
        }
        let mut bank = TargetBank::new();
        for (class, spectra) in groups {
            bank.insert(class, &target_from_spectra(&spectra), spectra.len() as u64)?;
        }
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, class: &str) -> Result<&TargetEntry> {
        self.entries.get(class).ok_or_else(|| Error::UnknownClass(class.to_string()))
    }

    pub fn target(&self, class: &str) -> Result<&SpectrumDb> {
        self.get(class).map(|e| &e.curve)
    }

    /// The `k` other classes closest to `class`, nearest first, ties by name.
    pub fn nearest_classes(&self, class: &str, k: usize) -> Result<Vec<String>> {
        let query = self.target(class)?;
        if k >= self.len() {
            return Err(Error::OutOfRange(format!(
                "asked for {k} neighbours in a bank of {} classes",
                self.len()
            )));
        }
        let mut ranked: Vec<(f64, &String)> = self
            .entries
            .iter()
            .filter(|(name, _)| name.as_str() != class)
            .map(|(name, e)| (query.mean_abs_diff(&e.curve), name))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        Ok(ranked.into_iter().take(k).map(|(_, n)| n.clone()).collect())
    }

    /// Class whose target is nearest to the zero-meaned measurement, with the
    /// distance. Ties go to the lexicographically first name.
    pub fn classify(&self, measured: &SpectrumDb) -> Result<(String, f64)> {
        let m = zero_mean(measured);
        let mut best: Option<(f64, &String)> = None;
        for (name, e) in &self.entries {
            let d = m.mean_abs_diff(&e.curve);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, name));
            }
        }
        best.map(|(d, n)| (n.clone(), d))
            .ok_or(Error::Empty("target bank has no classes"))
    }

    /// Binary layout: magic `AEQBANK\0`, u32 version, u64 grid fingerprint,
    /// u32 class count, then per class: name (u32 length + utf-8), u64 sample
    /// count, 256 f64 values. Little-endian, classes in name order.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, BANK_MAGIC, BANK_VERSION)?;
        w.write_u64::<LE>(LogFrequencyGrid::canonical().fingerprint())?;
        w.write_u32::<LE>(self.entries.len() as u32)?;
        for (name, e) in &self.entries {
            write_str(w, name)?;
            w.write_u64::<LE>(e.sample_count)?;
            write_f64s(w, e.curve.values())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let version = read_header(r, BANK_MAGIC, WHAT)?;
        if version != BANK_VERSION {
            return Err(Error::format(WHAT, format!("unsupported version {version}")));
        }
        if r.read_u64::<LE>()? != LogFrequencyGrid::canonical().fingerprint() {
            return Err(Error::format(WHAT, "frequency grid differs from this build"));
        }
        let n = r.read_u32::<LE>()?;
        let mut bank = TargetBank::new();
        for _ in 0..n {
            let name = read_str(r, WHAT)?;
            let count = r.read_u64::<LE>()?;
            let curve = SpectrumDb::new(read_f64s(r, GRID_LEN)?)?;
            check_name(&name)?;
            if curve.mean().abs() > 1e-6 {
                return Err(Error::format(WHAT, format!("curve for `{name}` is not zero-mean")));
            }
            bank.entries.insert(
                name,
                TargetEntry {
                    curve,
                    sample_count: count,
                },
            );
        }
        Ok(bank)
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

    /// `class,freq_hz,value_db` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["class", "freq_hz", "value_db"])?;
        let freqs = LogFrequencyGrid::canonical().freqs();
        for (name, e) in &self.entries {
            for (f, v) in freqs.iter().zip(e.curve.values()) {
                out.write_record([name.clone(), fmt_sig9(*f), fmt_sig9(*v)])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
