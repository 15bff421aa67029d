//! Labeled audio corpora described by a `path,instrument_class` manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::audio::Audio;
use crate::error::{Error, Result};
use crate::spectrum::{measure_spectrum, SpectrumDb, StftConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub class: String,
}

/// Reads a manifest. Relative paths are resolved against the manifest's
/// directory.
pub fn read_manifest(path: &Path) -> Result<Vec<CorpusEntry>> {
    if !path.is_file() {
        return Err(Error::MissingFiles(vec![path.display().to_string()]));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["path", "instrument_class"] {
        return Err(Error::format("manifest", "header must be `path,instrument_class`"));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (p, class) = (rec[0].trim(), rec[1].trim());
        if p.is_empty() || class.is_empty() {
            return Err(Error::format("manifest", format!("row {} has an empty field", i + 1)));
        }
        let p = Path::new(p);
        out.push(CorpusEntry {
            path: if p.is_absolute() { p.to_path_buf() } else { base.join(p) },
            class: class.to_string(),
        });
    }
    Ok(out)
}

/// Writes entries with paths relative to `base` where possible.
pub fn write_manifest<W: Write>(entries: &[CorpusEntry], base: &Path, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "instrument_class"])?;
    for e in entries {
        let p = e.path.strip_prefix(base).unwrap_or(&e.path);
        out.write_record([p.to_string_lossy().as_ref(), e.class.as_str()])?;
    }
    out.flush()?;
    Ok(())
}

/// Time-averaged spectrum of one corpus item.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredSample {
    pub source_id: String,
    pub class: String,
    pub spectrum: SpectrumDb,
}

/// Checks every file exists, then loads and measures them in parallel.
/// Source ids are the file stems joined with the entry index to keep them
/// unique.
pub fn measure_corpus(entries: &[CorpusEntry], cfg: StftConfig) -> Result<Vec<MeasuredSample>> {
    if entries.is_empty() {
        return Err(Error::Empty("corpus manifest lists no files"));
    }
    let missing: Vec<String> = entries
        .iter()
        .filter(|e| !e.path.is_file())
        .map(|e| e.path.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    entries
        .par_iter()
        .map(|e| {
            let audio = Audio::read_wav(&e.path)?;
            Ok(MeasuredSample {
                source_id: e.path.display().to_string(),
                class: e.class.clone(),
                spectrum: measure_spectrum(&audio, cfg)?,
            })
        })
        .collect()
}
