//! Four-band parametric EQ: band types, parameter ranges, biquad design,
//! magnitude responses on the analysis grid and time-domain processing.

pub(crate) mod design;
pub(crate) mod params;
mod process;

pub use design::{
    band_response_db, cascade_response_db, cascade_response_db_with, design_band, design_band_with,
    design_coeffs, BiquadCoeffs, PeakDesign, ResponseBasis,
};
pub use params::{
    denormalize_params, normalize_params, physical_from_normalized, NormalizedParams, PARAM_COUNT,
};
pub use process::{process_audio, process_channel, Cascade};

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const BAND_COUNT: usize = 4;
pub const SHELF_Q: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandKind {
    LowShelf,
    Peak,
    HighShelf,
}

impl BandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BandKind::LowShelf => "low_shelf",
            BandKind::Peak => "peak",
            BandKind::HighShelf => "high_shelf",
        }
    }
}

impl fmt::Display for BandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low_shelf" => Ok(BandKind::LowShelf),
            "peak" => Ok(BandKind::Peak),
            "high_shelf" => Ok(BandKind::HighShelf),
            other => Err(Error::format("band kind", other.to_string())),
        }
    }
}

/// Allowed parameter ranges for one band position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRange {
    pub kind: BandKind,
    pub f_min: f64,
    pub f_max: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl BandRange {
    pub fn q_is_fixed(&self) -> bool {
        self.q_min == self.q_max
    }
}

pub const BAND_RANGES: [BandRange; BAND_COUNT] = [
    BandRange {
        kind: BandKind::LowShelf,
        f_min: 30.0,
        f_max: 450.0,
        g_min: -12.0,
        g_max: 12.0,
        q_min: SHELF_Q,
        q_max: SHELF_Q,
    },
    BandRange {
        kind: BandKind::Peak,
        f_min: 200.0,
        f_max: 2500.0,
        g_min: -12.0,
        g_max: 12.0,
        q_min: 0.1,
        q_max: 3.0,
    },
    BandRange {
        kind: BandKind::Peak,
        f_min: 600.0,
        f_max: 7000.0,
        g_min: -12.0,
        g_max: 12.0,
        q_min: 0.1,
        q_max: 3.0,
    },
    BandRange {
        kind: BandKind::HighShelf,
        f_min: 1500.0,
        f_max: 16_000.0,
        g_min: -12.0,
        g_max: 12.0,
        q_min: SHELF_Q,
        q_max: SHELF_Q,
    },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandParams {
    pub kind: BandKind,
    pub freq_hz: f64,
    pub gain_db: f64,
    pub q: f64,
}

/// Settings of the 4-band EQ, ordered low shelf, peak 1, peak 2, high shelf.
///
/// Values produced by [`denormalize_params`] without clamping may lie outside
/// [`BAND_RANGES`]; [`EqSettings::validate`] checks them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqSettings {
    pub bands: [BandParams; BAND_COUNT],
}

const RANGE_SLACK: f64 = 1e-9;

impl EqSettings {
    /// All gains at 0 dB, frequencies at the geometric centres, peak Q mid-range.
    pub fn flat() -> Self {
        let bands = BAND_RANGES.map(|r| BandParams {
            kind: r.kind,
            freq_hz: (r.f_min * r.f_max).sqrt(),
            gain_db: 0.0,
            q: 0.5 * (r.q_min + r.q_max),
        });
        EqSettings { bands }
    }

    pub fn new(bands: [BandParams; BAND_COUNT]) -> Result<Self> {
        let s = EqSettings { bands };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (b, r)) in self.bands.iter().zip(&BAND_RANGES).enumerate() {
            let band = i + 1;
            if b.kind != r.kind {
                return Err(Error::OutOfRange(format!(
                    "band {band} must be {}, got {}",
                    r.kind, b.kind
                )));
            }
            for (name, v, lo, hi) in [
                ("freq_hz", b.freq_hz, r.f_min, r.f_max),
                ("gain_db", b.gain_db, r.g_min, r.g_max),
                ("q", b.q, r.q_min, r.q_max),
            ] {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("band {band} {name}")));
                }
                let slack = RANGE_SLACK * hi.abs().max(1.0);
                if v < lo - slack || v > hi + slack {
                    return Err(Error::OutOfRange(format!(
                        "band {band} {name} = {v} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes the settings document:
    ///
    /// ```text
    /// # autoeq settings v1
    /// band,kind,freq_hz,gain_db,q
    /// 1,low_shelf,116.18950038622251,0,0.75
    /// ...
    /// ```
    ///
    /// Lines starting with `#` are comments. Numbers use the shortest
    /// representation that round-trips exactly.
    pub fn write_document<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# autoeq settings v1")?;
        writeln!(w, "band,kind,freq_hz,gain_db,q")?;
        for (i, b) in self.bands.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", i + 1, b.kind, b.freq_hz, b.gain_db, b.q)?;
        }
        Ok(())
    }

    pub fn read_document<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        let mut saw_header = false;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "band,kind,freq_hz,gain_db,q" {
                    return Err(Error::format("settings document", format!("bad header `{line}`")));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::format("settings document", format!("expected 5 fields in `{line}`")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::format("settings document", format!("`{s}`: {e}")))
            };
            let band: usize = fields[0]
                .parse()
                .map_err(|_| Error::format("settings document", format!("bad band `{}`", fields[0])))?;
            if band != rows.len() + 1 {
                return Err(Error::format("settings document", "bands must be listed 1..4 in order"));
            }
            rows.push(BandParams {
                kind: fields[1].parse()?,
                freq_hz: num(fields[2])?,
                gain_db: num(fields[3])?,
                q: num(fields[4])?,
            });
        }
        let bands: [BandParams; BAND_COUNT] = rows
            .try_into()
            .map_err(|r: Vec<_>| Error::format("settings document", format!("expected 4 bands, got {}", r.len())))?;
        EqSettings::new(bands)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_document(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_document(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
