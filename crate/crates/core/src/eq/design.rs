use std::f64::consts::{LN_10, PI};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectrum::{LogFrequencyGrid, SpectrumDb, MAG_FLOOR};

use super::{BandKind, BandParams, EqSettings};

/// One second-order section with `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoeffs {
    pub const IDENTITY: BiquadCoeffs = BiquadCoeffs {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    pub fn from_array(c: [f64; 5]) -> Self {
        BiquadCoeffs {
            b0: c[0],
            b1: c[1],
            b2: c[2],
            a1: c[3],
            a2: c[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.b0, self.b1, self.b2, self.a1, self.a2]
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// |numerator|² and |denominator|² at a frequency given by φ = sin²(ω/2).
    #[inline]
    pub fn power_terms(&self, phi: f64) -> (f64, f64) {
        power_terms(&self.to_array(), phi)
    }
}

/// Written in φ = sin²(ω/2) rather than cos ω, cos 2ω: the expanded cosine
/// form cancels catastrophically for low-frequency sections whose poles and
/// zeros sit close to z = 1.
#[inline]
pub(crate) fn power_terms(c: &[f64; 5], phi: f64) -> (f64, f64) {
    let [b0, b1, b2, a1, a2] = *c;
    let sb = b0 + b1 + b2;
    let sa = 1.0 + a1 + a2;
    let num = sb * sb - 4.0 * (b0 * b1 + 4.0 * b0 * b2 + b1 * b2) * phi + 16.0 * b0 * b2 * phi * phi;
    let den = sa * sa - 4.0 * (a1 + 4.0 * a2 + a1 * a2) * phi + 16.0 * a2 * phi * phi;
    (num, den)
}

pub(crate) const POWER_FLOOR: f64 = MAG_FLOOR * MAG_FLOOR;

/// 10·log10(num / den) with both terms floored.
#[inline]
pub(crate) fn power_ratio_db(num: f64, den: f64) -> f64 {
    10.0 * (num.max(POWER_FLOOR) / den.max(POWER_FLOOR)).log10()
}

/// Peak filter prototype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeakDesign {
    /// Bilinear-transform cookbook peak.
    #[default]
    Cookbook,
    /// Peak whose gain at Nyquist matches the analog prototype, reducing the
    /// cramping of the bilinear transform near fs/2.
    NyquistMatched,
}

impl PeakDesign {
    pub fn as_str(self) -> &'static str {
        match self {
            PeakDesign::Cookbook => "cookbook",
            PeakDesign::NyquistMatched => "nyquist-matched",
        }
    }
}

impl std::str::FromStr for PeakDesign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cookbook" => Ok(PeakDesign::Cookbook),
            "nyquist-matched" => Ok(PeakDesign::NyquistMatched),
            _ => Err(Error::OutOfRange(format!("unknown peak design `{s}`"))),
        }
    }
}

/// Normalized `[b0, b1, b2, a1, a2]` for one band, generic so the same
/// equations serve audio processing and gradient computation.
///
/// Frequencies are mapped with ω₀ = 2π·f/fs and are not clamped; values past
/// Nyquist alias through the trigonometric terms.
pub fn design_coeffs<T: Real>(kind: BandKind, freq_hz: T, gain_db: T, q: T, fs: f64, peak: PeakDesign) -> [T; 5] {
    let w0 = freq_hz.scale(2.0 * PI / fs);
    match (kind, peak) {
        (BandKind::Peak, PeakDesign::Cookbook) => cookbook_peak(w0, gain_db, q),
        (BandKind::Peak, PeakDesign::NyquistMatched) => nyquist_matched_peak(w0, gain_db, q),
        (BandKind::LowShelf, _) => cookbook_shelf(w0, gain_db, q, false),
        (BandKind::HighShelf, _) => cookbook_shelf(w0, gain_db, q, true),
    }
}

fn normalize<T: Real>(b: [T; 3], a: [T; 3]) -> [T; 5] {
    let a0 = a[0];
    [b[0] / a0, b[1] / a0, b[2] / a0, a[1] / a0, a[2] / a0]
}

fn cookbook_peak<T: Real>(w0: T, gain_db: T, q: T) -> [T; 5] {
    let one = T::constant(1.0);
    let amp = gain_db.scale(LN_10 / 40.0).exp();
    let alpha = w0.sin() / q.scale(2.0);
    let c = w0.cos().scale(-2.0);
    normalize(
        [one + alpha * amp, c, one - alpha * amp],
        [one + alpha / amp, c, one - alpha / amp],
    )
}

fn cookbook_shelf<T: Real>(w0: T, gain_db: T, q: T, high: bool) -> [T; 5] {
    let one = T::constant(1.0);
    let amp = gain_db.scale(LN_10 / 40.0).exp();
    let alpha = w0.sin() / q.scale(2.0);
    let cw = w0.cos();
    let ap = amp + one;
    let am = amp - one;
    let k = amp.sqrt() * alpha.scale(2.0);
    if high {
        normalize(
            [
                amp * (ap + am * cw + k),
                amp * (am + ap * cw).scale(-2.0),
                amp * (ap + am * cw - k),
            ],
            [ap - am * cw + k, (am - ap * cw).scale(2.0), ap - am * cw - k],
        )
    } else {
        normalize(
            [
                amp * (ap - am * cw + k),
                amp * (am - ap * cw).scale(2.0),
                amp * (ap - am * cw - k),
            ],
            [ap + am * cw + k, (am + ap * cw).scale(-2.0), ap + am * cw - k],
        )
    }
}

/// Peak with prescribed Nyquist gain. Reference gain 1, bandwidth measured at
/// the dB midpoint (GB² = G), Δω = ω₀/Q capped below π.
fn nyquist_matched_peak<T: Real>(w0: T, gain_db: T, q: T) -> [T; 5] {
    if gain_db.value() == 0.0 {
        // the design equations are 0/0 at unity gain
        let z = T::constant(0.0);
        return [T::constant(1.0), z, z, z, z];
    }
    let one = T::constant(1.0);
    let pi2 = T::constant(PI * PI);
    let g2 = gain_db.scale(LN_10 / 10.0).exp(); // G²
    let g = g2.sqrt();
    let gb2 = g; // GB² = G0·G
    let mut dw = w0 / q;
    let cap = 0.9 * PI;
    if dw.value() > cap {
        dw = T::constant(cap);
    }
    let f = (g2 - gb2).abs();
    let g00 = (g2 - one).abs();
    let f00 = (gb2 - one).abs();
    let d0 = w0 * w0 - pi2;
    let d02 = d0 * d0;
    let bw = f00 * pi2 * dw * dw / f;
    let g1 = ((d02 + g2 * bw) / (d02 + bw)).sqrt();
    let g01 = (g2 - g1).abs();
    let g11 = (g2 - g1 * g1).abs();
    let f01 = (gb2 - g1).abs();
    let f11 = (gb2 - g1 * g1).abs();
    let tw = (w0.scale(0.5)).tan();
    let w2 = (g11 / g00).sqrt() * tw * tw;
    let dww = (one + (f00 / f11).sqrt() * w2) * dw.scale(0.5).tan();
    let c = f11 * dww * dww - (w2 * (f01 - (f00 * f11).sqrt())).scale(2.0);
    let d = (w2 * (g01 - (g00 * g11).sqrt())).scale(2.0);
    let a = ((c + d) / f).sqrt();
    let b = ((g2 * c + gb2 * d) / f).sqrt();
    normalize(
        [g1 + w2 + b, (g1 - w2).scale(-2.0), g1 - b + w2],
        [one + w2 + a, (one - w2).scale(-2.0), one + w2 - a],
    )
}

/// Cookbook design of one band. Exactly 0 dB gain returns identity
/// coefficients.
pub fn design_band(p: &BandParams, fs: f64) -> Result<BiquadCoeffs> {
    design_band_with(p, fs, PeakDesign::Cookbook)
}

pub fn design_band_with(p: &BandParams, fs: f64, peak: PeakDesign) -> Result<BiquadCoeffs> {
    if !(fs > 0.0) || !fs.is_finite() {
        return Err(Error::OutOfRange(format!("sample rate {fs}")));
    }
    for (name, v) in [("freq_hz", p.freq_hz), ("gain_db", p.gain_db), ("q", p.q)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} = {v}")));
        }
    }
    if p.q <= 0.0 || p.freq_hz <= 0.0 {
        return Err(Error::OutOfRange(format!("freq {} / q {} must be positive", p.freq_hz, p.q)));
    }
    if p.gain_db == 0.0 {
        return Ok(BiquadCoeffs::IDENTITY);
    }
    Ok(BiquadCoeffs::from_array(design_coeffs(p.kind, p.freq_hz, p.gain_db, p.q, fs, peak)))
}

/// sin²(ω/2) for every grid bin at a given rate, ω = 2π·f/fs.
#[derive(Debug, Clone)]
pub struct ResponseBasis {
    pub fs: f64,
    pub phi: Vec<f64>,
}

impl ResponseBasis {
    pub fn new(grid: &LogFrequencyGrid, fs: f64) -> Self {
        let phi = grid.freqs().iter().map(|f| (PI * f / fs).sin().powi(2)).collect();
        ResponseBasis { fs, phi }
    }

    pub(crate) fn band_db(&self, c: &[f64; 5], out: &mut [f64]) {
        for (o, phi) in out.iter_mut().zip(&self.phi) {
            let (num, den) = power_terms(c, *phi);
            *o += power_ratio_db(num, den);
        }
    }
}

/// 20·log10 |H(e^{jω})| of one section on the grid.
pub fn band_response_db(c: &BiquadCoeffs, grid: &LogFrequencyGrid, fs: f64) -> SpectrumDb {
    let basis = ResponseBasis::new(grid, fs);
    let mut out = vec![0.0; grid.len()];
    basis.band_db(&c.to_array(), &mut out);
    SpectrumDb::new(out).expect("floored response is finite")
}

/// Cascade magnitude response: the dB sum of the four band responses.
pub fn cascade_response_db(s: &EqSettings, grid: &LogFrequencyGrid, fs: f64) -> Result<SpectrumDb> {
    cascade_response_db_with(s, grid, fs, PeakDesign::Cookbook)
}

pub fn cascade_response_db_with(
    s: &EqSettings,
    grid: &LogFrequencyGrid,
    fs: f64,
    peak: PeakDesign,
) -> Result<SpectrumDb> {
    let basis = ResponseBasis::new(grid, fs);
    let mut out = vec![0.0; grid.len()];
    for band in &s.bands {
        let c = design_band_with(band, fs, peak)?;
        basis.band_db(&c.to_array(), &mut out);
    }
    SpectrumDb::new(out)
}
