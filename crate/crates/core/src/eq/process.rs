use crate::audio::Audio;
use crate::error::Result;

use super::{design_band_with, BandParams, BiquadCoeffs, EqSettings, PeakDesign};

/// Designed sections of one EQ at one sample rate.
#[derive(Debug, Clone)]
pub struct Cascade {
    pub sections: Vec<BiquadCoeffs>,
}

impl Cascade {
    /// Band frequencies at or above Nyquist (possible only for rates below
    /// 32 kHz) are pulled down to 0.499·fs.
    pub fn design(s: &EqSettings, fs: f64, peak: PeakDesign) -> Result<Self> {
        let sections = s
            .bands
            .iter()
            .map(|b| {
                let b = BandParams {
                    freq_hz: b.freq_hz.min(0.499 * fs),
                    ..*b
                };
                design_band_with(&b, fs, peak)
            })
            .collect::<Result<_>>()?;
        Ok(Cascade { sections })
    }
}

/// Runs one channel through the sections in series using the direct-form
/// difference equation with zero initial state. Identity sections are skipped,
/// so a flat EQ returns the input bit for bit.
pub fn process_channel(x: &[f64], sections: &[BiquadCoeffs]) -> Vec<f64> {
    let mut buf = x.to_vec();
    for c in sections.iter().filter(|c| !c.is_identity()) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for s in buf.iter_mut() {
            let x0 = *s;
            let y0 = c.b0 * x0 + c.b1 * x1 + c.b2 * x2 - c.a1 * y1 - c.a2 * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            *s = y0;
        }
    }
    buf
}

/// Equalizes every channel with filters designed at the audio's own rate.
pub fn process_audio(audio: &Audio, s: &EqSettings, peak: PeakDesign) -> Result<Audio> {
    let cascade = Cascade::design(s, audio.sample_rate as f64, peak)?;
    let channels = audio
        .channels
        .iter()
        .map(|c| process_channel(c, &cascade.sections))
        .collect();
    Audio::new(audio.sample_rate, channels)
}
