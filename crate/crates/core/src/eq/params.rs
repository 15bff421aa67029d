use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{BandParams, BandRange, EqSettings, BAND_COUNT, BAND_RANGES};

pub const PARAM_COUNT: usize = 10;

/// Model-space EQ parameters in `[f_ls, g_ls, f_p1, g_p1, q_p1, f_p2, g_p2,
/// q_p2, f_hs, g_hs]` order. Valid settings map into `[0, 1]^10`; raw model
/// outputs may fall outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedParams(pub [f64; PARAM_COUNT]);

/// Slot indices `(freq, gain, q)` of each band inside [`NormalizedParams`].
pub(crate) const SLOTS: [(usize, usize, Option<usize>); BAND_COUNT] =
    [(0, 1, None), (2, 3, Some(4)), (5, 6, Some(7)), (8, 9, None)];

impl NormalizedParams {
    pub fn clamped(&self) -> Self {
        NormalizedParams(self.0.map(|v| v.clamp(0.0, 1.0)))
    }

    pub fn values(&self) -> &[f64; PARAM_COUNT] {
        &self.0
    }
}

/// Inverse normalization of one band, generic so gradients flow through it.
pub fn physical_from_normalized<T: Real>(r: &BandRange, vf: T, vg: T, vq: Option<T>) -> (T, T, T) {
    let f = vf.scale((r.f_max / r.f_min).ln()).exp().scale(r.f_min);
    let g = vg.scale(r.g_max - r.g_min) + T::constant(r.g_min);
    let q = match vq {
        Some(v) => v.scale(r.q_max - r.q_min) + T::constant(r.q_min),
        None => T::constant(r.q_min),
    };
    (f, g, q)
}

pub fn normalize_params(s: &EqSettings) -> Result<NormalizedParams> {
    s.validate()?;
    let mut v = [0.0; PARAM_COUNT];
    for ((band, r), (fi, gi, qi)) in s.bands.iter().zip(&BAND_RANGES).zip(SLOTS) {
        v[fi] = (band.freq_hz / r.f_min).ln() / (r.f_max / r.f_min).ln();
        v[gi] = (band.gain_db - r.g_min) / (r.g_max - r.g_min);
        if let Some(qi) = qi {
            v[qi] = (band.q - r.q_min) / (r.q_max - r.q_min);
        }
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("normalized parameters".into()));
    }
    Ok(NormalizedParams(v))
}

/// Maps model-space values back to physical settings. With `clamp`, each
/// component is first limited to `[0, 1]`, so the result always satisfies the
/// band ranges. Shelf Q is fixed.
pub fn denormalize_params(v: &NormalizedParams, clamp: bool) -> EqSettings {
    let v = if clamp { v.clamped() } else { *v };
    let bands = std::array::from_fn(|i| {
        let r = &BAND_RANGES[i];
        let (fi, gi, qi) = SLOTS[i];
        let (freq_hz, gain_db, q) = physical_from_normalized(r, v.0[fi], v.0[gi], qi.map(|k| v.0[k]));
        BandParams {
            kind: r.kind,
            freq_hz,
            gain_db,
            q,
        }
    });
    EqSettings { bands }
}
