use std::f64::consts::LN_10;

use rayon::prelude::*;

use super::{ValueGrid, ROW_CHUNK};
use crate::audio::ANALYSIS_RATE;
use crate::eq::design::{power_ratio_db, power_terms, POWER_FLOOR};
use crate::eq::params::{physical_from_normalized, SLOTS};
use crate::eq::{design_coeffs, PeakDesign, ResponseBasis, BAND_COUNT, BAND_RANGES, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::scalar::Dual;
use crate::spectrum::{LogFrequencyGrid, GRID_LEN};

/// Smallest Q used when raw outputs push a peak's Q to or below zero.
const Q_GUARD: f64 = 1e-3;

/// Coefficients of one band plus their Jacobian with respect to the band's
/// normalized (freq, gain, q) inputs.
#[derive(Debug, Clone, Copy)]
struct BandGrad {
    coeffs: [f64; 5],
    jac: [[f64; 3]; 5],
}

/// Cascade magnitude response as a differentiable function of
/// `[batch, 10]` normalized parameters, giving `[batch, 256]` dB responses.
///
/// Values outside `[0, 1]` are not clamped; only a peak Q that would become
/// non-positive is held at a small positive floor.
#[derive(Debug, Clone)]
pub struct DiffCascadeResponse {
    basis: ResponseBasis,
    peak: PeakDesign,
    cache: Option<Vec<[BandGrad; BAND_COUNT]>>,
}

impl Default for DiffCascadeResponse {
    fn default() -> Self {
        Self::new(PeakDesign::Cookbook)
    }
}

impl DiffCascadeResponse {
    /// Response on the canonical grid at the analysis rate.
    pub fn new(peak: PeakDesign) -> Self {
        Self::with_rate(peak, ANALYSIS_RATE as f64)
    }

    pub fn with_rate(peak: PeakDesign, fs: f64) -> Self {
        DiffCascadeResponse {
            basis: ResponseBasis::new(LogFrequencyGrid::canonical(), fs),
            peak,
            cache: None,
        }
    }

    fn design_row(&self, v: &[f64]) -> [BandGrad; BAND_COUNT] {
        std::array::from_fn(|b| {
            let r = &BAND_RANGES[b];
            let (fi, gi, qi) = SLOTS[b];
            let vf = Dual::<3>::variable(v[fi], 0);
            let vg = Dual::<3>::variable(v[gi], 1);
            let vq = qi.map(|k| Dual::<3>::variable(v[k], 2));
            let (f, g, mut q) = physical_from_normalized(r, vf, vg, vq);
            if q.re < Q_GUARD {
                q = Dual {
                    re: Q_GUARD,
                    eps: [0.0; 3],
                };
            }
            let c = design_coeffs(r.kind, f, g, q, self.basis.fs, self.peak);
            BandGrad {
                coeffs: c.map(|d| d.re),
                jac: c.map(|d| d.eps),
            }
        })
    }

    fn check(v: &ValueGrid) -> Result<()> {
        if v.shape().len() != 2 || v.shape()[1] != PARAM_COUNT {
            return Err(Error::Shape(format!(
                "response expects [batch, {PARAM_COUNT}], got {:?}",
                v.shape()
            )));
        }
        Ok(())
    }

    fn run(&self, v: &ValueGrid) -> (ValueGrid, Vec<[BandGrad; BAND_COUNT]>) {
        let bands: Vec<_> = v
            .values
            .par_chunks(PARAM_COUNT)
            .with_min_len(ROW_CHUNK)
            .map(|row| self.design_row(row))
            .collect();
        let mut out = vec![0.0; v.batch() * GRID_LEN];
        out.par_chunks_mut(GRID_LEN)
            .zip(bands.par_iter())
            .with_min_len(ROW_CHUNK)
            .for_each(|(o, bs)| {
                for b in bs {
                    self.basis.band_db(&b.coeffs, o);
                }
            });
        (ValueGrid::from_parts(vec![v.batch(), GRID_LEN], out), bands)
    }

    pub fn predict(&self, v: &ValueGrid) -> Result<ValueGrid> {
        Self::check(v)?;
        Ok(self.run(v).0)
    }

    pub fn forward(&mut self, v: &ValueGrid) -> Result<ValueGrid> {
        Self::check(v)?;
        let (y, bands) = self.run(v);
        self.cache = Some(bands);
        Ok(y)
    }

    /// d loss / d v from d loss / d response.
    pub fn backward(&mut self, grad: &ValueGrid) -> Result<ValueGrid> {
        let bands = self.cache.as_ref().ok_or(Error::NoForward)?;
        if grad.shape() != [bands.len(), GRID_LEN] {
            return Err(Error::Shape(format!(
                "response gradient {:?}, expected [{}, {GRID_LEN}]",
                grad.shape(),
                bands.len()
            )));
        }
        let mut dv = vec![0.0; bands.len() * PARAM_COUNT];
        dv.par_chunks_mut(PARAM_COUNT)
            .zip(grad.values.par_chunks(GRID_LEN))
            .zip(bands.par_iter())
            .with_min_len(ROW_CHUNK)
            .for_each(|((dv, g), bs)| {
                for (b, band) in bs.iter().enumerate() {
                    let dc = self.coeff_grad(&band.coeffs, g);
                    let (fi, gi, qi) = SLOTS[b];
                    let slots = [Some(fi), Some(gi), qi];
                    for (j, slot) in slots.iter().enumerate() {
                        if let Some(s) = slot {
                            dv[*s] += (0..5).map(|k| dc[k] * band.jac[k][j]).sum::<f64>();
                        }
                    }
                }
            });
        Ok(ValueGrid::from_parts(vec![bands.len(), PARAM_COUNT], dv))
    }

    /// Σ_bins g · d(10·log10(num/den)) / d coeffs.
    fn coeff_grad(&self, c: &[f64; 5], g: &[f64]) -> [f64; 5] {
        let [b0, b1, b2, a1, a2] = *c;
        let sb2 = 2.0 * (b0 + b1 + b2);
        let sa2 = 2.0 * (1.0 + a1 + a2);
        let k = 10.0 / LN_10;
        let mut d = [0.0; 5];
        for (gi, &phi) in g.iter().zip(&self.basis.phi) {
            let (num, den) = power_terms(c, phi);
            let sn = if num > POWER_FLOOR { k * gi / num } else { 0.0 };
            let sd = if den > POWER_FLOOR { k * gi / den } else { 0.0 };
            let p2 = 16.0 * phi * phi;
            d[0] += sn * (sb2 - 4.0 * (b1 + 4.0 * b2) * phi + p2 * b2);
            d[1] += sn * (sb2 - 4.0 * (b0 + b2) * phi);
            d[2] += sn * (sb2 - 4.0 * (4.0 * b0 + b1) * phi + p2 * b0);
            d[3] -= sd * (sa2 - 4.0 * (1.0 + a2) * phi);
            d[4] -= sd * (sa2 - 4.0 * (4.0 + a1) * phi + p2);
        }
        d
    }

    /// Plain dB response of one row, without derivative bookkeeping.
    pub fn response_row(&self, v: &[f64; PARAM_COUNT]) -> Vec<f64> {
        let mut out = vec![0.0; GRID_LEN];
        for b in self.design_row(v) {
            for (o, phi) in out.iter_mut().zip(&self.basis.phi) {
                let (num, den) = power_terms(&b.coeffs, *phi);
                *o += power_ratio_db(num, den);
            }
        }
        out
    }
}
