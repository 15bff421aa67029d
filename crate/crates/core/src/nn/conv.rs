use rand::Rng;
use rayon::prelude::*;

use super::gemm::{gemm, MatRef};
use super::{uniform_init, ValueGrid, ROW_CHUNK};
use crate::error::{Error, Result};

/// Valid (unpadded) stride-1 1-D cross-correlation over `[batch, channels, len]`.
/// Weights are `[out, in, kernel]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ValueGrid,
    pub bias: ValueGrid,
    /// im2col buffers of the last forward pass plus the input length.
    cache: Option<(Vec<f64>, usize, usize)>,
}

impl Conv1d {
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let fan_in = in_ch * kernel;
        Conv1d {
            weight: uniform_init(rng, vec![out_ch, in_ch, kernel], fan_in),
            bias: uniform_init(rng, vec![out_ch], fan_in),
            cache: None,
        }
    }

    pub fn from_weights(weight: ValueGrid, bias: ValueGrid) -> Result<Self> {
        if weight.shape().len() != 3 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::Shape(format!(
                "conv weight {:?} / bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Conv1d {
            weight,
            bias,
            cache: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        input_len + 1 - self.kernel()
    }

    fn check(&self, x: &ValueGrid) -> Result<(usize, usize)> {
        let s = x.shape();
        if s.len() != 3 || s[1] != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv1d expects [batch, {}, len], got {s:?}",
                self.in_channels()
            )));
        }
        if s[2] < self.kernel() {
            return Err(Error::Shape(format!(
                "conv1d input length {} shorter than kernel {}",
                s[2],
                self.kernel()
            )));
        }
        Ok((s[0], s[2]))
    }

    fn run(&self, x: &ValueGrid, keep_cols: bool) -> Result<(ValueGrid, Vec<f64>)> {
        let (b, len) = self.check(x)?;
        let (cin, cout, k) = (self.in_channels(), self.out_channels(), self.kernel());
        let lout = self.output_len(len);
        let ck = cin * k;
        let mut y = vec![0.0; b * cout * lout];
        let mut cols = if keep_cols { vec![0.0; b * ck * lout] } else { Vec::new() };
        let w = MatRef::row_major(&self.weight.values, cout, ck);
        let compute = |xb: &[f64], yb: &mut [f64], colb: &mut [f64]| {
            for c in 0..cin {
                for t in 0..k {
                    let dst = &mut colb[(c * k + t) * lout..(c * k + t + 1) * lout];
                    dst.copy_from_slice(&xb[c * len + t..c * len + t + lout]);
                }
            }
            for (o, row) in yb.chunks_exact_mut(lout).enumerate() {
                row.fill(self.bias.values[o]);
            }
            gemm(w, MatRef::row_major(colb, ck, lout), 1.0, yb);
        };
        if keep_cols {
            y.par_chunks_mut(cout * lout)
                .zip(cols.par_chunks_mut(ck * lout))
                .zip(x.values.par_chunks(cin * len))
                .for_each(|((yb, colb), xb)| compute(xb, yb, colb));
        } else {
            y.par_chunks_mut(cout * lout)
                .zip(x.values.par_chunks(cin * len))
                .for_each_init(|| vec![0.0; ck * lout], |colb, (yb, xb)| compute(xb, yb, colb));
        }
        Ok((ValueGrid::from_parts(vec![b, cout, lout], y), cols))
    }

    pub fn predict(&self, x: &ValueGrid) -> Result<ValueGrid> {
        Ok(self.run(x, false)?.0)
    }

    pub fn forward(&mut self, x: &ValueGrid) -> Result<ValueGrid> {
        let (y, cols) = self.run(x, true)?;
        self.cache = Some((cols, x.batch(), x.shape()[2]));
        Ok(y)
    }

    pub fn backward(&mut self, grad: &ValueGrid) -> Result<ValueGrid> {
        let (cols, b, len) = self.cache.as_ref().ok_or(Error::NoForward)?;
        let (b, len) = (*b, *len);
        let (cin, cout, k) = (self.in_channels(), self.out_channels(), self.kernel());
        let lout = self.output_len(len);
        let ck = cin * k;
        if grad.shape() != [b, cout, lout] {
            return Err(Error::Shape(format!(
                "conv1d gradient {:?}, expected [{b}, {cout}, {lout}]",
                grad.shape()
            )));
        }
        // dW[o, :] += sum_b dY_b[o, :] · cols_bᵀ, chunked over output channels
        let dw = self.weight.grad.get_or_insert_with(|| vec![0.0; cout * ck]);
        dw.par_chunks_mut(ROW_CHUNK * ck).enumerate().for_each(|(ci, dwc)| {
            let o0 = ci * ROW_CHUNK;
            let rows = dwc.len() / ck;
            for s in 0..b {
                let g = &grad.values[s * cout * lout + o0 * lout..s * cout * lout + (o0 + rows) * lout];
                let colb = &cols[s * ck * lout..(s + 1) * ck * lout];
                gemm(
                    MatRef::row_major(g, rows, lout),
                    MatRef::row_major(colb, ck, lout).t(),
                    1.0,
                    dwc,
                );
            }
        });
        let db = self.bias.grad_mut();
        for gb in grad.values.chunks_exact(cout * lout) {
            for (d, row) in db.iter_mut().zip(gb.chunks_exact(lout)) {
                *d += row.iter().sum::<f64>();
            }
        }
        // dX via dcols = Wᵀ · dY_b followed by col2im
        let wt = MatRef::row_major(&self.weight.values, cout, ck).t();
        let mut dx = vec![0.0; b * cin * len];
        dx.par_chunks_mut(cin * len)
            .zip(grad.values.par_chunks(cout * lout))
            .for_each_init(
                || vec![0.0; ck * lout],
                |dcols, (dxb, gb)| {
                    gemm(wt, MatRef::row_major(gb, cout, lout), 0.0, dcols);
                    for c in 0..cin {
                        for t in 0..k {
                            let src = &dcols[(c * k + t) * lout..(c * k + t + 1) * lout];
                            let dst = &mut dxb[c * len + t..c * len + t + lout];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                },
            );
        Ok(ValueGrid::from_parts(vec![b, cin, len], dx))
    }
}
