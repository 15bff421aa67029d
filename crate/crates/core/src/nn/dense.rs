use rand::Rng;
use rayon::prelude::*;

use super::gemm::{gemm, MatRef};
use super::{uniform_init, ValueGrid, ROW_CHUNK};
use crate::error::{Error, Result};

/// Fully connected layer, `y = W·x + b` with `W` stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ValueGrid,
    pub bias: ValueGrid,
    input: Option<ValueGrid>,
}

impl Dense {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let weight = uniform_init(rng, vec![outputs, inputs], inputs);
        let bias = uniform_init(rng, vec![outputs], inputs);
        Dense {
            weight,
            bias,
            input: None,
        }
    }

    pub fn from_weights(weight: ValueGrid, bias: ValueGrid) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::Shape(format!(
                "dense weight {:?} / bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Dense {
            weight,
            bias,
            input: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn predict(&self, x: &ValueGrid) -> Result<ValueGrid> {
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if x.shape().len() != 2 || x.shape()[1] != n_in {
            return Err(Error::Shape(format!("dense expects [batch, {n_in}], got {:?}", x.shape())));
        }
        let b = x.batch();
        let mut y = vec![0.0; b * n_out];
        for row in y.chunks_exact_mut(n_out) {
            row.copy_from_slice(&self.bias.values);
        }
        let w = MatRef::row_major(&self.weight.values, n_out, n_in).t();
        y.par_chunks_mut(ROW_CHUNK * n_out)
            .zip(x.values.par_chunks(ROW_CHUNK * n_in))
            .for_each(|(yc, xc)| {
                let rows = xc.len() / n_in;
                gemm(MatRef::row_major(xc, rows, n_in), w, 1.0, yc);
            });
        Ok(ValueGrid::from_parts(vec![b, n_out], y))
    }

    pub fn forward(&mut self, x: &ValueGrid) -> Result<ValueGrid> {
        let y = self.predict(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &ValueGrid) -> Result<ValueGrid> {
        let x = self.input.as_ref().ok_or(Error::NoForward)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let b = x.batch();
        if grad.shape() != [b, n_out] {
            return Err(Error::Shape(format!(
                "dense gradient {:?}, expected [{b}, {n_out}]",
                grad.shape()
            )));
        }
        // dW[o, :] += sum_b dY[b, o] · X[b, :]
        let dy_t = MatRef::row_major(&grad.values, b, n_out).t();
        let xm = MatRef::row_major(&x.values, b, n_in);
        let dw = self.weight.grad_mut();
        dw.par_chunks_mut(ROW_CHUNK * n_in)
            .enumerate()
            .for_each(|(ci, dwc)| {
                let o0 = ci * ROW_CHUNK;
                let rows = dwc.len() / n_in;
                let a = MatRef {
                    data: &dy_t.data[o0..],
                    rows,
                    cols: b,
                    row_stride: 1,
                    col_stride: n_out,
                };
                gemm(a, xm, 1.0, dwc);
            });
        let db = self.bias.grad_mut();
        for row in grad.values.chunks_exact(n_out) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        // dX = dY · W
        let w = MatRef::row_major(&self.weight.values, n_out, n_in);
        let mut dx = vec![0.0; b * n_in];
        dx.par_chunks_mut(ROW_CHUNK * n_in)
            .zip(grad.values.par_chunks(ROW_CHUNK * n_out))
            .for_each(|(dxc, gc)| {
                let rows = gc.len() / n_out;
                gemm(MatRef::row_major(gc, rows, n_out), w, 0.0, dxc);
            });
        Ok(ValueGrid::from_parts(vec![b, n_in], dx))
    }
}
