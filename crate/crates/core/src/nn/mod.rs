//! Minimal network substrate: dense and 1-D convolution layers with explicit
//! backward passes, ReLU, flatten, Adam, and the differentiable EQ response.
//!
//! Batches are processed in fixed-size row chunks so that results do not
//! depend on how many worker threads are available.

mod adam;
mod checkpoint;
mod conv;
mod dense;
mod diff_response;
mod gemm;
mod grid;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::Conv1d;
pub use dense::Dense;
pub use diff_response::DiffCascadeResponse;
pub use grid::ValueGrid;

use rand::Rng;

use crate::error::{Error, Result};

/// Rows handled per parallel task.
pub(crate) const ROW_CHUNK: usize = 8;

#[derive(Debug, Clone)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: None }
    }

    pub fn predict(x: &ValueGrid) -> ValueGrid {
        ValueGrid::from_parts(x.shape().to_vec(), x.values.iter().map(|v| v.max(0.0)).collect())
    }

    pub fn forward(&mut self, x: &ValueGrid) -> ValueGrid {
        self.mask = Some(x.values.iter().map(|&v| v > 0.0).collect());
        Self::predict(x)
    }

    /// Subgradient at exactly 0 is 0.
    pub fn backward(&mut self, grad: &ValueGrid) -> Result<ValueGrid> {
        let mask = self.mask.as_ref().ok_or(Error::NoForward)?;
        if mask.len() != grad.len() {
            return Err(Error::Shape("relu gradient does not match forward input".into()));
        }
        let values = grad
            .values
            .iter()
            .zip(mask)
            .map(|(g, &m)| if m { *g } else { 0.0 })
            .collect();
        Ok(ValueGrid::from_parts(grad.shape().to_vec(), values))
    }
}

impl Default for Relu {
    fn default() -> Self {
        Self::new()
    }
}

/// `[batch, channels, len]` to `[batch, channels * len]`.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn predict(x: &ValueGrid) -> Result<ValueGrid> {
        let s = x.shape();
        if s.len() < 2 {
            return Err(Error::Shape(format!("flatten needs a batch axis, got {s:?}")));
        }
        let b = s[0];
        x.reshaped(vec![b, x.len() / b.max(1)])
    }

    pub fn forward(&mut self, x: &ValueGrid) -> Result<ValueGrid> {
        self.input_shape = Some(x.shape().to_vec());
        Self::predict(x)
    }

    pub fn backward(&mut self, grad: &ValueGrid) -> Result<ValueGrid> {
        let shape = self.input_shape.clone().ok_or(Error::NoForward)?;
        grad.reshaped(shape)
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    Relu(Relu),
    Flatten(Flatten),
}

impl Layer {
    pub fn predict(&self, x: &ValueGrid) -> Result<ValueGrid> {
        match self {
            Layer::Dense(l) => l.predict(x),
            Layer::Conv1d(l) => l.predict(x),
            Layer::Relu(_) => Ok(Relu::predict(x)),
            Layer::Flatten(_) => Flatten::predict(x),
        }
    }

    pub fn forward(&mut self, x: &ValueGrid) -> Result<ValueGrid> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv1d(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Flatten(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, grad: &ValueGrid) -> Result<ValueGrid> {
        match self {
            Layer::Dense(l) => l.backward(grad),
            Layer::Conv1d(l) => l.backward(grad),
            Layer::Relu(l) => l.backward(grad),
            Layer::Flatten(l) => l.backward(grad),
        }
    }

    pub fn params(&self) -> Vec<&ValueGrid> {
        match self {
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Conv1d(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ValueGrid> {
        match self {
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv1d(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }
}

/// A chain of layers.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    /// Inference without recording anything for backward.
    pub fn predict(&self, x: &ValueGrid) -> Result<ValueGrid> {
        let mut h = self.layers.first().ok_or(Error::Empty("network has no layers"))?.predict(x)?;
        for l in &self.layers[1..] {
            h = l.predict(&h)?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &ValueGrid) -> Result<ValueGrid> {
        let (first, rest) = self.layers.split_first_mut().ok_or(Error::Empty("network has no layers"))?;
        let mut h = first.forward(x)?;
        for l in rest {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    /// Propagates `grad` (d loss / d output) back through the recorded
    /// forward pass, accumulating parameter gradients. Returns d loss / d input.
    pub fn backward(&mut self, grad: &ValueGrid) -> Result<ValueGrid> {
        let mut g = grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&ValueGrid> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ValueGrid> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Uniform in ±sqrt(1 / fan_in).
pub(crate) fn uniform_init<R: Rng>(rng: &mut R, shape: Vec<usize>, fan_in: usize) -> ValueGrid {
    let bound = (1.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    ValueGrid::from_parts(shape, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_cases() {
        let x = ValueGrid::new(vec![1, 4], vec![-1.0, 2.0, 0.0, -3.0]).unwrap();
        assert_eq!(Relu::predict(&x).values, vec![0.0, 2.0, 0.0, 0.0]);
        let neg = ValueGrid::new(vec![1, 2], vec![-1.0, -2.0]).unwrap();
        assert!(Relu::predict(&neg).values.iter().all(|&v| v == 0.0));
        let pos = ValueGrid::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(Relu::predict(&pos).values, pos.values);

        let mut r = Relu::new();
        r.forward(&x);
        let g = r.backward(&ValueGrid::new(vec![1, 4], vec![1.0; 4]).unwrap()).unwrap();
        assert_eq!(g.values, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_before_forward_fails() {
        let mut r = Relu::new();
        let g = ValueGrid::zeros(vec![1, 1]);
        assert!(matches!(r.backward(&g), Err(Error::NoForward)));
        let mut net = Sequential::new(vec![Layer::Flatten(Flatten::default())]);
        assert!(matches!(net.backward(&g), Err(Error::NoForward)));
    }
}
