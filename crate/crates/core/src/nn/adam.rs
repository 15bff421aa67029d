use super::ValueGrid;
use crate::error::{Error, Result};

/// Adam with bias correction. Moments are allocated lazily on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// One update of every parameter from its accumulated gradient. Parameters
    /// without a gradient buffer are treated as having zero gradient.
    pub fn step(&mut self, params: &mut [&mut ValueGrid]) -> Result<()> {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len()
            || params.iter().zip(&self.first_moment).any(|(p, m)| p.len() != m.len())
        {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first_moment).zip(&mut self.second_moment) {
            let Some(grad) = p.grad.as_ref() else {
                // moments still decay
                m.iter_mut().for_each(|x| *x *= b1);
                v.iter_mut().for_each(|x| *x *= b2);
                continue;
            };
            let grad = grad.clone();
            for (((w, g), m), v) in p.values.iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
