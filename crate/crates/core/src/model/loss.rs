//! Losses over batches. Each returns the scalar loss and its gradient with
//! respect to the prediction(s). The ℓ1 subgradient at 0 is taken as 0.

use crate::nn::ValueGrid;
use crate::error::{Error, Result};

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn same_shape(a: &ValueGrid, b: &ValueGrid) -> Result<()> {
    if a.shape() != b.shape() || a.shape().len() != 2 {
        return Err(Error::Shape(format!("loss operands {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn batch(a: &ValueGrid) -> Result<f64> {
    match a.batch() {
        0 => Err(Error::Empty("loss over an empty batch")),
        b => Ok(b as f64),
    }
}

/// ‖v − v̂‖₁ summed over the parameters, averaged over the batch.
pub fn parameter_loss(target: &ValueGrid, pred: &ValueGrid) -> Result<(f64, ValueGrid)> {
    same_shape(target, pred)?;
    let b = batch(pred)?;
    let mut loss = 0.0;
    let grad = pred
        .values
        .iter()
        .zip(&target.values)
        .map(|(p, t)| {
            loss += (p - t).abs();
            sign(p - t) / b
        })
        .collect();
    Ok((loss / b, ValueGrid::new(pred.shape().to_vec(), grad)?))
}

/// Mean absolute dB error per bin, averaged over the batch. The gradient is
/// with respect to `x_hat`.
pub fn spectral_loss(x: &ValueGrid, x_hat: &ValueGrid) -> Result<(f64, ValueGrid)> {
    same_shape(x, x_hat)?;
    let n = batch(x_hat)? * x_hat.row_len() as f64;
    let mut loss = 0.0;
    let grad = x_hat
        .values
        .iter()
        .zip(&x.values)
        .map(|(p, t)| {
            loss += (p - t).abs();
            sign(p - t) / n
        })
        .collect();
    Ok((loss / n, ValueGrid::new(x_hat.shape().to_vec(), grad)?))
}

/// Σ max(0, −v̂) + max(0, v̂ − 1) per example, averaged over the batch.
pub fn penalty_loss(v_hat: &ValueGrid) -> Result<(f64, ValueGrid)> {
    let b = batch(v_hat)?;
    let mut loss = 0.0;
    let grad = v_hat
        .values
        .iter()
        .map(|&v| {
            if v < 0.0 {
                loss -= v;
                -1.0 / b
            } else if v > 1.0 {
                loss += v - 1.0;
                1.0 / b
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss / b, ValueGrid::new(v_hat.shape().to_vec(), grad)?))
}

/// spectral + λ·penalty. Returns the loss and the gradients with respect to
/// `x_hat` and `v_hat`.
pub fn finetune_loss(
    x: &ValueGrid,
    x_hat: &ValueGrid,
    v_hat: &ValueGrid,
    lambda: f64,
) -> Result<(f64, ValueGrid, ValueGrid)> {
    let (ls, gx) = spectral_loss(x, x_hat)?;
    let (lp, mut gv) = penalty_loss(v_hat)?;
    gv.values.iter_mut().for_each(|g| *g *= lambda);
    Ok((ls + lambda * lp, gx, gv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> ValueGrid {
        ValueGrid::new(vec![1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn parameter_loss_examples() {
        let v = row(&[0.3; 10]);
        assert_eq!(parameter_loss(&v, &v).unwrap().0, 0.0);
        let up = row(&[0.4; 10]);
        assert!((parameter_loss(&v, &up).unwrap().0 - 1.0).abs() < 1e-12);
        let mut one = [0.3; 10];
        one[6] = 0.8;
        let (l, g) = parameter_loss(&v, &row(&one)).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g.values.iter().filter(|x| **x != 0.0).count(), 1);
    }

    #[test]
    fn spectral_loss_examples() {
        let x = row(&(0..256).map(|i| i as f64 / 50.0).collect::<Vec<_>>());
        assert_eq!(spectral_loss(&x, &x).unwrap().0, 0.0);
        let shifted = row(&x.values.iter().map(|v| v + 1.0).collect::<Vec<_>>());
        let (l, g) = spectral_loss(&x, &shifted).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert!(g.values.iter().all(|v| *v == 1.0 / 256.0));
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty_loss(&row(&[0.0, 0.5, 1.0])).unwrap().0, 0.0);
        let (l, g) = penalty_loss(&row(&[0.5, 1.2])).unwrap();
        assert!((l - 0.2).abs() < 1e-15);
        assert_eq!(g.values, vec![0.0, 1.0]);
        let (l, g) = penalty_loss(&row(&[-0.3, 0.5])).unwrap();
        assert_eq!(l, 0.3);
        assert_eq!(g.values, vec![-1.0, 0.0]);
    }

    #[test]
    fn finetune_examples() {
        let x = row(&[1.0, -2.0]);
        let x_hat = row(&[1.5, -2.0]);
        let inside = row(&[0.2; 10]);
        let (l, _, gv) = finetune_loss(&x, &x_hat, &inside, 1.0).unwrap();
        assert_eq!(l, spectral_loss(&x, &x_hat).unwrap().0);
        assert!(gv.values.iter().all(|g| *g == 0.0));
        assert_eq!(finetune_loss(&x, &x, &inside, 1.0).unwrap().0, 0.0);
        let mut v = [0.2; 10];
        v[3] = 1.5;
        assert_eq!(finetune_loss(&x, &x, &row(&v), 1.0).unwrap().0, 0.5);
        assert_eq!(finetune_loss(&x, &x, &row(&v), 0.0).unwrap().0, 0.0);
    }

    #[test]
    fn batch_mean_and_errors() {
        let t = ValueGrid::new(vec![2, 2], vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let p = ValueGrid::new(vec![2, 2], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(parameter_loss(&t, &p).unwrap().0, 1.0);
        assert!(parameter_loss(&t, &row(&[0.0; 4])).is_err());
        assert!(penalty_loss(&ValueGrid::zeros(vec![0, 10])).is_err());
    }
}
