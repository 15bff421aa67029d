use crate::error::{Error, Result};

/// Dense row-major array with an optional same-shape gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl ValueGrid {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                values.len()
            )));
        }
        Ok(ValueGrid {
            shape,
            values,
            grad: None,
        })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        ValueGrid {
            shape,
            values,
            grad: None,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        ValueGrid::from_parts(shape, vec![0.0; n])
    }

    /// Stacks equal-length rows into a `[rows, len]` grid.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * len);
        for r in rows {
            if r.as_ref().len() != len {
                return Err(Error::Shape("rows differ in length".into()));
            }
            values.extend_from_slice(r.as_ref());
        }
        Ok(ValueGrid::from_parts(vec![rows.len(), len], values))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per batch row.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.row_len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        ValueGrid::new(shape, self.values.clone())
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.values.len()]),
        }
    }

    pub fn grad_mut(&mut self) -> &mut Vec<f64> {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }
}
