//! Safe wrapper over `matrixmultiply::dgemm` for strided views.

/// A strided `rows × cols` view into a slice.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    pub fn row_major(data: &'a [f64], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn fits(&self) -> bool {
        self.rows == 0
            || self.cols == 0
            || (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride < self.data.len()
    }
}

/// `c = a · b + beta · c` with `c` row-major `a.rows × b.cols`.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert!(a.fits() && b.fits(), "strided view exceeds its slice");
    assert!(c.len() >= a.rows * b.cols, "output too small");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    // SAFETY: the views were bounds-checked above and `c` does not alias `a` or `b`
    // (it is a unique borrow).
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_product() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3x4
        let mut c = vec![1.0; 8];
        gemm(MatRef::row_major(&a, 2, 3), MatRef::row_major(&b, 3, 4), 1.0, &mut c);
        for i in 0..2 {
            for j in 0..4 {
                let e: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum::<f64>() + 1.0;
                assert!((c[i * 4 + j] - e).abs() < 1e-12);
            }
        }
        // transposed view
        let mut d = vec![0.0; 9];
        gemm(MatRef::row_major(&a, 2, 3).t(), MatRef::row_major(&a, 2, 3), 0.0, &mut d);
        assert_eq!(d[0], 0.0 * 0.0 + 3.0 * 3.0);
        assert_eq!(d[5], 1.0 * 2.0 + 4.0 * 5.0);
    }
}
