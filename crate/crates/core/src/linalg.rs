//! Dense kernels that nalgebra does not provide at the speed we need.

use nalgebra::{DMatrix, DMatrixView};

/// `X Xᵀ` for an `n x d` matrix (or row block view), computed with a blocked
/// GEMM directly on the strided storage. The result is exactly symmetric.
pub fn gram(x: DMatrixView<'_, f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let (rs, cs) = x.strides();
    let mut c = DMatrix::<f64>::zeros(n, n);
    if n == 0 || d == 0 {
        return c;
    }
    // SAFETY: the view is valid for reads over n rows and d columns with the
    // given strides, and `c` is a fresh contiguous n x n column-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            n,
            d,
            n,
            1.0,
            x.as_ptr(),
            rs as isize,
            cs as isize,
            x.as_ptr(),
            cs as isize,
            rs as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            n as isize,
        );
    }
    symmetrize_upper(&mut c);
    c
}

/// `X diag(w) Xᵀ`.
pub fn weighted_gram(x: DMatrixView<'_, f64>, w: &[f64]) -> DMatrix<f64> {
    assert_eq!(x.ncols(), w.len());
    let mut scaled = x.into_owned();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= w[j].sqrt();
    }
    gram(scaled.as_view())
}

/// Copy the upper triangle onto the lower one.
pub fn symmetrize_upper(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            a[(i, j)] = a[(j, i)];
        }
    }
}

/// `(B + Bᵀ) / 2`.
pub fn symmetric_part(b: &DMatrix<f64>) -> DMatrix<f64> {
    (b + b.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_matches_naive_product_on_views() {
        let x = DMatrix::from_fn(7, 13, |i, j| ((i * 13 + j) as f64 * 0.37).sin());
        let g = gram(x.as_view());
        let naive = &x * x.transpose();
        assert!((&g - &naive).abs().max() < 1e-12);
        let block = x.rows(2, 3);
        let gb = gram(block);
        let naive_b = block * block.transpose();
        assert!((&gb - &naive_b).abs().max() < 1e-12);
        assert_eq!(gb, gb.transpose());
    }

    #[test]
    fn weighted_gram_matches_naive() {
        let x = DMatrix::from_fn(4, 6, |i, j| (i as f64 + 1.0) * (j as f64 - 2.5));
        let w = [1.0, 2.0, 0.5, 3.0, 1.5, 0.25];
        let naive = &x * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&w)) * x.transpose();
        assert!((weighted_gram(x.as_view(), &w) - naive).abs().max() < 1e-10);
    }
}
