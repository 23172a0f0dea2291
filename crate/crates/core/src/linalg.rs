//! Dense solves on [`Tensor`]s, backed by nalgebra.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn to_na(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn from_na(m: &DMatrix<f64>) -> Tensor {
    Tensor::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// LU solve of `a x = b` for square `a`; `None` when `a` is singular.
pub fn lu_solve(a: &Tensor, b: &Tensor) -> Result<Option<Tensor>> {
    if a.rows() != a.cols() || a.rows() != b.rows() {
        return Err(Error::Shape {
            op: "lu_solve",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(to_na(a).lu().solve(&to_na(b)).map(|x| from_na(&x)))
}

/// Singular values in descending order.
pub fn singular_values(a: &Tensor) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = to_na(a).singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Minimum-norm least-squares solution of `a x = b` through the SVD; singular
/// values below `1e-12 * sigma_max` are treated as zero.
pub fn lstsq_min_norm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rows() != b.rows() {
        return Err(Error::Shape {
            op: "lstsq",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    if a.is_empty() {
        return Ok(Tensor::zeros(a.cols(), b.cols()));
    }
    let svd = to_na(a).svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    if sigma_max == 0.0 {
        return Ok(Tensor::zeros(a.cols(), b.cols()));
    }
    let x = svd.solve(&to_na(b), 1e-12 * sigma_max).map_err(|e| Error::Numeric(e.into()))?;
    Ok(from_na(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gauss-Jordan elimination with partial pivoting.
    fn gauss_solve(a: &Tensor, b: &Tensor) -> Tensor {
        let n = a.rows();
        let m = b.cols();
        let mut aug: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).iter().chain(b.row(i)).copied().collect()).collect();
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| aug[x][c].abs().total_cmp(&aug[y][c].abs())).unwrap();
            aug.swap(c, p);
            let piv = aug[c][c];
            for v in aug[c].iter_mut() {
                *v /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = aug[r][c];
                    let pivot_row = aug[c].clone();
                    for (dst, src) in aug[r].iter_mut().zip(&pivot_row) {
                        *dst -= f * src;
                    }
                }
            }
        }
        Tensor::from_fn(n, m, |i, j| aug[i][n + j])
    }

    #[test]
    fn lu_matches_elimination() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for n in 1..7 {
            let a = Tensor::from_fn(n, n, |i, j| r.random::<f64>() + if i == j { n as f64 } else { 0.0 });
            let b = Tensor::from_fn(n, 2, |_, _| r.random::<f64>());
            let x = lu_solve(&a, &b).unwrap().unwrap();
            assert!(x.max_abs_diff(&gauss_solve(&a, &b)).unwrap() < 1e-12);
        }
        assert!(lu_solve(&Tensor::zeros(2, 2), &Tensor::zeros(2, 1)).unwrap().is_none());
    }

    #[test]
    fn min_norm_underdetermined() {
        // x1 + x2 = 2 has min-norm solution (1, 1)
        let a = Tensor::row_vector(&[1.0, 1.0]);
        let x = lstsq_min_norm(&a, &Tensor::scalar(2.0)).unwrap();
        assert!(x.max_abs_diff(&Tensor::from_vec(2, 1, vec![1.0, 1.0]).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn least_squares_overdetermined() {
        // fit y = c to [1, 2, 3] -> c = 2
        let a = Tensor::filled(3, 1, 1.0);
        let b = Tensor::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert!((lstsq_min_norm(&a, &b).unwrap().item() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_values_of_diagonal() {
        let a = Tensor::from_rows(&[&[0.5, 0.0], &[0.0, -3.0]]).unwrap();
        let s = singular_values(&a);
        assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 0.5).abs() < 1e-12);
    }
}
