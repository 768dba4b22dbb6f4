//! Small dense kernels that the solvers need and that are not worth a
//! LAPACK binding: Cholesky solves and an orthonormal basis via
//! re-orthogonalized Gram-Schmidt.

use ndarray::{Array2, ArrayView2, ArrayViewMut1, Axis};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape(format!("cholesky of {}x{}", n, a.ncols())));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for p in 0..j {
                diag -= l[[j, p]] * l[[j, p]];
            }
            if !(diag > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            let djj = diag.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for p in 0..j {
                    s -= l[[i, p]] * l[[j, p]];
                }
                l[[i, j]] = s / djj;
            }
        }
        Ok(Cholesky { lower: l })
    }

    /// Overwrites `x` with `A^{-1} x`.
    pub fn solve_in_place(&self, mut x: ArrayViewMut1<f64>) {
        let l = &self.lower;
        let n = l.nrows();
        for i in 0..n {
            let mut s = x[i];
            for p in 0..i {
                s -= l[[i, p]] * x[p];
            }
            x[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in (i + 1)..n {
                s -= l[[p, i]] * x[p];
            }
            x[i] = s / l[[i, i]];
        }
    }
}

/// Orthonormal basis of the column space of `a`. Columns whose residual
/// norm after projection falls below `rel_tol * max_col_norm` are dropped.
pub fn orthonormal_basis(a: ArrayView2<f64>, rel_tol: f64) -> Array2<f64> {
    let d = a.nrows();
    let scale = a
        .axis_iter(Axis(1))
        .map(|c| c.dot(&c).sqrt())
        .fold(0.0_f64, f64::max);
    let mut basis: Vec<ndarray::Array1<f64>> = Vec::new();
    if scale == 0.0 {
        return Array2::zeros((d, 0));
    }
    for col in a.axis_iter(Axis(1)) {
        let mut v = col.to_owned();
        // two passes of classical Gram-Schmidt keep orthogonality at machine precision
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.scaled_add(-c, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > rel_tol * scale {
            v /= norm;
            basis.push(v);
        }
    }
    let mut q = Array2::zeros((d, basis.len()));
    for (j, v) in basis.iter().enumerate() {
        q.column_mut(j).assign(v);
    }
    q
}

pub(crate) fn frob_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}
