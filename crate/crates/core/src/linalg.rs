//! One-sided Jacobi SVD.
//!
//! nalgebra's bidiagonal SVD can lose accuracy on exactly rank-deficient
//! inputs such as centered data matrices, so singular decompositions go
//! through this routine instead. It is accurate to a few ulps of the largest
//! singular value regardless of rank.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

const MAX_SWEEPS: usize = 80;

/// `a = u diag(s) v^T` with `s` descending and `k = min(m, n)` triplets.
/// Singular vectors paired with a zero singular value may be zero.
#[derive(Debug, Clone)]
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (m, n) = a.shape();
    if m < n {
        let t = jacobi_columns(a.transpose());
        ThinSvd {
            u: t.v,
            s: t.s,
            v: t.u,
        }
    } else {
        jacobi_columns(a.clone())
    }
}

/// Orthogonalizes the columns of `w` (`m x n`, `m >= n`) by plane rotations.
fn jacobi_columns(mut w: DMatrix<f64>) -> ThinSvd {
    let n = w.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut norms: Vec<f64> = (0..n).map(|j| w.column(j).norm_squared()).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = norms[i];
                let beta = norms[j];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = w.column(i).dot(&w.column(j));
                if gamma.abs() <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut w, i, j, c, s);
                rotate(&mut v, i, j, c, s);
                norms[i] = w.column(i).norm_squared();
                norms[j] = w.column(j).norm_squared();
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sig: Vec<f64> = norms.iter().map(|&q| libm::sqrt(q)).collect();
    order.sort_by(|&a, &b| sig[b].total_cmp(&sig[a]));
    let m = w.nrows();
    let mut u = DMatrix::zeros(m, n);
    let mut v_sorted = DMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        let sk = libm::sqrt(w.column(k).norm_squared());
        if sk > 0.0 {
            u.set_column(col, &(w.column(k) / sk));
        }
        v_sorted.set_column(col, &v.column(k));
        s.push(sk);
    }
    ThinSvd { u, s, v: v_sorted }
}

fn rotate(a: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..a.nrows() {
        let x = a[(r, i)];
        let y = a[(r, j)];
        a[(r, i)] = c * x - s * y;
        a[(r, j)] = s * x + c * y;
    }
}

impl ThinSvd {
    /// `v diag(1/s) u^T b` over the singular values above `cutoff`.
    pub fn solve(&self, b: &DVector<f64>, cutoff: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.v.nrows());
        for (k, &sk) in self.s.iter().enumerate() {
            if sk > cutoff {
                let coef = self.u.column(k).dot(b) / sk;
                out.axpy(coef, &self.v.column(k), 1.0);
            }
        }
        out
    }
}
