//! Outer product of gradients: at every sample `x_j` fit a weighted local
//! linear model `y_i ~ a + b.(x_i - x_j)` and collect the slopes `b_j`.
//!
//! Slopes are computed in the coordinates of the centered data span. With a
//! positive ridge the penalized minimizer lies in that span anyway, and with
//! no ridge the problem is only well posed when the span is all of `R^p`.

use nalgebra::{DMatrix, DVector};

use crate::kernel::{weight_matrix, WeightSpec};
use crate::linalg::thin_svd;
use crate::span::span_basis;
use crate::spectral::{GramKind, LowRankGram};
use crate::{Dataset, Error, Result};

/// Reciprocal condition number below which an unridged local system is
/// treated as singular.
const SINGULAR_RCOND: f64 = 1e-12;

/// Ridge scale relative to the trace of the local weighted second moment.
const AUTO_RIDGE_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpgRidge {
    /// The same ridge at every point.
    Fixed(f64),
    /// `1e-8` times the trace of `sum_i w_ij d_ij d_ij^T` when `p >= n`,
    /// zero otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpgFit {
    intercepts: DVector<f64>,
    slopes: DMatrix<f64>,
    ridge_used: f64,
}

impl OpgFit {
    /// `a_j`, the local fitted values.
    pub fn intercepts(&self) -> &DVector<f64> {
        &self.intercepts
    }

    /// `p x n`, column `j` is `b_j`.
    pub fn slopes(&self) -> &DMatrix<f64> {
        &self.slopes
    }

    /// Largest ridge applied at any point.
    pub fn ridge_used(&self) -> f64 {
        self.ridge_used
    }
}

pub fn opg_fit(data: &Dataset, weight: &WeightSpec, ridge: OpgRidge) -> Result<OpgFit> {
    let (n, p) = (data.n(), data.p());
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    if let OpgRidge::Fixed(v) = ridge {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ridge",
                reason: "must be nonnegative and finite",
            });
        }
    }
    let span = span_basis(data.x())?;
    let u = span.coords();
    let r = span.rank();
    let w = weight_matrix(data.x(), weight);
    let y = data.y();

    let mut intercepts = DVector::zeros(n);
    let mut reduced = DMatrix::zeros(r, n);
    let mut ridge_used = 0.0f64;
    for j in 0..n {
        let mut m = DMatrix::zeros(r + 1, r + 1);
        let mut rhs = DVector::zeros(r + 1);
        let mut z = DVector::zeros(r + 1);
        for i in 0..n {
            z[0] = 1.0;
            for a in 0..r {
                z[a + 1] = u[(i, a)] - u[(j, a)];
            }
            m.ger(w[(i, j)], &z, &z, 1.0);
            rhs.axpy(w[(i, j)] * y[i], &z, 1.0);
        }
        let ridge_j = match ridge {
            OpgRidge::Fixed(v) => v,
            OpgRidge::Auto if p >= n => {
                AUTO_RIDGE_FACTOR * (1..=r).map(|a| m[(a, a)]).sum::<f64>()
            }
            OpgRidge::Auto => 0.0,
        };
        if ridge_j == 0.0 && r < p {
            return Err(Error::SingularSystem { max_jitter: 0.0 });
        }
        for a in 1..=r {
            m[(a, a)] += ridge_j;
        }
        ridge_used = ridge_used.max(ridge_j);

        let svd = thin_svd(&m);
        let top = svd.s[0];
        let low = svd.s[r];
        if !(top > 0.0) || (ridge_j == 0.0 && low < SINGULAR_RCOND * top) {
            return Err(Error::SingularSystem { max_jitter: 0.0 });
        }
        let sol = svd.solve(&rhs, 0.0);
        intercepts[j] = sol[0];
        reduced.set_column(j, &sol.rows(1, r));
    }
    Ok(OpgFit {
        intercepts,
        slopes: span.basis() * reduced,
        ridge_used,
    })
}

/// `(1/n) sum_j b_j b_j^T` as a factor with columns `b_j / sqrt(n)`.
pub fn opg_gram(fit: &OpgFit) -> LowRankGram {
    let n = fit.slopes.ncols().max(1);
    LowRankGram::new(&fit.slopes / libm::sqrt(n as f64), GramKind::Gop)
}

/// Projection onto the leading principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaMap {
    mean: DVector<f64>,
    components: DMatrix<f64>,
}

impl PcaMap {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `p x m`, orthonormal columns ordered by decreasing variance.
    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn m(&self) -> usize {
        self.components.ncols()
    }
}

pub fn pca_fit(x: &DMatrix<f64>, m: usize) -> Result<PcaMap> {
    let (n, p) = x.shape();
    if m == 0 || m > p || m + 1 > n {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "must satisfy 1 <= m <= min(n - 1, p)",
        });
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let svd = thin_svd(&centered);
    let mut components = DMatrix::zeros(p, m);
    for col in 0..m {
        let mut v = svd.v.column(col).into_owned();
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        components.set_column(col, &v);
    }
    Ok(PcaMap { mean, components })
}

/// Rows of `x` in principal-component scores, `n x m`.
pub fn pca_apply(map: &PcaMap, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != map.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: map.mean.len(),
            found: x.ncols(),
        });
    }
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= map.mean.transpose();
    }
    Ok(centered * &map.components)
}

/// Directions found in score space (`m x k`) mapped back to `R^p`.
pub fn pca_lift(map: &PcaMap, directions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if directions.nrows() != map.m() {
        return Err(Error::DimensionMismatch {
            expected: map.m(),
            found: directions.nrows(),
        });
    }
    Ok(&map.components * directions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn data(x: &[f64], p: usize, y: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::new(DMatrix::from_row_slice(n, p, x), DVector::from_vec(y)).unwrap()
    }

    #[test]
    fn linear_response_is_exact() {
        let x = [0.0, 0.0, 1.0, 0.3, -0.4, 1.2, 0.7, -0.9, 2.0, 1.5];
        let y: Vec<f64> = x.chunks(2).map(|r| 0.5 + 2.0 * r[0] - r[1]).collect();
        let d = data(&x, 2, y.clone());
        let fit = opg_fit(&d, &WeightSpec::new(0.8).unwrap(), OpgRidge::Fixed(0.0)).unwrap();
        for j in 0..5 {
            assert!((fit.intercepts()[j] - y[j]).abs() < 1e-10);
            assert!((fit.slopes()[(0, j)] - 2.0).abs() < 1e-10);
            assert!((fit.slopes()[(1, j)] + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_response() {
        let d = data(&[0.0, 1.0, 0.5, 2.0, 3.0, -1.0], 2, vec![4.0, 4.0, 4.0]);
        let fit = opg_fit(&d, &WeightSpec::new(3.0).unwrap(), OpgRidge::Fixed(0.0)).unwrap();
        assert!(fit.slopes().amax() < 1e-12);
        assert!(fit.intercepts().iter().all(|a| (a - 4.0).abs() < 1e-12));
    }

    #[test]
    fn unridged_underdetermined_is_an_error() {
        let d = data(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 3, vec![1.0, 2.0]);
        let w = WeightSpec::new(1.0).unwrap();
        assert!(matches!(
            opg_fit(&d, &w, OpgRidge::Fixed(0.0)),
            Err(Error::SingularSystem { .. })
        ));
        let fit = opg_fit(&d, &w, OpgRidge::Auto).unwrap();
        assert!(fit.ridge_used() > 0.0);
    }

    #[test]
    fn gram_of_zero_slopes() {
        let d = data(&[0.0, 1.0, 2.0], 1, vec![1.0, 1.0, 1.0]);
        let fit = opg_fit(&d, &WeightSpec::new(1.0).unwrap(), OpgRidge::Fixed(0.0)).unwrap();
        assert!(opg_gram(&fit).factor().amax() < 1e-12);
    }

    #[test]
    fn pca_bounds() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert!(pca_fit(&x, 0).is_err());
        assert!(pca_fit(&x, 3).is_err());
        assert_eq!(pca_fit(&x, 2).unwrap().m(), 2);
    }

    #[test]
    fn pca_planar_data_reconstructs() {
        let x = DMatrix::from_fn(6, 4, |i, k| {
            let (s, t) = (i as f64 * 0.7 - 1.0, (i * i) as f64 * 0.1);
            [s + t, s - t, 2.0 * s, 0.5 * t][k] + 3.0
        });
        let map = pca_fit(&x, 2).unwrap();
        let scores = pca_apply(&map, &x).unwrap();
        let mut back = pca_lift(&map, &scores.transpose()).unwrap().transpose();
        for mut row in back.row_iter_mut() {
            row += map.mean().transpose();
        }
        assert!((back - x).amax() < 1e-9);
    }
}
