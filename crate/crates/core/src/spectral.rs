//! Gradient outer product and gradient covariance matrices, kept as `p x n`
//! factors, and their spectral decomposition.
//!
//! Neither `p x p` matrix is ever formed. The nonzero eigenpairs of
//! `F F^T` are `(s_l^2, u_l)` for the thin SVD `F = U S V^T`, which costs
//! `O(n^2 p)` time per sweep and `O(n p)` memory.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::kernel::{row_sq_dist, KernelSpec, PsdFactor};
use crate::linalg::thin_svd;
use crate::{Error, Result};

/// A function `f(x) = sum_i c_i K(x, x_i)` with vector coefficients.
pub trait GradientField {
    /// `p x n`; column `i` is `c_i`.
    fn coefficients(&self) -> &DMatrix<f64>;
    /// `n x p`.
    fn train_points(&self) -> &DMatrix<f64>;
    fn kernel(&self) -> &KernelSpec;

    fn dim(&self) -> usize {
        self.coefficients().nrows()
    }

    /// `k(x)_i = K(x, x_i)`.
    fn kernel_row(&self, x: &[f64]) -> Result<DVector<f64>> {
        let pts = self.train_points();
        if x.len() != pts.ncols() {
            return Err(Error::DimensionMismatch {
                expected: pts.ncols(),
                found: x.len(),
            });
        }
        let kern = self.kernel();
        Ok(DVector::from_iterator(
            pts.nrows(),
            (0..pts.nrows()).map(|i| kern.eval_sq(row_sq_dist(pts, i, x))),
        ))
    }

    fn gradient_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.coefficients() * self.kernel_row(x)?)
    }

    /// `|f|_K^2 = sum_lm K_lm c_l . c_m`.
    fn rkhs_norm_sq(&self) -> f64 {
        let k = crate::kernel::kernel_matrix(self.train_points(), self.kernel());
        let c = self.coefficients();
        (c.transpose() * c).component_mul(&k).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKind {
    /// Gradient outer product `(1/m) sum_l f(x_l) f(x_l)^T`.
    Gop,
    /// Gradient covariance `c K c^T`.
    Egcm,
}

/// A PSD `p x p` matrix represented as `F F^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankGram {
    factor: DMatrix<f64>,
    kind: GramKind,
}

impl LowRankGram {
    pub fn new(factor: DMatrix<f64>, kind: GramKind) -> Self {
        LowRankGram { factor, kind }
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn kind(&self) -> GramKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Materializes `F F^T`. Only for small `p`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// `(F F^T) v` without forming the product.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.factor * (self.factor.tr_mul(v))
    }
}

/// Factor columns `f_D(x_l) / sqrt(m)` over the `m` rows of `x_eval`.
pub fn gradient_outer_product<M: GradientField + ?Sized>(
    model: &M,
    x_eval: &DMatrix<f64>,
) -> Result<LowRankGram> {
    let m = x_eval.nrows();
    let p = model.dim();
    if x_eval.ncols() != model.train_points().ncols() {
        return Err(Error::DimensionMismatch {
            expected: model.train_points().ncols(),
            found: x_eval.ncols(),
        });
    }
    let mut factor = DMatrix::zeros(p, m);
    if m == 0 {
        return Ok(LowRankGram::new(factor, GramKind::Gop));
    }
    let scale = 1.0 / libm::sqrt(m as f64);
    let mut q = Vec::with_capacity(x_eval.ncols());
    for l in 0..m {
        q.clear();
        q.extend(x_eval.row(l).iter().copied());
        let g = model.gradient_at(&q)?;
        factor.set_column(l, &(g * scale));
    }
    Ok(LowRankGram::new(factor, GramKind::Gop))
}

/// Factor `c_D L` where `L L^T` is the training kernel matrix.
pub fn egcm<M: GradientField + ?Sized>(model: &M, k_factor: &PsdFactor) -> Result<LowRankGram> {
    let n = model.coefficients().ncols();
    if k_factor.l().nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k_factor.l().nrows(),
        });
    }
    Ok(LowRankGram::new(
        model.coefficients() * k_factor.l(),
        GramKind::Egcm,
    ))
}

/// Convenience: factor the model's own kernel matrix and build the EGCM.
pub fn egcm_of<M: GradientField + ?Sized>(model: &M) -> Result<LowRankGram> {
    let k = crate::kernel::kernel_matrix(model.train_points(), model.kernel());
    let l = crate::kernel::cholesky_psd(&k, &crate::kernel::JitterSchedule::default())?;
    egcm(model, &l)
}

/// Descending eigenpairs of a [`LowRankGram`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    kind: GramKind,
    near_degenerate: bool,
}

impl SpectralResult {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `p x k`, orthonormal columns.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn kind(&self) -> GramKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Some adjacent pair of returned eigenvalues is closer than
    /// `1e-10 * lambda_1`; vectors inside such a cluster are only determined
    /// up to a rotation.
    pub fn near_degenerate(&self) -> bool {
        self.near_degenerate
    }
}

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

/// Top `min(k_max, rank)` eigenpairs of `F F^T` from the thin SVD of `F`.
/// Each eigenvector has its largest-magnitude entry made positive.
pub fn top_eigen(gram: &LowRankGram, k_max: usize) -> SpectralResult {
    let f = gram.factor();
    let (p, n) = f.shape();
    let empty = SpectralResult {
        eigenvalues: Vec::new(),
        eigenvectors: DMatrix::zeros(p, 0),
        kind: gram.kind(),
        near_degenerate: false,
    };
    if p == 0 || n == 0 || k_max == 0 || f.iter().all(|&v| v == 0.0) {
        return empty;
    }
    let svd = thin_svd(f);
    let s = &svd.s;
    let top = s[0] * s[0];
    if !(top > 0.0) {
        return empty;
    }
    let kept: Vec<usize> = (0..s.len())
        .filter(|&i| s[i] * s[i] > RANK_TOL * top)
        .take(k_max)
        .collect();

    let mut eigenvalues = Vec::with_capacity(kept.len());
    let mut eigenvectors = DMatrix::zeros(p, kept.len());
    for (col, &i) in kept.iter().enumerate() {
        let mut v = svd.u.column(i).into_owned();
        let v_norm = v.norm();
        v /= v_norm;
        let lead = v.iamax();
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        eigenvectors.set_column(col, &v);
        eigenvalues.push(s[i] * s[i]);
    }
    let near_degenerate = eigenvalues
        .windows(2)
        .any(|w| w[0] - w[1] < 1e-10 * top);
    SpectralResult {
        eigenvalues,
        eigenvectors,
        kind: gram.kind(),
        near_degenerate,
    }
}

/// Retained directions `B_hat` (`p x k`). For an EGCM spectrum these are the
/// empirical sensitive linear features.
#[derive(Debug, Clone, PartialEq)]
pub struct EdrEstimate {
    directions: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl EdrEstimate {
    /// Wraps an externally supplied orthonormal basis.
    pub fn from_directions(directions: DMatrix<f64>, eigenvalues: Vec<f64>) -> Self {
        EdrEstimate {
            directions,
            eigenvalues,
        }
    }

    pub fn directions(&self) -> &DMatrix<f64> {
        &self.directions
    }

    pub fn k(&self) -> usize {
        self.directions.ncols()
    }

    pub fn eigenvalues_used(&self) -> &[f64] {
        &self.eigenvalues
    }
}

pub fn edr_estimate(spec: &SpectralResult, k: usize) -> Result<EdrEstimate> {
    if k > spec.len() {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "exceeds the number of available eigenpairs",
        });
    }
    Ok(EdrEstimate {
        directions: spec.eigenvectors().columns(0, k).into_owned(),
        eigenvalues: spec.eigenvalues()[..k].to_vec(),
    })
}

/// `X B_hat`.
pub fn project(x: &DMatrix<f64>, edr: &EdrEstimate) -> Result<DMatrix<f64>> {
    if x.ncols() != edr.directions().nrows() {
        return Err(Error::DimensionMismatch {
            expected: edr.directions().nrows(),
            found: x.ncols(),
        });
    }
    Ok(x * edr.directions())
}

/// `(lambda_{k+1} / lambda_k, sum_{l>k} lambda_l / sum_l lambda_l)`.
///
/// Eigenvalues past the end of the returned spectrum count as zero, so an
/// exact rank-`k` factor gives `(0, 0)`.
pub fn trailing_eigenvalue_profile(spec: &SpectralResult, k_true: usize) -> Result<(f64, f64)> {
    let ev = spec.eigenvalues();
    if ev.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    if k_true == 0 {
        return Err(Error::InvalidParameter {
            name: "k_true",
            reason: "must be at least 1",
        });
    }
    let at = |i: usize| ev.get(i).copied().unwrap_or(0.0);
    let lead = at(k_true - 1);
    let next = at(k_true);
    let ratio = if lead > 0.0 { next / lead } else { 0.0 };
    let total: f64 = ev.iter().sum();
    let tail: f64 = ev.iter().skip(k_true).sum();
    let residual = if total > 0.0 { tail / total } else { 0.0 };
    Ok((ratio, residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_columns_are_their_own_eigenvectors() {
        // columns (2,0,0) and (0,1,0)
        let f = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let spec = top_eigen(&LowRankGram::new(f, GramKind::Gop), 5);
        assert_eq!(spec.len(), 2);
        assert!((spec.eigenvalues()[0] - 4.0).abs() < 1e-12);
        assert!((spec.eigenvalues()[1] - 1.0).abs() < 1e-12);
        let v = spec.eigenvectors();
        assert!((v[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((v[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_factor_has_empty_spectrum() {
        let spec = top_eigen(&LowRankGram::new(DMatrix::zeros(4, 3), GramKind::Egcm), 3);
        assert!(spec.is_empty());
        assert_eq!(spec.eigenvectors().shape(), (4, 0));
        assert_eq!(
            trailing_eigenvalue_profile(&spec, 1),
            Err(Error::EmptySpectrum)
        );
    }

    #[test]
    fn k_max_truncates() {
        let f = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
        let spec = top_eigen(&LowRankGram::new(f, GramKind::Gop), 2);
        assert_eq!(spec.eigenvalues().len(), 2);
        assert!(top_eigen(&LowRankGram::new(DMatrix::identity(3, 3), GramKind::Gop), 0).is_empty());
    }

    #[test]
    fn profile_arithmetic() {
        let f = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let spec = top_eigen(&LowRankGram::new(f, GramKind::Gop), 2);
        let (ratio, resid) = trailing_eigenvalue_profile(&spec, 1).unwrap();
        assert!((ratio - 0.25).abs() < 1e-12);
        assert!((resid - 0.2).abs() < 1e-12);

        let rank1 = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 0.0, 0.0]);
        let spec = top_eigen(&LowRankGram::new(rank1, GramKind::Gop), 2);
        assert_eq!(spec.len(), 1);
        assert_eq!(trailing_eigenvalue_profile(&spec, 1).unwrap(), (0.0, 0.0));
        assert!(trailing_eigenvalue_profile(&spec, 0).is_err());
    }

    #[test]
    fn edr_and_projection() {
        let f = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let spec = top_eigen(&LowRankGram::new(f, GramKind::Gop), 2);
        let none = edr_estimate(&spec, 0).unwrap();
        assert_eq!(none.k(), 0);
        assert!(edr_estimate(&spec, 3).is_err());
        let both = edr_estimate(&spec, 2).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 9.0]);
        let proj = project(&x, &both).unwrap();
        assert!((proj - DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5])).abs().max() < 1e-12);
        let own = project(&both.directions().transpose(), &both).unwrap();
        assert!((own - DMatrix::identity(2, 2)).abs().max() < 1e-12);
        assert!(project(&DMatrix::zeros(1, 2), &both).is_err());
        assert_eq!(both.eigenvalues_used().len(), 2);
    }
}
