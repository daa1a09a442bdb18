use nalgebra::{DMatrix, DVector};

use crate::linalg::thin_svd;
use crate::{Error, Result};

/// Orthonormal basis of the centered data span.
///
/// Every difference `x_j - x_i` lies in this span, and so does every
/// stationary gradient coefficient, so the gradient problems can be solved
/// in `r <= min(p, n - 1)` coordinates without loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanBasis {
    basis: DMatrix<f64>,
    coords: DMatrix<f64>,
    mean: DVector<f64>,
}

impl SpanBasis {
    /// `p x r`, orthonormal columns.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `n x r`, row `i` is `basis^T (x_i - mean)`.
    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// The trivial basis `I_p` with the raw points as coordinates. Used
    /// when no reduction is wanted.
    pub fn identity(x: &DMatrix<f64>) -> SpanBasis {
        let p = x.ncols();
        SpanBasis {
            basis: DMatrix::identity(p, p),
            coords: x.clone(),
            mean: DVector::zeros(p),
        }
    }
}

/// Thin SVD of the centered data. Singular directions below `1e-10` of the
/// largest singular value are dropped.
pub fn span_basis(x: &DMatrix<f64>) -> Result<SpanBasis> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let svd = thin_svd(&centered);
    let top = svd.s.first().copied().unwrap_or(0.0);
    let r = svd.s.iter().filter(|&&sk| top > 0.0 && sk >= 1e-10 * top).count();
    let basis = svd.v.columns(0, r).into_owned();
    let coords = &centered * &basis;
    Ok(SpanBasis {
        basis,
        coords,
        mean,
    })
}
