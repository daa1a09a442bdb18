//! Subspace comparison and classification error measures.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::thin_svd;
use crate::{Dataset, Error, Result};

/// Tolerance on `|A^T A - I|_max` for inputs to [`principal_angles`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceReport {
    /// Ascending, in radians.
    pub principal_angles: Vec<f64>,
    pub max_angle: f64,
    /// Product of the cosines of the angles.
    pub alignment: f64,
}

fn check_orthonormal(a: &DMatrix<f64>) -> Result<()> {
    let gram = a.transpose() * a;
    let deviation = (gram - DMatrix::identity(a.ncols(), a.ncols())).amax();
    if deviation > ORTHONORMAL_TOL || !deviation.is_finite() {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

/// Principal angles between the column spans of two orthonormal bases.
/// There are `min(k, m)` angles.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SubspaceReport> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    check_orthonormal(a)?;
    check_orthonormal(b)?;
    let mut cosines: Vec<f64> = if a.ncols() == 0 || b.ncols() == 0 {
        Vec::new()
    } else {
        thin_svd(&(a.transpose() * b))
            .s
            .iter()
            .map(|s| s.clamp(0.0, 1.0))
            .collect()
    };
    cosines.sort_by(|x, y| y.total_cmp(x));
    let principal_angles: Vec<f64> = cosines.iter().map(|&c| libm::acos(c)).collect();
    Ok(SubspaceReport {
        max_angle: principal_angles.last().copied().unwrap_or(0.0),
        alignment: cosines.iter().product(),
        principal_angles,
    })
}

/// Majority vote of the `k` nearest training points (Euclidean). Distance
/// ties go to the lower training index; an even split votes `+1`.
pub fn knn_classify(train: &Dataset, test_points: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    let n = train.n();
    if n == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "must satisfy 1 <= k <= number of training points",
        });
    }
    if test_points.ncols() != train.p() {
        return Err(Error::DimensionMismatch {
            expected: train.p(),
            found: test_points.ncols(),
        });
    }
    train.check_binary_labels()?;
    let x = train.x();
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(test_points.nrows());
    for q in test_points.row_iter() {
        dist.clear();
        dist.extend((0..n).map(|i| {
            let d: f64 = x
                .row(i)
                .iter()
                .zip(q.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, i)
        }));
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let vote: f64 = dist[..k].iter().map(|&(_, i)| train.y()[i]).sum();
        labels.push(if vote < 0.0 { -1.0 } else { 1.0 });
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub error_rate: f64,
    pub n_errors: usize,
    pub n_test: usize,
    pub method_label: String,
    pub dimension_used: usize,
}

/// Fraction of mismatched labels. An empty comparison has rate zero.
pub fn error_rate(
    predicted: &[f64],
    actual: &[f64],
    method_label: &str,
    dimension_used: usize,
) -> Result<ErrorReport> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    let n_errors = predicted.iter().zip(actual).filter(|(p, a)| p != a).count();
    let n_test = actual.len();
    Ok(ErrorReport {
        error_rate: if n_test == 0 {
            0.0
        } else {
            n_errors as f64 / n_test as f64
        },
        n_errors,
        n_test,
        method_label: String::from(method_label),
        dimension_used,
    })
}

/// Leave-one-out misclassification count. `method(train, x)` fits on
/// `train` and labels the held-out point `x`.
pub fn loo_error<F>(data: &Dataset, mut method: F) -> Result<usize>
where
    F: FnMut(&Dataset, &DVector<f64>) -> Result<f64>,
{
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let mut errors = 0;
    for i in 0..n {
        let fold = data.without(i);
        let held_out = data.x().row(i).transpose();
        let label = method(&fold, &held_out).map_err(|e| Error::Fold {
            index: i,
            source: alloc::boxed::Box::new(e),
        })?;
        if label != data.y()[i] {
            errors += 1;
        }
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identical_and_orthogonal() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let same = principal_angles(&a, &a).unwrap();
        assert_eq!(same.principal_angles, vec![0.0]);
        assert_eq!(same.alignment, 1.0);
        let orth = principal_angles(&a, &b).unwrap();
        assert!((orth.max_angle - core::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(orth.alignment, 0.0);
    }

    #[test]
    fn planar_angle() {
        let t = 0.3;
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[libm::cos(t), libm::sin(t)]);
        let rep = principal_angles(&a, &b).unwrap();
        assert!((rep.principal_angles[0] - t).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(
            principal_angles(&a, &a),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn knn_basics() {
        let train = Dataset::new(
            DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]),
            DVector::from_vec(vec![1.0, -1.0, 1.0]),
        )
        .unwrap();
        let q = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert_eq!(knn_classify(&train, &q, 1).unwrap(), vec![-1.0]);
        // nearest two are index 1 (d=0) and index 0 (tie with 2, lower index wins)
        let q = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert_eq!(knn_classify(&train, &q, 2).unwrap(), vec![1.0]);
        assert!(knn_classify(&train, &q, 4).is_err());
        assert!(knn_classify(&train, &q, 0).is_err());
    }

    #[test]
    fn rates() {
        let a = [1.0, -1.0, 1.0, 1.0];
        assert_eq!(error_rate(&a, &a, "x", 1).unwrap().error_rate, 0.0);
        let flipped: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(error_rate(&flipped, &a, "x", 1).unwrap().error_rate, 1.0);
        let one_off = [1.0, -1.0, 1.0, -1.0];
        let rep = error_rate(&one_off, &a, "x", 1).unwrap();
        assert_eq!((rep.error_rate, rep.n_errors), (0.25, 1));
        assert!(error_rate(&a[..2], &a, "x", 1).is_err());
    }

    #[test]
    fn loo_constant_predictor() {
        let data = Dataset::new(
            DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]),
            DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]),
        )
        .unwrap();
        assert_eq!(loo_error(&data, |_, _| Ok(1.0)).unwrap(), 2);
        let err = loo_error(&data, |train, _| {
            if train.y()[0] < 0.0 {
                Err(Error::EmptySpectrum)
            } else {
                Ok(1.0)
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Fold { index: 0, .. }));
    }
}
