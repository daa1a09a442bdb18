//! Regression gradient learning.
//!
//! Minimizes
//!
//! ```text
//! (1/n^2) sum_ij w_ij (y_j - y_i - f(x_i).(x_j - x_i))^2 + lambda |f|_K^2
//! ```
//!
//! over `f = sum_l c_l K(., x_l)`. With `F_i = f(x_i)` the minimizer is
//! characterized by the stationarity system
//!
//! ```text
//! B_i F_i + n^2 lambda c_i = h_i,   i = 1..n
//! B_i = sum_j w_ij (x_j - x_i)(x_j - x_i)^T
//! h_i = sum_j w_ij (y_j - y_i)(x_j - x_i)
//! ```
//!
//! whose solution lies in the span of the centered data. The fast path
//! solves it in that span (an `nr x nr` dense system); the oracle solves the
//! full `np x np` system.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::kernel::{kernel_matrix, weight_matrix, KernelSpec, WeightSpec};
use crate::span::{span_basis, SpanBasis};
use crate::spectral::GradientField;
use crate::{Dataset, Error, Result};

/// Ridge used when the caller has no better value.
pub const DEFAULT_LAMBDA: f64 = 1e-4;

/// Largest `n * p` accepted by [`dense_oracle_fit`].
pub const DENSE_ORACLE_LIMIT: usize = 2000;

/// Per-point weighted second and first moments of the local differences,
/// expressed in the coordinates of `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMoments {
    pub b: Vec<DMatrix<f64>>,
    pub h: Vec<DVector<f64>>,
    pub basis: DMatrix<f64>,
}

impl LocalMoments {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

/// `B_i = sum_j w_ij v_ij v_ij^T`, `h_i = sum_j w_ij (y_j - y_i) v_ij`, with
/// `v_ij = basis^T (x_j - x_i)` taken as the difference of span coordinates.
pub fn assemble_local_moments(
    data: &Dataset,
    weight: &WeightSpec,
    span: &SpanBasis,
) -> Result<LocalMoments> {
    let w = weight_matrix(data.x(), weight);
    moments_from_weights(&w, data.y(), span)
}

fn moments_from_weights(
    w: &DMatrix<f64>,
    y: &DVector<f64>,
    span: &SpanBasis,
) -> Result<LocalMoments> {
    let coords = span.coords();
    let (n, r) = coords.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    let mut b = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let mut v = DVector::zeros(r);
    for i in 0..n {
        let mut bi = DMatrix::zeros(r, r);
        let mut hi = DVector::zeros(r);
        for j in 0..n {
            if j == i {
                continue;
            }
            for a in 0..r {
                v[a] = coords[(j, a)] - coords[(i, a)];
            }
            let wij = w[(i, j)];
            bi.syger(wij, &v, &v, 1.0);
            hi.axpy(wij * (y[j] - y[i]), &v, 1.0);
        }
        bi.fill_upper_triangle_with_lower_triangle();
        b.push(bi);
        h.push(hi);
    }
    Ok(LocalMoments {
        b,
        h,
        basis: span.basis().clone(),
    })
}

/// Fitted regression gradient `f_D(x) = sum_i c_i K(x, x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientModel {
    coefficients: DMatrix<f64>,
    train_points: DMatrix<f64>,
    kernel: KernelSpec,
    weight: WeightSpec,
    lambda: f64,
    objective_value: f64,
}

impl GradientModel {
    /// Reassembles a model from stored parts (used by archive loaders).
    /// The objective value is carried through as given.
    pub fn from_parts(
        coefficients: DMatrix<f64>,
        train_points: DMatrix<f64>,
        kernel: KernelSpec,
        weight: WeightSpec,
        lambda: f64,
        objective_value: f64,
    ) -> Result<Self> {
        if coefficients.ncols() != train_points.nrows() {
            return Err(Error::DimensionMismatch {
                expected: train_points.nrows(),
                found: coefficients.ncols(),
            });
        }
        if coefficients.nrows() != train_points.ncols() {
            return Err(Error::DimensionMismatch {
                expected: train_points.ncols(),
                found: coefficients.nrows(),
            });
        }
        Ok(GradientModel {
            coefficients,
            train_points,
            kernel,
            weight,
            lambda,
            objective_value,
        })
    }

    /// `p x n`; column `i` is `c_i`.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn train_points(&self) -> &DMatrix<f64> {
        &self.train_points
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn objective_value(&self) -> f64 {
        self.objective_value
    }

    /// Same model with coefficients multiplied by `a`.
    pub fn scaled(&self, a: f64) -> GradientModel {
        GradientModel {
            coefficients: &self.coefficients * a,
            ..self.clone()
        }
    }
}

impl GradientField for GradientModel {
    fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    fn train_points(&self) -> &DMatrix<f64> {
        &self.train_points
    }

    fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
}

/// `f_D(x) = c_D k(x)`, defined for any `x` in `R^p`.
pub fn predict_gradient(model: &GradientModel, x: &[f64]) -> Result<DVector<f64>> {
    model.gradient_at(x)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "lambda",
            reason: "must be positive and finite",
        })
    }
}

/// Span-reduced solve of the stationarity system.
pub fn fit_gradient_regression(
    data: &Dataset,
    kernel: KernelSpec,
    weight: WeightSpec,
    lambda: f64,
) -> Result<GradientModel> {
    check_lambda(lambda)?;
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let span = span_basis(data.x())?;
    if span.rank() == 0 {
        log::warn!("all {n} training points coincide; returning the zero gradient model");
    }
    fit_in_span(data, kernel, weight, lambda, &span)
}

/// Full `np x np` solve with no span reduction. Accepts `n = 1`.
pub fn dense_oracle_fit(
    data: &Dataset,
    kernel: KernelSpec,
    weight: WeightSpec,
    lambda: f64,
) -> Result<GradientModel> {
    check_lambda(lambda)?;
    let np = data.n() * data.p();
    if np > DENSE_ORACLE_LIMIT {
        return Err(Error::SizeGuard {
            np,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    fit_in_span(data, kernel, weight, lambda, &SpanBasis::identity(data.x()))
}

fn fit_in_span(
    data: &Dataset,
    kernel: KernelSpec,
    weight: WeightSpec,
    lambda: f64,
    span: &SpanBasis,
) -> Result<GradientModel> {
    let n = data.n();
    let k = kernel_matrix(data.x(), &kernel);
    let w = weight_matrix(data.x(), &weight);
    let moments = moments_from_weights(&w, data.y(), span)?;
    let mu = (n * n) as f64 * lambda;
    let reduced = solve_stationarity(&k, &moments, mu)?;
    let coefficients = span.basis() * reduced;
    let objective_value = objective_with(&coefficients, data, &k, &w, lambda);
    Ok(GradientModel {
        coefficients,
        train_points: data.x().clone(),
        kernel,
        weight,
        lambda,
        objective_value,
    })
}

/// Solves `B_i sum_l K_il a_l + mu a_i = h_i`; returns `r x n` with column
/// `i` equal to `a_i`.
fn solve_stationarity(k: &DMatrix<f64>, moments: &LocalMoments, mu: f64) -> Result<DMatrix<f64>> {
    let n = moments.b.len();
    let r = moments.rank();
    let dim = n * r;
    if dim == 0 {
        return Ok(DMatrix::zeros(r, n));
    }
    let mut system = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        let bi = &moments.b[i];
        for l in 0..n {
            let kil = k[(i, l)];
            if kil == 0.0 {
                continue;
            }
            let mut block = system.view_mut((i * r, l * r), (r, r));
            block.zip_apply(bi, |s, b| *s += kil * b);
        }
        rhs.rows_mut(i * r, r).copy_from(&moments.h[i]);
    }

    let mut max_jitter = 0.0;
    for extra in core::iter::once(0.0).chain((0..6).map(|e| mu * libm::pow(10.0, e as f64 - 6.0)))
    {
        max_jitter = extra;
        let mut a = system.clone();
        for d in 0..dim {
            a[(d, d)] += mu + extra;
        }
        let lu = a.clone().lu();
        if let Some(mut sol) = lu.solve(&rhs) {
            // Two steps of iterative refinement.
            for _ in 0..2 {
                let resid = &rhs - &a * &sol;
                match lu.solve(&resid) {
                    Some(delta) => sol += delta,
                    None => break,
                }
            }
            if sol.iter().all(|v| v.is_finite()) {
                if extra > 0.0 {
                    log::warn!("stationarity system needed extra diagonal jitter {extra:e}");
                }
                return Ok(DMatrix::from_column_slice(r, n, sol.as_slice()));
            }
        }
    }
    Err(Error::SingularSystem { max_jitter })
}

fn objective_with(
    coefficients: &DMatrix<f64>,
    data: &Dataset,
    k: &DMatrix<f64>,
    w: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    let n = data.n();
    let x = data.x();
    let y = data.y();
    let f = coefficients * k; // column i is f(x_i)
    let mut risk = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut pred = 0.0;
            for a in 0..data.p() {
                pred += f[(a, i)] * (x[(j, a)] - x[(i, a)]);
            }
            let e = y[j] - y[i] - pred;
            risk += w[(i, j)] * e * e;
        }
    }
    let penalty = (coefficients.transpose() * coefficients).component_mul(k).sum();
    risk / (n * n) as f64 + lambda * penalty
}

/// The regularized regression objective evaluated at arbitrary
/// coefficients (`p x n`).
pub fn regression_objective(
    coefficients: &DMatrix<f64>,
    data: &Dataset,
    kernel: &KernelSpec,
    weight: &WeightSpec,
    lambda: f64,
) -> f64 {
    let k = kernel_matrix(data.x(), kernel);
    let w = weight_matrix(data.x(), weight);
    objective_with(coefficients, data, &k, &w, lambda)
}

/// `max_i |B_i F_i + n^2 lambda c_i - h_i| / (1 + max_i |h_i|)` in the full
/// `p`-dimensional coordinates.
pub fn stationarity_residual(model: &GradientModel, data: &Dataset) -> f64 {
    let n = data.n();
    let k = kernel_matrix(data.x(), model.kernel());
    let moments = assemble_local_moments(data, model.weight(), &SpanBasis::identity(data.x()))
        .expect("dataset matches its own basis");
    let f = model.coefficients() * &k;
    let mu = (n * n) as f64 * model.lambda();
    let mut worst: f64 = 0.0;
    let mut h_max: f64 = 0.0;
    for i in 0..n {
        let res = &moments.b[i] * f.column(i) + model.coefficients().column(i) * mu - &moments.h[i];
        worst = worst.max(res.norm());
        h_max = h_max.max(moments.h[i].norm());
    }
    worst / (1.0 + h_max)
}
