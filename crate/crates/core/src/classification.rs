//! Gradient learning for binary classification.
//!
//! Jointly estimates a log-odds function `g = sum_i alpha_i K(., x_i)` and
//! its gradient `f = sum_i c_i K(., x_i)` by minimizing
//!
//! ```text
//! (1/n^2) sum_ij w_ij phi(y_i (g(x_j) + f(x_i).(x_i - x_j)))
//!     + lambda1 |g|_K^2 + lambda2 |f|_K^2,      phi(t) = log(1 + e^-t)
//! ```
//!
//! The diagonal `i = j` terms are kept; they reduce to `w_ii phi(y_i g(x_i))`.
//! The problem is convex; it is solved by damped Newton steps in the
//! coordinates of the centered data span, which is exact because every
//! difference `x_i - x_j` lies in that span.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::kernel::{kernel_matrix, weight_matrix, KernelSpec, WeightSpec};
use crate::newton::{minimize, NewtonOptions, NewtonProblem, NewtonReport};
use crate::span::{span_basis, SpanBasis};
use crate::spectral::GradientField;
use crate::{Dataset, Error, Result};

/// Default for both `lambda1` and `lambda2`.
pub const DEFAULT_LAMBDA: f64 = 1e-4;

/// Curvature jitter added to every Hessian-vector product.
const HESSIAN_JITTER: f64 = 1e-12;

/// `log(1 + e^-t)` without overflow for large `|t|`.
pub fn logistic_loss(t: f64) -> f64 {
    if t > 0.0 {
        libm::log1p(libm::exp(-t))
    } else {
        -t + libm::log1p(libm::exp(t))
    }
}

/// `phi'(t) = -1 / (1 + e^t)`.
fn logistic_slope(t: f64) -> f64 {
    if t >= 0.0 {
        let e = libm::exp(-t);
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + libm::exp(t))
    }
}

/// `phi''(t) = e^-|t| / (1 + e^-|t|)^2`.
fn logistic_curvature(t: f64) -> f64 {
    let e = libm::exp(-t.abs());
    e / ((1.0 + e) * (1.0 + e))
}

/// The weighted empirical risk (without penalties) at `alpha` (length `n`)
/// and `c_d` (`p x n`).
pub fn classification_risk(
    alpha: &DVector<f64>,
    c_d: &DMatrix<f64>,
    data: &Dataset,
    kernel: &KernelSpec,
    weight: &WeightSpec,
) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    if alpha.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: alpha.len(),
        });
    }
    if c_d.shape() != (p, n) {
        return Err(Error::DimensionMismatch {
            expected: p * n,
            found: c_d.nrows() * c_d.ncols(),
        });
    }
    let k = kernel_matrix(data.x(), kernel);
    let w = weight_matrix(data.x(), weight);
    Ok(risk_with(alpha, c_d, data, &k, &w))
}

fn risk_with(
    alpha: &DVector<f64>,
    c_d: &DMatrix<f64>,
    data: &Dataset,
    k: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> f64 {
    let n = data.n();
    let x = data.x();
    let y = data.y();
    let g = k * alpha;
    let f = c_d * k;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut slope = 0.0;
            for a in 0..data.p() {
                slope += f[(a, i)] * (x[(i, a)] - x[(j, a)]);
            }
            total += w[(i, j)] * logistic_loss(y[i] * (g[j] + slope));
        }
    }
    total / (n * n) as f64
}

/// The penalized classification objective over a packed parameter vector
/// `theta = (alpha, a_1, ..., a_n)`, where each `a_i` holds the gradient
/// coefficient of point `i` in some coordinate system for the data.
///
/// [`ClassificationObjective::full`] uses the raw `p` coordinates, so
/// `a_i = c_i`; [`ClassificationObjective::in_span`] uses an orthonormal
/// basis of the centered data span.
#[derive(Debug, Clone)]
pub struct ClassificationObjective {
    coords: DMatrix<f64>,
    y: DVector<f64>,
    k: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
}

/// Per-point quantities the Hessian needs.
pub struct Curvature {
    /// `w_ij phi''(z_ij) / n^2`.
    c: DMatrix<f64>,
}

impl ClassificationObjective {
    pub fn full(
        data: &Dataset,
        kernel: &KernelSpec,
        weight: &WeightSpec,
        lambda1: f64,
        lambda2: f64,
    ) -> Self {
        Self::in_span(
            data,
            kernel,
            weight,
            lambda1,
            lambda2,
            &SpanBasis::identity(data.x()),
        )
    }

    pub fn in_span(
        data: &Dataset,
        kernel: &KernelSpec,
        weight: &WeightSpec,
        lambda1: f64,
        lambda2: f64,
        span: &SpanBasis,
    ) -> Self {
        ClassificationObjective {
            coords: span.coords().clone(),
            y: data.y().clone(),
            k: kernel_matrix(data.x(), kernel),
            w: weight_matrix(data.x(), weight),
            lambda1,
            lambda2,
        }
    }

    fn n(&self) -> usize {
        self.coords.nrows()
    }

    fn r(&self) -> usize {
        self.coords.ncols()
    }

    pub fn dim(&self) -> usize {
        self.n() * (1 + self.r())
    }

    /// `theta` from `alpha` and an `r x n` coefficient matrix.
    pub fn pack(&self, alpha: &DVector<f64>, coef: &DMatrix<f64>) -> DVector<f64> {
        let (n, r) = (self.n(), self.r());
        let mut theta = DVector::zeros(self.dim());
        theta.rows_mut(0, n).copy_from(alpha);
        for i in 0..n {
            for a in 0..r {
                theta[n + i * r + a] = coef[(a, i)];
            }
        }
        theta
    }

    /// Inverse of [`pack`](Self::pack): `(alpha, r x n coefficients)`.
    pub fn unpack(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (n, r) = (self.n(), self.r());
        let alpha = theta.rows(0, n).into_owned();
        let coef = DMatrix::from_column_slice(r, n, &theta.as_slice()[n..]);
        (alpha, coef)
    }

    /// `A` as `n x r` (row `i` is `a_i`), a view-free copy of the tail of
    /// `theta`.
    fn rows_of(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let (n, r) = (self.n(), self.r());
        DMatrix::from_row_slice(n, r, &theta.as_slice()[n..])
    }

    /// `z_ij = y_i (g_j + F_i . (u_i - u_j))` with `g = K alpha`, `F = K A`.
    fn margins(&self, alpha: &DVector<f64>, a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
        let n = self.n();
        let g = &self.k * alpha;
        let f = &self.k * a;
        let proj = &f * self.coords.transpose(); // proj_ij = F_i . u_j
        let z = DMatrix::from_fn(n, n, |i, j| self.y[i] * (g[j] + proj[(i, i)] - proj[(i, j)]));
        (z, g, f)
    }

    /// Pulls per-pair sensitivities `s_ij` back to `(d/dg, d/dF)`.
    fn pull_back(&self, s: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n();
        let d_g = DVector::from_iterator(n, (0..n).map(|j| s.column(j).sum()));
        let row_sums = DVector::from_iterator(n, (0..n).map(|i| s.row(i).sum()));
        let mut d_f = s * &self.coords;
        d_f.neg_mut();
        for i in 0..n {
            let mut row = d_f.row_mut(i);
            row.zip_apply(&self.coords.row(i), |d, u| *d += row_sums[i] * u);
        }
        (d_g, d_f)
    }

    fn assemble(&self, d_alpha: DVector<f64>, d_a: DMatrix<f64>) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(0, n).copy_from(&d_alpha);
        // d_a is n x r; theta stores it row-major.
        let r = self.r();
        for i in 0..n {
            for a in 0..r {
                out[n + i * r + a] = d_a[(i, a)];
            }
        }
        out
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let n = self.n();
        let alpha = theta.rows(0, n).into_owned();
        let a = self.rows_of(theta);
        let (z, g, f) = self.margins(&alpha, &a);
        let risk = z.zip_map(&self.w, |z, w| w * logistic_loss(z)).sum() / (n * n) as f64;
        risk + self.lambda1 * alpha.dot(&g) + self.lambda2 * a.component_mul(&f).sum()
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        NewtonProblem::evaluate(self, theta).1
    }

    pub fn hessian_vec(&self, theta: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let (_, _, curv) = NewtonProblem::evaluate(self, theta);
        NewtonProblem::hess_vec(self, &curv, v)
    }
}

impl NewtonProblem for ClassificationObjective {
    type Curvature = Curvature;

    fn value(&self, theta: &DVector<f64>) -> f64 {
        ClassificationObjective::value(self, theta)
    }

    fn evaluate(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, Curvature) {
        let n = self.n();
        let scale = 1.0 / (n * n) as f64;
        let alpha = theta.rows(0, n).into_owned();
        let a = self.rows_of(theta);
        let (z, g, f) = self.margins(&alpha, &a);

        let mut risk = 0.0;
        let mut s = DMatrix::zeros(n, n);
        let mut c = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let zij = z[(i, j)];
                let wij = self.w[(i, j)];
                risk += wij * logistic_loss(zij);
                s[(i, j)] = wij * logistic_slope(zij) * self.y[i] * scale;
                c[(i, j)] = wij * logistic_curvature(zij) * scale;
            }
        }
        let value = risk * scale
            + self.lambda1 * alpha.dot(&g)
            + self.lambda2 * a.component_mul(&f).sum();

        let (d_g, d_f) = self.pull_back(&s);
        let grad_alpha = &self.k * (d_g + &alpha * (2.0 * self.lambda1));
        let grad_a = &self.k * (d_f + &a * (2.0 * self.lambda2));
        (value, self.assemble(grad_alpha, grad_a), Curvature { c })
    }

    fn hess_vec(&self, curv: &Curvature, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let v_alpha = v.rows(0, n).into_owned();
        let v_a = self.rows_of(v);
        let (dz, _, _) = self.margins(&v_alpha, &v_a);
        // q_ij = c_ij * dz_ij * y_i, since y_i^2 = 1
        let q = DMatrix::from_fn(n, n, |i, j| curv.c[(i, j)] * dz[(i, j)] * self.y[i]);
        let (h_g, h_f) = self.pull_back(&q);
        let out_alpha = &self.k * (h_g + &v_alpha * (2.0 * self.lambda1));
        let out_a = &self.k * (h_f + &v_a * (2.0 * self.lambda2));
        let mut out = self.assemble(out_alpha, out_a);
        out.axpy(HESSIAN_JITTER, v, 1.0);
        out
    }
}

/// Fitted log-odds and gradient functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGradientModel {
    g_coefficients: DVector<f64>,
    grad_coefficients: DMatrix<f64>,
    train_points: DMatrix<f64>,
    kernel: KernelSpec,
    weight: WeightSpec,
    lambda1: f64,
    lambda2: f64,
    objective_value: f64,
    report: NewtonReport,
}

impl ClassGradientModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        g_coefficients: DVector<f64>,
        grad_coefficients: DMatrix<f64>,
        train_points: DMatrix<f64>,
        kernel: KernelSpec,
        weight: WeightSpec,
        lambda1: f64,
        lambda2: f64,
        objective_value: f64,
        report: NewtonReport,
    ) -> Result<Self> {
        let n = train_points.nrows();
        if g_coefficients.len() != n || grad_coefficients.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: grad_coefficients.ncols(),
            });
        }
        if grad_coefficients.nrows() != train_points.ncols() {
            return Err(Error::DimensionMismatch {
                expected: train_points.ncols(),
                found: grad_coefficients.nrows(),
            });
        }
        Ok(ClassGradientModel {
            g_coefficients,
            grad_coefficients,
            train_points,
            kernel,
            weight,
            lambda1,
            lambda2,
            objective_value,
            report,
        })
    }

    /// `alpha`, the log-odds coefficients.
    pub fn g_coefficients(&self) -> &DVector<f64> {
        &self.g_coefficients
    }

    /// `p x n` gradient coefficients `c_D`.
    pub fn grad_coefficients(&self) -> &DMatrix<f64> {
        &self.grad_coefficients
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn objective_value(&self) -> f64 {
        self.objective_value
    }

    pub fn iterations(&self) -> usize {
        self.report.iterations
    }

    pub fn converged(&self) -> bool {
        self.report.converged
    }

    pub fn report(&self) -> &NewtonReport {
        &self.report
    }

    /// Same model with `alpha` multiplied by `a`.
    pub fn with_scaled_log_odds(&self, a: f64) -> Self {
        ClassGradientModel {
            g_coefficients: &self.g_coefficients * a,
            ..self.clone()
        }
    }
}

impl GradientField for ClassGradientModel {
    fn coefficients(&self) -> &DMatrix<f64> {
        &self.grad_coefficients
    }

    fn train_points(&self) -> &DMatrix<f64> {
        &self.train_points
    }

    fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
}

pub fn predict_logodds(model: &ClassGradientModel, x: &[f64]) -> Result<f64> {
    Ok(model.g_coefficients.dot(&model.kernel_row(x)?))
}

pub fn predict_class_gradient(model: &ClassGradientModel, x: &[f64]) -> Result<DVector<f64>> {
    model.gradient_at(x)
}

/// Sign of the log-odds; exactly zero maps to `+1`.
pub fn predict_label(model: &ClassGradientModel, x: &[f64]) -> Result<f64> {
    Ok(if predict_logodds(model, x)? < 0.0 { -1.0 } else { 1.0 })
}

pub fn fit_gradient_classification(
    data: &Dataset,
    kernel: KernelSpec,
    weight: WeightSpec,
    lambda1: f64,
    lambda2: f64,
    opts: &NewtonOptions,
) -> Result<ClassGradientModel> {
    for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                reason: "must be positive and finite",
            });
        }
    }
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    data.check_binary_labels()?;
    let span = span_basis(data.x())?;
    let objective = ClassificationObjective::in_span(data, &kernel, &weight, lambda1, lambda2, &span);
    let (theta, report) = minimize(&objective, DVector::zeros(objective.dim()), opts);
    if !report.converged {
        log::warn!(
            "classification solver stopped after {} iterations with |grad| = {:e}",
            report.iterations,
            report.grad_norm
        );
    }
    let (alpha, reduced) = objective.unpack(&theta);
    let grad_coefficients = span.basis() * reduced;
    let objective_value = *report.objective_trace.last().expect("trace starts non-empty");
    Ok(ClassGradientModel {
        g_coefficients: alpha,
        grad_coefficients,
        train_points: data.x().clone(),
        kernel,
        weight,
        lambda1,
        lambda2,
        objective_value,
        report,
    })
}

/// Penalized objective of a fitted model, recomputed from its coefficients
/// in the full coordinates.
pub fn classification_objective_value(model: &ClassGradientModel, data: &Dataset) -> Result<f64> {
    let obj = ClassificationObjective::full(
        data,
        &model.kernel,
        &model.weight,
        model.lambda1,
        model.lambda2,
    );
    let n = data.n();
    if model.g_coefficients.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: model.g_coefficients.len(),
        });
    }
    Ok(obj.value(&obj.pack(&model.g_coefficients, &model.grad_coefficients)))
}

/// Labels of the rows of `x`.
pub fn predict_labels(model: &ClassGradientModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut q = Vec::with_capacity(x.ncols());
    (0..x.nrows())
        .map(|i| {
            q.clear();
            q.extend(x.row(i).iter().copied());
            predict_label(model, &q)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_values() {
        assert!((logistic_loss(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(logistic_loss(50.0) < 1e-21);
        assert!((logistic_loss(-100.0) - 100.0).abs() < 1e-12);
        assert!(logistic_loss(-1e6).is_finite());
        assert!(logistic_loss(1.0) > 0.0 && logistic_loss(1.0) < logistic_loss(0.5));
    }

    #[test]
    fn slope_and_curvature_match_differences() {
        for &t in &[-40.0, -3.0, -0.2, 0.0, 0.7, 5.0, 35.0] {
            let h = 1e-5;
            let fd1 = (logistic_loss(t + h) - logistic_loss(t - h)) / (2.0 * h);
            let fd2 = (logistic_slope(t + h) - logistic_slope(t - h)) / (2.0 * h);
            assert!((fd1 - logistic_slope(t)).abs() < 1e-8, "t = {t}");
            assert!((fd2 - logistic_curvature(t)).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn zero_parameters_give_log2_times_weight_mass() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.5, -0.3, 2.0]);
        let data = Dataset::new(x, DVector::from_vec(alloc::vec![1.0, -1.0, 1.0])).unwrap();
        let k = KernelSpec::gaussian(0.8).unwrap();
        let w = WeightSpec::new(1.5).unwrap();
        let risk = classification_risk(&DVector::zeros(3), &DMatrix::zeros(2, 3), &data, &k, &w)
            .unwrap();
        let mass = weight_matrix(data.x(), &w).sum();
        assert!((risk - core::f64::consts::LN_2 * mass / 9.0).abs() < 1e-15);
    }

    #[test]
    fn single_point_risk() {
        let data = Dataset::new(
            DMatrix::from_row_slice(1, 2, &[0.4, -0.1]),
            DVector::from_vec(alloc::vec![-1.0]),
        )
        .unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let w = WeightSpec::new(1.0).unwrap();
        let alpha = DVector::from_vec(alloc::vec![0.75]);
        let c = DMatrix::from_row_slice(2, 1, &[3.0, -2.0]);
        let risk = classification_risk(&alpha, &c, &data, &k, &w).unwrap();
        assert!((risk - logistic_loss(-0.75)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_labels() {
        let data = Dataset::new(
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DVector::from_vec(alloc::vec![1.0, 0.0]),
        )
        .unwrap();
        let r = fit_gradient_classification(
            &data,
            KernelSpec::gaussian(1.0).unwrap(),
            WeightSpec::new(1.0).unwrap(),
            1e-3,
            1e-3,
            &NewtonOptions::default(),
        );
        assert_eq!(r.unwrap_err(), Error::InvalidLabel { index: 1, value: 0.0 });
    }

    #[test]
    fn pack_round_trip() {
        let data = Dataset::new(
            DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.5]),
            DVector::from_vec(alloc::vec![1.0, -1.0, 1.0]),
        )
        .unwrap();
        let obj = ClassificationObjective::full(
            &data,
            &KernelSpec::gaussian(1.0).unwrap(),
            &WeightSpec::new(1.0).unwrap(),
            0.1,
            0.2,
        );
        let alpha = DVector::from_vec(alloc::vec![1.0, 2.0, 3.0]);
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let theta = obj.pack(&alpha, &c);
        assert_eq!(obj.unpack(&theta), (alpha, c));
    }
}
