//! Gaussian Mercer kernel, locality weights, bandwidth heuristics and the
//! jittered Cholesky factorization used for kernel matrices.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
}

/// `K(x, u) = exp(-|x - u|^2 / sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    sigma: f64,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: "must be positive and finite",
            });
        }
        Ok(KernelSpec {
            family: KernelFamily::Gaussian,
            sigma,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub fn eval_sq(&self, sq_dist: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => libm::exp(-sq_dist / (self.sigma * self.sigma)),
        }
    }
}

/// Denominator of the locality weight exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightForm {
    /// `exp(-|d|^2 / s^2)`, the form used for all simulations.
    #[default]
    OneSSq,
    /// `exp(-|d|^2 / (2 s^2))`, the form used by the convergence theory.
    TwoSSq,
}

impl WeightForm {
    /// `1` or `2`, as exposed by the command line.
    pub fn factor(self) -> u8 {
        match self {
            WeightForm::OneSSq => 1,
            WeightForm::TwoSSq => 2,
        }
    }

    pub fn from_factor(factor: u8) -> Option<Self> {
        match factor {
            1 => Some(WeightForm::OneSSq),
            2 => Some(WeightForm::TwoSSq),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    s: f64,
    form: WeightForm,
}

impl WeightSpec {
    /// Bandwidth `s` with the default [`WeightForm::OneSSq`] form.
    pub fn new(s: f64) -> Result<Self> {
        Self::with_form(s, WeightForm::default())
    }

    pub fn with_form(s: f64, form: WeightForm) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "s",
                reason: "must be positive and finite",
            });
        }
        Ok(WeightSpec { s, form })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn form(&self) -> WeightForm {
        self.form
    }

    #[inline]
    pub fn eval_sq(&self, sq_dist: f64) -> f64 {
        let denom = match self.form {
            WeightForm::OneSSq => self.s * self.s,
            WeightForm::TwoSSq => 2.0 * self.s * self.s,
        };
        libm::exp(-sq_dist / denom)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance between row `i` of `x` and the point `q`.
pub(crate) fn row_sq_dist(x: &DMatrix<f64>, i: usize, q: &[f64]) -> f64 {
    q.iter()
        .enumerate()
        .map(|(k, qk)| {
            let d = x[(i, k)] - qk;
            d * d
        })
        .sum()
}

/// All squared pairwise distances between the rows of `x`. Differences are
/// formed coordinate-wise so identical rows give exactly zero.
pub fn pairwise_sq_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let mut acc = 0.0;
            for k in 0..x.ncols() {
                let t = x[(i, k)] - x[(j, k)];
                acc += t * t;
            }
            d[(i, j)] = acc;
            d[(j, i)] = acc;
        }
    }
    d
}

pub fn gaussian_kernel(x: &[f64], u: &[f64], spec: &KernelSpec) -> Result<f64> {
    if x.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: u.len(),
        });
    }
    Ok(spec.eval_sq(sq_dist(x, u)))
}

/// `K_ij = K(x_i, x_j)` over the rows of `x`.
pub fn kernel_matrix(x: &DMatrix<f64>, spec: &KernelSpec) -> DMatrix<f64> {
    pairwise_sq_distances(x).map(|d| spec.eval_sq(d))
}

/// `W_ij = w(x_i, x_j)` over the rows of `x`; `W_ii = 1`.
pub fn weight_matrix(x: &DMatrix<f64>, spec: &WeightSpec) -> DMatrix<f64> {
    pairwise_sq_distances(x).map(|d| spec.eval_sq(d))
}

/// Median of the `n(n-1)/2` distinct-pair Euclidean distances. An even
/// number of pairs takes the mean of the two middle values.
///
/// Returns [`Error::DegenerateBandwidth`] when the median is zero.
pub fn median_pairwise_distance(x: &DMatrix<f64>) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let sq = pairwise_sq_distances(x);
    let mut dists: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for i in (j + 1)..n {
            dists.push(libm::sqrt(sq[(i, j)]));
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::DegenerateBandwidth)
    }
}

/// Simulation heuristics: weight bandwidth `s` is the median pairwise
/// distance and the kernel width `sigma` is `0.2 * s`. Returns `(s, sigma)`.
pub fn default_bandwidths(x: &DMatrix<f64>) -> Result<(f64, f64)> {
    let s = median_pairwise_distance(x)?;
    Ok((s, 0.2 * s))
}

/// Shrinking `(s, lambda)` pair for convergence experiments on a manifold of
/// intrinsic dimension `d`: `s = scale * n^(-1/(2d+7))` and
/// `lambda = s^(d+3)`. Only meant as an explicit override; the defaults stay
/// with [`default_bandwidths`].
pub fn manifold_rate_schedule(n: usize, intrinsic_dim: usize, scale: f64) -> (f64, f64) {
    let d = intrinsic_dim as f64;
    let s = scale * libm::pow(n as f64, -1.0 / (2.0 * d + 7.0));
    (s, libm::pow(s, d + 3.0))
}

/// Diagonal jitter escalation for [`cholesky_psd`]: a clean attempt, then
/// `base_factor * trace / n` multiplied by `growth` on each of
/// `max_retries` retries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterSchedule {
    pub base_factor: f64,
    pub growth: f64,
    pub max_retries: u32,
}

impl Default for JitterSchedule {
    fn default() -> Self {
        JitterSchedule {
            base_factor: 1e-12,
            growth: 10.0,
            max_retries: 6,
        }
    }
}

impl JitterSchedule {
    /// Jitter values to try, starting with zero.
    pub fn levels(&self, m: &DMatrix<f64>) -> impl Iterator<Item = f64> {
        let n = m.nrows().max(1) as f64;
        let mean_diag = m.trace() / n;
        let base = if mean_diag > 0.0 {
            self.base_factor * mean_diag
        } else {
            self.base_factor
        };
        let growth = self.growth;
        core::iter::once(0.0)
            .chain((0..self.max_retries as i32).map(move |k| base * libm::pow(growth, k as f64)))
    }
}

/// Lower-triangular `L` with `L L^T = M + jitter_used * I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactor {
    l: DMatrix<f64>,
    jitter_used: f64,
}

impl PsdFactor {
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn into_l(self) -> DMatrix<f64> {
        self.l
    }
}

/// Cholesky factorization of a symmetric PSD matrix, escalating diagonal
/// jitter through `schedule` until every pivot clears `n * eps * max_diag`.
pub fn cholesky_psd(m: &DMatrix<f64>, schedule: &JitterSchedule) -> Result<PsdFactor> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let mut max_jitter = 0.0;
    for jitter in schedule.levels(m) {
        max_jitter = jitter;
        if let Some(l) = try_cholesky(m, jitter) {
            return Ok(PsdFactor {
                l,
                jitter_used: jitter,
            });
        }
    }
    Err(Error::NotPositiveDefinite { max_jitter })
}

fn try_cholesky(m: &DMatrix<f64>, jitter: f64) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let max_diag = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max) + jitter;
    let floor = n as f64 * f64::EPSILON * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) || !d.is_finite() {
            return None;
        }
        let ljj = libm::sqrt(d);
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}
