//! Damped Newton iteration with a matrix-free conjugate-gradient inner solve
//! and Armijo backtracking.

use alloc::vec::Vec;

use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop once the Euclidean norm of the gradient drops below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Cap on inner CG iterations per Newton step (the problem dimension is
    /// used when smaller).
    pub max_cg_iters: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-8,
            max_iters: 100,
            max_cg_iters: 1000,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Objective at the starting point followed by one entry per accepted
    /// step.
    pub objective_trace: Vec<f64>,
}

/// A smooth convex objective that can report its value, gradient and
/// Hessian-vector products.
pub(crate) trait NewtonProblem {
    /// Whatever `hess_vec` needs from the point it was evaluated at.
    type Curvature;

    fn value(&self, theta: &DVector<f64>) -> f64;

    fn evaluate(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, Self::Curvature);

    fn hess_vec(&self, curv: &Self::Curvature, v: &DVector<f64>) -> DVector<f64>;
}

pub(crate) fn minimize<P: NewtonProblem>(
    problem: &P,
    start: DVector<f64>,
    opts: &NewtonOptions,
) -> (DVector<f64>, NewtonReport) {
    let mut theta = start;
    let (mut f, mut g, mut curv) = problem.evaluate(&theta);
    let mut trace = alloc::vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let dim = theta.len();

    loop {
        let g_norm = g.norm();
        if g_norm < opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters || dim == 0 {
            break;
        }
        let forcing = 0.5f64.min(libm::sqrt(g_norm));
        let dir = conjugate_gradient(
            |v| problem.hess_vec(&curv, v),
            &g,
            forcing * g_norm,
            opts.max_cg_iters.min(dim).max(1),
        );
        let slope = g.dot(&dir);
        let dir = if slope < 0.0 { dir } else { -&g };
        let slope = g.dot(&dir);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = &theta + &dir * step;
            let ft = problem.value(&trial);
            if ft.is_finite() && ft <= f + opts.armijo * step * slope {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some(next) = accepted else {
            log::debug!("line search stalled at |g| = {g_norm:e}");
            break;
        };
        theta = next;
        (f, g, curv) = problem.evaluate(&theta);
        trace.push(f);
    }

    let report = NewtonReport {
        iterations,
        converged,
        grad_norm: g.norm(),
        objective_trace: trace,
    };
    (theta, report)
}

/// Approximately solves `H d = -g` starting from zero.
fn conjugate_gradient<H>(hess: H, g: &DVector<f64>, tol: f64, max_iters: usize) -> DVector<f64>
where
    H: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = DVector::zeros(g.len());
    let mut r = -g;
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_iters {
        if libm::sqrt(rr) <= tol {
            break;
        }
        let hp = hess(&p);
        let curvature = p.dot(&hp);
        if !(curvature > 0.0) {
            if x.iter().all(|&v| v == 0.0) {
                return -g;
            }
            break;
        }
        let a = rr / curvature;
        x.axpy(a, &p, 1.0);
        r.axpy(-a, &hp, 1.0);
        let rr_next = r.dot(&r);
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    struct Quadratic {
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl NewtonProblem for Quadratic {
        type Curvature = ();

        fn value(&self, t: &DVector<f64>) -> f64 {
            0.5 * t.dot(&(&self.a * t)) - self.b.dot(t)
        }

        fn evaluate(&self, t: &DVector<f64>) -> (f64, DVector<f64>, ()) {
            (self.value(t), &self.a * t - &self.b, ())
        }

        fn hess_vec(&self, _: &(), v: &DVector<f64>) -> DVector<f64> {
            &self.a * v
        }
    }

    #[test]
    fn solves_a_quadratic() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let b = DVector::from_vec(alloc::vec![1.0, -2.0, 0.5]);
        let q = Quadratic { a: a.clone(), b: b.clone() };
        let (x, rep) = minimize(&q, DVector::zeros(3), &NewtonOptions::default());
        assert!(rep.converged);
        assert!((&a * &x - &b).norm() < 1e-8);
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
