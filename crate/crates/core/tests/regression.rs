mod common;

use common::*;
use gradlearn_core::kernel::{
    default_bandwidths, kernel_matrix, weight_matrix, KernelSpec, WeightSpec,
};
use gradlearn_core::regression::*;
use gradlearn_core::spectral::GradientField;
use gradlearn_core::{span_basis, Dataset, Error, SpanBasis};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const STATIONARITY_TOL: f64 = 1e-8;

fn specs(data: &Dataset) -> (KernelSpec, WeightSpec) {
    let (s, sigma) = default_bandwidths(data.x()).unwrap();
    (KernelSpec::gaussian(sigma).unwrap(), WeightSpec::new(s).unwrap())
}

fn fit_checked(data: &Dataset, k: KernelSpec, w: WeightSpec, lambda: f64) -> GradientModel {
    let m = fit_gradient_regression(data, k, w, lambda).unwrap();
    let res = stationarity_residual(&m, data);
    assert!(res < STATIONARITY_TOL, "stationarity residual {res:e}");
    m
}

#[test]
fn span_reconstructs_random_wide_data() {
    let x = gauss(5, 100, 3);
    let span = span_basis(&x).unwrap();
    assert_eq!(span.rank(), 4);
    let mut back = span.coords() * span.basis().transpose();
    for mut row in back.row_iter_mut() {
        row += span.mean().transpose();
    }
    assert!((back - &x).amax() < 1e-9);
    let gram = span.basis().transpose() * span.basis();
    assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-10);
}

#[test]
fn moments_match_double_loop() {
    let data = random_data(4, 3, 11);
    let w = WeightSpec::new(1.3).unwrap();
    let span = span_basis(data.x()).unwrap();
    let m = assemble_local_moments(&data, &w, &span).unwrap();
    let wm = weight_matrix(data.x(), &w);
    for i in 0..4 {
        let mut b = DMatrix::zeros(3, 3);
        let mut h = DVector::zeros(3);
        for j in 0..4 {
            let d = (data.x().row(j) - data.x().row(i)).transpose();
            b += &d * d.transpose() * wm[(i, j)];
            h += &d * (wm[(i, j)] * (data.y()[j] - data.y()[i]));
        }
        let basis = span.basis();
        assert!((&m.b[i] - basis.transpose() * &b * basis).amax() < 1e-12);
        assert!((&m.h[i] - basis.transpose() * &h).amax() < 1e-12);
        assert!((&m.b[i] - m.b[i].transpose()).amax() == 0.0);
    }
}

#[test]
fn constant_response_moments_vanish() {
    let x = gauss(5, 2, 4);
    let data = Dataset::new(x, DVector::from_element(5, 2.0)).unwrap();
    let m = assemble_local_moments(&data, &WeightSpec::new(1.0).unwrap(), &SpanBasis::identity(data.x())).unwrap();
    assert!(m.h.iter().all(|h| h.iter().all(|&v| v == 0.0)));
}

#[test]
fn linear_slope_small_instance() {
    let x = gauss(6, 3, 21);
    let y = DVector::from_iterator(6, x.row_iter().map(|r| 3.0 * r[0] - 2.0 * r[1]));
    let data = Dataset::new(x, y).unwrap();
    let kern = KernelSpec::gaussian(10.0).unwrap();
    let w = WeightSpec::new(100.0).unwrap();
    let m = fit_checked(&data, kern, w, 1e-6);
    let oracle = dense_oracle_fit(&data, kern, w, 1e-6).unwrap();
    assert!(rel_err(m.coefficients(), oracle.coefficients()) < 1e-8);
    let want = [3.0, -2.0, 0.0];
    for i in 0..6 {
        let g = predict_gradient(&m, data.x().row(i).transpose().as_slice()).unwrap();
        for a in 0..3 {
            assert!((g[a] - want[a]).abs() < 1e-2, "point {i} coord {a}: {}", g[a]);
        }
    }
}

#[test]
fn oracle_matches_fast_path_on_random_instance() {
    let data = random_data(8, 5, 5);
    let (k, w) = specs(&data);
    let fast = fit_checked(&data, k, w, 1e-3);
    let oracle = dense_oracle_fit(&data, k, w, 1e-3).unwrap();
    assert!(rel_err(fast.coefficients(), oracle.coefficients()) < 1e-8);
    assert!(stationarity_residual(&oracle, &data) < STATIONARITY_TOL);
}

#[test]
fn oracle_beats_zero() {
    for seed in 0..5 {
        let data = random_data(5, 2, seed);
        let (k, w) = specs(&data);
        let m = dense_oracle_fit(&data, k, w, 1e-2).unwrap();
        let wm = weight_matrix(data.x(), &w);
        let y = data.y();
        let zero: f64 = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .map(|(i, j)| wm[(i, j)] * (y[j] - y[i]).powi(2))
            .sum::<f64>()
            / 25.0;
        assert!(m.objective_value() <= zero + 1e-15);
        let recomputed = regression_objective(m.coefficients(), &data, &k, &w, 1e-2);
        assert!((recomputed - m.objective_value()).abs() < 1e-12 * (1.0 + zero));
    }
}

#[test]
fn size_guard() {
    let data = random_data(41, 50, 1);
    let (k, w) = specs(&data);
    assert_eq!(
        dense_oracle_fit(&data, k, w, 1e-3).unwrap_err(),
        Error::SizeGuard { np: 2050, limit: 2000 }
    );
}

#[test]
fn rejects_bad_lambda_and_tiny_data() {
    let data = random_data(4, 2, 1);
    let (k, w) = specs(&data);
    assert!(matches!(
        fit_gradient_regression(&data, k, w, 0.0),
        Err(Error::InvalidParameter { name: "lambda", .. })
    ));
    assert!(fit_gradient_regression(&data, k, w, f64::NAN).is_err());
    let one = data.select(&[0]);
    assert!(matches!(
        fit_gradient_regression(&one, k, w, 1e-3),
        Err(Error::TooFewPoints { .. })
    ));
}

#[test]
fn predictions_are_linear_in_coefficients() {
    let data = random_data(6, 3, 8);
    let (k, w) = specs(&data);
    let m = fit_checked(&data, k, w, 1e-3);
    let q = [0.1, -0.2, 0.3];
    let a = -2.5;
    let g = predict_gradient(&m, &q).unwrap();
    let gs = predict_gradient(&m.scaled(a), &q).unwrap();
    assert!((gs - g * a).amax() < 1e-14);
    assert!(predict_gradient(&m, &[0.0; 2]).is_err());
}

#[test]
fn tiny_sigma_prediction_recovers_coefficient() {
    let data = random_data(5, 2, 13);
    let w = WeightSpec::new(1.0).unwrap();
    let m = fit_checked(&data, KernelSpec::gaussian(1e-3).unwrap(), w, 1e-3);
    for i in 0..5 {
        let g = predict_gradient(&m, data.x().row(i).transpose().as_slice()).unwrap();
        assert!((g - m.coefficients().column(i)).amax() < 1e-12);
    }
}

#[test]
fn coincident_points_give_zero_model() {
    let x = DMatrix::from_element(4, 3, 1.5);
    let data = Dataset::new(x, DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
    let m = fit_gradient_regression(
        &data,
        KernelSpec::gaussian(1.0).unwrap(),
        WeightSpec::new(1.0).unwrap(),
        1e-3,
    )
    .unwrap();
    assert_eq!(m.coefficients(), &DMatrix::zeros(3, 4));
}

#[test]
fn directional_derivatives_vanish_at_solution() {
    let data = random_data(6, 3, 31);
    let (k, w) = specs(&data);
    let lambda = 1e-2;
    let m = fit_checked(&data, k, w, lambda);
    let h = 1e-6;
    for d in 0..20 {
        let dir = gauss(3, 6, 500 + d);
        let dir = &dir / dir.norm();
        let plus = regression_objective(&(m.coefficients() + &dir * h), &data, &k, &w, lambda);
        let minus = regression_objective(&(m.coefficients() - &dir * h), &data, &k, &w, lambda);
        let slope = (plus - minus) / (2.0 * h);
        assert!(slope.abs() < 1e-5, "direction {d}: {slope:e}");
    }
}

#[test]
fn shrinkage_is_monotone_in_lambda() {
    let data = random_data(7, 4, 17);
    let (k, w) = specs(&data);
    let mut last = f64::INFINITY;
    for e in -6..=2 {
        let m = fit_checked(&data, k, w, 10f64.powi(e));
        let norm = m.rkhs_norm_sq();
        assert!(norm <= last * (1.0 + 1e-10), "lambda 1e{e}: {norm} > {last}");
        last = norm;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn span_path_matches_dense_oracle(n in 4usize..=10, p in 2usize..=8, seed in 0u64..10_000) {
        let data = random_data(n, p, seed);
        let (k, w) = specs(&data);
        let fast = fit_checked(&data, k, w, 1e-3);
        let oracle = dense_oracle_fit(&data, k, w, 1e-3).unwrap();
        prop_assert!(rel_err(fast.coefficients(), oracle.coefficients()) < 1e-8);
    }

    #[test]
    fn scaling_response_scales_coefficients(seed in 0u64..10_000, a in prop::sample::select(vec![-3.0, -0.5, 0.25, 2.0, 8.0])) {
        let data = random_data(6, 3, seed);
        let (k, w) = specs(&data);
        let base = fit_checked(&data, k, w, 1e-3);
        let scaled = Dataset::new(data.x().clone(), data.y() * a).unwrap();
        let m = fit_checked(&scaled, k, w, 1e-3);
        prop_assert!(rel_err(m.coefficients(), &(base.coefficients() * a)) < 1e-12);
    }

    #[test]
    fn translation_invariance(seed in 0u64..10_000, shift in -50.0f64..50.0) {
        let data = random_data(6, 3, seed);
        let (k, w) = specs(&data);
        let base = fit_checked(&data, k, w, 1e-3);
        let offset = gauss_vec(3, seed + 1) * shift;
        let mut x = data.x().clone();
        for mut row in x.row_iter_mut() {
            row += offset.transpose();
        }
        let moved = fit_checked(&data.with_features(x).unwrap(), k, w, 1e-3);
        prop_assert!((moved.coefficients() - base.coefficients()).amax() < 1e-9 * (1.0 + base.coefficients().amax()));
    }

    #[test]
    fn rotation_equivariance(seed in 0u64..10_000, p in 2usize..6) {
        let data = random_data(7, p, seed);
        let (k, w) = specs(&data);
        let base = fit_checked(&data, k, w, 1e-3);
        let r = rotation(p, seed);
        let rotated = data.with_features(data.x() * r.transpose()).unwrap();
        let m = fit_checked(&rotated, k, w, 1e-3);
        prop_assert!((m.coefficients() - &r * base.coefficients()).amax() < 1e-8 * (1.0 + base.coefficients().amax()));
    }

    #[test]
    fn kernel_matrix_rotation_invariant(seed in 0u64..10_000, p in 1usize..8) {
        let x = gauss(6, p, seed);
        let spec = KernelSpec::gaussian(1.7).unwrap();
        let r = rotation(p, seed);
        let k0 = kernel_matrix(&x, &spec);
        let k1 = kernel_matrix(&(&x * r.transpose()), &spec);
        prop_assert!((k0 - k1).amax() < 1e-12);
    }
}
