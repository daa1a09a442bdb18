mod common;

use common::*;
use gradlearn_core::kernel::{weight_matrix, KernelSpec, WeightSpec};
use gradlearn_core::opg::*;
use gradlearn_core::regression::{fit_gradient_regression, predict_gradient};
use gradlearn_core::{span_basis, Dataset, Error};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Local system at `j` in the original coordinates, solved by LU.
fn normal_equations(data: &Dataset, w: &WeightSpec, j: usize) -> DVector<f64> {
    let p = data.p();
    let wm = weight_matrix(data.x(), w);
    let mut m = DMatrix::zeros(p + 1, p + 1);
    let mut rhs = DVector::zeros(p + 1);
    for i in 0..data.n() {
        let mut z = DVector::from_element(p + 1, 1.0);
        for a in 0..p {
            z[a + 1] = data.x()[(i, a)] - data.x()[(j, a)];
        }
        m += &z * z.transpose() * wm[(i, j)];
        rhs += &z * (wm[(i, j)] * data.y()[i]);
    }
    m.lu().solve(&rhs).unwrap()
}

/// Local slope with the intercept fixed at the response of the center point.
fn pinned_slopes(data: &Dataset, w: &WeightSpec) -> DMatrix<f64> {
    let span = span_basis(data.x()).unwrap();
    let u = span.coords();
    let r = span.rank();
    let wm = weight_matrix(data.x(), w);
    let mut out = DMatrix::zeros(data.p(), data.n());
    for i in 0..data.n() {
        let mut b = DMatrix::zeros(r, r);
        let mut h = DVector::zeros(r);
        for j in 0..data.n() {
            let d = (u.row(j) - u.row(i)).transpose();
            b += &d * d.transpose() * wm[(i, j)];
            h += &d * (wm[(i, j)] * (data.y()[j] - data.y()[i]));
        }
        let c = b.lu().solve(&h).unwrap();
        out.set_column(i, &(span.basis() * c));
    }
    out
}

#[test]
fn matches_normal_equations() {
    let data = random_data(5, 2, 40);
    let w = WeightSpec::new(1.5).unwrap();
    let fit = opg_fit(&data, &w, OpgRidge::Fixed(0.0)).unwrap();
    assert_eq!(fit.ridge_used(), 0.0);
    for j in 0..5 {
        let sol = normal_equations(&data, &w, j);
        assert!((sol[0] - fit.intercepts()[j]).abs() < 1e-10);
        assert!((sol.rows(1, 2) - fit.slopes().column(j)).amax() < 1e-10);
    }
}

#[test]
fn residuals_are_weighted_orthogonal() {
    let data = random_data(9, 3, 41);
    let w = WeightSpec::new(1.2).unwrap();
    let fit = opg_fit(&data, &w, OpgRidge::Auto).unwrap();
    let wm = weight_matrix(data.x(), &w);
    for j in 0..9 {
        let b = fit.slopes().column(j);
        let mut acc = DVector::<f64>::zeros(4);
        for i in 0..9 {
            let d = (data.x().row(i) - data.x().row(j)).transpose();
            let res = data.y()[i] - fit.intercepts()[j] - b.dot(&d);
            acc[0] += wm[(i, j)] * res;
            for a in 0..3 {
                acc[a + 1] += wm[(i, j)] * res * d[a];
            }
        }
        assert!(acc.amax() < 1e-9, "point {j}: {acc}");
    }
}

#[test]
fn gram_is_mean_outer_product() {
    let data = random_data(7, 3, 42);
    let fit = opg_fit(&data, &WeightSpec::new(2.0).unwrap(), OpgRidge::Auto).unwrap();
    let mut direct = DMatrix::zeros(3, 3);
    for b in fit.slopes().column_iter() {
        direct += b * b.transpose() / 7.0;
    }
    assert!((opg_gram(&fit).to_dense() - direct).amax() < 1e-12);
}

#[test]
fn wide_data_needs_a_ridge() {
    let data = random_data(4, 6, 43);
    let w = WeightSpec::new(3.0).unwrap();
    assert!(matches!(
        opg_fit(&data, &w, OpgRidge::Fixed(0.0)),
        Err(Error::SingularSystem { .. })
    ));
    let fit = opg_fit(&data, &w, OpgRidge::Auto).unwrap();
    assert!(fit.ridge_used() > 0.0);
    assert!(opg_fit(&data, &w, OpgRidge::Fixed(-1.0)).is_err());
    assert!(opg_fit(&data.select(&[0]), &w, OpgRidge::Auto).is_err());
}

#[test]
fn regression_with_identity_kernel_is_pinned_local_fit() {
    for seed in 0..5 {
        let data = random_data(5, 8, 50 + seed);
        let w = WeightSpec::new(3.0).unwrap();
        let m = fit_gradient_regression(&data, KernelSpec::gaussian(1e-3).unwrap(), w, 1e-12).unwrap();
        let want = pinned_slopes(&data, &w);
        for i in 0..5 {
            let g = predict_gradient(&m, data.x().row(i).transpose().as_slice()).unwrap();
            let col = want.column(i);
            assert!((g - col).norm() < 1e-6 * (1.0 + col.norm()), "seed {seed} point {i}");
        }
    }
}

#[test]
fn regression_matches_opg_when_local_fits_interpolate() {
    let data = random_data(4, 3, 60);
    let w = WeightSpec::new(2.0).unwrap();
    let fit = opg_fit(&data, &w, OpgRidge::Fixed(0.0)).unwrap();
    let m = fit_gradient_regression(&data, KernelSpec::gaussian(1e-3).unwrap(), w, 1e-12).unwrap();
    for j in 0..4 {
        let g = predict_gradient(&m, data.x().row(j).transpose().as_slice()).unwrap();
        assert!((g - fit.slopes().column(j)).norm() < 1e-6 * (1.0 + fit.slopes().column(j).norm()));
    }
}

#[test]
fn pca_leading_component_is_covariance_eigenvector() {
    let x = gauss(30, 4, 61) * DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.5, 0.2]));
    let map = pca_fit(&x, 1).unwrap();
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    let cov = c.transpose() * &c;
    let eig = cov.clone().symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top);
    assert!((map.components().column(0).dot(&v).abs() - 1.0).abs() < 1e-10);
    let comp = map.components().column(0);
    assert!(comp[comp.iamax()] > 0.0);
    assert!(pca_fit(&x, 0).is_err());
    assert!(pca_fit(&x, 5).is_err());
    assert!(pca_fit(&gauss(3, 5, 1), 3).is_err());
}

#[test]
fn full_rank_pca_reconstructs() {
    let x = gauss(6, 9, 62);
    let map = pca_fit(&x, 5).unwrap();
    let scores = pca_apply(&map, &x).unwrap();
    let mut back = scores * map.components().transpose();
    for mut row in back.row_iter_mut() {
        row += map.mean().transpose();
    }
    assert!((back - &x).amax() < 1e-10);
    let lifted = pca_lift(&map, &DMatrix::identity(5, 5)).unwrap();
    assert_eq!(&lifted, map.components());
    assert!(pca_lift(&map, &DMatrix::identity(4, 4)).is_err());
    assert!(pca_apply(&map, &gauss(2, 8, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn full_pca_then_opg_equals_opg(n in 5usize..12, p in 2usize..5, seed in 0u64..10_000) {
        let data = random_data(n, p, seed);
        let w = WeightSpec::new(1.5).unwrap();
        let direct = opg_fit(&data, &w, OpgRidge::Auto).unwrap();
        let map = pca_fit(data.x(), p).unwrap();
        let scores = pca_apply(&map, data.x()).unwrap();
        let reduced = opg_fit(&data.with_features(scores).unwrap(), &w, OpgRidge::Auto).unwrap();
        let lifted = pca_lift(&map, reduced.slopes()).unwrap();
        let scale = 1.0 + direct.slopes().amax();
        prop_assert!((lifted - direct.slopes()).amax() < 1e-8 * scale);
        prop_assert!((reduced.intercepts() - direct.intercepts()).amax() < 1e-8 * scale);
    }

    #[test]
    fn affine_response_is_recovered_exactly(n in 4usize..10, p in 1usize..4, seed in 0u64..10_000) {
        prop_assume!(n > p);
        let x = gauss(n, p, seed);
        let slope = gauss_vec(p, seed + 9);
        let y = DVector::from_iterator(n, x.row_iter().map(|r| 0.7 + r.transpose().dot(&slope)));
        let data = Dataset::new(x, y).unwrap();
        let fit = opg_fit(&data, &WeightSpec::new(2.0).unwrap(), OpgRidge::Fixed(0.0)).unwrap();
        for b in fit.slopes().column_iter() {
            prop_assert!((b - &slope).amax() < 1e-8 * (1.0 + slope.amax()));
        }
    }
}
