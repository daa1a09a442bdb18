#![allow(dead_code)]

use gradlearn_core::simgen::{substream, NormalStream};
use gradlearn_core::Dataset;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;

pub fn normals(seed: u64) -> NormalStream<ChaCha20Rng> {
    NormalStream::new(substream(seed, 99))
}

pub fn gauss(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut g = normals(seed);
    DMatrix::from_fn(rows, cols, |_, _| g.next())
}

pub fn gauss_vec(len: usize, seed: u64) -> DVector<f64> {
    let mut g = normals(seed);
    DVector::from_fn(len, |_, _| g.next())
}

/// Haar-ish random orthogonal matrix from the QR of a Gaussian matrix.
pub fn rotation(p: usize, seed: u64) -> DMatrix<f64> {
    gauss(p, p, seed ^ 0x5eed).qr().q()
}

pub fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
    Dataset::new(gauss(n, p, seed), gauss_vec(n, seed.wrapping_add(1_000_003))).unwrap()
}

pub fn random_labels(n: usize, p: usize, seed: u64) -> Dataset {
    let x = gauss(n, p, seed);
    let g = gauss_vec(n, seed.wrapping_add(7));
    let mut y = DVector::from_fn(n, |i, _| if g[i] < 0.0 { -1.0 } else { 1.0 });
    // keep both classes present
    y[0] = -1.0;
    y[n - 1] = 1.0;
    Dataset::new(x, y).unwrap()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}
