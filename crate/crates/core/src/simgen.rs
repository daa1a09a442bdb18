//! Seeded simulation designs with known predictive subspaces.
//!
//! Randomness comes from ChaCha20 seeded with [`rand_core::SeedableRng::seed_from_u64`].
//! Each purpose (a class, a coordinate block, a shuffle) draws from its own
//! ChaCha stream number, so changing how many values one purpose consumes
//! never shifts another. Uniforms take the top 53 bits of a `u64`; normals
//! use the Box-Muller transform, consuming two uniforms per pair and using
//! both outputs.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{Dataset, Error, Result};

/// Ambient dimension of the linear two-class design.
pub const LINEAR_DIM: usize = 100;

const STREAM_NEG: u64 = 1;
const STREAM_POS: u64 = 2;
const STREAM_NEG_NOISE: u64 = 3;
const STREAM_POS_NOISE: u64 = 4;
const STREAM_SHUFFLE: u64 = 16;

/// Independent ChaCha20 stream for one purpose.
pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on `[0, 1)` with 53 random bits.
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draws via Box-Muller.
#[derive(Debug, Clone)]
pub struct NormalStream<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> NormalStream<R> {
    pub fn new(rng: R) -> Self {
        NormalStream { rng, spare: None }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - uniform(&mut self.rng);
        let u2 = uniform(&mut self.rng);
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = core::f64::consts::TAU * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    /// Two Gaussian classes in `R^100` differing along one direction.
    Linear,
    /// Concentric spheres of radii `r` and `2.5 r` in the first `d`
    /// coordinates, Gaussian noise elsewhere.
    Hypersphere,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub design: Design,
    pub n_per_class: usize,
    pub p: usize,
    pub d: usize,
    pub r: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn linear(n_per_class: usize, sigma: f64, seed: u64) -> Self {
        SimConfig {
            design: Design::Linear,
            n_per_class,
            p: LINEAR_DIM,
            d: 1,
            r: 1.0,
            sigma,
            seed,
        }
    }

    pub fn hypersphere(n_per_class: usize, p: usize, d: usize, r: f64, sigma: f64, seed: u64) -> Self {
        SimConfig {
            design: Design::Hypersphere,
            n_per_class,
            p,
            d,
            r,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::InvalidParameter {
                name: "n_per_class",
                reason: "must be at least 1",
            });
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: "must be nonnegative and finite",
            });
        }
        match self.design {
            Design::Linear if self.p != LINEAR_DIM => Err(Error::InvalidParameter {
                name: "p",
                reason: "the linear design is fixed at p = 100",
            }),
            Design::Hypersphere if self.d == 0 || self.d > self.p => Err(Error::InvalidParameter {
                name: "d",
                reason: "must satisfy 1 <= d <= p",
            }),
            Design::Hypersphere if !(self.r > 0.0 && self.r.is_finite()) => {
                Err(Error::InvalidParameter {
                    name: "r",
                    reason: "must be positive and finite",
                })
            }
            _ => Ok(()),
        }
    }

    pub fn generate(&self) -> Result<(Dataset, GroundTruth)> {
        self.validate()?;
        match self.design {
            Design::Linear => gen_linear_sim(self.n_per_class, self.sigma, self.seed),
            Design::Hypersphere => gen_hypersphere_sim(
                self.n_per_class,
                self.p,
                self.d,
                self.r,
                self.sigma,
                self.seed,
            ),
        }
    }
}

/// Orthonormal basis of the true predictive subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    directions: DMatrix<f64>,
}

impl GroundTruth {
    pub fn new(directions: DMatrix<f64>) -> Self {
        GroundTruth { directions }
    }

    /// `p x k`.
    pub fn directions(&self) -> &DMatrix<f64> {
        &self.directions
    }

    pub fn k(&self) -> usize {
        self.directions.ncols()
    }
}

/// Per-coordinate means of the linear design, `(class -1, class +1)`.
pub fn linear_design_means() -> (DVector<f64>, DVector<f64>) {
    let neg = DVector::from_fn(LINEAR_DIM, |k, _| match k {
        0..=9 => 1.5,
        10..=19 => -3.0,
        _ => 0.0,
    });
    let pos = DVector::from_fn(LINEAR_DIM, |k, _| match k {
        40..=49 => -1.5,
        50..=59 => 3.0,
        _ => 0.0,
    });
    (neg, pos)
}

/// Class `-1` rows first, then class `+1`.
pub fn gen_linear_sim(n_per_class: usize, sigma: f64, seed: u64) -> Result<(Dataset, GroundTruth)> {
    SimConfig::linear(n_per_class, sigma, seed).validate()?;
    let (neg, pos) = linear_design_means();
    let n = 2 * n_per_class;
    let mut x = DMatrix::zeros(n, LINEAR_DIM);
    let mut y = DVector::zeros(n);
    for (class, mean, stream) in [(0, &neg, STREAM_NEG), (1, &pos, STREAM_POS)] {
        let mut normals = NormalStream::new(substream(seed, stream));
        for s in 0..n_per_class {
            let i = class * n_per_class + s;
            for k in 0..LINEAR_DIM {
                x[(i, k)] = mean[k] + sigma * normals.next();
            }
            y[i] = if class == 0 { -1.0 } else { 1.0 };
        }
    }
    let truth = (neg - pos).normalize();
    Ok((Dataset::new(x, y)?, GroundTruth::new(DMatrix::from_column_slice(LINEAR_DIM, 1, truth.as_slice()))))
}

/// Class `-1` (radius `2.5 r`) rows first, then class `+1` (radius `r`).
pub fn gen_hypersphere_sim(
    n_per_class: usize,
    p: usize,
    d: usize,
    r: f64,
    sigma: f64,
    seed: u64,
) -> Result<(Dataset, GroundTruth)> {
    SimConfig::hypersphere(n_per_class, p, d, r, sigma, seed).validate()?;
    let n = 2 * n_per_class;
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let classes = [
        (-1.0, 2.5 * r, STREAM_NEG, STREAM_NEG_NOISE),
        (1.0, r, STREAM_POS, STREAM_POS_NOISE),
    ];
    let mut dir = Vec::with_capacity(d);
    for (c, &(label, radius, sphere_stream, noise_stream)) in classes.iter().enumerate() {
        let mut sphere = NormalStream::new(substream(seed, sphere_stream));
        let mut noise = NormalStream::new(substream(seed, noise_stream));
        for s in 0..n_per_class {
            let i = c * n_per_class + s;
            // Resample the (measure-zero) all-zero draw.
            let norm = loop {
                dir.clear();
                dir.extend((0..d).map(|_| sphere.next()));
                let norm = libm::sqrt(dir.iter().map(|v| v * v).sum::<f64>());
                if norm > 0.0 {
                    break norm;
                }
            };
            for (k, v) in dir.iter().enumerate() {
                x[(i, k)] = radius * v / norm;
            }
            for k in d..p {
                x[(i, k)] = sigma * noise.next();
            }
            y[i] = label;
        }
    }
    let truth = DMatrix::from_fn(p, d, |a, b| if a == b { 1.0 } else { 0.0 });
    Ok((Dataset::new(x, y)?, GroundTruth::new(truth)))
}

/// Seeded random partition into `(train, test)` with `n_test` test rows.
/// Both parts keep the original row order.
pub fn train_test_split(data: &Dataset, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if n_test > 0 && n_test >= n {
        return Err(Error::InvalidParameter {
            name: "n_test",
            reason: "must be smaller than the number of samples",
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, STREAM_SHUFFLE);
    for i in (1..n).rev() {
        let j = (uniform(&mut rng) * (i + 1) as f64) as usize;
        order.swap(i, j.min(i));
    }
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((data.select(&train), data.select(&test)))
}
