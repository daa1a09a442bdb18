//! Gradient learning for "large p, small n" data.
//!
//! The gradient of a regression function (or of the log-odds of a binary
//! classifier) is estimated as a vector-valued function in a Gaussian RKHS,
//! `f(x) = sum_i c_i K(x, x_i)`, by minimizing a locally weighted
//! first-order Taylor risk plus a Tikhonov penalty. The fitted coefficients
//! feed two supervised dimension-reduction routes:
//!
//! * the gradient outer product `G = (1/n) sum_l f(x_l) f(x_l)^T`, and
//! * the gradient covariance `S = c K c^T = (c L)(c L)^T` with `K = L L^T`,
//!
//! both decomposed from their `p x n` factors without forming a `p x p`
//! matrix. An OPG baseline, seeded simulation designs and evaluation metrics
//! round out the crate.
//!
//! The crate is `no_std` and only needs an allocator. File formats and the
//! command-line front end live in `gradlearn-cli`.
//!
//! ```
//! use gradlearn_core::{
//!     kernel::{default_bandwidths, KernelSpec, WeightSpec},
//!     regression::fit_gradient_regression,
//!     Dataset,
//! };
//! use nalgebra::{DMatrix, DVector};
//!
//! let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.2, 0.3, 1.0, 1.1, 0.9]);
//! let y = DVector::from_iterator(4, x.row_iter().map(|r| 2.0 * r[0] - r[1]));
//! let data = Dataset::new(x, y).unwrap();
//! let (s, sigma) = default_bandwidths(data.x()).unwrap();
//! let model = fit_gradient_regression(
//!     &data,
//!     KernelSpec::gaussian(sigma).unwrap(),
//!     WeightSpec::new(s).unwrap(),
//!     1e-4,
//! )
//! .unwrap();
//! assert_eq!(model.coefficients().shape(), (2, 4));
//! ```

#![no_std]

extern crate alloc;

pub mod classification;
mod data;
mod error;
pub mod kernel;
mod linalg;
pub mod metrics;
mod newton;
pub mod opg;
pub mod regression;
pub mod simgen;
mod span;
pub mod spectral;

pub use data::Dataset;
pub use error::{Error, Result};
pub use newton::{NewtonOptions, NewtonReport};
pub use span::{span_basis, SpanBasis};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
