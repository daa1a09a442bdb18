//! Self-describing JSON model archive.
//!
//! Coefficient and point arrays are written with shortest round-trip float
//! formatting and parsed with exact rounding, so a reloaded model predicts
//! bit for bit what the saved one did.

use std::fs;
use std::path::Path;

use gradlearn_core::classification::ClassGradientModel;
use gradlearn_core::kernel::{KernelSpec, WeightForm, WeightSpec};
use gradlearn_core::regression::GradientModel;
use gradlearn_core::spectral::GradientField;
use gradlearn_core::{Dataset, NewtonReport};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub sigma: f64,
    pub s: f64,
    pub weight_factor: u8,
    /// Regression penalty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Classification penalties on the log-odds and the gradient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: Option<u64>,
    /// SHA-256 of the training data, see [`dataset_digest`].
    pub dataset_sha256: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSummary {
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArchive {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub n: usize,
    pub p: usize,
    /// `n` arrays of length `p`; entry `i` is the coefficient of `K(., x_i)`.
    pub gradient_coefficients: Vec<Vec<f64>>,
    /// Log-odds coefficients, classification only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_odds_coefficients: Option<Vec<f64>>,
    /// `n` arrays of length `p`.
    pub train_points: Vec<Vec<f64>>,
    pub hyperparameters: Hyperparameters,
    pub objective_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
    pub provenance: Provenance,
}

/// Either kind of fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Regression(GradientModel),
    Classification(ClassGradientModel),
}

impl FittedModel {
    pub fn field(&self) -> &dyn GradientField {
        match self {
            FittedModel::Regression(m) => m,
            FittedModel::Classification(m) => m,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Regression(_) => ModelKind::Regression,
            FittedModel::Classification(_) => ModelKind::Classification,
        }
    }

    fn weight(&self) -> &WeightSpec {
        match self {
            FittedModel::Regression(m) => m.weight(),
            FittedModel::Classification(m) => m.weight(),
        }
    }
}

/// Hex SHA-256 over `n`, `p` (little-endian `u64`), the features in row
/// order and the responses, all as little-endian `f64` bits.
pub fn dataset_digest(data: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((data.n() as u64).to_le_bytes());
    h.update((data.p() as u64).to_le_bytes());
    for row in data.x().row_iter() {
        for v in row.iter() {
            h.update(v.to_le_bytes());
        }
    }
    for v in data.y().iter() {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

pub fn bytes_digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn columns_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

impl ModelArchive {
    pub fn from_model(model: &FittedModel, dataset_sha256: String, seed: Option<u64>) -> Self {
        let field = model.field();
        let weight = model.weight();
        let mut hyper = Hyperparameters {
            sigma: field.kernel().sigma(),
            s: weight.s(),
            weight_factor: weight.form().factor(),
            lambda: None,
            lambda1: None,
            lambda2: None,
        };
        let (objective_value, log_odds, solver) = match model {
            FittedModel::Regression(m) => {
                hyper.lambda = Some(m.lambda());
                (m.objective_value(), None, None)
            }
            FittedModel::Classification(m) => {
                hyper.lambda1 = Some(m.lambda1());
                hyper.lambda2 = Some(m.lambda2());
                let r = m.report();
                (
                    m.objective_value(),
                    Some(m.g_coefficients().iter().copied().collect()),
                    Some(SolverSummary {
                        iterations: r.iterations,
                        converged: r.converged,
                        grad_norm: r.grad_norm,
                        objective_trace: r.objective_trace.clone(),
                    }),
                )
            }
        };
        ModelArchive {
            schema_version: SCHEMA_VERSION,
            kind: model.kind(),
            n: field.train_points().nrows(),
            p: field.dim(),
            gradient_coefficients: columns_of(field.coefficients()),
            log_odds_coefficients: log_odds,
            train_points: rows_of(field.train_points()),
            hyperparameters: hyper,
            objective_value,
            solver,
            provenance: Provenance {
                seed,
                dataset_sha256,
                tool_version: env!("CARGO_PKG_VERSION").into(),
            },
        }
    }

    pub fn to_model(&self, path: &Path) -> Result<FittedModel> {
        let bad = |msg: String| CliError::format(path, msg);
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema version {}", self.schema_version)));
        }
        let (n, p) = (self.n, self.p);
        let flat = |rows: &[Vec<f64>], what: &str| -> Result<Vec<f64>> {
            if rows.len() != n || rows.iter().any(|r| r.len() != p) {
                return Err(bad(format!("{what} must be {n} arrays of length {p}")));
            }
            Ok(rows.concat())
        };
        let coef = DMatrix::from_column_slice(p, n, &flat(&self.gradient_coefficients, "gradient_coefficients")?);
        let points = DMatrix::from_row_slice(n, p, &flat(&self.train_points, "train_points")?);
        let h = &self.hyperparameters;
        let kernel = KernelSpec::gaussian(h.sigma)?;
        let form = WeightForm::from_factor(h.weight_factor)
            .ok_or_else(|| bad(format!("weight_factor must be 1 or 2, got {}", h.weight_factor)))?;
        let weight = WeightSpec::with_form(h.s, form)?;
        match self.kind {
            ModelKind::Regression => {
                let lambda = h.lambda.ok_or_else(|| bad("regression archive without lambda".into()))?;
                Ok(FittedModel::Regression(GradientModel::from_parts(
                    coef,
                    points,
                    kernel,
                    weight,
                    lambda,
                    self.objective_value,
                )?))
            }
            ModelKind::Classification => {
                let g = self
                    .log_odds_coefficients
                    .as_ref()
                    .ok_or_else(|| bad("classification archive without log_odds_coefficients".into()))?;
                let (l1, l2) = h
                    .lambda1
                    .zip(h.lambda2)
                    .ok_or_else(|| bad("classification archive without lambda1/lambda2".into()))?;
                let report = self
                    .solver
                    .as_ref()
                    .map(|s| NewtonReport {
                        iterations: s.iterations,
                        converged: s.converged,
                        grad_norm: s.grad_norm,
                        objective_trace: s.objective_trace.clone(),
                    })
                    .unwrap_or(NewtonReport {
                        iterations: 0,
                        converged: false,
                        grad_norm: 0.0,
                        objective_trace: Vec::new(),
                    });
                Ok(FittedModel::Classification(ClassGradientModel::from_parts(
                    DVector::from_column_slice(g),
                    coef,
                    points,
                    kernel,
                    weight,
                    l1,
                    l2,
                    self.objective_value,
                    report,
                )?))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("archive serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }
}
