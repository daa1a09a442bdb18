//! Command implementations. Each returns the JSON printed on stdout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gradlearn_core::classification::{self, fit_gradient_classification};
use gradlearn_core::kernel::{default_bandwidths, KernelSpec, WeightForm, WeightSpec};
use gradlearn_core::metrics::{error_rate, knn_classify, loo_error, principal_angles, ErrorReport, SubspaceReport};
use gradlearn_core::regression::{self, fit_gradient_regression};
use gradlearn_core::simgen::{GroundTruth, SimConfig};
use gradlearn_core::spectral::{
    edr_estimate, egcm_of, gradient_outer_product, project, top_eigen, EdrEstimate, LowRankGram,
    SpectralResult,
};
use gradlearn_core::{Dataset, NewtonOptions};
use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::archive::{bytes_digest, dataset_digest, FittedModel, ModelArchive};
use crate::cli::*;
use crate::csvio::{self, CsvOptions, LabelColumn};
use crate::error::{CliError, Result};
use crate::idx;

pub const MANIFEST_VERSION: u32 = 1;

/// Eigenvalue agreement required of a replayed pipeline.
pub const REPLAY_TOL: f64 = 1e-12;

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Fit(a) => fit(&a),
        Command::Reduce(a) => reduce(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Pipeline(a) => {
            let manifest = match &a.replay {
                Some(path) => replay(path, &a.out_dir)?,
                None => pipeline(&a.config, &a.out_dir)?,
            };
            Ok(to_json(&manifest))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("summary serializes")
}

fn positive(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(CliError::Usage(format!("--{name} must be positive and finite, got {x}")))
        }
        _ => Ok(()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn label_column(c: Option<usize>) -> LabelColumn {
    c.map_or(LabelColumn::Last, LabelColumn::Index)
}

pub fn load_input(input: &InputArgs, binary: bool) -> Result<Dataset> {
    let pair = input.digit_pair()?;
    match (&input.data, &input.idx_images, &input.idx_labels) {
        (Some(path), None, None) => {
            if pair.is_some() {
                return Err(CliError::Usage("--digits applies to IDX input only".into()));
            }
            csvio::load_csv(
                path,
                &CsvOptions {
                    has_header: input.header,
                    label: label_column(input.label_column),
                    binary_labels: binary,
                },
            )
        }
        (None, Some(images), Some(labels)) => {
            let img = idx::load_idx_images(images)?;
            let lab = idx::load_idx_labels(labels)?;
            idx::digit_pair(labels, &img, &lab, pair)
        }
        _ => Err(CliError::Usage(
            "give either --data or both --idx-images and --idx-labels".into(),
        )),
    }
}

/// Kernel and weight specs, filling unset bandwidths from the data.
pub fn bandwidths(x: &DMatrix<f64>, s: Option<f64>, sigma: Option<f64>, weight_factor: u8) -> Result<(KernelSpec, WeightSpec)> {
    let (s, sigma) = match (s, sigma) {
        (Some(s), Some(sigma)) => (s, sigma),
        _ => {
            let (ds, dsigma) = default_bandwidths(x)?;
            (s.unwrap_or(ds), sigma.unwrap_or(dsigma))
        }
    };
    let form = WeightForm::from_factor(weight_factor)
        .ok_or_else(|| CliError::Usage(format!("--weight-factor must be 1 or 2, got {weight_factor}")))?;
    Ok((KernelSpec::gaussian(sigma)?, WeightSpec::with_form(s, form)?))
}

pub fn validate_hyper(h: &HyperArgs, task: Task) -> Result<()> {
    positive("lambda", h.lambda)?;
    positive("lambda1", h.lambda1)?;
    positive("lambda2", h.lambda2)?;
    positive("s", h.s)?;
    positive("sigma", h.sigma)?;
    match task {
        Task::Regress if h.lambda1.is_some() || h.lambda2.is_some() => Err(CliError::Usage(
            "--lambda1/--lambda2 apply to --task classify; use --lambda".into(),
        )),
        Task::Classify if h.lambda.is_some() => Err(CliError::Usage(
            "--lambda applies to --task regress; use --lambda1/--lambda2".into(),
        )),
        _ => Ok(()),
    }
}

pub fn fit_dataset(data: &Dataset, task: Task, h: &HyperArgs) -> Result<FittedModel> {
    validate_hyper(h, task)?;
    let (kernel, weight) = bandwidths(data.x(), h.s, h.sigma, h.weight_factor)?;
    info!("fitting n={} p={} sigma={} s={}", data.n(), data.p(), kernel.sigma(), weight.s());
    Ok(match task {
        Task::Regress => {
            let lambda = h.lambda.unwrap_or(regression::DEFAULT_LAMBDA);
            FittedModel::Regression(fit_gradient_regression(data, kernel, weight, lambda)?)
        }
        Task::Classify => {
            let l1 = h.lambda1.unwrap_or(classification::DEFAULT_LAMBDA);
            let l2 = h.lambda2.unwrap_or(classification::DEFAULT_LAMBDA);
            let m = fit_gradient_classification(data, kernel, weight, l1, l2, &NewtonOptions::default())?;
            if !m.converged() {
                warn!("Newton solver stopped after {} iterations without converging", m.iterations());
            }
            FittedModel::Classification(m)
        }
    })
}

#[derive(Debug, Serialize)]
struct FitSummary<'a> {
    archive: &'a Path,
    kind: crate::archive::ModelKind,
    n: usize,
    p: usize,
    sigma: f64,
    s: f64,
    objective_value: f64,
    dataset_sha256: &'a str,
}

pub fn fit(args: &FitArgs) -> Result<String> {
    validate_hyper(&args.hyper, args.task)?;
    let data = load_input(&args.input, args.task == Task::Classify)?;
    let model = fit_dataset(&data, args.task, &args.hyper)?;
    let archive = ModelArchive::from_model(&model, dataset_digest(&data), args.seed);
    archive.save(&args.out)?;
    Ok(to_json(&FitSummary {
        archive: &args.out,
        kind: archive.kind,
        n: archive.n,
        p: archive.p,
        sigma: archive.hyperparameters.sigma,
        s: archive.hyperparameters.s,
        objective_value: archive.objective_value,
        dataset_sha256: &archive.provenance.dataset_sha256,
    }))
}

pub fn gram(model: &FittedModel, method: Method) -> Result<LowRankGram> {
    let field = model.field();
    Ok(match method {
        Method::Gop => gradient_outer_product(field, field.train_points())?,
        Method::Egcm => egcm_of(field)?,
    })
}

/// All nonzero eigenpairs and the leading `k` directions.
pub fn reduce_model(model: &FittedModel, method: Method, k: usize) -> Result<(SpectralResult, EdrEstimate)> {
    let g = gram(model, method)?;
    let spec = top_eigen(&g, g.factor().ncols());
    if spec.near_degenerate() {
        warn!("near-degenerate eigenvalues; directions within a cluster are not unique");
    }
    let edr = edr_estimate(&spec, k).map_err(|e| match e {
        gradlearn_core::Error::InvalidParameter { .. } => CliError::Usage(format!(
            "--k {k} exceeds the {} nonzero eigenvalues",
            spec.len()
        )),
        e => e.into(),
    })?;
    Ok((spec, edr))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReduceSummary {
    pub method: Method,
    pub k: usize,
    pub p: usize,
    pub eigenvalues: Vec<f64>,
    pub near_degenerate: bool,
    pub n_projected: usize,
    pub files: Vec<PathBuf>,
}

fn z_header(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("z{i}")).collect()
}

pub fn reduce(args: &ReduceArgs) -> Result<String> {
    let archive = ModelArchive::load(&args.model)?;
    let model = archive.to_model(&args.model)?;
    let (spec, edr) = reduce_model(&model, args.method, args.k)?;
    create_dir(&args.out_dir)?;
    let eig_path = args.out_dir.join("eigenvalues.csv");
    let vec_path = args.out_dir.join("eigenvectors.csv");
    let proj_path = args.out_dir.join("projections.csv");
    csvio::write_column(&eig_path, spec.eigenvalues())?;
    csvio::write_matrix(&vec_path, edr.directions(), None)?;
    let n_projected = match &args.data {
        Some(path) => {
            let data = csvio::load_csv(
                path,
                &CsvOptions {
                    has_header: args.header,
                    label: label_column(args.label_column),
                    binary_labels: false,
                },
            )?;
            let z = project(data.x(), &edr)?;
            csvio::write_dataset(&proj_path, &z, data.y(), "z")?;
            data.n()
        }
        None => {
            let pts = model.field().train_points();
            let z = project(pts, &edr)?;
            csvio::write_matrix(&proj_path, &z, Some(&z_header(args.k)))?;
            pts.nrows()
        }
    };
    let summary = ReduceSummary {
        method: args.method,
        k: args.k,
        p: archive.p,
        eigenvalues: spec.eigenvalues().to_vec(),
        near_degenerate: spec.near_degenerate(),
        n_projected,
        files: vec![eig_path, vec_path, proj_path],
    };
    let json = to_json(&summary);
    write_text(&args.out_dir.join("summary.json"), &json)?;
    Ok(json)
}

fn sim_config(sim: &SimArgs, noise: f64, seed: u64) -> Result<SimConfig> {
    let n = sim.n_per_class + sim.n_test_per_class;
    let cfg = match sim.design {
        DesignArg::Linear => SimConfig::linear(n, noise, seed),
        DesignArg::Hypersphere => SimConfig::hypersphere(n, sim.p, sim.d, sim.r, noise, seed),
    };
    if sim.n_per_class == 0 {
        return Err(CliError::Usage("--n-per-class must be at least 1".into()));
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Draws `n_per_class + n_test_per_class` samples per class; within each
/// class the first `n_per_class` rows train and the rest test.
pub fn simulate_split(sim: &SimArgs, noise: f64, seed: u64) -> Result<(Dataset, Dataset, GroundTruth)> {
    let cfg = sim_config(sim, noise, seed)?;
    let (data, truth) = cfg.generate()?;
    let per_class = cfg.n_per_class;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..2 {
        for s in 0..per_class {
            let row = class * per_class + s;
            if s < sim.n_per_class {
                train.push(row);
            } else {
                test.push(row);
            }
        }
    }
    Ok((data.select(&train), data.select(&test), truth))
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    n_train: usize,
    n_test: usize,
    p: usize,
    true_dim: usize,
    files: Vec<PathBuf>,
}

fn write_split(dir: &Path, train: &Dataset, test: &Dataset, truth: &GroundTruth) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let files = vec![dir.join("train.csv"), dir.join("test.csv"), dir.join("truth.csv")];
    csvio::write_dataset(&files[0], train.x(), train.y(), "x")?;
    csvio::write_dataset(&files[1], test.x(), test.y(), "x")?;
    csvio::write_matrix(&files[2], truth.directions(), None)?;
    Ok(files)
}

pub fn simulate(args: &SimulateArgs) -> Result<String> {
    let (train, test, truth) = simulate_split(&args.sim, args.sigma, args.seed)?;
    let files = write_split(&args.out_dir, &train, &test, &truth)?;
    Ok(to_json(&SimulateSummary {
        n_train: train.n(),
        n_test: test.n(),
        p: train.p(),
        true_dim: truth.k(),
        files,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorJson {
    pub error_rate: f64,
    pub n_errors: usize,
    pub n_test: usize,
    pub method_label: String,
    pub dimension_used: usize,
}

impl From<ErrorReport> for ErrorJson {
    fn from(r: ErrorReport) -> Self {
        ErrorJson {
            error_rate: r.error_rate,
            n_errors: r.n_errors,
            n_test: r.n_test,
            method_label: r.method_label,
            dimension_used: r.dimension_used,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceJson {
    pub principal_angles: Vec<f64>,
    pub max_angle_deg: f64,
    pub alignment: f64,
}

impl From<SubspaceReport> for SubspaceJson {
    fn from(r: SubspaceReport) -> Self {
        SubspaceJson {
            max_angle_deg: r.max_angle.to_degrees(),
            principal_angles: r.principal_angles,
            alignment: r.alignment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub knn_k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<ErrorJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loo: Option<ErrorJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subspace: Option<SubspaceJson>,
}

pub fn knn_error(train: &Dataset, test: &Dataset, k: usize, label: &str) -> Result<ErrorJson> {
    let pred = knn_classify(train, test.x(), k)?;
    Ok(error_rate(&pred, test.y().as_slice(), label, train.p())?.into())
}

pub fn knn_loo(train: &Dataset, k: usize) -> Result<ErrorJson> {
    let errors = loo_error(train, |fold, q| {
        let q = DMatrix::from_row_slice(1, q.len(), q.as_slice());
        Ok(knn_classify(fold, &q, k)?[0])
    })?;
    Ok(ErrorJson {
        error_rate: errors as f64 / train.n() as f64,
        n_errors: errors,
        n_test: train.n(),
        method_label: format!("loo-knn{k}"),
        dimension_used: train.p(),
    })
}

pub fn evaluate(args: &EvaluateArgs) -> Result<String> {
    if args.knn_k == 0 {
        return Err(CliError::Usage("--knn-k must be at least 1".into()));
    }
    let opts = CsvOptions {
        has_header: true,
        label: LabelColumn::Last,
        binary_labels: true,
    };
    let train = csvio::load_csv(&args.train, &opts)?;
    let test = match &args.test {
        Some(path) => Some(knn_error(&train, &csvio::load_csv(path, &opts)?, args.knn_k, &format!("knn{}", args.knn_k))?),
        None => None,
    };
    let loo = if args.loo {
        Some(knn_loo(&train, args.knn_k)?)
    } else {
        None
    };
    let subspace = match (&args.directions, &args.truth) {
        (Some(d), Some(t)) => {
            let est = csvio::read_matrix(d, false)?;
            let truth = csvio::read_matrix(t, false)?;
            Some(principal_angles(&est, &truth)?.into())
        }
        _ => None,
    };
    if test.is_none() && loo.is_none() && subspace.is_none() {
        return Err(CliError::Usage("nothing to evaluate: give --test, --loo or --directions/--truth".into()));
    }
    let json = to_json(&EvaluateReport {
        knn_k: args.knn_k,
        test,
        loo,
        subspace,
    });
    if let Some(out) = &args.out {
        write_text(out, &json)?;
    }
    Ok(json)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineResults {
    pub s: f64,
    pub sigma: f64,
    pub k: usize,
    pub eigenvalues: Vec<f64>,
    pub near_degenerate: bool,
    pub newton_iterations: usize,
    pub converged: bool,
    pub alignment: f64,
    pub max_angle_deg: f64,
    pub principal_angles: Vec<f64>,
    pub knn_error_reduced: Option<f64>,
    pub knn_error_raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub core_version: String,
    pub config: PipelineConfig,
    pub train_sha256: String,
    pub test_sha256: String,
    /// SHA-256 of every written file, keyed by file name.
    pub files: BTreeMap<String, String>,
    pub results: PipelineResults,
}

pub fn validate_pipeline(c: &PipelineConfig) -> Result<()> {
    sim_config(&c.sim, c.noise_sigma, c.seed)?;
    positive("lambda1", Some(c.lambda1))?;
    positive("lambda2", Some(c.lambda2))?;
    positive("s", c.s)?;
    positive("sigma", c.sigma)?;
    if c.knn_k == 0 || c.knn_k > 2 * c.sim.n_per_class {
        return Err(CliError::Usage(format!(
            "--knn-k must be between 1 and the training size {}",
            2 * c.sim.n_per_class
        )));
    }
    Ok(())
}

pub fn pipeline(c: &PipelineConfig, out_dir: &Path) -> Result<Manifest> {
    validate_pipeline(c)?;
    let (train, test, truth) = simulate_split(&c.sim, c.noise_sigma, c.seed)?;
    let mut paths = write_split(out_dir, &train, &test, &truth)?;

    let hyper = HyperArgs {
        lambda: None,
        lambda1: Some(c.lambda1),
        lambda2: Some(c.lambda2),
        s: c.s,
        sigma: c.sigma,
        weight_factor: c.weight_factor,
    };
    let model = fit_dataset(&train, Task::Classify, &hyper)?;
    let archive = ModelArchive::from_model(&model, dataset_digest(&train), Some(c.seed));
    let model_path = out_dir.join("model.json");
    archive.save(&model_path)?;
    paths.push(model_path);

    let k = c.k.unwrap_or(truth.k());
    let (spec, edr) = reduce_model(&model, c.method, k)?;
    let z_train = project(train.x(), &edr)?;
    let z_test = project(test.x(), &edr)?;
    let more = [
        out_dir.join("eigenvalues.csv"),
        out_dir.join("eigenvectors.csv"),
        out_dir.join("z_train.csv"),
        out_dir.join("z_test.csv"),
    ];
    csvio::write_column(&more[0], spec.eigenvalues())?;
    csvio::write_matrix(&more[1], edr.directions(), None)?;
    csvio::write_dataset(&more[2], &z_train, train.y(), "z")?;
    csvio::write_dataset(&more[3], &z_test, test.y(), "z")?;
    paths.extend(more);

    let subspace: SubspaceJson = principal_angles(edr.directions(), truth.directions())?.into();
    let (reduced, raw) = if test.n() > 0 {
        let zt = Dataset::new(z_train, train.y().clone())?;
        let zs = Dataset::new(z_test, test.y().clone())?;
        (
            Some(knn_error(&zt, &zs, c.knn_k, "reduced")?.error_rate),
            Some(knn_error(&train, &test, c.knn_k, "raw")?.error_rate),
        )
    } else {
        (None, None)
    };
    let (iterations, converged) = match &model {
        FittedModel::Classification(m) => (m.iterations(), m.converged()),
        FittedModel::Regression(_) => (0, true),
    };
    let mut files = BTreeMap::new();
    for p in &paths {
        let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
        let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        files.insert(name, bytes_digest(&bytes));
    }
    let manifest = Manifest {
        schema_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        core_version: gradlearn_core::VERSION.into(),
        config: c.clone(),
        train_sha256: dataset_digest(&train),
        test_sha256: dataset_digest(&test),
        files,
        results: PipelineResults {
            s: archive.hyperparameters.s,
            sigma: archive.hyperparameters.sigma,
            k,
            eigenvalues: spec.eigenvalues().to_vec(),
            near_degenerate: spec.near_degenerate(),
            newton_iterations: iterations,
            converged,
            alignment: subspace.alignment,
            max_angle_deg: subspace.max_angle_deg,
            principal_angles: subspace.principal_angles,
            knn_error_reduced: reduced,
            knn_error_raw: raw,
        },
    };
    write_text(&out_dir.join("manifest.json"), &to_json(&manifest))?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

/// Largest eigenvalue discrepancy, relative to `max(1, |lambda|)`.
pub fn eigenvalue_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<Manifest> {
    let recorded = load_manifest(manifest_path)?;
    let fresh = pipeline(&recorded.config, out_dir)?;
    if fresh.train_sha256 != recorded.train_sha256 {
        return Err(CliError::Replay("training data digest differs".into()));
    }
    let gap = eigenvalue_gap(&recorded.results.eigenvalues, &fresh.results.eigenvalues);
    if !(gap <= REPLAY_TOL) {
        return Err(CliError::Replay(format!("eigenvalues differ by {gap:e}")));
    }
    Ok(fresh)
}

/// Predicted responses in a dense vector, for archive round-trip checks.
pub fn gradients_at(model: &FittedModel, queries: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    queries
        .row_iter()
        .map(|q| {
            let q: Vec<f64> = q.iter().copied().collect();
            Ok(model.field().gradient_at(&q)?)
        })
        .collect()
}
