//! Subcommand implementations. Each returns the files it wrote, manifest last.

use std::path::{Path, PathBuf};

use serde::Serialize;
use shapealign::detect::{
    default_lambda_grid, detect_path_on, DetectConfig, GroupingStructure, LeastSquaresProblem,
};
use shapealign::fit::{fit_grouped, predict, rmse, FitOptions, GroupedModel};
use shapealign::funcdata::{build_eigenbasis, build_fourier_basis, project_scores, ScoreMatrix};
use shapealign::penalty::{PenaltyKind, PenaltySpec};
use shapealign::select::{compare_baselines, select_among, select_model, Candidate, CvConfig};
use shapealign::simgen::{gen_dataset, SimConfig, RNG_NAME};

use crate::args::{
    BaselinesCmd, BasisChoice, Cli, Command, CvArgs, CvCmd, DataArgs, DetectArgs, DetectCmd, FitArgs, FitCmd,
    SimulateArgs,
};
use crate::error::{CliError, CliResult};
use crate::formats::{
    parse_partition, read_curves, read_partition, read_responses, read_scores, write_coefficients, write_curves,
    write_fitted, write_json, write_partition, write_responses, write_scores,
};
use crate::manifest::{ManifestBuilder, SCHEMA_VERSION};

/// Runs one command inside a thread pool sized by `--jobs`.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cli.jobs)))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => simulate(a, &cli.out),
        Command::Detect(a) => detect(a, &cli.out),
        Command::Fit(a) => fit(a, &cli.out),
        Command::Cv(a) => cv(a, &cli.out),
        Command::Baselines(a) => baselines(a, &cli.out),
    })
}

/// Writes the manifest and appends it to the list of outputs.
fn finish(manifest: ManifestBuilder, out: &Path, mut written: Vec<PathBuf>) -> CliResult<Vec<PathBuf>> {
    written.push(manifest.finish(out)?);
    Ok(written)
}

pub fn simulate(args: &SimulateArgs, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut manifest = ManifestBuilder::new("simulate", args)?;
    manifest.seed(args.seed, RNG_NAME);
    let mut config = SimConfig::ten_covariate(args.n, args.s, args.seed);
    config.dim = args.dim;
    config.grid_len = args.grid_len;
    let data = gen_dataset(&config)?;

    let written = vec![
        out.join("curves.csv"),
        out.join("scores.csv"),
        out.join("responses.csv"),
        out.join("truth.txt"),
        out.join("coefficients.csv"),
    ];
    write_curves(&written[0], &data.curves)?;
    write_scores(&written[1], &data.scores)?;
    write_responses(&written[2], &data.y)?;
    write_partition(&written[3], &data.truth)?;
    write_coefficients(&written[4], &data.coefficients)?;
    written.iter().for_each(|p| manifest.output(p));
    finish(manifest, out, written)
}

/// How the scores were obtained.
#[derive(Debug, Clone, Serialize)]
pub struct BasisInfo {
    pub kind: BasisChoice,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
}

pub struct Loaded {
    pub scores: ScoreMatrix<f64>,
    pub y: Vec<f64>,
    pub basis: BasisInfo,
}

fn locate(data: &DataArgs, explicit: &Option<PathBuf>, name: &str, flag: &str) -> CliResult<PathBuf> {
    explicit
        .clone()
        .or_else(|| data.data.as_ref().map(|d| d.join(name)))
        .ok_or_else(|| CliError::Usage(format!("no {name}: pass --data or --{flag}")))
}

pub fn load(args: &DataArgs, manifest: &mut ManifestBuilder) -> CliResult<Loaded> {
    let responses = locate(args, &args.responses, "responses.csv", "responses")?;
    let y = read_responses(&responses)?;
    manifest.input(&responses);
    let (scores, basis) = match args.basis {
        BasisChoice::Scores => {
            let path = locate(args, &args.scores, "scores.csv", "scores")?;
            let scores = read_scores(&path)?;
            manifest.input(&path);
            let info = BasisInfo { kind: args.basis, dim: scores.dim(), var_threshold: None, eigenvalues: None };
            (scores, info)
        }
        BasisChoice::Fourier | BasisChoice::Eigen => {
            let path = locate(args, &args.curves, "curves.csv", "curves")?;
            let curves = read_curves(&path)?.into_curve_set(y.clone())?;
            manifest.input(&path);
            let (basis, info) = if args.basis == BasisChoice::Fourier {
                let basis = build_fourier_basis(args.dim, curves.grid())?;
                (basis, BasisInfo { kind: args.basis, dim: args.dim, var_threshold: None, eigenvalues: None })
            } else {
                let (basis, dim) = build_eigenbasis(&curves, args.var_threshold)?;
                let info = BasisInfo {
                    kind: args.basis,
                    dim,
                    var_threshold: Some(args.var_threshold),
                    eigenvalues: basis.eigenvalues().map(<[f64]>::to_vec),
                };
                (basis, info)
            };
            (project_scores(&curves, &basis)?, info)
        }
    };
    if scores.n_samples() != y.len() {
        return Err(CliError::Usage(format!(
            "scores have {} samples but responses have {}",
            scores.n_samples(),
            y.len()
        )));
    }
    Ok(Loaded { scores, y, basis })
}

fn detect_config(args: &DetectArgs, tilde_lambda: f64) -> CliResult<DetectConfig<f64>> {
    let mut config = DetectConfig::new(PenaltySpec::new(args.penalty, 0.0, args.gamma)?);
    config.theta = args.theta;
    config.tilde_lambda = tilde_lambda;
    config.max_iter = args.max_iter;
    config.tol_primal = args.tol_primal;
    config.tol_change = args.tol_change;
    config.warm_start = !args.no_warm_start;
    config.validate()?;
    Ok(config)
}

fn lambda_grid(args: &DetectArgs, problem: &LeastSquaresProblem<f64>) -> CliResult<Vec<f64>> {
    match &args.lambda_grid {
        Some(grid) => Ok(grid.clone()),
        None => Ok(default_lambda_grid(problem, args.gamma, args.n_lambda)?),
    }
}

fn fit_options(args: &FitArgs) -> FitOptions {
    FitOptions { max_iter: args.fit_max_iter, tol: args.fit_tol }
}

#[derive(Debug, Serialize)]
pub struct PathRecord {
    pub lambda: f64,
    pub error: Option<String>,
    pub partition: Option<GroupingStructure>,
    pub n_groups: Option<usize>,
    /// Normalized misalignments, one row per covariate.
    pub misalignment: Option<Vec<Vec<f64>>>,
    pub coefficients: Option<Vec<Vec<f64>>>,
    pub iterations: Option<usize>,
    pub primal_residual: Option<f64>,
    pub change: Option<f64>,
    pub converged: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct PathFile {
    pub schema_version: u32,
    pub penalty: PenaltyKind,
    pub gamma: f64,
    pub theta: f64,
    pub tilde_lambda: f64,
    pub warm_start: bool,
    pub n_samples: usize,
    pub n_covariates: usize,
    pub basis: BasisInfo,
    pub points: Vec<PathRecord>,
}

pub fn detect(args: &DetectCmd, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut manifest = ManifestBuilder::new("detect", args)?;
    let config = detect_config(&args.detect, args.tilde_lambda)?;
    let data = load(&args.data, &mut manifest)?;
    let problem = LeastSquaresProblem::centered(&data.scores, &data.y)?;
    let grid = lambda_grid(&args.detect, &problem)?;
    let path = detect_path_on(&problem, &grid, &config)?;

    let points: Vec<PathRecord> = path
        .iter()
        .map(|pt| match &pt.outcome {
            Ok(fit) => PathRecord {
                lambda: pt.lambda,
                error: None,
                n_groups: Some(fit.grouping.n_groups()),
                partition: Some(fit.grouping.clone()),
                misalignment: Some(fit.misalignment.row_iter().map(|r| r.iter().copied().collect()).collect()),
                coefficients: Some(fit.coefficients.rows()),
                iterations: Some(fit.diagnostics.iterations),
                primal_residual: Some(fit.diagnostics.primal_residual),
                change: Some(fit.diagnostics.change),
                converged: Some(fit.diagnostics.converged),
            },
            Err(e) => PathRecord {
                lambda: pt.lambda,
                error: Some(e.to_string()),
                partition: None,
                n_groups: None,
                misalignment: None,
                coefficients: None,
                iterations: None,
                primal_residual: None,
                change: None,
                converged: None,
            },
        })
        .collect();
    let all_failed = points.iter().all(|p| p.error.is_some());
    let file = PathFile {
        schema_version: SCHEMA_VERSION,
        penalty: args.detect.penalty,
        gamma: args.detect.gamma,
        theta: args.detect.theta,
        tilde_lambda: args.tilde_lambda,
        warm_start: config.warm_start,
        n_samples: data.scores.n_samples(),
        n_covariates: data.scores.n_covariates(),
        basis: data.basis,
        points,
    };
    let target = out.join("path.json");
    write_json(&target, &file)?;
    manifest.output(&target);
    let written = finish(manifest, out, vec![target])?;
    if all_failed {
        return Err(shapealign::Error::SolverFailure {
            iteration: 0,
            reason: "detection failed at every grid point".into(),
        }
        .into());
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub n_samples: usize,
    pub train_rmse: f64,
    pub basis: BasisInfo,
    pub model: GroupedModel<f64>,
}

pub fn fit(args: &FitCmd, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut manifest = ManifestBuilder::new("fit", args)?;
    let delta = match (&args.partition, &args.groups) {
        (Some(path), _) => {
            manifest.input(path);
            read_partition(path)?
        }
        (None, Some(text)) => parse_partition(text)?,
        (None, None) => return Err(CliError::Usage("pass --partition FILE or --groups".into())),
    };
    let data = load(&args.data, &mut manifest)?;
    if delta.n_covariates() != data.scores.n_covariates() {
        return Err(CliError::Usage(format!(
            "partition covers {} covariates, data has {}",
            delta.n_covariates(),
            data.scores.n_covariates()
        )));
    }
    let model = fit_grouped(&data.scores, &data.y, &delta, &fit_options(&args.fit))?;
    if !model.converged {
        log::warn!("block relaxation stopped after {} iterations without converging", model.iterations);
    }
    let fitted = predict(&model, &data.scores)?;
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        n_samples: data.y.len(),
        train_rmse: rmse(&fitted, &data.y),
        basis: data.basis,
        model,
    };
    let written = vec![out.join("model.json"), out.join("fitted.csv")];
    write_json(&written[0], &file)?;
    write_fitted(&written[1], &fitted)?;
    written.iter().for_each(|p| manifest.output(p));
    finish(manifest, out, written)
}

fn cv_config(cv: &CvArgs, fit: &FitArgs, lambda_grid: Vec<f64>) -> CvConfig<f64> {
    let mut config = CvConfig::new(cv.seed, lambda_grid, cv.tilde_lambda_grid.clone());
    config.reps = cv.reps;
    config.train_fraction = cv.train_fraction;
    config.fit = fit_options(fit);
    config
}

#[derive(Debug, Serialize)]
pub struct Report<'a, R> {
    pub schema_version: u32,
    pub basis: &'a BasisInfo,
    #[serde(flatten)]
    pub report: R,
}

pub fn cv(args: &CvCmd, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut manifest = ManifestBuilder::new("cv", args)?;
    manifest.seed(args.cv.seed, RNG_NAME);
    let data = load(&args.data, &mut manifest)?;
    let report = if args.candidate.is_empty() {
        let detect = detect_config(&args.detect, 0.0)?;
        let problem = LeastSquaresProblem::centered(&data.scores, &data.y)?;
        let config = cv_config(&args.cv, &args.fit, lambda_grid(&args.detect, &problem)?);
        select_model(&data.scores, &data.y, &config, &detect)?
    } else {
        let candidates = args
            .candidate
            .iter()
            .map(|text| {
                let partition = parse_partition(text)?;
                Ok(Candidate {
                    n_groups: partition.n_groups(),
                    partition,
                    tunings: Vec::new(),
                    score: None,
                    error: None,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let config = cv_config(&args.cv, &args.fit, Vec::new());
        select_among(candidates, &data.scores, &data.y, &config)?
    };
    let target = out.join("cv_report.json");
    write_json(&target, &Report { schema_version: SCHEMA_VERSION, basis: &data.basis, report })?;
    manifest.output(&target);
    finish(manifest, out, vec![target])
}

pub fn baselines(args: &BaselinesCmd, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut manifest = ManifestBuilder::new("baselines", args)?;
    manifest.seed(args.cv.seed, RNG_NAME);
    if args.oracle && args.truth.is_none() {
        return Err(CliError::Usage("the oracle model needs --truth".into()));
    }
    let truth = match &args.truth {
        Some(path) => {
            manifest.input(path);
            Some(read_partition(path)?)
        }
        None => None,
    };
    let data = load(&args.data, &mut manifest)?;
    let detect = detect_config(&args.detect, 0.0)?;
    let problem = LeastSquaresProblem::centered(&data.scores, &data.y)?;
    let config = cv_config(&args.cv, &args.fit, lambda_grid(&args.detect, &problem)?);
    let report = compare_baselines(&data.scores, &data.y, &config, &detect, truth.as_ref())?;
    let target = out.join("baselines.json");
    write_json(&target, &Report { schema_version: SCHEMA_VERSION, basis: &data.basis, report })?;
    manifest.output(&target);
    finish(manifest, out, vec![target])
}
