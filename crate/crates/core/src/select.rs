//! Monte-Carlo cross-validation over candidate grouping structures.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_path, DetectConfig, GroupingStructure};
use crate::error::{Error, Result};
use crate::fit::{fit_grouped_on, fit_ordinary_on, predict, rmse, FitData, FitOptions};
use crate::funcdata::ScoreMatrix;
use crate::scalar::Scalar;

/// Largest fraction of replicates that may fail before a candidate is rejected.
pub const MAX_SKIP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig<T: Scalar = f64> {
    pub reps: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub lambda_grid: Vec<T>,
    pub tilde_lambda_grid: Vec<T>,
    pub fit: FitOptions,
}

impl<T: Scalar> CvConfig<T> {
    pub fn new(seed: u64, lambda_grid: Vec<T>, tilde_lambda_grid: Vec<T>) -> Self {
        Self {
            reps: 100,
            train_fraction: 2.0 / 3.0,
            seed,
            lambda_grid,
            tilde_lambda_grid,
            fit: FitOptions::default(),
        }
    }

    fn validate_splits(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction {} not in (0, 1)", self.train_fraction)));
        }
        Ok(())
    }
}

/// Training size `round(fraction · n)`.
pub fn train_size(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

/// Seeded training index sets, each sorted; the test set is the complement.
pub fn mccv_splits(n: usize, reps: usize, train_fraction: f64, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n < 6 {
        return Err(Error::InvalidInput(format!("cross-validation needs at least 6 samples, got {n}")));
    }
    let n_train = train_size(n, train_fraction);
    if n_train == 0 || n_train >= n {
        return Err(Error::Config(format!("train fraction {train_fraction} leaves an empty split")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    Ok((0..reps)
        .map(|_| {
            idx.shuffle(&mut rng);
            let mut train = idx[..n_train].to_vec();
            train.sort_unstable();
            train
        })
        .collect())
}

fn complement(n: usize, train: &[usize]) -> Vec<usize> {
    let mut in_train = vec![false; n];
    train.iter().for_each(|&i| in_train[i] = true);
    (0..n).filter(|&i| !in_train[i]).collect()
}

/// Model scored by cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "partition")]
pub enum Method {
    Grouped(GroupingStructure),
    Ordinary,
}

/// Test-set RMSE of one method over all replicates; `None` marks a failed fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MccvScore<T: Scalar = f64> {
    pub mean_rmse: T,
    pub std_rmse: T,
    pub replicate_rmse: Vec<Option<T>>,
}

fn summarize<T: Scalar>(values: Vec<Option<T>>) -> Result<MccvScore<T>> {
    let ok: Vec<T> = values.iter().flatten().copied().collect();
    let skipped = values.len() - ok.len();
    if ok.is_empty() || skipped as f64 > MAX_SKIP_FRACTION * values.len() as f64 {
        return Err(Error::SolverFailure {
            iteration: 0,
            reason: format!("{skipped} of {} replicates failed", values.len()),
        });
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} replicates skipped", values.len());
    }
    let n = T::from_usize_lossy(ok.len());
    let mean = ok.iter().fold(T::zero(), |s, v| s + *v) / n;
    let std = if ok.len() > 1 {
        (ok.iter().fold(T::zero(), |s, v| s + (*v - mean) * (*v - mean)) / (n - T::one())).sqrt()
    } else {
        T::zero()
    };
    Ok(MccvScore { mean_rmse: mean, std_rmse: std, replicate_rmse: values })
}

fn test_rmse<T: Scalar>(
    method: &Method,
    data: &FitData<T>,
    test: &ScoreMatrix<T>,
    y_test: &[T],
    options: &FitOptions,
) -> Result<T> {
    let fitted = match method {
        Method::Grouped(delta) => predict(&fit_grouped_on(data, delta, options)?, test)?,
        Method::Ordinary => fit_ordinary_on(data)?.predict(test)?,
    };
    Ok(rmse(&fitted, y_test))
}

/// Scores every method on the same seeded splits. Each entry fails on its own
/// when more than 10% of its replicates cannot be fit.
pub fn mccv_compare<T: Scalar>(
    methods: &[Method],
    scores: &ScoreMatrix<T>,
    y: &[T],
    reps: usize,
    train_fraction: f64,
    seed: u64,
    options: &FitOptions,
) -> Result<Vec<Result<MccvScore<T>>>> {
    let n = scores.n_samples();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("{} score rows, {} responses", n, y.len())));
    }
    if reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    let splits = mccv_splits(n, reps, train_fraction, seed)?;
    let table: Vec<Vec<Option<T>>> = splits
        .par_iter()
        .enumerate()
        .map(|(r, train)| {
            let test = complement(n, train);
            let y_train: Vec<T> = train.iter().map(|&i| y[i]).collect();
            let y_test: Vec<T> = test.iter().map(|&i| y[i]).collect();
            let test_scores = scores.select_rows(&test);
            let data = match FitData::new(&scores.select_rows(train), &y_train) {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("replicate {r}: {e}");
                    return vec![None; methods.len()];
                }
            };
            methods
                .iter()
                .map(|m| match test_rmse(m, &data, &test_scores, &y_test, options) {
                    Ok(v) if v.is_finite() => Some(v),
                    Ok(_) => None,
                    Err(e) => {
                        log::warn!("replicate {r}: {e}");
                        None
                    }
                })
                .collect()
        })
        .collect();
    Ok((0..methods.len())
        .map(|m| summarize(table.iter().map(|row| row[m]).collect()))
        .collect())
}

/// Average test RMSE of one grouping structure.
pub fn mccv_rmse<T: Scalar>(
    delta: &GroupingStructure,
    scores: &ScoreMatrix<T>,
    y: &[T],
    config: &CvConfig<T>,
) -> Result<MccvScore<T>> {
    config.validate_splits()?;
    let methods = [Method::Grouped(delta.clone())];
    let mut out = mccv_compare(&methods, scores, y, config.reps, config.train_fraction, config.seed, &config.fit)?;
    out.pop().expect("one method")
}

/// A `(λ, λ̃)` pair that produced a candidate partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuning<T: Scalar = f64> {
    pub lambda: T,
    pub tilde_lambda: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate<T: Scalar = f64> {
    pub partition: GroupingStructure,
    pub n_groups: usize,
    /// Every grid pair whose detection gave this partition.
    pub tunings: Vec<Tuning<T>>,
    pub score: Option<MccvScore<T>>,
    pub error: Option<String>,
}

impl<T: Scalar> Candidate<T> {
    fn smallest_lambda(&self) -> T {
        self.tunings.iter().map(|t| t.lambda).fold(T::max_value().unwrap_or(T::one()), |a, b| a.min(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport<T: Scalar = f64> {
    pub reps: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
    pub rng: String,
    pub candidates: Vec<Candidate<T>>,
    /// Index into `candidates`.
    pub selected: usize,
    /// Grid values at which detection failed.
    pub failed_lambdas: Vec<T>,
}

impl<T: Scalar> CvReport<T> {
    pub fn selected(&self) -> &Candidate<T> {
        &self.candidates[self.selected]
    }
}

/// Smallest mean RMSE, then fewer groups, then smaller `λ`.
fn pick<T: Scalar>(candidates: &[Candidate<T>]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.score.as_ref().map(|s| (i, s.mean_rmse)))
        .min_by(|(i, a), (j, b)| {
            a.partial_cmp(b)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(candidates[*i].n_groups.cmp(&candidates[*j].n_groups))
                .then(
                    candidates[*i]
                        .smallest_lambda()
                        .partial_cmp(&candidates[*j].smallest_lambda())
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
        })
        .map(|(i, _)| i)
}

/// Scores an explicit list of candidate partitions.
pub fn select_among<T: Scalar>(
    candidates: Vec<Candidate<T>>,
    scores: &ScoreMatrix<T>,
    y: &[T],
    config: &CvConfig<T>,
) -> Result<CvReport<T>> {
    config.validate_splits()?;
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate partitions".into()));
    }
    let methods: Vec<Method> = candidates.iter().map(|c| Method::Grouped(c.partition.clone())).collect();
    let results = mccv_compare(&methods, scores, y, config.reps, config.train_fraction, config.seed, &config.fit)?;
    let mut candidates = candidates;
    for (c, r) in candidates.iter_mut().zip(results) {
        match r {
            Ok(s) => c.score = Some(s),
            Err(e) => c.error = Some(e.to_string()),
        }
    }
    let selected = pick(&candidates).ok_or_else(|| Error::SolverFailure {
        iteration: 0,
        reason: "every candidate failed cross-validation".into(),
    })?;
    let n = scores.n_samples();
    let n_train = train_size(n, config.train_fraction);
    Ok(CvReport {
        reps: config.reps,
        train_size: n_train,
        test_size: n - n_train,
        seed: config.seed,
        rng: crate::simgen::RNG_NAME.to_string(),
        candidates,
        selected,
        failed_lambdas: Vec::new(),
    })
}

/// Detects partitions over the `(λ, λ̃)` grid on the full data, scores each
/// distinct partition once by MCCV and returns the best.
///
/// The penalized fit does not depend on `λ̃`, so the path is solved once and
/// re-thresholded for every `λ̃`.
pub fn select_model<T: Scalar>(
    scores: &ScoreMatrix<T>,
    y: &[T],
    config: &CvConfig<T>,
    detect: &DetectConfig<T>,
) -> Result<CvReport<T>> {
    config.validate_splits()?;
    if config.lambda_grid.is_empty() || config.tilde_lambda_grid.is_empty() {
        return Err(Error::InvalidInput("tuning grids must be nonempty".into()));
    }
    if config.tilde_lambda_grid.iter().any(|t| !(*t >= T::zero())) {
        return Err(Error::InvalidInput("tilde lambda values must be >= 0".into()));
    }
    let mut grid = config.lambda_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let path = detect_path(scores, y, &grid, detect)?;

    let mut candidates: Vec<Candidate<T>> = Vec::new();
    let mut failed = Vec::new();
    for point in &path {
        let fit = match &point.outcome {
            Ok(f) => f,
            Err(_) => {
                failed.push(point.lambda);
                continue;
            }
        };
        for &tilde in &config.tilde_lambda_grid {
            let partition = fit.grouping_at(tilde);
            let tuning = Tuning { lambda: point.lambda, tilde_lambda: tilde };
            match candidates.iter_mut().find(|c| c.partition == partition) {
                Some(c) => c.tunings.push(tuning),
                None => candidates.push(Candidate {
                    n_groups: partition.n_groups(),
                    partition,
                    tunings: vec![tuning],
                    score: None,
                    error: None,
                }),
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::SolverFailure { iteration: 0, reason: "detection failed at every grid point".into() });
    }
    let mut report = select_among(candidates, scores, y, config)?;
    report.failed_lambdas = failed;
    Ok(report)
}

/// One row of a baseline comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore<T: Scalar = f64> {
    pub name: String,
    pub method: Method,
    pub score: Option<MccvScore<T>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport<T: Scalar = f64> {
    pub selection: CvReport<T>,
    /// Seed of the evaluation splits, independent of the selection splits.
    pub eval_seed: u64,
    pub methods: Vec<MethodScore<T>>,
}

impl<T: Scalar> BaselineReport<T> {
    pub fn mean_rmse(&self, name: &str) -> Option<T> {
        self.methods
            .iter()
            .find(|m| m.name == name)
            .and_then(|m| m.score.as_ref())
            .map(|s| s.mean_rmse)
    }
}

/// Seed of the evaluation splits used by [`compare_baselines`].
pub fn evaluation_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Ordinary, matrix-variate and detected grouped models, plus the oracle
/// when the true partition is known, scored on common evaluation splits that
/// are drawn independently of the splits used to select the grouped model.
pub fn compare_baselines<T: Scalar>(
    scores: &ScoreMatrix<T>,
    y: &[T],
    config: &CvConfig<T>,
    detect: &DetectConfig<T>,
    truth: Option<&GroupingStructure>,
) -> Result<BaselineReport<T>> {
    let p = scores.n_covariates();
    if let Some(t) = truth {
        if t.n_covariates() != p {
            return Err(Error::InvalidInput(format!(
                "true partition covers {} covariates, data has {p}",
                t.n_covariates()
            )));
        }
    }
    let selection = select_model(scores, y, config, detect)?;
    let mut named = vec![
        ("ordinary".to_string(), Method::Ordinary),
        ("matrix".to_string(), Method::Grouped(GroupingStructure::single_group(p))),
        ("grouped".to_string(), Method::Grouped(selection.selected().partition.clone())),
    ];
    if let Some(t) = truth {
        named.push(("oracle".to_string(), Method::Grouped(t.clone())));
    }
    let methods: Vec<Method> = named.iter().map(|(_, m)| m.clone()).collect();
    let eval_seed = evaluation_seed(config.seed);
    let results = mccv_compare(&methods, scores, y, config.reps, config.train_fraction, eval_seed, &config.fit)?;
    let methods = named
        .into_iter()
        .zip(results)
        .map(|((name, method), r)| {
            let (score, error) = match r {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            MethodScore { name, method, score, error }
        })
        .collect();
    Ok(BaselineReport { selection, eval_seed, methods })
}
