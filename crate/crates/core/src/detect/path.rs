//! Grouping paths over a grid of penalty levels.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::detect::admm::{admm_solve_from, LeastSquaresProblem, WarmStart};
use crate::detect::grouping::{partition_from_distances, GroupingStructure};
use crate::detect::misalign::{misalignment_matrix, MisalignmentSet};
use crate::detect::{CoefficientScores, DetectConfig, Diagnostics};
use crate::error::{Error, Result};
use crate::funcdata::ScoreMatrix;
use crate::scalar::Scalar;

/// Solution at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFit<T: Scalar = f64> {
    pub coefficients: CoefficientScores<T>,
    /// Normalized misalignments, `p x p`.
    pub misalignment: DMatrix<T>,
    pub grouping: GroupingStructure,
    pub diagnostics: Diagnostics,
}

impl<T: Scalar> PathFit<T> {
    /// Re-thresholds this solution at another `λ̃`.
    pub fn grouping_at(&self, tilde_lambda: T) -> GroupingStructure {
        partition_from_distances(&self.misalignment, tilde_lambda)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint<T: Scalar = f64> {
    pub lambda: T,
    pub outcome: Result<PathFit<T>>,
}

fn solve_point<T: Scalar>(
    problem: &LeastSquaresProblem<T>,
    config: &DetectConfig<T>,
    lambda: T,
    warm: Option<&WarmStart<T>>,
) -> Result<(PathFit<T>, WarmStart<T>)> {
    let mut cfg = config.clone();
    cfg.penalty = config.penalty.with_lambda(lambda);
    let (b, state) = admm_solve_from(problem, &cfg, warm)?;
    let misalignment = misalignment_matrix(&b)?;
    let grouping = partition_from_distances(&misalignment, config.tilde_lambda);
    let fit = PathFit {
        coefficients: b,
        misalignment,
        grouping,
        diagnostics: state.diagnostics(),
    };
    Ok((fit, state.warm_start()))
}

/// Detection over an ascending `λ` grid on an already prepared problem.
///
/// With `config.warm_start` each point starts from the previous point's
/// coefficients and multipliers; a failed point restarts the chain from the
/// configured initialization. Without warm starts the points are solved in
/// parallel.
pub fn detect_path_on<T: Scalar>(
    problem: &LeastSquaresProblem<T>,
    lambda_grid: &[T],
    config: &DetectConfig<T>,
) -> Result<Vec<PathPoint<T>>> {
    config.validate()?;
    if lambda_grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    if lambda_grid.iter().any(|l| !l.is_finite() || *l < T::zero()) {
        return Err(Error::InvalidInput("lambda grid values must be finite and >= 0".into()));
    }
    if lambda_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("lambda grid must be sorted ascending".into()));
    }
    if problem.dim() < 2 {
        return Err(Error::InvalidInput("group detection needs D >= 2".into()));
    }

    if !config.warm_start {
        return Ok(lambda_grid
            .par_iter()
            .map(|&lambda| PathPoint {
                lambda,
                outcome: solve_point(problem, config, lambda, None).map(|(fit, _)| fit),
            })
            .collect());
    }

    let mut out = Vec::with_capacity(lambda_grid.len());
    let mut warm: Option<WarmStart<T>> = None;
    for &lambda in lambda_grid {
        match solve_point(problem, config, lambda, warm.as_ref()) {
            Ok((fit, next)) => {
                warm = Some(next);
                out.push(PathPoint { lambda, outcome: Ok(fit) });
            }
            Err(e) => {
                log::warn!("detection failed at lambda = {lambda}: {e}");
                warm = None;
                out.push(PathPoint { lambda, outcome: Err(e) });
            }
        }
    }
    Ok(out)
}

/// Grouping path: responses and scores are centered, then each `λ` is solved.
pub fn detect_path<T: Scalar>(
    scores: &ScoreMatrix<T>,
    y: &[T],
    lambda_grid: &[T],
    config: &DetectConfig<T>,
) -> Result<Vec<PathPoint<T>>> {
    let problem = LeastSquaresProblem::centered(scores, y)?;
    detect_path_on(&problem, lambda_grid, config)
}

/// Default grid: `0` followed by `n_points - 1` log-spaced values ending at
/// `λ_max`, where `γ λ_max` is twice the largest least-squares misalignment
/// norm so every pair starts inside the shrinking region at the top of the grid.
pub fn default_lambda_grid<T: Scalar>(
    problem: &LeastSquaresProblem<T>,
    gamma: T,
    n_points: usize,
) -> Result<Vec<T>> {
    if n_points < 2 {
        return Err(Error::InvalidInput("lambda grid needs at least two points".into()));
    }
    let ols = problem.ols()?;
    let m = MisalignmentSet::from_scores(&ols);
    let largest = m.norms().iter().fold(T::zero(), |a, b| a.max(*b));
    let lambda_max = T::lit(2.0) * largest / gamma;
    if !(lambda_max > T::zero()) {
        return Ok(vec![T::zero(); 1]);
    }
    let lambda_min = lambda_max * T::lit(1e-3);
    let steps = n_points - 2;
    let ratio = if steps == 0 {
        T::one()
    } else {
        (lambda_max / lambda_min).ln() / T::from_usize_lossy(steps)
    };
    let mut grid = vec![T::zero()];
    grid.extend((0..=steps).map(|k| lambda_min * (ratio * T::from_usize_lossy(k)).exp()));
    Ok(grid)
}
