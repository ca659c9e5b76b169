//! Grouped multiple functional regression
//!
//! `y_n = β0 + Σ_k Σ_{j∈δ_k} f_j ⟨ξ_{nj}, α_k⟩ + e_n`
//!
//! estimated by block relaxation over the templates `A`, the scale
//! coefficients `F` and the intercept, plus the two baselines: ordinary least
//! squares over all scores and the single-template (matrix-variate) model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detect::{CoefficientScores, GroupingStructure};
use crate::error::{Error, Result};
use crate::funcdata::ScoreMatrix;
use crate::linalg::solve_spd;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative objective change at which the iterations stop.
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-8 }
    }
}

/// Sufficient statistics of one training set, shared by every structure fit
/// on it.
#[derive(Debug, Clone)]
pub struct FitData<T: Scalar = f64> {
    design: DMatrix<T>,
    y: DVector<T>,
    gram: DMatrix<T>,
    col_sums: DVector<T>,
    xty: DVector<T>,
    y_sum: T,
    tss: T,
    p: usize,
    dim: usize,
    start: CoefficientScores<T>,
}

impl<T: Scalar> FitData<T> {
    pub fn new(scores: &ScoreMatrix<T>, y: &[T]) -> Result<Self> {
        let n = scores.n_samples();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!("{} score rows, {} responses", n, y.len())));
        }
        if n == 0 {
            return Err(Error::InvalidInput("no samples".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite response".into()));
        }
        let (p, dim) = (scores.n_covariates(), scores.dim());
        let design = scores.design().clone();
        let y = DVector::from_column_slice(y);
        let nn = T::from_usize_lossy(n);
        let gram = design.tr_mul(&design);
        let col_sums = DVector::from_iterator(design.ncols(), design.column_iter().map(|c| c.sum()));
        let xty = design.tr_mul(&y);
        let y_sum = y.sum();
        let y_mean = y_sum / nn;
        let tss = y.iter().fold(T::zero(), |s, v| s + (*v - y_mean) * (*v - y_mean));

        // Centered least squares (ridge when underdetermined) seeds the templates.
        let mut cgram = gram.clone();
        let mut cxty = xty.clone();
        for a in 0..cgram.nrows() {
            cxty[a] -= col_sums[a] * y_mean;
            for b in 0..cgram.ncols() {
                cgram[(a, b)] -= col_sums[a] * col_sums[b] / nn;
            }
        }
        let pd = p * dim;
        if n <= pd + 1 {
            let eps = T::lit(1e-4) * cgram.trace() / T::from_usize_lossy(pd.max(1));
            for a in 0..pd {
                cgram[(a, a)] += eps;
            }
        }
        let start = CoefficientScores::from_flat(&solve_spd(&cgram, &cxty)?.x, p, dim)?;
        Ok(Self { design, y, gram, col_sums, xty, y_sum, tss, p, dim, start })
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Least-squares rows used to initialize the templates.
    pub fn initial_rows(&self) -> &CoefficientScores<T> {
        &self.start
    }

    fn half_rss(&self, b: &DVector<T>, beta0: T) -> T {
        let fitted = &self.design * b;
        let half = T::lit(0.5);
        self.y
            .iter()
            .zip(fitted.iter())
            .fold(T::zero(), |s, (y, f)| s + (*y - beta0 - *f) * (*y - beta0 - *f))
            * half
    }
}

/// A fitted grouped model. `alpha` holds one template score vector per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedModel<T: Scalar = f64> {
    pub delta: GroupingStructure,
    pub beta0: T,
    pub f: Vec<T>,
    pub alpha: Vec<Vec<T>>,
    /// Normalization constants `c_k = sign(α_k1)·‖α_k‖`.
    pub c: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub objective_trace: Vec<T>,
    /// Set when any inner solve needed a ridge jitter.
    pub jittered: bool,
}

impl<T: Scalar> GroupedModel<T> {
    pub fn n_covariates(&self) -> usize {
        self.f.len()
    }

    pub fn dim(&self) -> usize {
        self.alpha.first().map_or(0, Vec::len)
    }

    /// The identifiable rows `f_j α_k`, `j ∈ δ_k`.
    pub fn products(&self) -> CoefficientScores<T> {
        let labels = self.delta.labels();
        let rows: Vec<Vec<T>> = (0..self.f.len())
            .map(|j| self.alpha[labels[j]].iter().map(|a| *a * self.f[j]).collect())
            .collect();
        CoefficientScores::from_rows(&rows).expect("products of finite factors")
    }

    fn flat_products(&self) -> DVector<T> {
        self.products().to_flat()
    }
}

/// Rescales every template to unit norm with a nonnegative leading component.
///
/// When `α_k1 = 0` the sign comes from the first nonzero component.
pub fn normalize<T: Scalar>(model: &GroupedModel<T>) -> Result<GroupedModel<T>> {
    let mut out = model.clone();
    let labels = model.delta.labels();
    let mut c = Vec::with_capacity(model.alpha.len());
    for (k, a) in out.alpha.iter_mut().enumerate() {
        let norm = a.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
        let lead = a.iter().copied().find(|v| *v != T::zero());
        let Some(lead) = lead.filter(|_| norm > T::zero() && norm.is_finite()) else {
            return Err(Error::DegenerateTemplate { group: k });
        };
        // Already unit templates are left untouched so normalization is idempotent.
        let unit = (norm - T::one()).abs() <= T::default_epsilon() * T::lit(4.0);
        let ck = match (lead < T::zero(), unit) {
            (false, true) => T::one(),
            (true, true) => -T::one(),
            (false, false) => norm,
            (true, false) => -norm,
        };
        a.iter_mut().for_each(|v| *v /= ck);
        c.push(ck);
    }
    for (j, f) in out.f.iter_mut().enumerate() {
        *f *= c[labels[j]];
    }
    // Constants compose so that repeated normalization reports the original scale.
    out.c = if model.c.len() == c.len() {
        model.c.iter().zip(&c).map(|(a, b)| *a * *b).collect()
    } else {
        c
    };
    Ok(out)
}

/// Fitted values `β0 + Σ_j f_j ⟨ξ_j, α_k(j)⟩`.
pub fn predict<T: Scalar>(model: &GroupedModel<T>, scores: &ScoreMatrix<T>) -> Result<Vec<T>> {
    if scores.n_covariates() != model.n_covariates() || scores.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} covariates with D = {}, scores have {} with D = {}",
            model.n_covariates(),
            model.dim(),
            scores.n_covariates(),
            scores.dim()
        )));
    }
    let fitted = scores.design() * model.flat_products();
    Ok(fitted.iter().map(|v| *v + model.beta0).collect())
}

fn leading_direction<T: Scalar>(rows: &[Vec<T>], dim: usize) -> Vec<T> {
    // Rows are normalized first so the start does not depend on covariate scale.
    let normalized: Vec<Vec<T>> = rows
        .iter()
        .filter_map(|r| {
            let n = r.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
            (n > T::zero()).then(|| r.iter().map(|v| *v / n).collect())
        })
        .collect();
    let mut e1 = vec![T::zero(); dim];
    e1[0] = T::one();
    if normalized.is_empty() {
        return e1;
    }
    let m = DMatrix::from_fn(normalized.len(), dim, |i, d| normalized[i][d]);
    let gram = m.tr_mul(&m);
    let eig = gram.symmetric_eigen();
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > eig.eigenvalues[best] { i } else { best });
    let v: Vec<T> = eig.eigenvectors.column(top).iter().copied().collect();
    if v.iter().all(|x| x.is_finite()) {
        v
    } else {
        e1
    }
}

/// Solves `h x = r` over the coordinates whose diagonal is nonzero; the
/// remaining coordinates keep their values from `prev`.
fn partial_solve<T: Scalar>(h: &DMatrix<T>, r: &DVector<T>, prev: &[T]) -> Result<(Vec<T>, bool)> {
    let active: Vec<usize> = (0..h.nrows()).filter(|&i| h[(i, i)] > T::zero()).collect();
    let mut out = prev.to_vec();
    if active.is_empty() {
        return Ok((out, false));
    }
    let m = active.len();
    let hs = DMatrix::from_fn(m, m, |a, b| h[(active[a], active[b])]);
    let mut rs = DVector::from_fn(m, |a, _| r[active[a]]);
    // Inactive coordinates have identically zero columns, so they do not couple.
    for (a, &i) in active.iter().enumerate() {
        for (q, pv) in prev.iter().enumerate() {
            if !active.contains(&q) {
                rs[a] -= h[(i, q)] * *pv;
            }
        }
    }
    let sol = solve_spd(&hs, &rs)?;
    for (a, &i) in active.iter().enumerate() {
        out[i] = sol.x[a];
    }
    Ok((out, sol.jittered))
}

fn check_structure<T: Scalar>(data: &FitData<T>, delta: &GroupingStructure) -> Result<()> {
    if delta.n_covariates() != data.p {
        return Err(Error::InvalidInput(format!(
            "grouping covers {} covariates, data has {}",
            delta.n_covariates(),
            data.p
        )));
    }
    if data.dim == 0 {
        return Err(Error::InvalidInput("score dimension is zero".into()));
    }
    for (k, block) in delta.blocks().iter().enumerate() {
        let empty = block
            .iter()
            .all(|&j| (0..data.dim).all(|d| data.gram[(j * data.dim + d, j * data.dim + d)] == T::zero()));
        if empty {
            return Err(Error::DegenerateGroup { group: k });
        }
    }
    Ok(())
}

struct Params<T: Scalar> {
    f: Vec<T>,
    alpha: Vec<Vec<T>>,
    beta0: T,
}

impl<T: Scalar> Params<T> {
    fn flat(&self, labels: &[usize], dim: usize) -> DVector<T> {
        DVector::from_fn(self.f.len() * dim, |i, _| {
            let (j, d) = (i / dim, i % dim);
            self.f[j] * self.alpha[labels[j]][d]
        })
    }
}

/// Block relaxation on precomputed statistics; the result is normalized.
pub fn fit_grouped_on<T: Scalar>(
    data: &FitData<T>,
    delta: &GroupingStructure,
    options: &FitOptions,
) -> Result<GroupedModel<T>> {
    check_structure(data, delta)?;
    if options.max_iter == 0 || !(options.tol >= 0.0) {
        return Err(Error::Config("max_iter must be >= 1 and tol >= 0".into()));
    }
    let (p, dim, k_groups) = (data.p, data.dim, delta.n_groups());
    let n = data.n_samples();
    if n <= k_groups * dim + p + 1 {
        log::warn!("{n} samples for {} free parameters", k_groups * dim + p + 1);
    }
    let labels = delta.labels();
    let nn = T::from_usize_lossy(n);

    let start = data.initial_rows();
    let alpha: Vec<Vec<T>> = delta
        .blocks()
        .iter()
        .map(|block| leading_direction(&block.iter().map(|&j| start.row(j)).collect::<Vec<_>>(), dim))
        .collect();
    let f: Vec<T> = (0..p)
        .map(|j| start.row(j).iter().zip(&alpha[labels[j]]).fold(T::zero(), |s, (b, a)| s + *b * *a))
        .collect();
    let mut params = Params { f, alpha, beta0: T::zero() };
    params.beta0 = (data.y_sum - data.col_sums.dot(&params.flat(&labels, dim))) / nn;

    let mut obj = data.half_rss(&params.flat(&labels, dim), params.beta0);
    let mut trace = vec![obj];
    let floor = (T::lit(1e-12) * data.tss).max(T::lit(f64::MIN_POSITIVE));
    let tol = T::lit(options.tol);
    let mut jittered = false;
    let mut converged = false;
    let mut iterations = 0;

    let accept = |candidate: Params<T>, params: &mut Params<T>, obj: &mut T| {
        let value = data.half_rss(&candidate.flat(&labels, dim), candidate.beta0);
        if value <= *obj {
            *params = candidate;
            *obj = value;
        }
    };

    for it in 1..=options.max_iter {
        iterations = it;
        let prev = obj;
        let r = &data.xty - &data.col_sums * params.beta0;

        // Templates given scales: Z = Ξ P with P[(j,d),(k,d)] = f_j.
        let mut pm = DMatrix::zeros(p * dim, k_groups * dim);
        for j in 0..p {
            for d in 0..dim {
                pm[(j * dim + d, labels[j] * dim + d)] = params.f[j];
            }
        }
        let h = pm.tr_mul(&(&data.gram * &pm));
        let rhs = pm.tr_mul(&r);
        let prev_a: Vec<T> = params.alpha.iter().flatten().copied().collect();
        let (a, jit) = partial_solve(&h, &rhs, &prev_a)?;
        jittered |= jit;
        let candidate = Params {
            f: params.f.clone(),
            alpha: a.chunks(dim).map(<[T]>::to_vec).collect(),
            beta0: params.beta0,
        };
        accept(candidate, &mut params, &mut obj);

        // Scales given templates: W = Ξ Q with Q[(j,d), j] = α_{k(j),d}.
        let mut qm = DMatrix::zeros(p * dim, p);
        for j in 0..p {
            for d in 0..dim {
                qm[(j * dim + d, j)] = params.alpha[labels[j]][d];
            }
        }
        let h = qm.tr_mul(&(&data.gram * &qm));
        let rhs = qm.tr_mul(&r);
        let (fv, jit) = partial_solve(&h, &rhs, &params.f)?;
        jittered |= jit;
        let candidate = Params { f: fv, alpha: params.alpha.clone(), beta0: params.beta0 };
        accept(candidate, &mut params, &mut obj);

        let beta0 = (data.y_sum - data.col_sums.dot(&params.flat(&labels, dim))) / nn;
        let candidate = Params { f: params.f.clone(), alpha: params.alpha.clone(), beta0 };
        accept(candidate, &mut params, &mut obj);

        if !obj.is_finite() || params.f.iter().chain(params.alpha.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::SolverFailure { iteration: it, reason: "non-finite iterate".into() });
        }
        trace.push(obj);
        if prev - obj <= tol * prev.max(floor) {
            converged = true;
            break;
        }
    }
    if jittered {
        log::warn!("block relaxation needed ridge jitter on a singular system");
    }

    let model = GroupedModel {
        delta: delta.clone(),
        beta0: params.beta0,
        f: params.f,
        alpha: params.alpha,
        c: Vec::new(),
        converged,
        iterations,
        objective_trace: trace,
        jittered,
    };
    normalize(&model)
}

pub fn fit_grouped<T: Scalar>(
    scores: &ScoreMatrix<T>,
    y: &[T],
    delta: &GroupingStructure,
    options: &FitOptions,
) -> Result<GroupedModel<T>> {
    fit_grouped_on(&FitData::new(scores, y)?, delta, options)
}

/// Single template shared by all covariates.
pub fn fit_matrix_variate<T: Scalar>(
    scores: &ScoreMatrix<T>,
    y: &[T],
    options: &FitOptions,
) -> Result<GroupedModel<T>> {
    fit_grouped(scores, y, &GroupingStructure::single_group(scores.n_covariates()), options)
}

/// Least squares over an intercept and every score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinaryModel<T: Scalar = f64> {
    pub beta0: T,
    pub coefficients: Vec<Vec<T>>,
    pub jittered: bool,
}

impl<T: Scalar> OrdinaryModel<T> {
    pub fn predict(&self, scores: &ScoreMatrix<T>) -> Result<Vec<T>> {
        let b = CoefficientScores::from_rows(&self.coefficients)?;
        if scores.n_covariates() != b.n_covariates() || scores.dim() != b.dim() {
            return Err(Error::DimensionMismatch("scores do not match the ordinary model".into()));
        }
        let fitted = scores.design() * b.to_flat();
        Ok(fitted.iter().map(|v| *v + self.beta0).collect())
    }
}

pub fn fit_ordinary_on<T: Scalar>(data: &FitData<T>) -> Result<OrdinaryModel<T>> {
    let pd = data.p * data.dim;
    let mut h = DMatrix::zeros(pd + 1, pd + 1);
    let mut r = DVector::zeros(pd + 1);
    h[(0, 0)] = T::from_usize_lossy(data.n_samples());
    r[0] = data.y_sum;
    for a in 0..pd {
        h[(0, a + 1)] = data.col_sums[a];
        h[(a + 1, 0)] = data.col_sums[a];
        r[a + 1] = data.xty[a];
        for b in 0..pd {
            h[(a + 1, b + 1)] = data.gram[(a, b)];
        }
    }
    let sol = solve_spd(&h, &r)?;
    if sol.jittered {
        log::warn!("ordinary least squares needed ridge jitter");
    }
    let b = CoefficientScores::from_flat(&sol.x.rows(1, pd).into_owned(), data.p, data.dim)?;
    Ok(OrdinaryModel { beta0: sol.x[0], coefficients: b.rows(), jittered: sol.jittered })
}

pub fn fit_ordinary<T: Scalar>(scores: &ScoreMatrix<T>, y: &[T]) -> Result<OrdinaryModel<T>> {
    fit_ordinary_on(&FitData::new(scores, y)?)
}

/// Root mean squared difference.
pub fn rmse<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().max(1);
    let ss = a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + (*x - *y) * (*x - *y));
    (ss / T::from_usize_lossy(n)).sqrt()
}
