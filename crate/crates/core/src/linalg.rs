//! Small dense helpers: symmetric solves with ridge jitter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative ridge added to the diagonal when a Cholesky factorization fails.
pub const JITTER_REL: f64 = 1e-10;

/// Solution of a symmetric system together with whether jitter was needed.
#[derive(Debug, Clone)]
pub struct SpdSolution<T: Scalar> {
    pub x: DVector<T>,
    pub jittered: bool,
}

/// Solves `a x = b` for symmetric positive (semi)definite `a`.
///
/// Tries a plain Cholesky factorization first. On failure a ridge of
/// `1e-10 * trace(a) / n` is added to the diagonal and escalated by a factor
/// of 100 until the factorization succeeds.
pub fn solve_spd<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>) -> Result<SpdSolution<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "system {}x{} with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if n == 0 {
        return Ok(SpdSolution { x: DVector::zeros(0), jittered: false });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite entries in linear system".into()));
    }
    if let Some(chol) = a.clone().cholesky() {
        let x = chol.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(SpdSolution { x, jittered: false });
        }
    }
    let trace = a.trace().abs();
    let base = if trace > T::zero() {
        trace / T::from_usize_lossy(n)
    } else {
        T::one()
    };
    let mut ridge = base * T::lit(JITTER_REL);
    for _ in 0..8 {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = m.cholesky() {
            let x = chol.solve(b);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(SpdSolution { x, jittered: true });
            }
        }
        ridge *= T::lit(100.0);
    }
    Err(Error::Singular(format!("{n}x{n} system could not be factorized")))
}

/// Trapezoid quadrature weights on a strictly increasing grid.
pub fn trapezoid_weights<T: Scalar>(grid: &[T]) -> Vec<T> {
    let m = grid.len();
    let half = T::lit(0.5);
    let mut w = vec![T::zero(); m];
    if m < 2 {
        return w;
    }
    for i in 0..m - 1 {
        let h = (grid[i + 1] - grid[i]) * half;
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

pub(crate) fn max_abs<T: Scalar>(it: impl IntoIterator<Item = T>) -> T {
    it.into_iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}
