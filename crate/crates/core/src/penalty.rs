//! Concave penalties on misalignment norms and their exact group proximal maps.
//!
//! For a vector `a` and weight `θ > 0` the proximal update returns
//! `argmin_M (θ/2)‖M − a‖² + J_λ(‖M‖)`. All three penalties act only on the
//! norm, so the minimizer is `a` rescaled by a nonnegative factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    /// Truncated LASSO, `min{λx, γλ²}`.
    Tlasso,
    /// Minimax concave penalty, `min{λx − x²/(2γ), γλ²/2}`.
    Mcp,
    /// Smoothly clipped absolute deviation.
    Scad,
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tlasso" | "truncated-lasso" => Ok(Self::Tlasso),
            "mcp" => Ok(Self::Mcp),
            "scad" => Ok(Self::Scad),
            other => Err(Error::InvalidInput(format!("unknown penalty '{other}'"))),
        }
    }
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Tlasso => "tlasso",
            Self::Mcp => "mcp",
            Self::Scad => "scad",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec<T: Scalar = f64> {
    pub kind: PenaltyKind,
    pub lambda: T,
    pub gamma: T,
}

impl<T: Scalar> PenaltySpec<T> {
    pub fn new(kind: PenaltyKind, lambda: T, gamma: T) -> Result<Self> {
        let spec = Self { kind, lambda, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < T::zero() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        let min_gamma = match self.kind {
            PenaltyKind::Tlasso | PenaltyKind::Mcp => T::zero(),
            PenaltyKind::Scad => T::lit(2.0),
        };
        if !self.gamma.is_finite() || self.gamma <= min_gamma {
            return Err(Error::Config(format!(
                "{} requires gamma > {}, got {}",
                self.kind, min_gamma, self.gamma
            )));
        }
        Ok(())
    }

    /// Same penalty with a different `λ`.
    pub fn with_lambda(&self, lambda: T) -> Self {
        Self { lambda, ..*self }
    }

    /// Checks that the closed-form proximal map is valid for weight `theta`.
    ///
    /// MCP needs `γθ > 1` and SCAD needs `θ(γ − 1) > 1`; otherwise the
    /// rescaling denominators are nonpositive.
    pub fn check_theta(&self, theta: T) -> Result<()> {
        self.validate()?;
        if !theta.is_finite() || theta <= T::zero() {
            return Err(Error::Config(format!("theta must be > 0, got {theta}")));
        }
        match self.kind {
            PenaltyKind::Tlasso => Ok(()),
            PenaltyKind::Mcp if self.gamma * theta > T::one() => Ok(()),
            PenaltyKind::Mcp => Err(Error::Config(format!(
                "mcp requires gamma * theta > 1, got gamma = {}, theta = {}",
                self.gamma, theta
            ))),
            PenaltyKind::Scad if theta * (self.gamma - T::one()) > T::one() => Ok(()),
            PenaltyKind::Scad => Err(Error::Config(format!(
                "scad requires theta * (gamma - 1) > 1, got gamma = {}, theta = {}",
                self.gamma, theta
            ))),
        }
    }

    /// `J_λ(x)` for `x >= 0`.
    pub fn evaluate(&self, x: T) -> Result<T> {
        if !(x >= T::zero()) {
            return Err(Error::InvalidInput(format!("penalty argument must be >= 0, got {x}")));
        }
        let (lam, gam) = (self.lambda, self.gamma);
        let half = T::lit(0.5);
        Ok(match self.kind {
            PenaltyKind::Tlasso => (lam * x).min(gam * lam * lam),
            PenaltyKind::Mcp => {
                if x < gam * lam {
                    lam * x - x * x / (T::lit(2.0) * gam)
                } else {
                    half * gam * lam * lam
                }
            }
            PenaltyKind::Scad => {
                if x <= lam {
                    lam * x
                } else if x < gam * lam {
                    (T::lit(2.0) * gam * lam * x - x * x - lam * lam) / (T::lit(2.0) * (gam - T::one()))
                } else {
                    half * lam * lam * (gam + T::one())
                }
            }
        })
    }

    /// Nonnegative factor `s` with `prox(a) = s · a`, given `‖a‖`.
    ///
    /// At a branch boundary the later branch is taken; the branches agree in
    /// objective value there.
    pub fn prox_factor(&self, norm: T, theta: T) -> T {
        let (lam, gam) = (self.lambda, self.gamma);
        if !(norm > T::zero()) {
            return T::zero();
        }
        let soft = |thr: T| (T::one() - thr / norm).max(T::zero());
        match self.kind {
            PenaltyKind::Tlasso => {
                if norm < lam * (gam + T::one() / (T::lit(2.0) * theta)) {
                    soft(lam / theta)
                } else {
                    T::one()
                }
            }
            PenaltyKind::Mcp => {
                if norm < gam * lam {
                    soft(lam / theta) / (T::one() - T::one() / (gam * theta))
                } else {
                    T::one()
                }
            }
            PenaltyKind::Scad => {
                if norm < lam * (T::one() + T::one() / theta) {
                    soft(lam / theta)
                } else if norm < gam * lam {
                    let tg = theta * (gam - T::one());
                    soft(gam * lam / tg) / (T::one() - T::one() / tg)
                } else {
                    T::one()
                }
            }
        }
    }

    /// Writes `argmin_M (θ/2)‖M − a‖² + J_λ(‖M‖)` into `out`.
    pub fn prox_into(&self, a: &[T], theta: T, out: &mut [T]) {
        let norm = a.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
        let factor = self.prox_factor(norm, theta);
        if factor == T::one() {
            out.copy_from_slice(a);
        } else {
            for (o, v) in out.iter_mut().zip(a) {
                *o = *v * factor;
            }
        }
    }

    /// Checked proximal update.
    pub fn prox_update(&self, a: &[T], theta: T) -> Result<Vec<T>> {
        self.check_theta(theta)?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite proximal argument".into()));
        }
        let mut out = vec![T::zero(); a.len()];
        self.prox_into(a, theta, &mut out);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(kind: PenaltyKind, lambda: f64, gamma: f64) -> PenaltySpec<f64> {
        PenaltySpec::new(kind, lambda, gamma).unwrap()
    }

    /// Brute-force 1-D minimizer of `0.5 θ (m − a)² + J(|m|)` on a fine grid.
    fn grid_min(p: &PenaltySpec<f64>, a: f64, theta: f64, lo: f64, hi: f64, step: f64) -> f64 {
        let steps = ((hi - lo) / step).round() as usize;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=steps {
            let m = lo + k as f64 * step;
            let obj = 0.5 * theta * (m - a).powi(2) + p.evaluate(m.abs()).unwrap();
            if obj < best.0 {
                best = (obj, m);
            }
        }
        best.1
    }

    #[test]
    fn tlasso_plateau() {
        assert_eq!(spec(PenaltyKind::Tlasso, 1.0, 2.0).evaluate(3.0).unwrap(), 2.0);
    }

    #[test]
    fn zero_at_origin() {
        for kind in [PenaltyKind::Tlasso, PenaltyKind::Mcp, PenaltyKind::Scad] {
            assert_eq!(spec(kind, 1.3, 3.7).evaluate(0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn mcp_value_matches_integrated_derivative() {
        let p = spec(PenaltyKind::Mcp, 1.0, 3.0);
        let v = p.evaluate(1.0).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-15);
        // Midpoint rule on J'(t) = (λ − t/γ)_+ over [0, 1].
        let n = 100_000;
        let h = 1.0 / n as f64;
        let integral: f64 = (0..n).map(|k| (1.0 - (k as f64 + 0.5) * h / 3.0).max(0.0) * h).sum();
        assert!((v - integral).abs() < 1e-9);
    }

    #[test]
    fn scad_closed_form_matches_integral() {
        let p = spec(PenaltyKind::Scad, 0.7, 3.7);
        for &x in &[0.3, 0.7, 1.5, 2.59, 4.0] {
            let n = 200_000;
            let h = x / n as f64;
            let integral: f64 = (0..n)
                .map(|k| {
                    let t = (k as f64 + 0.5) * h;
                    let d = (3.7f64 * 0.7 - t).max(0.0) / (2.7 * 0.7);
                    0.7 * d.min(1.0) * h
                })
                .sum();
            assert!((p.evaluate(x).unwrap() - integral).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn negative_argument_rejected() {
        assert!(spec(PenaltyKind::Mcp, 1.0, 3.0).evaluate(-1.0).is_err());
    }

    #[test]
    fn prox_of_zero_is_zero() {
        for kind in [PenaltyKind::Tlasso, PenaltyKind::Mcp, PenaltyKind::Scad] {
            let out = spec(kind, 1.0, 3.7).prox_update(&[0.0, 0.0], 1.0).unwrap();
            assert_eq!(out, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn mcp_identity_branch() {
        let out = spec(PenaltyKind::Mcp, 1.0, 3.0).prox_update(&[5.0], 1.0).unwrap();
        assert_eq!(out, vec![5.0]);
    }

    #[test]
    fn mcp_rescaled_branch_matches_grid_search() {
        let p = spec(PenaltyKind::Mcp, 1.0, 3.0);
        let oracle = grid_min(&p, 2.0, 1.0, -6.0, 6.0, 1e-4);
        assert!((oracle - 1.5).abs() < 2e-4);
        let out = p.prox_update(&[2.0], 1.0).unwrap();
        assert!((out[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn scad_soft_threshold_branch_matches_grid_search() {
        let p = spec(PenaltyKind::Scad, 1.0, 3.7);
        let oracle = grid_min(&p, 1.5, 1.0, -6.0, 6.0, 1e-4);
        assert!((oracle - 0.5).abs() < 2e-4);
        let out = p.prox_update(&[1.5], 1.0).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_theta_combinations() {
        assert!(spec(PenaltyKind::Mcp, 1.0, 0.5).check_theta(1.0).is_err());
        assert!(spec(PenaltyKind::Mcp, 1.0, 0.5).check_theta(3.0).is_ok());
        assert!(spec(PenaltyKind::Scad, 1.0, 2.5).check_theta(0.5).is_err());
        assert!(spec(PenaltyKind::Scad, 1.0, 2.0 + 1e-9).check_theta(1.0).is_ok());
        assert!(PenaltySpec::new(PenaltyKind::Scad, 1.0, 2.0).is_err());
        assert!(PenaltySpec::new(PenaltyKind::Mcp, -1.0, 2.0).is_err());
        assert!(spec(PenaltyKind::Tlasso, 1.0, 0.1).check_theta(0.0).is_err());
    }

    #[test]
    fn boundary_takes_identity() {
        let p = spec(PenaltyKind::Mcp, 1.0, 3.0);
        assert_eq!(p.prox_factor(3.0, 1.0), 1.0);
        let t = spec(PenaltyKind::Tlasso, 1.0, 2.0);
        assert_eq!(t.prox_factor(2.5, 1.0), 1.0);
    }

    #[test]
    fn single_precision_prox() {
        let p = PenaltySpec::<f32>::new(PenaltyKind::Mcp, 1.0, 3.0).unwrap();
        let out = p.prox_update(&[2.0], 1.0).unwrap();
        assert!((out[0] - 1.5).abs() < 1e-6);
    }

    fn kind_strategy() -> impl Strategy<Value = PenaltyKind> {
        prop_oneof![Just(PenaltyKind::Tlasso), Just(PenaltyKind::Mcp), Just(PenaltyKind::Scad)]
    }

    proptest! {
        #[test]
        fn zero_lambda_is_identity(kind in kind_strategy(), a in prop::collection::vec(-10.0..10.0f64, 1..4)) {
            let p = PenaltySpec::new(kind, 0.0, 3.7).unwrap();
            prop_assert_eq!(p.prox_update(&a, 1.0).unwrap(), a);
        }

        #[test]
        fn prox_is_parallel_with_nonnegative_ratio(
            kind in kind_strategy(),
            lambda in 0.1..5.0f64,
            a in prop::collection::vec(-10.0..10.0f64, 1..4),
        ) {
            let p = PenaltySpec::new(kind, lambda, 3.7).unwrap();
            let m = p.prox_update(&a, 2.0).unwrap();
            let norm_a: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let norm_m: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(norm_a > 0.0);
            let ratio = norm_m / norm_a;
            prop_assert!(ratio >= 0.0);
            for (mi, ai) in m.iter().zip(&a) {
                prop_assert!((mi - ratio * ai).abs() < 1e-9 * (1.0 + ai.abs()));
            }
        }

        #[test]
        fn penalty_is_monotone_concave_and_flat(
            kind in kind_strategy(),
            lambda in 0.1..5.0f64,
            gamma in 2.1..8.0f64,
            x in 0.0..50.0f64,
            h in 1e-3..1.0f64,
        ) {
            let p = PenaltySpec::new(kind, lambda, gamma).unwrap();
            let (a, b, c) = (p.evaluate(x).unwrap(), p.evaluate(x + h).unwrap(), p.evaluate(x + 2.0 * h).unwrap());
            prop_assert!(b >= a - 1e-12);
            prop_assert!(2.0 * b >= a + c - 1e-9);
            let flat = gamma * lambda;
            prop_assert!((p.evaluate(flat + x).unwrap() - p.evaluate(flat).unwrap()).abs() < 1e-9);
        }
    }
}
