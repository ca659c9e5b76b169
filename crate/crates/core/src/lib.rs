//! Shape-based grouping of functional covariates and grouped multiple
//! functional linear regression.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the common `f64` instantiations.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod error;
pub mod fit;
pub mod funcdata;
mod linalg;
pub mod penalty;
pub mod scalar;
pub mod select;
pub mod simgen;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CurveSet64 = funcdata::CurveSet<f64>;
pub type BasisSystem64 = funcdata::BasisSystem<f64>;
pub type ScoreMatrix64 = funcdata::ScoreMatrix<f64>;
pub type PenaltySpec64 = penalty::PenaltySpec<f64>;
pub type CoefficientScores64 = detect::CoefficientScores<f64>;
pub type DetectConfig64 = detect::DetectConfig<f64>;
pub type GroupedModel64 = fit::GroupedModel<f64>;
pub type CvConfig64 = select::CvConfig<f64>;
pub type CvReport64 = select::CvReport<f64>;

pub type CurveSet32 = funcdata::CurveSet<f32>;
pub type ScoreMatrix32 = funcdata::ScoreMatrix<f32>;
pub type PenaltySpec32 = penalty::PenaltySpec<f32>;
pub type DetectConfig32 = detect::DetectConfig<f32>;
pub type GroupedModel32 = fit::GroupedModel<f32>;
