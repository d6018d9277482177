//! Monte-Carlo and exact-enumeration tools for perturbed Gibbs measures on the
//! unit sphere: discrete measures, Gaussian disorder fields, overlap-positivity
//! estimators and deterministic inequality checks.
//!
//! Everything is generic over the scalar type ([`Real`], implemented for `f32`
//! and `f64`); the `*64` / `*32` aliases below fix the precision.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod field;
pub mod generators;
pub mod linalg;
pub mod real;
pub mod report;
pub mod sphere;
pub mod suite;
pub mod sweep;
pub mod verification;

#[cfg(test)]
mod properties;

pub use error::{Error, Result};
pub use estimators::{
    estimate_concentration, estimate_fn, estimate_gg_residual, estimate_lemma1, estimate_positivity,
    estimate_sup_scaling, find_good_perturbation, PerturbationSearch, Replication, TestFunction,
};
pub use field::{sample_disorder, Backend, DisorderRealization, FieldSpec};
pub use real::Real;
pub use report::{EstimateReport, InnerMode};
pub use sphere::{overlap, DiscreteMeasure, ReplicaPredicate, UnitVector};
pub use suite::{SuiteSummary, VerificationSuite};
pub use sweep::{run_sweep, SweepConfig};
pub use verification::CheckReport;

pub type UnitVector64 = UnitVector<f64>;
pub type Measure64 = DiscreteMeasure<f64>;
pub type FieldSpec64 = FieldSpec<f64>;
pub type Disorder64 = DisorderRealization<f64>;

pub type UnitVector32 = UnitVector<f32>;
pub type Measure32 = DiscreteMeasure<f32>;
pub type FieldSpec32 = FieldSpec<f32>;
pub type Disorder32 = DisorderRealization<f32>;
