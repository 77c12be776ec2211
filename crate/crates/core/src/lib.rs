//! Solver library for a two-type SIR social-distancing game.
//!
//! A continuum of agents, split into a non-vulnerable type (index 0) and a
//! vulnerable type (index 1), choose how much time to spend in public places.
//! An SIR-style compartmental system couples the choices through the density
//! of infected agents in public, and each agent's cost trades the expected
//! harm of an infection against the utility of social contact.
//!
//! The crate is organized around the pipeline used by the command line tool:
//!
//! * [`params`] and [`profile`] hold the model constants and finite-support
//!   action distributions.
//! * [`dynamics`] integrates the compartmental system and exposes the
//!   cumulative-exposure functional `F`.
//! * [`costs`] evaluates individual costs, means, the population variance of
//!   costs, and epidemic prevalence.
//! * [`nash`] enumerates pure, boundary-mixed, and internal-mixed equilibria
//!   of the two-point game.
//! * [`sensitivity`] integrates the linearized system to obtain directional
//!   derivatives of exposure, costs, and variance under small group
//!   deviations.
//! * [`gne`] scans Dirac action pairs for generalized Nash equilibria under a
//!   shared variance bound.
//! * [`config`] parses the declarative run-configuration format.
//!
//! All numeric code is generic over the [`Scalar`] trait (any IEEE float);
//! `*F64` aliases at the crate root cover the common double-precision case.

pub mod config;
pub mod costs;
pub mod dynamics;
pub mod float;
pub mod gne;
pub mod nash;
pub mod ode;
pub mod params;
pub mod profile;
pub mod sensitivity;

#[cfg(test)]
pub(crate) mod testkit;

pub use float::Scalar;
pub use params::{InvalidParams, ModelParams, ValidatedParams, Violation};
pub use profile::{DiracPair, DiscreteProfile, ProfileError, TwoPointProfile};

/// Double-precision aliases for the main domain types.
pub type ModelParamsF64 = params::ModelParams<f64>;
pub type ValidatedParamsF64 = params::ValidatedParams<f64>;
pub type DiscreteProfileF64 = profile::DiscreteProfile<f64>;
pub type TwoPointProfileF64 = profile::TwoPointProfile<f64>;
pub type DiracPairF64 = profile::DiracPair<f64>;
pub type TrajectoryF64 = dynamics::Trajectory<f64>;
pub type CostReportF64 = costs::CostReport<f64>;
pub type EquilibriumRecordF64 = nash::EquilibriumRecord<f64>;
pub type SensitivityReportF64 = sensitivity::SensitivityReport<f64>;
pub type GneRecordF64 = gne::GneRecord<f64>;
pub type RunConfigF64 = config::RunConfig<f64>;
