//! Simulation and limit-theory toolkit for the N-urn susceptible-infected-removed
//! process with site-dependent infection kernel `λ(u, v)` and recovery field `ψ(u)`.
//!
//! - [`model`]: parameters, configurations, empirical and fluctuation fields.
//! - [`sim`]: exact event-driven simulation and the clock-based graphical construction.
//! - [`oracle`]: exact transient laws for small `N` by uniformization.
//! - [`hydro`]: the deterministic density limit.
//! - [`fluct`]: covariance of the limiting Gaussian fluctuation field.
//! - [`harness`]: ensembles and statistical reports.

pub mod error;
pub mod fluct;
pub mod harness;
pub mod hydro;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Spec = model::ModelSpec<f64>;
pub type Field = model::ScalarField<f64>;
pub type TestFn = model::TestFunction<f64>;
pub type Lambda = model::Kernel<f64>;
pub type Density = hydro::DensityField<f64>;
pub type Grid = hydro::GridSpec<f64>;
pub type Covariance = fluct::CovarianceState<f64>;
pub type Generator = oracle::GeneratorMatrix<f64>;
