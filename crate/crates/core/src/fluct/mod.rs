//! Covariance of the limiting Gaussian fluctuation field.
//!
//! Fluctuation fields are represented by weight vectors on the node grid,
//! `η(f) = (1/M) Σ_m w_η[m] f(u_m)`, so function-space operators act on
//! weights through their transposes and the covariance obeys a differential
//! Lyapunov equation `dC/dt = D C + C Dᵀ + Q`.

mod covariance;
mod homogeneous;
mod panel;

pub use covariance::{
    evolve_covariance, initial_covariance, pair_covariance, propagate, write_covariance_csv, write_pair_report, Block,
    CovarianceState, FluctuationProblem, PSD_TOLERANCE,
};
pub use homogeneous::{classic_clt_covariance, classic_sir_solve, HomogeneousCovariance, HomogeneousTrajectory};
pub use panel::{apply_drift, build_operator_panel, drift_matrix, noise_matrix, OperatorPanel};
