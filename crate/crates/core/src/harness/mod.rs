//! Ensembles and statistical validation reports.
//!
//! Every report is a list of [`ReportRecord`]s; records carrying
//! `passed = Some(_)` are threshold checks, the rest are diagnostics.
//! Replica `r` of an ensemble with master seed `s` is always simulated
//! from `derive_seed(s, Replica, r)`, and ladder rung `N` uses master seed
//! `derive_seed(s, Ladder, N)`, so a report is a pure function of the
//! model, the settings and `s`.

mod ensemble;
mod reports;
mod settings;
pub mod stats;

pub use ensemble::{
    ladder_seed, replica_seed, run_ensemble, with_threads, Centering, EnsembleSpec, EnsembleStore, FieldSamples,
    EXACT_CENTERING_MAX_URNS,
};
pub use reports::{
    clt_report, construction_report, covariance_anchor_report, covariance_decay_report, dynkin_report,
    dynkin_residuals, graphical_marginals, lln_report, oracle_report, write_records_csv, DynkinSample, Report,
    ReportKind, ReportRecord,
};
pub use settings::{Settings, Thresholds};
