//! Exact transient laws of the urn chain for small `N`.

mod generator;
mod transient;

pub use generator::{
    build_generator, initial_distribution, point_mass, state_count, GeneratorMatrix, StateIndex, MAX_ORACLE_URNS,
};
pub use transient::{
    kc_residuals, marginals, moment_report, read_fixtures, transient_distribution, write_fixtures, FixtureRow,
    Indicator, Moment, MomentQuery, TRUNCATION_TOLERANCE,
};
