//! Model parameters, urn configurations and empirical field evaluation.

pub mod config;
mod field;
mod kernel;
mod spec;
mod state;

pub use config::{render_model_spec, spec_hash, ConfigFile};
pub use field::{Profile, ScalarField, TestFunction};
pub use kernel::{Kernel, NodeKernel};
pub use spec::ModelSpec;
pub use state::{empirical_fields, fluctuation_fields, sample_initial, Census, Configuration, UrnState};
