//! `[ensemble]`, `[grid]`, `[fluct]` and `[validate]` configuration sections.
//!
//! ```text
//! [ensemble]
//! replicas = 500          ; R
//! seed = 1                ; master seed
//! times = 0, 1            ; snapshot / report times
//! ladder = 100, 400, 1600 ; N values for ladder reports
//! threads = 0             ; 0 = rayon default
//! f.form = constant       ; test function f (default 1)
//! f.values = 1
//! g.form = constant       ; test function g (default 1)
//! g.values = 1
//!
//! [grid]
//! M = 64
//! dt = 0.001
//!
//! [fluct]
//! M = 32
//! dt = 0.001
//!
//! [validate]
//! band_sigma = 3
//! oracle_fraction = 0.99
//! lln_slope = -0.5
//! lln_slope_tolerance = 0.2
//! clt_relative_tolerance = 0.1
//! ks_min_p = 0.01
//! degenerate_variance = 1e-10
//! qv_ratio_low = 0.85
//! qv_ratio_high = 1.15
//! dynkin_dt = 0.01
//! cov_batches = 20
//! cov_pairs = 200
//! anchor_n = 4
//! ```

use crate::error::{Error, Result};
use crate::model::{ConfigFile, TestFunction};

/// Validation thresholds. Every field is overridable from `[validate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    /// Width of Monte Carlo bands in standard errors.
    pub band_sigma: f64,
    /// Minimum fraction of oracle states inside their bands.
    pub oracle_fraction: f64,
    pub lln_slope: f64,
    pub lln_slope_tolerance: f64,
    /// Maximum `|empirical / theoretical − 1|` for CLT variances.
    pub clt_relative_tolerance: f64,
    pub ks_min_p: f64,
    /// Theoretical variances below this are not standardized.
    pub degenerate_variance: f64,
    pub qv_ratio_low: f64,
    pub qv_ratio_high: f64,
    /// Time grid for the ensemble-mean drift term of the Dynkin check.
    pub dynkin_dt: f64,
    /// Batches for the standard error of the all-pairs covariance.
    pub cov_batches: usize,
    /// Sampled index pairs per `N` in the covariance-decay report.
    pub cov_pairs: usize,
    /// Urn count of the exact covariance anchor.
    pub anchor_n: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            band_sigma: 3.0,
            oracle_fraction: 0.99,
            lln_slope: -0.5,
            lln_slope_tolerance: 0.2,
            clt_relative_tolerance: 0.1,
            ks_min_p: 0.01,
            degenerate_variance: 1e-10,
            qv_ratio_low: 0.85,
            qv_ratio_high: 1.15,
            dynkin_dt: 0.01,
            cov_batches: 20,
            cov_pairs: 200,
            anchor_n: 4,
        }
    }
}

impl Thresholds {
    pub fn from_config(cfg: &ConfigFile) -> Result<Self> {
        let d = Self::default();
        let t = Self {
            band_sigma: cfg.value_or("validate", "band_sigma", d.band_sigma)?,
            oracle_fraction: cfg.value_or("validate", "oracle_fraction", d.oracle_fraction)?,
            lln_slope: cfg.value_or("validate", "lln_slope", d.lln_slope)?,
            lln_slope_tolerance: cfg.value_or("validate", "lln_slope_tolerance", d.lln_slope_tolerance)?,
            clt_relative_tolerance: cfg.value_or("validate", "clt_relative_tolerance", d.clt_relative_tolerance)?,
            ks_min_p: cfg.value_or("validate", "ks_min_p", d.ks_min_p)?,
            degenerate_variance: cfg.value_or("validate", "degenerate_variance", d.degenerate_variance)?,
            qv_ratio_low: cfg.value_or("validate", "qv_ratio_low", d.qv_ratio_low)?,
            qv_ratio_high: cfg.value_or("validate", "qv_ratio_high", d.qv_ratio_high)?,
            dynkin_dt: cfg.value_or("validate", "dynkin_dt", d.dynkin_dt)?,
            cov_batches: cfg.value_or("validate", "cov_batches", d.cov_batches)?,
            cov_pairs: cfg.value_or("validate", "cov_pairs", d.cov_pairs)?,
            anchor_n: cfg.value_or("validate", "anchor_n", d.anchor_n)?,
        };
        if !(t.band_sigma > 0.0) || !(0.0..=1.0).contains(&t.oracle_fraction) || !(t.dynkin_dt > 0.0) {
            return Err(Error::Config(
                "validate: band_sigma and dynkin_dt must be positive, oracle_fraction in [0, 1]".into(),
            ));
        }
        if t.cov_batches < 2 || t.qv_ratio_low > t.qv_ratio_high {
            return Err(Error::Config("validate: cov_batches ≥ 2 and qv_ratio_low ≤ qv_ratio_high required".into()));
        }
        Ok(t)
    }
}

/// Ensemble and discretization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub replicas: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub ladder: Vec<usize>,
    pub threads: usize,
    pub f: TestFunction<f64>,
    pub g: TestFunction<f64>,
    pub grid_m: usize,
    pub grid_dt: f64,
    pub fluct_m: usize,
    pub fluct_dt: f64,
}

impl Settings {
    /// Reads the sections, defaulting `times` to `[T]`.
    pub fn from_config(cfg: &ConfigFile, horizon: f64) -> Result<Self> {
        let s = Self {
            replicas: cfg.value_or("ensemble", "replicas", 200)?,
            seed: cfg.value_or("ensemble", "seed", 1)?,
            times: cfg.list_f64("ensemble", "times")?.unwrap_or_else(|| vec![horizon]),
            ladder: cfg.list_usize("ensemble", "ladder")?.unwrap_or_else(|| vec![100, 400, 1600]),
            threads: cfg.value_or("ensemble", "threads", 0)?,
            f: cfg.test_function("ensemble", "f.")?.unwrap_or_else(TestFunction::one),
            g: cfg.test_function("ensemble", "g.")?.unwrap_or_else(TestFunction::one),
            grid_m: cfg.value_or("grid", "M", 64)?,
            grid_dt: cfg.value_or("grid", "dt", 1e-3)?,
            fluct_m: cfg.value_or("fluct", "M", 32)?,
            fluct_dt: cfg.value_or("fluct", "dt", 1e-3)?,
        };
        if s.replicas == 0 {
            return Err(Error::Config("ensemble.replicas must be at least 1".into()));
        }
        if s.times.iter().any(|t| !(*t >= 0.0 && *t <= horizon)) {
            return Err(Error::Config(format!("ensemble.times must lie in [0, {horizon}]")));
        }
        if s.times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("ensemble.times must be sorted".into()));
        }
        if s.ladder.is_empty() || s.ladder.contains(&0) {
            return Err(Error::Config("ensemble.ladder must list positive urn counts".into()));
        }
        if s.grid_m == 0 || s.fluct_m == 0 || !(s.grid_dt > 0.0) || !(s.fluct_dt > 0.0) {
            return Err(Error::Config("grid and fluct sections need M ≥ 1 and dt > 0".into()));
        }
        Ok(s)
    }
}
