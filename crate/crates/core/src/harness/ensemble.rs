use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{empirical_fields, fluctuation_fields, spec_hash, ModelSpec, TestFunction, UrnState};
use crate::oracle::{build_generator, initial_distribution, marginals, transient_distribution};
use crate::rng::{derive_seed, Domain};
use crate::sim::{simulate_with, Trajectory, UrnRates};

/// Largest `N` centered at exact oracle means instead of ensemble means.
pub const EXACT_CENTERING_MAX_URNS: usize = 6;

/// One ensemble: `R` replicas of one model.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub model: ModelSpec<f64>,
    pub replicas: usize,
    pub master_seed: u64,
    pub snapshot_times: Vec<f64>,
    pub test_functions: Vec<TestFunction<f64>>,
    /// Keep full event logs (needed by the Dynkin report).
    pub record_events: bool,
}

impl EnsembleSpec {
    pub fn new(model: ModelSpec<f64>, replicas: usize, master_seed: u64, snapshot_times: Vec<f64>) -> Self {
        Self {
            model,
            replicas,
            master_seed,
            snapshot_times,
            test_functions: vec![TestFunction::one()],
            record_events: false,
        }
    }

    pub fn with_test_functions(mut self, fs: Vec<TestFunction<f64>>) -> Self {
        self.test_functions = fs;
        self
    }

    pub fn with_events(mut self) -> Self {
        self.record_events = true;
        self
    }
}

/// Seed of replica `r`.
pub fn replica_seed(master_seed: u64, r: usize) -> u64 {
    derive_seed(master_seed, Domain::Replica, r as u64)
}

/// Master seed of ladder rung `n`.
pub fn ladder_seed(master_seed: u64, n: usize) -> u64 {
    derive_seed(master_seed, Domain::Ladder, n as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    Ensemble,
    Exact,
}

/// Per-field samples `[time][test function][replica]`.
pub type FieldSamples = Vec<Vec<Vec<f64>>>;

/// Raw statistics of an ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleStore {
    pub n: usize,
    pub replicas: usize,
    pub master_seed: u64,
    pub spec_hash: String,
    pub times: Vec<f64>,
    pub centering: Centering,
    codes: Vec<Vec<i8>>,
    mean_infected: Vec<Vec<f64>>,
    mean_susceptible: Vec<Vec<f64>>,
    pub mu: FieldSamples,
    pub theta: FieldSamples,
    pub eta: FieldSamples,
    pub beta: FieldSamples,
    trajectories: Option<Vec<Trajectory>>,
}

impl EnsembleStore {
    /// States of replica `r` at snapshot `ti`, as codes.
    pub fn codes(&self, ti: usize, r: usize) -> &[i8] {
        &self.codes[ti][r * self.n..(r + 1) * self.n]
    }

    pub fn state(&self, ti: usize, r: usize, urn: usize) -> UrnState {
        UrnState::from_code(self.codes(ti, r)[urn]).expect("stored codes are valid")
    }

    pub fn infected(&self, ti: usize, r: usize, urn: usize) -> bool {
        self.codes(ti, r)[urn] == 1
    }

    /// Centering means `E I_t(i)` used for `η`.
    pub fn mean_infected(&self, ti: usize) -> &[f64] {
        &self.mean_infected[ti]
    }

    pub fn mean_susceptible(&self, ti: usize) -> &[f64] {
        &self.mean_susceptible[ti]
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| *s == t)
    }

    pub fn trajectories(&self) -> Option<&[Trajectory]> {
        self.trajectories.as_deref()
    }
}

/// Runs the replicas on the current rayon pool. Results do not depend on
/// the pool size: replica `r` always uses [`replica_seed`]`(master, r)`
/// and reductions run in replica order after collection.
pub fn run_ensemble(ens: &EnsembleSpec) -> Result<EnsembleStore> {
    if ens.replicas == 0 {
        return Err(Error::Precondition("an ensemble needs at least one replica".into()));
    }
    let spec = &ens.model;
    let n = spec.n();
    let rates = UrnRates::new(spec);
    let times = &ens.snapshot_times;
    let runs: Vec<Trajectory> = (0..ens.replicas)
        .into_par_iter()
        .map(|r| simulate_with(&rates, spec, replica_seed(ens.master_seed, r), times, ens.record_events))
        .collect::<Result<_>>()?;

    let codes: Vec<Vec<i8>> = (0..times.len())
        .map(|ti| runs.iter().flat_map(|tr| tr.snapshots[ti].states().iter().map(|s| s.code())).collect())
        .collect();

    let (centering, mean_infected, mean_susceptible) = if n <= EXACT_CENTERING_MAX_URNS {
        let (mi, ms) = exact_means(spec, times)?;
        (Centering::Exact, mi, ms)
    } else {
        let r = ens.replicas as f64;
        let mut mi = vec![vec![0.0; n]; times.len()];
        let mut ms = vec![vec![0.0; n]; times.len()];
        for ti in 0..times.len() {
            for row in codes[ti].chunks(n) {
                for (k, c) in row.iter().enumerate() {
                    mi[ti][k] += (*c == 1) as u8 as f64;
                    ms[ti][k] += (*c == 0) as u8 as f64;
                }
            }
            mi[ti].iter_mut().chain(ms[ti].iter_mut()).for_each(|v| *v /= r);
        }
        (Centering::Ensemble, mi, ms)
    };

    let fields: Vec<Vec<[f64; 4]>> = runs
        .par_iter()
        .map(|tr| {
            let mut out = Vec::with_capacity(times.len() * ens.test_functions.len());
            for (ti, snap) in tr.snapshots.iter().enumerate() {
                for f in &ens.test_functions {
                    let (mu, theta) = empirical_fields(snap, f);
                    let (eta, beta) = fluctuation_fields(snap, &mean_infected[ti], &mean_susceptible[ti], f)?;
                    out.push([mu, theta, eta, beta]);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let nf = ens.test_functions.len();
    let gather = |slot: usize| -> FieldSamples {
        (0..times.len())
            .map(|ti| (0..nf).map(|fi| fields.iter().map(|row| row[ti * nf + fi][slot]).collect()).collect())
            .collect()
    };
    Ok(EnsembleStore {
        n,
        replicas: ens.replicas,
        master_seed: ens.master_seed,
        spec_hash: spec_hash(spec),
        times: times.clone(),
        centering,
        mu: gather(0),
        theta: gather(1),
        eta: gather(2),
        beta: gather(3),
        codes,
        mean_infected,
        mean_susceptible,
        trajectories: ens.record_events.then_some(runs),
    })
}

fn exact_means(spec: &ModelSpec<f64>, times: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let q = build_generator(spec)?;
    let p0 = initial_distribution(spec)?;
    let mut mi = Vec::with_capacity(times.len());
    let mut ms = Vec::with_capacity(times.len());
    for &t in times {
        let dist = transient_distribution(&q, &p0, t)?;
        let m = marginals(&dist, spec.n());
        mi.push(m.iter().map(|p| p[2]).collect());
        ms.push(m.iter().map(|p| p[1]).collect());
    }
    Ok((mi, ms))
}

/// Runs `job` on a dedicated pool of `threads` workers (`0` = rayon default).
pub fn with_threads<R: Send>(threads: usize, job: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(job))
}
