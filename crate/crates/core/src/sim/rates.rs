use crate::error::{Error, Result};
use crate::model::{Configuration, ModelSpec, NodeKernel, UrnState};

/// Per-urn recovery rates `ψ(i/N)`, initial probabilities `φ(i/N)` and the
/// kernel on the urn sites. Pair infection rates are `λ(i/N, j/N) / N`.
#[derive(Debug, Clone)]
pub struct UrnRates {
    n: usize,
    recovery: Vec<f64>,
    initial: Vec<f64>,
    kernel: NodeKernel<f64>,
}

impl UrnRates {
    pub fn new(spec: &ModelSpec<f64>) -> Self {
        let n = spec.n();
        Self {
            n,
            recovery: (0..n).map(|k| spec.psi().value(spec.site(k))).collect(),
            initial: (0..n).map(|k| spec.phi().value(spec.site(k))).collect(),
            kernel: spec.lambda().on_nodes(n),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn recovery(&self, k: usize) -> f64 {
        self.recovery[k]
    }

    #[inline]
    pub fn initial_probability(&self, k: usize) -> f64 {
        self.initial[k]
    }

    /// Rate at which an infected `source` infects a susceptible `target`.
    #[inline]
    pub fn infection(&self, target: usize, source: usize) -> f64 {
        self.kernel.entry(target, source) / self.n as f64
    }

    #[inline]
    pub fn kernel(&self) -> &NodeKernel<f64> {
        &self.kernel
    }
}

/// Infection pressure `p[i] = (1/N) Σ_j λ(i/N, j/N) 1{ξ(j) = 1}`, maintained
/// incrementally as urns become infected or removed.
#[derive(Debug, Clone, PartialEq)]
pub struct InfectionPressure {
    values: Vec<f64>,
}

impl InfectionPressure {
    /// Full recomputation from a configuration.
    pub fn compute(config: &Configuration, rates: &UrnRates) -> Self {
        let indicator: Vec<f64> = config.states().iter().map(|s| s.is_infected() as u8 as f64).collect();
        let mut values = vec![0.0; config.n()];
        rates.kernel().apply(&indicator, &mut values);
        Self { values }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.values[k].max(0.0)
    }

    #[inline]
    pub(crate) fn on_infection(&mut self, source: usize, rates: &UrnRates) {
        rates.kernel().add_column(source, 1.0 / rates.n() as f64, &mut self.values);
    }

    #[inline]
    pub(crate) fn on_recovery(&mut self, source: usize, rates: &UrnRates) {
        rates.kernel().add_column(source, -1.0 / rates.n() as f64, &mut self.values);
    }

    pub(crate) fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `max_k |p_k − q_k| / max_k |q_k|` (absolute when `q ≡ 0`).
    pub fn relative_deviation(&self, reference: &InfectionPressure) -> f64 {
        let scale = reference.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = self.values.iter().zip(&reference.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if scale > 0.0 {
            diff / scale
        } else {
            diff
        }
    }
}

/// Relative tolerance between cached and recomputed pressure.
pub const PRESSURE_TOLERANCE: f64 = 1e-10;

/// Per-urn transition rates of a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRates {
    recovery: Vec<f64>,
    infection: Vec<f64>,
    total: f64,
}

impl EventRates {
    /// `ψ(i/N)` if urn `k` is infected, else 0.
    pub fn recovery(&self, k: usize) -> f64 {
        self.recovery[k]
    }

    /// `p[k]` if urn `k` is susceptible, else 0.
    pub fn infection(&self, k: usize) -> f64 {
        self.infection[k]
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Rates of every possible transition out of `config`.
///
/// The supplied pressure is checked against a full recomputation.
pub fn event_rates(config: &Configuration, rates: &UrnRates, pressure: &InfectionPressure) -> Result<EventRates> {
    let n = config.n();
    if rates.n() != n {
        return Err(Error::Dimension { expected: rates.n(), actual: n });
    }
    if pressure.values.len() != n {
        return Err(Error::Dimension { expected: n, actual: pressure.values.len() });
    }
    let fresh = InfectionPressure::compute(config, rates);
    let dev = pressure.relative_deviation(&fresh);
    if !(dev <= PRESSURE_TOLERANCE) {
        return Err(Error::Consistency(format!("infection pressure deviates from recomputation by {dev:e}")));
    }
    let mut recovery = vec![0.0; n];
    let mut infection = vec![0.0; n];
    for (k, s) in config.states().iter().enumerate() {
        match s {
            UrnState::Infected => recovery[k] = rates.recovery(k),
            UrnState::Susceptible => infection[k] = pressure.get(k),
            UrnState::Removed => {}
        }
    }
    let total = recovery.iter().sum::<f64>() + infection.iter().sum::<f64>();
    Ok(EventRates { recovery, infection, total })
}
