use rand::Rng;

use crate::error::{Error, Result};
use crate::model::field::TestFunction;
use crate::model::spec::ModelSpec;
use crate::rng::{stream, Domain};
use crate::scalar::Real;

/// State of a single urn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(i8)]
pub enum UrnState {
    Removed = -1,
    Susceptible = 0,
    Infected = 1,
}

impl UrnState {
    #[inline]
    pub fn code(self) -> i8 {
        self as i8
    }

    pub fn from_code(code: i8) -> Result<Self> {
        match code {
            -1 => Ok(UrnState::Removed),
            0 => Ok(UrnState::Susceptible),
            1 => Ok(UrnState::Infected),
            other => Err(Error::Domain(format!("urn state {other} not in {{-1, 0, 1}}"))),
        }
    }

    #[inline]
    pub fn is_infected(self) -> bool {
        self == UrnState::Infected
    }

    #[inline]
    pub fn is_susceptible(self) -> bool {
        self == UrnState::Susceptible
    }
}

/// Counts of susceptible, infected and removed urns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Census {
    pub susceptible: usize,
    pub infected: usize,
    pub removed: usize,
}

impl Census {
    pub fn total(&self) -> usize {
        self.susceptible + self.infected + self.removed
    }
}

/// The state vector `ξ ∈ {-1, 0, 1}^N` at a time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    states: Vec<UrnState>,
    time: f64,
}

impl Configuration {
    pub fn new(states: Vec<UrnState>, time: f64) -> Result<Self> {
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::Domain(format!("configuration time {time} must be finite and nonnegative")));
        }
        Ok(Self { states, time })
    }

    pub fn from_codes(codes: &[i8], time: f64) -> Result<Self> {
        let states = codes.iter().map(|c| UrnState::from_code(*c)).collect::<Result<_>>()?;
        Self::new(states, time)
    }

    pub fn uniform(n: usize, state: UrnState) -> Self {
        Self { states: vec![state; n], time: 0.0 }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn states(&self) -> &[UrnState] {
        &self.states
    }

    #[inline]
    pub fn get(&self, k: usize) -> UrnState {
        self.states[k]
    }

    #[inline]
    pub(crate) fn set(&mut self, k: usize, s: UrnState) {
        self.states[k] = s;
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    #[inline]
    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn census(&self) -> Census {
        let mut c = Census::default();
        for s in &self.states {
            match s {
                UrnState::Susceptible => c.susceptible += 1,
                UrnState::Infected => c.infected += 1,
                UrnState::Removed => c.removed += 1,
            }
        }
        c
    }

    pub fn codes(&self) -> Vec<i8> {
        self.states.iter().map(|s| s.code()).collect()
    }
}

/// Draws `ξ_0` with independent entries, `P(ξ_0(i) = 1) = φ(i/N)`, else 0.
pub fn sample_initial(spec: &ModelSpec<f64>, seed: u64) -> Configuration {
    let mut rng = stream(seed, Domain::Initial);
    let states = (0..spec.n())
        .map(|k| {
            let p = spec.phi().value(spec.site(k));
            // always draw so the stream position does not depend on φ
            let u: f64 = rng.random();
            if u < p {
                UrnState::Infected
            } else {
                UrnState::Susceptible
            }
        })
        .collect();
    Configuration { states, time: 0.0 }
}

/// `(μ(f), θ(f)) = ((1/N) Σ I(i) f(i/N), (1/N) Σ S(i) f(i/N))`.
pub fn empirical_fields<T: Real>(config: &Configuration, f: &TestFunction<T>) -> (T, T) {
    let n = config.n();
    let nt = T::from_count(n);
    let mut mu = T::zero();
    let mut theta = T::zero();
    for (k, s) in config.states().iter().enumerate() {
        match s {
            UrnState::Infected => mu += f.value(T::from_count(k + 1) / nt),
            UrnState::Susceptible => theta += f.value(T::from_count(k + 1) / nt),
            UrnState::Removed => {}
        }
    }
    (mu / nt, theta / nt)
}

/// Centered, `√N`-scaled fields
/// `η(f) = N^{-1/2} Σ (I(i) − mean_I[i]) f(i/N)` and the analogous `β(f)`.
pub fn fluctuation_fields<T: Real>(
    config: &Configuration,
    mean_infected: &[T],
    mean_susceptible: &[T],
    f: &TestFunction<T>,
) -> Result<(T, T)> {
    let n = config.n();
    for v in [mean_infected, mean_susceptible] {
        if v.len() != n {
            return Err(Error::Dimension { expected: n, actual: v.len() });
        }
    }
    let nt = T::from_count(n);
    let mut eta = T::zero();
    let mut beta = T::zero();
    for (k, s) in config.states().iter().enumerate() {
        let fv = f.value(T::from_count(k + 1) / nt);
        let i = if s.is_infected() { T::one() } else { T::zero() };
        let z = if s.is_susceptible() { T::one() } else { T::zero() };
        eta += (i - mean_infected[k]) * fv;
        beta += (z - mean_susceptible[k]) * fv;
    }
    let scale = nt.sqrt();
    Ok((eta / scale, beta / scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Kernel, ScalarField};
    use proptest::prelude::*;

    fn spec_with_phi(phi: ScalarField<f64>, n: usize) -> ModelSpec<f64> {
        ModelSpec::new(Kernel::Constant(1.0), ScalarField::constant(1.0).unwrap(), phi, n, 1.0).unwrap()
    }

    #[test]
    fn degenerate_profiles() {
        let all = sample_initial(&spec_with_phi(ScalarField::constant(1.0).unwrap(), 5), 3);
        assert_eq!(all.codes(), vec![1; 5]);
        let none = sample_initial(&spec_with_phi(ScalarField::constant(0.0).unwrap(), 5), 3);
        assert_eq!(none.codes(), vec![0; 5]);
        assert_eq!(none.time(), 0.0);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let spec = spec_with_phi(ScalarField::affine(0.0, 1.0).unwrap(), 64);
        assert_eq!(sample_initial(&spec, 11), sample_initial(&spec, 11));
        assert_ne!(sample_initial(&spec, 11), sample_initial(&spec, 12));
    }

    #[test]
    fn linear_profile_fraction_in_binomial_band() {
        // 99.9% two-sided normal band for a sum of independent Bernoulli(i/N)
        let n = 10_000;
        let spec = spec_with_phi(ScalarField::affine(0.0, 1.0).unwrap(), n);
        let mean: f64 = (1..=n).map(|i| i as f64 / n as f64).sum::<f64>() / n as f64;
        let var: f64 = (1..=n)
            .map(|i| {
                let p = i as f64 / n as f64;
                p * (1.0 - p)
            })
            .sum::<f64>()
            / (n * n) as f64;
        assert!((mean - 0.50005).abs() < 1e-12);
        let c = sample_initial(&spec, 2024).census();
        assert_eq!(c.removed, 0);
        let frac = c.infected as f64 / n as f64;
        assert!((frac - mean).abs() <= 3.2905 * var.sqrt(), "fraction {frac}");
    }

    #[test]
    fn per_urn_frequencies_in_binomial_band() {
        let n = 8;
        let spec = spec_with_phi(ScalarField::affine(0.05, 0.9).unwrap(), n);
        let reps = 10_000u64;
        let mut hits = vec![0u32; n];
        for seed in 0..reps {
            for (k, s) in sample_initial(&spec, seed).states().iter().enumerate() {
                hits[k] += s.is_infected() as u32;
            }
        }
        for (k, h) in hits.iter().enumerate() {
            let p = spec.phi().value(spec.site(k));
            let band = 3.2905 * (p * (1.0 - p) / reps as f64).sqrt();
            assert!((*h as f64 / reps as f64 - p).abs() <= band, "urn {k}");
        }
    }

    #[test]
    fn empirical_field_examples() {
        let all = Configuration::uniform(6, UrnState::Infected);
        assert_eq!(empirical_fields(&all, &TestFunction::one()), (1.0, 0.0));
        let c = Configuration::from_codes(&[1, 0, 0, 1], 0.0).unwrap();
        let id = TestFunction::<f64>::affine(0.0, 1.0).unwrap();
        let (mu, theta) = empirical_fields(&c, &id);
        assert!((mu - 5.0 / 16.0).abs() < 1e-15 && (theta - 5.0 / 16.0).abs() < 1e-15);
        let removed = Configuration::uniform(4, UrnState::Removed);
        assert_eq!(empirical_fields(&removed, &id), (0.0, 0.0));
    }

    #[test]
    fn fluctuation_field_examples() {
        let c = Configuration::from_codes(&[1, 0, -1, 1], 0.0).unwrap();
        let ind: Vec<f64> = c.states().iter().map(|s| s.is_infected() as u8 as f64).collect();
        let (eta, _) = fluctuation_fields(&c, &ind, &[0.0; 4], &TestFunction::one()).unwrap();
        assert_eq!(eta, 0.0);
        let one = Configuration::from_codes(&[1], 0.0).unwrap();
        let (eta, _) = fluctuation_fields(&one, &[0.5], &[0.0], &TestFunction::one()).unwrap();
        assert_eq!(eta, 0.5);
        let c = Configuration::from_codes(&[0, 0, 1, 1], 0.0).unwrap();
        let (_, beta) = fluctuation_fields(&c, &[0.0; 4], &[0.5; 4], &TestFunction::one()).unwrap();
        assert_eq!(beta, 0.0);
        assert!(matches!(
            fluctuation_fields(&c, &[0.0; 3], &[0.5; 4], &TestFunction::one()),
            Err(Error::Dimension { .. })
        ));
    }

    fn config_strategy() -> impl Strategy<Value = Configuration> {
        prop::collection::vec(-1i8..=1, 1..40).prop_map(|c| Configuration::from_codes(&c, 0.0).unwrap())
    }

    proptest! {
        #[test]
        fn census_sums_to_n(c in config_strategy()) {
            prop_assert_eq!(c.census().total(), c.n());
        }

        #[test]
        fn empirical_fields_are_linear(c in config_strategy(), a in -3.0..3.0f64, b in -3.0..3.0f64,
                                       fa in -2.0..2.0f64, fb in -2.0..2.0f64, g0 in -2.0..2.0f64) {
            let f = TestFunction::affine(fa, fb).unwrap();
            let g = TestFunction::constant(g0).unwrap();
            let combo = TestFunction::affine(a * fa + b * g0, a * fb).unwrap();
            let (m1, t1) = empirical_fields(&c, &f);
            let (m2, t2) = empirical_fields(&c, &g);
            let (m, t) = empirical_fields(&c, &combo);
            prop_assert!((m - (a * m1 + b * m2)).abs() < 1e-12);
            prop_assert!((t - (a * t1 + b * t2)).abs() < 1e-12);
        }

        #[test]
        fn empirical_fields_bounded(c in config_strategy(), fa in 0.0..2.0f64, fb in 0.0..2.0f64) {
            let f = TestFunction::affine(fa, fb).unwrap();
            let sup = f.sup_norm();
            let (mu, theta) = empirical_fields(&c, &f);
            prop_assert!(mu >= 0.0 && theta >= 0.0);
            prop_assert!(mu + theta <= sup + 1e-12);
        }
    }
}
