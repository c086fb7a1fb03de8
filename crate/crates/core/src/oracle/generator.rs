use crate::error::{Error, Result};
use crate::model::{Configuration, ModelSpec, UrnState};
use crate::scalar::Real;

/// Largest urn count the dense state space is built for.
pub const MAX_ORACLE_URNS: usize = 10;

/// Base-3 index of a configuration: digit `i` is `ξ(i) + 1`, urn 1 least significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateIndex(pub usize);

impl StateIndex {
    pub fn encode(states: &[UrnState]) -> Self {
        let mut idx = 0usize;
        for s in states.iter().rev() {
            idx = idx * 3 + (s.code() + 1) as usize;
        }
        StateIndex(idx)
    }

    pub fn decode(self, n: usize) -> Vec<UrnState> {
        let mut idx = self.0;
        (0..n)
            .map(|_| {
                let d = idx % 3;
                idx /= 3;
                match d {
                    0 => UrnState::Removed,
                    1 => UrnState::Susceptible,
                    _ => UrnState::Infected,
                }
            })
            .collect()
    }

    /// Digit of urn `k` (0-based) as a state.
    #[inline]
    pub fn urn(self, k: usize) -> UrnState {
        match (self.0 / 3usize.pow(k as u32)) % 3 {
            0 => UrnState::Removed,
            1 => UrnState::Susceptible,
            _ => UrnState::Infected,
        }
    }

    pub fn configuration(self, n: usize) -> Configuration {
        Configuration::new(self.decode(n), 0.0).expect("time zero is valid")
    }
}

/// Number of states `3^N`.
pub fn state_count(n: usize) -> usize {
    3usize.pow(n as u32)
}

/// Sparse generator of the urn chain in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix<T> {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    rates: Vec<T>,
    diagonal: Vec<T>,
    uniformization: T,
}

impl<T: Real> GeneratorMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// Off-diagonal entries of row `s` as `(target, rate)`.
    pub fn row(&self, s: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.offsets[s]..self.offsets[s + 1];
        self.targets[r.clone()].iter().copied().zip(self.rates[r].iter().copied())
    }

    pub fn diagonal(&self, s: usize) -> T {
        self.diagonal[s]
    }

    /// Entry `Q[from, to]`.
    pub fn entry(&self, from: usize, to: usize) -> T {
        if from == to {
            return self.diagonal[from];
        }
        self.row(from).find(|(t, _)| *t == to).map_or(T::zero(), |(_, r)| r)
    }

    pub fn off_diagonal_count(&self) -> usize {
        self.targets.len()
    }

    /// Uniformization constant `N (‖ψ‖∞ + ‖λ‖∞)`.
    pub fn uniformization_rate(&self) -> T {
        self.uniformization
    }

    /// `max_s |Σ_t Q[s, t]|`.
    pub fn max_row_sum(&self) -> T {
        (0..self.dim()).fold(T::zero(), |m, s| {
            let sum = self.row(s).fold(self.diagonal[s], |a, (_, r)| a + r);
            m.max(sum.abs())
        })
    }

    /// `out = p Q`.
    pub fn left_multiply(&self, p: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for (s, &ps) in p.iter().enumerate() {
            if ps == T::zero() {
                continue;
            }
            out[s] += ps * self.diagonal[s];
            for (t, r) in self.row(s) {
                out[t] += ps * r;
            }
        }
    }
}

/// Generator on `{-1, 0, 1}^N` for `N ≤ 10`.
pub fn build_generator<T: Real>(spec: &ModelSpec<T>) -> Result<GeneratorMatrix<T>> {
    let n = spec.n();
    if n > MAX_ORACLE_URNS {
        return Err(Error::Capacity(format!("exact oracle supports N ≤ {MAX_ORACLE_URNS}, got {n}")));
    }
    let dim = state_count(n);
    let nt = T::from_count(n);
    let psi: Vec<T> = (0..n).map(|k| spec.psi().value(spec.site(k))).collect();
    let lam: Vec<Vec<T>> =
        (0..n).map(|a| (0..n).map(|b| spec.lambda().value(spec.site(a), spec.site(b)) / nt).collect()).collect();
    let pow: Vec<usize> = (0..n).map(|k| 3usize.pow(k as u32)).collect();
    let mut offsets = Vec::with_capacity(dim + 1);
    let mut targets = Vec::new();
    let mut rates = Vec::new();
    let mut diagonal = Vec::with_capacity(dim);
    offsets.push(0);
    for s in 0..dim {
        let states = StateIndex(s).decode(n);
        let mut out = T::zero();
        for k in 0..n {
            match states[k] {
                UrnState::Infected if psi[k] > T::zero() => {
                    targets.push(s - 2 * pow[k]);
                    rates.push(psi[k]);
                    out += psi[k];
                }
                UrnState::Susceptible => {
                    let r = (0..n).filter(|j| states[*j].is_infected()).fold(T::zero(), |a, j| a + lam[k][j]);
                    if r > T::zero() {
                        targets.push(s + pow[k]);
                        rates.push(r);
                        out += r;
                    }
                }
                _ => {}
            }
        }
        diagonal.push(-out);
        offsets.push(targets.len());
    }
    let uniformization = nt * (spec.psi().profile().sup_norm() + spec.lambda().sup_norm());
    Ok(GeneratorMatrix { n, offsets, targets, rates, diagonal, uniformization })
}

/// Product-Bernoulli law of `ξ_0`: urn `i` infected with probability `φ(i/N)`.
pub fn initial_distribution<T: Real>(spec: &ModelSpec<T>) -> Result<Vec<T>> {
    let n = spec.n();
    if n > MAX_ORACLE_URNS {
        return Err(Error::Capacity(format!("exact oracle supports N ≤ {MAX_ORACLE_URNS}, got {n}")));
    }
    let phi: Vec<T> = (0..n).map(|k| spec.phi().value(spec.site(k))).collect();
    Ok((0..state_count(n))
        .map(|s| {
            let idx = StateIndex(s);
            (0..n).fold(T::one(), |acc, k| match idx.urn(k) {
                UrnState::Infected => acc * phi[k],
                UrnState::Susceptible => acc * (T::one() - phi[k]),
                UrnState::Removed => T::zero(),
            })
        })
        .collect())
}

/// Point mass at a configuration.
pub fn point_mass<T: Real>(config: &Configuration) -> Result<Vec<T>> {
    if config.n() > MAX_ORACLE_URNS {
        return Err(Error::Capacity(format!("exact oracle supports N ≤ {MAX_ORACLE_URNS}, got {}", config.n())));
    }
    let mut p = vec![T::zero(); state_count(config.n())];
    p[StateIndex::encode(config.states()).0] = T::one();
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Kernel, ScalarField};
    use proptest::prelude::*;

    fn spec(n: usize, lambda: f64, psi: f64) -> ModelSpec<f64> {
        ModelSpec::new(
            Kernel::Constant(lambda),
            ScalarField::constant(psi).unwrap(),
            ScalarField::constant(0.5).unwrap(),
            n,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn single_urn_generator() {
        let q = build_generator(&spec(1, 1.0, 1.0)).unwrap();
        assert_eq!(q.dim(), 3);
        assert_eq!(q.off_diagonal_count(), 1);
        // state 1 has index 2, state -1 index 0
        assert_eq!(q.entry(2, 0), 1.0);
        assert_eq!(q.diagonal(2), -1.0);
    }

    #[test]
    fn two_urn_outgoing_rates() {
        let q = build_generator(&spec(2, 2.0, 1.0)).unwrap();
        let s = StateIndex::encode(&[UrnState::Infected, UrnState::Susceptible]).0;
        let rec = StateIndex::encode(&[UrnState::Removed, UrnState::Susceptible]).0;
        let inf = StateIndex::encode(&[UrnState::Infected, UrnState::Infected]).0;
        let mut row: Vec<_> = q.row(s).collect();
        row.sort_by_key(|e| e.0);
        assert_eq!(row, vec![(rec, 1.0), (inf, 1.0)]);
        assert_eq!(q.diagonal(s), -2.0);
    }

    #[test]
    fn infection_free_states_absorb() {
        let q = build_generator(&spec(3, 1.5, 2.0)).unwrap();
        for s in 0..q.dim() {
            let idx = StateIndex(s);
            if !(0..3).any(|k| idx.urn(k).is_infected()) {
                assert_eq!(q.row(s).count(), 0);
                assert_eq!(q.diagonal(s), 0.0);
            }
        }
    }

    #[test]
    fn capacity_cap() {
        assert!(matches!(build_generator(&spec(11, 1.0, 1.0)), Err(Error::Capacity(_))));
    }

    #[test]
    fn initial_law_sums_to_one() {
        let s = ModelSpec::new(
            Kernel::Constant(1.0),
            ScalarField::constant(1.0).unwrap(),
            ScalarField::affine(0.1, 0.8).unwrap(),
            5,
            1.0,
        )
        .unwrap();
        let p = initial_distribution(&s).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(codes in prop::collection::vec(-1i8..=1, 1..9)) {
            let c = Configuration::from_codes(&codes, 0.0).unwrap();
            let idx = StateIndex::encode(c.states());
            prop_assert!(idx.0 < state_count(codes.len()));
            prop_assert_eq!(idx.decode(codes.len()), c.states().to_vec());
            for k in 0..codes.len() {
                prop_assert_eq!(idx.urn(k), c.get(k));
            }
        }

        #[test]
        fn generator_structure(n in 1usize..6, lambda in 0.1..4.0f64, psi_a in 0.1..2.0f64, psi_b in 0.0..2.0f64) {
            let s = ModelSpec::new(Kernel::Constant(lambda), ScalarField::affine(psi_a, psi_b).unwrap(),
                                   ScalarField::constant(0.5).unwrap(), n, 1.0).unwrap();
            let q = build_generator(&s).unwrap();
            prop_assert!(q.max_row_sum() < 1e-12);
            for from in 0..q.dim() {
                prop_assert!(-q.diagonal(from) <= q.uniformization_rate() + 1e-12);
                let a = StateIndex(from).decode(n);
                for (to, r) in q.row(from) {
                    prop_assert!(r > 0.0);
                    let b = StateIndex(to).decode(n);
                    let diff: Vec<usize> = (0..n).filter(|k| a[*k] != b[*k]).collect();
                    prop_assert_eq!(diff.len(), 1);
                    let k = diff[0];
                    prop_assert!(matches!((a[k], b[k]),
                        (UrnState::Infected, UrnState::Removed) | (UrnState::Susceptible, UrnState::Infected)));
                }
            }
        }
    }
}
