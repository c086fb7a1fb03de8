use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, UrnState};
use crate::rng::{counter_bits, derive_seed, exponential_from_unit, open_unit, Domain};
use crate::sim::rates::UrnRates;

/// Largest urn count addressable by the clock counter layout.
pub const MAX_CLOCK_URNS: usize = 1 << 20;

const KIND_RECOVERY: u64 = 1;
const KIND_INFECTION: u64 = 2;
const KIND_INITIAL: u64 = 3;

/// Read access to a set of recovery clocks `K` and infection clocks `U`.
///
/// `infection(target, source)` is the clock after which an infected `source`
/// infects a susceptible `target`; its rate is `λ(target/N, source/N) / N`.
pub trait ClockView {
    fn n(&self) -> usize;
    fn recovery(&self, urn: usize) -> f64;
    fn infection(&self, target: usize, source: usize) -> f64;
}

/// Graphical-construction clocks, drawn lazily from a counter-based hash.
///
/// Bank 1 holds the original clocks, banks 2 to 4 the independent replicas.
/// Every value is a pure function of `(seed, kind, bank, indices)`, so
/// repeated queries return the same clock and nothing is stored.
#[derive(Debug, Clone)]
pub struct ClockTable {
    rates: Arc<UrnRates>,
    key: u64,
    horizon: f64,
}

#[inline]
fn counter(kind: u64, bank: u8, a: usize, b: usize) -> u64 {
    (kind << 62) | ((bank as u64) << 58) | ((a as u64) << 20) | b as u64
}

fn check_bank(bank: u8) {
    assert!((1..=4).contains(&bank), "clock bank {bank} not in 1..=4");
}

impl ClockTable {
    pub fn rates(&self) -> &UrnRates {
        &self.rates
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    fn unit(&self, kind: u64, bank: u8, a: usize, b: usize) -> f64 {
        open_unit(counter_bits(self.key, counter(kind, bank, a, b)))
    }

    /// `K_i` in the given bank, rate `ψ(i/N)`.
    #[inline]
    pub fn recovery_clock(&self, bank: u8, urn: usize) -> f64 {
        check_bank(bank);
        exponential_from_unit(self.unit(KIND_RECOVERY, bank, urn, 0), self.rates.recovery(urn))
    }

    /// `U_(target, source)` in the given bank, rate `λ(target/N, source/N) / N`.
    #[inline]
    pub fn infection_clock(&self, bank: u8, target: usize, source: usize) -> f64 {
        check_bank(bank);
        exponential_from_unit(self.unit(KIND_INFECTION, bank, target, source), self.rates.infection(target, source))
    }

    /// Initial state of urn `i` in the given bank, infected with probability `φ(i/N)`.
    pub fn initial_state(&self, bank: u8, urn: usize) -> UrnState {
        check_bank(bank);
        if self.unit(KIND_INITIAL, bank, urn, 0) < self.rates.initial_probability(urn) {
            UrnState::Infected
        } else {
            UrnState::Susceptible
        }
    }

    pub fn initial_states(&self, bank: u8) -> Vec<UrnState> {
        (0..self.rates.n()).map(|k| self.initial_state(bank, k)).collect()
    }

    /// Bank-`b` clocks as a [`ClockView`].
    pub fn bank(&self, bank: u8) -> BankView<'_> {
        check_bank(bank);
        BankView { table: self, bank }
    }
}

impl ClockView for ClockTable {
    fn n(&self) -> usize {
        self.rates.n()
    }

    #[inline]
    fn recovery(&self, urn: usize) -> f64 {
        self.recovery_clock(1, urn)
    }

    #[inline]
    fn infection(&self, target: usize, source: usize) -> f64 {
        self.infection_clock(1, target, source)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BankView<'a> {
    table: &'a ClockTable,
    bank: u8,
}

impl ClockView for BankView<'_> {
    fn n(&self) -> usize {
        self.table.n()
    }

    fn recovery(&self, urn: usize) -> f64 {
        self.table.recovery_clock(self.bank, urn)
    }

    fn infection(&self, target: usize, source: usize) -> f64 {
        self.table.infection_clock(self.bank, target, source)
    }
}

/// Bank-1 clocks with bank `b` substituted for every clock whose first index
/// lies in `mask`.
#[derive(Debug, Clone, Copy)]
pub struct SubstitutedView<'a> {
    table: &'a ClockTable,
    bank: u8,
    mask: &'a [bool],
}

impl<'a> SubstitutedView<'a> {
    pub fn new(table: &'a ClockTable, bank: u8, mask: &'a [bool]) -> Self {
        check_bank(bank);
        assert_eq!(mask.len(), table.n(), "mask length");
        Self { table, bank, mask }
    }

    /// Initial states with the same substitution rule applied to `base`.
    pub fn initial_states(&self, base: &[UrnState]) -> Vec<UrnState> {
        base.iter()
            .enumerate()
            .map(|(k, s)| if self.mask[k] { self.table.initial_state(self.bank, k) } else { *s })
            .collect()
    }
}

impl ClockView for SubstitutedView<'_> {
    fn n(&self) -> usize {
        self.table.n()
    }

    #[inline]
    fn recovery(&self, urn: usize) -> f64 {
        let bank = if self.mask[urn] { self.bank } else { 1 };
        self.table.recovery_clock(bank, urn)
    }

    #[inline]
    fn infection(&self, target: usize, source: usize) -> f64 {
        let bank = if self.mask[target] { self.bank } else { 1 };
        self.table.infection_clock(bank, target, source)
    }
}

/// Explicitly specified clocks; unspecified clocks never ring.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedClocks {
    n: usize,
    recovery: Vec<f64>,
    infection: Vec<f64>,
}

impl FixedClocks {
    pub fn new(n: usize) -> Self {
        Self { n, recovery: vec![f64::INFINITY; n], infection: vec![f64::INFINITY; n * n] }
    }

    pub fn set_recovery(&mut self, urn: usize, value: f64) -> &mut Self {
        self.recovery[urn] = value;
        self
    }

    pub fn set_infection(&mut self, target: usize, source: usize, value: f64) -> &mut Self {
        self.infection[target * self.n + source] = value;
        self
    }
}

impl ClockView for FixedClocks {
    fn n(&self) -> usize {
        self.n
    }

    fn recovery(&self, urn: usize) -> f64 {
        self.recovery[urn]
    }

    fn infection(&self, target: usize, source: usize) -> f64 {
        self.infection[target * self.n + source]
    }
}

/// Clock table for `spec`; deterministic in `seed`. Ω events use `spec.horizon()`.
pub fn build_clock_table(spec: &ModelSpec<f64>, seed: u64) -> Result<ClockTable> {
    build_clock_table_with(Arc::new(UrnRates::new(spec)), spec.horizon(), seed)
}

/// As [`build_clock_table`] with shared precomputed rates.
pub fn build_clock_table_with(rates: Arc<UrnRates>, horizon: f64, seed: u64) -> Result<ClockTable> {
    if rates.n() > MAX_CLOCK_URNS {
        return Err(Error::Capacity(format!("clock tables support at most {MAX_CLOCK_URNS} urns")));
    }
    Ok(ClockTable { rates, key: derive_seed(seed, Domain::Clocks, 0), horizon })
}
