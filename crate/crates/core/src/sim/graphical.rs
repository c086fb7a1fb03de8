//! Influence sets, clock-driven states and the coupled independent copies.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::model::{Configuration, UrnState};
use crate::sim::clocks::{ClockTable, ClockView, SubstitutedView};

/// Breadth-first influence set of a root urn.
///
/// `layers[r]` holds the urns whose shortest admissible path to the root has
/// exactly `r` links; `members` is their union.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceSet {
    pub root: usize,
    pub horizon: f64,
    pub blocked: Vec<usize>,
    pub layers: Vec<Vec<usize>>,
    mask: Vec<bool>,
}

impl InfluenceSet {
    pub fn contains(&self, urn: usize) -> bool {
        self.mask[urn]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn members(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.layers.iter().flatten().copied().collect();
        m.sort_unstable();
        m
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Influence set `Γ_m^{t,B}` of `root` under `clocks`.
///
/// Layer `q + 1` consists of the urns outside `blocked` and earlier layers
/// reachable by a path from the root with `q + 1` links
/// `U_(m_r, m_{r+1})` summing to at most `t`. Computed by hop-bounded
/// Bellman-Ford rounds.
pub fn influence_set<C: ClockView + ?Sized>(
    clocks: &C,
    root: usize,
    t: f64,
    blocked: &[usize],
) -> Result<InfluenceSet> {
    let n = clocks.n();
    if root >= n || blocked.iter().any(|b| *b >= n) {
        return Err(Error::Domain(format!("urn index out of range for N = {n}")));
    }
    if blocked.contains(&root) {
        return Err(Error::Precondition(format!("root urn {} is blocked", root + 1)));
    }
    let mut is_blocked = vec![false; n];
    for b in blocked {
        is_blocked[*b] = true;
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut mask = vec![false; n];
    dist[root] = 0.0;
    mask[root] = true;
    let mut layers = vec![vec![root]];
    let mut frontier = vec![root];
    let mut fresh = Vec::new();
    let mut touched = vec![false; n];
    while !frontier.is_empty() {
        let mut improved = Vec::new();
        let start = dist.clone();
        for &x in &frontier {
            let dx = start[x];
            for phi in 0..n {
                if phi == x || is_blocked[phi] {
                    continue;
                }
                let d = dx + clocks.infection(x, phi);
                if d <= t && d < dist[phi] {
                    dist[phi] = d;
                    if !touched[phi] {
                        touched[phi] = true;
                        improved.push(phi);
                    }
                }
            }
        }
        fresh.clear();
        for &phi in &improved {
            touched[phi] = false;
            if !mask[phi] {
                mask[phi] = true;
                fresh.push(phi);
            }
        }
        if !fresh.is_empty() {
            let mut layer = fresh.clone();
            layer.sort_unstable();
            layers.push(layer);
        }
        frontier = improved;
    }
    let mut blocked = blocked.to_vec();
    blocked.sort_unstable();
    blocked.dedup();
    Ok(InfluenceSet { root, horizon: t, blocked, layers, mask })
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Earliest infection moment of `m`, or `None` if it exceeds `t`.
///
/// Shortest clock-sum search backwards from `m`: the link by which `ρ`
/// infects `φ` has length `U_(φ, ρ)` and is usable only if `U_(φ, ρ) < K_ρ`.
pub fn infection_moment<C: ClockView + ?Sized>(clocks: &C, initial: &[UrnState], m: usize, t: f64) -> Option<f64> {
    let n = clocks.n();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[m] = 0.0;
    heap.push(Entry(0.0, m));
    while let Some(Entry(d, phi)) = heap.pop() {
        if done[phi] {
            continue;
        }
        done[phi] = true;
        if initial[phi].is_infected() {
            return Some(d);
        }
        for rho in 0..n {
            if rho == phi || done[rho] {
                continue;
            }
            let u = clocks.infection(phi, rho);
            let nd = d + u;
            if nd <= t && nd < dist[rho] && u < clocks.recovery(rho) {
                dist[rho] = nd;
                heap.push(Entry(nd, rho));
            }
        }
    }
    None
}

/// State of urn `m` at time `t` generic over the clock source.
pub fn state_with<C: ClockView + ?Sized>(clocks: &C, initial: &[UrnState], m: usize, t: f64) -> UrnState {
    match infection_moment(clocks, initial, m, t) {
        None => UrnState::Susceptible,
        Some(c) if c + clocks.recovery(m) > t => UrnState::Infected,
        Some(_) => UrnState::Removed,
    }
}

/// `ξ_t(m)` determined by bank-1 clocks and the initial configuration.
pub fn state_from_clocks<C: ClockView + ?Sized>(
    clocks: &C,
    initial: &Configuration,
    m: usize,
    t: f64,
) -> Result<UrnState> {
    let n = clocks.n();
    if initial.n() != n {
        return Err(Error::Dimension { expected: n, actual: initial.n() });
    }
    if m >= n {
        return Err(Error::Domain(format!("urn {} out of range for N = {n}", m + 1)));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time {t} must be nonnegative")));
    }
    if initial.states().contains(&UrnState::Removed) {
        return Err(Error::Precondition("initial configuration contains removed urns".into()));
    }
    Ok(state_with(clocks, initial.states(), m, t))
}

/// Result of the coupled construction for four distinct urns.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledQuadruple {
    pub xi_i: UrnState,
    pub xihat_j: UrnState,
    pub xihat_k: UrnState,
    pub xihat_l: UrnState,
    /// Original states of `j, k, l` for comparison.
    pub xi_jkl: [UrnState; 3],
    /// Blocked influence sets `B_1..B_4`.
    pub blocked_sets: [Vec<usize>; 4],
    pub omega_ok: bool,
}

fn union_mask(masks: &[&[bool]]) -> Vec<bool> {
    let n = masks[0].len();
    (0..n).map(|k| masks.iter().any(|m| m[k])).collect()
}

/// Coupled copies `(ξ_t(i), ξ̂_t(j), ξ̂_t(k), ξ̂_t(l))` built from the
/// replica banks, together with the indicator of the good event `Ω_N`.
///
/// Bank 1 initial states come from `initial`; replica initial states from the
/// table. Cross-set clocks are compared with the table horizon.
pub fn coupled_quadruple(
    table: &ClockTable,
    initial: &Configuration,
    (i, j, k, l): (usize, usize, usize, usize),
    t: f64,
) -> Result<CoupledQuadruple> {
    let n = table.n();
    let urns = [i, j, k, l];
    if urns.iter().any(|u| *u >= n) {
        return Err(Error::Domain(format!("urn index out of range for N = {n}")));
    }
    if (0..4).any(|a| (a + 1..4).any(|b| urns[a] == urns[b])) {
        return Err(Error::Precondition("coupled urns must be distinct".into()));
    }
    if initial.n() != n {
        return Err(Error::Dimension { expected: n, actual: initial.n() });
    }
    let base = initial.states();

    let gamma_i = influence_set(table, i, t, &[])?;
    let mask_j = gamma_i.mask().to_vec();
    let view_j = SubstitutedView::new(table, 2, &mask_j);
    let gamma_j = influence_set(&view_j, j, t, &[])?;
    let mask_k = union_mask(&[&mask_j, gamma_j.mask()]);
    let view_k = SubstitutedView::new(table, 3, &mask_k);
    let gamma_k = influence_set(&view_k, k, t, &[])?;
    let mask_l = union_mask(&[&mask_k, gamma_k.mask()]);
    let view_l = SubstitutedView::new(table, 4, &mask_l);

    let xi_i = state_with(table, base, i, t);
    let xihat_j = state_with(&view_j, &view_j.initial_states(base), j, t);
    let xihat_k = state_with(&view_k, &view_k.initial_states(base), k, t);
    let xihat_l = state_with(&view_l, &view_l.initial_states(base), l, t);
    let xi_jkl = [state_with(table, base, j, t), state_with(table, base, k, t), state_with(table, base, l, t)];

    let b1 = influence_set(table, i, t, &[j, k, l])?.members();
    let mut blocked = b1.clone();
    blocked.extend([k, l]);
    let b2 = influence_set(&view_j, j, t, &blocked)?.members();
    let mut blocked: Vec<usize> = b1.iter().chain(&b2).copied().collect();
    blocked.push(l);
    let b3 = influence_set(&view_k, k, t, &blocked)?.members();
    let blocked: Vec<usize> = b1.iter().chain(&b2).chain(&b3).copied().collect();
    let b4 = influence_set(&view_l, l, t, &blocked)?.members();

    let horizon = table.horizon();
    let sets = [b1, b2, b3, b4];
    let clear = |phi: usize, rho: usize| table.infection(phi, rho) > horizon;
    let omega1 =
        (1..4).all(|m1| (0..m1).all(|m2| sets[m1].iter().all(|&phi| sets[m2].iter().all(|&rho| clear(phi, rho)))));
    let omega2 = sets[0].iter().all(|&phi| clear(phi, j));
    let omega3 = sets[..2].iter().flatten().all(|&phi| clear(phi, k));
    let omega4 = sets[..3].iter().flatten().all(|&phi| clear(phi, l));

    Ok(CoupledQuadruple {
        xi_i,
        xihat_j,
        xihat_k,
        xihat_l,
        xi_jkl,
        blocked_sets: sets,
        omega_ok: omega1 && omega2 && omega3 && omega4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Kernel, ModelSpec, ScalarField};
    use crate::sim::clocks::{build_clock_table, FixedClocks};
    use proptest::prelude::*;

    fn chain() -> FixedClocks {
        let mut c = FixedClocks::new(3);
        c.set_infection(0, 1, 0.4).set_infection(1, 2, 0.5);
        for (a, b) in [(0, 2), (1, 0), (2, 0), (2, 1)] {
            c.set_infection(a, b, 5.0);
        }
        c
    }

    #[test]
    fn no_small_clocks_gives_singleton() {
        let c = FixedClocks::new(5);
        let s = influence_set(&c, 2, 1.0, &[]).unwrap();
        assert_eq!(s.members(), vec![2]);
        assert_eq!(s.layers, vec![vec![2]]);
    }

    #[test]
    fn chain_layers() {
        let s = influence_set(&chain(), 0, 1.0, &[]).unwrap();
        assert_eq!(s.layers, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(s.members(), vec![0, 1, 2]);
        let s = influence_set(&chain(), 0, 0.8, &[]).unwrap();
        assert_eq!(s.members(), vec![0, 1]);
    }

    #[test]
    fn blocked_chain() {
        let s = influence_set(&chain(), 0, 1.0, &[1]).unwrap();
        assert_eq!(s.members(), vec![0]);
        assert!(matches!(influence_set(&chain(), 1, 1.0, &[1]), Err(Error::Precondition(_))));
    }

    #[test]
    fn shortest_hop_layer_wins() {
        // 0 <- 1 (0.1), 1 <- 2 (0.1), 0 <- 2 directly (0.9): urn 2 lies in layer 1
        let mut c = FixedClocks::new(3);
        c.set_infection(0, 1, 0.1).set_infection(1, 2, 0.1).set_infection(0, 2, 0.9);
        let s = influence_set(&c, 0, 1.0, &[]).unwrap();
        assert_eq!(s.layers, vec![vec![0], vec![1, 2]]);
    }

    #[test]
    fn multi_hop_through_earlier_layer() {
        // 3 reachable only as 0 <- 2 <- 1 <- 3 although 1 and 2 are both in layer 1
        let mut c = FixedClocks::new(4);
        c.set_infection(0, 1, 0.1).set_infection(0, 2, 0.1).set_infection(2, 1, 0.1).set_infection(1, 3, 0.1);
        let s = influence_set(&c, 0, 0.35, &[]).unwrap();
        assert_eq!(s.members(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn all_susceptible_stays_susceptible() {
        let s = ModelSpec::new(
            Kernel::Constant(3.0),
            ScalarField::constant(1.0).unwrap(),
            ScalarField::constant(0.5).unwrap(),
            6,
            2.0,
        )
        .unwrap();
        let table = build_clock_table(&s, 4).unwrap();
        let init = Configuration::uniform(6, UrnState::Susceptible);
        for m in 0..6 {
            for t in [0.0, 0.5, 2.0] {
                assert_eq!(state_from_clocks(&table, &init, m, t).unwrap(), UrnState::Susceptible);
            }
        }
    }

    #[test]
    fn single_urn_recovery_clock() {
        let mut c = FixedClocks::new(1);
        c.set_recovery(0, 0.3);
        let init = Configuration::from_codes(&[1], 0.0).unwrap();
        assert_eq!(state_from_clocks(&c, &init, 0, 0.5).unwrap(), UrnState::Removed);
        assert_eq!(state_from_clocks(&c, &init, 0, 0.2).unwrap(), UrnState::Infected);
    }

    #[test]
    fn link_requires_source_still_infected() {
        // urn 1 infected at 0 recovers at 0.2; its clock on urn 0 is 0.3
        let mut c = FixedClocks::new(2);
        c.set_recovery(1, 0.2).set_infection(0, 1, 0.3);
        let init = Configuration::from_codes(&[0, 1], 0.0).unwrap();
        assert_eq!(state_from_clocks(&c, &init, 0, 1.0).unwrap(), UrnState::Susceptible);
        c.set_recovery(1, 0.4).set_recovery(0, 0.5);
        assert_eq!(state_from_clocks(&c, &init, 0, 0.29).unwrap(), UrnState::Susceptible);
        assert_eq!(state_from_clocks(&c, &init, 0, 0.5).unwrap(), UrnState::Infected);
        assert_eq!(state_from_clocks(&c, &init, 0, 0.9).unwrap(), UrnState::Removed);
    }

    #[test]
    fn no_infection_gives_trivial_coupling() {
        let s = ModelSpec::degenerate(
            Kernel::Constant(0.0),
            ScalarField::constant(1.0).unwrap(),
            ScalarField::constant(0.5).unwrap(),
            8,
            1.0,
        )
        .unwrap();
        for seed in 0..20 {
            let table = build_clock_table(&s, seed).unwrap();
            let init = Configuration::new(table.initial_states(1), 0.0).unwrap();
            let q = coupled_quadruple(&table, &init, (0, 3, 5, 7), 1.0).unwrap();
            assert!(q.omega_ok);
            assert_eq!([q.xihat_j, q.xihat_k, q.xihat_l], q.xi_jkl);
            assert_eq!(q.blocked_sets, [vec![0], vec![3], vec![5], vec![7]]);
        }
    }

    #[test]
    fn coupling_rejects_repeated_urns() {
        let s = ModelSpec::homogeneous(1.0, 0.5, 6, 1.0).unwrap();
        let table = build_clock_table(&s, 0).unwrap();
        let init = Configuration::uniform(6, UrnState::Susceptible);
        assert!(matches!(coupled_quadruple(&table, &init, (0, 1, 1, 2), 1.0), Err(Error::Precondition(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn layers_are_disjoint_and_avoid_blocked(seed in any::<u64>(), n in 2usize..25, lambda in 0.5..6.0f64,
                                                 root in 0usize..25, blocked in prop::collection::vec(0usize..25, 0..5)) {
            let root = root % n;
            let blocked: Vec<usize> = blocked.into_iter().map(|b| b % n).filter(|b| *b != root).collect();
            let s = ModelSpec::homogeneous(lambda, 0.5, n, 1.0).unwrap();
            let table = build_clock_table(&s, seed).unwrap();
            let set = influence_set(&table, root, 1.0, &blocked).unwrap();
            prop_assert_eq!(&set.layers[0], &vec![root]);
            let members = set.members();
            let mut dedup = members.clone();
            dedup.dedup();
            prop_assert_eq!(members.len(), dedup.len());
            prop_assert!(set.layers.iter().all(|l| !l.is_empty()));
            for b in &blocked {
                prop_assert!(!set.contains(*b));
            }
        }

        #[test]
        fn hat_states_equal_originals_on_good_event(seed in any::<u64>(), n in 4usize..40, lambda in 0.5..4.0f64,
                                                    t in 0.1..1.0f64) {
            let s = ModelSpec::homogeneous(lambda, 0.5, n, 1.0).unwrap();
            let table = build_clock_table(&s, seed).unwrap();
            let init = Configuration::new(table.initial_states(1), 0.0).unwrap();
            let q = coupled_quadruple(&table, &init, (0, 1, n / 2, n - 1), t).unwrap();
            if q.omega_ok {
                prop_assert_eq!([q.xihat_j, q.xihat_k, q.xihat_l], q.xi_jkl);
            }
        }
    }
}
