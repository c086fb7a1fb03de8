use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, UrnState};
use crate::oracle::generator::{state_count, GeneratorMatrix, StateIndex};
use crate::scalar::Real;

/// Truncation bound on the discarded Poisson mass.
pub const TRUNCATION_TOLERANCE: f64 = 1e-10;

/// Largest `Λτ` handled in one uniformization chunk.
const CHUNK_INTENSITY: f64 = 30.0;

fn check_distribution<T: Real>(p: &[T], dim: usize) -> Result<()> {
    if p.len() != dim {
        return Err(Error::Dimension { expected: dim, actual: p.len() });
    }
    if p.iter().any(|v| !(*v >= T::zero())) {
        return Err(Error::Precondition("distribution has negative or non-finite entries".into()));
    }
    let total = p.iter().fold(T::zero(), |a, v| a + *v);
    let tol = T::lit(1e-9).max(T::from_count(dim) * T::eps() * T::lit(8.0));
    if (total - T::one()).abs() > tol {
        return Err(Error::Precondition(format!("distribution sums to {total}, not 1")));
    }
    Ok(())
}

/// `p0 exp(Q t)` by uniformization.
///
/// The horizon is split into chunks with `Λτ ≤ 30`; within each chunk the
/// Poisson series is cut once the remaining mass is below `10⁻¹⁰` divided by
/// the number of chunks.
pub fn transient_distribution<T: Real>(q: &GeneratorMatrix<T>, p0: &[T], t: T) -> Result<Vec<T>> {
    check_distribution(p0, q.dim())?;
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::Domain(format!("time {t} must be finite and nonnegative")));
    }
    let lambda = q.uniformization_rate().max((0..q.dim()).fold(T::zero(), |m, s| m.max(-q.diagonal(s))));
    if t == T::zero() || lambda == T::zero() {
        return Ok(p0.to_vec());
    }
    let intensity = (lambda * t).as_f64();
    let chunks = (intensity / CHUNK_INTENSITY).ceil().max(1.0) as usize;
    let tau = t / T::from_count(chunks);
    let tol = T::lit(TRUNCATION_TOLERANCE / chunks as f64).max(T::eps() * T::lit(4.0));
    let mut p = p0.to_vec();
    for _ in 0..chunks {
        p = uniformized_chunk(q, &p, lambda, tau, tol);
    }
    Ok(p)
}

fn uniformized_chunk<T: Real>(q: &GeneratorMatrix<T>, p0: &[T], lambda: T, tau: T, tol: T) -> Vec<T> {
    let a = lambda * tau;
    let mut weight = (-a).exp();
    let mut covered = weight;
    let mut term = p0.to_vec();
    let mut next = vec![T::zero(); p0.len()];
    let mut out: Vec<T> = term.iter().map(|v| *v * weight).collect();
    let mut k = 0usize;
    // P = I + Q / Λ
    while T::one() - covered > tol {
        k += 1;
        q.left_multiply(&term, &mut next);
        for (n, t) in next.iter_mut().zip(&term) {
            *n = *t + *n / lambda;
        }
        std::mem::swap(&mut term, &mut next);
        weight = weight * a / T::from_count(k);
        covered += weight;
        for (o, t) in out.iter_mut().zip(&term) {
            *o += *t * weight;
        }
        if k > 10_000 {
            break;
        }
    }
    // the discarded Poisson tail is spread proportionally
    out.iter_mut().for_each(|o| *o /= covered);
    out
}

/// Indicator `H_0 = S` (susceptible) or `H_1 = I` (infected).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Indicator {
    S,
    I,
}

impl Indicator {
    fn holds(self, s: UrnState) -> bool {
        match self {
            Indicator::S => s == UrnState::Susceptible,
            Indicator::I => s == UrnState::Infected,
        }
    }
}

/// Product of indicators over distinct urns, e.g. `I1·S3`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MomentQuery(pub Vec<(usize, Indicator)>);

impl MomentQuery {
    pub fn pair(a: (usize, Indicator), b: (usize, Indicator)) -> Self {
        MomentQuery(vec![a, b])
    }

    /// Label with 1-based urns, e.g. `I1*S3`.
    pub fn label(&self) -> String {
        self.0
            .iter()
            .map(|(k, h)| format!("{}{}", if *h == Indicator::I { 'I' } else { 'S' }, k + 1))
            .collect::<Vec<_>>()
            .join("*")
    }

    pub fn parse(label: &str) -> Result<Self> {
        label
            .split('*')
            .map(|tok| {
                let (h, rest) = tok.split_at(1.min(tok.len()));
                let h = match h {
                    "I" => Indicator::I,
                    "S" => Indicator::S,
                    _ => return Err(Error::Domain(format!("bad indicator in query {label:?}"))),
                };
                let urn: usize = rest.parse().map_err(|_| Error::Domain(format!("bad urn in query {label:?}")))?;
                let k = urn.checked_sub(1).ok_or_else(|| Error::Domain("urn labels start at 1".into()))?;
                Ok((k, h))
            })
            .collect::<Result<_>>()
            .map(MomentQuery)
    }
}

/// Exact joint moment, product of marginal means and their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct Moment<T> {
    pub query: MomentQuery,
    pub joint: T,
    pub product_of_means: T,
    pub covariance: T,
}

/// Exact `E[∏ H(i)]` and `E[∏ H(i)] − ∏ E[H(i)]` for each query.
pub fn moment_report<T: Real>(dist: &[T], n: usize, queries: &[MomentQuery]) -> Result<Vec<Moment<T>>> {
    if dist.len() != state_count(n) {
        return Err(Error::Dimension { expected: state_count(n), actual: dist.len() });
    }
    queries
        .iter()
        .map(|q| {
            if q.0.iter().any(|(k, _)| *k >= n) {
                return Err(Error::Domain(format!("query {} refers to an urn beyond N = {n}", q.label())));
            }
            let mut urns: Vec<usize> = q.0.iter().map(|(k, _)| *k).collect();
            urns.sort_unstable();
            if urns.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Precondition(format!("query {} repeats an urn", q.label())));
            }
            let mut joint = T::zero();
            let mut means = vec![T::zero(); q.0.len()];
            for (s, &p) in dist.iter().enumerate() {
                if p == T::zero() {
                    continue;
                }
                let idx = StateIndex(s);
                let mut all = true;
                for (m, (k, h)) in q.0.iter().enumerate() {
                    if h.holds(idx.urn(*k)) {
                        means[m] += p;
                    } else {
                        all = false;
                    }
                }
                if all {
                    joint += p;
                }
            }
            let product = means.iter().fold(T::one(), |a, m| a * *m);
            Ok(Moment { query: q.clone(), joint, product_of_means: product, covariance: joint - product })
        })
        .collect()
}

/// Per-urn marginal law `[P(−1), P(0), P(1)]`.
pub fn marginals<T: Real>(dist: &[T], n: usize) -> Vec<[T; 3]> {
    let mut out = vec![[T::zero(); 3]; n];
    for (s, &p) in dist.iter().enumerate() {
        let idx = StateIndex(s);
        for (k, m) in out.iter_mut().enumerate() {
            m[(idx.urn(k).code() + 1) as usize] += p;
        }
    }
    out
}

/// Residuals of the one-urn forward balance
/// `d/dt P(I_t(i)=1) = −ψ(i/N) P(I_t(i)=1) + (1/N) Σ_{j≠i} λ(i/N, j/N) P(S_t(i)=1, I_t(j)=1)`
/// with a centered difference of step `dt`.
pub fn kc_residuals<T: Real>(spec: &ModelSpec<T>, q: &GeneratorMatrix<T>, p0: &[T], t: T, dt: T) -> Result<Vec<T>> {
    if !(dt > T::zero()) || t < dt {
        return Err(Error::Precondition("need 0 < dt ≤ t".into()));
    }
    let n = spec.n();
    let minus = marginals(&transient_distribution(q, p0, t - dt)?, n);
    let plus = marginals(&transient_distribution(q, p0, t + dt)?, n);
    let mid = transient_distribution(q, p0, t)?;
    let m = marginals(&mid, n);
    let nt = T::from_count(n);
    (0..n)
        .map(|i| {
            let deriv = (plus[i][2] - minus[i][2]) / (dt + dt);
            let queries: Vec<MomentQuery> =
                (0..n).filter(|j| *j != i).map(|j| MomentQuery::pair((i, Indicator::S), (j, Indicator::I))).collect();
            let pairs = moment_report(&mid, n, &queries)?;
            let infection = queries.iter().zip(&pairs).fold(T::zero(), |a, (qq, mo)| {
                let j = qq.0[1].0;
                a + spec.lambda().value(spec.site(i), spec.site(j)) * mo.joint
            }) / nt;
            let rhs = -spec.psi().value(spec.site(i)) * m[i][2] + infection;
            Ok((deriv - rhs).abs())
        })
        .collect()
}

/// One oracle fixture row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub spec_hash: String,
    pub t: f64,
    pub query: String,
    pub value: f64,
}

/// CSV with header `spec_hash,t,query,value`.
pub fn write_fixtures<W: Write>(rows: &[FixtureRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fixtures<R: Read>(input: R) -> Result<Vec<FixtureRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Kernel, ScalarField};
    use crate::oracle::generator::{build_generator, initial_distribution};
    use proptest::prelude::*;

    fn spec(n: usize, lambda: f64, phi: f64) -> ModelSpec<f64> {
        ModelSpec::new(
            Kernel::Constant(lambda),
            ScalarField::constant(1.0).unwrap(),
            ScalarField::constant(phi).unwrap(),
            n,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let s = spec(3, 1.0, 0.3);
        let q = build_generator(&s).unwrap();
        let p0 = initial_distribution(&s).unwrap();
        assert_eq!(transient_distribution(&q, &p0, 0.0).unwrap(), p0);
    }

    #[test]
    fn single_urn_decay() {
        let s = spec(1, 1.0, 1.0);
        let q = build_generator(&s).unwrap();
        let p = transient_distribution(&q, &initial_distribution(&s).unwrap(), 1.0).unwrap();
        assert!((p[2] - (-1.0f64).exp()).abs() < 1e-10);
        let mo = moment_report(&p, 1, &[MomentQuery(vec![(0, Indicator::I)])]).unwrap();
        assert_eq!(mo[0].joint, p[2]);
    }

    #[test]
    fn matches_fine_euler_forward_equation() {
        // explicit Euler oracle for dp/dt = pQ at dt = 1e-5
        let s = spec(2, 2.0, 0.5);
        let q = build_generator(&s).unwrap();
        let p0 = initial_distribution(&s).unwrap();
        let exact = transient_distribution(&q, &p0, 1.0).unwrap();
        let dense: Vec<Vec<f64>> = (0..9).map(|a| (0..9).map(|b| q.entry(a, b)).collect()).collect();
        let mut p = p0.clone();
        let dt = 1e-5;
        for _ in 0..100_000 {
            let mut dp = [0.0; 9];
            for a in 0..9 {
                for b in 0..9 {
                    dp[b] += p[a] * dense[a][b];
                }
            }
            for b in 0..9 {
                p[b] += dt * dp[b];
            }
        }
        for b in 0..9 {
            assert!((p[b] - exact[b]).abs() < 1e-6, "state {b}: {} vs {}", p[b], exact[b]);
        }
    }

    #[test]
    fn long_horizon_uses_chunks() {
        let s = spec(4, 3.0, 0.5);
        let q = build_generator(&s).unwrap();
        let p0 = initial_distribution(&s).unwrap();
        let p = transient_distribution(&q, &p0, 20.0).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let two = transient_distribution(&q, &transient_distribution(&q, &p0, 9.0).unwrap(), 11.0).unwrap();
        assert!(p.iter().zip(&two).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn initial_pair_covariance_vanishes() {
        let s = spec(4, 1.0, 0.5);
        let p0 = initial_distribution(&s).unwrap();
        let mo = moment_report(&p0, 4, &[MomentQuery::pair((0, Indicator::I), (1, Indicator::I))]).unwrap();
        assert!(mo[0].covariance.abs() < 1e-16);
    }

    #[test]
    fn four_urn_pair_covariance_fixture() {
        // value frozen from an independent dense matrix-exponential computation
        let s = spec(4, 1.0, 0.5);
        let q = build_generator(&s).unwrap();
        let p = transient_distribution(&q, &initial_distribution(&s).unwrap(), 1.0).unwrap();
        let mo = moment_report(&p, 4, &[MomentQuery::pair((0, Indicator::I), (1, Indicator::I))]).unwrap();
        assert!((mo[0].covariance - FOUR_URN_COV_I1_I2).abs() < 1e-10, "{}", mo[0].covariance);
    }

    const FOUR_URN_COV_I1_I2: f64 = 0.0172903565351111;

    #[test]
    fn duplicate_urns_rejected() {
        let p = initial_distribution(&spec(3, 1.0, 0.5)).unwrap();
        let q = MomentQuery::pair((1, Indicator::I), (1, Indicator::S));
        assert!(matches!(moment_report(&p, 3, &[q]), Err(Error::Precondition(_))));
    }

    #[test]
    fn bad_initial_distribution_rejected() {
        let q = build_generator(&spec(2, 1.0, 0.5)).unwrap();
        assert!(matches!(transient_distribution(&q, &[0.5; 9], 1.0), Err(Error::Precondition(_))));
        assert!(matches!(transient_distribution(&q, &[1.0; 3], 1.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn query_labels_round_trip() {
        let q = MomentQuery(vec![(0, Indicator::I), (2, Indicator::S), (3, Indicator::I)]);
        assert_eq!(q.label(), "I1*S3*I4");
        assert_eq!(MomentQuery::parse("I1*S3*I4").unwrap(), q);
        assert!(MomentQuery::parse("X1").is_err());
    }

    #[test]
    fn fixture_csv_round_trip() {
        let rows = vec![FixtureRow { spec_hash: "00ff".into(), t: 1.0, query: "cov:I1*I2".into(), value: -0.0125 }];
        let mut buf = Vec::new();
        write_fixtures(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("spec_hash,t,query,value\n"));
        assert_eq!(read_fixtures(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn single_precision_tracks_double() {
        let s64 = spec(3, 1.0, 0.5);
        let s32 = ModelSpec::<f32>::new(
            Kernel::Constant(1.0),
            ScalarField::constant(1.0).unwrap(),
            ScalarField::constant(0.5).unwrap(),
            3,
            1.0,
        )
        .unwrap();
        let p64 =
            transient_distribution(&build_generator(&s64).unwrap(), &initial_distribution(&s64).unwrap(), 1.0).unwrap();
        let p32 =
            transient_distribution(&build_generator(&s32).unwrap(), &initial_distribution(&s32).unwrap(), 1.0).unwrap();
        assert!(p64.iter().zip(&p32).all(|(a, b)| (a - *b as f64).abs() < 1e-5));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn stays_a_probability_vector_and_monotone(n in 1usize..5, lambda in 0.2..3.0f64, phi in 0.0..1.0f64) {
            let s = spec(n, lambda, phi);
            let q = build_generator(&s).unwrap();
            let p0 = initial_distribution(&s).unwrap();
            let mut prev_removed = 0.0;
            let mut prev_susc = f64::INFINITY;
            for step in 0..=8 {
                let t = 0.25 * step as f64;
                let p = transient_distribution(&q, &p0, t).unwrap();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(p.iter().all(|v| *v >= -1e-15));
                let m = marginals(&p, n);
                let removed: f64 = m.iter().map(|x| x[0]).sum();
                let susc: f64 = m.iter().map(|x| x[1]).sum();
                prop_assert!(removed >= prev_removed - 1e-12);
                prop_assert!(susc <= prev_susc + 1e-12);
                prev_removed = removed;
                prev_susc = susc;
            }
        }

        #[test]
        fn kc_balance_holds(n in 2usize..5, lambda in 0.2..3.0f64, psi_b in 0.0..1.0f64, t in 0.2..1.5f64) {
            let s = ModelSpec::new(Kernel::Separable(ScalarField::affine(0.5, 1.0).unwrap(), ScalarField::constant(lambda).unwrap()),
                                   ScalarField::affine(0.5, psi_b).unwrap(), ScalarField::affine(0.2, 0.5).unwrap(), n, 2.0).unwrap();
            let q = build_generator(&s).unwrap();
            let p0 = initial_distribution(&s).unwrap();
            let r = kc_residuals(&s, &q, &p0, t, 1e-3).unwrap();
            prop_assert!(r.iter().all(|v| *v < 1e-4), "{:?}", r);
        }

        #[test]
        fn constant_inputs_are_permutation_invariant(n in 2usize..5, lambda in 0.2..3.0f64, phi in 0.05..0.95f64,
                                                     a in 0usize..5, b in 0usize..5) {
            let (a, b) = (a % n, b % n);
            let s = spec(n, lambda, phi);
            let q = build_generator(&s).unwrap();
            let p = transient_distribution(&q, &initial_distribution(&s).unwrap(), 0.8).unwrap();
            for st in 0..p.len() {
                let mut states = StateIndex(st).decode(n);
                states.swap(a, b);
                prop_assert!((p[st] - p[StateIndex::encode(&states).0]).abs() < 1e-12);
            }
        }
    }
}
