use std::io::Write;
use std::sync::Arc;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

use super::ensemble::{ladder_seed, run_ensemble, EnsembleSpec, EnsembleStore};
use super::settings::Thresholds;
use super::stats::{
    covariance, kolmogorov_p_value, ks_statistic_normal, log_log_slope, mean, variance, variance_standard_error,
};
use crate::error::{Error, Result};
use crate::fluct::{evolve_covariance, initial_covariance, pair_covariance, FluctuationProblem};
use crate::hydro::{solve_density, GridSpec};
use crate::model::{spec_hash, Configuration, ModelSpec, TestFunction, UrnState};
use crate::oracle::{
    build_generator, initial_distribution, marginals, moment_report, transient_distribution, Indicator, MomentQuery,
    StateIndex,
};
use crate::rng::{derive_seed, stream, Domain};
use crate::sim::{build_clock_table_with, state_from_clocks, SimState, UrnRates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Oracle,
    Construction,
    Lln,
    Cov,
    Clt,
    Dynkin,
}

impl ReportKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Construction => "construction",
            Self::Lln => "lln",
            Self::Cov => "cov",
            Self::Clt => "clt",
            Self::Dynkin => "dynkin",
        }
    }
}

/// One reported statistic. `passed` is set only on threshold checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRecord {
    pub kind: ReportKind,
    pub n: usize,
    pub t: f64,
    pub statistic: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub passed: Option<bool>,
    pub spec_hash: String,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub kind: ReportKind,
    pub records: Vec<ReportRecord>,
}

impl Report {
    fn new(kind: ReportKind) -> Self {
        Self { kind, records: Vec::new() }
    }

    fn push(
        &mut self,
        ctx: &Ctx,
        t: f64,
        statistic: impl Into<String>,
        value: f64,
        bound: Option<f64>,
        passed: Option<bool>,
    ) {
        self.records.push(ReportRecord {
            kind: self.kind,
            n: ctx.n,
            t,
            statistic: statistic.into(),
            value,
            bound,
            passed,
            spec_hash: ctx.hash.clone(),
            master_seed: ctx.seed,
        });
    }

    /// True when no threshold check failed.
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.passed != Some(false))
    }

    pub fn checks(&self) -> impl Iterator<Item = &ReportRecord> {
        self.records.iter().filter(|r| r.passed.is_some())
    }

    /// First record named `statistic`.
    pub fn find(&self, statistic: &str) -> Option<&ReportRecord> {
        self.records.iter().find(|r| r.statistic == statistic)
    }

    pub fn extend(&mut self, other: Report) {
        self.records.extend(other.records);
    }
}

/// CSV with columns `kind,n,t,statistic,value,bound,passed,spec_hash,master_seed`.
pub fn write_records_csv<W: Write>(records: &[ReportRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(["kind", "n", "t", "statistic", "value", "bound", "passed", "spec_hash", "master_seed"])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

struct Ctx {
    n: usize,
    hash: String,
    seed: u64,
}

impl Ctx {
    fn new(spec: &ModelSpec<f64>, seed: u64) -> Self {
        Self { n: spec.n(), hash: spec_hash(spec), seed }
    }
}

fn state_label(codes: &[UrnState]) -> String {
    let parts: Vec<String> = codes.iter().map(|s| s.code().to_string()).collect();
    format!("state[{}]", parts.join(" "))
}

fn within(delta: f64, sigma: f64, k: f64) -> bool {
    if sigma > 0.0 {
        delta.abs() <= k * sigma
    } else {
        delta == 0.0
    }
}

/// Monte Carlo state frequencies from `simulate` against uniformization.
///
/// Records `state[..]` frequency deltas per state and time, plus `states_within`,
/// `states_total` and the checked `fraction_within`.
pub fn oracle_report(
    spec: &ModelSpec<f64>,
    times: &[f64],
    replicas: usize,
    seed: u64,
    th: &Thresholds,
) -> Result<Report> {
    let n = spec.n();
    let ctx = Ctx::new(spec, seed);
    let q = build_generator(spec)?;
    let p0 = initial_distribution(spec)?;
    let store =
        run_ensemble(&EnsembleSpec::new(spec.clone(), replicas, seed, times.to_vec()).with_test_functions(vec![]))?;
    let mut report = Report::new(ReportKind::Oracle);
    let (mut inside, mut total) = (0usize, 0usize);
    let r = replicas as f64;
    for (ti, &t) in times.iter().enumerate() {
        let exact = transient_distribution(&q, &p0, t)?;
        let mut counts = vec![0usize; exact.len()];
        for rep in 0..replicas {
            let states: Vec<UrnState> =
                store.codes(ti, rep).iter().map(|c| UrnState::from_code(*c)).collect::<Result<_>>()?;
            counts[StateIndex::encode(&states).0] += 1;
        }
        for (s, (&c, &p)) in counts.iter().zip(&exact).enumerate() {
            let p = p.clamp(0.0, 1.0);
            let delta = c as f64 / r - p;
            let sigma = (p * (1.0 - p) / r).sqrt();
            let ok = within(delta, sigma, th.band_sigma) || (p < 1e-14 && c == 0);
            inside += ok as usize;
            total += 1;
            report.push(&ctx, t, state_label(&StateIndex(s).decode(n)), delta, Some(th.band_sigma * sigma), None);
        }
    }
    let last = times.last().copied().unwrap_or(0.0);
    report.push(&ctx, last, "states_within", inside as f64, None, None);
    report.push(&ctx, last, "states_total", total as f64, None, None);
    let fraction = inside as f64 / total.max(1) as f64;
    report.push(
        &ctx,
        last,
        "fraction_within",
        fraction,
        Some(th.oracle_fraction),
        Some(fraction >= th.oracle_fraction),
    );
    Ok(report)
}

/// Per-urn marginal frequencies `[time][urn][P(−1), P(0), P(1)]` of the
/// graphical construction, replica `r` using clocks seeded by
/// `derive_seed(seed, Clocks, r)`.
pub fn graphical_marginals(
    spec: &ModelSpec<f64>,
    times: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<Vec<[f64; 3]>>> {
    let n = spec.n();
    let rates = Arc::new(UrnRates::new(spec));
    let horizon = spec.horizon();
    let per_replica: Vec<Vec<i8>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let table = build_clock_table_with(rates.clone(), horizon, derive_seed(seed, Domain::Clocks, r as u64))?;
            let initial = Configuration::new(table.initial_states(1), 0.0)?;
            let mut out = Vec::with_capacity(times.len() * n);
            for &t in times {
                for m in 0..n {
                    out.push(state_from_clocks(&table, &initial, m, t)?.code());
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(tally(&per_replica, times.len(), n, replicas))
}

fn tally(rows: &[Vec<i8>], nt: usize, n: usize, replicas: usize) -> Vec<Vec<[f64; 3]>> {
    let mut m = vec![vec![[0.0; 3]; n]; nt];
    for row in rows {
        for ti in 0..nt {
            for k in 0..n {
                m[ti][k][(row[ti * n + k] + 1) as usize] += 1.0;
            }
        }
    }
    m.iter_mut().flatten().flatten().for_each(|v| *v /= replicas as f64);
    m
}

/// Graphical construction against `simulate`: two-sample bands on every
/// per-urn marginal. Oracle deltas are added for `N ≤ 10` as information.
pub fn construction_report(
    spec: &ModelSpec<f64>,
    times: &[f64],
    replicas: usize,
    seed: u64,
    th: &Thresholds,
) -> Result<Report> {
    let n = spec.n();
    let ctx = Ctx::new(spec, seed);
    let store =
        run_ensemble(&EnsembleSpec::new(spec.clone(), replicas, seed, times.to_vec()).with_test_functions(vec![]))?;
    let sim_rows: Vec<Vec<i8>> =
        (0..replicas).map(|r| (0..times.len()).flat_map(|ti| store.codes(ti, r).to_vec()).collect()).collect();
    let sim = tally(&sim_rows, times.len(), n, replicas);
    let graph = graphical_marginals(spec, times, replicas, seed)?;
    let exact = if n <= crate::oracle::MAX_ORACLE_URNS {
        let q = build_generator(spec)?;
        let p0 = initial_distribution(spec)?;
        Some(
            times
                .iter()
                .map(|&t| Ok(marginals(&transient_distribution(&q, &p0, t)?, n)))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let r = replicas as f64;
    let names = ["removed", "susceptible", "infected"];
    let mut report = Report::new(ReportKind::Construction);
    for (ti, &t) in times.iter().enumerate() {
        for k in 0..n {
            for s in 0..3 {
                let (a, b) = (graph[ti][k][s], sim[ti][k][s]);
                let pooled = 0.5 * (a + b);
                let sigma = (pooled * (1.0 - pooled) * 2.0 / r).sqrt();
                let name = format!("{}[{}]", names[s], k + 1);
                report.push(
                    &ctx,
                    t,
                    format!("graphical_minus_sim_{name}"),
                    a - b,
                    Some(th.band_sigma * sigma),
                    Some(within(a - b, sigma, th.band_sigma)),
                );
                if let Some(ex) = &exact {
                    let p = ex[ti][k][s];
                    let sigma = (p * (1.0 - p) / r).sqrt();
                    report.push(
                        &ctx,
                        t,
                        format!("graphical_minus_exact_{name}"),
                        a - p,
                        Some(th.band_sigma * sigma),
                        None,
                    );
                }
            }
        }
    }
    Ok(report)
}

/// Law-of-large-numbers ladder: `|μ_t^N(f) − Σ_m ρ1(t, u_m) f(u_m) / N|`
/// against the density solved on `M = N` nodes with step `dt`.
pub fn lln_report(
    spec: &ModelSpec<f64>,
    ladder: &[usize],
    t: f64,
    replicas: usize,
    seed: u64,
    f: &TestFunction<f64>,
    dt: f64,
    th: &Thresholds,
) -> Result<Report> {
    if !(t > 0.0 && t <= spec.horizon()) {
        return Err(Error::Precondition(format!("report time {t} must lie in (0, {}]", spec.horizon())));
    }
    let mut report = Report::new(ReportKind::Lln);
    let mut rms = Vec::with_capacity(ladder.len());
    for &n in ladder {
        let model = spec.with_n(n)?.with_horizon(t)?;
        let ctx = Ctx::new(&model, seed);
        let density = solve_density(&model, &GridSpec::new(n, dt, t)?)?;
        let target = density.integral_rho1(density.last(), f);
        let store = run_ensemble(
            &EnsembleSpec::new(model, replicas, ladder_seed(seed, n), vec![t]).with_test_functions(vec![f.clone()]),
        )?;
        let err: Vec<f64> = store.mu[0][0].iter().map(|m| (m - target).abs()).collect();
        let r = (err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64).sqrt();
        report.push(&ctx, t, "target", target, None, None);
        report.push(&ctx, t, "mean_abs_error", mean(&err), None, None);
        report.push(&ctx, t, "sd_abs_error", if err.len() > 1 { variance(&err).sqrt() } else { 0.0 }, None, None);
        report.push(&ctx, t, "rms_error", r, None, None);
        rms.push(r);
    }
    let ctx = Ctx::new(spec, seed);
    if ladder.len() >= 2 && rms.iter().all(|r| *r > 0.0) {
        let x: Vec<f64> = ladder.iter().map(|n| *n as f64).collect();
        let slope = log_log_slope(&x, &rms);
        let ok = (slope - th.lln_slope).abs() <= th.lln_slope_tolerance;
        report.push(&ctx, t, "rms_slope", slope, Some(th.lln_slope_tolerance), Some(ok));
    } else {
        report.push(&ctx, t, "rms_slope_undefined", rms.iter().copied().fold(0.0, f64::max), None, None);
    }
    Ok(report)
}

/// `N · mean_{i≠j} Ĉov(I_t(i), I_t(j))` from `Var(Σ I) − Σ Var(I)`.
fn all_pairs_scaled_cov(store: &EnsembleStore, reps: std::ops::Range<usize>) -> f64 {
    let n = store.n;
    let len = reps.len() as f64;
    let mut total = Vec::with_capacity(reps.len());
    let mut per_urn = vec![0.0; n];
    for r in reps {
        let codes = store.codes(0, r);
        let mut y = 0.0;
        for (k, c) in codes.iter().enumerate() {
            let i = (*c == 1) as u8 as f64;
            y += i;
            per_urn[k] += i;
        }
        total.push(y);
    }
    let var_sum = variance(&total);
    let sum_var: f64 = per_urn.iter().map(|c| c / len * (1.0 - c / len) * len / (len - 1.0)).sum();
    let nf = n as f64;
    nf * (var_sum - sum_var) / (nf * (nf - 1.0))
}

/// Covariance decay across a ladder of `N` at time `t`.
///
/// The checked statistic is `N · |mean_{i≠j} Ĉov(I_t(i), I_t(j))|` with a
/// batch-means standard error; sampled-pair `N · mean |Ĉov|` and
/// `N · max |Ĉov|` are reported alongside their Monte Carlo noise floor.
pub fn covariance_decay_report(
    spec: &ModelSpec<f64>,
    ladder: &[usize],
    t: f64,
    replicas: usize,
    seed: u64,
    th: &Thresholds,
) -> Result<Report> {
    if replicas < 2 * th.cov_batches {
        return Err(Error::Precondition(format!("need at least {} replicas", 2 * th.cov_batches)));
    }
    let mut report = Report::new(ReportKind::Cov);
    let mut values = Vec::with_capacity(ladder.len());
    for &n in ladder {
        if n < 2 {
            return Err(Error::Precondition("covariance decay needs N ≥ 2".into()));
        }
        let model = spec.with_n(n)?.with_horizon(t.max(f64::MIN_POSITIVE))?;
        let ctx = Ctx::new(&model, seed);
        let store = run_ensemble(
            &EnsembleSpec::new(model, replicas, ladder_seed(seed, n), vec![t]).with_test_functions(vec![]),
        )?;
        let value = all_pairs_scaled_cov(&store, 0..replicas);
        let b = th.cov_batches;
        let size = replicas / b;
        let batches: Vec<f64> = (0..b).map(|k| all_pairs_scaled_cov(&store, k * size..(k + 1) * size)).collect();
        let se = variance(&batches).sqrt() / (b as f64).sqrt();
        let zero_check = (t == 0.0).then(|| within(value, se, th.band_sigma));
        report.push(&ctx, t, "n_cov_all_pairs", value, Some(th.band_sigma * se), zero_check);
        report.push(&ctx, t, "n_cov_all_pairs_se", se, None, None);

        let ind: Vec<Vec<f64>> =
            (0..n).map(|k| (0..replicas).map(|r| store.infected(0, r, k) as u8 as f64).collect()).collect();
        let mut rng = stream(derive_seed(seed, Domain::Tuples, n as u64), Domain::Tuples);
        let all = n * (n - 1) / 2;
        let picks = sample(&mut rng, all, th.cov_pairs.min(all)).into_vec();
        let (mut sum_abs, mut max_abs, mut floor) = (0.0, 0.0f64, 0.0);
        for p in &picks {
            let (i, j) = pair_from_index(*p, n);
            let c = covariance(&ind[i], &ind[j]).abs();
            sum_abs += c;
            max_abs = max_abs.max(c);
            floor += (variance(&ind[i]) * variance(&ind[j])).sqrt() * (2.0 / std::f64::consts::PI).sqrt()
                / (replicas as f64).sqrt();
        }
        let k = picks.len().max(1) as f64;
        let nf = n as f64;
        report.push(&ctx, t, "n_mean_abs_cov_sampled", nf * sum_abs / k, None, None);
        report.push(&ctx, t, "n_max_abs_cov_sampled", nf * max_abs, None, None);
        report.push(&ctx, t, "n_abs_noise_floor", nf * floor / k, None, None);
        values.push((value.abs(), se));
    }
    if values.len() >= 2 {
        let ctx = Ctx::new(spec, seed);
        let increasing = values.windows(2).all(|w| w[1].0 > w[0].0);
        let (first, last) = (values[0], values[values.len() - 1]);
        let rise = last.0 - first.0;
        let allowance = th.band_sigma * (first.1 * first.1 + last.1 * last.1).sqrt();
        let upward = increasing && rise > allowance;
        report.push(&ctx, t, "upward_trend", rise, Some(allowance), Some(!upward));
    }
    Ok(report)
}

/// Maps `0..N(N−1)/2` onto pairs `i < j` in row-major order.
fn pair_from_index(mut p: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    while p >= n - 1 - i {
        p -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + p)
}

/// Exact pair covariances of infected indicators at small `N` against
/// Monte Carlo, every pair inside its band.
pub fn covariance_anchor_report(
    spec: &ModelSpec<f64>,
    t: f64,
    replicas: usize,
    seed: u64,
    th: &Thresholds,
) -> Result<Report> {
    let n = spec.n();
    let ctx = Ctx::new(spec, seed);
    let q = build_generator(spec)?;
    let dist = transient_distribution(&q, &initial_distribution(spec)?, t)?;
    let mut queries = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            queries.push(MomentQuery::pair((i, Indicator::I), (j, Indicator::I)));
        }
    }
    let exact = moment_report(&dist, n, &queries)?;
    let store = run_ensemble(&EnsembleSpec::new(spec.clone(), replicas, seed, vec![t]).with_test_functions(vec![]))?;
    let ind: Vec<Vec<f64>> =
        (0..n).map(|k| (0..replicas).map(|r| store.infected(0, r, k) as u8 as f64).collect()).collect();
    let mut report = Report::new(ReportKind::Cov);
    for m in &exact {
        let (i, j) = (m.query.0[0].0, m.query.0[1].0);
        let (mi, mj) = (mean(&ind[i]), mean(&ind[j]));
        let d: Vec<f64> = ind[i].iter().zip(&ind[j]).map(|(a, b)| (a - mi) * (b - mj)).collect();
        let se = variance(&d).sqrt() / (replicas as f64).sqrt();
        let delta = covariance(&ind[i], &ind[j]) - m.covariance;
        report.push(&ctx, t, format!("exact_cov[{}]", m.query.label()), m.covariance, None, None);
        report.push(
            &ctx,
            t,
            format!("mc_minus_exact[{}]", m.query.label()),
            delta,
            Some(th.band_sigma * se),
            Some(within(delta, se, th.band_sigma)),
        );
    }
    Ok(report)
}

/// Fluctuation-field law at time `t` against the limiting covariance.
///
/// Checks `Var η_t(f)` and `Var β_t(g)` to the relative tolerance, the KS
/// p-value of `η_t(f)` standardized by the theoretical variance, and at
/// `t = 0` the finite-`N` initial variances `(1/N) Σ φ(1−φ) f²` within bands.
#[allow(clippy::too_many_arguments)]
pub fn clt_report(
    spec: &ModelSpec<f64>,
    t: f64,
    replicas: usize,
    seed: u64,
    f: &TestFunction<f64>,
    g: &TestFunction<f64>,
    fluct_m: usize,
    fluct_dt: f64,
    th: &Thresholds,
) -> Result<Report> {
    if !(t >= 0.0 && t <= spec.horizon()) {
        return Err(Error::Precondition(format!("report time {t} must lie in [0, {}]", spec.horizon())));
    }
    if replicas < 2 {
        return Err(Error::Precondition("clt report needs at least two replicas".into()));
    }
    let ctx = Ctx::new(spec, seed);
    let n = spec.n();
    let times = if t > 0.0 { vec![0.0, t] } else { vec![0.0] };
    let theory = if t > 0.0 {
        let model = spec.with_horizon(t)?;
        let problem = FluctuationProblem::new(&model, fluct_m, fluct_dt)?;
        let c0 = initial_covariance(&model, fluct_m)?;
        pair_covariance(&evolve_covariance(&problem, &c0, &[t])?[0], f, g)
    } else {
        pair_covariance(&initial_covariance(spec, fluct_m)?, f, g)
    };
    let model = spec.with_horizon(t.max(f64::MIN_POSITIVE))?;
    let store = run_ensemble(
        &EnsembleSpec::new(model, replicas, seed, times.clone()).with_test_functions(vec![f.clone(), g.clone()]),
    )?;
    let mut report = Report::new(ReportKind::Clt);

    let phi = spec.phi();
    let (fs, gs) = (f.at_sites(n), g.at_sites(n));
    let init = |w: &[f64]| -> f64 {
        (0..n)
            .map(|k| {
                let p = phi.value(spec.site(k));
                p * (1.0 - p) * w[k] * w[k]
            })
            .sum::<f64>()
            / n as f64
    };
    for (name, sample, exact) in
        [("var_eta0_f", &store.eta[0][0], init(&fs)), ("var_beta0_g", &store.beta[0][1], init(&gs))]
    {
        let v = second_moment(sample, &store);
        let se = variance_standard_error(sample);
        report.push(&ctx, 0.0, format!("{name}_expected"), exact, None, None);
        report.push(&ctx, 0.0, name, v, Some(th.band_sigma * se), Some(within(v - exact, se, th.band_sigma)));
    }

    let ti = times.len() - 1;
    let eta = &store.eta[ti][0];
    let beta = &store.beta[ti][1];
    let emp = [second_moment(eta, &store), covariance(eta, beta), second_moment(beta, &store)];
    let th_vals = [theory[0][0], theory[0][1], theory[1][1]];
    let names = ["var_eta_f", "cov_eta_beta", "var_beta_g"];
    for k in 0..3 {
        report.push(&ctx, t, format!("{}_theory", names[k]), th_vals[k], None, None);
        report.push(&ctx, t, names[k], emp[k], None, None);
        if th_vals[k].abs() >= th.degenerate_variance {
            let rel = emp[k] / th_vals[k] - 1.0;
            let checked = (k != 1).then(|| rel.abs() <= th.clt_relative_tolerance);
            report.push(&ctx, t, format!("{}_relative_error", names[k]), rel, Some(th.clt_relative_tolerance), checked);
        }
    }
    if th_vals[0] < th.degenerate_variance {
        report.push(&ctx, t, "ks_degenerate", th_vals[0], Some(th.degenerate_variance), None);
    } else {
        let sd = th_vals[0].sqrt();
        let z: Vec<f64> = eta.iter().map(|v| v / sd).collect();
        let d = ks_statistic_normal(&z);
        let p = kolmogorov_p_value(d, z.len());
        report.push(&ctx, t, "ks_statistic", d, None, None);
        report.push(&ctx, t, "ks_p_value", p, Some(th.ks_min_p), Some(p > th.ks_min_p));
    }
    Ok(report)
}

/// Variance about the centering: `Σ x² / R` under exact centering,
/// otherwise the unbiased sample variance.
fn second_moment(x: &[f64], store: &EnsembleStore) -> f64 {
    match store.centering {
        super::ensemble::Centering::Exact => x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64,
        super::ensemble::Centering::Ensemble => variance(x),
    }
}

/// Pathwise martingale residuals `M_t(f)` and compensators `⟨M⟩_t(f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynkinSample {
    pub martingale: Vec<f64>,
    pub quadratic_variation: Vec<f64>,
}

/// Evaluates, per replica,
/// `M_t = β_t(f) − β_0(f) − ∫_0^t (∂_s + L^N) β_s(f) ds`.
///
/// The generator term `N^{-1/2} Σ_i f_i S_i κ_i` with
/// `κ_i = (1/N) Σ_j λ(i/N, j/N) I_j` is integrated exactly between events;
/// the `∂_s` term is the ensemble mean of the same integrand on a grid of
/// step `≈ dt` with the trapezoid rule. `⟨M⟩_t = (1/N²) ∫ Σ_i f_i² S_i κ_i N ds`.
pub fn dynkin_residuals(
    spec: &ModelSpec<f64>,
    store: &EnsembleStore,
    f: &TestFunction<f64>,
    t: f64,
    dt: f64,
) -> Result<DynkinSample> {
    let trajectories =
        store.trajectories().ok_or_else(|| Error::Precondition("the ensemble was run without event logs".into()))?;
    let (t0, tt) = match (store.time_index(0.0), store.time_index(t)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Precondition(format!("the ensemble needs snapshots at 0 and {t}"))),
    };
    let n = spec.n();
    let rates = UrnRates::new(spec);
    let fv = f.at_sites(n);
    let steps = ((t / dt).round() as usize).max(1);
    let grid: Vec<f64> = (0..=steps).map(|k| t * k as f64 / steps as f64).collect();

    let per: Vec<(f64, f64, Vec<f64>)> = trajectories
        .par_iter()
        .map(|tr| {
            let mut state = SimState::new(tr.initial.clone(), &rates);
            let integrands = |st: &SimState| -> (f64, f64) {
                let p = st.pressure();
                st.config().states().iter().enumerate().fold((0.0, 0.0), |(h, q), (k, s)| {
                    if s.is_susceptible() {
                        let rate = p.get(k);
                        (h + fv[k] * rate, q + fv[k] * fv[k] * rate)
                    } else {
                        (h, q)
                    }
                })
            };
            let (mut gen, mut qv) = (0.0, 0.0);
            let mut on_grid = vec![0.0; grid.len()];
            let mut next = 0;
            let mut now = 0.0;
            let mut events = tr.events.iter().take_while(|e| e.time <= t).peekable();
            loop {
                let end = events.peek().map_or(t, |e| e.time);
                let (h, q) = integrands(&state);
                gen += h * (end - now);
                qv += q * (end - now);
                while next < grid.len() && (grid[next] < end || (events.peek().is_none() && grid[next] <= end)) {
                    on_grid[next] = h;
                    next += 1;
                }
                match events.next() {
                    Some(e) => {
                        state.apply(e, &rates)?;
                        now = e.time;
                    }
                    None => break,
                }
            }
            Ok((gen, qv, on_grid))
        })
        .collect::<Result<_>>()?;

    let r = per.len() as f64;
    let mean_grid: Vec<f64> = (0..grid.len()).map(|k| per.iter().map(|p| p.2[k]).sum::<f64>() / r).collect();
    let drift: f64 = (0..steps).map(|k| 0.5 * (mean_grid[k] + mean_grid[k + 1]) * (grid[k + 1] - grid[k])).sum();
    let (ms0, mst) = (store.mean_susceptible(t0), store.mean_susceptible(tt));
    let scale = (n as f64).sqrt();
    let mut martingale = Vec::with_capacity(per.len());
    let mut quadratic_variation = Vec::with_capacity(per.len());
    for (rep, (gen, qv, _)) in per.iter().enumerate() {
        let (c0, ct) = (store.codes(t0, rep), store.codes(tt, rep));
        let mut jump = 0.0;
        for k in 0..n {
            let s0 = (c0[k] == 0) as u8 as f64;
            let st = (ct[k] == 0) as u8 as f64;
            jump += fv[k] * ((st - mst[k]) - (s0 - ms0[k]));
        }
        martingale.push((jump + gen - drift) / scale);
        quadratic_variation.push(qv / n as f64);
    }
    Ok(DynkinSample { martingale, quadratic_variation })
}

/// Dynkin residual and quadratic-variation identity at time `t`.
pub fn dynkin_report(
    spec: &ModelSpec<f64>,
    t: f64,
    replicas: usize,
    seed: u64,
    f: &TestFunction<f64>,
    th: &Thresholds,
) -> Result<Report> {
    if !(t > 0.0 && t <= spec.horizon()) {
        return Err(Error::Precondition(format!("report time {t} must lie in (0, {}]", spec.horizon())));
    }
    if replicas < 2 {
        return Err(Error::Precondition("dynkin report needs at least two replicas".into()));
    }
    let model = spec.with_horizon(t)?;
    let ctx = Ctx::new(&model, seed);
    let store = run_ensemble(
        &EnsembleSpec::new(model.clone(), replicas, seed, vec![0.0, t]).with_test_functions(vec![]).with_events(),
    )?;
    let sample = dynkin_residuals(&model, &store, f, t, th.dynkin_dt)?;
    let m = &sample.martingale;
    let avg = mean(m);
    let var = variance(m);
    let se = var.sqrt() / (m.len() as f64).sqrt();
    let qv = mean(&sample.quadratic_variation);
    let mut report = Report::new(ReportKind::Dynkin);
    report.push(&ctx, t, "martingale_mean", avg, Some(th.band_sigma * se), Some(within(avg, se, th.band_sigma)));
    report.push(&ctx, t, "martingale_se", se, None, None);
    report.push(&ctx, t, "max_abs_martingale", m.iter().fold(0.0f64, |a, v| a.max(v.abs())), None, None);
    report.push(&ctx, t, "martingale_variance", var, None, None);
    report.push(&ctx, t, "mean_quadratic_variation", qv, None, None);
    if qv >= th.degenerate_variance {
        let ratio = var / qv;
        let ok = ratio >= th.qv_ratio_low && ratio <= th.qv_ratio_high;
        report.push(&ctx, t, "variance_qv_ratio", ratio, Some(th.qv_ratio_high), Some(ok));
    } else {
        report.push(&ctx, t, "qv_degenerate", qv, Some(th.degenerate_variance), None);
    }
    Ok(report)
}
