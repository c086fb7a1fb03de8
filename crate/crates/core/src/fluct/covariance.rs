use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fluct::panel::{apply_drift, panel_at, OperatorPanel};
use crate::hydro::{solve_density, DensityField, GridSpec};
use crate::model::{ModelSpec, TestFunction};
use crate::scalar::Real;

/// Tolerance on negative eigenvalues of a covariance matrix.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Density solve at half the covariance step, so the RK4 stage times of the
/// covariance and propagator equations are density grid times.
#[derive(Debug, Clone)]
pub struct FluctuationProblem<T> {
    spec: ModelSpec<T>,
    density: DensityField<T>,
    steps: usize,
}

impl<T: Real> FluctuationProblem<T> {
    /// `M` nodes, step `dt` (rounded to `T / ceil(T/dt)`), horizon `spec.horizon()`.
    pub fn new(spec: &ModelSpec<T>, m: usize, dt: T) -> Result<Self> {
        let horizon = spec.horizon();
        let outer = GridSpec::new(m, dt, horizon)?;
        let steps = outer.steps();
        let inner_dt = if steps == 0 { dt } else { horizon / T::from_count(2 * steps) };
        let density = solve_density(spec, &GridSpec::new(m, inner_dt, horizon)?)?;
        debug_assert_eq!(density.len(), 2 * steps + 1);
        Ok(Self { spec: spec.clone(), density, steps })
    }

    pub fn m(&self) -> usize {
        self.density.m()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Covariance step `h`.
    pub fn step(&self) -> T {
        if self.steps == 0 {
            T::zero()
        } else {
            self.spec.horizon() / T::from_count(self.steps)
        }
    }

    pub fn density(&self) -> &DensityField<T> {
        &self.density
    }

    pub fn spec(&self) -> &ModelSpec<T> {
        &self.spec
    }

    /// Time of covariance step `k`.
    pub fn time(&self, k: usize) -> T {
        self.density.times()[2 * k]
    }

    /// Covariance step index of a grid time.
    pub fn step_index(&self, t: T) -> Result<usize> {
        match self.density.index_of(t) {
            Some(j) if j % 2 == 0 => Ok(j / 2),
            _ => Err(Error::Precondition(format!("t = {t} is not a covariance grid time"))),
        }
    }

    /// Panel at half-step index `j` (time `j h / 2`).
    pub fn panel(&self, j: usize) -> OperatorPanel<T> {
        panel_at(&self.density, &self.spec, j, self.spec.lambda().on_nodes(self.m()))
    }
}

/// Covariance of the weight vectors `(w_η, w_β)` at one time, with
/// `Cov(η(f), β(g)) = (1/M²) fᵀ C_ηβ g`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState<T: Real> {
    t: T,
    matrix: DMatrix<T>,
}

/// Block selector for exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    EtaEta,
    EtaBeta,
    BetaBeta,
}

impl Block {
    pub fn label(self) -> &'static str {
        match self {
            Block::EtaEta => "ee",
            Block::EtaBeta => "eb",
            Block::BetaBeta => "bb",
        }
    }
}

impl<T: Real> CovarianceState<T> {
    pub fn new(t: T, matrix: DMatrix<T>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || !matrix.nrows().is_multiple_of(2) {
            return Err(Error::Dimension { expected: matrix.nrows() - matrix.nrows() % 2, actual: matrix.ncols() });
        }
        Ok(Self { t, matrix })
    }

    pub fn time(&self) -> T {
        self.t
    }

    pub fn m(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn block(&self, b: Block) -> DMatrix<T> {
        let m = self.m();
        let (r, c) = match b {
            Block::EtaEta => (0, 0),
            Block::EtaBeta => (0, m),
            Block::BetaBeta => (m, m),
        };
        self.matrix.view((r, c), (m, m)).into_owned()
    }

    /// `max |C − Cᵀ|`.
    pub fn symmetry_error(&self) -> T {
        let n = self.matrix.nrows();
        let mut worst = T::zero();
        for a in 0..n {
            for b in a + 1..n {
                worst = worst.max((self.matrix[(a, b)] - self.matrix[(b, a)]).abs());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> T {
        let sym = (&self.matrix + self.matrix.transpose()) * T::lit(0.5);
        SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(T::max_value().unwrap_or(T::one()), |a, b| a.min(b))
    }

    /// Rows `time,block,row_u,col_u,value` for the three distinct blocks.
    pub fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let m = self.m();
        let mt = T::from_count(m);
        for b in [Block::EtaEta, Block::EtaBeta, Block::BetaBeta] {
            let blk = self.block(b);
            for r in 0..m {
                for c in 0..m {
                    let u = (T::from_count(r + 1) / mt).as_f64();
                    let v = (T::from_count(c + 1) / mt).as_f64();
                    w.serialize((self.t.as_f64(), b.label(), u, v, blk[(r, c)].as_f64()))?;
                }
            }
        }
        Ok(())
    }
}

/// Writes a covariance trajectory with header `time,block,row_u,col_u,value`.
pub fn write_covariance_csv<T: Real, W: Write>(states: &[CovarianceState<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "block", "row_u", "col_u", "value"])?;
    for s in states {
        s.write_csv_rows(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

/// `C(0) = [[D, −D], [−D, D]]`, `D = M diag(φ(u_m)(1 − φ(u_m)))`.
pub fn initial_covariance<T: Real>(spec: &ModelSpec<T>, m: usize) -> Result<CovarianceState<T>> {
    if m == 0 {
        return Err(Error::Domain("grid needs at least one node".into()));
    }
    let mt = T::from_count(m);
    let phi = spec.phi().profile().sample_nodes(m);
    let mut c = DMatrix::zeros(2 * m, 2 * m);
    for (a, p) in phi.iter().enumerate() {
        let d = mt * *p * (T::one() - *p);
        c[(a, a)] = d;
        c[(a, m + a)] = -d;
        c[(m + a, a)] = -d;
        c[(m + a, m + a)] = d;
    }
    CovarianceState::new(T::zero(), c)
}

fn lyapunov_rhs<T: Real>(panel: &OperatorPanel<T>, c: &DMatrix<T>, scratch: &mut DMatrix<T>, out: &mut DMatrix<T>) {
    apply_drift(panel, c, scratch);
    out.copy_from(scratch);
    *out += scratch.transpose();
    let m = panel.m();
    let mt = T::from_count(m);
    for a in 0..m {
        let al = mt * panel.alpha2[a];
        out[(a, a)] += mt * panel.b2[a] + al;
        out[(a, m + a)] -= al;
        out[(m + a, a)] -= al;
        out[(m + a, m + a)] += al;
    }
}

/// RK4 solution of `dC/dt = D C + C Dᵀ + Q` from `c0` at time 0, returning
/// the states at `record_times` (grid times, sorted). Each recorded state is
/// checked to be symmetric positive semidefinite.
pub fn evolve_covariance<T: Real>(
    problem: &FluctuationProblem<T>,
    c0: &CovarianceState<T>,
    record_times: &[T],
) -> Result<Vec<CovarianceState<T>>> {
    let m = problem.m();
    if c0.m() != m {
        return Err(Error::Dimension { expected: m, actual: c0.m() });
    }
    if c0.time() != T::zero() {
        return Err(Error::Precondition("initial covariance must be at t = 0".into()));
    }
    let targets: Vec<usize> = record_times.iter().map(|t| problem.step_index(*t)).collect::<Result<_>>()?;
    if targets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Precondition("record times must be sorted".into()));
    }
    let h = problem.step();
    let half = h / T::lit(2.0);
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    let n = 2 * m;
    let mut c = c0.matrix().clone();
    let mut k1 = DMatrix::zeros(n, n);
    let mut k2 = DMatrix::zeros(n, n);
    let mut k3 = DMatrix::zeros(n, n);
    let mut k4 = DMatrix::zeros(n, n);
    let mut scratch = DMatrix::zeros(n, n);
    let mut out = Vec::with_capacity(targets.len());
    let mut next = targets.iter().peekable();
    let last = targets.last().copied().unwrap_or(0);
    let mut p_start = problem.panel(0);
    for k in 0..=last {
        while next.peek().is_some_and(|t| **t == k) {
            let state = CovarianceState::new(problem.time(k), c.clone())?;
            check_psd(&state)?;
            out.push(state);
            next.next();
        }
        if k == last {
            break;
        }
        let p_mid = problem.panel(2 * k + 1);
        let p_end = problem.panel(2 * k + 2);
        lyapunov_rhs(&p_start, &c, &mut scratch, &mut k1);
        let s = &c + &k1 * half;
        lyapunov_rhs(&p_mid, &s, &mut scratch, &mut k2);
        let s = &c + &k2 * half;
        lyapunov_rhs(&p_mid, &s, &mut scratch, &mut k3);
        let s = &c + &k3 * h;
        lyapunov_rhs(&p_end, &s, &mut scratch, &mut k4);
        c += (&k1 + &k2 * two + &k3 * two + &k4) * sixth;
        // remove rounding asymmetry
        let sym = (&c + c.transpose()) * T::lit(0.5);
        c = sym;
        p_start = p_end;
    }
    Ok(out)
}

fn check_psd<T: Real>(state: &CovarianceState<T>) -> Result<()> {
    let min = state.min_eigenvalue();
    if min < -T::lit(PSD_TOLERANCE) {
        return Err(Error::Consistency(format!("covariance at t = {} has eigenvalue {min}", state.time())));
    }
    Ok(())
}

/// Propagator `Υ(t, s)` solving `dΥ/dt = D(t) Υ`, `Υ(s, s) = I`, for grid times `s ≤ t`.
pub fn propagate<T: Real>(problem: &FluctuationProblem<T>, s: T, t: T) -> Result<DMatrix<T>> {
    let ks = problem.step_index(s)?;
    let kt = problem.step_index(t)?;
    if ks > kt {
        return Err(Error::Precondition("propagator needs s ≤ t".into()));
    }
    let n = 2 * problem.m();
    let h = problem.step();
    let half = h / T::lit(2.0);
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    let mut y = DMatrix::identity(n, n);
    let mut k1 = DMatrix::zeros(n, n);
    let mut k2 = DMatrix::zeros(n, n);
    let mut k3 = DMatrix::zeros(n, n);
    let mut k4 = DMatrix::zeros(n, n);
    let mut p_start = problem.panel(2 * ks);
    for k in ks..kt {
        let p_mid = problem.panel(2 * k + 1);
        let p_end = problem.panel(2 * k + 2);
        apply_drift(&p_start, &y, &mut k1);
        apply_drift(&p_mid, &(&y + &k1 * half), &mut k2);
        apply_drift(&p_mid, &(&y + &k2 * half), &mut k3);
        apply_drift(&p_end, &(&y + &k3 * h), &mut k4);
        y += (&k1 + &k2 * two + &k3 * two + &k4) * sixth;
        p_start = p_end;
    }
    Ok(y)
}

/// `[[Var η(f), Cov(η(f), β(g))], [Cov(η(f), β(g)), Var β(g)]]`.
pub fn pair_covariance<T: Real>(c: &CovarianceState<T>, f: &TestFunction<T>, g: &TestFunction<T>) -> [[T; 2]; 2] {
    let m = c.m();
    let wf = nalgebra::DVector::from_vec(f.profile().sample_nodes(m));
    let wg = nalgebra::DVector::from_vec(g.profile().sample_nodes(m));
    let scale = T::one() / T::from_count(m * m);
    let mat = c.matrix();
    let ee = mat.view((0, 0), (m, m));
    let eb = mat.view((0, m), (m, m));
    let bb = mat.view((m, m), (m, m));
    let var_eta = wf.dot(&(ee * &wf)) * scale;
    let cov = wf.dot(&(eb * &wg)) * scale;
    let var_beta = wg.dot(&(bb * &wg)) * scale;
    [[var_eta, cov], [cov, var_beta]]
}

/// CSV with header `time,var_eta_f,cov_eta_beta,var_beta_g`.
pub fn write_pair_report<T: Real, W: Write>(
    states: &[CovarianceState<T>],
    f: &TestFunction<T>,
    g: &TestFunction<T>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "var_eta_f", "cov_eta_beta", "var_beta_g"])?;
    for s in states {
        let p = pair_covariance(s, f, g);
        w.serialize((s.time().as_f64(), p[0][0].as_f64(), p[0][1].as_f64(), p[1][1].as_f64()))?;
    }
    w.flush()?;
    Ok(())
}
