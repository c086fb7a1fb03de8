//! Deterministic density limit on the node grid `u_m = m/M`.
//!
//! Solves
//!
//! ```text
//! dρ1/dt = −ψ ρ1 + ρ0 κ,   dρ0/dt = −ρ0 κ,   κ(u) = (1/M) Σ_q λ(u, u_q) ρ1(u_q)
//! ```
//!
//! from `ρ1 = φ`, `ρ0 = 1 − φ` with classical fixed-step RK4.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, NodeKernel, TestFunction};
use crate::scalar::Real;

/// Admissible overshoot of the density bounds.
pub const BOUND_TOLERANCE: f64 = 1e-8;

/// Node count, requested step and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    m: usize,
    dt: T,
    horizon: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(m: usize, dt: T, horizon: T) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("grid needs at least one node".into()));
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::Domain(format!("time step {dt} must be positive")));
        }
        if !(horizon >= T::zero()) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon {horizon} must be finite and nonnegative")));
        }
        if dt > horizon && horizon > T::zero() {
            return Err(Error::Domain(format!("time step {dt} exceeds horizon {horizon}")));
        }
        Ok(Self { m, dt, horizon })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// Number of steps `ceil(T / dt)`.
    pub fn steps(&self) -> usize {
        if self.horizon == T::zero() {
            return 0;
        }
        let ratio = (self.horizon / self.dt).as_f64();
        // absorb rounding in T/dt before taking the ceiling
        let r = ratio.round();
        if (ratio - r).abs() < 1e-9 * r.max(1.0) {
            r as usize
        } else {
            ratio.ceil() as usize
        }
    }

    /// Step actually used, `T / steps`, so the last time equals `T`.
    pub fn step(&self) -> T {
        match self.steps() {
            0 => T::zero(),
            k => self.horizon / T::from_count(k),
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        let mt = T::from_count(self.m);
        (1..=self.m).map(|k| T::from_count(k) / mt).collect()
    }

    pub fn time(&self, k: usize) -> T {
        if k == self.steps() {
            self.horizon
        } else {
            self.step() * T::from_count(k)
        }
    }
}

/// Densities `(ρ1, ρ0)` on the node grid at every step time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<T> {
    nodes: Vec<T>,
    times: Vec<T>,
    rho1: Vec<Vec<T>>,
    rho0: Vec<Vec<T>>,
}

impl<T: Real> DensityField<T> {
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn rho1(&self, k: usize) -> &[T] {
        &self.rho1[k]
    }

    pub fn rho0(&self, k: usize) -> &[T] {
        &self.rho0[k]
    }

    pub fn last(&self) -> usize {
        self.times.len() - 1
    }

    /// Index of the stored time equal to `t` up to rounding, if any.
    pub fn index_of(&self, t: T) -> Option<usize> {
        let scale = self.times.last().copied().unwrap_or(T::one()).abs().max(T::one());
        let tol = scale * T::lit(1e-9).max(T::eps() * T::lit(64.0));
        let k = self.times.partition_point(|x| *x < t - tol);
        (k < self.times.len() && (self.times[k] - t).abs() <= tol).then_some(k)
    }

    /// `(1/M) Σ_m ρ1(t_k, u_m) f(u_m)`.
    pub fn integral_rho1(&self, k: usize, f: &TestFunction<T>) -> T {
        node_sum(&self.nodes, &self.rho1[k], f)
    }

    /// `(1/M) Σ_m ρ0(t_k, u_m) f(u_m)`.
    pub fn integral_rho0(&self, k: usize, f: &TestFunction<T>) -> T {
        node_sum(&self.nodes, &self.rho0[k], f)
    }

    /// CSV with columns `time,node_u,rho1,rho0`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "node_u", "rho1", "rho0"])?;
        for (k, t) in self.times.iter().enumerate() {
            for (m, u) in self.nodes.iter().enumerate() {
                w.serialize((t.as_f64(), u.as_f64(), self.rho1[k][m].as_f64(), self.rho0[k][m].as_f64()))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn node_sum<T: Real>(nodes: &[T], rho: &[T], f: &TestFunction<T>) -> T {
    let s = nodes.iter().zip(rho).fold(T::zero(), |a, (u, r)| a + *r * f.value(*u));
    s / T::from_count(nodes.len())
}

/// Right-hand side of the density system on the node grid.
pub struct DensityRhs<T> {
    psi: Vec<T>,
    kernel: NodeKernel<T>,
}

impl<T: Real> DensityRhs<T> {
    pub fn new(spec: &ModelSpec<T>, m: usize) -> Self {
        Self { psi: spec.psi().profile().sample_nodes(m), kernel: spec.lambda().on_nodes(m) }
    }

    pub fn kernel(&self) -> &NodeKernel<T> {
        &self.kernel
    }

    pub fn psi(&self) -> &[T] {
        &self.psi
    }

    /// `κ(u_m) = (1/M) Σ_q λ(u_m, u_q) ρ1(u_q)`.
    pub fn infection_rate(&self, rho1: &[T], out: &mut [T]) {
        self.kernel.apply(rho1, out);
    }

    /// Writes `(dρ1/dt, dρ0/dt)`; `kappa` is scratch space.
    pub fn eval(&self, rho1: &[T], rho0: &[T], kappa: &mut [T], d1: &mut [T], d0: &mut [T]) {
        self.kernel.apply(rho1, kappa);
        for m in 0..rho1.len() {
            let inf = rho0[m] * kappa[m];
            d1[m] = -self.psi[m] * rho1[m] + inf;
            d0[m] = -inf;
        }
    }
}

fn check_bounds<T: Real>(t: T, rho1: &[T], rho0: &[T]) -> Result<()> {
    let tol = T::lit(BOUND_TOLERANCE);
    for (m, (a, b)) in rho1.iter().zip(rho0).enumerate() {
        if !(*a >= -tol && *b >= -tol && *a + *b <= T::one() + tol) {
            return Err(Error::Bound(format!("densities ({a}, {b}) at node {} and t = {t} leave [0, 1]", m + 1)));
        }
    }
    Ok(())
}

/// Fixed-step RK4 solution on `grid`, storing every step.
pub fn solve_density<T: Real>(spec: &ModelSpec<T>, grid: &GridSpec<T>) -> Result<DensityField<T>> {
    let m = grid.m();
    let rhs = DensityRhs::new(spec, m);
    let phi = spec.phi().profile().sample_nodes(m);
    let mut r1 = phi.clone();
    let mut r0: Vec<T> = phi.iter().map(|p| T::one() - *p).collect();
    let steps = grid.steps();
    let h = grid.step();
    let half = h / T::lit(2.0);
    let sixth = h / T::lit(6.0);
    let mut times = Vec::with_capacity(steps + 1);
    let mut rho1 = Vec::with_capacity(steps + 1);
    let mut rho0 = Vec::with_capacity(steps + 1);
    times.push(T::zero());
    rho1.push(r1.clone());
    rho0.push(r0.clone());
    let mut kappa = vec![T::zero(); m];
    let mut k1 = (vec![T::zero(); m], vec![T::zero(); m]);
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut s1 = vec![T::zero(); m];
    let mut s0 = vec![T::zero(); m];
    for step in 1..=steps {
        rhs.eval(&r1, &r0, &mut kappa, &mut k1.0, &mut k1.1);
        for q in 0..m {
            s1[q] = r1[q] + half * k1.0[q];
            s0[q] = r0[q] + half * k1.1[q];
        }
        rhs.eval(&s1, &s0, &mut kappa, &mut k2.0, &mut k2.1);
        for q in 0..m {
            s1[q] = r1[q] + half * k2.0[q];
            s0[q] = r0[q] + half * k2.1[q];
        }
        rhs.eval(&s1, &s0, &mut kappa, &mut k3.0, &mut k3.1);
        for q in 0..m {
            s1[q] = r1[q] + h * k3.0[q];
            s0[q] = r0[q] + h * k3.1[q];
        }
        rhs.eval(&s1, &s0, &mut kappa, &mut k4.0, &mut k4.1);
        let two = T::lit(2.0);
        for q in 0..m {
            r1[q] += sixth * (k1.0[q] + two * k2.0[q] + two * k3.0[q] + k4.0[q]);
            r0[q] += sixth * (k1.1[q] + two * k2.1[q] + two * k3.1[q] + k4.1[q]);
        }
        let t = grid.time(step);
        check_bounds(t, &r1, &r0)?;
        times.push(t);
        rho1.push(r1.clone());
        rho0.push(r0.clone());
    }
    Ok(DensityField { nodes: grid.nodes(), times, rho1, rho0 })
}

/// Max over interior times and nodes of |centered difference − right-hand side|.
pub fn density_residual<T: Real>(field: &DensityField<T>, spec: &ModelSpec<T>, grid: &GridSpec<T>) -> Result<T> {
    if field.len() < 3 {
        return Err(Error::Precondition(format!("residual needs at least 3 time points, got {}", field.len())));
    }
    if field.m() != grid.m() {
        return Err(Error::Dimension { expected: grid.m(), actual: field.m() });
    }
    if field.len() != grid.steps() + 1 {
        return Err(Error::Dimension { expected: grid.steps() + 1, actual: field.len() });
    }
    let m = grid.m();
    let rhs = DensityRhs::new(spec, m);
    let mut kappa = vec![T::zero(); m];
    let mut d1 = vec![T::zero(); m];
    let mut d0 = vec![T::zero(); m];
    let mut worst = T::zero();
    for k in 1..field.len() - 1 {
        let span = field.times[k + 1] - field.times[k - 1];
        rhs.eval(&field.rho1[k], &field.rho0[k], &mut kappa, &mut d1, &mut d0);
        for q in 0..m {
            let c1 = (field.rho1[k + 1][q] - field.rho1[k - 1][q]) / span - d1[q];
            let c0 = (field.rho0[k + 1][q] - field.rho0[k - 1][q]) / span - d0[q];
            worst = worst.max(c1.abs()).max(c0.abs());
        }
    }
    Ok(worst)
}
