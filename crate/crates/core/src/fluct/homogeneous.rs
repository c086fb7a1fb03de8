//! Spatially homogeneous reduction: `λ ≡ λ0`, `ψ ≡ 1`, `φ ≡ φ0`.

use crate::error::{Error, Result};
use crate::hydro::GridSpec;
use crate::scalar::Real;

/// `(t, i_t, s_t)` along the fixed-step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousTrajectory<T> {
    pub times: Vec<T>,
    pub infected: Vec<T>,
    pub susceptible: Vec<T>,
}

/// `(t, Σ_t)` with `Σ_t = Cov(V_t)` for `V = (η(1), β(1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousCovariance<T> {
    pub times: Vec<T>,
    pub sigma: Vec<[[T; 2]; 2]>,
}

fn check<T: Real>(lambda0: T, phi0: T) -> Result<()> {
    if !(lambda0 >= T::zero()) || !lambda0.is_finite() {
        return Err(Error::Domain(format!("λ0 = {lambda0} must be finite and nonnegative")));
    }
    if !(phi0 >= T::zero() && phi0 <= T::one()) {
        return Err(Error::Domain(format!("φ0 = {phi0} must lie in [0, 1]")));
    }
    Ok(())
}

type State<T> = [T; 5];

fn rhs<T: Real>(lambda0: T, x: &State<T>) -> State<T> {
    let [i, s, a, b, c] = *x;
    let inf = lambda0 * i * s;
    // A = [[λ0 s − 1, λ0 i], [−λ0 s, −λ0 i]]
    let a11 = lambda0 * s - T::one();
    let a12 = lambda0 * i;
    let a21 = -lambda0 * s;
    let a22 = -lambda0 * i;
    // Σ = [[a, b], [b, c]]; AΣ + ΣAᵀ + B
    let da = (a11 * a + a12 * b) * T::lit(2.0) + i + inf;
    let db = a11 * b + a12 * c + a21 * a + a22 * b - inf;
    let dc = (a21 * b + a22 * c) * T::lit(2.0) + inf;
    [-i + inf, -inf, da, db, dc]
}

fn integrate<T: Real>(lambda0: T, phi0: T, horizon: T, dt: T) -> Result<(Vec<T>, Vec<State<T>>)> {
    check(lambda0, phi0)?;
    let grid = GridSpec::new(1, dt, horizon)?;
    let steps = grid.steps();
    let h = grid.step();
    let v = phi0 * (T::one() - phi0);
    let mut x: State<T> = [phi0, T::one() - phi0, v, -v, v];
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(T::zero());
    states.push(x);
    let half = h / T::lit(2.0);
    let add = |x: &State<T>, k: &State<T>, s: T| -> State<T> { std::array::from_fn(|n| x[n] + k[n] * s) };
    for step in 1..=steps {
        let k1 = rhs(lambda0, &x);
        let k2 = rhs(lambda0, &add(&x, &k1, half));
        let k3 = rhs(lambda0, &add(&x, &k2, half));
        let k4 = rhs(lambda0, &add(&x, &k3, h));
        let two = T::lit(2.0);
        x = std::array::from_fn(|n| x[n] + (k1[n] + two * k2[n] + two * k3[n] + k4[n]) * h / T::lit(6.0));
        times.push(grid.time(step));
        states.push(x);
    }
    Ok((times, states))
}

/// RK4 for `di/dt = −i + λ0 i s`, `ds/dt = −λ0 i s` from `(φ0, 1 − φ0)`.
pub fn classic_sir_solve<T: Real>(lambda0: T, phi0: T, horizon: T, dt: T) -> Result<HomogeneousTrajectory<T>> {
    let (times, states) = integrate(lambda0, phi0, horizon, dt)?;
    Ok(HomogeneousTrajectory {
        times,
        infected: states.iter().map(|x| x[0]).collect(),
        susceptible: states.iter().map(|x| x[1]).collect(),
    })
}

/// RK4 for `dΣ/dt = AΣ + ΣAᵀ + B`, jointly with the mean equations, where
/// `A = [[λ0 s − 1, λ0 i], [−λ0 s, −λ0 i]]`,
/// `B = [[i + λ0 i s, −λ0 i s], [−λ0 i s, λ0 i s]]` and
/// `Σ(0) = φ0(1 − φ0) [[1, −1], [−1, 1]]`.
pub fn classic_clt_covariance<T: Real>(lambda0: T, phi0: T, horizon: T, dt: T) -> Result<HomogeneousCovariance<T>> {
    let (times, states) = integrate(lambda0, phi0, horizon, dt)?;
    Ok(HomogeneousCovariance { times, sigma: states.iter().map(|x| [[x[2], x[3]], [x[3], x[4]]]).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    // reference values from an independent adaptive integration at rtol = atol = 1e-13
    const I_REF: f64 = 0.26492961820810323;
    const S_REF: f64 = 0.4917651187069319;
    const SIGMA_REF: [f64; 3] = [0.48307892975774513, -0.5477414257300186, 0.9080894402035969];

    #[test]
    fn disease_free_point() {
        let tr = classic_sir_solve(2.0_f64, 0.0, 3.0, 0.01).unwrap();
        assert!(tr.infected.iter().all(|v| *v == 0.0) && tr.susceptible.iter().all(|v| *v == 1.0));
        let cv = classic_clt_covariance(2.0_f64, 0.0, 3.0, 0.01).unwrap();
        assert!(cv.sigma.iter().all(|s| s.iter().flatten().all(|v| *v == 0.0)));
    }

    #[test]
    fn pure_recovery_closed_forms() {
        let tr = classic_sir_solve(0.0_f64, 0.3, 2.0, 1e-3).unwrap();
        let cv = classic_clt_covariance(0.0_f64, 0.3, 2.0, 1e-3).unwrap();
        for (k, t) in tr.times.iter().enumerate() {
            let p = 0.3 * (-t).exp();
            assert!((tr.infected[k] - p).abs() < 1e-12);
            assert!((tr.susceptible[k] - 0.7).abs() < 1e-15);
            assert!((cv.sigma[k][0][0] - p * (1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_values_at_unit_time() {
        let tr = classic_sir_solve(2.0_f64, 0.2, 1.0, 1e-4).unwrap();
        let cv = classic_clt_covariance(2.0_f64, 0.2, 1.0, 1e-4).unwrap();
        let k = tr.times.len() - 1;
        assert_eq!(tr.times[k], 1.0);
        assert!((tr.infected[k] - I_REF).abs() < 1e-10);
        assert!((tr.susceptible[k] - S_REF).abs() < 1e-10);
        let s = cv.sigma[k];
        assert!((s[0][0] - SIGMA_REF[0]).abs() < 1e-9);
        assert!((s[0][1] - SIGMA_REF[1]).abs() < 1e-9);
        assert!((s[1][1] - SIGMA_REF[2]).abs() < 1e-9);
    }

    #[test]
    fn covariance_stays_psd_and_fractions_bounded() {
        let tr = classic_sir_solve(3.0_f64, 0.05, 5.0, 1e-3).unwrap();
        let cv = classic_clt_covariance(3.0_f64, 0.05, 5.0, 1e-3).unwrap();
        for (k, s) in cv.sigma.iter().enumerate() {
            assert!(tr.infected[k] >= 0.0 && tr.susceptible[k] >= 0.0);
            assert!(tr.infected[k] + tr.susceptible[k] <= 1.0 + 1e-12);
            assert!(s[0][0] >= -1e-12 && s[1][1] >= -1e-12);
            assert!(s[0][0] * s[1][1] - s[0][1] * s[0][1] >= -1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(classic_sir_solve(-1.0_f64, 0.2, 1.0, 0.1).is_err());
        assert!(classic_sir_solve(1.0_f64, 1.2, 1.0, 0.1).is_err());
    }
}
