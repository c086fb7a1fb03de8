use crate::error::{Error, Result};
use crate::model::field::ScalarField;
use crate::model::kernel::Kernel;
use crate::scalar::Real;

/// Model parameters: infection kernel, recovery field, initial profile,
/// urn count and time horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<T> {
    lambda: Kernel<T>,
    psi: ScalarField<T>,
    phi: ScalarField<T>,
    n: usize,
    horizon: T,
    degenerate: bool,
}

impl<T: Real> ModelSpec<T> {
    /// Strict constructor: `λ > 0`, `ψ > 0` on the unit square/interval.
    pub fn new(lambda: Kernel<T>, psi: ScalarField<T>, phi: ScalarField<T>, n: usize, horizon: T) -> Result<Self> {
        Self::build(lambda, psi, phi, n, horizon, false)
    }

    /// Admits `λ ≥ 0` and `ψ ≥ 0` (e.g. `λ ≡ 0` closed-form fixtures).
    pub fn degenerate(
        lambda: Kernel<T>,
        psi: ScalarField<T>,
        phi: ScalarField<T>,
        n: usize,
        horizon: T,
    ) -> Result<Self> {
        Self::build(lambda, psi, phi, n, horizon, true)
    }

    /// Spatially homogeneous model: `λ ≡ λ0`, `ψ ≡ 1`, `φ ≡ φ0`.
    pub fn homogeneous(lambda0: T, phi0: T, n: usize, horizon: T) -> Result<Self> {
        let relaxed = lambda0 == T::zero();
        Self::build(
            Kernel::Constant(lambda0),
            ScalarField::constant(T::one())?,
            ScalarField::constant(phi0)?,
            n,
            horizon,
            relaxed,
        )
    }

    fn build(
        lambda: Kernel<T>,
        psi: ScalarField<T>,
        phi: ScalarField<T>,
        n: usize,
        horizon: T,
        degenerate: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("N must be at least 1".into()));
        }
        if !horizon.is_finite() || horizon < T::zero() {
            return Err(Error::InvalidModel(format!("horizon T = {horizon} must be finite and nonnegative")));
        }
        if phi.profile().max_value() > T::one() {
            return Err(Error::InvalidModel("initial profile φ must take values in [0, 1]".into()));
        }
        if !lambda.is_finite() || lambda.min_value() < T::zero() {
            return Err(Error::InvalidModel("kernel λ must be finite and nonnegative".into()));
        }
        if !degenerate {
            if lambda.min_value() <= T::zero() {
                return Err(Error::InvalidModel("kernel λ must be strictly positive".into()));
            }
            if psi.profile().min_value() <= T::zero() {
                return Err(Error::InvalidModel("recovery field ψ must be strictly positive".into()));
            }
        }
        Ok(Self { lambda, psi, phi, n, horizon, degenerate })
    }

    pub fn lambda(&self) -> &Kernel<T> {
        &self.lambda
    }

    pub fn psi(&self) -> &ScalarField<T> {
        &self.psi
    }

    pub fn phi(&self) -> &ScalarField<T> {
        &self.phi
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Site `i/N` of the 0-based urn index `k` (urn `i = k + 1`).
    #[inline]
    pub fn site(&self, k: usize) -> T {
        T::from_count(k + 1) / T::from_count(self.n)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::build(self.lambda.clone(), self.psi.clone(), self.phi.clone(), n, self.horizon, self.degenerate)
    }

    pub fn with_horizon(&self, horizon: T) -> Result<Self> {
        Self::build(self.lambda.clone(), self.psi.clone(), self.phi.clone(), self.n, horizon, self.degenerate)
    }

    /// Returns `(λ0, φ0)` when `λ`, `φ` are constant and `ψ ≡ 1`.
    pub fn homogeneous_parameters(&self) -> Option<(T, T)> {
        let psi = self.psi.profile().as_constant()?;
        if psi != T::one() {
            return None;
        }
        Some((self.lambda.as_constant()?, self.phi.profile().as_constant()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields() -> (Kernel<f64>, ScalarField<f64>, ScalarField<f64>) {
        (Kernel::Constant(1.0), ScalarField::constant(1.0).unwrap(), ScalarField::constant(0.5).unwrap())
    }

    #[test]
    fn rejects_zero_urns_and_negative_horizon() {
        let (l, p, f) = fields();
        assert!(ModelSpec::new(l.clone(), p.clone(), f.clone(), 0, 1.0).is_err());
        assert!(ModelSpec::new(l, p, f, 3, -1.0).is_err());
    }

    #[test]
    fn rejects_phi_above_one() {
        let (l, p, _) = fields();
        let phi = ScalarField::affine(0.5, 0.8).unwrap();
        assert!(ModelSpec::new(l, p, phi, 3, 1.0).is_err());
    }

    #[test]
    fn strict_rejects_zero_rates_degenerate_admits() {
        let (_, p, f) = fields();
        assert!(ModelSpec::new(Kernel::Constant(0.0), p.clone(), f.clone(), 3, 1.0).is_err());
        assert!(ModelSpec::degenerate(Kernel::Constant(0.0), p.clone(), f.clone(), 3, 1.0).is_ok());
        let zero_psi = ScalarField::constant(0.0).unwrap();
        assert!(ModelSpec::new(Kernel::Constant(1.0), zero_psi.clone(), f.clone(), 3, 1.0).is_err());
        assert!(ModelSpec::degenerate(Kernel::Constant(1.0), zero_psi, f, 3, 1.0).is_ok());
    }

    #[test]
    fn table_kernel_with_zero_node_is_rejected() {
        let (_, p, f) = fields();
        let k = Kernel::table(2, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(ModelSpec::new(k, p, f, 3, 1.0).is_err());
    }

    #[test]
    fn homogeneous_detection() {
        let s = ModelSpec::homogeneous(2.0, 0.2, 10, 1.0).unwrap();
        assert_eq!(s.homogeneous_parameters(), Some((2.0, 0.2)));
        let (l, _, f) = fields();
        let s = ModelSpec::new(l, ScalarField::constant(2.0).unwrap(), f, 3, 1.0).unwrap();
        assert_eq!(s.homogeneous_parameters(), None);
    }
}
