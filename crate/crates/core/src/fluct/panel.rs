use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hydro::DensityField;
use crate::model::{ModelSpec, NodeKernel};
use crate::scalar::Real;

/// Linearized operators at one density time on the `M`-node grid.
#[derive(Debug, Clone)]
pub struct OperatorPanel<T> {
    pub t: T,
    /// `Aψ` diagonal.
    pub psi: Vec<T>,
    /// `A1` diagonal, `κ1(u) = (1/M) Σ_v λ(u, v) ρ1(v)`.
    pub kappa1: Vec<T>,
    pub rho0: Vec<T>,
    pub rho1: Vec<T>,
    /// `b² = ψ ρ1`.
    pub b2: Vec<T>,
    /// `α² = ρ0 κ1`.
    pub alpha2: Vec<T>,
    kernel: NodeKernel<T>,
}

impl<T: Real> OperatorPanel<T> {
    pub fn m(&self) -> usize {
        self.psi.len()
    }

    /// `A0[m, q] = (1/M) λ(u_q, u_m) ρ0(u_q)`.
    pub fn a0_entry(&self, m: usize, q: usize) -> T {
        self.kernel.entry(q, m) * self.rho0[q] / T::from_count(self.m())
    }

    pub fn a0_dense(&self) -> DMatrix<T> {
        let m = self.m();
        DMatrix::from_fn(m, m, |a, b| self.a0_entry(a, b))
    }

    /// `out = A0ᵀ x`, i.e. `out[m] = ρ0(u_m) (1/M) Σ_q λ(u_m, u_q) x[q]`.
    pub fn apply_a0_transpose(&self, x: &[T], out: &mut [T]) {
        self.kernel.apply(x, out);
        for (o, r) in out.iter_mut().zip(&self.rho0) {
            *o *= *r;
        }
    }
}

/// Panel assembled from `density` at the stored time `t`.
pub fn build_operator_panel<T: Real>(density: &DensityField<T>, spec: &ModelSpec<T>, t: T) -> Result<OperatorPanel<T>> {
    let k = density.index_of(t).ok_or_else(|| {
        Error::Precondition(format!("t = {t} is not a density grid time; interpolation is not supported"))
    })?;
    Ok(panel_at(density, spec, k, spec.lambda().on_nodes(density.m())))
}

pub(crate) fn panel_at<T: Real>(
    density: &DensityField<T>,
    spec: &ModelSpec<T>,
    k: usize,
    kernel: NodeKernel<T>,
) -> OperatorPanel<T> {
    let m = density.m();
    let rho1 = density.rho1(k).to_vec();
    let rho0 = density.rho0(k).to_vec();
    let psi = spec.psi().profile().sample_nodes(m);
    let mut kappa1 = vec![T::zero(); m];
    kernel.apply(&rho1, &mut kappa1);
    let b2 = psi.iter().zip(&rho1).map(|(p, r)| *p * *r).collect();
    let alpha2 = rho0.iter().zip(&kappa1).map(|(r, k)| *r * *k).collect();
    OperatorPanel { t: density.times()[k], psi, kappa1, rho0, rho1, b2, alpha2, kernel }
}

/// Weight-space drift
/// `D = [[A0ᵀ − Aψ, A1], [−A0ᵀ, −A1]]` acting on `(w_η, w_β)`.
pub fn drift_matrix<T: Real>(panel: &OperatorPanel<T>) -> DMatrix<T> {
    let m = panel.m();
    let a0t = panel.a0_dense().transpose();
    let mut d = DMatrix::zeros(2 * m, 2 * m);
    for a in 0..m {
        for b in 0..m {
            d[(a, b)] = a0t[(a, b)];
            d[(m + a, b)] = -a0t[(a, b)];
        }
        d[(a, a)] -= panel.psi[a];
        d[(a, m + a)] = panel.kappa1[a];
        d[(m + a, m + a)] = -panel.kappa1[a];
    }
    d
}

/// Noise covariance rate
/// `Q = [[M diag(b² + α²), −M diag(α²)], [−M diag(α²), M diag(α²)]]`.
pub fn noise_matrix<T: Real>(panel: &OperatorPanel<T>) -> DMatrix<T> {
    let m = panel.m();
    let mt = T::from_count(m);
    let mut q = DMatrix::zeros(2 * m, 2 * m);
    for a in 0..m {
        q[(a, a)] = mt * (panel.b2[a] + panel.alpha2[a]);
        q[(a, m + a)] = -mt * panel.alpha2[a];
        q[(m + a, a)] = -mt * panel.alpha2[a];
        q[(m + a, m + a)] = mt * panel.alpha2[a];
    }
    q
}

/// `out = D x` for a `2M × c` matrix `x`, using the kernel's fast application.
pub fn apply_drift<T: Real>(panel: &OperatorPanel<T>, x: &DMatrix<T>, out: &mut DMatrix<T>) {
    let m = panel.m();
    let mut col = vec![T::zero(); m];
    let mut res = vec![T::zero(); m];
    for c in 0..x.ncols() {
        for a in 0..m {
            col[a] = x[(a, c)];
        }
        panel.apply_a0_transpose(&col, &mut res);
        for a in 0..m {
            let eta = x[(a, c)];
            let beta = x[(m + a, c)];
            let cross = panel.kappa1[a] * beta;
            out[(a, c)] = res[a] - panel.psi[a] * eta + cross;
            out[(m + a, c)] = -res[a] - cross;
        }
    }
}
