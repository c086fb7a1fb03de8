//! Infection kernels `λ(u, v)` on `[0, 1]²`.

use crate::error::{Error, Result};
use crate::model::field::{check_unit, ScalarField};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel<T> {
    Constant(T),
    /// `h1(u)·h2(v)`
    Separable(ScalarField<T>, ScalarField<T>),
    /// `size × size` row-major values on the corner grid `q/(size-1)`,
    /// bilinearly interpolated. Row index follows `u`, column index `v`.
    Table {
        size: usize,
        values: Vec<T>,
    },
}

impl<T: Real> Kernel<T> {
    pub fn table(size: usize, values: Vec<T>) -> Result<Self> {
        if size == 0 || values.len() != size * size {
            return Err(Error::Dimension { expected: size * size, actual: values.len() });
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidModel("kernel table entries must be finite and nonnegative".into()));
        }
        Ok(Kernel::Table { size, values })
    }

    /// `λ(u, v)` without range checks.
    #[inline]
    pub fn value(&self, u: T, v: T) -> T {
        match self {
            Kernel::Constant(c) => *c,
            Kernel::Separable(h1, h2) => h1.value(u) * h2.value(v),
            Kernel::Table { size, values } => bilinear(*size, values, u, v),
        }
    }

    /// `λ(u, v)`; out-of-range arguments are a domain error.
    pub fn eval(&self, u: T, v: T) -> Result<T> {
        check_unit(u, "u")?;
        check_unit(v, "v")?;
        Ok(self.value(u, v))
    }

    /// `‖λ‖_∞` over `[0, 1]²`.
    pub fn sup_norm(&self) -> T {
        match self {
            Kernel::Constant(c) => c.abs(),
            Kernel::Separable(h1, h2) => h1.profile().sup_norm() * h2.profile().sup_norm(),
            Kernel::Table { values, .. } => values.iter().fold(T::zero(), |m, x| m.max(x.abs())),
        }
    }

    /// Infimum over `[0, 1]²`.
    pub fn min_value(&self) -> T {
        match self {
            Kernel::Constant(c) => *c,
            Kernel::Separable(h1, h2) => h1.profile().min_value() * h2.profile().min_value(),
            Kernel::Table { values, .. } => values.iter().copied().fold(values[0], |m, x| m.min(x)),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Kernel::Constant(c) => c.is_finite(),
            Kernel::Separable(h1, h2) => h1.profile().is_well_formed() && h2.profile().is_well_formed(),
            Kernel::Table { values, .. } => values.iter().all(|x| x.is_finite()),
        }
    }

    pub fn as_constant(&self) -> Option<T> {
        match self {
            Kernel::Constant(c) => Some(*c),
            Kernel::Separable(h1, h2) => Some(h1.profile().as_constant()? * h2.profile().as_constant()?),
            Kernel::Table { values, .. } => values.iter().all(|x| *x == values[0]).then(|| values[0]),
        }
    }

    /// Discretizes the kernel on the node grid `m/M`, `m = 1..=M`.
    pub fn on_nodes(&self, m: usize) -> NodeKernel<T> {
        let mt = T::from_count(m);
        let nodes: Vec<T> = (1..=m).map(|k| T::from_count(k) / mt).collect();
        match self {
            Kernel::Constant(c) => NodeKernel { m, repr: NodeRepr::Constant(*c) },
            Kernel::Separable(h1, h2) => NodeKernel {
                m,
                repr: NodeRepr::Separable {
                    left: nodes.iter().map(|u| h1.value(*u)).collect(),
                    right: nodes.iter().map(|v| h2.value(*v)).collect(),
                },
            },
            Kernel::Table { .. } => {
                let mut dense = Vec::with_capacity(m * m);
                for u in &nodes {
                    for v in &nodes {
                        dense.push(self.value(*u, *v));
                    }
                }
                NodeKernel { m, repr: NodeRepr::Dense(dense) }
            }
        }
    }
}

fn bilinear<T: Real>(size: usize, values: &[T], u: T, v: T) -> T {
    if size == 1 {
        return values[0];
    }
    let last = size - 1;
    let scale = T::from_count(last);
    let locate = |x: T| -> (usize, T) {
        let s = (x * scale).max(T::zero()).min(scale);
        let lower = s.floor().to_usize().unwrap_or(0).min(last - 1);
        (lower, s - T::from_count(lower))
    };
    let (i, fu) = locate(u);
    let (j, fv) = locate(v);
    let at = |a: usize, b: usize| values[a * size + b];
    let one = T::one();
    (one - fu) * (one - fv) * at(i, j)
        + (one - fu) * fv * at(i, j + 1)
        + fu * (one - fv) * at(i + 1, j)
        + fu * fv * at(i + 1, j + 1)
}

#[derive(Debug, Clone)]
enum NodeRepr<T> {
    Constant(T),
    Separable { left: Vec<T>, right: Vec<T> },
    Dense(Vec<T>),
}

/// Kernel sampled on the node grid `m/M`, with the node-sum quadrature
/// `(1/M) Σ_q λ(u_a, u_q) w_q` the hydrodynamic and fluctuation solvers share.
/// Constant and separable kernels apply in `O(M)`.
#[derive(Debug, Clone)]
pub struct NodeKernel<T> {
    m: usize,
    repr: NodeRepr<T>,
}

impl<T: Real> NodeKernel<T> {
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// `λ(u_a, u_b)` for 0-based node indices.
    #[inline]
    pub fn entry(&self, a: usize, b: usize) -> T {
        match &self.repr {
            NodeRepr::Constant(c) => *c,
            NodeRepr::Separable { left, right } => left[a] * right[b],
            NodeRepr::Dense(d) => d[a * self.m + b],
        }
    }

    /// `out[a] = (1/M) Σ_q λ(u_a, u_q) w[q]`.
    pub fn apply(&self, w: &[T], out: &mut [T]) {
        let inv = T::one() / T::from_count(self.m);
        match &self.repr {
            NodeRepr::Constant(c) => {
                let s = w.iter().fold(T::zero(), |acc, x| acc + *x) * inv * *c;
                out.iter_mut().for_each(|o| *o = s);
            }
            NodeRepr::Separable { left, right } => {
                let s = right.iter().zip(w).fold(T::zero(), |acc, (r, x)| acc + *r * *x) * inv;
                out.iter_mut().zip(left).for_each(|(o, l)| *o = *l * s);
            }
            NodeRepr::Dense(d) => {
                for (a, o) in out.iter_mut().enumerate() {
                    let row = &d[a * self.m..(a + 1) * self.m];
                    *o = row.iter().zip(w).fold(T::zero(), |acc, (l, x)| acc + *l * *x) * inv;
                }
            }
        }
    }

    /// `out[a] += scale · λ(u_a, u_b)` for a fixed column `b`.
    #[inline]
    pub fn add_column(&self, b: usize, scale: T, out: &mut [T]) {
        match &self.repr {
            NodeRepr::Constant(c) => {
                let d = *c * scale;
                out.iter_mut().for_each(|o| *o += d);
            }
            NodeRepr::Separable { left, right } => {
                let d = right[b] * scale;
                out.iter_mut().zip(left).for_each(|(o, l)| *o += *l * d);
            }
            NodeRepr::Dense(dense) => {
                for (a, o) in out.iter_mut().enumerate() {
                    *o += dense[a * self.m + b] * scale;
                }
            }
        }
    }
}
