//! Functions on `[0, 1]`: recovery fields, initial profiles and test functions.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Serializable representation of a function on `[0, 1]`.
///
/// `Table` values sit at the nodes `m/M`, `m = 1..=M`. Between nodes the
/// function is linear; below the first node it is held at the first value.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile<T> {
    Constant(T),
    /// `a + b·u`
    Affine {
        a: T,
        b: T,
    },
    Table(Vec<T>),
}

impl<T: Real> Profile<T> {
    /// Evaluates without range checks. Callers guarantee `u ∈ [0, 1]`.
    #[inline]
    pub fn value(&self, u: T) -> T {
        match self {
            Profile::Constant(c) => *c,
            Profile::Affine { a, b } => *a + *b * u,
            Profile::Table(values) => table_value(values, u),
        }
    }

    /// Evaluates at `u`, rejecting points outside `[0, 1]`.
    pub fn eval(&self, u: T) -> Result<T> {
        check_unit(u, "u")?;
        Ok(self.value(u))
    }

    /// Minimum over `[0, 1]`.
    pub fn min_value(&self) -> T {
        match self {
            Profile::Constant(c) => *c,
            Profile::Affine { a, b } => (*a).min(*a + *b),
            Profile::Table(v) => v.iter().copied().fold(v[0], |m, x| m.min(x)),
        }
    }

    /// Maximum over `[0, 1]`.
    pub fn max_value(&self) -> T {
        match self {
            Profile::Constant(c) => *c,
            Profile::Affine { a, b } => (*a).max(*a + *b),
            Profile::Table(v) => v.iter().copied().fold(v[0], |m, x| m.max(x)),
        }
    }

    pub fn sup_norm(&self) -> T {
        self.max_value().abs().max(self.min_value().abs())
    }

    /// `true` when every stored coefficient is finite and a table is non-empty.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Profile::Constant(c) => c.is_finite(),
            Profile::Affine { a, b } => a.is_finite() && b.is_finite(),
            Profile::Table(v) => !v.is_empty() && v.iter().all(|x| x.is_finite()),
        }
    }

    /// Values at the nodes `m/M`, `m = 1..=M`.
    pub fn sample_nodes(&self, m: usize) -> Vec<T> {
        let mt = T::from_count(m);
        (1..=m).map(|k| self.value(T::from_count(k) / mt)).collect()
    }

    pub fn scaled(&self, k: T) -> Self {
        match self {
            Profile::Constant(c) => Profile::Constant(*c * k),
            Profile::Affine { a, b } => Profile::Affine { a: *a * k, b: *b * k },
            Profile::Table(v) => Profile::Table(v.iter().map(|x| *x * k).collect()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Constant(c) => *c == T::zero(),
            Profile::Affine { a, b } => *a == T::zero() && *b == T::zero(),
            Profile::Table(v) => v.iter().all(|x| *x == T::zero()),
        }
    }

    pub fn as_constant(&self) -> Option<T> {
        match self {
            Profile::Constant(c) => Some(*c),
            Profile::Affine { a, b } if *b == T::zero() => Some(*a),
            Profile::Table(v) if v.iter().all(|x| *x == v[0]) => Some(v[0]),
            _ => None,
        }
    }
}

pub(crate) fn check_unit<T: Real>(u: T, name: &str) -> Result<()> {
    if u >= T::zero() && u <= T::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {u} outside [0, 1]")))
    }
}

fn table_value<T: Real>(values: &[T], u: T) -> T {
    let m = values.len();
    if m == 1 {
        return values[0];
    }
    // Node k (1-based) sits at position k on the scaled axis s = u·M.
    let s = u * T::from_count(m);
    if s <= T::one() {
        return values[0];
    }
    if s >= T::from_count(m) {
        return values[m - 1];
    }
    let nearest = s.round();
    if (s - nearest).abs() <= T::lit(64.0) * T::eps() * T::from_count(m) {
        let k = nearest.to_usize().unwrap_or(1).clamp(1, m);
        return values[k - 1];
    }
    let lower = s.floor();
    let k = lower.to_usize().unwrap_or(1).clamp(1, m - 1);
    let frac = s - lower;
    values[k - 1] + frac * (values[k] - values[k - 1])
}

/// Nonnegative field used for recovery rates `ψ` and initial profiles `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T>(Profile<T>);

impl<T: Real> ScalarField<T> {
    pub fn new(profile: Profile<T>) -> Result<Self> {
        if !profile.is_well_formed() {
            return Err(Error::InvalidModel(format!("field {profile:?} is not finite")));
        }
        if profile.min_value() < T::zero() {
            return Err(Error::InvalidModel(format!("field {profile:?} takes negative values")));
        }
        Ok(Self(profile))
    }

    pub fn constant(c: T) -> Result<Self> {
        Self::new(Profile::Constant(c))
    }

    pub fn affine(a: T, b: T) -> Result<Self> {
        Self::new(Profile::Affine { a, b })
    }

    pub fn table(values: Vec<T>) -> Result<Self> {
        Self::new(Profile::Table(values))
    }

    #[inline]
    pub fn value(&self, u: T) -> T {
        self.0.value(u)
    }

    pub fn eval(&self, u: T) -> Result<T> {
        self.0.eval(u)
    }

    pub fn profile(&self) -> &Profile<T> {
        &self.0
    }
}

/// Real-valued test function `f ∈ C[0,1]`; may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction<T>(Profile<T>);

impl<T: Real> TestFunction<T> {
    pub fn new(profile: Profile<T>) -> Result<Self> {
        if !profile.is_well_formed() {
            return Err(Error::InvalidModel(format!("test function {profile:?} is not finite")));
        }
        Ok(Self(profile))
    }

    pub fn one() -> Self {
        Self(Profile::Constant(T::one()))
    }

    pub fn zero() -> Self {
        Self(Profile::Constant(T::zero()))
    }

    pub fn constant(c: T) -> Result<Self> {
        Self::new(Profile::Constant(c))
    }

    pub fn affine(a: T, b: T) -> Result<Self> {
        Self::new(Profile::Affine { a, b })
    }

    pub fn table(values: Vec<T>) -> Result<Self> {
        Self::new(Profile::Table(values))
    }

    #[inline]
    pub fn value(&self, u: T) -> T {
        self.0.value(u)
    }

    pub fn eval(&self, u: T) -> Result<T> {
        self.0.eval(u)
    }

    pub fn profile(&self) -> &Profile<T> {
        &self.0
    }

    pub fn sup_norm(&self) -> T {
        self.0.sup_norm()
    }

    pub fn scaled(&self, k: T) -> Self {
        Self(self.0.scaled(k))
    }

    /// Values `f(i/N)` at the urn sites `i = 1..=N`.
    pub fn at_sites(&self, n: usize) -> Vec<T> {
        self.0.sample_nodes(n)
    }
}
