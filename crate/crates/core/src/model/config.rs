//! Key-value configuration files.
//!
//! ```text
//! [model]
//! N = 200
//! T = 1.0
//! degenerate = false      ; optional, admits λ ≡ 0 or ψ ≡ 0
//!
//! [lambda]
//! form = separable        ; constant | separable | table
//! h1.form = affine        ; factor fields use the scalar-field forms
//! h1.values = 1, 1
//! h2.form = constant
//! h2.values = 2
//!
//! [psi]
//! form = constant         ; constant | affine | table
//! values = 1
//!
//! [phi]
//! form = table
//! values = 0.1, 0.2, 0.4, 0.2
//! ```
//!
//! `constant` takes one value `c`; `affine` takes `a, b` meaning `a + b·u`;
//! a scalar `table` lists values at the nodes `m/M`, `m = 1..=M`; a kernel
//! `table` lists `M²` row-major values on the corner grid `q/(M-1)`.
//! Other sections (`[ensemble]`, `[grid]`, `[fluct]`, `[validate]`) are read
//! by the command-line front end through the same [`ConfigFile`] accessors.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::field::{Profile, ScalarField, TestFunction};
use crate::model::kernel::Kernel;
use crate::model::spec::ModelSpec;
use crate::scalar::Real;

/// Parsed configuration file with typed accessors.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    ini: Ini,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { ini })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.ini.section(Some(section)).is_some()
    }

    /// Value text with any trailing `;` or `#` comment removed.
    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        let v = self.ini.section(Some(section))?.get(key)?;
        Some(v.split([';', '#']).next().unwrap_or("").trim())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.raw(section, key).ok_or_else(|| Error::Config(format!("missing key {section}.{key}")))
    }

    pub fn parse_value<V: FromStr>(&self, section: &str, key: &str) -> Result<Option<V>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(s) => {
                s.parse::<V>().map(Some).map_err(|_| Error::Config(format!("cannot parse {section}.{key} = {s:?}")))
            }
        }
    }

    pub fn value_or<V: FromStr>(&self, section: &str, key: &str, default: V) -> Result<V> {
        Ok(self.parse_value(section, key)?.unwrap_or(default))
    }

    pub fn list_f64(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(section, key).map(|s| parse_list(s, &format!("{section}.{key}"))).transpose()
    }

    pub fn list_usize(&self, section: &str, key: &str) -> Result<Option<Vec<usize>>> {
        self.raw(section, key)
            .map(|s| {
                s.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Config(format!("cannot parse {section}.{key} entry {x:?}")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Reads `<prefix>form` / `<prefix>values` from a section.
    pub fn profile<T: Real>(&self, section: &str, prefix: &str) -> Result<Option<Profile<T>>> {
        let form_key = format!("{prefix}form");
        let Some(form) = self.raw(section, &form_key) else {
            return Ok(None);
        };
        let values_key = format!("{prefix}values");
        let values = parse_list(self.require(section, &values_key)?, &format!("{section}.{values_key}"))?;
        let values: Vec<T> = values.into_iter().map(T::lit).collect();
        let expect = |k: usize| -> Result<()> {
            if values.len() == k {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{section}.{values_key}: form {form} takes {k} value(s), got {}",
                    values.len()
                )))
            }
        };
        let profile = match form {
            "constant" => {
                expect(1)?;
                Profile::Constant(values[0])
            }
            "affine" => {
                expect(2)?;
                Profile::Affine { a: values[0], b: values[1] }
            }
            "table" if !values.is_empty() => Profile::Table(values),
            other => return Err(Error::Config(format!("{section}.{form_key}: unsupported form {other:?}"))),
        };
        Ok(Some(profile))
    }

    pub fn test_function<T: Real>(&self, section: &str, prefix: &str) -> Result<Option<TestFunction<T>>> {
        self.profile(section, prefix)?
            .map(|p| TestFunction::new(p).map_err(|e| Error::Config(e.to_string())))
            .transpose()
    }

    fn scalar_field<T: Real>(&self, section: &str, prefix: &str) -> Result<ScalarField<T>> {
        let profile = self
            .profile(section, prefix)?
            .ok_or_else(|| Error::Config(format!("missing key {section}.{prefix}form")))?;
        ScalarField::new(profile).map_err(|e| Error::Config(format!("[{section}] {e}")))
    }

    fn kernel<T: Real>(&self) -> Result<Kernel<T>> {
        let form = self.require("lambda", "form")?;
        match form {
            "constant" => match self.profile("lambda", "")? {
                Some(Profile::Constant(c)) => Ok(Kernel::Constant(c)),
                _ => Err(Error::Config("lambda.values: constant form takes 1 value".into())),
            },
            "separable" => {
                Ok(Kernel::Separable(self.scalar_field("lambda", "h1.")?, self.scalar_field("lambda", "h2.")?))
            }
            "table" => {
                let values = self
                    .list_f64("lambda", "values")?
                    .ok_or_else(|| Error::Config("missing key lambda.values".into()))?;
                let size = (values.len() as f64).sqrt().round() as usize;
                if size * size != values.len() {
                    return Err(Error::Config(format!(
                        "lambda.values: table needs a square count, got {}",
                        values.len()
                    )));
                }
                Kernel::table(size, values.into_iter().map(T::lit).collect()).map_err(|e| Error::Config(e.to_string()))
            }
            other => Err(Error::Config(format!("lambda.form: unsupported form {other:?}"))),
        }
    }

    /// Builds the model from `[model]`, `[lambda]`, `[psi]`, `[phi]`.
    pub fn model_spec<T: Real>(&self) -> Result<ModelSpec<T>> {
        let n: usize = self.parse_value("model", "N")?.ok_or_else(|| Error::Config("missing key model.N".into()))?;
        let horizon: f64 =
            self.parse_value("model", "T")?.ok_or_else(|| Error::Config("missing key model.T".into()))?;
        let degenerate: bool = self.value_or("model", "degenerate", false)?;
        let lambda = self.kernel()?;
        let psi = self.scalar_field("psi", "")?;
        let phi = self.scalar_field("phi", "")?;
        let build = if degenerate { ModelSpec::degenerate } else { ModelSpec::new };
        build(lambda, psi, phi, n, T::lit(horizon)).map_err(|e| Error::Config(e.to_string()))
    }
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            let x = x.trim();
            x.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("{what}: cannot parse {x:?} as a decimal")))
        })
        .collect()
}

fn join<T: Real>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn write_profile<T: Real>(out: &mut String, prefix: &str, p: &Profile<T>) {
    let (form, values) = match p {
        Profile::Constant(c) => ("constant", vec![*c]),
        Profile::Affine { a, b } => ("affine", vec![*a, *b]),
        Profile::Table(v) => ("table", v.clone()),
    };
    let _ = writeln!(out, "{prefix}form = {form}");
    let _ = writeln!(out, "{prefix}values = {}", join(&values));
}

/// Canonical text of the model sections; parses back to an equal spec.
pub fn render_model_spec<T: Real>(spec: &ModelSpec<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[model]\nN = {}\nT = {}", spec.n(), spec.horizon());
    if spec.is_degenerate() {
        out.push_str("degenerate = true\n");
    }
    out.push_str("\n[lambda]\n");
    match spec.lambda() {
        Kernel::Constant(c) => {
            let _ = writeln!(out, "form = constant\nvalues = {c}");
        }
        Kernel::Separable(h1, h2) => {
            out.push_str("form = separable\n");
            write_profile(&mut out, "h1.", h1.profile());
            write_profile(&mut out, "h2.", h2.profile());
        }
        Kernel::Table { values, .. } => {
            let _ = writeln!(out, "form = table\nvalues = {}", join(values));
        }
    }
    out.push_str("\n[psi]\n");
    write_profile(&mut out, "", spec.psi().profile());
    out.push_str("\n[phi]\n");
    write_profile(&mut out, "", spec.phi().profile());
    out
}

/// Short hex digest of the canonical model text.
pub fn spec_hash<T: Real>(spec: &ModelSpec<T>) -> String {
    let digest = Sha256::digest(render_model_spec(spec).as_bytes());
    hex::encode(&digest[..8])
}
