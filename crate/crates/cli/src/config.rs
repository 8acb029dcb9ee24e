//! Run configuration: common flags plus `--set key=value` overrides.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use afym::envelope::{EnvelopeMode, OperatorPair};
use afym::integrands::{resolve_integrand, CatalogIntegrand, SharedIntegrand};
use afym::symbols::{catalog, resolve_operator, OperatorSpec};
use afym::{Error, Result};

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

/// Key-value overrides; every command declares the keys it reads.
#[derive(Debug, Default)]
pub struct Overrides {
    values: BTreeMap<String, String>,
    allowed: RefCell<BTreeSet<&'static str>>,
}

impl Overrides {
    pub fn parse(pairs: &[String]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for p in pairs {
            let Some((k, v)) = p.split_once('=') else {
                return bad(format!("override `{p}` is not of the form key=value"));
            };
            if values.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return bad(format!("override `{k}` given twice"));
            }
        }
        Ok(Self {
            values,
            allowed: RefCell::default(),
        })
    }

    /// Reject keys outside `keys`.
    pub fn allow(&self, keys: &[&'static str]) -> Result<()> {
        self.allowed.borrow_mut().extend(keys);
        let unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !self.allowed.borrow().contains(k.as_str()))
            .map(String::as_str)
            .collect();
        if !unknown.is_empty() {
            let mut known: Vec<&str> = self.allowed.borrow().iter().copied().collect();
            known.sort_unstable();
            return bad(format!(
                "unknown override key(s) {} (this command accepts: {})",
                unknown.join(", "),
                if known.is_empty() { "none".to_string() } else { known.join(", ") }
            ));
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(self.allowed.borrow().contains(key), "override `{key}` read but not declared");
        self.values.get(key).map(String::as_str)
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(str::to_string)
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        self.opt_f64(key).map(|v| v.unwrap_or(default))
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|v| parse_f64(key, v))
            .transpose()
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .or_else(|_| bad(format!("override `{key}` expects a non-negative integer, got `{v}`"))),
        }
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("1" | "true" | "yes") => Ok(true),
            Some("0" | "false" | "no") => Ok(false),
            Some(v) => bad(format!("override `{key}` expects a boolean, got `{v}`")),
        }
    }

    pub fn vec_f64(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key).map(|v| parse_vector(key, v)).transpose()
    }

    pub fn vec_usize(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .or_else(|_| bad(format!("override `{key}` expects integers, got `{v}`")))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn parse_f64(what: &str, v: &str) -> Result<f64> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => bad(format!("`{what}` expects a finite number, got `{v}`")),
    }
}

/// Comma-separated numbers; `1/8` fractions are accepted.
pub fn parse_vector(what: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| match s.split_once('/') {
            Some((a, b)) => Ok(parse_f64(what, a)? / parse_f64(what, b)?),
            None => parse_f64(what, s),
        })
        .collect()
}

#[derive(Debug)]
pub struct RunConfig {
    pub subcommand: String,
    pub inputs: Vec<PathBuf>,
    pub output: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub seed: u64,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub operator: Option<String>,
    pub integrands: Vec<String>,
    pub mode: Option<String>,
    pub overrides: Overrides,
}

impl RunConfig {
    pub fn validate_inputs(&self) -> Result<()> {
        for p in &self.inputs {
            if !p.exists() {
                return bad(format!("input `{}` does not exist", p.display()));
            }
        }
        Ok(())
    }

    pub fn input(&self, k: usize, what: &str) -> Result<&PathBuf> {
        self.inputs
            .get(k)
            .map_or_else(|| bad(format!("missing --input for {what}")), Ok)
    }

    pub fn expect_inputs(&self, count: usize) -> Result<()> {
        if self.inputs.len() != count {
            return bad(format!(
                "`{}` takes {count} --input path(s), got {}",
                self.subcommand,
                self.inputs.len()
            ));
        }
        Ok(())
    }

    pub fn operator_name(&self) -> Result<&str> {
        self.operator
            .as_deref()
            .map_or_else(|| bad(format!("`{}` needs --operator", self.subcommand)), Ok)
    }

    pub fn operator(&self) -> Result<OperatorSpec> {
        resolve_operator(self.operator_name()?)
    }

    /// A from --operator; B from the `potential` override or the catalog pairing.
    pub fn operator_pair(&self) -> Result<OperatorPair> {
        let name = self.operator_name()?;
        let a = resolve_operator(name)?;
        let b = match self.overrides.string("potential") {
            Some(p) => Some(resolve_operator(&p)?),
            None => catalog::potential_of(name).map(resolve_operator).transpose()?,
        };
        OperatorPair::new(a, b)
    }

    pub fn mode(&self) -> Result<EnvelopeMode> {
        match &self.mode {
            None => Ok(EnvelopeMode::default()),
            Some(m) => m.parse(),
        }
    }

    pub fn integrands(&self, dim: usize) -> Result<Vec<SharedIntegrand>> {
        self.integrands.iter().map(|s| parse_integrand(s, dim)).collect()
    }
}

/// `name`, `name:p1,p2,…` or a path to an integrand file.
pub fn parse_integrand(spec: &str, dim: usize) -> Result<SharedIntegrand> {
    if let Some((name, params)) = spec.split_once(':') {
        if !std::path::Path::new(spec).exists() {
            let params = parse_vector(name, params)?;
            return Ok(CatalogIntegrand::build(name, dim, &params)?.shared());
        }
    }
    Ok(resolve_integrand(spec, dim)?.shared())
}
