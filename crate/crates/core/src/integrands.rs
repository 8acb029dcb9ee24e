//! Linear-growth integrands, their recession functions, the ball
//! compactification `T`, and gradient-sampled Clarke support functions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use crate::error::{input, Error, Result};
use crate::linalg::{add, dot, norm, scale, sub};
use crate::sphere::{random_in_ball, random_unit, SphereSampler};

/// A continuous integrand of linear growth on V = R^dim.
pub trait Integrand: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn eval(&self, z: &[f64]) -> f64;

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        fd_gradient(|x| self.eval(x), z)
    }

    /// Smallest known c with |f(z)| ≤ c(1 + |z|).
    fn growth_constant(&self) -> f64;

    /// Exact recession function, when known.
    fn recession_exact(&self, _z: &[f64]) -> Option<f64> {
        None
    }

    /// Convex integrands are A-quasiconvex for every operator A.
    fn is_convex(&self) -> bool {
        false
    }
}

pub type SharedIntegrand = Arc<dyn Integrand>;

/// Central differences with step 1e-6·(1+|z|).
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, z: &[f64]) -> Vec<f64> {
    let h = 1e-6 * (1.0 + norm(z));
    let mut x = z.to_vec();
    (0..z.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let fp = f(&x);
            x[i] = orig - h;
            let fm = f(&x);
            x[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// The shipped integrands, all with exact recession functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CatalogIntegrand {
    /// |z|
    Norm { dim: usize },
    /// √(1+|z|²)
    Area { dim: usize },
    /// ⟨a, z⟩
    Linear { a: Vec<f64> },
    /// min(|z−a|, |z+a|) + ε√(1+|z|²)
    TwoWell { a: Vec<f64>, eps: f64 },
    /// |z₁| − |z₂|
    AbsDiff { dim: usize },
}

pub const CATALOG_NAMES: &[&str] = &["norm", "area", "linear", "two-well", "abs-diff"];

impl CatalogIntegrand {
    /// Build from a catalog name, dimension and parameter vector.
    ///
    /// `linear` takes `a` (dim entries); `two-well` takes `a` followed by an
    /// optional ε (default 0); the others take no parameters.
    pub fn build(name: &str, dim: usize, params: &[f64]) -> Result<Self> {
        if dim == 0 {
            return input("integrand dimension must be positive");
        }
        let no_params = |e: Self| {
            if params.is_empty() {
                Ok(e)
            } else {
                input(format!("`{name}` takes no parameters"))
            }
        };
        match name {
            "norm" => no_params(Self::Norm { dim }),
            "area" => no_params(Self::Area { dim }),
            "abs-diff" if dim >= 2 => no_params(Self::AbsDiff { dim }),
            "abs-diff" => input("`abs-diff` needs dim ≥ 2"),
            "linear" if params.len() == dim => Ok(Self::Linear { a: params.to_vec() }),
            "linear" => input(format!("`linear` needs {dim} parameters")),
            "two-well" if params.len() == dim || params.len() == dim + 1 => {
                let eps = params.get(dim).copied().unwrap_or(0.0);
                if eps < 0.0 {
                    return input("two-well ε must be ≥ 0");
                }
                Ok(Self::TwoWell {
                    a: params[..dim].to_vec(),
                    eps,
                })
            }
            "two-well" => input(format!("`two-well` needs {dim} or {} parameters", dim + 1)),
            other => input(format!(
                "unknown integrand `{other}` (catalog: {})",
                CATALOG_NAMES.join(", ")
            )),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let f: IntegrandFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::build(&f.name, f.dim, &f.params)
    }

    pub fn catalog_name(&self) -> &'static str {
        match self {
            Self::Norm { .. } => "norm",
            Self::Area { .. } => "area",
            Self::Linear { .. } => "linear",
            Self::TwoWell { .. } => "two-well",
            Self::AbsDiff { .. } => "abs-diff",
        }
    }

    pub fn shared(self) -> SharedIntegrand {
        Arc::new(self)
    }
}

/// JSON layout of an integrand file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrandFile {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub params: Vec<f64>,
}

/// Catalog name, or path to an integrand file.
pub fn resolve_integrand(spec: &str, dim: usize) -> Result<CatalogIntegrand> {
    if CATALOG_NAMES.contains(&spec) {
        return CatalogIntegrand::build(spec, dim, &[]);
    }
    if Path::new(spec).exists() {
        return CatalogIntegrand::from_file(spec);
    }
    input(format!("`{spec}` is neither a catalog integrand nor a file"))
}

fn unit_or_zero(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n > 0.0 {
        scale(v, 1.0 / n)
    } else {
        vec![0.0; v.len()]
    }
}

impl Integrand for CatalogIntegrand {
    fn name(&self) -> String {
        match self {
            Self::TwoWell { a, eps } => format!("two-well(a={a:?}, eps={eps})"),
            Self::Linear { a } => format!("linear(a={a:?})"),
            other => other.catalog_name().to_string(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Self::Norm { dim } | Self::Area { dim } | Self::AbsDiff { dim } => *dim,
            Self::Linear { a } | Self::TwoWell { a, .. } => a.len(),
        }
    }

    fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Self::Norm { .. } => norm(z),
            Self::Area { .. } => (1.0 + dot(z, z)).sqrt(),
            Self::Linear { a } => dot(a, z),
            Self::TwoWell { a, eps } => {
                norm(&sub(z, a)).min(norm(&add(z, a))) + eps * (1.0 + dot(z, z)).sqrt()
            }
            Self::AbsDiff { .. } => z[0].abs() - z[1].abs(),
        }
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Self::Norm { .. } => unit_or_zero(z),
            Self::Area { .. } => scale(z, 1.0 / (1.0 + dot(z, z)).sqrt()),
            Self::Linear { a } => a.clone(),
            Self::TwoWell { a, eps } => {
                let (m, p) = (sub(z, a), add(z, a));
                let well = if norm(&m) <= norm(&p) { m } else { p };
                add(&unit_or_zero(&well), &scale(z, eps / (1.0 + dot(z, z)).sqrt()))
            }
            Self::AbsDiff { dim } => {
                let mut g = vec![0.0; *dim];
                g[0] = z[0].signum() * (z[0] != 0.0) as u8 as f64;
                g[1] = -z[1].signum() * (z[1] != 0.0) as u8 as f64;
                g
            }
        }
    }

    fn growth_constant(&self) -> f64 {
        match self {
            Self::Norm { .. } | Self::Area { .. } | Self::AbsDiff { .. } => 1.0,
            Self::Linear { a } => norm(a),
            Self::TwoWell { a, eps } => norm(a).max(1.0) + eps,
        }
    }

    fn recession_exact(&self, z: &[f64]) -> Option<f64> {
        Some(match self {
            Self::Norm { .. } | Self::Area { .. } => norm(z),
            Self::Linear { a } => dot(a, z),
            Self::TwoWell { eps, .. } => (1.0 + eps) * norm(z),
            Self::AbsDiff { .. } => z[0].abs() - z[1].abs(),
        })
    }

    fn is_convex(&self) -> bool {
        matches!(self, Self::Norm { .. } | Self::Area { .. } | Self::Linear { .. })
    }
}

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Integrand assembled from closures; the library entry point for
/// user-defined functions.
pub struct FnIntegrand {
    name: String,
    dim: usize,
    growth: f64,
    eval: Box<ScalarFn>,
    recession: Option<Box<ScalarFn>>,
    convex: bool,
}

impl FnIntegrand {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        growth: f64,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            growth,
            eval: Box::new(eval),
            recession: None,
            convex: false,
        }
    }

    pub fn with_recession(mut self, r: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.recession = Some(Box::new(r));
        self
    }

    pub fn convex(mut self) -> Self {
        self.convex = true;
        self
    }
}

impl Integrand for FnIntegrand {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, z: &[f64]) -> f64 {
        (self.eval)(z)
    }
    fn growth_constant(&self) -> f64 {
        self.growth
    }
    fn recession_exact(&self, z: &[f64]) -> Option<f64> {
        self.recession.as_ref().map(|r| r(z))
    }
    fn is_convex(&self) -> bool {
        self.convex
    }
}

impl<T: Integrand + ?Sized> Integrand for Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, z: &[f64]) -> f64 {
        (**self).eval(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        (**self).gradient(z)
    }
    fn growth_constant(&self) -> f64 {
        (**self).growth_constant()
    }
    fn recession_exact(&self, z: &[f64]) -> Option<f64> {
        (**self).recession_exact(z)
    }
    fn is_convex(&self) -> bool {
        (**self).is_convex()
    }
}

/// Geometric grid of ray parameters for estimating f(tz)/t.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecessionSchedule {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for RecessionSchedule {
    fn default() -> Self {
        Self {
            t_min: 1e2,
            t_max: 1e6,
            points: 7,
        }
    }
}

impl RecessionSchedule {
    pub fn ts(&self) -> Vec<f64> {
        let k = self.points.max(2);
        let r = (self.t_max / self.t_min).powf(1.0 / (k - 1) as f64);
        (0..k).map(|i| self.t_min * r.powi(i as i32)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecessionEstimate {
    pub value: f64,
    pub converged: bool,
}

/// Upper recession along the ray: max over the schedule of f(tz)/t.
///
/// Converged when the last three quotients agree to 1e-2 relative. Exact
/// recessions short-circuit the estimate.
pub fn recession_estimate(
    f: &dyn Integrand,
    z: &[f64],
    schedule: &RecessionSchedule,
) -> Result<RecessionEstimate> {
    if norm(z) == 0.0 {
        return input("recession is estimated along a nonzero direction");
    }
    if let Some(value) = f.recession_exact(z) {
        return Ok(RecessionEstimate {
            value,
            converged: true,
        });
    }
    let mut quotients = Vec::new();
    for t in schedule.ts() {
        let q = f.eval(&scale(z, t)) / t;
        if !q.is_finite() {
            let value = quotients.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            return Ok(RecessionEstimate {
                value,
                converged: false,
            });
        }
        quotients.push(q);
    }
    let value = quotients.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail = &quotients[quotients.len().saturating_sub(3)..];
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let converged = hi - lo <= 1e-2 * hi.abs().max(lo.abs()).max(1e-12);
    Ok(RecessionEstimate { value, converged })
}

/// f^∞(z), exact or a converged estimate; zero at z = 0.
pub fn recession_value(f: &dyn Integrand, z: &[f64]) -> Result<f64> {
    if norm(z) == 0.0 {
        return Ok(0.0);
    }
    if let Some(v) = f.recession_exact(z) {
        return Ok(v);
    }
    let est = recession_estimate(f, z, &RecessionSchedule::default())?;
    if est.converged {
        Ok(est.value)
    } else {
        Err(Error::Recession(f.name()))
    }
}

/// Raw bound ‖DΦ‖∞ ≤ 3‖DTΦ‖∞; callers choose their own normalization.
pub const DPHI_OVER_DTPHI: f64 = 3.0;

/// Tolerance for deciding that a point lies on the unit sphere.
const SPHERE_TOL: f64 = 1e-12;

/// TΦ on the closed unit ball: (1−|ẑ|)Φ(ẑ/(1−|ẑ|)) inside, Φ^∞ on the sphere.
pub struct TransformedIntegrand<'a> {
    source: &'a dyn Integrand,
}

pub fn transform_t(f: &dyn Integrand) -> TransformedIntegrand<'_> {
    TransformedIntegrand { source: f }
}

impl TransformedIntegrand<'_> {
    pub fn eval(&self, zhat: &[f64]) -> Result<f64> {
        let r = norm(zhat);
        if r > 1.0 + SPHERE_TOL {
            return input(format!("|ẑ| = {r} lies outside the closed unit ball"));
        }
        if r >= 1.0 - SPHERE_TOL {
            return recession_value(self.source, &scale(zhat, 1.0 / r));
        }
        let s = 1.0 - r;
        Ok(s * self.source.eval(&scale(zhat, 1.0 / s)))
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }
}

/// Radial-angular sampling of the closed unit ball.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallSampling {
    pub radial: usize,
    pub angular: usize,
}

impl Default for BallSampling {
    fn default() -> Self {
        Self {
            radial: 200,
            angular: 256,
        }
    }
}

impl BallSampling {
    /// Sample points ẑ with |ẑ| < 1 plus points on the sphere.
    pub fn points(&self, dim: usize) -> Vec<Vec<f64>> {
        let dirs = SphereSampler::new(self.angular).points(dim);
        let mut out = vec![vec![0.0; dim]];
        for k in 1..self.radial {
            let r = k as f64 / self.radial as f64;
            out.extend(dirs.iter().map(|d| scale(d, r)));
        }
        out.extend(dirs);
        out
    }
}

/// ‖Φ‖ = sup |Φ(z)|/(1+|z|), estimated on a radial-angular grid whose
/// outermost shell uses the recession function.
pub fn hnorm(f: &dyn Integrand, sampling: &BallSampling) -> Result<f64> {
    let dirs = SphereSampler::new(sampling.angular).points(f.dim());
    let mut best = f.eval(&vec![0.0; f.dim()]).abs();
    // radii in z-space spread geometrically up to 1e6
    for k in 0..sampling.radial {
        let rho = 1e-3 * 1e9f64.powf(k as f64 / sampling.radial.max(2).saturating_sub(1) as f64);
        for d in &dirs {
            best = best.max(f.eval(&scale(d, rho)).abs() / (1.0 + rho));
        }
    }
    for d in &dirs {
        best = best.max(recession_value(f, d)?.abs());
    }
    Ok(best)
}

/// sup |TΦ| + lip(TΦ) on the ball, estimated from sampled values and
/// finite-difference gradients at interior sample points.
pub fn t_lip_norm(f: &dyn Integrand, sampling: &BallSampling) -> Result<f64> {
    let t = transform_t(f);
    let mut sup = 0.0_f64;
    let mut lip = 0.0_f64;
    let h = 1e-5;
    for p in sampling.points(f.dim()) {
        let v = t.eval(&p)?;
        sup = sup.max(v.abs());
        if norm(&p) < 1.0 - 4.0 * h {
            let g = fd_gradient(|x| t.eval(x).unwrap_or(f64::NAN), &p);
            let gn = norm(&g);
            if gn.is_finite() {
                lip = lip.max(gn);
            }
        }
    }
    Ok(sup + lip)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Random base points in the ball of radius `radius` (the origin is always included).
    pub base_points: usize,
    pub radius: f64,
    pub scales: Vec<f64>,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            base_points: 32,
            radius: 2.0,
            scales: vec![0.25, 0.5, 1.0, 2.0],
            seed: 0,
        }
    }
}

impl ProbeConfig {
    fn bases(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = vec![vec![0.0; dim]];
        out.extend((0..self.base_points).map(|_| random_in_ball(dim, self.radius, &mut rng)));
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlackWitness {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlackReport {
    /// Smallest slack seen; negative means a violation.
    pub worst_slack: f64,
    pub witness: Option<SlackWitness>,
    pub checks: usize,
}

impl SlackReport {
    fn new() -> Self {
        Self {
            worst_slack: f64::INFINITY,
            witness: None,
            checks: 0,
        }
    }

    fn record(&mut self, slack: f64, z: &[f64], w: &[f64], theta: f64) {
        self.checks += 1;
        if slack < self.worst_slack {
            self.worst_slack = slack;
            self.witness = Some(SlackWitness {
                z: z.to_vec(),
                w: w.to_vec(),
                theta,
            });
        }
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.worst_slack >= -tol
    }
}

/// Directional convexity along cone directions:
/// slack = θf(z+w') + (1−θ)f(z) − f(z+θw') for θ ∈ {¼, ½, ¾}, w' = s·w.
pub fn check_lambda_convexity(
    f: &dyn Integrand,
    cone_samples: &[Vec<f64>],
    probe: &ProbeConfig,
) -> Result<SlackReport> {
    if cone_samples.is_empty() {
        return input("cone sample list is empty");
    }
    let mut report = SlackReport::new();
    for z in probe.bases(f.dim()) {
        let fz = f.eval(&z);
        for w in cone_samples {
            for &s in &probe.scales {
                let ws = scale(w, s);
                let f_end = f.eval(&add(&z, &ws));
                for theta in [0.25, 0.5, 0.75] {
                    let mid = f.eval(&add(&z, &scale(&ws, theta)));
                    let slack = theta * f_end + (1.0 - theta) * fz - mid;
                    report.record(slack, &z, &ws, theta);
                }
            }
        }
    }
    Ok(report)
}

/// slack = f(z) + f^∞(w) − f(z+w) over probe points and scaled cone directions.
pub fn three_slope_check(
    f: &dyn Integrand,
    cone_samples: &[Vec<f64>],
    probe: &ProbeConfig,
) -> Result<SlackReport> {
    if cone_samples.is_empty() {
        return input("cone sample list is empty");
    }
    let mut report = SlackReport::new();
    for z in probe.bases(f.dim()) {
        let fz = f.eval(&z);
        for w in cone_samples {
            for &s in &probe.scales {
                let ws = scale(w, s);
                let slack = fz + recession_value(f, &ws)? - f.eval(&add(&z, &ws));
                report.record(slack, &z, &ws, 1.0);
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClarkeConfig {
    pub count: usize,
    pub radius: f64,
    /// Fraction of the samples drawn from shrinking clouds around the origin.
    pub local_fraction: f64,
    pub seed: u64,
}

impl Default for ClarkeConfig {
    fn default() -> Self {
        Self {
            count: 4096,
            radius: 1e3,
            local_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Support function G(z) = max over sampled gradients ζ of ζ·z.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClarkeSupport {
    pub gradients: Vec<Vec<f64>>,
    pub skipped: usize,
}

impl ClarkeSupport {
    pub fn eval(&self, z: &[f64]) -> f64 {
        self.gradients
            .iter()
            .map(|g| dot(g, z))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Add gradients at `points`; non-finite gradients are skipped.
    pub fn add_points(&mut self, f: &dyn Integrand, points: &[Vec<f64>]) {
        for p in points {
            let g = f.gradient(p);
            if g.iter().all(|x| x.is_finite()) {
                self.gradients.push(g);
            } else {
                log::warn!("gradient of {} not finite at {:?}; sample skipped", f.name(), p);
                self.skipped += 1;
            }
        }
    }
}

pub fn clarke_support_function(f: &dyn Integrand, cfg: &ClarkeConfig) -> ClarkeSupport {
    let dim = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let local = ((cfg.count as f64) * cfg.local_fraction.clamp(0.0, 1.0)) as usize;
    let mut points = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count - local {
        points.push(random_in_ball(dim, cfg.radius, &mut rng));
    }
    for k in 0..local {
        // radii 1e-3 .. 1 cycling through decades
        let r = 10f64.powf(-3.0 + 3.0 * (k % 16) as f64 / 15.0);
        points.push(scale(&random_unit(dim, &mut rng), r));
    }
    let mut support = ClarkeSupport { gradients: Vec::with_capacity(points.len()), skipped: 0 };
    support.add_points(f, &points);
    support
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn area2() -> CatalogIntegrand {
        CatalogIntegrand::Area { dim: 2 }
    }

    #[test]
    fn catalog_build_validates() {
        assert!(CatalogIntegrand::build("two-well", 2, &[1.0, 0.0, 0.1]).is_ok());
        assert!(CatalogIntegrand::build("two-well", 2, &[1.0]).is_err());
        assert!(CatalogIntegrand::build("norm", 2, &[1.0]).is_err());
        assert!(CatalogIntegrand::build("abs-diff", 1, &[]).is_err());
        assert!(CatalogIntegrand::build("bogus", 2, &[]).is_err());
    }

    #[test]
    fn recession_of_area() {
        let r = recession_estimate(
            &FnIntegrand::new("area-no-exact", 2, 1.0, |z: &[f64]| (1.0 + dot(z, z)).sqrt()),
            &[3.0, 4.0],
            &RecessionSchedule::default(),
        )
        .unwrap();
        assert!((r.value - 5.0).abs() < 1e-3);
        assert!(r.converged);
    }

    #[test]
    fn recession_of_linear_is_exact() {
        let f = CatalogIntegrand::Linear { a: vec![2.0, -1.0] };
        let r = recession_estimate(&f, &[0.5, 0.25], &RecessionSchedule::default()).unwrap();
        assert_eq!(r.value, f.eval(&[0.5, 0.25]));
        assert!(r.converged);
    }

    #[test]
    fn recession_with_bounded_oscillation() {
        let f = FnIntegrand::new("norm+sin", 2, 2.0, |z: &[f64]| norm(z) + norm(z).sin());
        let r = recession_estimate(&f, &[0.6, 0.8], &RecessionSchedule::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-2, "{}", r.value);
        assert!(r.converged);
    }

    #[test]
    fn recession_overflow_is_not_converged() {
        let f = FnIntegrand::new("blowup", 1, 1.0, |z: &[f64]| {
            if z[0].abs() > 1e4 {
                f64::INFINITY
            } else {
                z[0]
            }
        });
        let r = recession_estimate(&f, &[1.0], &RecessionSchedule::default()).unwrap();
        assert!(!r.converged);
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!(recession_estimate(&f, &[0.0], &RecessionSchedule::default()).is_err());
    }

    #[test]
    fn homogeneous_recession_reproduces_values() {
        let f = FnIntegrand::new("abs-diff-closure", 2, 1.0, |z: &[f64]| z[0].abs() - 2.0 * z[1].abs());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let z = vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let r = recession_estimate(&f, &z, &RecessionSchedule::default()).unwrap();
            assert!((r.value - f.eval(&z)).abs() <= 1e-12 * (1.0 + f.eval(&z).abs()));
        }
    }

    #[test]
    fn transform_examples() {
        let n = CatalogIntegrand::Norm { dim: 2 };
        assert!((transform_t(&n).eval(&[0.3, 0.4]).unwrap() - 0.5).abs() < 1e-14);
        let one = FnIntegrand::new("one", 2, 1.0, |_: &[f64]| 1.0).with_recession(|_: &[f64]| 0.0);
        let t = transform_t(&one);
        assert!((t.eval(&[0.3, 0.4]).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(t.eval(&[0.6, 0.8]).unwrap(), 0.0);
        let a = area2();
        assert!((transform_t(&a).eval(&[0.6, 0.8]).unwrap() - 1.0).abs() < 1e-14);
        assert!(transform_t(&a).eval(&[1.0, 0.5]).is_err());
        // continuity up to the sphere
        let near = transform_t(&a).eval(&[0.6 * 0.999999, 0.8 * 0.999999]).unwrap();
        assert!((near - 1.0).abs() < 1e-5);
    }

    #[test]
    fn hnorm_examples() {
        let s = BallSampling::default();
        assert!((hnorm(&CatalogIntegrand::Norm { dim: 2 }, &s).unwrap() - 1.0).abs() < 1e-9);
        let zero = FnIntegrand::new("zero", 2, 0.0, |_: &[f64]| 0.0).with_recession(|_: &[f64]| 0.0);
        assert_eq!(hnorm(&zero, &s).unwrap(), 0.0);
        assert!((hnorm(&area2(), &s).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn t_is_an_isometry_on_the_catalog() {
        let entries = [
            CatalogIntegrand::Norm { dim: 2 },
            area2(),
            CatalogIntegrand::Linear { a: vec![0.5, -2.0] },
            CatalogIntegrand::TwoWell { a: vec![1.0, 0.0], eps: 0.1 },
            CatalogIntegrand::AbsDiff { dim: 2 },
        ];
        let s = BallSampling::default();
        let ball = BallSampling {
            radial: 97,
            angular: 101,
        };
        for f in &entries {
            let h = hnorm(f, &s).unwrap();
            let t = transform_t(f);
            let sup = ball
                .points(2)
                .iter()
                .map(|p| t.eval(p).unwrap().abs())
                .fold(0.0, f64::max);
            assert!((h - sup).abs() <= 0.05 * h, "{}: {h} vs {sup}", f.name());
        }
    }

    #[test]
    fn catalog_gradients_match_finite_differences() {
        let entries = [
            CatalogIntegrand::Norm { dim: 3 },
            CatalogIntegrand::Area { dim: 3 },
            CatalogIntegrand::Linear { a: vec![0.5, -2.0, 1.0] },
            CatalogIntegrand::TwoWell { a: vec![1.0, 0.0, -1.0], eps: 0.1 },
            CatalogIntegrand::AbsDiff { dim: 3 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in &entries {
            for _ in 0..100 {
                let z = random_in_ball(3, 3.0, &mut rng);
                let g = f.gradient(&z);
                let fd = fd_gradient(|x| f.eval(x), &z);
                let err = norm(&sub(&g, &fd));
                assert!(err <= 1e-4 * norm(&g).max(1.0), "{}: {g:?} vs {fd:?}", f.name());
            }
        }
    }

    #[test]
    fn lambda_convexity_examples() {
        let cone: Vec<Vec<f64>> = SphereSampler::new(16).points(2);
        let probe = ProbeConfig::default();
        let n = CatalogIntegrand::Norm { dim: 2 };
        assert!(check_lambda_convexity(&n, &cone, &probe).unwrap().passed(1e-12));

        let neg = FnIntegrand::new("-norm", 2, 1.0, |z: &[f64]| -norm(z));
        let r = check_lambda_convexity(&neg, &cone, &probe).unwrap();
        assert!(r.worst_slack < -0.1, "{}", r.worst_slack);
        // dense-scan oracle: z = (1,0), w = (0,2), θ = ½ gives −√2 vs −(√5+1)/2
        let oracle = 0.5 * (-(5f64.sqrt())) + 0.5 * (-1.0) + 2f64.sqrt();
        assert!(oracle < -0.1);

        let ad = CatalogIntegrand::AbsDiff { dim: 2 };
        let axis = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        assert!(check_lambda_convexity(&ad, &axis, &probe).unwrap().passed(1e-12));
        assert!(check_lambda_convexity(&ad, &[], &probe).is_err());
    }

    #[test]
    fn three_slope_examples() {
        let cone: Vec<Vec<f64>> = SphereSampler::new(16).points(2);
        let probe = ProbeConfig::default();
        let n = CatalogIntegrand::Norm { dim: 2 };
        assert!(three_slope_check(&n, &cone, &probe).unwrap().passed(1e-12));
        let a = area2();
        assert!(three_slope_check(&a, &cone, &probe).unwrap().passed(1e-12));
        let at_origin = a.eval(&[0.0, 0.0]) + recession_value(&a, &[1.0, 0.0]).unwrap()
            - a.eval(&[1.0, 0.0]);
        assert!((at_origin - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        let l = CatalogIntegrand::Linear { a: vec![1.0, 2.0] };
        let r = three_slope_check(&l, &cone, &probe).unwrap();
        assert!(r.worst_slack.abs() < 1e-12);
    }

    #[test]
    fn clarke_support_examples() {
        let cfg = ClarkeConfig::default();
        let a = area2();
        let g = clarke_support_function(&a, &cfg);
        for d in SphereSampler::new(100).points(2) {
            let gv = g.eval(&d);
            assert!((gv - 1.0).abs() < 1e-3, "{gv}");
        }
        let l = CatalogIntegrand::Linear { a: vec![1.5, -0.5] };
        let g = clarke_support_function(&l, &cfg);
        assert!((g.eval(&[0.2, 0.7]) - l.eval(&[0.2, 0.7])).abs() < 1e-15);
        // G dominates f^∞ everywhere, with equality on the cone of a 1-homogeneous entry
        let ad = CatalogIntegrand::AbsDiff { dim: 2 };
        let g = clarke_support_function(&ad, &cfg);
        for d in SphereSampler::new(50).points(2) {
            assert!(g.eval(&d) >= ad.recession_exact(&d).unwrap() - 1e-6);
        }
        assert!((g.eval(&[1.0, 0.0]) - 1.0).abs() < 1e-12);
    }
}
