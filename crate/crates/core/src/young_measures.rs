//! Discrete generalized Young measures on the unit cube: barycentres,
//! pairings, elementary measures and Jensen-type certificates.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use crate::envelope::{cone_directions, lamination_envelope, LaminationConfig};
use crate::error::{input, Result};
use crate::flat_metric::{LiftedPair, Metric, PointCloudMeasure};
use crate::grid::GridField;
use crate::integrands::{clarke_support_function, recession_value, ClarkeConfig, Integrand, SharedIntegrand};
use crate::linalg::{add, axpy, norm, scale, sub};
use crate::symbols::{wave_cone_membership, ConeSearch, OperatorSpec};

pub const WEIGHT_TOL: f64 = 1e-12;
pub const UNIT_TOL: f64 = 1e-10;

/// Weighted point, stored in files as `[w, z...]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightedPoint {
    pub weight: f64,
    pub point: Vec<f64>,
}

impl WeightedPoint {
    pub fn new(weight: f64, point: Vec<f64>) -> Self {
        Self { weight, point }
    }
}

impl TryFrom<Vec<f64>> for WeightedPoint {
    type Error = crate::Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        match v.split_first() {
            Some((&w, rest)) if !rest.is_empty() => Ok(Self::new(w, rest.to_vec())),
            _ => input("weighted point needs a weight and at least one coordinate"),
        }
    }
}

impl From<WeightedPoint> for Vec<f64> {
    fn from(p: WeightedPoint) -> Self {
        std::iter::once(p.weight).chain(p.point).collect()
    }
}

/// Σ wᵢ zᵢ.
pub fn mean(atoms: &[WeightedPoint], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for a in atoms {
        axpy(&mut m, a.weight, &a.point);
    }
    m
}

fn total_weight(atoms: &[WeightedPoint]) -> f64 {
    atoms.iter().map(|a| a.weight).sum()
}

/// ∫f dμ over a weighted point list.
fn integrate(atoms: &[WeightedPoint], f: impl Fn(&[f64]) -> f64) -> f64 {
    atoms.iter().map(|a| a.weight * f(&a.point)).sum()
}

fn integrate_recession(atoms: &[WeightedPoint], f: &dyn Integrand) -> Result<f64> {
    let mut total = 0.0;
    for a in atoms {
        total += a.weight * recession_value(f, &a.point)?;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Oscillation measure ν_x.
    pub osc: Vec<WeightedPoint>,
    /// Density λ^a(x) of the absolutely continuous concentration.
    #[serde(default)]
    pub lam_a: f64,
    /// Concentration-angle measure ν_x^∞.
    #[serde(default)]
    pub sphere: Vec<WeightedPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularAtom {
    pub x: Vec<f64>,
    pub mass: f64,
    pub sphere: Vec<WeightedPoint>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YoungMeasureFile {
    pub n: usize,
    pub grid: usize,
    pub cells: Vec<Cell>,
    #[serde(default)]
    pub singular: Vec<SingularAtom>,
}

/// Young measure on the unit cube (n ≤ 2) with piecewise-constant cell data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "YoungMeasureFile", into = "YoungMeasureFile")]
pub struct DiscreteYoungMeasure {
    n: usize,
    grid: usize,
    dim: usize,
    cells: Vec<Cell>,
    singular: Vec<SingularAtom>,
}

impl TryFrom<YoungMeasureFile> for DiscreteYoungMeasure {
    type Error = crate::Error;
    fn try_from(f: YoungMeasureFile) -> Result<Self> {
        Self::new(f.n, f.grid, f.cells, f.singular)
    }
}

impl From<DiscreteYoungMeasure> for YoungMeasureFile {
    fn from(m: DiscreteYoungMeasure) -> Self {
        Self {
            n: m.n,
            grid: m.grid,
            cells: m.cells,
            singular: m.singular,
        }
    }
}

fn check_probability(atoms: &[WeightedPoint], dim: usize, what: &str) -> Result<()> {
    if atoms.is_empty() {
        return input(format!("{what} is empty"));
    }
    for a in atoms {
        if a.point.len() != dim {
            return input(format!("{what} atom has dimension {}, expected {dim}", a.point.len()));
        }
        if !(a.weight > 0.0) || !a.weight.is_finite() || a.point.iter().any(|x| !x.is_finite()) {
            return input(format!("{what} atom {:?} has a non-positive or non-finite entry", a));
        }
    }
    let total = total_weight(atoms);
    if (total - 1.0).abs() > WEIGHT_TOL * atoms.len().max(1) as f64 {
        return input(format!("{what} weights sum to {total}, not 1"));
    }
    Ok(())
}

fn check_sphere(atoms: &[WeightedPoint], dim: usize, what: &str) -> Result<()> {
    check_probability(atoms, dim, what)?;
    for a in atoms {
        let r = norm(&a.point);
        if (r - 1.0).abs() > UNIT_TOL {
            return input(format!("{what} atom {:?} has norm {r}, not 1", a.point));
        }
    }
    Ok(())
}

fn check_location(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n || x.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
        return input(format!("singular atom location {x:?} is not in the open unit cube of dimension {n}"));
    }
    Ok(())
}

impl DiscreteYoungMeasure {
    pub fn new(n: usize, grid: usize, cells: Vec<Cell>, singular: Vec<SingularAtom>) -> Result<Self> {
        if !(1..=2).contains(&n) || grid == 0 {
            return input(format!("Young measures live on grids of dimension 1 or 2 (got n = {n}, grid = {grid})"));
        }
        if cells.len() != grid.pow(n as u32) {
            return input(format!("expected {} cells, found {}", grid.pow(n as u32), cells.len()));
        }
        let dim = cells
            .iter()
            .flat_map(|c| c.osc.first())
            .map(|a| a.point.len())
            .next()
            .ok_or_else(|| crate::Error::Input("no oscillation atoms".into()))?;
        for (k, c) in cells.iter().enumerate() {
            check_probability(&c.osc, dim, &format!("cell {k} oscillation"))?;
            if !(c.lam_a >= 0.0) || !c.lam_a.is_finite() {
                return input(format!("cell {k} has concentration density {}", c.lam_a));
            }
            if c.lam_a > 0.0 || !c.sphere.is_empty() {
                check_sphere(&c.sphere, dim, &format!("cell {k} sphere measure"))?;
            }
        }
        for (k, s) in singular.iter().enumerate() {
            check_location(&s.x, n)?;
            if !(s.mass > 0.0) || !s.mass.is_finite() {
                return input(format!("singular atom {k} has mass {}", s.mass));
            }
            check_sphere(&s.sphere, dim, &format!("singular atom {k} sphere measure"))?;
        }
        Ok(Self {
            n,
            grid,
            dim,
            cells,
            singular,
        })
    }

    /// Same data in every cell.
    pub fn homogeneous(
        n: usize,
        grid: usize,
        osc: Vec<WeightedPoint>,
        lam_a: f64,
        sphere: Vec<WeightedPoint>,
    ) -> Result<Self> {
        let cell = Cell { osc, lam_a, sphere };
        Self::new(n, grid, vec![cell; grid.pow(n as u32)], vec![])
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn with_singular(self, singular: Vec<SingularAtom>) -> Result<Self> {
        Self::new(self.n, self.grid, self.cells, singular)
    }

    pub fn space_dim(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn singular(&self) -> &[SingularAtom] {
        &self.singular
    }

    pub fn cell_volume(&self) -> f64 {
        (self.grid as f64).powi(-(self.n as i32))
    }

    pub fn center(&self, c: usize) -> Vec<f64> {
        let mut idx = c;
        (0..self.n)
            .map(|_| {
                let i = idx % self.grid;
                idx /= self.grid;
                (i as f64 + 0.5) / self.grid as f64
            })
            .collect()
    }

    pub fn cell_of(&self, x: &[f64]) -> usize {
        let mut c = 0;
        let mut stride = 1;
        for &xi in x {
            let i = ((xi * self.grid as f64).floor() as isize).clamp(0, self.grid as isize - 1) as usize;
            c += i * stride;
            stride *= self.grid;
        }
        c
    }

    /// λ(Ω̄) = ∫λ^a dx + Σ singular masses.
    pub fn concentration_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.lam_a).sum::<f64>() * self.cell_volume()
            + self.singular.iter().map(|s| s.mass).sum::<f64>()
    }

    /// ⟨ν, η⊗Φ⟩.
    pub fn pair(&self, eta: &dyn Fn(&[f64]) -> f64, f: &dyn Integrand) -> Result<f64> {
        let vol = self.cell_volume();
        let mut total = 0.0;
        for (k, c) in self.cells.iter().enumerate() {
            let e = eta(&self.center(k));
            let mut inner = integrate(&c.osc, |z| f.eval(z));
            if c.lam_a > 0.0 {
                inner += c.lam_a * integrate_recession(&c.sphere, f)?;
            }
            total += vol * e * inner;
        }
        for s in &self.singular {
            total += s.mass * eta(&s.x) * integrate_recession(&s.sphere, f)?;
        }
        Ok(total)
    }

    /// Move cell concentrations with λ^a·vol above `threshold` to singular
    /// atoms at the cell centres.
    pub fn singularize(&self, threshold: f64) -> Result<Self> {
        let vol = self.cell_volume();
        let mut cells = self.cells.clone();
        let mut singular = self.singular.clone();
        for (k, c) in cells.iter_mut().enumerate() {
            if c.lam_a > 0.0 && c.lam_a * vol > threshold {
                singular.push(SingularAtom {
                    x: self.center(k),
                    mass: c.lam_a * vol,
                    sphere: std::mem::take(&mut c.sphere),
                });
                c.lam_a = 0.0;
            }
        }
        Self::new(self.n, self.grid, cells, singular)
    }

    /// x-integrated pair: μ⁰ = ∫ν_x dx, μ^∞ = ∫ν_x^∞ dλ(x).
    pub fn lifted_pair(&self) -> Result<LiftedPair> {
        let vol = self.cell_volume();
        let mut inner = Vec::new();
        let mut outer = Vec::new();
        for c in &self.cells {
            inner.extend(c.osc.iter().map(|a| (a.point.clone(), vol * a.weight)));
            outer.extend(c.sphere.iter().map(|a| (a.point.clone(), vol * c.lam_a * a.weight)));
        }
        for s in &self.singular {
            outer.extend(s.sphere.iter().map(|a| (a.point.clone(), s.mass * a.weight)));
        }
        outer.retain(|(_, w)| *w > 0.0);
        LiftedPair::new(
            PointCloudMeasure::new(Metric::Euclidean, inner)?,
            if outer.is_empty() {
                PointCloudMeasure::zero(Metric::Euclidean)
            } else {
                PointCloudMeasure::new(Metric::Euclidean, outer)?
            },
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorAtom {
    pub x: Vec<f64>,
    pub mass: f64,
    pub polar: Vec<f64>,
}

/// v = v^a dx + Σ mass·polar·δ_x on the unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorMeasure {
    n: usize,
    grid: usize,
    dim: usize,
    ac: Vec<Vec<f64>>,
    atoms: Vec<VectorAtom>,
}

impl VectorMeasure {
    pub fn new(n: usize, grid: usize, ac: Vec<Vec<f64>>, atoms: Vec<VectorAtom>) -> Result<Self> {
        if !(1..=2).contains(&n) || grid == 0 || ac.len() != grid.pow(n as u32) {
            return input("vector measure density does not match its grid");
        }
        let dim = ac[0].len();
        if dim == 0 || ac.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return input("vector measure density has inconsistent or non-finite entries");
        }
        for a in &atoms {
            check_location(&a.x, n)?;
            if !(a.mass > 0.0) || !a.mass.is_finite() {
                return input(format!("vector atom mass {} is not positive", a.mass));
            }
            if a.polar.len() != dim || (norm(&a.polar) - 1.0).abs() > UNIT_TOL {
                return input(format!("vector atom polar {:?} is not a unit vector of dimension {dim}", a.polar));
            }
        }
        Ok(Self { n, grid, dim, ac, atoms })
    }

    pub fn from_field(v: &GridField) -> Self {
        let ac = (0..v.cells()).map(|c| v.value(c).to_vec()).collect();
        Self {
            n: v.space_dim(),
            grid: v.grid(),
            dim: v.dim(),
            ac,
            atoms: vec![],
        }
    }

    pub fn with_atoms(self, atoms: Vec<VectorAtom>) -> Result<Self> {
        Self::new(self.n, self.grid, self.ac, atoms)
    }

    pub fn space_dim(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn density(&self) -> &[Vec<f64>] {
        &self.ac
    }

    pub fn atoms(&self) -> &[VectorAtom] {
        &self.atoms
    }

    pub fn cell_volume(&self) -> f64 {
        (self.grid as f64).powi(-(self.n as i32))
    }

    pub fn total_variation(&self) -> f64 {
        self.ac.iter().map(|v| norm(v)).sum::<f64>() * self.cell_volume()
            + self.atoms.iter().map(|a| a.mass).sum::<f64>()
    }

    /// Density field with atoms smeared over the cell that contains them.
    pub fn to_field(&self) -> Result<GridField> {
        let mut f = GridField::from_values(self.n, self.grid, self.dim, self.ac.concat())?;
        let vol = self.cell_volume();
        for a in &self.atoms {
            let c = f.cell_of(&a.x);
            axpy(f.value_mut(c), a.mass / vol, &a.polar);
        }
        Ok(f)
    }
}

/// Barycentre ν̄_x + λ^a(x)ν̄_x^∞ on cells and ν̄^∞ λ^s on atoms.
pub fn barycentre(nu: &DiscreteYoungMeasure) -> VectorMeasure {
    let dim = nu.dim;
    let ac = nu
        .cells
        .iter()
        .map(|c| {
            let mut m = mean(&c.osc, dim);
            if c.lam_a > 0.0 {
                axpy(&mut m, c.lam_a, &mean(&c.sphere, dim));
            }
            m
        })
        .collect();
    let mut atoms = Vec::new();
    for s in &nu.singular {
        let m = mean(&s.sphere, dim);
        let r = norm(&m);
        if r <= 1e-14 {
            log::warn!("singular atom at {:?} has vanishing angular mean; dropped from the barycentre", s.x);
            continue;
        }
        atoms.push(VectorAtom {
            x: s.x.clone(),
            mass: s.mass * r,
            polar: scale(&m, 1.0 / r),
        });
    }
    VectorMeasure {
        n: nu.n,
        grid: nu.grid,
        dim,
        ac,
        atoms,
    }
}

/// Elementary Young measure ε_v.
pub fn elementary(v: &VectorMeasure) -> DiscreteYoungMeasure {
    let cells = v
        .ac
        .iter()
        .map(|z| Cell {
            osc: vec![WeightedPoint::new(1.0, z.clone())],
            lam_a: 0.0,
            sphere: vec![],
        })
        .collect();
    let singular = v
        .atoms
        .iter()
        .map(|a| SingularAtom {
            x: a.x.clone(),
            mass: a.mass,
            sphere: vec![WeightedPoint::new(1.0, a.polar.clone())],
        })
        .collect();
    DiscreteYoungMeasure {
        n: v.n,
        grid: v.grid,
        dim: v.dim,
        cells,
        singular,
    }
}

/// max over nonzero non-Nyquist frequencies m of
/// ‖A(m)v̂(m)‖ / ((1+|m|)^k · |v|(Ω)), atoms smeared over one cell.
pub fn afree_residual(v: &VectorMeasure, op: &OperatorSpec) -> Result<f64> {
    if op.space_dim() != v.n || op.dim_domain() != v.dim {
        return input("operator does not act on this vector measure");
    }
    let field = v.to_field()?;
    let tv = v.total_variation();
    if tv == 0.0 {
        return Ok(0.0);
    }
    let spec = field.spectrum();
    let k = op.order() as i32;
    let mut worst = 0.0_f64;
    for c in 0..field.cells() {
        let m: Vec<f64> = field.frequency(c).iter().map(|&x| x as f64).collect();
        if field.is_nyquist(c) || m.iter().all(|&x| x == 0.0) {
            continue;
        }
        let sym = op.symbol_matrix(&m);
        let mut r2 = 0.0;
        for i in 0..sym.nrows() {
            let mut acc = rustfft::num_complex::Complex64::new(0.0, 0.0);
            for (j, s) in spec.iter().enumerate() {
                acc += s[c] * sym[(i, j)];
            }
            r2 += acc.norm_sqr();
        }
        worst = worst.max(r2.sqrt() / ((1.0 + norm(&m)).powi(k) * tv));
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Slack {
    pub integrand: String,
    /// Cell index or singular atom index.
    pub index: usize,
    pub slack: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JensenReport {
    pub entries: Vec<Slack>,
    pub worst: Option<Slack>,
    pub passed: bool,
}

impl JensenReport {
    fn from_entries(entries: Vec<Slack>) -> Self {
        let worst = entries.iter().min_by(|a, b| a.slack.total_cmp(&b.slack)).cloned();
        let passed = entries.iter().all(|s| s.passed);
        Self { entries, worst, passed }
    }

    pub fn worst_slack(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |s| s.slack)
    }
}

/// Per cell: ∫f dν_x + λ^a∫f^∞ dν_x^∞ − f(ν̄_x + λ^a ν̄_x^∞).
pub fn jensen_regular(nu: &DiscreteYoungMeasure, integrands: &[&dyn Integrand]) -> Result<JensenReport> {
    let dim = nu.dim;
    let mut entries = Vec::new();
    for f in integrands {
        if f.dim() != dim {
            return input(format!("integrand {} has dimension {}, measure {dim}", f.name(), f.dim()));
        }
        for (k, c) in nu.cells.iter().enumerate() {
            let osc_mean = mean(&c.osc, dim);
            let mut lhs = integrate(&c.osc, |z| f.eval(z));
            let mut bar = osc_mean.clone();
            if c.lam_a > 0.0 {
                lhs += c.lam_a * integrate_recession(&c.sphere, *f)?;
                axpy(&mut bar, c.lam_a, &mean(&c.sphere, dim));
            }
            let slack = lhs - f.eval(&bar);
            entries.push(Slack {
                integrand: f.name(),
                index: k,
                slack,
                passed: slack >= -1e-6 * (1.0 + norm(&osc_mean)),
            });
        }
    }
    Ok(JensenReport::from_entries(entries))
}

/// Per singular atom: ∫f^∞ dν^∞ − f^∞(ν̄^∞).
pub fn jensen_singular(nu: &DiscreteYoungMeasure, integrands: &[&dyn Integrand]) -> Result<JensenReport> {
    let mut entries = Vec::new();
    for f in integrands {
        if f.dim() != nu.dim {
            return input(format!("integrand {} has dimension {}, measure {}", f.name(), f.dim(), nu.dim));
        }
        for (k, s) in nu.singular.iter().enumerate() {
            let slack = integrate_recession(&s.sphere, *f)? - recession_value(*f, &mean(&s.sphere, nu.dim))?;
            entries.push(Slack {
                integrand: f.name(),
                index: k,
                slack,
                passed: slack >= -1e-6,
            });
        }
    }
    Ok(JensenReport::from_entries(entries))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrengthenedReport {
    /// ∫F^∞ dν^∞ − G(ν̄^∞).
    pub strengthened: f64,
    /// ∫F^∞ dν^∞ − F^∞(ν̄^∞).
    pub weak: f64,
    pub support_value: f64,
    pub recession_value: f64,
}

pub fn strengthened_jensen(
    nu_inf: &[WeightedPoint],
    f: &dyn Integrand,
    cfg: &ClarkeConfig,
) -> Result<StrengthenedReport> {
    let dim = f.dim();
    if nu_inf.iter().any(|a| a.point.len() != dim) {
        return input("sphere measure does not match the integrand dimension");
    }
    let mut g = clarke_support_function(f, cfg);
    let bar = mean(nu_inf, dim);
    // the far-field gradient along ν̄^∞ belongs to D and pins G(ν̄^∞) ≥ F^∞(ν̄^∞) up to the radius
    let r = norm(&bar);
    if r > 0.0 {
        g.add_points(f, &[scale(&bar, cfg.radius / r)]);
    }
    let integral = integrate_recession(nu_inf, f)?;
    let support_value = g.eval(&bar);
    let rec = recession_value(f, &bar)?;
    Ok(StrengthenedReport {
        strengthened: integral - support_value,
        weak: integral - rec,
        support_value,
        recession_value: rec,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateConfig {
    /// Slack below −tol·(1+|z|) is a violation.
    pub tol: f64,
    pub barycentre_tol: f64,
    pub lamination: LaminationConfig,
    pub cone_frequencies: usize,
    pub cone_per_kernel: usize,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            barycentre_tol: 1e-9,
            lamination: LaminationConfig::default(),
            cone_frequencies: 16,
            cone_per_kernel: 8,
        }
    }
}

impl CertificateConfig {
    /// Lattice and cone sampling sized for the dimension of V.
    pub fn for_dim(dim: usize) -> Self {
        if dim <= 2 {
            return Self::default();
        }
        Self {
            lamination: LaminationConfig::for_dim(dim),
            cone_frequencies: 8,
            cone_per_kernel: 4,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Violated { integrand: String, slack: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogeneousCertificate {
    pub barycentre_residual: f64,
    pub checks: Vec<(String, f64)>,
    pub verdict: Verdict,
    pub note: String,
}

/// Certificate integrands: convex catalog entries as given, the others
/// replaced by their lamination envelope along the wave cone of `op`.
pub fn certificate_integrands(
    catalog: &[SharedIntegrand],
    op: &OperatorSpec,
    cfg: &CertificateConfig,
) -> Result<Vec<SharedIntegrand>> {
    let dim = op.dim_domain();
    let mut cone = None;
    catalog
        .iter()
        .map(|f| {
            if f.dim() != dim {
                return input(format!("integrand {} has dimension {}, expected {dim}", f.name(), f.dim()));
            }
            if f.is_convex() {
                return Ok(f.clone());
            }
            let cone = cone.get_or_insert_with(|| cone_directions(op, cfg.cone_frequencies, cfg.cone_per_kernel));
            let env: SharedIntegrand = Arc::new(lamination_envelope(f.clone(), cone, &cfg.lamination)?);
            Ok(env)
        })
        .collect()
}

/// Necessary conditions for (ν⁰, ν^∞) to be generated at z: barycentre
/// identity and Jensen for every certificate integrand. Convex catalog
/// entries are used directly; the others through their lamination
/// envelope along the wave cone of `op`.
pub fn homogeneous_certificate(
    nu0: &[WeightedPoint],
    nu_inf: &[WeightedPoint],
    z: &[f64],
    catalog: &[SharedIntegrand],
    op: &OperatorSpec,
    cfg: &CertificateConfig,
) -> Result<HomogeneousCertificate> {
    if z.len() != op.dim_domain() {
        return input("z does not match the operator domain");
    }
    let prepared = certificate_integrands(catalog, op, cfg)?;
    check_certificate(nu0, nu_inf, z, &prepared, cfg)
}

/// Certificate against integrands already prepared by
/// [`certificate_integrands`].
pub fn check_certificate(
    nu0: &[WeightedPoint],
    nu_inf: &[WeightedPoint],
    z: &[f64],
    prepared: &[SharedIntegrand],
    cfg: &CertificateConfig,
) -> Result<HomogeneousCertificate> {
    let dim = z.len();
    check_probability(nu0, dim, "ν⁰")?;
    for a in nu_inf {
        if a.point.len() != dim || (norm(&a.point) - 1.0).abs() > UNIT_TOL || !(a.weight >= 0.0) {
            return input(format!("ν^∞ atom {:?} is not a non-negative weight on a unit vector", a));
        }
    }
    let bar = add(&mean(nu0, dim), &mean(nu_inf, dim));
    let barycentre_residual = norm(&sub(&bar, z));
    let mut checks = Vec::new();
    let mut worst: Option<(String, f64)> = None;
    let threshold = -cfg.tol * (1.0 + norm(z));
    for g in prepared {
        if g.dim() != dim {
            return input(format!("integrand {} has dimension {}, expected {dim}", g.name(), g.dim()));
        }
        let slack = integrate(nu0, |p| g.eval(p)) + integrate_recession(nu_inf, g.as_ref())? - g.eval(z);
        if slack < threshold && worst.as_ref().map_or(true, |w| slack < w.1) {
            worst = Some((g.name(), slack));
        }
        checks.push((g.name(), slack));
    }
    let verdict = if barycentre_residual > cfg.barycentre_tol {
        Verdict::Violated {
            integrand: "barycentre".into(),
            slack: -barycentre_residual,
        }
    } else {
        match worst {
            Some((integrand, slack)) => Verdict::Violated { integrand, slack },
            None => Verdict::Consistent,
        }
    };
    Ok(HomogeneousCertificate {
        barycentre_residual,
        checks,
        verdict,
        note: "necessary conditions over a finite catalog; consistency is evidence, not a proof of membership"
            .into(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolarCheck {
    pub x: Vec<f64>,
    pub residual: f64,
    pub member: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolarReport {
    pub afree_residual: f64,
    /// The measure itself is not discretely A-free, so the check proves nothing.
    pub vacuous: bool,
    pub atoms: Vec<PolarCheck>,
    pub passed: bool,
}

pub const POLAR_TOL: f64 = 1e-4;

pub fn polar_in_cone_check(v: &VectorMeasure, op: &OperatorSpec) -> Result<PolarReport> {
    let res = if v.grid % 2 == 0 && v.grid >= 2 {
        afree_residual(v, op)?
    } else {
        f64::NAN
    };
    let search = ConeSearch::default();
    let mut atoms = Vec::new();
    for a in &v.atoms {
        let m = wave_cone_membership(op, &a.polar, &search)?;
        atoms.push(PolarCheck {
            x: a.x.clone(),
            residual: m.residual,
            member: m.residual < POLAR_TOL,
        });
    }
    let passed = atoms.iter().all(|a| a.member);
    Ok(PolarReport {
        afree_residual: res,
        vacuous: !(res <= 1e-6),
        atoms,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrands::CatalogIntegrand;
    use crate::symbols::catalog;
    use std::f64::consts::PI;

    fn wp(w: f64, p: &[f64]) -> WeightedPoint {
        WeightedPoint::new(w, p.to_vec())
    }

    fn dirac(n: usize, grid: usize, z: &[f64]) -> DiscreteYoungMeasure {
        DiscreteYoungMeasure::homogeneous(n, grid, vec![wp(1.0, z)], 0.0, vec![]).unwrap()
    }

    #[test]
    fn file_round_trip_and_validation() {
        let text = r#"{"n":1,"grid":2,"cells":[{"osc":[[0.5,1,0],[0.5,-1,0]]},{"osc":[[1,0,0]],"lam_a":2,"sphere":[[1,0,1]]}],
            "singular":[{"x":[0.5],"mass":1,"sphere":[[1,1,0]]}]}"#;
        let m: DiscreteYoungMeasure = serde_json::from_str(text).unwrap();
        assert_eq!(m.dim(), 2);
        let back: DiscreteYoungMeasure = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let bad = text.replace("[[1,0,1]]", "[[1,0,2]]");
        assert!(serde_json::from_str::<DiscreteYoungMeasure>(&bad).is_err());
        let bad = text.replace("[[0.5,1,0],[0.5,-1,0]]", "[[0.5,1,0],[0.4,-1,0]]");
        assert!(serde_json::from_str::<DiscreteYoungMeasure>(&bad).is_err());
        let bad = text.replace(r#""x":[0.5]"#, r#""x":[1.0]"#);
        assert!(serde_json::from_str::<DiscreteYoungMeasure>(&bad).is_err());
    }

    #[test]
    fn barycentre_examples() {
        let m = dirac(2, 4, &[1.0, 2.0]);
        let b = barycentre(&m);
        assert!(b.density().iter().all(|v| v == &vec![1.0, 2.0]) && b.atoms().is_empty());

        let m = DiscreteYoungMeasure::homogeneous(2, 2, vec![wp(0.5, &[1.0, 2.0]), wp(0.5, &[-1.0, -2.0])], 0.0, vec![])
            .unwrap();
        assert!(barycentre(&m).density().iter().all(|v| norm(v) == 0.0));

        let w = [0.6, 0.8];
        let m = dirac(2, 2, &[0.0, 0.0])
            .with_singular(vec![SingularAtom { x: vec![0.3, 0.3], mass: 1.0, sphere: vec![wp(1.0, &w)] }])
            .unwrap();
        assert_eq!(
            barycentre(&m).atoms(),
            &[VectorAtom { x: vec![0.3, 0.3], mass: 1.0, polar: w.to_vec() }]
        );

        let m = dirac(2, 2, &[0.0, 0.0])
            .with_singular(vec![SingularAtom {
                x: vec![0.3, 0.3],
                mass: 1.0,
                sphere: vec![wp(0.5, &w), wp(0.5, &[-0.6, -0.8])],
            }])
            .unwrap();
        assert!(barycentre(&m).atoms().is_empty());
    }

    #[test]
    fn pairing_examples() {
        let one = |_: &[f64]| 1.0;
        let m = dirac(2, 4, &[3.0, 4.0]);
        assert!((m.pair(&one, &CatalogIntegrand::Norm { dim: 2 }).unwrap() - 5.0).abs() < 1e-12);

        let area = CatalogIntegrand::Area { dim: 2 };
        let t = 0.7;
        let base = dirac(2, 4, &[0.0, 0.0]);
        let with = base
            .clone()
            .with_singular(vec![SingularAtom { x: vec![0.5, 0.5], mass: t, sphere: vec![wp(1.0, &[0.6, 0.8])] }])
            .unwrap();
        let gap = with.pair(&one, &area).unwrap() - base.pair(&one, &area).unwrap();
        assert!((gap - t).abs() < 1e-12);

        // η(x) = x₁ against Φ(0) = 1 integrates to ½
        let m = dirac(1, 64, &[0.0]);
        let v = m.pair(&|x: &[f64]| x[0], &CatalogIntegrand::Area { dim: 1 }).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mass_normalization() {
        let m = DiscreteYoungMeasure::homogeneous(2, 2, vec![wp(1.0, &[0.0, 0.0])], 0.5, vec![wp(1.0, &[1.0, 0.0])])
            .unwrap()
            .with_singular(vec![SingularAtom { x: vec![0.2, 0.7], mass: 2.0, sphere: vec![wp(1.0, &[0.0, 1.0])] }])
            .unwrap();
        let f = crate::integrands::FnIntegrand::new("1+|z|", 2, 1.0, |z: &[f64]| 1.0 + norm(z)).with_recession(norm);
        let v = m.pair(&|_: &[f64]| 1.0, &f).unwrap();
        assert!((v - (1.0 + m.concentration_mass())).abs() < 1e-9);
    }

    #[test]
    fn elementary_pairing_identity() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        use rand::Rng;
        let ac: Vec<Vec<f64>> = (0..16).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
        let v = VectorMeasure::new(2, 4, ac.clone(), vec![VectorAtom { x: vec![0.4, 0.6], mass: 1.5, polar: vec![0.6, -0.8] }])
            .unwrap();
        let area = CatalogIntegrand::Area { dim: 2 };
        let eta = |x: &[f64]| 0.5 + 0.25 * x[0] - 0.1 * x[1];
        let e = elementary(&v);
        let direct = ac
            .iter()
            .enumerate()
            .map(|(k, z)| eta(&e.center(k)) * area.eval(z) / 16.0)
            .sum::<f64>()
            + 1.5 * eta(&[0.4, 0.6]);
        assert!((e.pair(&eta, &area).unwrap() - direct).abs() < 1e-10);
        assert_eq!(barycentre(&e), v);
    }

    #[test]
    fn afree_residual_examples() {
        let div2 = catalog::get("div2").unwrap();
        let c = VectorMeasure::new(2, 16, vec![vec![1.0, -2.0]; 256], vec![]).unwrap();
        assert_eq!(afree_residual(&c, &div2).unwrap(), 0.0);
        let wave = GridField::from_fn(2, 16, 2, |x| vec![0.0, (2.0 * PI * x[0]).sin()]).unwrap();
        assert!(afree_residual(&VectorMeasure::from_field(&wave), &div2).unwrap() <= 1e-8);
        let bad = GridField::from_fn(2, 16, 2, |x| vec![(2.0 * PI * x[0]).sin(), 0.0]).unwrap();
        assert!(afree_residual(&VectorMeasure::from_field(&bad), &div2).unwrap() > 1e-2);
    }

    #[test]
    fn jensen_examples() {
        let area: &dyn Integrand = &CatalogIntegrand::Area { dim: 2 };
        let norm_f: &dyn Integrand = &CatalogIntegrand::Norm { dim: 2 };
        let m = DiscreteYoungMeasure::homogeneous(
            2,
            2,
            vec![wp(0.3, &[1.0, 2.0]), wp(0.7, &[-1.0, 0.5])],
            0.4,
            vec![wp(0.5, &[1.0, 0.0]), wp(0.5, &[0.0, -1.0])],
        )
        .unwrap();
        assert!(jensen_regular(&m, &[area, norm_f]).unwrap().passed);
        let d = dirac(2, 2, &[0.3, -0.2]);
        assert!(jensen_regular(&d, &[area]).unwrap().worst_slack().abs() < 1e-15);

        let w = [0.6, 0.8];
        let single = d
            .clone()
            .with_singular(vec![SingularAtom { x: vec![0.5, 0.5], mass: 1.0, sphere: vec![wp(1.0, &w)] }])
            .unwrap();
        assert!(jensen_singular(&single, &[area]).unwrap().worst_slack().abs() < 1e-12);
        let split = d
            .with_singular(vec![SingularAtom {
                x: vec![0.5, 0.5],
                mass: 1.0,
                sphere: vec![wp(0.25, &w), wp(0.75, &[1.0, 0.0])],
            }])
            .unwrap();
        let s = jensen_singular(&split, &[norm_f]).unwrap().worst_slack();
        let bar = add(&scale(&w, 0.25), &[0.75, 0.0]);
        assert!((s - (1.0 - norm(&bar))).abs() < 1e-12);
    }

    #[test]
    fn strengthened_examples() {
        let cfg = ClarkeConfig::default();
        let nu = vec![wp(0.5, &[1.0, 0.0]), wp(0.5, &[0.0, 1.0])];
        let r = strengthened_jensen(&nu, &CatalogIntegrand::Area { dim: 2 }, &cfg).unwrap();
        assert!((r.strengthened - r.weak).abs() < 1e-3);

        // F(z) = |z₁| − |z₂| has Clarke gradients (±1, ±1), so G = |z₁| + |z₂|
        let f = CatalogIntegrand::AbsDiff { dim: 2 };
        let nu = vec![wp(0.5, &[1.0, 0.0]), wp(0.5, &[0.0, 1.0])];
        let r = strengthened_jensen(&nu, &f, &cfg).unwrap();
        assert!(r.weak.abs() < 1e-12);
        assert!((r.strengthened + 1.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn certificate_examples() {
        let op = catalog::get("curl2-vec").unwrap();
        let catalog: Vec<SharedIntegrand> = vec![
            CatalogIntegrand::Area { dim: 2 }.shared(),
            CatalogIntegrand::TwoWell { a: vec![1.0, 0.0], eps: 0.0 }.shared(),
        ];
        let cfg = CertificateConfig {
            lamination: LaminationConfig { points_per_axis: 31, ..Default::default() },
            cone_frequencies: 8,
            cone_per_kernel: 4,
            ..Default::default()
        };
        let z = [0.4, -0.3];
        let c = homogeneous_certificate(&[wp(1.0, &z)], &[], &z, &catalog, &op, &cfg).unwrap();
        assert_eq!(c.verdict, Verdict::Consistent);
        let lam = [wp(0.5, &[1.0, 0.0]), wp(0.5, &[-1.0, 0.0])];
        let c = homogeneous_certificate(&lam, &[], &[0.0, 0.0], &catalog, &op, &cfg).unwrap();
        assert_eq!(c.verdict, Verdict::Consistent);
        let c = homogeneous_certificate(&lam, &[], &[0.1, 0.0], &catalog, &op, &cfg).unwrap();
        assert!(matches!(c.verdict, Verdict::Violated { ref integrand, .. } if integrand == "barycentre"));
    }

    #[test]
    fn polar_examples() {
        let op = catalog::get("curl2-vec").unwrap();
        let v = VectorMeasure::new(2, 4, vec![vec![0.0, 0.0]; 16], vec![VectorAtom { x: vec![0.5, 0.5], mass: 1.0, polar: vec![0.6, 0.8] }])
            .unwrap();
        assert!(polar_in_cone_check(&v, &op).unwrap().passed);
        let div2 = catalog::get("div2").unwrap();
        assert!(polar_in_cone_check(&v, &div2).unwrap().passed);
        let curl_mat = catalog::get("curl2-mat").unwrap();
        let h = 0.5f64.sqrt();
        let v = VectorMeasure::new(2, 4, vec![vec![0.0; 4]; 16], vec![VectorAtom { x: vec![0.5, 0.5], mass: 1.0, polar: vec![h, 0.0, 0.0, h] }])
            .unwrap();
        let r = polar_in_cone_check(&v, &curl_mat).unwrap();
        assert!(!r.passed && r.vacuous);
    }
}
