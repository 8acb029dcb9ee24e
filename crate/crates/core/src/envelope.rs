//! Upper estimates of the A-quasiconvex envelope: grid relaxation over
//! periodic A-free test fields (or banded potentials) and iterated
//! lamination along the wave cone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::grid::{
    afree_mode_residual, apply_operator, apply_operator_adjoint, jet_sup_norm, potential_of, AFreeProjector,
    GridField,
};
use crate::integrands::{Integrand, SharedIntegrand};
use crate::linalg::{add, norm, normalized, scale};
use crate::sphere::SphereSampler;
use crate::symbols::{OperatorSpec, SymbolMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeMode {
    Potential,
    #[default]
    Projection,
    Lamination,
}

impl std::str::FromStr for EnvelopeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "potential" => Ok(Self::Potential),
            "projection" => Ok(Self::Projection),
            "lamination" => Ok(Self::Lamination),
            other => input(format!("unknown envelope mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    pub mode: EnvelopeMode,
    pub grid: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop when the objective improves by less than this (relative) over 10 iterations.
    pub tol: f64,
    /// Bound on the sup norm of the (l−1)-jet of the potential after tiling.
    pub eps_sup: Option<f64>,
    /// Largest tiling factor used to meet `eps_sup`.
    pub max_tiling: usize,
    pub seed: u64,
    pub lamination: LaminationConfig,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            mode: EnvelopeMode::Projection,
            grid: 32,
            restarts: 8,
            max_iters: 300,
            tol: 1e-9,
            eps_sup: None,
            max_tiling: 8,
            seed: 0,
            lamination: LaminationConfig::default(),
        }
    }
}

/// Constraint operator A with an optional potential operator B.
#[derive(Clone, Debug)]
pub struct OperatorPair {
    pub a: OperatorSpec,
    pub b: Option<OperatorSpec>,
}

impl OperatorPair {
    pub fn new(a: OperatorSpec, b: Option<OperatorSpec>) -> Result<Self> {
        if let Some(b) = &b {
            if b.dim_codomain() != a.dim_domain() || b.space_dim() != a.space_dim() {
                return input("potential operator does not map into the domain of A");
            }
        }
        Ok(Self { a, b })
    }

    fn require_b(&self, why: &str) -> Result<&OperatorSpec> {
        self.b
            .as_ref()
            .ok_or_else(|| Error::Input(format!("{why} needs a potential operator B")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeEstimate {
    pub z: Vec<f64>,
    pub value: f64,
    pub mode: EnvelopeMode,
    #[serde(rename = "N")]
    pub grid: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub residual_afree: f64,
    /// Test field v with value = mean f(z + v); absent in lamination mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<GridField>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<GridField>,
    /// Sup norm of the (l−1)-jet of the certificate's potential.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential_sup: Option<f64>,
    /// Tiling factor j after which the potential meets `eps_sup`.
    pub tiling: usize,
}

/// Report layout shared with the command line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub z: Vec<f64>,
    pub value: f64,
    pub mode: EnvelopeMode,
    #[serde(rename = "N")]
    pub grid: usize,
    pub restarts: usize,
    pub residual_afree: f64,
}

impl From<&EnvelopeEstimate> for EnvelopeReport {
    fn from(e: &EnvelopeEstimate) -> Self {
        Self {
            z: e.z.clone(),
            value: e.value,
            mode: e.mode,
            grid: e.grid,
            restarts: e.restarts,
            residual_afree: e.residual_afree,
        }
    }
}

/// Unit wave-cone directions: for each sampled frequency, `per_kernel`
/// unit combinations of an orthonormal kernel basis.
pub fn cone_directions(op: &OperatorSpec, xi_count: usize, per_kernel: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for xi in SphereSampler::new(xi_count).points(op.space_dim()) {
        let s = SymbolMatrix::from_matrix(xi.clone(), op.symbol_matrix(&xi));
        let k = s.kernel_basis.len();
        if k == 0 {
            continue;
        }
        for c in SphereSampler::new(per_kernel).points(k) {
            let mut v = vec![0.0; op.dim_domain()];
            for (ci, b) in c.iter().zip(&s.kernel_basis) {
                crate::linalg::axpy(&mut v, *ci, b);
            }
            if let Some(u) = normalized(&v) {
                let dup = out
                    .iter()
                    .any(|w| crate::linalg::dot(w, &u).abs() > 1.0 - 1e-12);
                if !dup {
                    out.push(u);
                }
            }
        }
    }
    out
}

/// Lattice frequency directions with entries in {0, ±1}, up to sign.
fn lattice_directions(n: usize) -> Vec<Vec<i64>> {
    match n {
        1 => vec![vec![1]],
        _ => vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![1, -1]],
    }
}

/// Best two-point split z = θz₊ + (1−θ)z₋ with z₊ − z₋ = s·e for fixed θ.
fn best_amplitude(f: &dyn Integrand, z: &[f64], e: &[f64], theta: f64, radius: f64) -> (f64, f64) {
    let phi = |s: f64| {
        theta * f.eval(&add(z, &scale(e, (1.0 - theta) * s))) + (1.0 - theta) * f.eval(&add(z, &scale(e, -theta * s)))
    };
    let steps = 400;
    let h = 2.0 * radius / steps as f64;
    let (mut best_s, mut best_v) = (0.0, phi(0.0));
    for k in 0..=steps {
        let s = -radius + k as f64 * h;
        let v = phi(s);
        if v < best_v {
            best_s = s;
            best_v = v;
        }
    }
    // golden-section refinement on the bracketing cell pair
    let (mut a, mut b) = (best_s - h, best_s + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = phi(d);
        }
    }
    let s = 0.5 * (a + b);
    let v = phi(s);
    if v < best_v {
        (s, v)
    } else {
        (best_s, best_v)
    }
}

struct Seed {
    field: GridField,
    predicted: f64,
}

/// Zero-mean square-wave laminates v = s·e·h((ξ·i) mod P) with even runs.
fn laminate_seeds(f: &dyn Integrand, z: &[f64], op: &OperatorSpec, grid: usize) -> Result<Vec<Seed>> {
    let n = op.space_dim();
    let radius = 4.0 * (1.0 + norm(z));
    let mut seeds = Vec::new();
    for xi in lattice_directions(n) {
        let xf: Vec<f64> = xi.iter().map(|&v| v as f64).collect();
        let s = SymbolMatrix::from_matrix(xf.clone(), op.symbol_matrix(&xf));
        let basis = &s.kernel_basis;
        let mut dirs: Vec<Vec<f64>> = basis.clone();
        for i in 0..basis.len() {
            for j in i + 1..basis.len() {
                dirs.push(scale(&add(&basis[i], &basis[j]), 0.5f64.sqrt()));
                dirs.push(scale(&add(&basis[i], &scale(&basis[j], -1.0)), 0.5f64.sqrt()));
            }
        }
        for e in dirs {
            for k in [1usize, 2, 4, 8] {
                let period = grid / k;
                if period < 4 || grid % k != 0 {
                    continue;
                }
                let mut best: Option<(usize, f64, f64)> = None;
                for r in (2..=period - 2).step_by(2) {
                    let theta = r as f64 / period as f64;
                    let (amp, v) = best_amplitude(f, z, &e, theta, radius);
                    if best.map_or(true, |(_, _, bv)| v < bv) {
                        best = Some((r, amp, v));
                    }
                }
                let Some((r, amp, v)) = best else { continue };
                let theta = r as f64 / period as f64;
                let mut field = GridField::zeros(n, grid, op.dim_domain())?;
                for c in 0..field.cells() {
                    let idx = field.multi_index(c);
                    let phase: i64 = idx.iter().zip(&xi).map(|(&i, &x)| i as i64 * x).sum();
                    let h = if (phase.rem_euclid(period as i64) as usize) < r {
                        1.0 - theta
                    } else {
                        -theta
                    };
                    field.value_mut(c).copy_from_slice(&scale(&e, amp * h));
                }
                seeds.push(Seed { field, predicted: v });
            }
        }
    }
    seeds.sort_by(|a, b| a.predicted.total_cmp(&b.predicted));
    Ok(seeds)
}

fn objective(f: &dyn Integrand, z: &[f64], v: &GridField) -> f64 {
    v.average(|x| f.eval(&add(z, x)))
}

fn gradient_field(f: &dyn Integrand, z: &[f64], v: &GridField) -> GridField {
    let mut g = v.clone();
    for c in 0..v.cells() {
        let gc = f.gradient(&add(z, v.value(c)));
        g.value_mut(c).copy_from_slice(&gc);
    }
    g
}

fn inner(a: &GridField, b: &GridField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() / a.cells() as f64
}

/// Feasible-set map for the iterates: the A-free projection, with the
/// potential clamped when a sup bound is active.
struct Feasible<'a> {
    proj: AFreeProjector,
    b: Option<&'a OperatorSpec>,
    bound: Option<f64>,
}

impl Feasible<'_> {
    fn apply(&self, v: &GridField) -> Result<GridField> {
        let v = self.proj.apply(v)?;
        match (self.b, self.bound) {
            (Some(b), Some(bound)) => {
                let u = clamp_potential(b, potential_of(b, &v)?, bound)?;
                self.proj.apply(&apply_operator(b, &u)?)
            }
            _ => Ok(v),
        }
    }
}

/// Enforce sup |D^{l−1}u| ≤ bound: pointwise clamping for l = 1, uniform
/// rescaling otherwise.
fn clamp_potential(b: &OperatorSpec, mut u: GridField, bound: f64) -> Result<GridField> {
    if b.order() == 1 {
        for c in 0..u.cells() {
            let r = norm(u.value(c));
            if r > bound {
                let s = bound / r;
                u.value_mut(c).iter_mut().for_each(|x| *x *= s);
            }
        }
        Ok(u)
    } else {
        let sup = jet_sup_norm(&u, b.order() - 1)?;
        Ok(if sup > bound { u.scaled(bound / sup) } else { u })
    }
}

struct Descent {
    value: f64,
    field: GridField,
    iterations: usize,
}

fn divergence_floor(f: &dyn Integrand, z: &[f64]) -> f64 {
    -10.0 * f.growth_constant() * (1.0 + norm(z))
}

fn guard(f: &dyn Integrand, z: &[f64], value: f64) -> Result<()> {
    let floor = divergence_floor(f, z);
    if value < floor {
        Err(Error::Divergence { value, floor })
    } else {
        Ok(())
    }
}

/// Projected gradient descent with Armijo backtracking.
fn descend_projection(
    f: &dyn Integrand,
    z: &[f64],
    start: GridField,
    feas: &Feasible,
    cfg: &EnvelopeConfig,
) -> Result<Descent> {
    let mut v = feas.apply(&start)?;
    let mut value = objective(f, z, &v);
    let mut alpha = 1.0;
    let mut history = vec![value];
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let g = gradient_field(f, z, &v);
        let d = feas.proj.apply(&g)?;
        let dd = inner(&g, &d);
        if dd <= 1e-30 {
            break;
        }
        let mut accepted = false;
        alpha *= 2.0;
        for _ in 0..50 {
            let cand = feas.apply(&v.axpy(-alpha, &d)?)?;
            let cv = objective(f, z, &cand);
            let decrease = inner(&g, &v.axpy(-1.0, &cand)?);
            if cv <= value - 1e-4 * decrease.max(0.0) && cv < value {
                v = cand;
                value = cv;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        guard(f, z, value)?;
        if !accepted {
            break;
        }
        history.push(value);
        if history.len() > 10 {
            let old = history[history.len() - 11];
            if old - value <= cfg.tol * (1.0 + value.abs()) {
                break;
            }
        }
    }
    Ok(Descent {
        value,
        field: v,
        iterations,
    })
}

/// Cells within two cells of the cube boundary are frozen at zero.
fn band_mask(u: &mut GridField) {
    let grid = u.grid();
    for c in 0..u.cells() {
        if u.multi_index(c).iter().any(|&i| i < 2 || i >= grid - 2) {
            u.value_mut(c).iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

fn descend_potential(
    f: &dyn Integrand,
    z: &[f64],
    b: &OperatorSpec,
    proj: &AFreeProjector,
    start: GridField,
    bound: Option<f64>,
    cfg: &EnvelopeConfig,
) -> Result<(Descent, GridField)> {
    let constrain = |mut u: GridField| -> Result<GridField> {
        band_mask(&mut u);
        match bound {
            Some(bd) => clamp_potential(b, u, bd),
            None => Ok(u),
        }
    };
    let mut u = constrain(start)?;
    let mut v = apply_operator(b, &u)?;
    let mut value = objective(f, z, &v);
    let mut alpha = 1.0;
    let mut history = vec![value];
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let g = gradient_field(f, z, &v);
        let grad_u = {
            let mut gu = apply_operator_adjoint(b, &g)?;
            band_mask(&mut gu);
            gu
        };
        // preconditioned direction first, plain gradient as fallback
        let pre = {
            let mut du = potential_of(b, &proj.apply(&g)?)?;
            band_mask(&mut du);
            du
        };
        let mut accepted = false;
        for (k, (dir, a0)) in [(&pre, alpha * 2.0), (&grad_u, 1e-3)].into_iter().enumerate() {
            if inner(&grad_u, dir) <= 1e-30 {
                continue;
            }
            let mut a = a0;
            for _ in 0..50 {
                let cu = constrain(u.axpy(-a, dir)?)?;
                let cv_field = apply_operator(b, &cu)?;
                let cv = objective(f, z, &cv_field);
                if cv < value {
                    if k == 0 {
                        alpha = a;
                    }
                    u = cu;
                    v = cv_field;
                    value = cv;
                    accepted = true;
                    break;
                }
                a *= 0.5;
            }
            if accepted {
                break;
            }
        }
        guard(f, z, value)?;
        if !accepted {
            break;
        }
        history.push(value);
        if history.len() > 10 {
            let old = history[history.len() - 11];
            if old - value <= cfg.tol * (1.0 + value.abs()) {
                break;
            }
        }
    }
    Ok((
        Descent {
            value,
            field: v,
            iterations,
        },
        u,
    ))
}

fn random_seed(op: &OperatorSpec, n: usize, grid: usize, amp: f64, rng: &mut ChaCha8Rng) -> Result<GridField> {
    let len = grid.pow(n as u32) * op.dim_domain();
    GridField::from_values(n, grid, op.dim_domain(), (0..len).map(|_| rng.gen_range(-amp..amp)).collect())
}

/// Upper estimate of f^qc(z) by minimizing the grid average of f(z + v).
pub fn envelope_upper(
    f: &dyn Integrand,
    z: &[f64],
    ops: &OperatorPair,
    cfg: &EnvelopeConfig,
) -> Result<EnvelopeEstimate> {
    if z.len() != f.dim() || z.len() != ops.a.dim_domain() {
        return input(format!(
            "z has length {}, integrand dimension {}, operator domain {}",
            z.len(),
            f.dim(),
            ops.a.dim_domain()
        ));
    }
    if ops.a.space_dim() > 2 {
        return input("grid relaxation supports space dimension 1 or 2");
    }
    if cfg.grid < 8 || cfg.grid % 2 != 0 {
        return input("grid size must be even and at least 8");
    }
    if let Some(e) = cfg.eps_sup {
        if !(e > 0.0) {
            return input("eps_sup must be positive");
        }
    }
    if cfg.mode == EnvelopeMode::Lamination {
        let cone = cone_directions(&ops.a, 16, 8);
        let env = lamination_envelope(f, &cone, &cfg.lamination)?;
        let value = env.eval(z).min(f.eval(z));
        return Ok(EnvelopeEstimate {
            z: z.to_vec(),
            value,
            mode: EnvelopeMode::Lamination,
            grid: cfg.grid,
            restarts: 0,
            iterations: cfg.lamination.depth,
            residual_afree: 0.0,
            certificate: None,
            potential: None,
            potential_sup: None,
            tiling: 1,
        });
    }

    let n = ops.a.space_dim();
    let proj = AFreeProjector::new(&ops.a, n, cfg.grid)?;
    let bound = cfg.eps_sup.map(|e| e * cfg.max_tiling as f64);
    let b = match (cfg.mode, cfg.eps_sup) {
        (EnvelopeMode::Potential, _) => Some(ops.require_b("potential mode")?),
        (_, Some(_)) => Some(ops.require_b("a sup bound")?),
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let restarts = cfg.restarts.max(1);
    let mut starts = vec![GridField::zeros(n, cfg.grid, ops.a.dim_domain())?];
    let n_random = if restarts >= 4 { 2 } else { 0 };
    for s in laminate_seeds(f, z, &ops.a, cfg.grid)? {
        if starts.len() + n_random >= restarts {
            break;
        }
        starts.push(s.field);
    }
    while starts.len() < restarts {
        starts.push(random_seed(&ops.a, n, cfg.grid, 0.5 * (1.0 + norm(z)), &mut rng)?);
    }

    let mut best: Option<(Descent, Option<GridField>)> = None;
    let mut iterations = 0;
    for start in starts {
        let (run, pot) = match cfg.mode {
            EnvelopeMode::Potential => {
                let b = b.expect("checked above");
                let u0 = potential_of(b, &proj.apply(&start)?)?;
                let (d, u) = descend_potential(f, z, b, &proj, u0, bound, cfg)?;
                (d, Some(u))
            }
            _ => {
                let feas = Feasible { proj: AFreeProjector::new(&ops.a, n, cfg.grid)?, b, bound };
                (descend_projection(f, z, start, &feas, cfg)?, None)
            }
        };
        iterations += run.iterations;
        if best.as_ref().map_or(true, |(d, _)| run.value < d.value) {
            best = Some((run, pot));
        }
    }
    let (run, pot) = best.expect("at least one restart");
    let fz = f.eval(z);
    let (value, field, pot) = if run.value <= fz {
        (run.value, run.field, pot)
    } else {
        (fz, GridField::zeros(n, cfg.grid, ops.a.dim_domain())?, None)
    };
    let residual_afree = afree_mode_residual(&ops.a, &field)?;
    let potential = match (pot, b) {
        (Some(u), _) => Some(u),
        (None, Some(b)) => Some(potential_of(b, &field)?),
        (None, None) => ops.b.as_ref().map(|b| potential_of(b, &field)).transpose()?,
    };
    let (potential_sup, tiling) = match (&potential, &ops.b) {
        (Some(u), Some(b)) => {
            let sup = jet_sup_norm(u, b.order() - 1)?;
            let tiling = match cfg.eps_sup {
                Some(e) => ((sup / e).ceil() as usize).max(1),
                None => 1,
            };
            (Some(sup), tiling)
        }
        _ => (None, 1),
    };
    Ok(EnvelopeEstimate {
        z: z.to_vec(),
        value,
        mode: cfg.mode,
        grid: cfg.grid,
        restarts,
        iterations,
        residual_afree,
        certificate: Some(field),
        potential,
        potential_sup,
        tiling,
    })
}

/// Source integrand of a lamination envelope.
pub enum Source<'a> {
    Shared(SharedIntegrand),
    Borrowed(&'a dyn Integrand),
}

impl Source<'_> {
    fn get(&self) -> &dyn Integrand {
        match self {
            Source::Shared(f) => f.as_ref(),
            Source::Borrowed(f) => *f,
        }
    }
}

impl From<SharedIntegrand> for Source<'static> {
    fn from(f: SharedIntegrand) -> Self {
        Source::Shared(f)
    }
}

impl<'a> From<&'a dyn Integrand> for Source<'a> {
    fn from(f: &'a dyn Integrand) -> Self {
        Source::Borrowed(f)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LaminationConfig {
    pub depth: usize,
    pub thetas: Vec<f64>,
    /// Lengths of the split vectors w.
    pub scales: Vec<f64>,
    /// The lattice is [−half_width, half_width]^dim.
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl Default for LaminationConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            thetas: (1..10).map(|k| k as f64 / 10.0).collect(),
            scales: vec![0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0],
            half_width: 3.0,
            points_per_axis: 61,
        }
    }
}

impl LaminationConfig {
    /// Default lattice for dim ≤ 2; a coarser sweep above, where the
    /// lattice grows as points_per_axis^dim.
    pub fn for_dim(dim: usize) -> Self {
        if dim <= 2 {
            return Self::default();
        }
        Self {
            depth: 2,
            thetas: vec![0.25, 0.5, 0.75],
            scales: vec![0.5, 1.0, 2.0, 3.0, 4.0],
            half_width: 3.0,
            points_per_axis: 13,
        }
    }
}

/// f_D on a lattice, evaluated by multilinear interpolation.
pub struct LaminationEnvelope<'a> {
    source: Source<'a>,
    cfg: LaminationConfig,
    dim: usize,
    values: Vec<f64>,
    /// Values of every level f_0, …, f_D on the lattice.
    levels: Vec<Vec<f64>>,
}

struct Lattice {
    dim: usize,
    points: usize,
    half: f64,
}

impl Lattice {
    fn spacing(&self) -> f64 {
        2.0 * self.half / (self.points - 1) as f64
    }

    fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    fn point(&self, mut idx: usize) -> Vec<f64> {
        let h = self.spacing();
        (0..self.dim)
            .map(|_| {
                let i = idx % self.points;
                idx /= self.points;
                -self.half + i as f64 * h
            })
            .collect()
    }

    fn contains(&self, z: &[f64]) -> bool {
        z.iter().all(|&x| x.abs() <= self.half + 1e-12)
    }

    /// Multilinear interpolation of lattice values at an in-range point.
    fn interpolate(&self, values: &[f64], z: &[f64]) -> f64 {
        let h = self.spacing();
        let mut base = 0usize;
        let mut stride = 1usize;
        let mut fracs = [0.0; MAX_LATTICE_DIM];
        let mut strides = [0usize; MAX_LATTICE_DIM];
        for (k, &x) in z.iter().enumerate() {
            let t = ((x + self.half) / h).clamp(0.0, (self.points - 1) as f64);
            let i = (t.floor() as usize).min(self.points - 2);
            fracs[k] = t - i as f64;
            base += i * stride;
            strides[k] = stride;
            stride *= self.points;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut off = 0;
            for k in 0..self.dim {
                if corner >> k & 1 == 1 {
                    w *= fracs[k];
                    off += strides[k];
                } else {
                    w *= 1.0 - fracs[k];
                }
            }
            if w != 0.0 {
                total += w * values[base + off];
            }
        }
        total
    }
}

const MAX_LATTICE_DIM: usize = 8;

impl LaminationEnvelope<'_> {
    fn lattice(&self) -> Lattice {
        Lattice {
            dim: self.dim,
            points: self.cfg.points_per_axis,
            half: self.cfg.half_width,
        }
    }

    /// Lattice points and the values of level k.
    pub fn level(&self, k: usize) -> Option<(Vec<Vec<f64>>, &[f64])> {
        let lat = self.lattice();
        self.levels
            .get(k)
            .map(|v| ((0..lat.len()).map(|i| lat.point(i)).collect(), v.as_slice()))
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    fn eval_level(&self, lat: &Lattice, values: &[f64], z: &[f64]) -> f64 {
        if lat.contains(z) {
            lat.interpolate(values, z)
        } else {
            let mut buf = [0.0; MAX_LATTICE_DIM];
            let c = &mut buf[..z.len()];
            for (ci, &x) in c.iter_mut().zip(z) {
                *ci = x.clamp(-lat.half, lat.half);
            }
            lat.interpolate(values, c) + self.source.get().eval(z) - self.source.get().eval(c)
        }
    }
}

impl Integrand for LaminationEnvelope<'_> {
    fn name(&self) -> String {
        format!("lamination({}, depth {})", self.source.get().name(), self.depth())
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, z: &[f64]) -> f64 {
        let lat = self.lattice();
        if !lat.contains(z) {
            log::warn!("lamination envelope queried outside its lattice at {z:?}; clamping");
        }
        self.eval_level(&lat, &self.values, z)
    }
    fn growth_constant(&self) -> f64 {
        self.source.get().growth_constant()
    }
    fn recession_exact(&self, z: &[f64]) -> Option<f64> {
        self.source.get().recession_exact(z)
    }
}

/// f_{k+1}(z) = min(f_k(z), min θf_k(z+(1−θ)w) + (1−θ)f_k(z−θw)) over
/// w = s·e for cone directions e and the configured scales.
pub fn lamination_envelope<'a>(
    f: impl Into<Source<'a>>,
    cone_samples: &[Vec<f64>],
    cfg: &LaminationConfig,
) -> Result<LaminationEnvelope<'a>> {
    let f = f.into();
    if cone_samples.is_empty() {
        return input("cone sample list is empty");
    }
    if cfg.points_per_axis < 2 || !(cfg.half_width > 0.0) {
        return input("lamination lattice needs ≥ 2 points per axis and a positive half width");
    }
    if cfg.thetas.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return input("lamination θ values must lie in (0, 1)");
    }
    let dim = f.get().dim();
    if dim > MAX_LATTICE_DIM {
        return input(format!("lamination lattices support dimension ≤ {MAX_LATTICE_DIM}"));
    }
    if cone_samples.iter().any(|e| e.len() != dim) {
        return input("cone samples do not match the integrand dimension");
    }
    if cfg.scales.iter().any(|&s| s > 2.0 * cfg.half_width) {
        log::warn!(
            "lamination scales reach beyond the lattice [−{0}, {0}]^{dim}; values there are clamped",
            cfg.half_width
        );
    }
    let lat = Lattice {
        dim,
        points: cfg.points_per_axis,
        half: cfg.half_width,
    };
    let pts: Vec<Vec<f64>> = (0..lat.len()).map(|i| lat.point(i)).collect();
    let mut env = LaminationEnvelope {
        source: f,
        cfg: cfg.clone(),
        dim,
        values: Vec::new(),
        levels: Vec::new(),
    };
    let f0: Vec<f64> = pts.iter().map(|p| env.source.get().eval(p)).collect();
    env.levels.push(f0);
    let splits: Vec<Vec<f64>> = cone_samples
        .iter()
        .flat_map(|e| cfg.scales.iter().map(move |&s| scale(e, s)))
        .collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16);
    let chunk = pts.len().div_ceil(threads).max(1);
    for _ in 0..cfg.depth {
        let prev = env.levels.last().expect("level 0 exists");
        let mut next = prev.clone();
        std::thread::scope(|scope| {
            for (pts, out) in pts.chunks(chunk).zip(next.chunks_mut(chunk)) {
                let (env, lat, prev, splits) = (&env, &lat, prev, &splits);
                scope.spawn(move || {
                    let mut zp = vec![0.0; dim];
                    let mut zm = vec![0.0; dim];
                    for (z, best) in pts.iter().zip(out.iter_mut()) {
                        for w in splits {
                            for &theta in &cfg.thetas {
                                for k in 0..dim {
                                    zp[k] = z[k] + (1.0 - theta) * w[k];
                                    zm[k] = z[k] - theta * w[k];
                                }
                                let v = theta * env.eval_level(lat, prev, &zp)
                                    + (1.0 - theta) * env.eval_level(lat, prev, &zm);
                                if v < *best {
                                    *best = v;
                                }
                            }
                        }
                    }
                });
            }
        });
        env.levels.push(next);
    }
    env.values = env.levels.last().expect("nonempty").clone();
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrands::CatalogIntegrand;
    use crate::symbols::catalog;
    use std::sync::Arc;

    fn pair(a: &str) -> OperatorPair {
        let b = catalog::potential_of(a).and_then(catalog::get);
        OperatorPair::new(catalog::get(a).unwrap(), b).unwrap()
    }

    fn quick() -> EnvelopeConfig {
        EnvelopeConfig {
            grid: 16,
            restarts: 4,
            max_iters: 100,
            ..Default::default()
        }
    }

    #[test]
    fn convex_integrand_is_its_own_envelope() {
        let f = CatalogIntegrand::Area { dim: 2 };
        for z in [[0.0, 0.0], [0.7, -1.2]] {
            let e = envelope_upper(&f, &z, &pair("div2"), &quick()).unwrap();
            assert!((e.value - f.eval(&z)).abs() < 1e-6);
            assert!(e.value <= f.eval(&z) + 1e-12);
        }
    }

    #[test]
    fn rank_one_wells_relax_to_zero() {
        let f = CatalogIntegrand::TwoWell { a: vec![1.0, 0.0], eps: 0.0 };
        let e = envelope_upper(&f, &[0.0, 0.0], &pair("curl2-vec"), &quick()).unwrap();
        assert!(e.value <= 0.05, "{}", e.value);
        let cert = e.certificate.unwrap();
        assert!(e.residual_afree <= 1e-8);
        assert!(cert.mean().iter().all(|m| m.abs() < 1e-12));
        assert!((objective(&f, &[0.0, 0.0], &cert) - e.value).abs() < 1e-12);
    }

    #[test]
    fn potential_mode_certificate_is_b_of_banded_potential() {
        let f = CatalogIntegrand::TwoWell { a: vec![1.0, 0.0], eps: 0.1 };
        let cfg = EnvelopeConfig {
            mode: EnvelopeMode::Potential,
            ..quick()
        };
        let ops = pair("div2");
        let e = envelope_upper(&f, &[0.0, 0.0], &ops, &cfg).unwrap();
        let u = e.potential.clone().unwrap();
        for c in 0..u.cells() {
            if u.multi_index(c).iter().any(|&i| i < 2 || i >= 14) {
                assert_eq!(u.value(c), &[0.0]);
            }
        }
        let v = apply_operator(ops.b.as_ref().unwrap(), &u).unwrap();
        assert_eq!(&v, e.certificate.as_ref().unwrap());
        assert!(e.value < f.eval(&[0.0, 0.0]));
    }

    #[test]
    fn non_constant_rank_is_refused() {
        let f = CatalogIntegrand::Norm { dim: 2 };
        let ops = OperatorPair::new(catalog::get("diag2").unwrap(), None).unwrap();
        assert!(matches!(
            envelope_upper(&f, &[0.0, 0.0], &ops, &quick()),
            Err(Error::NonConstantRank { .. })
        ));
    }

    #[test]
    fn divergence_is_reported() {
        // growth constant deliberately understated
        let f = crate::integrands::FnIntegrand::new("liar", 2, 0.01, |z: &[f64]| -(z[0] * z[0] + z[1] * z[1]));
        let e = envelope_upper(&f, &[0.0, 0.0], &pair("div2"), &quick());
        assert!(matches!(e, Err(Error::Divergence { .. })), "{e:?}");
    }

    #[test]
    fn lamination_examples() {
        let cone = cone_directions(&catalog::get("curl2-vec").unwrap(), 16, 4);
        let cfg = LaminationConfig {
            points_per_axis: 31,
            ..Default::default()
        };
        let conv: SharedIntegrand = Arc::new(CatalogIntegrand::Area { dim: 2 });
        let env = lamination_envelope(conv.clone(), &cone, &cfg).unwrap();
        let (pts, vals) = env.level(env.depth()).unwrap();
        for (p, v) in pts.iter().zip(vals) {
            assert!((v - conv.eval(p)).abs() < 1e-9);
        }

        let wells: SharedIntegrand = Arc::new(CatalogIntegrand::TwoWell { a: vec![1.0, 0.0], eps: 0.0 });
        let env = lamination_envelope(wells, &cone, &cfg).unwrap();
        assert!(env.eval(&[0.0, 0.0]).abs() < 1e-12);
        for k in 1..=env.depth() {
            let (_, lo) = env.level(k).unwrap();
            let (_, hi) = env.level(k - 1).unwrap();
            assert!(lo.iter().zip(hi).all(|(a, b)| a <= b));
        }
        assert!(lamination_envelope(conv, &[], &cfg).is_err());
    }
}
