//! Constructive generating sequences: tiling, convex combination, plane
//! waves, concentrating spikes, mollified inhomogenization, and empirical
//! Young-measure extraction for verification.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use crate::envelope::OperatorPair;
use crate::error::{input, Error, Result};
use crate::flat_metric::{bl_distance, Metric, PointCloudMeasure};
use crate::grid::{afree_mode_residual, apply_operator, jet_l1_norm, potential_of, AFreeProjector, GridField};
use crate::integrands::{t_lip_norm, BallSampling, CatalogIntegrand, FnIntegrand, Integrand, SharedIntegrand};
use crate::linalg::{axpy, norm, scale, sub};
use crate::symbols::{wave_cone_membership, ConeSearch, OperatorSpec};
use crate::young_measures::{mean, Cell, DiscreteYoungMeasure, VectorAtom, VectorMeasure, WeightedPoint};

/// Tolerance for |A(ξ)w| when w must lie in the kernel.
pub const KERNEL_TOL: f64 = 1e-8;

/// 1D profile (15/8)(1 − 4s²)² on [−½, ½], unit integral.
fn bump1(s: f64) -> f64 {
    if s.abs() >= 0.5 {
        0.0
    } else {
        let u = 1.0 - 4.0 * s * s;
        1.875 * u * u
    }
}

fn bump1_derivative(s: f64) -> f64 {
    if s.abs() >= 0.5 {
        0.0
    } else {
        -30.0 * s * (1.0 - 4.0 * s * s)
    }
}

/// Tensor-product polynomial bump φ_t supported on [−t/2, t/2]^n.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mollifier {
    t: f64,
    n: usize,
    gradient_bound: f64,
}

impl Mollifier {
    pub fn new(t: f64, n: usize) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return input(format!("mollifier scale must be positive, got {t}"));
        }
        if !(1..=2).contains(&n) {
            return input("mollifiers are defined for n ∈ {1, 2}");
        }
        // max |∇φ| at t = 1 over a fine lattice of the cube
        let k = 401;
        let s = |i: usize| -0.5 + i as f64 / (k - 1) as f64;
        let gradient_bound = if n == 1 {
            (0..k).map(|i| bump1_derivative(s(i)).abs()).fold(0.0, f64::max)
        } else {
            let mut best = 0.0_f64;
            for i in 0..k {
                for j in 0..k {
                    let (a, b) = (s(i), s(j));
                    let g0 = bump1_derivative(a) * bump1(b);
                    let g1 = bump1(a) * bump1_derivative(b);
                    best = best.max(g0.hypot(g1));
                }
            }
            best
        };
        Ok(Self { t, n, gradient_bound })
    }

    pub fn scale(&self) -> f64 {
        self.t
    }

    /// M = max |∇φ| for the unit-scale profile.
    pub fn gradient_bound(&self) -> f64 {
        self.gradient_bound
    }

    /// φ_t(x) = t^{−n} Π φ(x_i/t).
    pub fn profile(&self, x: &[f64]) -> f64 {
        x.iter().map(|&xi| bump1(xi / self.t) / self.t).product()
    }

    /// Discrete 1D kernel on an N-grid: offsets with weights summing to 1.
    pub fn kernel_1d(&self, grid: usize) -> Result<Vec<(isize, f64)>> {
        if self.t * (grid as f64) < 2.0 - 1e-12 {
            return input(format!(
                "mollifier scale {} is below two cells of a {grid}-grid",
                self.t
            ));
        }
        let reach = (self.t * grid as f64 / 2.0).ceil() as isize;
        let mut taps: Vec<(isize, f64)> = (-reach..=reach)
            .map(|k| (k, bump1(k as f64 / (grid as f64 * self.t))))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        let total: f64 = taps.iter().map(|t| t.1).sum();
        taps.iter_mut().for_each(|t| t.1 /= total);
        Ok(taps)
    }
}

/// Periodic separable convolution with a 1D kernel along every axis.
fn convolve(field: &GridField, taps: &[(isize, f64)]) -> Result<GridField> {
    let n = field.space_dim();
    let grid = field.grid();
    let dim = field.dim();
    let mut cur = field.clone();
    for axis in 0..n {
        let mut out = GridField::zeros(n, grid, dim)?;
        for c in 0..cur.cells() {
            let idx = cur.multi_index(c);
            let mut acc = vec![0.0; dim];
            for &(k, w) in taps {
                let mut j = idx.clone();
                j[axis] = (idx[axis] as isize + k).rem_euclid(grid as isize) as usize;
                axpy(&mut acc, w, cur.value(cur.flat_index(&j)));
            }
            out.value_mut(c).copy_from_slice(&acc);
        }
        cur = out;
    }
    Ok(cur)
}

/// φ_t ∗ v on the measure's grid; atoms enter as point masses in their cell.
pub fn mollify(v: &VectorMeasure, moll: &Mollifier) -> Result<GridField> {
    if moll.n != v.space_dim() {
        return input("mollifier and measure live in different dimensions");
    }
    let taps = moll.kernel_1d(v.grid())?;
    convolve(&v.to_field()?, &taps)
}

/// Ordered field snapshots v_j with construction metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    snapshots: Vec<GridField>,
    construction: String,
    params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanHeader {
    pub grid: usize,
    pub n: usize,
    #[serde(rename = "dimV")]
    pub dim_v: usize,
    pub construction: String,
    pub params: BTreeMap<String, f64>,
    pub snapshots: usize,
}

impl SequencePlan {
    pub fn new(snapshots: Vec<GridField>, construction: impl Into<String>, params: BTreeMap<String, f64>) -> Result<Self> {
        let Some(first) = snapshots.first() else {
            return input("a plan needs at least one snapshot");
        };
        if snapshots.iter().any(|s| !s.same_shape(first)) {
            return input("plan snapshots do not share grid and dimension");
        }
        Ok(Self {
            snapshots,
            construction: construction.into(),
            params,
        })
    }

    pub fn snapshots(&self) -> &[GridField] {
        &self.snapshots
    }

    pub fn last(&self) -> &GridField {
        self.snapshots.last().expect("plans are nonempty")
    }

    pub fn construction(&self) -> &str {
        &self.construction
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn header(&self) -> PlanHeader {
        let f = &self.snapshots[0];
        PlanHeader {
            grid: f.grid(),
            n: f.space_dim(),
            dim_v: f.dim(),
            construction: self.construction.clone(),
            params: self.params.clone(),
            snapshots: self.snapshots.len(),
        }
    }

    /// Directory with `header.json` and little-endian f64 arrays
    /// `snapshot_000.bin`, ….
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("header.json"), serde_json::to_string_pretty(&self.header())?)?;
        for (k, s) in self.snapshots.iter().enumerate() {
            let bytes: Vec<u8> = s.values().iter().flat_map(|x| x.to_le_bytes()).collect();
            std::fs::write(dir.join(format!("snapshot_{k:03}.bin")), bytes)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let header: PlanHeader = serde_json::from_str(&std::fs::read_to_string(dir.join("header.json"))?)?;
        let mut snapshots = Vec::with_capacity(header.snapshots);
        for k in 0..header.snapshots {
            let bytes = std::fs::read(dir.join(format!("snapshot_{k:03}.bin")))?;
            if bytes.len() % 8 != 0 {
                return input(format!("snapshot {k} has a truncated byte length"));
            }
            let values = bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            snapshots.push(GridField::from_values(header.n, header.grid, header.dim_v, values)?);
        }
        Self::new(snapshots, header.construction, header.params)
    }
}

/// Potential built from q^n tiles: tile a holds q^{−l}·u_{choose(a)}(q(x − x_a)).
fn tiled_from(us: &[&GridField], q: usize, order: u32, choose: impl Fn(&[usize]) -> usize) -> Result<GridField> {
    let first = us[0];
    if us.iter().any(|u| !u.same_shape(first)) {
        return input("potentials must share grid and dimension");
    }
    let grid = first.grid();
    if q == 0 || grid % q != 0 || (grid / q) % 2 != 0 {
        return input(format!("grid {grid} is not divisible into {q} tiles of even size"));
    }
    if q == 1 {
        return Ok(us[choose(&vec![0; first.space_dim()])].clone());
    }
    let m = grid / q;
    let small: Vec<GridField> = us
        .iter()
        .map(|u| u.resample(m).map(|s| s.scaled((q as f64).powi(-(order as i32)))))
        .collect::<Result<_>>()?;
    let mut out = GridField::zeros(first.space_dim(), grid, first.dim())?;
    for c in 0..out.cells() {
        let idx = out.multi_index(c);
        let tile: Vec<usize> = idx.iter().map(|&i| i / m).collect();
        let local: Vec<usize> = idx.iter().map(|&i| i % m).collect();
        let s = &small[choose(&tile)];
        out.value_mut(c).copy_from_slice(s.value(s.flat_index(&local)));
    }
    Ok(out)
}

/// Σ_i j^{−l} u(j(x − x_i)) on the same grid.
pub fn tiled_potential(u: &GridField, j: usize, order: u32) -> Result<GridField> {
    tiled_from(&[u], j, order, |_| 0)
}

/// Potential with u₁ on the first p^n tiles of the q-mesh and u₀ elsewhere.
pub fn combined_potential(u0: &GridField, u1: &GridField, p: usize, q: usize, order: u32) -> Result<GridField> {
    if p >= q || gcd(p, q) != 1 && p != 0 {
        return input(format!("need coprime 0 ≤ p < q, got p = {p}, q = {q}"));
    }
    tiled_from(&[u0, u1], q, order, |t| usize::from(t.iter().all(|&i| i < p)))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_potential(u: &GridField, op_b: &OperatorSpec) -> Result<()> {
    if u.dim() != op_b.dim_domain() || u.space_dim() != op_b.space_dim() {
        return input("potential does not match the domain of B");
    }
    Ok(())
}

/// z + B(tiled potential).
pub fn tile(u: &GridField, j: usize, z: &[f64], op_b: &OperatorSpec) -> Result<GridField> {
    check_potential(u, op_b)?;
    apply_operator(op_b, &tiled_potential(u, j, op_b.order())?)?.shifted(z)
}

/// z + B(φ) for the (p, q) mixture of u₀ and u₁, weight t = (p/q)^n on u₁.
pub fn combine(
    u0: &GridField,
    u1: &GridField,
    p: usize,
    q: usize,
    z: &[f64],
    op_b: &OperatorSpec,
) -> Result<GridField> {
    check_potential(u0, op_b)?;
    apply_operator(op_b, &combined_potential(u0, u1, p, q, op_b.order())?)?.shifted(z)
}

/// 1-periodic scalar profile h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Sine,
    /// (1−θ) on [0, θ), −θ on [θ, 1): mean zero, duty θ.
    Square { theta: f64 },
    Zero,
}

impl Profile {
    pub fn eval(&self, s: f64) -> f64 {
        let f = s.rem_euclid(1.0);
        match self {
            Profile::Sine => (2.0 * std::f64::consts::PI * s).sin(),
            Profile::Square { theta } => {
                if f < *theta {
                    1.0 - theta
                } else {
                    -theta
                }
            }
            Profile::Zero => 0.0,
        }
    }
}

/// Residual |A(ξ̂)w| / max(1, |w|) for the unit direction of ξ.
fn kernel_residual(op: &OperatorSpec, xi: &[f64], w: &[f64]) -> Result<f64> {
    let r = norm(xi);
    if xi.len() != op.space_dim() || r == 0.0 {
        return input("frequency must be a nonzero vector of the space dimension");
    }
    if w.len() != op.dim_domain() {
        return input("amplitude does not match the operator domain");
    }
    let a = op.symbol_matrix(&scale(xi, 1.0 / r));
    Ok(norm(&crate::linalg::mat_vec(&a, w)) / norm(w).max(1.0))
}

fn require_kernel(op: &OperatorSpec, xi: &[f64], w: &[f64]) -> Result<()> {
    let residual = kernel_residual(op, xi, w)?;
    if residual > KERNEL_TOL {
        return Err(Error::NotInCone {
            direction: w.to_vec(),
            residual,
        });
    }
    Ok(())
}

/// v(x) = w·h(j ξ·x); j·ξ must be an integer vector so the wave is periodic.
pub fn plane_wave(
    op: &OperatorSpec,
    xi: &[f64],
    w: &[f64],
    profile: &Profile,
    j: usize,
    grid: usize,
) -> Result<GridField> {
    require_kernel(op, xi, w)?;
    let k: Vec<f64> = xi.iter().map(|&x| x * j as f64).collect();
    if k.iter().any(|&x| (x - x.round()).abs() > 1e-9) {
        return input(format!("j·ξ = {k:?} is not an integer vector; the wave would not be periodic"));
    }
    let v = GridField::from_fn(op.space_dim(), grid, op.dim_domain(), |x| {
        let s: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
        scale(w, profile.eval(s))
    })?;
    if k.iter().filter(|&&x| x != 0.0).count() <= 1 {
        return Ok(v);
    }
    // Sampling an oblique non-smooth profile aliases harmonics onto modes not
    // parallel to jξ, where w is not in the kernel; keep only the jξ line.
    let parallel = |f: &[i64]| {
        (0..f.len()).all(|a| (0..a).all(|b| (f[a] as f64 * k[b] - f[b] as f64 * k[a]).abs() < 1e-9))
    };
    let mut spec = v.spectrum();
    for c in 0..v.cells() {
        if !parallel(&v.frequency(c)) {
            for comp in spec.iter_mut() {
                comp[c] = Default::default();
            }
        }
    }
    GridField::from_spectrum(v.space_dim(), grid, spec)
}

/// Unit-mass bump of width `width` centred at x0, normalized on the grid.
fn discrete_bump(n: usize, grid: usize, x0: &[f64], width: f64) -> Result<GridField> {
    if width * (grid as f64) < 2.0 - 1e-12 {
        return input(format!("width {width} is below two cells of a {grid}-grid"));
    }
    let moll = Mollifier::new(width, n)?;
    let mut f = GridField::from_fn(n, grid, 1, |x| {
        // nearest periodic image
        let d: Vec<f64> = x.iter().zip(x0).map(|(a, b)| (a - b + 0.5).rem_euclid(1.0) - 0.5).collect();
        vec![moll.profile(&d)]
    })?;
    let total: f64 = f.values().iter().sum::<f64>() * f.cell_volume();
    if total <= 0.0 {
        return input("bump misses every cell centre");
    }
    f.values_mut().iter_mut().for_each(|x| *x /= total);
    Ok(f)
}

/// v_j = (t/|w|)·w·ρ_j with ρ_j a unit-mass bump of width widths[j] at x0.
pub fn concentrating_spike(
    op: &OperatorSpec,
    xi: &[f64],
    w: &[f64],
    mass: f64,
    x0: &[f64],
    widths: &[f64],
    grid: usize,
) -> Result<SequencePlan> {
    require_kernel(op, xi, w)?;
    if !(mass >= 0.0) {
        return input("spike mass must be non-negative");
    }
    if widths.is_empty() {
        return input("width schedule is empty");
    }
    let wn = norm(w);
    if wn == 0.0 {
        return input("spike direction must be nonzero");
    }
    let n = op.space_dim();
    let dir = scale(w, mass / wn);
    let mut snaps = Vec::new();
    for &s in widths {
        let rho = discrete_bump(n, grid, x0, s)?;
        let mut v = GridField::zeros(n, grid, op.dim_domain())?;
        for c in 0..v.cells() {
            v.value_mut(c).copy_from_slice(&scale(&dir, rho.value(c)[0]));
        }
        snaps.push(v);
    }
    let mut params = BTreeMap::new();
    params.insert("t".into(), mass);
    Ok(SequencePlan::new(snaps, "spike", params)?)
}

/// Pointwise sum of two plans with matching shapes and lengths.
pub fn sum_sequences(a: &SequencePlan, b: &SequencePlan) -> Result<SequencePlan> {
    if a.snapshots.len() != b.snapshots.len() {
        return input("plans have different lengths");
    }
    let snaps = a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| x.add(y))
        .collect::<Result<Vec<_>>>()?;
    let mut params = BTreeMap::new();
    for (k, v) in &a.params {
        params.insert(format!("a.{k}"), *v);
    }
    for (k, v) in &b.params {
        params.insert(format!("b.{k}"), *v);
    }
    SequencePlan::new(snaps, format!("sum({}, {})", a.construction, b.construction), params)
}

/// Smallest integer direction (entries ≤ 8 in modulus) with d ∈ ker A(k).
fn lattice_frequency(op: &OperatorSpec, d: &[f64]) -> Result<Vec<f64>> {
    let n = op.space_dim();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let range: Vec<i64> = (-8..=8).collect();
    let candidates: Vec<Vec<f64>> = if n == 1 {
        vec![vec![1.0]]
    } else {
        let mut v = Vec::new();
        for &a in &range {
            for &b in &range {
                if (a, b) != (0, 0) && (a > 0 || (a == 0 && b > 0)) && gcd(a.unsigned_abs() as usize, b.unsigned_abs() as usize) == 1 {
                    v.push(vec![a as f64, b as f64]);
                }
            }
        }
        v.sort_by(|x, y| norm(x).total_cmp(&norm(y)));
        v
    };
    for k in candidates {
        let r = kernel_residual(op, &k, d)?;
        if r <= KERNEL_TOL {
            return Ok(k);
        }
        if best.as_ref().map_or(true, |b| r < b.0) {
            best = Some((r, k));
        }
    }
    Err(Error::NotInCone {
        direction: d.to_vec(),
        residual: best.map_or(f64::INFINITY, |b| b.0),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DyadicCube {
    pub index: Vec<usize>,
    pub r_q: f64,
    pub x_q: Vec<f64>,
}

/// Cubes of side 2^{−(generation+refinement)} with positive r_Q.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DyadicScheme {
    pub generation: usize,
    pub refinement: usize,
    pub margin: f64,
    pub cubes: Vec<DyadicCube>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SingularReport {
    pub scheme: DyadicScheme,
    pub mollifier: f64,
    pub budget_used: f64,
    pub budget_allowed: f64,
    /// Frequencies of the angular oscillation, one per atom (0 if none).
    pub frequencies: Vec<usize>,
    /// Relative A-free residual of the Bφ part.
    pub afree_residual: f64,
    /// Modulus of continuity below the cell size (piecewise-constant data).
    pub modulus: f64,
    pub bank_error: f64,
}

/// Mollified singular part of a Young measure: ξ^s = φ_t ∗ (ν̄^∞λ^s) + Bφ,
/// where Bφ realizes the angular oscillation of each atom.
#[allow(clippy::too_many_arguments)]
pub fn inhomogenize_singular(
    nu: &DiscreteYoungMeasure,
    eps: f64,
    d: usize,
    m: usize,
    t: f64,
    ops: &OperatorPair,
    grid: usize,
    bank: &TestBank,
) -> Result<(GridField, SingularReport)> {
    let b = ops
        .b
        .as_ref()
        .ok_or_else(|| Error::Input("singular generation needs a potential operator".into()))?;
    let n = nu.space_dim();
    let dim = nu.dim();
    if n != ops.a.space_dim() || dim != ops.a.dim_domain() {
        return input("Young measure does not match the operator");
    }
    if !grid.is_power_of_two() {
        return input(format!("grid {grid} is not a power of two"));
    }
    // cubes finer than a grid cell carry no extra information
    let level = (d + m).min(grid.trailing_zeros() as usize);
    let cubes_per_axis = 1usize << level;
    let moll = Mollifier::new(t, n)?;
    let total_mass: f64 = nu.singular().iter().map(|s| s.mass).sum();
    let zero = GridField::zeros(n, grid, dim)?;
    let empty_scheme = DyadicScheme {
        generation: d,
        refinement: m,
        margin: 2.0 * t,
        cubes: vec![],
    };
    if nu.singular().is_empty() {
        return Ok((
            zero,
            SingularReport {
                scheme: empty_scheme,
                mollifier: t,
                budget_used: 0.0,
                budget_allowed: 0.0,
                frequencies: vec![],
                afree_residual: 0.0,
                modulus: 0.0,
                bank_error: 0.0,
            },
        ));
    }

    let search = ConeSearch::default();
    let mut bar_atoms = Vec::new();
    let mut waves: Vec<Option<(Vec<f64>, f64, Vec<f64>)>> = Vec::new();
    for s in nu.singular() {
        let dist = s.x.iter().map(|&c| c.min(1.0 - c)).fold(f64::INFINITY, f64::min);
        let required = (2.0 * t).max(2f64.powi(1 - d as i32));
        if dist <= required - 1e-12 {
            return Err(Error::Margin {
                location: s.x.clone(),
                distance: dist,
                required,
            });
        }
        let e = mean(&s.sphere, dim);
        let r = norm(&e);
        if r > 1e-14 {
            let cm = wave_cone_membership(&ops.a, &e, &search)?;
            if cm.residual >= 1e-4 {
                return Err(Error::NotInCone {
                    direction: e,
                    residual: cm.residual,
                });
            }
            bar_atoms.push(VectorAtom {
                x: s.x.clone(),
                mass: s.mass * r,
                polar: scale(&e, 1.0 / r),
            });
        }
        waves.push(match s.sphere.len() {
            1 => None,
            2 => {
                let diff = sub(&s.sphere[0].point, &s.sphere[1].point);
                let k = lattice_frequency(&ops.a, &diff)?;
                Some((diff, s.sphere[0].weight, k))
            }
            _ => return input("angular measures with more than two atoms have no shipped generator"),
        });
    }

    // r_Q from the mollified scalar mass density
    let masses = VectorMeasure::new(
        n,
        grid,
        vec![vec![0.0]; grid.pow(n as u32)],
        nu.singular()
            .iter()
            .map(|s| VectorAtom {
                x: s.x.clone(),
                mass: s.mass,
                polar: vec![1.0],
            })
            .collect(),
    )?;
    let rho = mollify(&masses, &moll)?;
    let per_atom: Vec<GridField> = nu
        .singular()
        .iter()
        .map(|s| {
            let one = VectorMeasure::new(
                n,
                grid,
                vec![vec![0.0]; grid.pow(n as u32)],
                vec![VectorAtom {
                    x: s.x.clone(),
                    mass: s.mass,
                    polar: vec![1.0],
                }],
            )?;
            mollify(&one, &moll)
        })
        .collect::<Result<_>>()?;
    let side = grid / cubes_per_axis;
    let mut cube_cells: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for c in 0..rho.cells() {
        let q: Vec<usize> = rho.multi_index(c).iter().map(|&i| i / side).collect();
        cube_cells.entry(q).or_default().push(c);
    }
    let h = 1.0 / cubes_per_axis as f64;
    let mut cubes = Vec::new();
    let mut owner = vec![usize::MAX; rho.cells()];
    let mut keys: Vec<&Vec<usize>> = cube_cells.keys().collect();
    keys.sort();
    for q in keys {
        let cells = &cube_cells[q];
        let r_q = cells.iter().map(|&c| rho.value(c)[0]).sum::<f64>() / cells.len() as f64;
        if r_q <= 0.0 {
            continue;
        }
        let inside = q.iter().all(|&i| i as f64 * h >= t - 1e-12 && (i + 1) as f64 * h <= 1.0 - t + 1e-12);
        if !inside {
            log::warn!("dyadic cube {q:?} carries mass within the boundary margin");
        }
        // x_Q: atom contributing most to the cube
        let (k, _) = per_atom
            .iter()
            .enumerate()
            .map(|(k, f)| (k, cells.iter().map(|&c| f.value(c)[0]).sum::<f64>()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("atoms exist");
        let x_q = nu.singular()[k].x.clone();
        let far = cells
            .iter()
            .map(|&c| norm(&sub(&rho.center(c), &x_q)))
            .fold(0.0, f64::max);
        if far >= 2.0 * t {
            log::warn!("cube {q:?} lies {far} from its representative atom (limit {})", 2.0 * t);
        }
        for &c in cells {
            owner[c] = k;
        }
        cubes.push(DyadicCube {
            index: q.clone(),
            r_q,
            x_q,
        });
    }

    // angular oscillation on each cube: ρ(x)·h(j k·x)·(e₁ − e₂)
    let mut osc = GridField::zeros(n, grid, dim)?;
    let mut frequencies = vec![0; nu.singular().len()];
    for (k, wave) in waves.iter().enumerate() {
        let Some((diff, theta, kvec)) = wave else { continue };
        let kmax = kvec.iter().map(|x| x.abs()).fold(0.0, f64::max) as usize;
        let j = (grid / (4 * kmax.max(1))).max(1);
        frequencies[k] = j;
        let prof = Profile::Square { theta: *theta };
        for c in 0..osc.cells() {
            if owner[c] != k {
                continue;
            }
            let x = osc.center(c);
            let s: f64 = kvec.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() * j as f64;
            let val = scale(diff, rho.value(c)[0] * prof.eval(s));
            osc.value_mut(c).copy_from_slice(&val);
        }
    }
    let proj = AFreeProjector::new(&ops.a, n, grid)?;
    let phi = potential_of(b, &proj.apply(&osc)?)?;
    let b_phi = apply_operator(b, &phi)?;
    let budget_used = jet_l1_norm(&phi, b.order() - 1)?;
    let budget_allowed = eps * total_mass;
    if budget_used >= budget_allowed && budget_used > 0.0 {
        return Err(Error::Budget {
            used: budget_used,
            allowed: budget_allowed,
        });
    }
    let bar = VectorMeasure::new(n, grid, vec![vec![0.0; dim]; grid.pow(n as u32)], bar_atoms)?;
    let field = mollify(&bar, &moll)?.add(&b_phi)?;
    let afree_residual = if b_phi.sup_norm() > 0.0 {
        afree_mode_residual(&ops.a, &b_phi)?
    } else {
        0.0
    };
    let target = singular_target(nu)?;
    let bank_error = bank.discrepancy(&field, &target)?;
    Ok((
        field,
        SingularReport {
            scheme: DyadicScheme {
                generation: d,
                refinement: m,
                margin: 2.0 * t,
                cubes,
            },
            mollifier: t,
            budget_used,
            budget_allowed,
            frequencies,
            afree_residual,
            modulus: 0.0,
            bank_error,
        },
    ))
}

/// Singular part alone: δ₀ oscillation everywhere plus the atoms.
fn singular_target(nu: &DiscreteYoungMeasure) -> Result<DiscreteYoungMeasure> {
    let zero = vec![WeightedPoint::new(1.0, vec![0.0; nu.dim()])];
    DiscreteYoungMeasure::homogeneous(nu.space_dim(), nu.grid(), zero, 0.0, vec![])?
        .with_singular(nu.singular().to_vec())
}

/// Regular part alone: cell data without singular atoms.
fn regular_target(nu: &DiscreteYoungMeasure) -> Result<DiscreteYoungMeasure> {
    DiscreteYoungMeasure::new(nu.space_dim(), nu.grid(), nu.cells().to_vec(), vec![])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularOptions {
    /// Laminate frequency multiplier j.
    pub frequency: usize,
    /// Number of concentration layers per unit length.
    pub layers: usize,
    /// Width of each concentration layer.
    pub width: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularReport {
    pub generation: usize,
    pub mollifier: f64,
    pub cubes: usize,
    pub budget_used: f64,
    pub budget_allowed: f64,
    pub afree_residual: f64,
    pub modulus: f64,
    pub bank_error: f64,
}

/// Homogeneous generator data for one cell: oscillation about the
/// barycentre and a concentration layer direction.
struct CellGenerator {
    laminate: Option<(Vec<f64>, f64, Vec<f64>)>,
    layers: Option<(Vec<f64>, f64, Vec<f64>)>,
}

fn cell_generator(cell: &Cell, op: &OperatorSpec) -> Result<CellGenerator> {
    let laminate = match cell.osc.len() {
        1 => None,
        2 => {
            let diff = sub(&cell.osc[0].point, &cell.osc[1].point);
            if norm(&diff) == 0.0 {
                None
            } else {
                Some((diff.clone(), cell.osc[0].weight, lattice_frequency(op, &diff)?))
            }
        }
        _ => return input("oscillation measures with more than two atoms have no shipped generator"),
    };
    let layers = if cell.lam_a > 0.0 {
        if cell.sphere.len() != 1 {
            return input("diffuse concentration needs a single-direction angular measure");
        }
        let w = cell.sphere[0].point.clone();
        Some((w.clone(), cell.lam_a, lattice_frequency(op, &w)?))
    } else {
        None
    };
    Ok(CellGenerator { laminate, layers })
}

/// Mollified regular part: φ_t ∗ v^a + Bψ with Bψ the A-free projection of
/// per-cube laminates and concentration layers.
#[allow(clippy::too_many_arguments)]
pub fn inhomogenize_regular(
    nu: &DiscreteYoungMeasure,
    eps: f64,
    d: usize,
    t: f64,
    ops: &OperatorPair,
    grid: usize,
    opts: &RegularOptions,
    bank: &TestBank,
) -> Result<(GridField, RegularReport)> {
    let b = ops
        .b
        .as_ref()
        .ok_or_else(|| Error::Input("regular generation needs a potential operator".into()))?;
    let n = nu.space_dim();
    let dim = nu.dim();
    if n != ops.a.space_dim() || dim != ops.a.dim_domain() {
        return input("Young measure does not match the operator");
    }
    let cubes_per_axis = 1usize << d;
    if grid % cubes_per_axis != 0 {
        return input(format!("grid {grid} is not divisible by 2^{d}"));
    }
    let moll = Mollifier::new(t, n)?;
    let side = grid / cubes_per_axis;
    let probe = GridField::zeros(n, grid, 1)?;
    // representative Young-measure cell of every dyadic cube
    let rep: Vec<usize> = (0..probe.cells())
        .map(|c| {
            let q: Vec<f64> = probe
                .multi_index(c)
                .iter()
                .map(|&i| ((i / side) as f64 + 0.5) / cubes_per_axis as f64)
                .collect();
            nu.cell_of(&q)
        })
        .collect();
    let mut generators: HashMap<usize, CellGenerator> = HashMap::new();
    for &r in &rep {
        if let std::collections::hash_map::Entry::Vacant(e) = generators.entry(r) {
            e.insert(cell_generator(&nu.cells()[r], &ops.a)?);
        }
    }
    // barycentre sampled at field resolution, then mollified
    let bary = crate::young_measures::barycentre(nu);
    let ac: Vec<Vec<f64>> = (0..probe.cells())
        .map(|c| bary.density()[nu.cell_of(&probe.center(c))].clone())
        .collect();
    let smooth = mollify(&VectorMeasure::new(n, grid, ac, vec![])?, &moll)?;

    if opts.width * (grid as f64) < 2.0 - 1e-12 && generators.values().any(|g| g.layers.is_some()) {
        return input("concentration layer width is below two cells");
    }
    let layer = |s: f64, k: usize| -> f64 {
        // unit-mean periodic layers of width `width`, centred in each period
        let period = 1.0 / k as f64;
        let u = (s.rem_euclid(period) - 0.5 * period) / opts.width;
        bump1(u) / opts.width * period
    };
    let mut osc = GridField::zeros(n, grid, dim)?;
    for c in 0..osc.cells() {
        let g = &generators[&rep[c]];
        let x = osc.center(c);
        let mut val = vec![0.0; dim];
        if let Some((diff, theta, k)) = &g.laminate {
            let s: f64 = k.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() * opts.frequency as f64;
            axpy(&mut val, Profile::Square { theta: *theta }.eval(s), diff);
        }
        if let Some((w, lam, k)) = &g.layers {
            let kn = norm(k);
            let s: f64 = k.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / kn;
            axpy(&mut val, lam * (layer(s, opts.layers.max(1)) - 1.0), w);
        }
        osc.value_mut(c).copy_from_slice(&val);
    }
    // discrete layer profiles have mean slightly off 1: recentre per component
    let m0 = osc.mean();
    let osc = osc.shifted(&scale(&m0, -1.0))?;
    let proj = AFreeProjector::new(&ops.a, n, grid)?;
    let psi = potential_of(b, &proj.apply(&osc)?)?;
    let b_psi = apply_operator(b, &psi)?;
    let budget_used = jet_l1_norm(&psi, b.order() - 1)?;
    let budget_allowed = eps;
    if budget_used >= budget_allowed && budget_used > 0.0 {
        return Err(Error::Budget {
            used: budget_used,
            allowed: budget_allowed,
        });
    }
    let field = smooth.add(&b_psi)?;
    let afree_residual = if b_psi.sup_norm() > 0.0 {
        afree_mode_residual(&ops.a, &b_psi)?
    } else {
        0.0
    };
    let bank_error = bank.discrepancy(&field, &regular_target(nu)?)?;
    Ok((
        field,
        RegularReport {
            generation: d,
            mollifier: t,
            cubes: cubes_per_axis.pow(n as u32),
            budget_used,
            budget_allowed,
            afree_residual,
            modulus: 0.0,
            bank_error,
        },
    ))
}

/// Scalar test function η on the closed unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Eta {
    Affine { c: f64, g: Vec<f64> },
    Wave { c: f64, amp: f64, k: Vec<f64>, phase: f64 },
}

impl Eta {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Eta::Affine { c, g } => c + g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
            Eta::Wave { c, amp, k, phase } => {
                let s: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
                c + amp * (2.0 * std::f64::consts::PI * s + phase).sin()
            }
        }
    }

    /// sup|η| + Lip(η) over the unit cube (upper bound for waves).
    pub fn lip_norm(&self, n: usize) -> f64 {
        match self {
            Eta::Affine { c, g } => {
                let sup = (0..1usize << n)
                    .map(|corner| {
                        let x: Vec<f64> = (0..n).map(|k| (corner >> k & 1) as f64).collect();
                        (c + g.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()).abs()
                    })
                    .fold(0.0, f64::max);
                sup + norm(g)
            }
            Eta::Wave { c, amp, k, .. } => c.abs() + amp.abs() + 2.0 * std::f64::consts::PI * norm(k) * amp.abs(),
        }
    }

    fn scaled(&self, s: f64) -> Self {
        match self {
            Eta::Affine { c, g } => Eta::Affine { c: c * s, g: scale(g, s) },
            Eta::Wave { c, amp, k, phase } => Eta::Wave {
                c: c * s,
                amp: amp * s,
                k: k.clone(),
                phase: *phase,
            },
        }
    }
}

/// c·Φ.
struct Scaled {
    inner: SharedIntegrand,
    c: f64,
}

impl Integrand for Scaled {
    fn name(&self) -> String {
        format!("{:.6}·{}", self.c, self.inner.name())
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, z: &[f64]) -> f64 {
        self.c * self.inner.eval(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        scale(&self.inner.gradient(z), self.c)
    }
    fn growth_constant(&self) -> f64 {
        self.c * self.inner.growth_constant()
    }
    fn recession_exact(&self, z: &[f64]) -> Option<f64> {
        self.inner.recession_exact(z).map(|v| self.c * v)
    }
    fn is_convex(&self) -> bool {
        self.inner.is_convex()
    }
}

#[derive(Clone)]
pub struct BankEntry {
    pub eta: Eta,
    pub phi: SharedIntegrand,
}

/// Test pairs (η, Φ) normalized so that ‖η‖_LIP ≤ 1 and ‖TΦ‖_LIP ≤ 1.
#[derive(Clone)]
pub struct TestBank {
    n: usize,
    entries: Vec<BankEntry>,
}

fn bounded(name: &str, dim: usize, c: Vec<f64>) -> SharedIntegrand {
    Arc::new(
        FnIntegrand::new(name, dim, 1.0, move |z: &[f64]| 1.0 / (1.0 + norm(&sub(z, &c)).powi(2)))
            .with_recession(|_| 0.0),
    )
}

fn shifted_area(dim: usize, c: Vec<f64>) -> SharedIntegrand {
    Arc::new(
        FnIntegrand::new("shifted-area", dim, 1.0, move |z: &[f64]| (1.0 + norm(&sub(z, &c)).powi(2)).sqrt())
            .with_recession(norm)
            .convex(),
    )
}

impl TestBank {
    /// Integrands of the bank before normalization.
    fn raw_integrands(dim: usize) -> Vec<SharedIntegrand> {
        let mut e1 = vec![0.0; dim];
        e1[0] = 1.0;
        let diag = vec![1.0 / (dim as f64).sqrt(); dim];
        let mut out: Vec<SharedIntegrand> = vec![
            CatalogIntegrand::Area { dim }.shared(),
            CatalogIntegrand::Norm { dim }.shared(),
            CatalogIntegrand::Linear { a: e1.clone() }.shared(),
            CatalogIntegrand::TwoWell { a: e1.clone(), eps: 0.0 }.shared(),
            bounded("bump", dim, vec![0.0; dim]),
            CatalogIntegrand::Linear { a: diag.clone() }.shared(),
            shifted_area(dim, scale(&diag, 0.5)),
            bounded("bump+e1", dim, e1.clone()),
            bounded("bump-e1", dim, scale(&e1, -1.0)),
        ];
        out.push(if dim >= 2 {
            CatalogIntegrand::AbsDiff { dim }.shared()
        } else {
            shifted_area(dim, vec![-0.5])
        });
        out
    }

    fn normalize(phi: SharedIntegrand) -> Result<SharedIntegrand> {
        let c = t_lip_norm(phi.as_ref(), &BallSampling::default())?;
        Ok(Arc::new(Scaled { inner: phi, c: 1.0 / c.max(1e-12) }))
    }

    fn etas(n: usize) -> Vec<Eta> {
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        let mut e_last = vec![0.0; n];
        e_last[n - 1] = 1.0;
        vec![
            Eta::Affine { c: 1.0, g: vec![0.0; n] },
            Eta::Affine { c: 0.0, g: e1.clone() },
            Eta::Affine { c: 1.0, g: scale(&e_last, -1.0) },
            Eta::Wave { c: 0.0, amp: 1.0, k: e1, phase: 0.0 },
            Eta::Wave { c: 0.5, amp: 0.5, k: vec![1.0; n], phase: 0.3 },
            Eta::Wave { c: 0.0, amp: 1.0, k: e_last, phase: 1.0 },
        ]
    }

    fn build(n: usize, pairs: Vec<(Eta, SharedIntegrand)>) -> Result<Self> {
        let entries = pairs
            .into_iter()
            .map(|(eta, phi)| {
                let s = eta.lip_norm(n);
                Ok(BankEntry {
                    eta: eta.scaled(1.0 / s.max(1e-12)),
                    phi: Self::normalize(phi)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { n, entries })
    }

    /// 20 pairs: every bank integrand with η ≡ 1 and once with a varying η.
    pub fn standard(n: usize, dim: usize) -> Result<Self> {
        let phis = Self::raw_integrands(dim);
        let etas = Self::etas(n);
        let mut pairs = Vec::new();
        for phi in &phis {
            pairs.push((etas[0].clone(), phi.clone()));
        }
        for (k, phi) in phis.iter().enumerate() {
            pairs.push((etas[1 + k % (etas.len() - 1)].clone(), phi.clone()));
        }
        Self::build(n, pairs)
    }

    /// Five pairs with η ≡ 1.
    pub fn small(n: usize, dim: usize) -> Result<Self> {
        let phis = Self::raw_integrands(dim);
        let eta = Self::etas(n)[0].clone();
        Self::build(n, phis.into_iter().take(5).map(|p| (eta.clone(), p)).collect())
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// ∫η Φ(v) dx by cell quadrature.
    pub fn pair_field(&self, k: usize, v: &GridField) -> f64 {
        let e = &self.entries[k];
        let vol = v.cell_volume();
        (0..v.cells())
            .map(|c| e.eta.eval(&v.center(c)) * e.phi.eval(v.value(c)))
            .sum::<f64>()
            * vol
    }

    pub fn pair_measure(&self, k: usize, nu: &DiscreteYoungMeasure) -> Result<f64> {
        let e = &self.entries[k];
        nu.pair(&|x| e.eta.eval(x), e.phi.as_ref())
    }

    /// max over the bank of |⟨ε_v, η⊗Φ⟩ − ⟨ν, η⊗Φ⟩|.
    pub fn discrepancy(&self, v: &GridField, nu: &DiscreteYoungMeasure) -> Result<f64> {
        Ok(self.errors(v, nu)?.into_iter().fold(0.0, f64::max))
    }

    pub fn errors(&self, v: &GridField, nu: &DiscreteYoungMeasure) -> Result<Vec<f64>> {
        if v.space_dim() != self.n || nu.space_dim() != self.n {
            return input("bank, field and measure dimensions differ");
        }
        (0..self.len())
            .map(|k| Ok((self.pair_field(k, v) - self.pair_measure(k, nu)?).abs()))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerationReport {
    /// error_j = max over the bank, one per snapshot.
    pub errors: Vec<f64>,
    /// Bank index attaining each error.
    pub worst_entry: Vec<usize>,
    pub monotone: bool,
    pub final_error: f64,
}

pub fn verify_generation(plan: &SequencePlan, target: &DiscreteYoungMeasure, bank: &TestBank) -> Result<GenerationReport> {
    let mut errors = Vec::new();
    let mut worst_entry = Vec::new();
    for v in plan.snapshots() {
        let e = bank.errors(v, target)?;
        let (k, m) = e
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, m)| (k, *m))
            .unwrap_or((0, 0.0));
        errors.push(m);
        worst_entry.push(k);
    }
    let monotone = errors.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let final_error = *errors.last().expect("plans are nonempty");
    Ok(GenerationReport {
        errors,
        worst_entry,
        monotone,
        final_error,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Binning {
    pub cells: usize,
    /// Shell width δ of the ball compactification.
    pub delta: f64,
    /// Value lattice spacing for merging oscillation atoms.
    pub value_bin: f64,
    /// Coordinate spacing for merging sphere directions.
    pub sphere_bin: f64,
}

impl Default for Binning {
    fn default() -> Self {
        Self {
            cells: 8,
            delta: 0.05,
            value_bin: 0.05,
            sphere_bin: 0.01,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalYm {
    pub measure: DiscreteYoungMeasure,
    /// Cells without interior samples (δ₀ fallback).
    pub flagged: Vec<usize>,
}

/// Merge weighted points on a lattice of spacing h; representatives are
/// weighted means, weights are renormalized to 1.
fn bin_points(points: &[(Vec<f64>, f64)], h: f64) -> Vec<WeightedPoint> {
    let mut bins: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    for (p, w) in points {
        let key: Vec<i64> = p.iter().map(|x| (x / h).round() as i64).collect();
        let e = bins.entry(key).or_insert_with(|| (vec![0.0; p.len()], 0.0));
        axpy(&mut e.0, *w, p);
        e.1 += w;
    }
    let total: f64 = bins.values().map(|b| b.1).sum();
    let mut out: Vec<WeightedPoint> = bins
        .into_values()
        .filter(|b| b.1 > 0.0)
        .map(|(s, w)| WeightedPoint::new(w / total, scale(&s, 1.0 / w)))
        .collect();
    // exact unit sum
    let sum: f64 = out.iter().map(|a| a.weight).sum();
    if let Some(last) = out.last_mut() {
        last.weight += 1.0 - sum;
    }
    out
}

/// Young measure of the final snapshot through the ball compactification.
pub fn empirical_ym(plan: &SequencePlan, binning: &Binning) -> Result<EmpiricalYm> {
    let v = plan.last();
    let grid = v.grid();
    let n = v.space_dim();
    let dim = v.dim();
    if binning.cells == 0 || grid % binning.cells != 0 {
        return input(format!("{} cells per axis do not divide the {grid}-grid", binning.cells));
    }
    if !(binning.delta > 0.0 && binning.delta < 1.0) {
        return input("shell width must lie in (0, 1)");
    }
    let side = grid / binning.cells;
    let coarse = binning.cells.pow(n as u32);
    let fine_vol = v.cell_volume();
    let coarse_vol = (binning.cells as f64).powi(-(n as i32));
    let mut interior: Vec<Vec<(Vec<f64>, f64)>> = vec![Vec::new(); coarse];
    let mut shell: Vec<Vec<(Vec<f64>, f64)>> = vec![Vec::new(); coarse];
    for c in 0..v.cells() {
        let idx = v.multi_index(c);
        let mut k = 0;
        let mut stride = 1;
        for &i in &idx {
            k += (i / side) * stride;
            stride *= binning.cells;
        }
        let z = v.value(c);
        let r = norm(z);
        if r / (1.0 + r) <= 1.0 - binning.delta {
            interior[k].push((z.to_vec(), fine_vol));
        } else {
            shell[k].push((scale(z, 1.0 / r), (1.0 + r) * fine_vol));
        }
    }
    let mut cells = Vec::with_capacity(coarse);
    let mut flagged = Vec::new();
    for k in 0..coarse {
        let osc = if interior[k].is_empty() {
            flagged.push(k);
            vec![WeightedPoint::new(1.0, vec![0.0; dim])]
        } else {
            bin_points(&interior[k], binning.value_bin)
        };
        let mass: f64 = shell[k].iter().map(|p| p.1).sum();
        let (lam_a, sphere) = if mass > 0.0 {
            let atoms = bin_points(&shell[k], binning.sphere_bin)
                .into_iter()
                .map(|a| {
                    let r = norm(&a.point);
                    WeightedPoint::new(a.weight, scale(&a.point, 1.0 / r))
                })
                .collect();
            (mass / coarse_vol, atoms)
        } else {
            (0.0, vec![])
        };
        cells.push(Cell { osc, lam_a, sphere });
    }
    Ok(EmpiricalYm {
        measure: DiscreteYoungMeasure::new(n, binning.cells, cells, vec![])?,
        flagged,
    })
}

/// Lifted ball measure merged on a lattice of spacing h.
fn compress(mu: &PointCloudMeasure, h: f64) -> Result<PointCloudMeasure> {
    let pts: Vec<(Vec<f64>, f64)> = mu.atoms().map(|(p, w)| (p.to_vec(), w)).collect();
    let total: f64 = pts.iter().map(|p| p.1).sum();
    PointCloudMeasure::new(
        Metric::Euclidean,
        bin_points(&pts, h).into_iter().map(|a| (a.point, a.weight * total)),
    )
}

/// hstar distance of the x-integrated pairs, after merging lifted atoms on
/// a lattice of spacing `bin`.
pub fn hstar_to_target(emp: &DiscreteYoungMeasure, target: &DiscreteYoungMeasure, bin: f64) -> Result<f64> {
    let a = compress(&emp.lifted_pair()?.lift(), bin)?;
    let b = compress(&target.lifted_pair()?.lift(), bin)?;
    bl_distance(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::catalog;
    use crate::young_measures::SingularAtom;

    fn bump_potential(grid: usize) -> GridField {
        GridField::from_fn(2, grid, 1, |x| {
            let s = |t: f64| (std::f64::consts::PI * t).sin().powi(4);
            vec![s(x[0]) * s(x[1])]
        })
        .unwrap()
    }

    #[test]
    fn mollifier_basics() {
        let m = Mollifier::new(0.25, 2).unwrap();
        let taps = m.kernel_1d(64).unwrap();
        assert!((taps.iter().map(|t| t.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(taps.iter().all(|&(k, _)| (k.abs() as f64) < 8.0));
        assert!(Mollifier::new(0.01, 2).unwrap().kernel_1d(64).is_err());
        // 1D gradient bound 20/√12, tensor bound ≥ 15/8 times that
        let m1 = Mollifier::new(1.0, 1).unwrap();
        assert!((m1.gradient_bound() - 20.0 / 12f64.sqrt()).abs() < 1e-3);
        assert!(m.gradient_bound() >= 1.875 * m1.gradient_bound() - 1e-3);
    }

    #[test]
    fn mollify_examples() {
        let m = Mollifier::new(0.25, 2).unwrap();
        let c = VectorMeasure::new(2, 16, vec![vec![1.0, -2.0]; 256], vec![]).unwrap();
        let out = mollify(&c, &m).unwrap();
        assert!(out.values().chunks(2).all(|v| (v[0] - 1.0).abs() < 1e-12 && (v[1] + 2.0).abs() < 1e-12));

        let atom = VectorMeasure::new(2, 16, vec![vec![0.0]; 256], vec![VectorAtom { x: vec![0.5, 0.5], mass: 2.0, polar: vec![1.0] }])
            .unwrap();
        let out = mollify(&atom, &m).unwrap();
        assert!((out.values().iter().sum::<f64>() * out.cell_volume() - 2.0).abs() < 1e-8);
        for cc in 0..out.cells() {
            let x = out.center(cc);
            let inside = x.iter().all(|&xi| (xi - 0.5 - 1.0 / 32.0).abs() < 0.125 + 1e-9);
            if !inside {
                assert_eq!(out.value(cc)[0], 0.0);
            }
        }
    }

    #[test]
    fn tile_and_combine_examples() {
        let b = catalog::get("grad-scalar2").unwrap();
        let u = bump_potential(64);
        let z = [0.3, -0.2];
        let id = tile(&u, 1, &z, &b).unwrap();
        assert_eq!(id, apply_operator(&b, &u).unwrap().shifted(&z).unwrap());
        let area = CatalogIntegrand::Area { dim: 2 };
        let base = id.average(|v| area.eval(v));
        let t2 = tile(&u, 2, &z, &b).unwrap();
        assert!((t2.average(|v| area.eval(v)) - base).abs() < 1e-2);
        let l1 = jet_l1_norm(&u, 0).unwrap();
        let r2 = jet_l1_norm(&tiled_potential(&u, 2, 1).unwrap(), 0).unwrap() / l1;
        let r4 = jet_l1_norm(&tiled_potential(&u, 4, 1).unwrap(), 0).unwrap() / l1;
        assert!((r2 - 0.5).abs() < 0.01 && (r4 / r2 - 0.5).abs() < 0.01);
        assert!(tile(&u, 3, &z, &b).is_err());

        // p = 0 is pure u₀ tiling; u₀ = u₁ is the single-potential value
        let u0 = bump_potential(48);
        let u1 = u0.scaled(2.0);
        let pure = combine(&u0, &u1, 0, 3, &z, &b).unwrap();
        assert_eq!(pure, tile(&u0, 3, &z, &b).unwrap());
        let same = combine(&u0, &u0, 1, 3, &z, &b).unwrap();
        assert!((same.average(|v| area.eval(v)) - pure.average(|v| area.eval(v))).abs() < 1e-12);
        let mix = combine(&u0, &u1, 1, 2, &z, &b).unwrap();
        let e0 = apply_operator(&b, &u0).unwrap().shifted(&z).unwrap().average(|v| area.eval(v));
        let e1 = apply_operator(&b, &u1).unwrap().shifted(&z).unwrap().average(|v| area.eval(v));
        let want = 0.75 * e0 + 0.25 * e1;
        assert!((mix.average(|v| area.eval(v)) - want).abs() < 2e-2 * want);
        assert!(afree_mode_residual(&catalog::get("curl2-vec").unwrap(), &mix.shifted(&[-0.3, 0.2]).unwrap()).unwrap() < 1e-6);
    }

    #[test]
    fn plane_wave_examples() {
        let div2 = catalog::get("div2").unwrap();
        let v = plane_wave(&div2, &[1.0, 0.0], &[0.0, 1.0], &Profile::Sine, 3, 32).unwrap();
        assert!(afree_mode_residual(&div2, &v).unwrap() <= 1e-8);
        let zero = plane_wave(&div2, &[1.0, 0.0], &[0.0, 1.0], &Profile::Zero, 3, 32).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
        assert!(matches!(
            plane_wave(&div2, &[1.0, 0.0], &[1.0, 0.0], &Profile::Sine, 1, 32),
            Err(Error::NotInCone { .. })
        ));
        let sq = plane_wave(&div2, &[1.0, 0.0], &[0.0, 1.0], &Profile::Square { theta: 0.25 }, 4, 32).unwrap();
        let hi = sq.values().chunks(2).filter(|v| (v[1] - 0.75).abs() < 1e-12).count();
        let lo = sq.values().chunks(2).filter(|v| (v[1] + 0.25).abs() < 1e-12).count();
        assert_eq!((hi, lo), (256, 768));
    }

    #[test]
    fn spike_plan_examples() {
        let div2 = catalog::get("div2").unwrap();
        let plan = concentrating_spike(&div2, &[1.0, 0.0], &[0.0, 2.0], 1.0, &[0.5, 0.5], &[0.5, 0.25, 0.125], 64).unwrap();
        for v in plan.snapshots() {
            assert!((v.l1_norm() - 1.0).abs() < 0.02);
        }
        let zero = concentrating_spike(&div2, &[1.0, 0.0], &[0.0, 1.0], 0.0, &[0.5, 0.5], &[0.25], 32).unwrap();
        assert_eq!(zero.last().sup_norm(), 0.0);
    }

    #[test]
    fn plan_round_trip() {
        let div2 = catalog::get("div2").unwrap();
        let plan = concentrating_spike(&div2, &[1.0, 0.0], &[0.0, 1.0], 1.0, &[0.5, 0.5], &[0.5, 0.25], 16).unwrap();
        let dir = tempdir();
        plan.save(&dir).unwrap();
        assert_eq!(SequencePlan::load(&dir).unwrap(), plan);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    fn tempdir() -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("afym-plan-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn empirical_examples() {
        let c = GridField::constant(2, 16, &[0.3, -0.4]).unwrap();
        let plan = SequencePlan::new(vec![c], "constant", BTreeMap::new()).unwrap();
        let e = empirical_ym(&plan, &Binning { cells: 4, ..Default::default() }).unwrap();
        assert!(e.flagged.is_empty());
        for cell in e.measure.cells() {
            assert_eq!(cell.osc.len(), 1);
            assert!(norm(&sub(&cell.osc[0].point, &[0.3, -0.4])) < 1e-12);
            assert_eq!(cell.lam_a, 0.0);
        }

        let div2 = catalog::get("div2").unwrap();
        let w = [0.0, 1.0];
        let lam = plane_wave(&div2, &[1.0, 0.0], &w, &Profile::Square { theta: 0.5 }, 4, 32).unwrap().scaled(2.0);
        let plan = SequencePlan::new(vec![lam], "laminate", BTreeMap::new()).unwrap();
        let e = empirical_ym(&plan, &Binning { cells: 4, ..Default::default() }).unwrap();
        for cell in e.measure.cells() {
            assert_eq!(cell.osc.len(), 2);
            assert!(cell.osc.iter().all(|a| (a.weight - 0.5).abs() < 1e-12 && (norm(&a.point) - 1.0).abs() < 1e-12));
        }

        let spike = concentrating_spike(&div2, &[1.0, 0.0], &w, 1.0, &[0.5, 0.5], &[2.0 / 32.0], 32).unwrap();
        let e = empirical_ym(&spike, &Binning { cells: 4, ..Default::default() }).unwrap();
        let total = e.measure.concentration_mass();
        assert!((total - 1.0).abs() < 0.1, "{total}");
        let hit = e.measure.cells().iter().filter(|c| c.lam_a > 0.0).count();
        assert!(hit >= 1);
        assert!(e
            .measure
            .cells()
            .iter()
            .filter(|c| c.lam_a > 0.0)
            .all(|c| c.sphere.len() == 1 && norm(&sub(&c.sphere[0].point, &w)) < 1e-12));
    }

    #[test]
    fn bank_normalization() {
        let bank = TestBank::standard(2, 2).unwrap();
        assert_eq!(bank.len(), 20);
        for e in bank.entries() {
            assert!(e.eta.lip_norm(2) <= 1.0 + 1e-12);
            let t = t_lip_norm(e.phi.as_ref(), &BallSampling::default()).unwrap();
            assert!(t <= 1.0 + 1e-9, "{} {t}", e.phi.name());
        }
        assert_eq!(TestBank::small(2, 2).unwrap().len(), 5);
    }

    #[test]
    fn verify_generation_examples() {
        let bank = TestBank::standard(2, 2).unwrap();
        let z = [0.4, 0.1];
        let target = DiscreteYoungMeasure::homogeneous(2, 32, vec![WeightedPoint::new(1.0, z.to_vec())], 0.0, vec![]).unwrap();
        let plan = SequencePlan::new(vec![GridField::constant(2, 32, &z).unwrap()], "constant", BTreeMap::new()).unwrap();
        assert!(verify_generation(&plan, &target, &bank).unwrap().final_error <= 1e-3);

        let div2 = catalog::get("div2").unwrap();
        let w = [0.0, 1.0];
        let snaps = [4, 8, 16]
            .iter()
            .map(|&j| plane_wave(&div2, &[1.0, 0.0], &w, &Profile::Square { theta: 0.5 }, j, 64).unwrap().scaled(2.0))
            .collect();
        let plan = SequencePlan::new(snaps, "laminate", BTreeMap::new()).unwrap();
        let two = |a: f64| {
            DiscreteYoungMeasure::homogeneous(
                2,
                64,
                vec![WeightedPoint::new(a, w.to_vec()), WeightedPoint::new(1.0 - a, scale(&w, -1.0))],
                0.0,
                vec![],
            )
            .unwrap()
        };
        let r = verify_generation(&plan, &two(0.5), &bank).unwrap();
        assert!(r.monotone && r.final_error <= 0.1, "{r:?}");
        let wrong = verify_generation(&plan, &two(0.7), &bank).unwrap();
        assert!(wrong.final_error >= 0.1 * 0.0 && wrong.final_error > r.final_error, "{wrong:?}");
    }

    #[test]
    fn singular_generation_examples() {
        let ops = OperatorPair::new(catalog::get("div2").unwrap(), catalog::get("perp-grad2")).unwrap();
        let bank = TestBank::standard(2, 2).unwrap();
        let base = DiscreteYoungMeasure::homogeneous(2, 64, vec![WeightedPoint::new(1.0, vec![0.0, 0.0])], 0.0, vec![]).unwrap();
        let (f, r) = inhomogenize_singular(&base, 0.1, 2, 2, 0.125, &ops, 64, &bank).unwrap();
        assert_eq!(f.sup_norm(), 0.0);
        assert_eq!(r.bank_error, 0.0);

        let w = vec![0.0, 1.0];
        let one = base
            .clone()
            .with_singular(vec![SingularAtom { x: vec![0.5, 0.5], mass: 1.0, sphere: vec![WeightedPoint::new(1.0, w.clone())] }])
            .unwrap();
        let (_, r) = inhomogenize_singular(&one, 0.1, 4, 3, 0.0625, &ops, 64, &bank).unwrap();
        assert!(r.bank_error <= 0.1, "{r:?}");

        let two = base
            .with_singular(vec![
                SingularAtom {
                    x: vec![0.3, 0.5],
                    mass: 0.5,
                    sphere: vec![WeightedPoint::new(0.5, w.clone()), WeightedPoint::new(0.5, scale(&w, -1.0))],
                },
                SingularAtom { x: vec![0.7, 0.5], mass: 0.5, sphere: vec![WeightedPoint::new(1.0, w.clone())] },
            ])
            .unwrap();
        let (_, r) = inhomogenize_singular(&two, 0.1, 4, 3, 0.125, &ops, 64, &bank).unwrap();
        assert!(r.bank_error <= 0.15 && r.budget_used < r.budget_allowed, "{r:?}");

        let edge = DiscreteYoungMeasure::homogeneous(2, 64, vec![WeightedPoint::new(1.0, vec![0.0, 0.0])], 0.0, vec![])
            .unwrap()
            .with_singular(vec![SingularAtom { x: vec![0.05, 0.5], mass: 1.0, sphere: vec![WeightedPoint::new(1.0, w)] }])
            .unwrap();
        assert!(matches!(
            inhomogenize_singular(&edge, 0.1, 4, 3, 0.0625, &ops, 64, &bank),
            Err(Error::Margin { .. })
        ));
    }

    #[test]
    fn regular_generation_examples() {
        let ops = OperatorPair::new(catalog::get("curl2-vec").unwrap(), catalog::get("grad-scalar2")).unwrap();
        let bank = TestBank::standard(2, 2).unwrap();
        let a = vec![1.0, 0.0];
        let lam = DiscreteYoungMeasure::homogeneous(
            2,
            4,
            vec![WeightedPoint::new(0.5, a.clone()), WeightedPoint::new(0.5, scale(&a, -1.0))],
            0.0,
            vec![],
        )
        .unwrap();
        let opts = RegularOptions { frequency: 8, layers: 2, width: 2.0 / 64.0 };
        let (_, r) = inhomogenize_regular(&lam, 0.5, 2, 0.0625, &ops, 64, &opts, &bank).unwrap();
        assert!(r.bank_error <= 0.1, "{r:?}");

        let div = OperatorPair::new(catalog::get("div2").unwrap(), catalog::get("perp-grad2")).unwrap();
        let conc = DiscreteYoungMeasure::homogeneous(
            2,
            4,
            vec![WeightedPoint::new(1.0, vec![0.0, 0.0])],
            0.5,
            vec![WeightedPoint::new(1.0, vec![0.0, 1.0])],
        )
        .unwrap();
        let opts = RegularOptions { frequency: 8, layers: 2, width: 2.0 / 64.0 };
        let (_, r) = inhomogenize_regular(&conc, 0.5, 2, 0.0625, &div, 64, &opts, &bank).unwrap();
        assert!(r.bank_error <= 0.15, "{r:?}");
    }
}
