//! Homogeneous constant-coefficient differential operators and their symbols.
//!
//! An operator of order k is stored as a list of coefficient matrices
//! indexed by multi-indices of degree k; its symbol at a frequency ξ is the
//! matrix polynomial Σ ξ^α A_α. Everything downstream (wave cones,
//! projectors, potentials) is derived from this evaluation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{input, Error, Result};
use crate::linalg::{full_svd, mat_vec, norm, normalized, rank_of, rank_of_rows, spectral_norm};
use crate::sphere::SphereSampler;

/// Relative singular-value threshold deciding rank.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// ξ^α
    pub fn monomial(&self, xi: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(xi)
            .map(|(&a, &x)| x.powi(a as i32))
            .product()
    }

    /// ∂/∂ξ_i of ξ^α.
    pub fn monomial_derivative(&self, xi: &[f64], i: usize) -> f64 {
        let a = self.0[i];
        if a == 0 {
            return 0.0;
        }
        let mut p = a as f64;
        for (j, (&aj, &x)) in self.0.iter().zip(xi).enumerate() {
            let e = if j == i { aj - 1 } else { aj };
            p *= x.powi(e as i32);
        }
        p
    }
}

#[derive(Clone, Debug)]
pub struct OperatorSpec {
    space_dim: usize,
    order: u32,
    dim_domain: usize,
    dim_codomain: usize,
    terms: Vec<(MultiIndex, DMatrix<f64>)>,
}

impl OperatorSpec {
    pub fn new(
        space_dim: usize,
        order: u32,
        dim_domain: usize,
        dim_codomain: usize,
        terms: Vec<(MultiIndex, DMatrix<f64>)>,
    ) -> Result<Self> {
        if space_dim == 0 || order == 0 || dim_domain == 0 || dim_codomain == 0 {
            return input("operator dimensions and order must be positive");
        }
        let mut nonzero = false;
        for (alpha, m) in &terms {
            if alpha.0.len() != space_dim {
                return input(format!(
                    "multi-index {:?} has length {}, expected {space_dim}",
                    alpha.0,
                    alpha.0.len()
                ));
            }
            if alpha.degree() != order {
                return input(format!(
                    "multi-index {:?} has degree {}, operator order is {order}",
                    alpha.0,
                    alpha.degree()
                ));
            }
            if m.shape() != (dim_codomain, dim_domain) {
                return input(format!(
                    "term matrix has shape {:?}, expected ({dim_codomain}, {dim_domain})",
                    m.shape()
                ));
            }
            nonzero |= m.iter().any(|&x| x != 0.0);
        }
        if !nonzero {
            return input("operator has no nonzero term");
        }
        Ok(Self {
            space_dim,
            order,
            dim_domain,
            dim_codomain,
            terms,
        })
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }
    pub fn order(&self) -> u32 {
        self.order
    }
    pub fn dim_domain(&self) -> usize {
        self.dim_domain
    }
    pub fn dim_codomain(&self) -> usize {
        self.dim_codomain
    }
    pub fn terms(&self) -> &[(MultiIndex, DMatrix<f64>)] {
        &self.terms
    }

    /// Σ ξ^α A_α without decomposition.
    pub fn symbol_matrix(&self, xi: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim_codomain, self.dim_domain);
        for (alpha, a) in &self.terms {
            let c = alpha.monomial(xi);
            if c != 0.0 {
                m += a * c;
            }
        }
        m
    }

    pub fn symbol(&self, xi: &[f64]) -> Result<SymbolMatrix> {
        if xi.len() != self.space_dim {
            return input(format!(
                "frequency has length {}, operator acts on R^{}",
                xi.len(),
                self.space_dim
            ));
        }
        Ok(SymbolMatrix::from_matrix(xi.to_vec(), self.symbol_matrix(xi)))
    }

    /// |A(ξ)z| together with its gradient in ξ.
    fn applied_norm_sq_and_grad(&self, xi: &[f64], z: &[f64]) -> (f64, Vec<f64>) {
        let az = mat_vec(&self.symbol_matrix(xi), z);
        let mut grad = vec![0.0; self.space_dim];
        for (alpha, a) in &self.terms {
            let az_alpha = mat_vec(a, z);
            let proj: f64 = az.iter().zip(&az_alpha).map(|(x, y)| x * y).sum();
            for (i, g) in grad.iter_mut().enumerate() {
                *g += 2.0 * proj * alpha.monomial_derivative(xi, i);
            }
        }
        (az.iter().map(|x| x * x).sum(), grad)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: OperatorFile = serde_json::from_str(&text)?;
        file.try_into()
    }

    pub fn to_file_format(&self) -> OperatorFile {
        OperatorFile {
            n: self.space_dim,
            order: self.order,
            dim_domain: self.dim_domain,
            dim_codomain: self.dim_codomain,
            terms: self
                .terms
                .iter()
                .map(|(alpha, m)| TermFile {
                    alpha: alpha.0.clone(),
                    matrix: (0..m.nrows())
                        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                        .collect(),
                })
                .collect(),
        }
    }
}

/// JSON layout of an operator file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub n: usize,
    pub order: u32,
    pub dim_domain: usize,
    pub dim_codomain: usize,
    pub terms: Vec<TermFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermFile {
    pub alpha: Vec<u32>,
    pub matrix: Vec<Vec<f64>>,
}

impl TryFrom<OperatorFile> for OperatorSpec {
    type Error = Error;

    fn try_from(f: OperatorFile) -> Result<Self> {
        let mut terms = Vec::with_capacity(f.terms.len());
        for t in f.terms {
            if t.matrix.len() != f.dim_codomain || t.matrix.iter().any(|r| r.len() != f.dim_domain)
            {
                return input(format!(
                    "term {:?}: matrix must be {} x {}",
                    t.alpha, f.dim_codomain, f.dim_domain
                ));
            }
            let m = DMatrix::from_fn(f.dim_codomain, f.dim_domain, |i, j| t.matrix[i][j]);
            terms.push((MultiIndex(t.alpha), m));
        }
        OperatorSpec::new(f.n, f.order, f.dim_domain, f.dim_codomain, terms)
    }
}

#[derive(Clone, Debug)]
pub struct SymbolMatrix {
    pub at: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// Orthonormal basis of the kernel, one vector per entry.
    pub kernel_basis: Vec<Vec<f64>>,
    /// Orthonormal basis of the row space (complement of the kernel).
    pub range_basis: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

impl SymbolMatrix {
    pub fn from_matrix(at: Vec<f64>, matrix: DMatrix<f64>) -> Self {
        let svd = full_svd(&matrix);
        let rank = rank_of(&svd.singular_values, RANK_TOL);
        let mut right = svd.right;
        let kernel_basis = right.split_off(rank);
        Self {
            at,
            matrix,
            rank,
            kernel_basis,
            range_basis: right,
            singular_values: svd.singular_values.into_iter().take(rank.max(1)).collect(),
        }
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Orthogonal projector onto the kernel, row-major dim × dim.
    pub fn kernel_projector(&self) -> DMatrix<f64> {
        let d = self.matrix.ncols();
        let mut p = DMatrix::zeros(d, d);
        for k in &self.kernel_basis {
            for i in 0..d {
                for j in 0..d {
                    p[(i, j)] += k[i] * k[j];
                }
            }
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankStatus {
    Constant(usize),
    NonConstant,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeReport {
    pub sampled_rank: RankStatus,
    /// The first two conflicting (ξ, rank) pairs when the rank varies.
    pub witnesses: Vec<(Vec<f64>, usize)>,
    /// Unit kernel vectors collected over all sampled frequencies.
    pub cone_samples: Vec<Vec<f64>>,
    pub spanning: bool,
}

impl ConeReport {
    pub fn is_constant(&self) -> bool {
        matches!(self.sampled_rank, RankStatus::Constant(_))
    }
}

pub fn check_constant_rank(op: &OperatorSpec, sampler: &SphereSampler) -> ConeReport {
    let points = sampler.points(op.space_dim());
    let mut first: Option<(Vec<f64>, usize)> = None;
    let mut witnesses = Vec::new();
    let mut cone_samples = Vec::new();
    for xi in points {
        let s = SymbolMatrix::from_matrix(xi.clone(), op.symbol_matrix(&xi));
        cone_samples.extend(s.kernel_basis.iter().cloned());
        match &first {
            None => first = Some((xi, s.rank)),
            Some((_, r)) if *r != s.rank && witnesses.is_empty() => {
                witnesses.push(first.clone().unwrap());
                witnesses.push((xi, s.rank));
            }
            _ => {}
        }
    }
    let sampled_rank = match (&first, witnesses.is_empty()) {
        (Some((_, r)), true) => RankStatus::Constant(*r),
        (None, _) => RankStatus::Constant(0),
        _ => RankStatus::NonConstant,
    };
    let spanning = rank_of_rows(&cone_samples, op.dim_domain(), 1e-8) == op.dim_domain();
    ConeReport {
        sampled_rank,
        witnesses,
        cone_samples,
        spanning,
    }
}

/// Coarse-grid-then-descent search for the wave cone.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeSearch {
    pub coarse: usize,
    pub steps: usize,
    /// Number of best coarse candidates refined by descent.
    pub candidates: usize,
}

impl Default for ConeSearch {
    fn default() -> Self {
        Self {
            coarse: 1000,
            steps: 50,
            candidates: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeMembership {
    pub residual: f64,
    pub member: bool,
    /// Frequency attaining the smallest residual.
    pub xi: Vec<f64>,
}

pub const CONE_MEMBER_TOL: f64 = 1e-6;

pub fn wave_cone_membership(
    op: &OperatorSpec,
    z: &[f64],
    search: &ConeSearch,
) -> Result<ConeMembership> {
    if z.len() != op.dim_domain() {
        return input(format!(
            "vector has length {}, operator domain is {}",
            z.len(),
            op.dim_domain()
        ));
    }
    let zn = norm(z);
    if zn == 0.0 {
        return input("zero vector: cone membership is trivial");
    }
    let points = SphereSampler::new(search.coarse.max(1)).points(op.space_dim());
    let mut op_norm = 0.0_f64;
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(points.len());
    for xi in points {
        let m = op.symbol_matrix(&xi);
        op_norm = op_norm.max(spectral_norm(&m));
        scored.push((norm(&mat_vec(&m, z)), xi));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = scored[0].clone();
    if op.space_dim() > 1 {
        for (_, start) in scored.iter().take(search.candidates.max(1)) {
            let refined = sphere_descent(op, z, start.clone(), search.steps);
            if refined.0 < best.0 {
                best = refined;
            }
        }
    }
    if op.order() == 1 {
        // A(ξ)z = Cξ with columns A(e_i)z: the minimum is σ_min(C).
        let n = op.space_dim();
        let mut c = DMatrix::zeros(op.dim_codomain(), n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let col = mat_vec(&op.symbol_matrix(&e), z);
            for (r, v) in col.into_iter().enumerate() {
                c[(r, i)] = v;
            }
        }
        let svd = full_svd(&c);
        let k = n - 1;
        if svd.singular_values[k] < best.0 {
            best = (svd.singular_values[k], svd.right[k].clone());
        }
    }
    let residual = if op_norm > 0.0 {
        best.0 / (zn * op_norm)
    } else {
        0.0
    };
    Ok(ConeMembership {
        residual,
        member: residual < CONE_MEMBER_TOL,
        xi: best.1,
    })
}

/// Projected gradient descent of |A(ξ)z|² over the unit sphere.
fn sphere_descent(op: &OperatorSpec, z: &[f64], mut xi: Vec<f64>, steps: usize) -> (f64, Vec<f64>) {
    let (mut val, _) = op.applied_norm_sq_and_grad(&xi, z);
    let mut step = 1.0;
    for _ in 0..steps {
        let (_, g) = op.applied_norm_sq_and_grad(&xi, z);
        // Tangential component only.
        let radial: f64 = g.iter().zip(&xi).map(|(a, b)| a * b).sum();
        let tg: Vec<f64> = g.iter().zip(&xi).map(|(a, b)| a - radial * b).collect();
        if norm(&tg) < 1e-300 {
            break;
        }
        let mut improved = false;
        while step > 1e-14 {
            let trial: Vec<f64> = xi.iter().zip(&tg).map(|(x, d)| x - step * d).collect();
            let Some(trial) = normalized(&trial) else {
                step *= 0.5;
                continue;
            };
            let (tv, _) = op.applied_norm_sq_and_grad(&trial, z);
            if tv < val {
                xi = trial;
                val = tv;
                step *= 2.0;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (val.max(0.0).sqrt(), xi)
}

pub fn spanning_check(op: &OperatorSpec, samples: usize) -> bool {
    check_constant_rank(op, &SphereSampler::new(samples)).spanning
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactnessReport {
    pub exact: bool,
    /// Largest ‖A(ξ)B(ξ)‖ / (‖A(ξ)‖‖B(ξ)‖) over the samples.
    pub worst_composition: f64,
    pub worst_at: Vec<f64>,
    /// Samples where rank B(ξ) ≠ dim ker A(ξ): (ξ, rank B, dim ker A).
    pub rank_mismatches: Vec<(Vec<f64>, usize, usize)>,
    pub samples: usize,
}

pub const EXACTNESS_TOL: f64 = 1e-12;

pub fn verify_exactness(
    op_a: &OperatorSpec,
    op_b: &OperatorSpec,
    samples: usize,
) -> Result<ExactnessReport> {
    if op_b.dim_codomain() != op_a.dim_domain() || op_b.space_dim() != op_a.space_dim() {
        return input(format!(
            "B maps into R^{} on R^{}, A acts on R^{} over R^{}",
            op_b.dim_codomain(),
            op_b.space_dim(),
            op_a.dim_domain(),
            op_a.space_dim()
        ));
    }
    let points = SphereSampler::new(samples).points(op_a.space_dim());
    let mut worst = 0.0_f64;
    let mut worst_at = points[0].clone();
    let mut mismatches = Vec::new();
    for xi in &points {
        let a = op_a.symbol(xi)?;
        let b = op_b.symbol(xi)?;
        let comp = &a.matrix * &b.matrix;
        let denom = a.sigma_max() * b.sigma_max();
        let rel = if denom > 0.0 {
            spectral_norm(&comp) / denom
        } else {
            spectral_norm(&comp)
        };
        if rel > worst {
            worst = rel;
            worst_at = xi.clone();
        }
        if b.rank != a.kernel_basis.len() {
            mismatches.push((xi.clone(), b.rank, a.kernel_basis.len()));
        }
    }
    Ok(ExactnessReport {
        exact: worst <= EXACTNESS_TOL && mismatches.is_empty(),
        worst_composition: worst,
        worst_at,
        rank_mismatches: mismatches,
        samples: points.len(),
    })
}

/// Named operators shipped with the toolkit.
pub mod catalog {
    use super::*;

    pub const NAMES: &[&str] = &[
        "div2",
        "curl2-vec",
        "curl2-mat",
        "grad-scalar2",
        "perp-grad2",
        "grad-vec2",
        "div1",
        "diag2",
    ];

    fn op(
        n: usize,
        order: u32,
        dom: usize,
        cod: usize,
        terms: &[(&[u32], &[f64])],
    ) -> OperatorSpec {
        let terms = terms
            .iter()
            .map(|(a, m)| (MultiIndex(a.to_vec()), DMatrix::from_row_slice(cod, dom, m)))
            .collect();
        OperatorSpec::new(n, order, dom, cod, terms).expect("catalog operators are well formed")
    }

    pub fn get(name: &str) -> Option<OperatorSpec> {
        Some(match name {
            // A(ξ)v = ξ·v
            "div2" => op(2, 1, 2, 1, &[(&[1, 0], &[1., 0.]), (&[0, 1], &[0., 1.])]),
            // A(ξ)v = ξ₁v₂ − ξ₂v₁
            "curl2-vec" => op(2, 1, 2, 1, &[(&[1, 0], &[0., 1.]), (&[0, 1], &[-1., 0.])]),
            // row-wise curl of a 2×2 matrix field stored row-major
            "curl2-mat" => op(
                2,
                1,
                4,
                2,
                &[
                    (&[1, 0], &[0., 1., 0., 0., 0., 0., 0., 1.]),
                    (&[0, 1], &[-1., 0., 0., 0., 0., 0., -1., 0.]),
                ],
            ),
            "grad-scalar2" => op(2, 1, 1, 2, &[(&[1, 0], &[1., 0.]), (&[0, 1], &[0., 1.])]),
            // Bu = (∂₂u, −∂₁u)
            "perp-grad2" => op(2, 1, 1, 2, &[(&[1, 0], &[0., -1.]), (&[0, 1], &[1., 0.])]),
            // Du of a vector field, row-major 2×2
            "grad-vec2" => op(
                2,
                1,
                2,
                4,
                &[
                    (&[1, 0], &[1., 0., 0., 0., 0., 1., 0., 0.]),
                    (&[0, 1], &[0., 0., 1., 0., 0., 0., 0., 1.]),
                ],
            ),
            "div1" => op(1, 1, 1, 1, &[(&[1], &[1.])]),
            // diag(ξ₁, ξ₂): the standard rank-jumping example
            "diag2" => op(
                2,
                1,
                2,
                2,
                &[(&[1, 0], &[1., 0., 0., 0.]), (&[0, 1], &[0., 0., 0., 1.])],
            ),
            _ => return None,
        })
    }

    /// Potential operator paired with a catalog operator, when one ships.
    pub fn potential_of(name: &str) -> Option<&'static str> {
        match name {
            "div2" => Some("perp-grad2"),
            "curl2-vec" => Some("grad-scalar2"),
            "curl2-mat" => Some("grad-vec2"),
            _ => None,
        }
    }
}

/// Resolve a catalog name or a path to an operator file.
pub fn resolve_operator(name_or_path: &str) -> Result<OperatorSpec> {
    if let Some(op) = catalog::get(name_or_path) {
        return Ok(op);
    }
    let p = Path::new(name_or_path);
    if p.exists() {
        return OperatorSpec::from_file(p);
    }
    input(format!(
        "`{name_or_path}` is neither a catalog operator ({}) nor a readable file",
        catalog::NAMES.join(", ")
    ))
}
