//! Bounded-Lipschitz norm and metric on finitely supported measures, and
//! the lifted metric on pairs (μ⁰, μ^∞) through the ball compactification.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

use crate::error::{input, Result};
use crate::integrands::{recession_value, transform_t, Integrand};
use crate::linalg::{norm, scale};
use crate::lp::LinearProgram;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Linf,
    Euclidean,
}

impl Metric {
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        let it = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Metric::Linf => it.fold(0.0, f64::max),
            Metric::Euclidean => it.map(|d| d * d).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// Finitely supported signed measure; duplicate points are merged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureFile", into = "MeasureFile")]
pub struct PointCloudMeasure {
    metric: Metric,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    #[serde(default)]
    pub metric: Metric,
    pub atoms: Vec<Atom>,
}

impl TryFrom<MeasureFile> for PointCloudMeasure {
    type Error = crate::Error;
    fn try_from(f: MeasureFile) -> Result<Self> {
        Self::new(f.metric, f.atoms.into_iter().map(|a| (a.point, a.weight)))
    }
}

impl From<PointCloudMeasure> for MeasureFile {
    fn from(m: PointCloudMeasure) -> Self {
        MeasureFile {
            metric: m.metric,
            atoms: m
                .points
                .into_iter()
                .zip(m.weights)
                .map(|(point, weight)| Atom { point, weight })
                .collect(),
        }
    }
}

fn point_key(p: &[f64]) -> Vec<u64> {
    // +0.0 and −0.0 are the same point
    p.iter().map(|&x| (x + 0.0).to_bits()).collect()
}

impl PointCloudMeasure {
    pub fn new(metric: Metric, atoms: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Result<Self> {
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut weights = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for (p, w) in atoms {
            if let Some(first) = points.first() {
                if p.len() != first.len() {
                    return input("atoms of one measure must share a dimension");
                }
            }
            if !w.is_finite() || p.iter().any(|x| !x.is_finite()) {
                return input("atom points and weights must be finite");
            }
            match index.get(&point_key(&p)) {
                Some(&i) => weights[i] += w,
                None => {
                    index.insert(point_key(&p), points.len());
                    points.push(p);
                    weights.push(w);
                }
            }
        }
        Ok(Self {
            metric,
            points,
            weights,
        })
    }

    pub fn zero(metric: Metric) -> Self {
        Self {
            metric,
            points: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn total_variation(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            metric: self.metric,
            points: self.points.clone(),
            weights: self.weights.iter().map(|w| c * w).collect(),
        }
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    /// Integral of a function against the measure.
    pub fn pair(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.atoms().map(|(p, w)| w * f(p)).sum()
    }

    /// μ + c·ν with merged supports.
    pub fn combine(&self, c: f64, other: &Self) -> Result<Self> {
        if self.metric != other.metric {
            return input("measures use different metrics");
        }
        if let (Some(a), Some(b)) = (self.dim(), other.dim()) {
            if a != b {
                return input(format!("measures live in dimensions {a} and {b}"));
            }
        }
        Self::new(
            self.metric,
            self.atoms()
                .map(|(p, w)| (p.to_vec(), w))
                .chain(other.atoms().map(|(p, w)| (p.to_vec(), c * w))),
        )
    }
}

/// LP optimum with the optimal test function on the support.
#[derive(Clone, Debug, Serialize)]
pub struct BlReport {
    pub value: f64,
    pub phi: Vec<f64>,
    pub sup_budget: f64,
    pub lip_budget: f64,
    pub pivots: usize,
    pub rounds: usize,
    pub dual_residual: f64,
}

const NEIGHBOURS: usize = 10;
const MAX_ROUNDS: usize = 100;

/// ‖μ‖_K: maximize Σ w_iΦ_i subject to |Φ_i| ≤ s, |Φ_i − Φ_j| ≤ L·d_ij,
/// s + L ≤ 1.
///
/// Lipschitz constraints enter by constraint generation: nearest-neighbour
/// pairs first, then every violated pair, until the restricted optimum is
/// feasible for all pairs.
pub fn bl_norm_report(mu: &PointCloudMeasure) -> Result<BlReport> {
    if mu.is_empty() {
        return input("bl_norm needs a nonempty support");
    }
    let keep: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights[i] != 0.0).collect();
    if keep.is_empty() {
        return Ok(BlReport {
            value: 0.0,
            phi: vec![0.0; mu.len()],
            sup_budget: 0.0,
            lip_budget: 0.0,
            pivots: 0,
            rounds: 0,
            dual_residual: 0.0,
        });
    }
    let k = keep.len();
    let pts: Vec<&[f64]> = keep.iter().map(|&i| mu.points[i].as_slice()).collect();
    let w: Vec<f64> = keep.iter().map(|&i| mu.weights[i]).collect();
    let d = |i: usize, j: usize| mu.metric.dist(pts[i], pts[j]);

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut active = vec![false; k * k];
    let mut add_pair = |i: usize, j: usize, pairs: &mut Vec<(usize, usize)>| {
        if i != j && !active[i * k + j] {
            active[i * k + j] = true;
            pairs.push((i, j));
        }
    };
    for i in 0..k {
        let mut order: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d(i, a).total_cmp(&d(i, b)));
        for &j in order.iter().take(NEIGHBOURS) {
            add_pair(i, j, &mut pairs);
            add_pair(j, i, &mut pairs);
        }
    }

    // variables: p_i = Φ_i + s (i < k), s, L
    let n = k + 2;
    let total: f64 = w.iter().sum();
    let mut c = w.clone();
    c.push(-total);
    c.push(0.0);
    let mut pivots = 0;
    for round in 1..=MAX_ROUNDS {
        let mut a = Vec::with_capacity(k + pairs.len() + 1);
        for i in 0..k {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row[k] = -2.0;
            a.push(row);
        }
        for &(i, j) in &pairs {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row[j] = -1.0;
            row[k + 1] = -d(i, j);
            a.push(row);
        }
        let mut row = vec![0.0; n];
        row[k] = 1.0;
        row[k + 1] = 1.0;
        a.push(row);
        let mut b = vec![0.0; a.len()];
        *b.last_mut().unwrap() = 1.0;
        let sol = LinearProgram { c: c.clone(), a, b }.solve()?;
        pivots += sol.pivots;
        let s = sol.x[k];
        let lip = sol.x[k + 1];
        let phi: Vec<f64> = (0..k).map(|i| sol.x[i] - s).collect();
        let before = pairs.len();
        for i in 0..k {
            for j in 0..k {
                if i != j && phi[i] - phi[j] > lip * d(i, j) + 1e-12 {
                    add_pair(i, j, &mut pairs);
                }
            }
        }
        if pairs.len() == before {
            let mut full = vec![0.0; mu.len()];
            for (slot, &i) in keep.iter().enumerate() {
                full[i] = phi[slot];
            }
            return Ok(BlReport {
                value: sol.value,
                phi: full,
                sup_budget: s,
                lip_budget: lip,
                pivots,
                rounds: round,
                dual_residual: sol.dual_residual,
            });
        }
    }
    Err(crate::Error::Lp {
        reason: format!("constraint generation did not settle in {MAX_ROUNDS} rounds"),
        dump: serde_json::to_string(&MeasureFile::from(mu.clone())).unwrap_or_default(),
    })
}

pub fn bl_norm(mu: &PointCloudMeasure) -> Result<f64> {
    Ok(bl_norm_report(mu)?.value)
}

/// ‖μ − ν‖_K with merged supports.
pub fn bl_distance(mu: &PointCloudMeasure, nu: &PointCloudMeasure) -> Result<f64> {
    if mu.is_empty() && nu.is_empty() {
        return Ok(0.0);
    }
    bl_norm(&mu.combine(-1.0, nu)?)
}

/// Radius tolerance for atoms of μ^∞.
pub const SPHERE_TOL: f64 = 1e-10;

/// Element (μ⁰, μ^∞) of the dual of the integrand space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LiftedPairFile", into = "LiftedPairFile")]
pub struct LiftedPair {
    mu0: PointCloudMeasure,
    mu_inf: PointCloudMeasure,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftedPairFile {
    pub mu0: PointCloudMeasure,
    pub muinf: PointCloudMeasure,
}

impl TryFrom<LiftedPairFile> for LiftedPair {
    type Error = crate::Error;
    fn try_from(f: LiftedPairFile) -> Result<Self> {
        Self::new(f.mu0, f.muinf)
    }
}

impl From<LiftedPair> for LiftedPairFile {
    fn from(p: LiftedPair) -> Self {
        LiftedPairFile {
            mu0: p.mu0,
            muinf: p.mu_inf,
        }
    }
}

impl LiftedPair {
    pub fn new(mu0: PointCloudMeasure, mu_inf: PointCloudMeasure) -> Result<Self> {
        if let (Some(a), Some(b)) = (mu0.dim(), mu_inf.dim()) {
            if a != b {
                return input(format!("μ⁰ lives in dimension {a}, μ^∞ in {b}"));
            }
        }
        for (p, _) in mu_inf.atoms() {
            let r = norm(p);
            if (r - 1.0).abs() > SPHERE_TOL {
                return input(format!("μ^∞ atom {p:?} has norm {r}, not 1"));
            }
        }
        Ok(Self { mu0, mu_inf })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn mu0(&self) -> &PointCloudMeasure {
        &self.mu0
    }

    pub fn mu_inf(&self) -> &PointCloudMeasure {
        &self.mu_inf
    }

    /// ℓ(Φ) = ∫Φ dμ⁰ + ∫Φ^∞ dμ^∞.
    pub fn pair(&self, f: &dyn Integrand) -> Result<f64> {
        let mut total = self.mu0.pair(|z| f.eval(z));
        for (p, w) in self.mu_inf.atoms() {
            total += w * recession_value(f, p)?;
        }
        Ok(total)
    }

    /// Measure on the closed unit ball: atom (w, z) of μ⁰ goes to
    /// z/(1+|z|) with weight w(1+|z|); atoms of μ^∞ stay on the sphere.
    pub fn lift(&self) -> PointCloudMeasure {
        let inner = self.mu0.atoms().map(|(z, w)| {
            let s = 1.0 + norm(z);
            (scale(z, 1.0 / s), w * s)
        });
        let outer = self.mu_inf.atoms().map(|(z, w)| (z.to_vec(), w));
        PointCloudMeasure::new(Metric::Euclidean, inner.chain(outer).collect::<Vec<_>>())
            .expect("lifted atoms are finite and share a dimension")
    }

    /// ⟨lift, TΦ⟩; equals `pair` for every integrand.
    pub fn lifted_pair(&self, f: &dyn Integrand) -> Result<f64> {
        let t = transform_t(f);
        let mut total = 0.0;
        for (p, w) in self.lift().atoms() {
            total += w * t.eval(p)?;
        }
        Ok(total)
    }
}

/// bl_distance of the lifted ball measures under the Euclidean metric.
pub fn hstar_distance(a: &LiftedPair, b: &LiftedPair) -> Result<f64> {
    bl_distance(&a.lift(), &b.lift())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrands::CatalogIntegrand;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_measure(rng: &mut ChaCha8Rng, atoms: usize, dim: usize, positive: bool) -> PointCloudMeasure {
        PointCloudMeasure::new(
            Metric::Linf,
            (0..atoms).map(|_| {
                let p = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let w = if positive {
                    rng.gen_range(0.0..1.0)
                } else {
                    rng.gen_range(-1.0..1.0)
                };
                (p, w)
            }),
        )
        .unwrap()
    }

    #[test]
    fn positive_measure_norm_is_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let atoms = rng.gen_range(1..=50);
            let mu = random_measure(&mut rng, atoms, 2, true);
            let v = bl_norm(&mu).unwrap();
            assert!((v - mu.mass()).abs() <= 1e-8, "{v} vs {}", mu.mass());
        }
    }

    #[test]
    fn dipole_closed_form() {
        for d in [0.01, 0.3, 1.0, 2.0, 5.0, 40.0] {
            let mu =
                PointCloudMeasure::new(Metric::Euclidean, [(vec![0.0, 0.0], 1.0), (vec![d, 0.0], -1.0)]).unwrap();
            // max over s + L ≤ 1 of min(2s, L d)
            let oracle = 2.0 * d / (2.0 + d);
            assert!((bl_norm(&mu).unwrap() - oracle).abs() < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn zero_and_empty() {
        let mu = PointCloudMeasure::new(Metric::Linf, [(vec![1.0], 0.0)]).unwrap();
        assert_eq!(bl_norm(&mu).unwrap(), 0.0);
        assert!(bl_norm(&PointCloudMeasure::zero(Metric::Linf)).is_err());
        let nu = random_measure(&mut ChaCha8Rng::seed_from_u64(1), 7, 2, false);
        assert!(bl_distance(&nu, &nu).unwrap().abs() < 1e-15);
    }

    #[test]
    fn duplicates_merge() {
        let mu = PointCloudMeasure::new(Metric::Linf, [(vec![1.0, -0.0], 0.5), (vec![1.0, 0.0], 0.25)]).unwrap();
        assert_eq!(mu.len(), 1);
        assert_eq!(mu.weights(), &[0.75]);
    }

    #[test]
    fn metric_mismatch_is_input_error() {
        let a = PointCloudMeasure::new(Metric::Linf, [(vec![0.0], 1.0)]).unwrap();
        let b = a.clone().with_metric(Metric::Euclidean);
        assert!(bl_distance(&a, &b).is_err());
    }

    #[test]
    fn triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let m = random_measure(&mut rng, 6, 2, false);
            let n = random_measure(&mut rng, 6, 2, false);
            let r = random_measure(&mut rng, 6, 2, false);
            let lhs = bl_distance(&m, &r).unwrap();
            let rhs = bl_distance(&m, &n).unwrap() + bl_distance(&n, &r).unwrap();
            assert!(lhs <= rhs + 1e-9);
        }
    }

    #[test]
    fn homogeneity_and_total_variation_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let mu = random_measure(&mut rng, 12, 2, false);
            let v = bl_norm(&mu).unwrap();
            assert!(v <= mu.total_variation() + 1e-12);
            for c in [-2.5, 0.1, 3.0] {
                assert!((bl_norm(&mu.scaled(c)).unwrap() - c.abs() * v).abs() < 1e-9 * (1.0 + v));
            }
        }
    }

    /// Discretized tent bump of side t centred at x0, total mass 1.
    fn mollified_dirac(x0: &[f64], t: f64, per_axis: usize) -> PointCloudMeasure {
        let h = t / per_axis as f64;
        let profile: Vec<f64> = (0..per_axis)
            .map(|k| {
                let u = -0.5 + (k as f64 + 0.5) / per_axis as f64;
                1.0 - 2.0 * u.abs()
            })
            .collect();
        let total: f64 = profile.iter().sum::<f64>().powi(2);
        let mut atoms = Vec::new();
        for (a, pa) in profile.iter().enumerate() {
            for (b, pb) in profile.iter().enumerate() {
                let p = vec![
                    x0[0] - t / 2.0 + (a as f64 + 0.5) * h,
                    x0[1] - t / 2.0 + (b as f64 + 0.5) * h,
                ];
                atoms.push((p, pa * pb / total));
            }
        }
        PointCloudMeasure::new(Metric::Linf, atoms).unwrap()
    }

    #[test]
    fn mollified_dirac_is_close() {
        let x0 = [0.3, -0.2];
        let delta = PointCloudMeasure::new(Metric::Linf, [(x0.to_vec(), 1.0)]).unwrap();
        for t in [0.4, 0.1, 0.02] {
            let d = bl_distance(&mollified_dirac(&x0, t, 8), &delta).unwrap();
            assert!(d <= t, "t = {t}: {d}");
        }
    }

    #[test]
    fn mollification_distance_decreases() {
        let centres = [[0.0, 0.0], [0.7, 0.1], [-0.4, 0.8]];
        let weights = [0.5, -1.0, 0.8];
        let mu = PointCloudMeasure::new(
            Metric::Linf,
            centres.iter().zip(weights).map(|(c, w)| (c.to_vec(), w)),
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for t in [0.4, 0.2, 0.1, 0.05, 0.025] {
            let mut mt = PointCloudMeasure::zero(Metric::Linf);
            for (c, w) in centres.iter().zip(weights) {
                mt = mt.combine(w, &mollified_dirac(c, t, 6)).unwrap();
            }
            let d = bl_distance(&mt, &mu).unwrap();
            assert!(d <= last + 1e-9, "t = {t}: {d} > {last}");
            last = d;
        }
        assert!(last < 0.05);
    }

    #[test]
    fn larger_support_settles() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mu = random_measure(&mut rng, 500, 3, false);
        let r = bl_norm_report(&mu).unwrap();
        assert!(r.value > 0.0 && r.value <= mu.total_variation());
        assert!(r.dual_residual <= 1e-9);
    }

    #[test]
    fn lift_examples() {
        let e = PointCloudMeasure::zero(Metric::Euclidean);
        let p = LiftedPair::new(PointCloudMeasure::new(Metric::Euclidean, [(vec![0.0, 0.0], 1.0)]).unwrap(), e.clone())
            .unwrap();
        assert_eq!(p.lift().atoms().collect::<Vec<_>>(), vec![(&[0.0, 0.0][..], 1.0)]);

        let z = vec![0.6, 0.8];
        let p = LiftedPair::new(PointCloudMeasure::new(Metric::Euclidean, [(z.clone(), 1.0)]).unwrap(), e).unwrap();
        let l = p.lift();
        let (pt, w) = l.atoms().next().unwrap();
        assert!((pt[0] - 0.3).abs() < 1e-15 && (pt[1] - 0.4).abs() < 1e-15);
        assert_eq!(w, 2.0);

        let area = CatalogIntegrand::Area { dim: 2 };
        assert!((p.lifted_pair(&area).unwrap() - area.eval(&z)).abs() < 1e-12);
    }

    #[test]
    fn lifted_pairing_reproduces_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let catalog = [
            CatalogIntegrand::Norm { dim: 2 },
            CatalogIntegrand::Area { dim: 2 },
            CatalogIntegrand::Linear { a: vec![0.3, -1.0] },
            CatalogIntegrand::TwoWell { a: vec![1.0, 1.0], eps: 0.2 },
            CatalogIntegrand::AbsDiff { dim: 2 },
        ];
        for _ in 0..20 {
            let mu0 = PointCloudMeasure::new(
                Metric::Euclidean,
                (0..5).map(|_| (vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)], rng.gen_range(-1.0..1.0))),
            )
            .unwrap();
            let mu_inf = PointCloudMeasure::new(
                Metric::Euclidean,
                (0..3).map(|_| {
                    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    (vec![a.cos(), a.sin()], rng.gen_range(-1.0..1.0))
                }),
            )
            .unwrap();
            let p = LiftedPair::new(mu0, mu_inf).unwrap();
            for f in &catalog {
                let a = p.pair(f).unwrap();
                let b = p.lifted_pair(f).unwrap();
                assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{}: {a} vs {b}", f.name());
            }
        }
    }

    #[test]
    fn off_sphere_recession_atom_rejected() {
        let bad = PointCloudMeasure::new(Metric::Euclidean, [(vec![0.5, 0.0], 1.0)]).unwrap();
        assert!(LiftedPair::new(PointCloudMeasure::zero(Metric::Euclidean), bad).is_err());
    }

    #[test]
    fn hstar_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let zero = LiftedPair::new(PointCloudMeasure::zero(Metric::Euclidean), PointCloudMeasure::zero(Metric::Euclidean))
            .unwrap();
        for _ in 0..20 {
            let mu0 = PointCloudMeasure::new(
                Metric::Euclidean,
                (0..4).map(|_| (vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)], rng.gen_range(0.0..1.0))),
            )
            .unwrap();
            let mu_inf =
                PointCloudMeasure::new(Metric::Euclidean, [(vec![0.0, 1.0], rng.gen_range(0.0..1.0))]).unwrap();
            let closed: f64 = mu0.atoms().map(|(z, w)| w * (1.0 + norm(z))).sum::<f64>() + mu_inf.mass();
            let p = LiftedPair::new(mu0, mu_inf).unwrap();
            let d = hstar_distance(&p, &zero).unwrap();
            assert!(d <= closed + 1e-9 && d >= 0.5 * closed - 1e-9);
            assert!((d - closed).abs() < 1e-8);
            assert!(hstar_distance(&p, &p).unwrap().abs() < 1e-15);
        }
        let base = PointCloudMeasure::new(Metric::Euclidean, [(vec![0.0, 0.0], 1.0)]).unwrap();
        let a = LiftedPair::new(base.clone(), PointCloudMeasure::new(Metric::Euclidean, [(vec![1.0, 0.0], 0.3)]).unwrap())
            .unwrap();
        let b = LiftedPair::new(base, PointCloudMeasure::zero(Metric::Euclidean)).unwrap();
        let d = hstar_distance(&a, &b).unwrap();
        assert!((d - 0.3).abs() < 1e-12, "{d}");
    }
}
