//! Deterministic point sets on the unit sphere S^{n-1}.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::linalg::normalized;

/// Sphere-sampling configuration.
///
/// The base set is `count` deterministic points: coordinate axes and
/// pairwise diagonals first, then a generalized Fibonacci sequence. `random`
/// extra seeded uniform points are appended.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphereSampler {
    pub count: usize,
    #[serde(default)]
    pub random: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SphereSampler {
    fn default() -> Self {
        Self {
            count: 1000,
            random: 0,
            seed: 0,
        }
    }
}

impl SphereSampler {
    pub fn new(count: usize) -> Self {
        Self {
            count,
            ..Self::default()
        }
    }

    pub fn with_random(mut self, random: usize, seed: u64) -> Self {
        self.random = random;
        self.seed = seed;
        self
    }

    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        let mut pts = anchors(n);
        pts.truncate(self.count.max(1));
        let fill = self.count.saturating_sub(pts.len());
        pts.extend(fibonacci(n, fill));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.random {
            pts.push(random_unit(n, &mut rng));
        }
        pts
    }
}

fn anchors(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        out.push(e);
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; n];
                e[i] = r;
                e[j] = s * r;
                out.push(e);
            }
        }
    }
    out
}

/// Generalized Fibonacci points: golden-angle circle for n = 2, the
/// Fibonacci lattice for n = 3, and a Kronecker (R_n) sequence pushed
/// through Box-Muller for higher n.
pub fn fibonacci(n: usize, count: usize) -> Vec<Vec<f64>> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    match n {
        0 => Vec::new(),
        1 => (0..count)
            .map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => (0..count)
            .map(|k| {
                let t = 2.0 * PI * frac((k as f64 + 0.5) / golden);
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => (0..count)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let t = 2.0 * PI * frac(k as f64 / golden);
                vec![r * t.cos(), r * t.sin(), z]
            })
            .collect(),
        _ => {
            let dims = if n % 2 == 0 { n } else { n + 1 };
            let alphas = kronecker_alphas(dims);
            (0..count)
                .map(|k| {
                    let u: Vec<f64> = alphas
                        .iter()
                        .map(|a| frac(0.5 + a * (k as f64 + 1.0)))
                        .collect();
                    let mut g = Vec::with_capacity(dims);
                    for pair in u.chunks(2) {
                        let (a, b) = box_muller(pair[0], pair[1]);
                        g.push(a);
                        g.push(b);
                    }
                    g.truncate(n);
                    normalized(&g).unwrap_or_else(|| {
                        let mut e = vec![0.0; n];
                        e[0] = 1.0;
                        e
                    })
                })
                .collect()
        }
    }
}

fn kronecker_alphas(d: usize) -> Vec<f64> {
    // Root of x^{d+1} = x + 1 (Roberts' generalized golden ratio).
    let mut phi = 2.0_f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
    }
    (1..=d).map(|i| frac(phi.powi(-(i as i32)))).collect()
}

fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let u1 = u1.clamp(1e-12, 1.0 - 1e-12);
    let r = (-2.0 * u1.ln()).sqrt();
    let t = 2.0 * PI * u2;
    (r * t.cos(), r * t.sin())
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

pub fn random_unit<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut g = Vec::with_capacity(n + 1);
        while g.len() < n {
            let (a, b) = box_muller(rng.gen(), rng.gen());
            g.push(a);
            g.push(b);
        }
        g.truncate(n);
        if let Some(u) = normalized(&g) {
            return u;
        }
    }
}

/// Uniform sample from the ball of the given radius.
pub fn random_in_ball<R: Rng>(n: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let dir = random_unit(n, rng);
    let r = radius * rng.gen::<f64>().powf(1.0 / n as f64);
    dir.into_iter().map(|x| x * r).collect()
}
