//! Dense simplex for small instances of
//! maximize c·x subject to Ax ≤ b, x ≥ 0, with b ≥ 0.
//!
//! Vertices are held as n active constraints (rows of A or bounds x_j ≥ 0)
//! with a dense inverse of the active matrix, updated by rank-one
//! corrections and refactorized periodically. The origin is feasible, so no
//! phase one is needed. Pricing is Dantzig's rule, switching to Bland's rule
//! after a run of degenerate pivots.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
/// Feasibility allowance of the Harris ratio test.
const FEAS_TOL: f64 = 1e-11;
const PRICE_TOL: f64 = 1e-12;
const DEGENERATE_RUN: usize = 50;
const REFACTOR_EVERY: usize = 16;
/// Scaled tolerance for the primal, dual and gap residual checks.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Dual multipliers, one per constraint.
    pub y: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

type SparseRow = Vec<(usize, f64)>;

/// Constraint `id < m` is row `id` of A; `m + j` is the bound −x_j ≤ 0.
struct Problem<'a> {
    rows: Vec<SparseRow>,
    b: &'a [f64],
    m: usize,
    n: usize,
}

impl Problem<'_> {
    fn dot(&self, id: usize, v: &[f64]) -> f64 {
        if id < self.m {
            self.rows[id].iter().map(|&(j, a)| a * v[j]).sum()
        } else {
            -v[id - self.m]
        }
    }

    fn row_norm(&self, id: usize) -> f64 {
        if id < self.m {
            self.rows[id].iter().fold(0.0_f64, |a, &(_, v)| a.max(v.abs()))
        } else {
            1.0
        }
    }

    fn rhs(&self, id: usize) -> f64 {
        if id < self.m {
            self.b[id]
        } else {
            0.0
        }
    }

    fn dense(&self, id: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        if id < self.m {
            for &(j, a) in &self.rows[id] {
                out[j] = a;
            }
        } else {
            out[id - self.m] = -1.0;
        }
        out
    }
}

struct Vertex {
    active: Vec<usize>,
    /// Row-major inverse of the active matrix (rows = active normals).
    inv: Vec<f64>,
    x: Vec<f64>,
}

impl Vertex {
    fn refactor(&mut self, prob: &Problem) -> bool {
        let n = prob.n;
        let mut m = DMatrix::zeros(n, n);
        for (r, &id) in self.active.iter().enumerate() {
            for (j, v) in prob.dense(id).into_iter().enumerate() {
                m[(r, j)] = v;
            }
        }
        let Some(inv) = m.try_inverse() else { return false };
        for i in 0..n {
            for j in 0..n {
                self.inv[i * n + j] = inv[(i, j)];
            }
        }
        let rhs: Vec<f64> = self.active.iter().map(|&id| prob.rhs(id)).collect();
        for i in 0..n {
            self.x[i] = (0..n).map(|j| self.inv[i * n + j] * rhs[j]).sum();
        }
        true
    }

    /// λ with Mᵀλ = c.
    fn multipliers(&self, c: &[f64]) -> Vec<f64> {
        let n = c.len();
        let mut lambda = vec![0.0; n];
        for (i, &ci) in c.iter().enumerate() {
            if ci != 0.0 {
                let row = &self.inv[i * n..(i + 1) * n];
                for (l, &v) in lambda.iter_mut().zip(row) {
                    *l += ci * v;
                }
            }
        }
        lambda
    }

    fn column(&self, p: usize) -> Vec<f64> {
        let n = self.x.len();
        (0..n).map(|i| self.inv[i * n + p]).collect()
    }

    /// Replace active row `p` by constraint `id` (Sherman–Morrison).
    fn replace(&mut self, prob: &Problem, p: usize, id: usize) {
        let n = prob.n;
        let old = prob.dense(self.active[p]);
        let new = prob.dense(id);
        let u: Vec<f64> = new.iter().zip(&old).map(|(a, b)| a - b).collect();
        let col = self.column(p);
        // w = uᵀ M⁻¹
        let mut w = vec![0.0; n];
        for (i, &ui) in u.iter().enumerate() {
            if ui != 0.0 {
                let row = &self.inv[i * n..(i + 1) * n];
                for (wj, &v) in w.iter_mut().zip(row) {
                    *wj += ui * v;
                }
            }
        }
        let denom = 1.0 + w[p];
        for i in 0..n {
            let f = col[i] / denom;
            if f != 0.0 {
                for j in 0..n {
                    self.inv[i * n + j] -= f * w[j];
                }
            }
        }
        self.active[p] = id;
    }
}

impl LinearProgram {
    fn dump(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Lp {
            reason: reason.into(),
            dump: self.dump(),
        }
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let m = self.a.len();
        let n = self.c.len();
        if n == 0 || self.b.len() != m || self.a.iter().any(|r| r.len() != n) {
            return Err(self.fail("inconsistent dimensions"));
        }
        if self.b.iter().any(|&v| !(v >= 0.0)) {
            return Err(self.fail("right-hand side must be nonnegative"));
        }
        let prob = Problem {
            rows: self
                .a
                .iter()
                .map(|r| r.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect())
                .collect(),
            b: &self.b,
            m,
            n,
        };
        let mut is_active = vec![false; m + n];
        let mut vx = Vertex {
            active: (m..m + n).collect(),
            inv: vec![0.0; n * n],
            x: vec![0.0; n],
        };
        for j in 0..n {
            vx.inv[j * n + j] = -1.0;
            is_active[m + j] = true;
        }
        let max_pivots = 50 * (m + n) + 1000;
        let mut pivots = 0;
        let mut degenerate = 0;
        let scale_c = self.c.iter().fold(1.0_f64, |a, &v| a.max(v.abs()));
        // last vertex whose active matrix factorized cleanly
        let mut checkpoint = vx.active.clone();
        let mut careful = false;
        let mut banned: Option<usize> = None;
        loop {
            let lambda = vx.multipliers(&self.c);
            let bland = careful || degenerate >= DEGENERATE_RUN;
            let candidates = (0..n).filter(|&p| lambda[p] < -PRICE_TOL * scale_c);
            let leave = if bland {
                candidates.min_by_key(|&p| vx.active[p])
            } else {
                candidates.min_by(|&p, &q| lambda[p].total_cmp(&lambda[q]))
            };
            let Some(p) = leave else { break };
            let d: Vec<f64> = vx.column(p).iter().map(|v| -v).collect();
            let d_norm = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));

            // Harris two-pass ratio test: bound the step with a feasibility
            // allowance, then take the largest pivot below that bound.
            let mut blocking = Vec::new();
            let mut bound = f64::INFINITY;
            for id in 0..m + n {
                if is_active[id] || banned == Some(id) {
                    continue;
                }
                let ad = prob.dot(id, &d);
                if ad <= PIVOT_TOL * d_norm * prob.row_norm(id) {
                    continue;
                }
                let slack = (prob.rhs(id) - prob.dot(id, &vx.x)).max(0.0);
                bound = bound.min((slack + FEAS_TOL * (1.0 + prob.rhs(id).abs())) / ad);
                blocking.push((id, slack / ad, ad));
            }
            banned = None;
            let chosen = blocking
                .iter()
                .filter(|&&(_, t, _)| t <= bound)
                .fold(None::<(usize, f64, f64)>, |best, &(id, t, ad)| match best {
                    None => Some((id, t, ad)),
                    Some(b) => {
                        let better = if bland { id < b.0 } else { ad > b.2 };
                        if better {
                            Some((id, t, ad))
                        } else {
                            Some(b)
                        }
                    }
                });
            let Some((enter, t, _)) = chosen else {
                return Err(self.fail("objective unbounded"));
            };
            if t <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            let previous = vx.active.clone();
            is_active[vx.active[p]] = false;
            is_active[enter] = true;
            vx.replace(&prob, p, enter);
            pivots += 1;
            if careful || pivots % REFACTOR_EVERY == 0 {
                if vx.refactor(&prob) {
                    checkpoint = vx.active.clone();
                } else {
                    // roll back; in careful mode the culprit is this pivot
                    let restore = if careful { previous } else { checkpoint.clone() };
                    if careful {
                        banned = Some(enter);
                    }
                    careful = true;
                    for (flag, id) in is_active.iter_mut().zip(0..) {
                        *flag = restore.contains(&id);
                    }
                    vx.active = restore;
                    if !vx.refactor(&prob) {
                        return Err(self.fail("active matrix became singular"));
                    }
                    checkpoint = vx.active.clone();
                }
            } else {
                for (xi, di) in vx.x.iter_mut().zip(&d) {
                    *xi += t * di;
                }
            }
            if pivots > max_pivots {
                return Err(self.fail(format!("pivot limit {max_pivots} reached")));
            }
        }
        if !vx.refactor(&prob) {
            return Err(self.fail("active matrix became singular"));
        }
        let lambda = vx.multipliers(&self.c);

        let x: Vec<f64> = vx.x.iter().map(|v| v.max(0.0)).collect();
        let mut y = vec![0.0; m];
        for (p, &id) in vx.active.iter().enumerate() {
            if id < m {
                y[id] = lambda[p].max(0.0);
            }
        }
        let value: f64 = self.c.iter().zip(&x).map(|(c, x)| c * x).sum();

        let scale_b = self.b.iter().fold(1.0_f64, |a, &v| a.max(v.abs()));
        let primal_residual = (0..m)
            .map(|i| prob.dot(i, &x) - self.b[i])
            .fold(0.0_f64, f64::max)
            / scale_b;
        let mut aty = vec![0.0; n];
        for (row, &yi) in prob.rows.iter().zip(&y) {
            for &(j, a) in row {
                aty[j] += a * yi;
            }
        }
        let dual_residual = self
            .c
            .iter()
            .zip(&aty)
            .map(|(c, s)| c - s)
            .fold(0.0_f64, f64::max)
            / scale_c;
        let dual_value: f64 = self.b.iter().zip(&y).map(|(b, y)| b * y).sum();
        let gap = (dual_value - value).abs() / (scale_b * scale_c);
        if primal_residual > RESIDUAL_TOL || dual_residual > RESIDUAL_TOL || gap > RESIDUAL_TOL {
            return Err(self.fail(format!(
                "residual check failed: primal {primal_residual:e}, dual {dual_residual:e}, gap {gap:e}"
            )));
        }
        Ok(LpSolution {
            x,
            y,
            value,
            pivots,
            primal_residual,
            dual_residual,
            gap,
        })
    }
}
