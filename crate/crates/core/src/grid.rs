//! Periodic fields sampled at cell centres of the unit cube (n ≤ 2) and
//! their spectral calculus.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{input, Result};
use crate::symbols::{OperatorSpec, SymbolMatrix};

/// Values of a V-valued (or U-valued) field at the N^n cell centres.
///
/// Cell (i₀, i₁) has flat index i₀ + N·i₁ and centre ((i₀+½)/N, (i₁+½)/N).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    n: usize,
    grid: usize,
    dim: usize,
    values: Vec<f64>,
}

/// Per-component Fourier coefficients in FFT order.
pub type Spectrum = Vec<Vec<Complex64>>;

fn check_shape(n: usize, grid: usize, dim: usize) -> Result<()> {
    if !(1..=2).contains(&n) {
        return input(format!("grid fields live in dimension 1 or 2, not {n}"));
    }
    if grid < 2 || grid % 2 != 0 {
        return input(format!("grid size must be even and ≥ 2, got {grid}"));
    }
    if dim == 0 {
        return input("field dimension must be positive");
    }
    Ok(())
}

impl GridField {
    pub fn zeros(n: usize, grid: usize, dim: usize) -> Result<Self> {
        check_shape(n, grid, dim)?;
        Ok(Self {
            n,
            grid,
            dim,
            values: vec![0.0; grid.pow(n as u32) * dim],
        })
    }

    pub fn from_values(n: usize, grid: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(n, grid, dim)?;
        if values.len() != grid.pow(n as u32) * dim {
            return input(format!(
                "expected {} values for a {grid}^{n} grid of {dim}-vectors, got {}",
                grid.pow(n as u32) * dim,
                values.len()
            ));
        }
        Ok(Self { n, grid, dim, values })
    }

    pub fn from_fn(n: usize, grid: usize, dim: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut out = Self::zeros(n, grid, dim)?;
        for c in 0..out.cells() {
            let v = f(&out.center(c));
            if v.len() != dim {
                return input("field function returned a vector of the wrong length");
            }
            out.value_mut(c).copy_from_slice(&v);
        }
        Ok(out)
    }

    pub fn constant(n: usize, grid: usize, z: &[f64]) -> Result<Self> {
        Self::from_fn(n, grid, z.len(), |_| z.to_vec())
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
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn cells(&self) -> usize {
        self.grid.pow(self.n as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    pub fn multi_index(&self, c: usize) -> Vec<usize> {
        (0..self.n).map(|k| (c / self.grid.pow(k as u32)) % self.grid).collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .enumerate()
            .map(|(k, &i)| (i % self.grid) * self.grid.pow(k as u32))
            .sum()
    }

    pub fn center(&self, c: usize) -> Vec<f64> {
        self.multi_index(c)
            .into_iter()
            .map(|i| (i as f64 + 0.5) / self.grid as f64)
            .collect()
    }

    /// Cell containing x (coordinates wrapped into [0,1)).
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = x
            .iter()
            .map(|&t| {
                let w = t.rem_euclid(1.0);
                ((w * self.grid as f64) as usize).min(self.grid - 1)
            })
            .collect();
        self.flat_index(&idx)
    }

    pub fn value(&self, c: usize) -> &[f64] {
        &self.values[c * self.dim..(c + 1) * self.dim]
    }

    pub fn value_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.dim..(c + 1) * self.dim]
    }

    /// Signed frequency of an FFT index, in [−N/2, N/2).
    pub fn frequency(&self, c: usize) -> Vec<i64> {
        self.multi_index(c)
            .into_iter()
            .map(|k| signed_frequency(k, self.grid))
            .collect()
    }

    pub fn is_nyquist(&self, c: usize) -> bool {
        self.multi_index(c).iter().any(|&k| k == self.grid / 2)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n == other.n && self.grid == other.grid && self.dim == other.dim
    }

    fn require_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            input("fields differ in grid, space dimension or value dimension")
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for c in 0..self.cells() {
            for (a, &v) in m.iter_mut().zip(self.value(c)) {
                *a += v;
            }
        }
        m.iter().map(|v| v / self.cells() as f64).collect()
    }

    /// Grid average of f applied to each cell value.
    pub fn average(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.cells()).map(|c| f(self.value(c))).sum::<f64>() / self.cells() as f64
    }

    /// ∫|v| dx with the Euclidean norm on values.
    pub fn l1_norm(&self) -> f64 {
        self.average(crate::linalg::norm)
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.cells())
            .map(|c| crate::linalg::norm(self.value(c)))
            .fold(0.0, f64::max)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    /// self + s·other
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        self.require_same_shape(other)?;
        let mut out = self.clone();
        for (a, &b) in out.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn shifted(&self, z: &[f64]) -> Result<Self> {
        if z.len() != self.dim {
            return input("shift vector has the wrong dimension");
        }
        let mut out = self.clone();
        for c in 0..out.cells() {
            for (a, &b) in out.value_mut(c).iter_mut().zip(z) {
                *a += b;
            }
        }
        Ok(out)
    }

    pub fn spectrum(&self) -> Spectrum {
        (0..self.dim)
            .map(|k| {
                let mut data: Vec<Complex64> = (0..self.cells())
                    .map(|c| Complex64::new(self.values[c * self.dim + k], 0.0))
                    .collect();
                fft_nd(&mut data, self.n, self.grid, false);
                data
            })
            .collect()
    }

    /// Real part of the inverse transform.
    pub fn from_spectrum(n: usize, grid: usize, spec: Spectrum) -> Result<Self> {
        let dim = spec.len();
        let mut out = Self::zeros(n, grid, dim)?;
        for (k, mut data) in spec.into_iter().enumerate() {
            fft_nd(&mut data, n, grid, true);
            for (c, v) in data.iter().enumerate() {
                out.values[c * dim + k] = v.re;
            }
        }
        Ok(out)
    }

    /// Band-limited trigonometric interpolant resampled at the cell centres
    /// of an M-grid. Modes with |m| ≥ M/2 are dropped.
    pub fn resample(&self, m: usize) -> Result<Self> {
        check_shape(self.n, m, self.dim)?;
        let spec = self.spectrum();
        let probe = Self::zeros(self.n, m, 1)?;
        let big = self.grid as f64;
        let mut out_spec: Spectrum = vec![vec![Complex64::new(0.0, 0.0); probe.cells()]; self.dim];
        for c in 0..self.cells() {
            let freq = self.frequency(c);
            if freq.iter().any(|&f| 2 * f.unsigned_abs() as usize >= m) {
                continue;
            }
            let idx: Vec<usize> = freq.iter().map(|&f| f.rem_euclid(m as i64) as usize).collect();
            let target = probe.flat_index(&idx);
            // continuous coefficient e^{−πi m/N}/N, evaluated at (k+½)/M
            let phase: f64 = freq.iter().map(|&f| PI * f as f64 * (1.0 / m as f64 - 1.0 / big)).sum();
            let factor = Complex64::from_polar((m as f64 / big).powi(self.n as i32), phase);
            for k in 0..self.dim {
                out_spec[k][target] = spec[k][c] * factor;
            }
        }
        Self::from_spectrum(self.n, m, out_spec)
    }
}

pub fn signed_frequency(k: usize, grid: usize) -> i64 {
    if k < grid / 2 {
        k as i64
    } else {
        k as i64 - grid as i64
    }
}

fn fft_nd(data: &mut [Complex64], n: usize, grid: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(grid)
    } else {
        planner.plan_fft_forward(grid)
    };
    // axis 0 is contiguous
    for row in data.chunks_mut(grid) {
        fft.process(row);
    }
    if n == 2 {
        let mut col = vec![Complex64::new(0.0, 0.0); grid];
        for i0 in 0..grid {
            for i1 in 0..grid {
                col[i1] = data[i0 + grid * i1];
            }
            fft.process(&mut col);
            for i1 in 0..grid {
                data[i0 + grid * i1] = col[i1];
            }
        }
    }
    if inverse {
        let s = 1.0 / (grid.pow(n as u32) as f64);
        data.iter_mut().for_each(|v| *v *= s);
    }
}

fn i_pow(l: u32) -> Complex64 {
    match l % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

fn mul_matrix(m: &DMatrix<f64>, scale: Complex64, input: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows())
        .map(|r| {
            let s: Complex64 = (0..m.ncols()).map(|c| input[c] * m[(r, c)]).sum();
            s * scale
        })
        .collect()
}

fn check_operator(op: &OperatorSpec, field: &GridField, on_domain: bool) -> Result<()> {
    if op.space_dim() != field.space_dim() {
        return input(format!(
            "operator acts on R^{}, field lives on a {}-dimensional grid",
            op.space_dim(),
            field.space_dim()
        ));
    }
    let want = if on_domain { op.dim_domain() } else { op.dim_codomain() };
    if field.dim() != want {
        return input(format!("operator expects {want}-vectors, field carries {}", field.dim()));
    }
    Ok(())
}

/// Spectral derivative: mode m ↦ (2πi)^l P(m) û(m), real part kept.
pub fn apply_operator(op: &OperatorSpec, u: &GridField) -> Result<GridField> {
    check_operator(op, u, true)?;
    let spec = u.spectrum();
    let scale = i_pow(op.order()) * (2.0 * PI).powi(op.order() as i32);
    let mut out: Spectrum = vec![vec![Complex64::new(0.0, 0.0); u.cells()]; op.dim_codomain()];
    for c in 0..u.cells() {
        let m: Vec<f64> = u.frequency(c).iter().map(|&f| f as f64).collect();
        let sym = op.symbol_matrix(&m);
        let col: Vec<Complex64> = spec.iter().map(|s| s[c]).collect();
        for (k, v) in mul_matrix(&sym, scale, &col).into_iter().enumerate() {
            out[k][c] = v;
        }
    }
    GridField::from_spectrum(u.space_dim(), u.grid(), out)
}

/// Adjoint of `apply_operator` for the Euclidean inner product on values.
pub fn apply_operator_adjoint(op: &OperatorSpec, v: &GridField) -> Result<GridField> {
    check_operator(op, v, false)?;
    let spec = v.spectrum();
    let scale = (i_pow(op.order()) * (2.0 * PI).powi(op.order() as i32)).conj();
    let mut out: Spectrum = vec![vec![Complex64::new(0.0, 0.0); v.cells()]; op.dim_domain()];
    for c in 0..v.cells() {
        let m: Vec<f64> = v.frequency(c).iter().map(|&f| f as f64).collect();
        let sym = op.symbol_matrix(&m).transpose();
        let col: Vec<Complex64> = spec.iter().map(|s| s[c]).collect();
        for (k, x) in mul_matrix(&sym, scale, &col).into_iter().enumerate() {
            out[k][c] = x;
        }
    }
    GridField::from_spectrum(v.space_dim(), v.grid(), out)
}

/// Minimal-norm potential: û(m) = ((2πi)^l B(m))⁺ v̂(m) on non-Nyquist modes.
pub fn potential_of(op_b: &OperatorSpec, v: &GridField) -> Result<GridField> {
    check_operator(op_b, v, false)?;
    let spec = v.spectrum();
    let scale = i_pow(op_b.order()) * (2.0 * PI).powi(op_b.order() as i32);
    let mut out: Spectrum = vec![vec![Complex64::new(0.0, 0.0); v.cells()]; op_b.dim_domain()];
    for c in 0..v.cells() {
        if v.is_nyquist(c) {
            continue;
        }
        let m: Vec<f64> = v.frequency(c).iter().map(|&f| f as f64).collect();
        if m.iter().all(|&x| x == 0.0) {
            continue;
        }
        let sym = op_b.symbol_matrix(&m);
        let Ok(pinv) = sym.clone().pseudo_inverse(1e-10 * sym.norm().max(1e-300)) else {
            continue;
        };
        let col: Vec<Complex64> = spec.iter().map(|s| s[c]).collect();
        for (k, x) in mul_matrix(&pinv, scale.inv(), &col).into_iter().enumerate() {
            out[k][c] = x;
        }
    }
    GridField::from_spectrum(v.space_dim(), v.grid(), out)
}

/// Orthogonal projector onto ker A(m) for every non-Nyquist mode, with
/// zero mean and zero Nyquist modes.
pub struct AFreeProjector {
    projectors: Vec<Option<DMatrix<f64>>>,
    n: usize,
    grid: usize,
    dim: usize,
}

impl AFreeProjector {
    pub fn new(op: &OperatorSpec, n: usize, grid: usize) -> Result<Self> {
        let probe = GridField::zeros(n, grid, op.dim_domain())?;
        check_operator(op, &probe, true)?;
        let mut rank: Option<(Vec<f64>, usize)> = None;
        let mut projectors = Vec::with_capacity(probe.cells());
        for c in 0..probe.cells() {
            let m: Vec<f64> = probe.frequency(c).iter().map(|&f| f as f64).collect();
            if probe.is_nyquist(c) || m.iter().all(|&x| x == 0.0) {
                projectors.push(None);
                continue;
            }
            let s = SymbolMatrix::from_matrix(m.clone(), op.symbol_matrix(&m));
            match &rank {
                None => rank = Some((m.clone(), s.rank)),
                Some((first, r)) if *r != s.rank => {
                    return Err(crate::Error::NonConstantRank {
                        xi_a: first.clone(),
                        rank_a: *r,
                        xi_b: m,
                        rank_b: s.rank,
                    })
                }
                _ => {}
            }
            projectors.push(Some(s.kernel_projector()));
        }
        Ok(Self {
            projectors,
            n,
            grid,
            dim: op.dim_domain(),
        })
    }

    pub fn apply(&self, v: &GridField) -> Result<GridField> {
        if v.space_dim() != self.n || v.grid() != self.grid || v.dim() != self.dim {
            return input("field does not match the projector's grid");
        }
        let spec = v.spectrum();
        let mut out: Spectrum = vec![vec![Complex64::new(0.0, 0.0); v.cells()]; self.dim];
        for (c, p) in self.projectors.iter().enumerate() {
            if let Some(p) = p {
                let col: Vec<Complex64> = spec.iter().map(|s| s[c]).collect();
                for (k, x) in mul_matrix(p, Complex64::new(1.0, 0.0), &col).into_iter().enumerate() {
                    out[k][c] = x;
                }
            }
        }
        GridField::from_spectrum(self.n, self.grid, out)
    }
}

/// Project onto zero-mean discretely A-free fields.
pub fn project_a_free(op: &OperatorSpec, v: &GridField) -> Result<GridField> {
    AFreeProjector::new(op, v.space_dim(), v.grid())?.apply(v)
}

/// max over nonzero non-Nyquist modes of ‖A(m)v̂(m)‖ / (σ_max(A(m))·‖v̂(m)‖),
/// ignoring modes with negligible energy.
pub fn afree_mode_residual(op: &OperatorSpec, v: &GridField) -> Result<f64> {
    check_operator(op, v, true)?;
    let spec = v.spectrum();
    let total: f64 = (0..v.cells())
        .map(|c| spec.iter().map(|s| s[c].norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    let mut worst = 0.0_f64;
    for c in 0..v.cells() {
        let m: Vec<f64> = v.frequency(c).iter().map(|&f| f as f64).collect();
        if v.is_nyquist(c) || m.iter().all(|&x| x == 0.0) {
            continue;
        }
        let col: Vec<Complex64> = spec.iter().map(|s| s[c]).collect();
        let vn = col.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if vn <= 1e-13 * total.max(1e-300) {
            continue;
        }
        let sym = op.symbol_matrix(&m);
        let sigma = crate::linalg::spectral_norm(&sym);
        let av = mul_matrix(&sym, Complex64::new(1.0, 0.0), &col);
        let an = av.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(an / (sigma * vn));
    }
    Ok(worst)
}

/// L¹ norm of the full (order)-jet: all partial derivatives of that order,
/// Euclidean norm over components and multi-indices.
pub fn jet_l1_norm(u: &GridField, order: u32) -> Result<f64> {
    Ok(jet_field(u, order)?.l1_norm())
}

pub fn jet_sup_norm(u: &GridField, order: u32) -> Result<f64> {
    Ok(jet_field(u, order)?.sup_norm())
}

fn jet_field(u: &GridField, order: u32) -> Result<GridField> {
    if order == 0 {
        return Ok(u.clone());
    }
    let n = u.space_dim();
    let mut alphas: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..n {
        alphas = alphas
            .into_iter()
            .flat_map(|a| (0..=order).map(move |k| [a.clone(), vec![k]].concat()))
            .collect();
    }
    alphas.retain(|a| a.iter().sum::<u32>() == order);
    let spec = u.spectrum();
    let scale = i_pow(order) * (2.0 * PI).powi(order as i32);
    let mut out: Spectrum = Vec::new();
    for a in &alphas {
        for s in &spec {
            out.push(
                (0..u.cells())
                    .map(|c| {
                        let m = u.frequency(c);
                        let mono: f64 = m.iter().zip(a).map(|(&f, &k)| (f as f64).powi(k as i32)).product();
                        s[c] * scale * mono
                    })
                    .collect(),
            );
        }
    }
    GridField::from_spectrum(n, u.grid(), out)
}
