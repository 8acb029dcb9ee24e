//! Small dense helpers shared across modules.

use nalgebra::DMatrix;

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0).then(|| scale(v, 1.0 / n))
}

pub fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Singular value decomposition with a full right basis.
///
/// The matrix is padded with zero rows up to a square shape so that the
/// thin decomposition still yields `cols` right singular vectors; the extra
/// singular values are zero. Values come back sorted nonincreasing.
pub struct FullSvd {
    pub singular_values: Vec<f64>,
    /// Right singular vectors, one per singular value, as rows.
    pub right: Vec<Vec<f64>>,
}

pub fn full_svd(m: &DMatrix<f64>) -> FullSvd {
    let (rows, cols) = m.shape();
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let right = order
        .iter()
        .map(|&i| v_t.row(i).iter().copied().collect())
        .collect();
    FullSvd {
        singular_values,
        right,
    }
}

/// Numerical rank with the relative threshold `rel · σ_max`.
pub fn rank_of(singular_values: &[f64], rel: f64) -> usize {
    let smax = singular_values.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > rel * smax).count()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0_f64, |a, &b| a.max(b))
}

/// Rank of a list of vectors stacked as rows.
pub fn rank_of_rows(rows: &[Vec<f64>], dim: usize, rel: f64) -> usize {
    if rows.is_empty() {
        return 0;
    }
    // Gram matrix keeps the decomposition dim × dim regardless of sample count.
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    for r in rows {
        for i in 0..dim {
            for j in 0..dim {
                gram[(i, j)] += r[i] * r[j];
            }
        }
    }
    let sv = full_svd(&gram).singular_values;
    // Gram squares the singular values.
    rank_of(&sv, rel * rel)
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}
