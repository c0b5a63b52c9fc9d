//! Singular values by one-sided (Hestenes) Jacobi rotations on columns.
//!
//! Embedding tables are tall and narrow (`|E_f| × d` with small `d`), so
//! orthogonalizing the `d` columns costs `O(|E_f| d²)` per sweep and keeps
//! full relative accuracy for small singular values.

use ndarray::{Array2, ArrayView2, Axis};

const MAX_SWEEPS: usize = 60;

/// Subtracts each column's mean.
pub fn center_columns(m: ArrayView2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    if let Some(mean) = m.mean_axis(Axis(0)) {
        out -= &mean;
    }
    out
}

/// All singular values of `m` in descending order, `min(rows, cols)` of them.
pub fn singular_values_of(m: ArrayView2<f64>) -> Vec<f64> {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    // Work on the side with fewer columns.
    let a = if cols <= rows { m } else { m.t() };
    let n = a.ncols();
    // Column-major scratch so rotations touch contiguous memory.
    let mut colsv: Vec<Vec<f64>> = (0..n).map(|j| a.column(j).to_vec()).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&colsv[p], &colsv[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = colsv.split_at_mut(q);
                let (cp, cq) = (&mut lo[p], &mut hi[0]);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = colsv.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.truncate(rows.min(cols));
    sv
}
