use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::ot::{check_balanced, Coupling};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub coupling: Coupling,
    /// Marginal violation before rounding fell under the target.
    pub converged: bool,
    pub iterations: usize,
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropic OT in the log domain, rounded onto the transport polytope.
pub fn sinkhorn(
    a: &Array1<f64>,
    b: &Array1<f64>,
    cost: ArrayView2<f64>,
    reg: f64,
    iters: usize,
) -> Result<SinkhornResult> {
    let (n, m) = (a.len(), b.len());
    if !(reg > 0.0 && reg.is_finite()) {
        return Err(Error::InvalidConfig(format!("regularization must be positive, got {reg}")));
    }
    if cost.dim() != (n, m) {
        return Err(Error::DimensionMismatch(format!("cost {:?} vs ({n}, {m})", cost.dim())));
    }
    check_balanced(a, b)?;
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let plan_of = |f: &Array1<f64>, g: &Array1<f64>| {
        Array2::from_shape_fn((n, m), |(i, k)| {
            let e = (f[i] + g[k] - cost[[i, k]]) / reg;
            if e.is_finite() { e.exp() } else { 0.0 }
        })
    };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < iters {
        iterations += 1;
        for i in 0..n {
            f[i] = reg * (log_a[i] - log_sum_exp((0..m).map(|k| (g[k] - cost[[i, k]]) / reg)));
        }
        for k in 0..m {
            g[k] = reg * (log_b[k] - log_sum_exp((0..n).map(|i| (f[i] - cost[[i, k]]) / reg)));
        }
        if iterations % 10 == 0 || iterations == iters {
            let rows = plan_of(&f, &g).sum_axis(Axis(1));
            let err: f64 = rows.iter().zip(a).map(|(x, y)| (x - y).abs()).sum();
            if err < 1e-9 {
                converged = true;
                break;
            }
        }
    }
    let plan = round_to_polytope(plan_of(&f, &g), a, b);
    Ok(SinkhornResult {
        coupling: Coupling {
            plan,
            row_marginal: a.clone(),
            col_marginal: b.clone(),
        },
        converged,
        iterations,
    })
}

/// Projects an approximate plan onto exact marginals: shrink rows and
/// columns that exceed their targets, then add back the deficit as a rank-one
/// correction.
fn round_to_polytope(mut plan: Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    for (mut row, &ai) in plan.outer_iter_mut().zip(a) {
        let s = row.sum();
        if s > ai && s > 0.0 {
            row.mapv_inplace(|v| v * ai / s);
        }
    }
    for (mut col, &bk) in plan.axis_iter_mut(Axis(1)).zip(b) {
        let s = col.sum();
        if s > bk && s > 0.0 {
            col.mapv_inplace(|v| v * bk / s);
        }
    }
    let err_r = a - &plan.sum_axis(Axis(1));
    let err_c = b - &plan.sum_axis(Axis(0));
    let total = err_r.sum();
    if total > 0.0 {
        for ((i, k), v) in plan.indexed_iter_mut() {
            *v += err_r[i].max(0.0) * err_c[k].max(0.0) / total;
        }
    }
    plan
}
