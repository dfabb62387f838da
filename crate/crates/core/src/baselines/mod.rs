//! Balanced baselines: exact and entropic OT, GW₂ by conditional gradient,
//! and co-optimal transport by alternating OT.
//!
//! GW₂ and COT values carry the conventional `½` prefactor,
//! `½ (Σ |ω_X - ω_Y|² π ⊗ π)^{1/2}`; the unhalved root is reported alongside.

mod cot;
mod gw;
mod ot;
mod sinkhorn;

pub use cot::{cot_solve, cot_solve_with_starts, CotResult};
pub use gw::{gw2_objective, gw2_solve, gw2_solve_with_starts, BaselineConfig, Gw2Result};
pub use ot::{ot_exact, Coupling, OT_EXACT_CAP};
pub use sinkhorn::{sinkhorn, SinkhornResult};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Linear OT oracle used inside the quadratic solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    /// Exact up to the size cap, entropic above it.
    Auto,
    Exact,
    /// Entropic with regularization `scale * median(|cost|)`.
    Sinkhorn { scale: f64, iters: usize },
}

pub(crate) fn linear_oracle(
    a: &Array1<f64>,
    b: &Array1<f64>,
    cost: ArrayView2<f64>,
    inner: InnerSolver,
) -> Result<Array2<f64>> {
    let exact = match inner {
        InnerSolver::Exact => true,
        InnerSolver::Sinkhorn { .. } => false,
        InnerSolver::Auto => a.len().max(b.len()) <= OT_EXACT_CAP,
    };
    if exact {
        return Ok(ot_exact(a, b, cost)?.0.plan);
    }
    let (scale, iters) = match inner {
        InnerSolver::Sinkhorn { scale, iters } => (scale, iters),
        _ => (1e-2, 500),
    };
    // shift so the cost is nonnegative; this does not change the optimal plan
    let min = cost.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted = cost.mapv(|c| c - min);
    let mut vals: Vec<f64> = shifted.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    let median = vals[vals.len() / 2].max(1e-12);
    Ok(sinkhorn(a, b, shifted.view(), scale * median, iters)?.coupling.plan)
}

pub(crate) fn frobenius_inner(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
