use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gw::{random_coupling, same_weights, BaselineConfig};
use super::ot::{check_balanced, Coupling};
use super::{frobenius_inner, linear_oracle};
use crate::error::Result;
use crate::network::DiscreteMeasureHypernetwork;

#[derive(Debug, Clone)]
pub struct CotResult {
    /// `½ sqrt(E)`.
    pub value: f64,
    pub root: f64,
    pub squared: f64,
    pub samples: Coupling,
    pub features: Coupling,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Weighted squared kernel mass `Σ_ij ω(i,j)² a_i a'_j` of a hypernetwork.
fn square_mass(h: &DiscreteMeasureHypernetwork) -> f64 {
    h.kernel()
        .indexed_iter()
        .map(|((i, j), &x)| x * x * h.sample_weights()[i] * h.feature_weights()[j])
        .sum()
}

struct Alternation {
    samples: Array2<f64>,
    features: Array2<f64>,
    energy: f64,
    trace: Vec<f64>,
    iterations: usize,
}

fn alternate(
    hx: &DiscreteMeasureHypernetwork,
    hy: &DiscreteMeasureHypernetwork,
    features: Array2<f64>,
    config: &BaselineConfig,
) -> Result<Alternation> {
    let (x, y) = (hx.kernel(), hy.kernel());
    let constant = square_mass(hx) + square_mass(hy);
    let energy = |pi: &Array2<f64>, pf: &Array2<f64>| constant - 2.0 * frobenius_inner(pi, &x.dot(pf).dot(&y.t()));
    let mut pf = features;
    let mut pi = linear_oracle(hx.sample_weights(), hy.sample_weights(), (-x.dot(&pf).dot(&y.t())).view(), config.inner)?;
    let mut e = energy(&pi, &pf);
    let mut trace = vec![e.max(0.0)];
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let pf_new = linear_oracle(hx.feature_weights(), hy.feature_weights(), (-x.t().dot(&pi).dot(y)).view(), config.inner)?;
        let pi_new = linear_oracle(hx.sample_weights(), hy.sample_weights(), (-x.dot(&pf_new).dot(&y.t())).view(), config.inner)?;
        let e_new = energy(&pi_new, &pf_new);
        if e_new > e - config.tol * e.abs().max(1.0) {
            // no strict improvement: keep the better of the two iterates
            if e_new < e {
                pi = pi_new;
                pf = pf_new;
                e = e_new;
                trace.push(e.max(0.0));
            }
            break;
        }
        pi = pi_new;
        pf = pf_new;
        e = e_new;
        trace.push(e.max(0.0));
    }
    Ok(Alternation {
        samples: pi,
        features: pf,
        energy: e.max(0.0),
        trace,
        iterations,
    })
}

/// Co-optimal transport upper estimate by alternating exact OT.
pub fn cot_solve(
    hx: &DiscreteMeasureHypernetwork,
    hy: &DiscreteMeasureHypernetwork,
    config: &BaselineConfig,
) -> Result<CotResult> {
    cot_solve_with_starts(hx, hy, config, &[])
}

/// As [`cot_solve`] with extra starting feature couplings.
pub fn cot_solve_with_starts(
    hx: &DiscreteMeasureHypernetwork,
    hy: &DiscreteMeasureHypernetwork,
    config: &BaselineConfig,
    feature_starts: &[Array2<f64>],
) -> Result<CotResult> {
    let (a, b) = (hx.sample_weights(), hy.sample_weights());
    let (ap, bp) = (hx.feature_weights(), hy.feature_weights());
    check_balanced(a, b)?;
    check_balanced(ap, bp)?;
    let mut inits = vec![Coupling::product(ap, bp).plan];
    if same_weights(ap, bp) {
        inits.push(Array2::from_diag(ap));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for r in 1..config.restarts.max(1) {
        inits.push(random_coupling(ap, bp, r, &mut rng)?);
    }
    inits.extend(feature_starts.iter().cloned());
    let mut best: Option<Alternation> = None;
    for init in inits {
        let run = alternate(hx, hy, init, config)?;
        if best.as_ref().is_none_or(|bst| run.energy < bst.energy) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    Ok(CotResult {
        value: 0.5 * best.energy.sqrt(),
        root: best.energy.sqrt(),
        squared: best.energy,
        samples: Coupling {
            plan: best.samples,
            row_marginal: a.clone(),
            col_marginal: b.clone(),
        },
        features: Coupling {
            plan: best.features,
            row_marginal: ap.clone(),
            col_marginal: bp.clone(),
        },
        trace: best.trace,
        iterations: best.iterations,
    })
}
