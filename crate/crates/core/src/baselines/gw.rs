use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ot::{check_balanced, ot_exact, Coupling};
use super::{frobenius_inner, linear_oracle, InnerSolver};
use crate::error::Result;
use crate::network::DiscreteMeasureNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub inner: InnerSolver,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-12,
            restarts: 32,
            seed: 0,
            inner: InnerSolver::Auto,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gw2Result {
    /// `½ sqrt(E)`.
    pub value: f64,
    /// `sqrt(E)` without the prefactor.
    pub root: f64,
    /// `E = Σ |ω_X(i,j) - ω_Y(k,l)|² π_ik π_jl`.
    pub squared: f64,
    pub coupling: Coupling,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// `Σ_ij ω(i,j)² w_i w_j`.
pub(crate) fn weighted_square_mass(kernel: &Array2<f64>, w: &Array1<f64>) -> f64 {
    kernel
        .indexed_iter()
        .map(|((i, j), &x)| x * x * w[i] * w[j])
        .sum()
}

/// `E(π)` for a coupling with marginals `a`, `b`.
pub fn gw2_objective(nx: &DiscreteMeasureNetwork, ny: &DiscreteMeasureNetwork, pi: ArrayView2<f64>) -> f64 {
    let x = nx.kernel();
    let y = ny.kernel();
    let a = pi.sum_axis(ndarray::Axis(1));
    let b = pi.sum_axis(ndarray::Axis(0));
    let cross = x.dot(&pi).dot(&y.t());
    let e = weighted_square_mass(x, &a) + weighted_square_mass(y, &b)
        - 2.0 * frobenius_inner(&pi.to_owned(), &cross);
    e.max(0.0)
}

/// Random start points shared by the quadratic baselines: a random vertex of
/// the transport polytope on odd indices, a random interior plan on even ones.
pub(crate) fn random_coupling(a: &Array1<f64>, b: &Array1<f64>, index: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let (n, m) = (a.len(), b.len());
    if index % 2 == 1 {
        let cost = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..1.0));
        return Ok(ot_exact(a, b, cost.view())?.0.plan);
    }
    let mut plan = Array2::from_shape_fn((n, m), |_| rng.random_range(0.05..1.0));
    for _ in 0..500 {
        for (mut row, &ai) in plan.outer_iter_mut().zip(a) {
            let s = row.sum();
            if s > 0.0 {
                row.mapv_inplace(|v| v * ai / s);
            }
        }
        for (mut col, &bk) in plan.axis_iter_mut(ndarray::Axis(1)).zip(b) {
            let s = col.sum();
            if s > 0.0 {
                col.mapv_inplace(|v| v * bk / s);
            }
        }
    }
    Ok(plan)
}

pub(crate) fn same_weights(a: &Array1<f64>, b: &Array1<f64>) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

/// Conditional gradient from one start; returns the final plan, `E` and its trace.
fn frank_wolfe(
    x: &Array2<f64>,
    y: &Array2<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    mut pi: Array2<f64>,
    config: &BaselineConfig,
) -> Result<(Array2<f64>, f64, Vec<f64>, usize)> {
    let constant = weighted_square_mass(x, a) + weighted_square_mass(y, b);
    let mut g = x.dot(&pi).dot(&y.t());
    let mut h = x.t().dot(&pi).dot(y);
    let mut e = constant - 2.0 * frobenius_inner(&pi, &g);
    let mut trace = vec![e.max(0.0)];
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let direction_cost = -(&g + &h);
        let target = linear_oracle(a, b, direction_cost.view(), config.inner)?;
        let d = &target - &pi;
        let xdy = x.dot(&d).dot(&y.t());
        let a1 = -2.0 * frobenius_inner(&d, &(&g + &h));
        let a2 = -2.0 * frobenius_inner(&d, &xdy);
        if a1 >= -config.tol * e.abs().max(1.0) {
            break;
        }
        let t = if a2 > 0.0 { (-a1 / (2.0 * a2)).min(1.0) } else { 1.0 };
        pi.scaled_add(t, &d);
        pi.mapv_inplace(|v| v.max(0.0));
        g = x.dot(&pi).dot(&y.t());
        h = x.t().dot(&pi).dot(y);
        e = constant - 2.0 * frobenius_inner(&pi, &g);
        trace.push(e.max(0.0));
    }
    Ok((pi, e.max(0.0), trace, iterations))
}

/// GW₂ upper estimate by multi-start Frank-Wolfe.
pub fn gw2_solve(
    nx: &DiscreteMeasureNetwork,
    ny: &DiscreteMeasureNetwork,
    config: &BaselineConfig,
) -> Result<Gw2Result> {
    gw2_solve_with_starts(nx, ny, config, &[])
}

/// As [`gw2_solve`] with extra starting couplings.
pub fn gw2_solve_with_starts(
    nx: &DiscreteMeasureNetwork,
    ny: &DiscreteMeasureNetwork,
    config: &BaselineConfig,
    starts: &[Array2<f64>],
) -> Result<Gw2Result> {
    let (a, b) = (nx.weights(), ny.weights());
    check_balanced(a, b)?;
    let mut inits = vec![Coupling::product(a, b).plan];
    if same_weights(a, b) {
        inits.push(Array2::from_diag(a));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for r in 1..config.restarts.max(1) {
        inits.push(random_coupling(a, b, r, &mut rng)?);
    }
    inits.extend(starts.iter().cloned());
    let mut best: Option<(Array2<f64>, f64, Vec<f64>, usize)> = None;
    for init in inits {
        let run = frank_wolfe(nx.kernel(), ny.kernel(), a, b, init, config)?;
        if best.as_ref().is_none_or(|bst| run.1 < bst.1) {
            best = Some(run);
        }
    }
    let (plan, _, trace, iterations) = best.expect("at least one start");
    let squared = gw2_objective(nx, ny, plan.view());
    Ok(Gw2Result {
        value: 0.5 * squared.sqrt(),
        root: squared.sqrt(),
        squared,
        coupling: Coupling {
            plan,
            row_marginal: a.clone(),
            col_marginal: b.clone(),
        },
        trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn net(w: Vec<f64>, k: Vec<Vec<f64>>) -> DiscreteMeasureNetwork {
        DiscreteMeasureNetwork::from_vecs(w, k).unwrap()
    }

    #[test]
    fn identical_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = Array2::from_shape_fn((5, 5), |_| rng.random_range(0.0..1.0));
        let n = DiscreteMeasureNetwork::new(Array1::from_elem(5, 0.2), k).unwrap();
        let r = gw2_solve(&n, &n, &BaselineConfig::default()).unwrap();
        assert!(r.value <= 1e-6);
    }

    #[test]
    fn two_points_versus_one() {
        let eps: f64 = 0.5;
        let x = net(vec![1.0 - eps, eps], vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let y = net(vec![1.0], vec![vec![0.0]]);
        let r = gw2_solve(&x, &y, &BaselineConfig::default()).unwrap();
        assert!((r.value - 0.353553).abs() < 1e-6);
        assert!((r.value - ((1.0 - eps) * eps / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matches_coupling_grid_on_three_points() {
        // Uniform 3x3 couplings: fix π_00, π_01, π_10, π_11 on a 0.05 grid
        // scaled to the 1/3 marginals; the rest is determined.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let kx = Array2::from_shape_fn((3, 3), |_| rng.random_range(0.0..1.0));
            let ky = Array2::from_shape_fn((3, 3), |_| rng.random_range(0.0..1.0));
            let w = Array1::from_elem(3, 1.0 / 3.0);
            let nx = DiscreteMeasureNetwork::new(w.clone(), kx).unwrap();
            let ny = DiscreteMeasureNetwork::new(w, ky).unwrap();
            let third = 1.0 / 3.0;
            let steps: Vec<f64> = (0..=20).map(|s| s as f64 * 0.05 * third).collect();
            let mut oracle = f64::INFINITY;
            for &p00 in &steps {
                for &p01 in steps.iter().filter(|&&v| p00 + v <= third + 1e-15) {
                    for &p10 in steps.iter().filter(|&&v| p00 + v <= third + 1e-15) {
                        for &p11 in steps.iter().filter(|&&v| p01 + v <= third + 1e-15 && p10 + v <= third + 1e-15) {
                            let p02 = third - p00 - p01;
                            let p12 = third - p10 - p11;
                            let p20 = third - p00 - p10;
                            let p21 = third - p01 - p11;
                            let p22 = third - p02 - p12;
                            if p22 < -1e-15 {
                                continue;
                            }
                            let pi = array![[p00, p01, p02], [p10, p11, p12], [p20, p21, p22.max(0.0)]];
                            oracle = oracle.min(0.5 * gw2_objective(&nx, &ny, pi.view()).sqrt());
                        }
                    }
                }
            }
            let r = gw2_solve(&nx, &ny, &BaselineConfig::default()).unwrap();
            assert!(r.value <= oracle + 1e-6, "{} > {oracle}", r.value);
            assert!(r.value >= 0.99 * oracle - 1e-9, "{} << {oracle}", r.value);
        }
    }

    #[test]
    fn trace_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let kx = Array2::from_shape_fn((6, 6), |_| rng.random_range(0.0..1.0));
        let ky = Array2::from_shape_fn((4, 4), |_| rng.random_range(0.0..1.0));
        let nx = DiscreteMeasureNetwork::new(Array1::from_elem(6, 1.0 / 6.0), kx).unwrap();
        let ny = DiscreteMeasureNetwork::new(Array1::from_elem(4, 0.25), ky).unwrap();
        let pi = Coupling::product(nx.weights(), ny.weights()).plan;
        let (_, _, trace, _) =
            frank_wolfe(nx.kernel(), ny.kernel(), nx.weights(), ny.weights(), pi, &BaselineConfig::default()).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn rejects_unequal_masses() {
        let x = net(vec![1.0], vec![vec![0.0]]);
        let y = net(vec![2.0], vec![vec![0.0]]);
        assert!(gw2_solve(&x, &y, &BaselineConfig::default()).is_err());
    }
}
