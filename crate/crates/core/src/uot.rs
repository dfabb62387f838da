//! Conic unbalanced OT between measures on the real line, and the lower bound
//! on the network distance it yields through kernel-value pushforwards.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::accel::extrapolate;
use crate::cone::ConeKernel;
use crate::error::Result;
use crate::network::{DiscreteMeasureNetwork, DiscreteValueMeasure, SemiCouplingPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UotConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub coalesce_tol: f64,
}

impl Default for UotConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            rel_tol: 1e-13,
            coalesce_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UotResult {
    /// Distance implied by the dual bound: never above the true value.
    pub value: f64,
    /// Distance at the primal pair: never below the true value.
    pub primal_value: f64,
    /// `G` at the returned pair.
    pub objective: f64,
    /// Upper bound on the optimal `G` from the dual certificate.
    pub dual_objective: f64,
    pub pair: SemiCouplingPair,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Law of the kernel value under `μ ⊗ μ`.
pub fn pushforward_value_distribution(net: &DiscreteMeasureNetwork, coalesce_tol: f64) -> DiscreteValueMeasure {
    let w = net.weights();
    let atoms: Vec<(f64, f64)> = net
        .kernel()
        .indexed_iter()
        .map(|((p, q), &v)| (v, w[p] * w[q]))
        .collect();
    DiscreteValueMeasure::from_atoms(atoms, coalesce_tol)
        .expect("validated network yields finite nonnegative atoms")
}

fn row_update(marginal: &[f64], other: &Array2<f64>, omega_sq: &Array2<f64>) -> Array2<f64> {
    let mut out = other * omega_sq;
    for (mut row, &m) in out.outer_iter_mut().zip(marginal) {
        let s = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v * m / s);
        } else {
            row.fill(0.0);
        }
    }
    out
}

fn col_update(marginal: &[f64], other: &Array2<f64>, omega_sq: &Array2<f64>) -> Array2<f64> {
    let mut out = other * omega_sq;
    for (mut col, &w) in out.axis_iter_mut(ndarray::Axis(1)).zip(marginal) {
        let s = col.sum();
        if s > 0.0 {
            col.mapv_inplace(|v| v * w / s);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Dual function `½ Σ_j w_j / s_j + ½ Σ_i m_i max_j K_ij s_j` with
/// `K = Ω²`. Writing `sqrt(ab) = min_t ½(a t + b / t)` and exchanging max and
/// min shows that every `s > 0` bounds the optimal `G` from above.
fn dual_value(s: &[f64], k: &Array2<f64>, m: &[f64], w: &[f64]) -> f64 {
    let cols: f64 = w.iter().zip(s).map(|(&wj, &sj)| if wj > 0.0 { wj / sj } else { 0.0 }).sum();
    let rows: f64 = k
        .outer_iter()
        .zip(m)
        .map(|(row, &mi)| mi * row_max(row.as_slice().expect("row-major"), s))
        .sum();
    0.5 * (cols + rows)
}

fn row_max(row: &[f64], s: &[f64]) -> f64 {
    row.iter()
        .zip(s)
        .filter(|(&kij, _)| kij > 0.0)
        .map(|(&kij, &sj)| kij * sj)
        .fold(0.0, f64::max)
}

/// Exact minimization of the dual over `s_j` with the others fixed. The
/// restriction is `½ w / x + ½ Σ_i m_i max(K_ij x, c_i)`, convex and
/// piecewise of the form `a / x + b x + const` between the breakpoints
/// `c_i / K_ij`.
fn coordinate_step(s: &mut [f64], j: usize, k: &Array2<f64>, m: &[f64], w: &[f64]) {
    let mut kinks: Vec<(f64, f64)> = Vec::new();
    for (i, row) in k.outer_iter().enumerate() {
        let kij = row[j];
        if kij <= 0.0 || m[i] <= 0.0 {
            continue;
        }
        let others = row
            .iter()
            .zip(s.iter())
            .enumerate()
            .filter(|&(l, (&kil, _))| l != j && kil > 0.0)
            .map(|(_, (&kil, &sl))| kil * sl)
            .fold(0.0, f64::max);
        kinks.push((others / kij, m[i] * kij));
    }
    if w[j] <= 0.0 {
        // only the max terms depend on s_j, and they shrink with it
        s[j] = 0.0;
        return;
    }
    if kinks.is_empty() {
        s[j] = f64::INFINITY;
        return;
    }
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    // slope of the linear part grows by m_i K_ij at every kink
    let mut slope = 0.0;
    let mut lo = 0.0;
    for idx in 0..=kinks.len() {
        let hi = kinks.get(idx).map_or(f64::INFINITY, |&(x, _)| x);
        if slope > 0.0 {
            let x = (w[j] / slope).sqrt();
            if x >= lo && x <= hi {
                s[j] = x;
                return;
            }
        }
        if idx < kinks.len() {
            slope += kinks[idx].1;
            lo = hi;
        }
    }
    s[j] = lo;
}

/// Dual point guessed from the support of a primal pair: on a spanning
/// forest of the entries above `threshold` the dual is tight, so
/// `K_ij s_j` is constant along each row; each tree then gets the scale
/// minimizing its share of the dual.
fn dual_from_support(pair: &SemiCouplingPair, k: &Array2<f64>, m: &[f64], w: &[f64], threshold: f64) -> Vec<f64> {
    let (n, p) = k.dim();
    let mut edges: Vec<(f64, usize, usize)> = pair
        .matching()
        .indexed_iter()
        .filter(|&((i, j), &v)| k[[i, j]] > 0.0 && v > threshold * m[i].max(w[j]))
        .map(|((i, j), &v)| (v, i, j))
        .collect();
    edges.sort_by(|a, b| b.0.total_cmp(&a.0));
    // union-find over rows 0..n and columns n..n+p
    let mut parent: Vec<usize> = (0..n + p).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + p];
    for &(_, i, j) in &edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
        if a != b {
            parent[a] = b;
            adj[i].push(n + j);
            adj[n + j].push(i);
        }
    }
    let mut s = vec![1.0; p];
    let mut u = vec![0.0; n];
    let mut seen = vec![false; n + p];
    for root in n..n + p {
        if seen[root] {
            continue;
        }
        let mut component = vec![root];
        seen[root] = true;
        s[root - n] = 1.0;
        let mut head = 0;
        while head < component.len() {
            let v = component[head];
            head += 1;
            for &x in &adj[v] {
                if seen[x] {
                    continue;
                }
                seen[x] = true;
                if x < n {
                    u[x] = k[[x, v - n]] * s[v - n];
                } else {
                    s[x - n] = u[v] / k[[v, x - n]];
                }
                component.push(x);
            }
        }
        let cols: f64 = component.iter().filter(|&&x| x >= n).map(|&x| w[x - n] / s[x - n]).sum();
        let rows: f64 = component.iter().filter(|&&x| x < n).map(|&x| m[x] * u[x]).sum();
        let scale = if rows > 0.0 && cols > 0.0 { (cols / rows).sqrt() } else { 1.0 };
        for &x in &component {
            if x >= n {
                s[x - n] = if w[x - n] > 0.0 { s[x - n] * scale } else { 0.0 };
            }
        }
    }
    s
}

/// Best dual bound reachable from the primal pair: support-forest guesses
/// at a few thresholds, then exact coordinate sweeps.
fn certify(pair: &SemiCouplingPair, k: &Array2<f64>, m: &[f64], w: &[f64]) -> f64 {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for threshold in [1e-3, 1e-6, 1e-9] {
        let s = dual_from_support(pair, k, m, w, threshold);
        let v = dual_value(&s, k, m, w);
        if v.is_finite() && best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, s));
        }
    }
    let Some((mut value, mut s)) = best else {
        return f64::INFINITY;
    };
    for _ in 0..50 {
        for j in 0..s.len() {
            coordinate_step(&mut s, j, k, m, w);
        }
        let next = dual_value(&s, k, m, w);
        let done = next >= value - 1e-15 * value.abs();
        value = value.min(next);
        if done {
            break;
        }
    }
    value
}

/// Maximizes `G(A, B) = Σ Ω_ij sqrt(A_ij B_ij)` over semi-couplings of the
/// two value measures and returns `sqrt(4δ²(|ν_X| + |ν_Y|) - 8δ² G*)`.
pub fn uot_solve(
    nu_x: &DiscreteValueMeasure,
    nu_y: &DiscreteValueMeasure,
    kernel: &ConeKernel,
    config: &UotConfig,
) -> UotResult {
    let (u, m) = (nu_x.values(), nu_x.masses());
    let (v, w) = (nu_y.values(), nu_y.masses());
    let omega = Array2::from_shape_fn((u.len(), v.len()), |(i, j)| kernel.omega_between(u[i], v[j]));
    let omega_sq = omega.mapv(|x| x * x);
    let (mx, my) = (nu_x.total_mass(), nu_y.total_mass());
    let mut pair = SemiCouplingPair::zeros(Array1::from(m.to_vec()), Array1::from(w.to_vec()));
    let zero_rows = omega.outer_iter().map(|r| r.sum() == 0.0).collect::<Vec<_>>();
    let zero_cols = omega.axis_iter(ndarray::Axis(1)).map(|c| c.sum() == 0.0).collect::<Vec<_>>();
    for ((i, j), a) in pair.row_plan.indexed_iter_mut() {
        // product start restricted to the support of Ω
        if omega[[i, j]] > 0.0 && my > 0.0 && !zero_rows[i] && !zero_cols[j] {
            *a = m[i] * w[j] / my;
        }
    }
    for ((i, j), b) in pair.col_plan.indexed_iter_mut() {
        if omega[[i, j]] > 0.0 && mx > 0.0 {
            *b = m[i] * w[j] / mx;
        }
    }
    let objective = |p: &SemiCouplingPair| -> f64 { (&omega * &p.matching()).sum() };
    let step = |p: &mut SemiCouplingPair| -> f64 {
        p.row_plan = row_update(m, &p.col_plan, &omega_sq);
        p.col_plan = col_update(w, &p.row_plan, &omega_sq);
        objective(p)
    };
    let settled = |old: f64, new: f64| (new - old).abs() <= config.rel_tol * new.abs() || new == 0.0;
    let mut g = objective(&pair);
    let mut trace = vec![g];
    let mut iterations = 0;
    let mut max_step = 1.0f64;
    // same safeguarded extrapolation as the CCOT ascent
    while iterations < config.max_iters {
        let x0 = pair.clone();
        let g1 = step(&mut pair);
        iterations += 1;
        trace.push(g1);
        let done = settled(g, g1);
        g = g1;
        if done || iterations >= config.max_iters {
            break;
        }
        let x1 = pair.clone();
        let g2 = step(&mut pair);
        iterations += 1;
        trace.push(g2);
        let done = settled(g, g2);
        g = g2;
        if done {
            break;
        }
        let jumped = extrapolate(
            &[&x0.row_plan, &x0.col_plan],
            &[&x1.row_plan, &x1.col_plan],
            &[&pair.row_plan, &pair.col_plan],
            max_step,
        );
        if let Some((mut plans, taken)) = jumped {
            let mut candidate = pair.clone();
            candidate.col_plan = plans.pop().expect("two plans");
            candidate.row_plan = plans.pop().expect("two plans");
            let g3 = step(&mut candidate);
            iterations += 1;
            if g3 >= g {
                trace.push(g3);
                let done = settled(g, g3);
                pair = candidate;
                g = g3;
                if taken >= max_step {
                    max_step *= 4.0;
                }
                if done {
                    break;
                }
            } else {
                max_step = (max_step / 4.0).max(1.0);
            }
        }
    }
    let dual = certify(&pair, &omega_sq, m, w).max(g);
    let delta = kernel.delta();
    let dist = |f: f64| (4.0 * delta * delta * (mx + my) - 8.0 * delta * delta * f).max(0.0).sqrt();
    UotResult {
        value: dist(dual),
        primal_value: dist(g),
        objective: g,
        dual_objective: dual,
        pair,
        trace,
        iterations,
    }
}

/// `UOT_δ(ν_X, ν_Y)` for the kernel-value laws of two networks.
pub fn cgw_lower_bound(
    nx: &DiscreteMeasureNetwork,
    ny: &DiscreteMeasureNetwork,
    kernel: &ConeKernel,
    config: &UotConfig,
) -> Result<f64> {
    let nu_x = pushforward_value_distribution(nx, config.coalesce_tol);
    let nu_y = pushforward_value_distribution(ny, config.coalesce_tol);
    // the value laws carry the squared network masses
    for (nu, net) in [(&nu_x, nx), (&nu_y, ny)] {
        let expected = net.mass() * net.mass();
        assert!(
            (nu.total_mass() - expected).abs() <= 1e-12 * expected.max(1.0),
            "pushforward mass {} differs from squared mass {expected}",
            nu.total_mass()
        );
    }
    Ok(uot_solve(&nu_x, &nu_y, kernel, config).value)
}
