//! Exact discrete optimal transport by the transportation simplex
//! (northwest-corner start, MODI pricing, cycle pivots on the basis tree).

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Largest side accepted by [`ot_exact`].
pub const OT_EXACT_CAP: usize = 512;

/// A balanced transport plan with its marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub plan: Array2<f64>,
    pub row_marginal: Array1<f64>,
    pub col_marginal: Array1<f64>,
}

impl Coupling {
    /// Independent (product) coupling `a ⊗ b / mass`.
    pub fn product(a: &Array1<f64>, b: &Array1<f64>) -> Self {
        let mass = a.sum();
        let plan = Array2::from_shape_fn((a.len(), b.len()), |(i, k)| {
            if mass > 0.0 {
                a[i] * b[k] / mass
            } else {
                0.0
            }
        });
        Self {
            plan,
            row_marginal: a.clone(),
            col_marginal: b.clone(),
        }
    }

    pub fn cost(&self, cost: ArrayView2<f64>) -> f64 {
        (&self.plan * &cost).sum()
    }

    /// Largest absolute deviation of the plan's marginals from the targets.
    pub fn marginal_violation(&self) -> f64 {
        let rows = self.plan.sum_axis(ndarray::Axis(1));
        let cols = self.plan.sum_axis(ndarray::Axis(0));
        rows.iter()
            .zip(&self.row_marginal)
            .chain(cols.iter().zip(&self.col_marginal))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_balanced(a: &Array1<f64>, b: &Array1<f64>) -> Result<()> {
    let (sa, sb) = (a.sum(), b.sum());
    if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1.0) {
        return Err(Error::MassMismatch { left: sa, right: sb });
    }
    Ok(())
}

/// Optimal coupling of `a` and `b` under `cost` and its value.
pub fn ot_exact(a: &Array1<f64>, b: &Array1<f64>, cost: ArrayView2<f64>) -> Result<(Coupling, f64)> {
    let (n, m) = (a.len(), b.len());
    if cost.dim() != (n, m) {
        return Err(Error::DimensionMismatch(format!(
            "cost {:?} for marginals of length {n} and {m}",
            cost.dim()
        )));
    }
    let size = n.max(m);
    if size > OT_EXACT_CAP {
        return Err(Error::CapExceeded { size, cap: OT_EXACT_CAP });
    }
    check_balanced(a, b)?;
    if n == 0 || m == 0 {
        let coupling = Coupling {
            plan: Array2::zeros((n, m)),
            row_marginal: a.clone(),
            col_marginal: b.clone(),
        };
        return Ok((coupling, 0.0));
    }
    let plan = TransportSimplex::new(a, b, cost).solve();
    let coupling = Coupling {
        plan,
        row_marginal: a.clone(),
        col_marginal: b.clone(),
    };
    let value = coupling.cost(cost);
    Ok((coupling, value))
}

struct TransportSimplex<'a> {
    n: usize,
    m: usize,
    cost: ArrayView2<'a, f64>,
    flow: Array2<f64>,
    /// Basic cells; always `n + m - 1` of them forming a spanning tree on
    /// the bipartite row/column graph.
    basis: Vec<(usize, usize)>,
    in_basis: Array2<bool>,
}

impl<'a> TransportSimplex<'a> {
    fn new(a: &Array1<f64>, b: &Array1<f64>, cost: ArrayView2<'a, f64>) -> Self {
        let (n, m) = (a.len(), b.len());
        let mut supply = a.to_vec();
        let mut demand = b.to_vec();
        // absorb the tiny mass discrepancy allowed by the balance check
        let diff = supply.iter().sum::<f64>() - demand.iter().sum::<f64>();
        demand[m - 1] += diff;
        let mut flow = Array2::zeros((n, m));
        let mut basis = Vec::with_capacity(n + m - 1);
        let mut in_basis = Array2::from_elem((n, m), false);
        let (mut i, mut k) = (0, 0);
        loop {
            let x = supply[i].min(demand[k]).max(0.0);
            flow[[i, k]] = x;
            basis.push((i, k));
            in_basis[[i, k]] = true;
            supply[i] -= x;
            demand[k] -= x;
            if i == n - 1 && k == m - 1 {
                break;
            }
            if (supply[i] <= demand[k] && i < n - 1) || k == m - 1 {
                i += 1;
            } else {
                k += 1;
            }
        }
        Self {
            n,
            m,
            cost,
            flow,
            basis,
            in_basis,
        }
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        // nodes: rows 0..n, columns n..n+m; payload is the basis index
        let mut adj = vec![Vec::new(); self.n + self.m];
        for (idx, &(i, k)) in self.basis.iter().enumerate() {
            adj[i].push((self.n + k, idx));
            adj[self.n + k].push((i, idx));
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![f64::NAN; self.n];
        let mut v = vec![f64::NAN; self.m];
        u[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &(next, _) in &adj[node] {
                if node < self.n {
                    let k = next - self.n;
                    if v[k].is_nan() {
                        v[k] = self.cost[[node, k]] - u[node];
                        queue.push_back(next);
                    }
                } else if u[next].is_nan() {
                    let k = node - self.n;
                    u[next] = self.cost[[next, k]] - v[k];
                    queue.push_back(next);
                }
            }
        }
        (u, v)
    }

    /// Basis indices along the tree path from row node `i` to column node `k`.
    fn tree_path(&self, adj: &[Vec<(usize, usize)>], i: usize, k: usize) -> Vec<usize> {
        let target = self.n + k;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.n + self.m];
        let mut seen = vec![false; self.n + self.m];
        seen[i] = true;
        let mut queue = VecDeque::from([i]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, idx) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, idx));
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while let Some((prev, idx)) = parent[node] {
            path.push(idx);
            node = prev;
        }
        path.reverse();
        path
    }

    fn solve(mut self) -> Array2<f64> {
        let scale = self.cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs())).max(1.0);
        let tol = 1e-12 * scale;
        let max_pivots = 50 * (self.n + self.m) * (self.n + self.m) + 1000;
        for _ in 0..max_pivots {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj);
            let mut entering = None;
            let mut best = -tol;
            for i in 0..self.n {
                for k in 0..self.m {
                    if self.in_basis[[i, k]] {
                        continue;
                    }
                    let reduced = self.cost[[i, k]] - u[i] - v[k];
                    if reduced < best {
                        best = reduced;
                        entering = Some((i, k));
                    }
                }
            }
            let Some((ei, ek)) = entering else { break };
            // the cycle is entering (+), then alternating -, +, ... along the
            // tree path from column ek back to row ei
            let path = self.tree_path(&adj, ei, ek);
            let mut theta = f64::INFINITY;
            let mut leaving = usize::MAX;
            for (pos, &idx) in path.iter().rev().enumerate() {
                if pos % 2 == 0 {
                    let (i, k) = self.basis[idx];
                    if self.flow[[i, k]] < theta {
                        theta = self.flow[[i, k]];
                        leaving = idx;
                    }
                }
            }
            for (pos, &idx) in path.iter().rev().enumerate() {
                let (i, k) = self.basis[idx];
                if pos % 2 == 0 {
                    self.flow[[i, k]] = (self.flow[[i, k]] - theta).max(0.0);
                } else {
                    self.flow[[i, k]] += theta;
                }
            }
            let (li, lk) = self.basis[leaving];
            self.flow[[li, lk]] = 0.0;
            self.in_basis[[li, lk]] = false;
            self.flow[[ei, ek]] = theta;
            self.in_basis[[ei, ek]] = true;
            self.basis[leaving] = (ei, ek);
        }
        self.flow
    }
}
