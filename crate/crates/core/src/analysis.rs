//! Numerical probes of the distance's theoretical guarantees.
//!
//! Every probe returns a serializable report listing each inequality it
//! checked with both sides and the margin, so a failure can be audited from
//! the JSON alone. Wherever a bound comes with an explicit feasible
//! semi-coupling (the diagonal plans behind the scaling and robustness
//! bounds, the relabelling plans behind weak isomorphism, a GW coupling
//! behind the GW comparison), that point is injected as an extra start: the
//! ascent never ends below its start, so the checks hold for the solver's
//! output and not only for the unknown optimum.
//!
//! Cross-solver comparisons use a single slack budget,
//! [`SLACK_REL`] of the largest quantity involved plus [`SLACK_ABS`].

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{gw2_objective, gw2_solve, gw2_solve_with_starts, BaselineConfig};
use crate::data::{perturb_measure, PerturbMode};
use crate::error::{Error, Result};
use crate::network::{DiscreteMeasureNetwork, SemiCouplingPair};
use crate::solver::{
    cgw_distance_of_pair, cgw_solve_with_starts, coupling_pair, diagonal_pair, network_tensor, objective_f,
    SolverConfig,
};
use crate::uot::{cgw_lower_bound, UotConfig};

pub const SLACK_REL: f64 = 0.02;
pub const SLACK_ABS: f64 = 1e-6;

/// Slack granted to a comparison whose largest quantity is `scale`.
pub fn slack(scale: f64) -> f64 {
    SLACK_REL * scale.abs() + SLACK_ABS
}

/// One inequality `value ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `bound - value`; negative on failure.
    pub margin: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            margin: bound - value,
            pass: value <= bound,
        }
    }
}

fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

fn require_unit_mass(net: &DiscreteMeasureNetwork, what: &str) -> Result<()> {
    if (net.mass() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("{what} must have unit mass, has {}", net.mass())));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub r: f64,
    pub s: f64,
    pub mass: f64,
    pub delta: f64,
    pub distance: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Compares the network with its rescalings `N^s = (X, sμ, ω)` and `N^r`.
///
/// * the distance between `N^s` and `N^r` is at most `2δ|r - s| m`, which
///   is what the diagonal pair `(diag(sμ), diag(rμ))` attains;
/// * multiplying a feasible quadruple and both measures by `t` multiplies
///   the squared distance by `t²` (checked to `1e-9` relative);
/// * the same distance is below `2δ(|1 - r| + |1 - s|) m`, the bound
///   obtained by passing through `N` itself.
pub fn verify_scaling(net: &DiscreteMeasureNetwork, r: f64, s: f64, config: &SolverConfig) -> Result<ScalingReport> {
    if !(r >= 0.0 && s >= 0.0) {
        return Err(Error::NegativeScale(r.min(s)));
    }
    let delta = config.kernel.delta();
    let mass = net.mass();
    let (ns, nr) = (net.scale_measure(s)?, net.scale_measure(r)?);
    let diag = diagonal_pair(ns.weights(), nr.weights())?;
    let sol = cgw_solve_with_starts(&ns, &nr, config, &[diag])?;
    let mut checks = vec![Check::new(
        "scaled_pair_bound",
        sol.distance,
        2.0 * delta * (r - s).abs() * mass + SLACK_ABS,
    )];

    let t = if r > 0.0 && r != 1.0 { r } else { 2.0 };
    let hx = ns.to_hypernetwork();
    let hy = nr.to_hypernetwork();
    let tensor = network_tensor(&ns, &nr, &config.kernel, &config.tensor_policy)?;
    let d2 = |f: f64, scale: f64| {
        let ms = hx.sample_mass() * scale;
        let my = hy.sample_mass() * scale;
        4.0 * delta * delta * (ms * ms + my * my) - 8.0 * delta * delta * f
    };
    let base = d2(objective_f(&sol.quad, &tensor)?, 1.0);
    let scaled = d2(objective_f(&sol.quad.scaled(t), &tensor)?, t);
    let rel = if base.abs() > 0.0 {
        (scaled - t * t * base).abs() / (t * t * base.abs())
    } else {
        scaled.abs()
    };
    checks.push(Check::new("homogeneity_relative_error", rel, 1e-9));
    checks.push(Check::new(
        "through_unscaled_bound",
        sol.distance,
        2.0 * delta * ((1.0 - r).abs() + (1.0 - s).abs()) * mass + SLACK_ABS,
    ));
    Ok(ScalingReport {
        r,
        s,
        mass,
        delta,
        distance: sol.distance,
        pass: all_pass(&checks),
        checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub cgw: f64,
    /// `√(2C)` times the unhalved GW root `(Σ |ω_X - ω_Y|² π⊗π)^{1/2}`.
    pub reference: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaSweep {
    pub rows: Vec<DeltaRow>,
    pub gw2: f64,
    pub gw2_root: f64,
    pub limit_constant: f64,
    /// `CGW / gw2_root` at the largest δ: the constant the sweep actually
    /// approaches.
    pub fitted_constant: f64,
    pub largest_is_minimum: bool,
    /// At most one increase of the gap, by at most 10% relative, once δ
    /// exceeds the kernel diameter.
    pub nearly_monotone: bool,
    pub pass: bool,
}

/// CGW at each δ against its large-δ limit `√(2C)·√E`, where `E` is the
/// best GW energy found. Each CGW solve is also started from the GW
/// coupling `(π, π)`.
pub fn delta_sweep(
    nx: &DiscreteMeasureNetwork,
    ny: &DiscreteMeasureNetwork,
    deltas: &[f64],
    config: &SolverConfig,
) -> Result<DeltaSweep> {
    require_unit_mass(nx, "first network")?;
    require_unit_mass(ny, "second network")?;
    if deltas.is_empty() {
        return Err(Error::InvalidConfig("no δ values".into()));
    }
    let gw = gw2_solve(nx, ny, &BaselineConfig { seed: config.seed, ..Default::default() })?;
    let start = coupling_pair(gw.coupling.plan.view(), nx.weights(), ny.weights());
    let limit_constant = (2.0 * config.kernel.constants().c).sqrt();
    let reference = limit_constant * gw.root;
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let cfg = config.with_kernel(config.kernel.with_delta(delta)?);
        let sol = cgw_solve_with_starts(nx, ny, &cfg, &[start.clone()])?;
        let relative_gap = if reference > 0.0 {
            (sol.distance - reference).abs() / reference
        } else {
            sol.distance.abs()
        };
        rows.push(DeltaRow { delta, cgw: sol.distance, reference, relative_gap });
    }
    let largest = rows.iter().max_by(|a, b| a.delta.total_cmp(&b.delta)).expect("nonempty");
    let largest_is_minimum = rows.iter().all(|r| largest.relative_gap <= r.relative_gap);
    let fitted_constant = if gw.root > 0.0 { largest.cgw / gw.root } else { limit_constant };
    let diameter = nx.kernel().iter().chain(ny.kernel().iter()).fold(0.0f64, |a, &b| a.max(b));
    let mut tail: Vec<&DeltaRow> = rows.iter().filter(|r| r.delta >= diameter).collect();
    tail.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let mut inversions = 0;
    let mut nearly_monotone = true;
    for w in tail.windows(2) {
        if w[1].relative_gap > w[0].relative_gap {
            inversions += 1;
            let excess = w[1].relative_gap - w[0].relative_gap;
            if inversions > 1 || excess > 0.1 * w[0].relative_gap.max(f64::MIN_POSITIVE) {
                nearly_monotone = false;
            }
        }
    }
    Ok(DeltaSweep {
        gw2: gw.value,
        gw2_root: gw.root,
        limit_constant,
        fitted_constant,
        largest_is_minimum,
        nearly_monotone,
        pass: largest_is_minimum,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub uot_bound: f64,
    pub ccot: f64,
    pub cgw: f64,
    pub gw2: f64,
    pub gw2_root: f64,
    /// `√2` for the truncated cosine, `2` for the Gaussian.
    pub kappa: f64,
    pub slack: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// `UOT - slack ≤ CCOT ≤ CGW ≤ κ·√E + slack` on a pair of probability
/// networks, with `√E` the unhalved GW root.
///
/// CCOT is the ascent value, CGW the better of the symmetric candidate the
/// ascent produces and the symmetric GW coupling `(π, π)`.
pub fn verify_bound_sandwich(
    nx: &DiscreteMeasureNetwork,
    ny: &DiscreteMeasureNetwork,
    config: &SolverConfig,
) -> Result<SandwichReport> {
    require_unit_mass(nx, "first network")?;
    require_unit_mass(ny, "second network")?;
    let gw = gw2_solve(nx, ny, &BaselineConfig { seed: config.seed, ..Default::default() })?;
    let start = coupling_pair(gw.coupling.plan.view(), nx.weights(), ny.weights());
    let sol = cgw_solve_with_starts(nx, ny, config, &[start.clone()])?;
    let at_gw = cgw_distance_of_pair(nx, ny, &start, config)?;
    let ccot = sol.distance;
    let cgw = sol.report.cgw_upper.unwrap_or(sol.distance).min(at_gw);
    let uot_bound = cgw_lower_bound(nx, ny, &config.kernel, &UotConfig::default())?;
    let kappa = match config.kernel.family() {
        crate::cone::KernelFamily::TruncatedCosine => std::f64::consts::SQRT_2,
        crate::cone::KernelFamily::Gaussian => 2.0,
    };
    let upper = kappa * gw.root;
    let slack = slack(uot_bound.max(ccot).max(cgw).max(upper));
    let checks = vec![
        Check::new("uot_below_ccot", uot_bound - slack, ccot),
        Check::new("ccot_below_cgw", ccot, cgw),
        Check::new("cgw_below_gw", cgw, upper + slack),
    ];
    Ok(SandwichReport {
        uot_bound,
        ccot,
        cgw,
        gw2: gw.value,
        gw2_root: gw.root,
        kappa,
        slack,
        pass: all_pass(&checks),
        checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessTrial {
    pub seed: u64,
    pub tv: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessReport {
    pub eps: f64,
    pub bound: f64,
    pub trials: Vec<RobustnessTrial>,
    pub violations: usize,
    pub worst_margin: f64,
    pub pass: bool,
}

/// `2δ m √(ε² + 4ε)`: how far a multiplicative ε-reweighting can move a
/// network of mass `m`.
pub fn robustness_bound(delta: f64, mass: f64, eps: f64) -> f64 {
    2.0 * delta * mass * (eps * eps + 4.0 * eps).sqrt()
}

/// Distance between a network and `trials` multiplicative ε-reweightings
/// of it, each solve seeded with `(diag(μ), diag(μ'))`.
pub fn robustness_probe(
    net: &DiscreteMeasureNetwork,
    eps: f64,
    trials: usize,
    config: &SolverConfig,
) -> Result<RobustnessReport> {
    let bound = robustness_bound(config.kernel.delta(), net.mass(), eps);
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let seed = config.seed.wrapping_add(t as u64);
        let perturbed = perturb_measure(net, eps, PerturbMode::Multiplicative, seed)?;
        let diag = diagonal_pair(net.weights(), perturbed.weights())?;
        let sol = cgw_solve_with_starts(net, &perturbed, config, &[diag])?;
        let tv = (net.weights() - perturbed.weights()).mapv(f64::abs).sum();
        out.push(RobustnessTrial { seed, tv, distance: sol.distance });
    }
    let violations = out.iter().filter(|t| t.distance > bound).count();
    let worst_margin = out.iter().map(|t| bound - t.distance).fold(f64::INFINITY, f64::min);
    Ok(RobustnessReport {
        eps,
        bound,
        trials: out,
        violations,
        worst_margin,
        pass: violations == 0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FragilityReport {
    pub eps: f64,
    pub target: f64,
    /// Separation of the two points of the perturbed network.
    pub separation: f64,
    pub clean: f64,
    pub perturbed: f64,
    /// `√((1-ε)ε/2)·d` evaluated directly.
    pub closed_form: f64,
    /// The CGW robustness bound at δ = ½ for the same ε, for contrast.
    pub cgw_bound: f64,
    pub pass: bool,
}

/// GW₂ jumps under an ε-reweighting: a point against a point is at
/// distance 0, but moving ε of the mass onto a second point at distance
/// `d = √(2 / ((1-ε)ε))·f` puts the networks at GW₂ distance exactly `f`.
pub fn gw_fragility_demo(eps: f64, f_eps: f64) -> Result<FragilityReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidConfig(format!("ε = {eps} outside (0, 1)")));
    }
    if !(f_eps >= 0.0 && f_eps.is_finite()) {
        return Err(Error::NonFinite(f_eps));
    }
    let d = (2.0 / ((1.0 - eps) * eps)).sqrt() * f_eps;
    let kernel = vec![vec![0.0, d], vec![d, 0.0]];
    let point = DiscreteMeasureNetwork::from_vecs(vec![1.0], vec![vec![0.0]])?;
    let clean_net = DiscreteMeasureNetwork::from_vecs(vec![1.0, 0.0], kernel.clone())?;
    let moved = DiscreteMeasureNetwork::from_vecs(vec![1.0 - eps, eps], kernel)?;
    let cfg = BaselineConfig::default();
    let clean = gw2_solve(&clean_net, &point, &cfg)?.value;
    let perturbed = gw2_solve(&moved, &point, &cfg)?.value;
    let only = Array2::from_shape_vec((2, 1), vec![1.0 - eps, eps]).expect("2x1");
    let closed_form = 0.5 * gw2_objective(&moved, &point, only.view()).sqrt();
    let pass = clean == 0.0 && (perturbed - f_eps).abs() <= 1e-6 && (closed_form - f_eps).abs() <= 1e-6;
    Ok(FragilityReport {
        eps,
        target: f_eps,
        separation: d,
        clean,
        perturbed,
        closed_form,
        cgw_bound: robustness_bound(0.5, 1.0, eps),
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakIsoReport {
    pub permutation: Vec<usize>,
    pub split_index: usize,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub const WEAK_ISO_TOL: f64 = 1e-5;

/// Relabelling plan between `net` and `net.permuted(perm)`.
fn permutation_pair(net: &DiscreteMeasureNetwork, perm: &[usize], other: &DiscreteMeasureNetwork) -> SemiCouplingPair {
    let n = net.len();
    let mut pi = Array2::zeros((n, n));
    for (i, &p) in perm.iter().enumerate() {
        pi[[p, i]] = net.weights()[p];
    }
    coupling_pair(pi.view(), net.weights(), other.weights())
}

/// Plan sending point `index` onto itself and its appended copy.
pub fn split_pair(net: &DiscreteMeasureNetwork, index: usize, split: &DiscreteMeasureNetwork) -> SemiCouplingPair {
    let n = net.len();
    let mut pi = Array2::zeros((n, n + 1));
    for i in 0..n {
        pi[[i, i]] = split.weights()[i];
    }
    pi[[index, n]] = split.weights()[n];
    coupling_pair(pi.view(), net.weights(), split.weights())
}

/// Distance from `net` to a random relabelling of it and to the network
/// obtained by splitting a random point into two colocated halves.
pub fn weak_iso_probe(net: &DiscreteMeasureNetwork, config: &SolverConfig) -> Result<WeakIsoReport> {
    if net.is_empty() {
        return Err(Error::InvalidConfig("network has no points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut perm: Vec<usize> = (0..net.len()).collect();
    perm.shuffle(&mut rng);
    let permuted = net.permuted(&perm)?;
    let p_start = permutation_pair(net, &perm, &permuted);
    let p = cgw_solve_with_starts(net, &permuted, config, &[p_start])?;

    let index = rng.random_range(0..net.len());
    let split = net.split_point(index, 0.5)?;
    let s_start = split_pair(net, index, &split);
    let s = cgw_solve_with_starts(net, &split, config, &[s_start])?;

    let checks = vec![
        Check::new("permutation", p.distance, WEAK_ISO_TOL),
        Check::new("split", s.distance, WEAK_ISO_TOL),
    ];
    Ok(WeakIsoReport {
        permutation: perm,
        split_index: index,
        pass: all_pass(&checks),
        checks,
    })
}

/// A GW coupling between two probability networks as an injectable start.
pub fn gw_start(nx: &DiscreteMeasureNetwork, ny: &DiscreteMeasureNetwork, seed: u64) -> Result<SemiCouplingPair> {
    let gw = gw2_solve_with_starts(nx, ny, &BaselineConfig { seed, ..Default::default() }, &[])?;
    Ok(coupling_pair(gw.coupling.plan.view(), nx.weights(), ny.weights()))
}

/// Uniform probability weights on `n` points.
pub fn uniform_weights(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}
