//! Block coordinate ascent for the CCOT objective
//! `F(A, B, A', B') = Σ Ω_ijkl sqrt(A_ik B_ik A'_jl B'_jl)`
//! and the CGW distance obtained by embedding networks as hypernetworks.
//!
//! Each of the four blocks has a closed-form maximizer given the other three
//! (a Cauchy-Schwarz argument on each row or column), so a sweep
//! `A -> B -> A' -> B'` never decreases `F`. A sweep costs two tensor
//! contractions: `P` is shared by the `A` and `B` updates, `Q` by the primed
//! updates, and `F` after the sweep is read off `Q` for free.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accel::extrapolate;
use crate::cone::{kernel_pd_check, ConeKernel, PD_CHECK_CAP, PD_THRESHOLD};
use crate::error::{Error, Result};
use crate::network::{DiscreteMeasureHypernetwork, DiscreteMeasureNetwork, SemiCouplingPair};
use crate::tensor::{DistortionTensor, Side, TensorMode, TensorPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Product,
    ProductJittered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    A,
    B,
    APrime,
    BPrime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kernel: ConeKernel,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Number of starts from the configured initialization and its jittered
    /// variants; at least one start always runs.
    pub restarts: usize,
    pub seed: u64,
    pub init: InitKind,
    pub tensor_policy: TensorPolicy,
    pub negative_clamp: f64,
    /// Try an extrapolated point every two sweeps (kept only if it helps).
    pub accelerate: bool,
}

impl SolverConfig {
    pub fn new(kernel: ConeKernel) -> Self {
        Self {
            kernel,
            max_iters: 1000,
            rel_tol: 1e-9,
            restarts: 4,
            seed: 0,
            init: InitKind::Product,
            tensor_policy: TensorPolicy::default(),
            negative_clamp: 1e-12,
            accelerate: true,
        }
    }

    pub fn with_kernel(mut self, kernel: ConeKernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_iters(mut self, max_iters: usize, rel_tol: f64) -> Self {
        self.max_iters = max_iters;
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_policy(mut self, policy: TensorPolicy) -> Self {
        self.tensor_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.negative_clamp >= 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// The sample pair `(A, B)` and the feature pair `(A', B')`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiCouplingQuadruple {
    pub samples: SemiCouplingPair,
    pub features: SemiCouplingPair,
}

impl SemiCouplingQuadruple {
    pub fn zeros(hx: &DiscreteMeasureHypernetwork, hy: &DiscreteMeasureHypernetwork) -> Self {
        Self {
            samples: SemiCouplingPair::zeros(hx.sample_weights().clone(), hy.sample_weights().clone()),
            features: SemiCouplingPair::zeros(
                hx.feature_weights().clone(),
                hy.feature_weights().clone(),
            ),
        }
    }

    /// `(A, B, A, B)`: the same pair on both sides, as used for networks.
    pub fn symmetric(pair: SemiCouplingPair) -> Self {
        Self {
            features: pair.clone(),
            samples: pair,
        }
    }

    pub fn scaled(&self, r: f64) -> Self {
        Self {
            samples: self.samples.scaled(r),
            features: self.features.scaled(r),
        }
    }

    pub fn check_feasible(&self, tol: f64) -> Result<()> {
        self.samples.check_feasible(tol)?;
        self.features.check_feasible(tol)
    }

    /// `‖A - A'‖² + ‖B - B'‖²` when both pairs have the same shape.
    pub fn frobenius_gap(&self) -> Option<f64> {
        if self.samples.shape() != self.features.shape() {
            return None;
        }
        let sq = |x: &Array2<f64>, y: &Array2<f64>| -> f64 {
            x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        Some(
            sq(&self.samples.row_plan, &self.features.row_plan)
                + sq(&self.samples.col_plan, &self.features.col_plan),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub distance: f64,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub frobenius_gap_trace: Vec<f64>,
    pub frobenius_gap: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub best_restart: usize,
    pub restart_objectives: Vec<f64>,
    pub quantization_uncertainty: f64,
    pub tensor_mode: TensorMode,
    /// Set by the network solver: the gap vanished and the pairing kernel
    /// passed the positive-definiteness check.
    pub equality_certified: Option<bool>,
    /// Distance evaluated at the best symmetric candidate `(A, B, A, B)`
    /// built from the solution; an upper estimate of the network distance.
    pub cgw_upper: Option<f64>,
    pub degenerate: bool,
    pub wall_time: f64,
    pub seed: u64,
    pub config: SolverConfig,
}

/// Total masses `(m_X, m_X', m_Y, m_Y')`.
fn masses(hx: &DiscreteMeasureHypernetwork, hy: &DiscreteMeasureHypernetwork) -> (f64, f64, f64, f64) {
    (hx.sample_mass(), hx.feature_mass(), hy.sample_mass(), hy.feature_mass())
}

fn check_dims(quad: &SemiCouplingQuadruple, tensor: &DistortionTensor) -> Result<()> {
    let (n, np, m, mp) = tensor.dims();
    let ok = quad.samples.row_plan.dim() == (n, m)
        && quad.samples.col_plan.dim() == (n, m)
        && quad.features.row_plan.dim() == (np, mp)
        && quad.features.col_plan.dim() == (np, mp);
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "quadruple shapes {:?}/{:?} do not match tensor {:?}",
            quad.samples.shape(),
            quad.features.shape(),
            tensor.dims()
        )))
    }
}

pub fn objective_f(quad: &SemiCouplingQuadruple, tensor: &DistortionTensor) -> Result<f64> {
    check_dims(quad, tensor)?;
    let p = tensor.contract(Side::Sample, quad.features.matching().view())?;
    Ok(weighted_sum(&quad.samples.matching(), &p))
}

fn weighted_sum(m: &Array2<f64>, p: &Array2<f64>) -> f64 {
    // row-by-row pairwise accumulation keeps the rounding error small
    m.outer_iter()
        .zip(p.outer_iter())
        .map(|(a, b)| a.dot(&b))
        .sum()
}

/// `sqrt(max(0, 4δ²(m_X m_X' + m_Y m_Y') - 8δ² F))`.
pub fn ccot_distance_from_objective(
    f_star: f64,
    masses: (f64, f64, f64, f64),
    delta: f64,
    negative_clamp: f64,
) -> Result<f64> {
    let (mx, mxp, my, myp) = masses;
    let mass_term = 4.0 * delta * delta * (mx * mxp + my * myp);
    let sq = mass_term - 8.0 * delta * delta * f_star;
    if sq >= 0.0 {
        Ok(sq.sqrt())
    } else if sq >= -negative_clamp * mass_term.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeSquaredDistance(sq))
    }
}

/// Masks of `(i, k)` and `(j, l)` whose tensor slices do not vanish.
#[derive(Debug, Clone)]
struct SupportMasks {
    samples: Array2<bool>,
    features: Array2<bool>,
}

impl SupportMasks {
    fn new(tensor: &DistortionTensor) -> Self {
        Self {
            samples: tensor.sample_slice_sums().mapv(|s| s > 0.0),
            features: tensor.feature_slice_sums().mapv(|s| s > 0.0),
        }
    }

    fn all_zero(&self) -> bool {
        !self.samples.iter().any(|&b| b) || !self.features.iter().any(|&b| b)
    }
}

fn rescale_rows(plan: &mut Array2<f64>, marginal: &Array1<f64>) {
    for (mut row, &a) in plan.outer_iter_mut().zip(marginal) {
        let s = row.sum();
        if s > 0.0 {
            let f = a / s;
            row.mapv_inplace(|v| v * f);
        }
    }
}

fn rescale_cols(plan: &mut Array2<f64>, marginal: &Array1<f64>) {
    for (mut col, &b) in plan.axis_iter_mut(Axis(1)).zip(marginal) {
        let s = col.sum();
        if s > 0.0 {
            let f = b / s;
            col.mapv_inplace(|v| v * f);
        }
    }
}

fn project_pair(pair: &mut SemiCouplingPair, mask: &Array2<bool>) {
    Zip::from(&mut pair.row_plan)
        .and(&mut pair.col_plan)
        .and(mask)
        .for_each(|a, b, &keep| {
            if !keep {
                *a = 0.0;
                *b = 0.0;
            }
        });
    rescale_rows(&mut pair.row_plan, &pair.row_marginal);
    rescale_cols(&mut pair.col_plan, &pair.col_marginal);
}

fn project_with(quad: &mut SemiCouplingQuadruple, masks: &SupportMasks) {
    project_pair(&mut quad.samples, &masks.samples);
    project_pair(&mut quad.features, &masks.features);
}

/// Zeroes entries whose tensor slice vanishes and rescales surviving rows of
/// `A`, `A'` and columns of `B`, `B'` to their marginals. Never decreases `F`.
pub fn project_to_gamma_bar(
    quad: &SemiCouplingQuadruple,
    tensor: &DistortionTensor,
) -> Result<SemiCouplingQuadruple> {
    check_dims(quad, tensor)?;
    let mut out = quad.clone();
    project_with(&mut out, &SupportMasks::new(tensor));
    Ok(out)
}

fn product_pair(a: &Array1<f64>, b: &Array1<f64>) -> SemiCouplingPair {
    let (sa, sb) = (a.sum(), b.sum());
    let outer = Array2::from_shape_fn((a.len(), b.len()), |(i, k)| a[i] * b[k]);
    SemiCouplingPair {
        row_plan: if sb > 0.0 { outer.mapv(|v| v / sb) } else { Array2::zeros(outer.dim()) },
        col_plan: if sa > 0.0 { outer.mapv(|v| v / sa) } else { Array2::zeros(outer.dim()) },
        row_marginal: a.clone(),
        col_marginal: b.clone(),
    }
}

fn jitter_pair(pair: &mut SemiCouplingPair, rng: &mut ChaCha8Rng) {
    for plan in [&mut pair.row_plan, &mut pair.col_plan] {
        plan.mapv_inplace(|v| v * (1.0 + rng.random_range(-0.1..=0.1)));
    }
}

fn init_with(
    hx: &DiscreteMeasureHypernetwork,
    hy: &DiscreteMeasureHypernetwork,
    kind: InitKind,
    seed: u64,
    masks: &SupportMasks,
) -> Result<SemiCouplingQuadruple> {
    if masks.all_zero() {
        return Err(Error::AllMassForcedZero);
    }
    let mut quad = SemiCouplingQuadruple {
        samples: product_pair(hx.sample_weights(), hy.sample_weights()),
        features: product_pair(hx.feature_weights(), hy.feature_weights()),
    };
    if kind == InitKind::ProductJittered {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        jitter_pair(&mut quad.samples, &mut rng);
        jitter_pair(&mut quad.features, &mut rng);
    }
    project_with(&mut quad, masks);
    Ok(quad)
}

/// Interior starting point in the projected feasible set.
pub fn init_interior(
    hx: &DiscreteMeasureHypernetwork,
    hy: &DiscreteMeasureHypernetwork,
    tensor: &DistortionTensor,
    config: &SolverConfig,
) -> Result<SemiCouplingQuadruple> {
    init_with(hx, hy, config.init, config.seed, &SupportMasks::new(tensor))
}

/// Row-normalized maximizer `E_r· ∝ other_r· * p_r·²`, scaled to `marginal_r`.
fn maximize_rows(marginal: &Array1<f64>, other: &Array2<f64>, p: &Array2<f64>) -> Array2<f64> {
    let mut out = other * &p.mapv(|v| v * v);
    for (mut row, &a) in out.outer_iter_mut().zip(marginal) {
        let s = row.sum();
        if s > 0.0 {
            let f = a / s;
            row.mapv_inplace(|v| v * f);
        } else {
            row.fill(0.0);
        }
    }
    out
}

fn maximize_cols(marginal: &Array1<f64>, other: &Array2<f64>, p: &Array2<f64>) -> Array2<f64> {
    let mut out = other * &p.mapv(|v| v * v);
    for (mut col, &b) in out.axis_iter_mut(Axis(1)).zip(marginal) {
        let s = col.sum();
        if s > 0.0 {
            let f = b / s;
            col.mapv_inplace(|v| v * f);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Closed-form maximizer of one block with the other three held fixed.
pub fn update_block(
    block: Block,
    quad: &SemiCouplingQuadruple,
    tensor: &DistortionTensor,
) -> Result<Array2<f64>> {
    check_dims(quad, tensor)?;
    let s = &quad.samples;
    let f = &quad.features;
    Ok(match block {
        Block::A | Block::B => {
            let p = tensor.contract(Side::Sample, f.matching().view())?;
            if block == Block::A {
                maximize_rows(&s.row_marginal, &s.col_plan, &p)
            } else {
                maximize_cols(&s.col_marginal, &s.row_plan, &p)
            }
        }
        Block::APrime | Block::BPrime => {
            let q = tensor.contract(Side::Feature, s.matching().view())?;
            if block == Block::APrime {
                maximize_rows(&f.row_marginal, &f.col_plan, &q)
            } else {
                maximize_cols(&f.col_marginal, &f.row_plan, &q)
            }
        }
    })
}

/// Variant of the `B'` update with `B'` itself in the numerator, kept only to
/// document that it is not an ascent step.
#[doc(hidden)]
pub fn update_b_prime_self_weighted(
    quad: &SemiCouplingQuadruple,
    tensor: &DistortionTensor,
) -> Result<Array2<f64>> {
    check_dims(quad, tensor)?;
    let f = &quad.features;
    let q = tensor.contract(Side::Feature, quad.samples.matching().view())?;
    let q2 = q.mapv(|v| v * v);
    let denom = (&f.row_plan * &q2).sum_axis(Axis(0));
    let mut out = &f.col_plan * &q2;
    for ((mut col, &b), &d) in out.axis_iter_mut(Axis(1)).zip(&f.col_marginal).zip(&denom) {
        if d > 0.0 {
            col.mapv_inplace(|v| v * b / d);
        } else {
            col.fill(0.0);
        }
    }
    Ok(out)
}

struct RunOutcome {
    quad: SemiCouplingQuadruple,
    objective: f64,
    trace: Vec<f64>,
    gaps: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// One cyclic sweep `A -> B -> A' -> B'`; returns `F` after the sweep.
fn sweep(quad: &mut SemiCouplingQuadruple, tensor: &DistortionTensor) -> Result<f64> {
    let p = tensor.contract(Side::Sample, quad.features.matching().view())?;
    let s = &mut quad.samples;
    s.row_plan = maximize_rows(&s.row_marginal, &s.col_plan, &p);
    s.col_plan = maximize_cols(&s.col_marginal, &s.row_plan, &p);
    let q = tensor.contract(Side::Feature, s.matching().view())?;
    let fe = &mut quad.features;
    fe.row_plan = maximize_rows(&fe.row_marginal, &fe.col_plan, &q);
    fe.col_plan = maximize_cols(&fe.col_marginal, &fe.row_plan, &q);
    Ok(weighted_sum(&fe.matching(), &q))
}

fn plans(quad: &SemiCouplingQuadruple) -> [&Array2<f64>; 4] {
    [
        &quad.samples.row_plan,
        &quad.samples.col_plan,
        &quad.features.row_plan,
        &quad.features.col_plan,
    ]
}

fn with_plans(template: &SemiCouplingQuadruple, mut plans: Vec<Array2<f64>>) -> SemiCouplingQuadruple {
    let mut out = template.clone();
    out.features.col_plan = plans.pop().expect("four plans");
    out.features.row_plan = plans.pop().expect("four plans");
    out.samples.col_plan = plans.pop().expect("four plans");
    out.samples.row_plan = plans.pop().expect("four plans");
    out
}

/// Cyclic sweeps from a projected start until the relative change of `F`
/// between consecutive iterates drops below the tolerance.
///
/// Plain sweeps converge only linearly, and very slowly when kernel values
/// nearly coincide or `δ` is large. Every two sweeps an extrapolated point
/// is tried (SQUAREM on log-entries); it is kept only when the sweep from it
/// does not lower `F`, so the recorded objective never decreases.
fn ascend(
    mut quad: SemiCouplingQuadruple,
    tensor: &DistortionTensor,
    config: &SolverConfig,
    track_gap: bool,
) -> Result<RunOutcome> {
    let mut f = objective_f(&quad, tensor)?;
    let mut trace = vec![f];
    let mut gaps = Vec::new();
    if track_gap {
        gaps.extend(quad.frobenius_gap());
    }
    let mut converged = false;
    let mut iterations = 0;
    let mut max_step = 1.0f64;
    let settled = |old: f64, new: f64| (new - old).abs() <= config.rel_tol * new.abs() || new == 0.0;
    let record = |q: &SemiCouplingQuadruple, value: f64, trace: &mut Vec<f64>, gaps: &mut Vec<f64>| {
        trace.push(value);
        if track_gap {
            gaps.extend(q.frobenius_gap());
        }
    };
    'outer: while iterations < config.max_iters {
        let x0 = quad.clone();
        let mut x1 = x0.clone();
        let f1 = sweep(&mut x1, tensor)?;
        iterations += 1;
        record(&x1, f1, &mut trace, &mut gaps);
        if settled(f, f1) || iterations >= config.max_iters || !config.accelerate {
            converged = settled(f, f1);
            quad = x1;
            f = f1;
            if converged {
                break;
            }
            continue;
        }
        let mut x2 = x1.clone();
        let f2 = sweep(&mut x2, tensor)?;
        iterations += 1;
        record(&x2, f2, &mut trace, &mut gaps);
        if settled(f1, f2) || iterations >= config.max_iters {
            converged = settled(f1, f2);
            quad = x2;
            f = f2;
            if converged {
                break 'outer;
            }
            continue;
        }
        quad = x2;
        f = f2;
        if let Some((jumped, step)) = extrapolate(&plans(&x0), &plans(&x1), &plans(&quad), max_step) {
            let mut x3 = with_plans(&quad, jumped);
            let f3 = sweep(&mut x3, tensor)?;
            iterations += 1;
            if f3 >= f {
                record(&x3, f3, &mut trace, &mut gaps);
                let done = settled(f, f3);
                quad = x3;
                f = f3;
                if step >= max_step {
                    max_step *= 4.0;
                }
                if done {
                    converged = true;
                    break;
                }
            } else {
                max_step = (max_step / 4.0).max(1.0);
            }
        }
    }
    Ok(RunOutcome {
        quad,
        objective: f,
        trace,
        gaps,
        iterations,
        converged,
    })
}

/// Everything a solve needs besides the inputs.
struct Problem<'a> {
    hx: &'a DiscreteMeasureHypernetwork,
    hy: &'a DiscreteMeasureHypernetwork,
    tensor: DistortionTensor,
    masks: SupportMasks,
}

impl<'a> Problem<'a> {
    fn new(
        hx: &'a DiscreteMeasureHypernetwork,
        hy: &'a DiscreteMeasureHypernetwork,
        config: &SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        let tensor = DistortionTensor::build(hx, hy, &config.kernel, &config.tensor_policy)?;
        let masks = SupportMasks::new(&tensor);
        Ok(Self { hx, hy, tensor, masks })
    }
}

fn solve_problem(
    problem: &Problem,
    config: &SolverConfig,
    extra_starts: &[SemiCouplingQuadruple],
    track_gap: bool,
) -> Result<(f64, SemiCouplingQuadruple, SolverReport)> {
    let started = Instant::now();
    let (hx, hy, tensor) = (problem.hx, problem.hy, &problem.tensor);
    let mass = masses(hx, hy);
    let delta = config.kernel.delta();
    for start in extra_starts {
        check_dims(start, tensor)?;
    }
    let base_report = |distance: f64| SolverReport {
        distance,
        objective: 0.0,
        objective_trace: vec![0.0],
        frobenius_gap_trace: Vec::new(),
        frobenius_gap: None,
        iterations: 0,
        converged: true,
        best_restart: 0,
        restart_objectives: Vec::new(),
        quantization_uncertainty: 0.0,
        tensor_mode: tensor.mode(),
        equality_certified: None,
        cgw_upper: None,
        degenerate: true,
        wall_time: 0.0,
        seed: config.seed,
        config: *config,
    };
    if problem.masks.all_zero() {
        // no pair of entries can be matched, so F = 0 is optimal
        let distance = ccot_distance_from_objective(0.0, mass, delta, config.negative_clamp)?;
        let mut report = base_report(distance);
        report.wall_time = started.elapsed().as_secs_f64();
        return Ok((distance, SemiCouplingQuadruple::zeros(hx, hy), report));
    }

    let runs = config.restarts.max(1);
    let mut starts = Vec::with_capacity(runs + extra_starts.len());
    for r in 0..runs {
        let (kind, seed) = if r == 0 {
            (config.init, config.seed)
        } else {
            (InitKind::ProductJittered, config.seed.wrapping_add(r as u64))
        };
        starts.push(init_with(hx, hy, kind, seed, &problem.masks)?);
    }
    for start in extra_starts {
        let mut s = start.clone();
        project_with(&mut s, &problem.masks);
        starts.push(s);
    }
    let outcomes: Vec<RunOutcome> = starts
        .into_par_iter()
        .map(|s| ascend(s, tensor, config, track_gap))
        .collect::<Result<_>>()?;
    let restart_objectives: Vec<f64> = outcomes.iter().map(|o| o.objective).collect();
    let best_restart = (0..outcomes.len())
        .fold(0, |best, r| if restart_objectives[r] > restart_objectives[best] { r } else { best });
    let best = outcomes.into_iter().nth(best_restart).expect("at least one start");
    let distance = ccot_distance_from_objective(best.objective, mass, delta, config.negative_clamp)?;
    let quantization_uncertainty = tensor.quantization_error()
        * best.quad.samples.matching().sum()
        * best.quad.features.matching().sum();
    let report = SolverReport {
        distance,
        objective: best.objective,
        frobenius_gap: best.gaps.last().copied(),
        objective_trace: best.trace,
        frobenius_gap_trace: best.gaps,
        iterations: best.iterations,
        converged: best.converged,
        best_restart,
        restart_objectives,
        quantization_uncertainty,
        tensor_mode: tensor.mode(),
        equality_certified: None,
        cgw_upper: None,
        degenerate: false,
        wall_time: started.elapsed().as_secs_f64(),
        seed: config.seed,
        config: *config,
    };
    Ok((distance, best.quad, report))
}

/// CCOT distance between two hypernetworks by multi-start block coordinate ascent.
pub fn bca_solve(
    hx: &DiscreteMeasureHypernetwork,
    hy: &DiscreteMeasureHypernetwork,
    config: &SolverConfig,
) -> Result<(f64, SemiCouplingQuadruple, SolverReport)> {
    bca_solve_with_starts(hx, hy, config, &[])
}

/// As [`bca_solve`], with additional caller-provided starting points that
/// compete with the regular restarts (indices after them).
pub fn bca_solve_with_starts(
    hx: &DiscreteMeasureHypernetwork,
    hy: &DiscreteMeasureHypernetwork,
    config: &SolverConfig,
    extra_starts: &[SemiCouplingQuadruple],
) -> Result<(f64, SemiCouplingQuadruple, SolverReport)> {
    let problem = Problem::new(hx, hy, config)?;
    solve_problem(&problem, config, extra_starts, false)
}

/// Outcome of a network solve: the final quadruple is kept for diagnostics.
#[derive(Debug, Clone)]
pub struct CgwSolution {
    pub distance: f64,
    pub quad: SemiCouplingQuadruple,
    pub report: SolverReport,
}

/// CGW estimate between two networks.
pub fn cgw_solve(
    nx: &DiscreteMeasureNetwork,
    ny: &DiscreteMeasureNetwork,
    config: &SolverConfig,
) -> Result<(f64, SolverReport)> {
    let sol = cgw_solve_with_starts(nx, ny, config, &[])?;
    Ok((sol.distance, sol.report))
}

/// Network solve with injected feasible semi-coupling pairs, each used as
/// the symmetric start `(A, B, A, B)`.
pub fn cgw_solve_with_starts(
    nx: &DiscreteMeasureNetwork,
    ny: &DiscreteMeasureNetwork,
    config: &SolverConfig,
    starts: &[SemiCouplingPair],
) -> Result<CgwSolution> {
    let hx = nx.to_hypernetwork();
    let hy = ny.to_hypernetwork();
    let problem = Problem::new(&hx, &hy, config)?;
    let extra: Vec<SemiCouplingQuadruple> =
        starts.iter().cloned().map(SemiCouplingQuadruple::symmetric).collect();
    let (distance, quad, mut report) = solve_problem(&problem, config, &extra, true)?;

    let mass = masses(&hx, &hy);
    let delta = config.kernel.delta();
    let sym_objective = [&quad.samples, &quad.features]
        .into_iter()
        .map(|pair| objective_f(&SemiCouplingQuadruple::symmetric(pair.clone()), &problem.tensor))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    report.cgw_upper = Some(
        ccot_distance_from_objective(sym_objective, mass, delta, config.negative_clamp)?
            .max(distance),
    );

    let norm = quad.samples.row_plan.iter().map(|v| v * v).sum::<f64>()
        + quad.samples.col_plan.iter().map(|v| v * v).sum::<f64>();
    let gap_ok = report.degenerate || report.frobenius_gap.is_some_and(|g| g < 1e-10 * norm.max(f64::MIN_POSITIVE));
    let pd_ok = match kernel_pd_check(&config.kernel, nx.kernel(), ny.kernel(), PD_CHECK_CAP) {
        Ok(min_eig) => min_eig >= PD_THRESHOLD,
        Err(Error::SizeCapExceeded { .. }) => true,
        Err(e) => return Err(e),
    };
    report.equality_certified = Some(gap_ok && pd_ok);
    Ok(CgwSolution {
        distance,
        quad,
        report,
    })
}

/// `F(A, B, A, B)` for a single network-level pair; the quantity maximized
/// by the CGW distance itself.
pub fn cgw_objective(
    pair: &SemiCouplingPair,
    tensor: &DistortionTensor,
) -> Result<f64> {
    objective_f(&SemiCouplingQuadruple::symmetric(pair.clone()), tensor)
}

/// Builds the tensor a network pair induces; convenient for oracles that
/// evaluate objectives directly.
pub fn network_tensor(
    nx: &DiscreteMeasureNetwork,
    ny: &DiscreteMeasureNetwork,
    kernel: &ConeKernel,
    policy: &TensorPolicy,
) -> Result<DistortionTensor> {
    DistortionTensor::from_kernels(nx.kernel().view(), ny.kernel().view(), kernel, policy)
}

/// Distance implied by a network-level pair, `sqrt(4δ²(m_X² + m_Y²) - 8δ² F(A,B,A,B))`.
pub fn cgw_distance_of_pair(
    nx: &DiscreteMeasureNetwork,
    ny: &DiscreteMeasureNetwork,
    pair: &SemiCouplingPair,
    config: &SolverConfig,
) -> Result<f64> {
    let tensor = network_tensor(nx, ny, &config.kernel, &config.tensor_policy)?;
    let f = cgw_objective(pair, &tensor)?;
    let (mx, my) = (nx.mass(), ny.mass());
    ccot_distance_from_objective(f, (mx, mx, my, my), config.kernel.delta(), config.negative_clamp)
}

/// Diagonal semi-coupling between two measures on the same support:
/// `A = diag(a)`, `B = diag(b)`.
pub fn diagonal_pair(a: &Array1<f64>, b: &Array1<f64>) -> Result<SemiCouplingPair> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(SemiCouplingPair {
        row_plan: Array2::from_diag(a),
        col_plan: Array2::from_diag(b),
        row_marginal: a.clone(),
        col_marginal: b.clone(),
    })
}

/// The pair `(π, π)` for a balanced coupling `π` between the two measures.
pub fn coupling_pair(pi: ArrayView2<f64>, a: &Array1<f64>, b: &Array1<f64>) -> SemiCouplingPair {
    SemiCouplingPair {
        row_plan: pi.to_owned(),
        col_plan: pi.to_owned(),
        row_marginal: a.clone(),
        col_marginal: b.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn gauss() -> ConeKernel {
        ConeKernel::gaussian(0.5).unwrap()
    }

    fn rand_hyper(rng: &mut ChaCha8Rng, n: usize, np: usize) -> DiscreteMeasureHypernetwork {
        let a = Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0));
        let ap = Array1::from_shape_fn(np, |_| rng.random_range(0.1..1.0));
        let k = Array2::from_shape_fn((n, np), |_| rng.random_range(0.0..1.5));
        DiscreteMeasureHypernetwork::new(a, ap, k).unwrap()
    }

    fn rand_quad(rng: &mut ChaCha8Rng, hx: &DiscreteMeasureHypernetwork, hy: &DiscreteMeasureHypernetwork) -> SemiCouplingQuadruple {
        let mut q = SemiCouplingQuadruple::zeros(hx, hy);
        for pair in [&mut q.samples, &mut q.features] {
            pair.row_plan.mapv_inplace(|_| rng.random_range(0.0..1.0));
            pair.col_plan.mapv_inplace(|_| rng.random_range(0.0..1.0));
            // shrink into the inequality constraints
            rescale_rows(&mut pair.row_plan, &pair.row_marginal.mapv(|v| 0.7 * v));
            rescale_cols(&mut pair.col_plan, &pair.col_marginal.mapv(|v| 0.7 * v));
        }
        q
    }

    #[test]
    fn objective_single_entry() {
        let k = gauss();
        let hx = DiscreteMeasureHypernetwork::new(array![1.0], array![1.0], array![[0.0]]).unwrap();
        let hy = DiscreteMeasureHypernetwork::new(array![1.0], array![1.0], array![[0.6]]).unwrap();
        let t = DistortionTensor::build(&hx, &hy, &k, &TensorPolicy::default()).unwrap();
        let q = SemiCouplingQuadruple::symmetric(diagonal_pair(&array![1.0], &array![1.0]).unwrap());
        let f = objective_f(&q, &t).unwrap();
        assert!((f - k.omega_between(0.0, 0.6)).abs() < 1e-15);
        let mut zero_b = q.clone();
        zero_b.samples.col_plan.fill(0.0);
        assert_eq!(objective_f(&zero_b, &t).unwrap(), 0.0);
    }

    #[test]
    fn objective_matches_quadruple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hx = rand_hyper(&mut rng, 2, 2);
        let hy = rand_hyper(&mut rng, 2, 2);
        let t = DistortionTensor::build(&hx, &hy, &gauss(), &TensorPolicy::dense()).unwrap();
        let q = rand_quad(&mut rng, &hx, &hy);
        let mut naive = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        naive += t.entry(i, j, k, l)
                            * (q.samples.row_plan[[i, k]]
                                * q.samples.col_plan[[i, k]]
                                * q.features.row_plan[[j, l]]
                                * q.features.col_plan[[j, l]])
                                .sqrt();
                    }
                }
            }
        }
        let f = objective_f(&q, &t).unwrap();
        assert!((f - naive).abs() < 1e-13);
        // the feature-side contraction gives the same value
        let qm = t.contract(Side::Feature, q.samples.matching().view()).unwrap();
        let f2 = weighted_sum(&q.features.matching(), &qm);
        assert!((f - f2).abs() <= 1e-10 * f);
    }

    #[test]
    fn distance_from_objective() {
        let d = ccot_distance_from_objective(1.0, (1.0, 1.0, 1.0, 1.0), 0.5, 1e-12).unwrap();
        assert_eq!(d, 0.0);
        let d = ccot_distance_from_objective(0.0, (1.0, 1.0, 0.0, 0.0), 0.5, 1e-12).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        let d = ccot_distance_from_objective(0.3, (1.0, 1.0, 1.0, 1.0), 0.5, 1e-12).unwrap();
        assert!((d * d - (2.0 - 2.0 * 0.3)).abs() < 1e-14);
        assert!(ccot_distance_from_objective(1.0 + 1e-14, (1.0, 1.0, 1.0, 1.0), 0.5, 1e-12).is_ok());
        assert!(matches!(
            ccot_distance_from_objective(1.1, (1.0, 1.0, 1.0, 1.0), 0.5, 1e-12),
            Err(Error::NegativeSquaredDistance(_))
        ));
    }

    #[test]
    fn product_initialization() {
        let hx = DiscreteMeasureHypernetwork::new(array![1.0], array![1.0], array![[0.0]]).unwrap();
        let hy = DiscreteMeasureHypernetwork::new(array![0.5, 0.5], array![1.0], array![[0.0], [0.0]]).unwrap();
        let cfg = SolverConfig::new(gauss());
        let t = DistortionTensor::build(&hx, &hy, &cfg.kernel, &cfg.tensor_policy).unwrap();
        let q = init_interior(&hx, &hy, &t, &cfg).unwrap();
        assert_eq!(q.samples.row_plan, array![[0.5, 0.5]]);
        assert_eq!(q.samples.col_plan, array![[0.5, 0.5]]);
        assert_eq!(q.features.row_plan, array![[1.0]]);
    }

    #[test]
    fn jittered_initialization_is_feasible_and_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hx = rand_hyper(&mut rng, 4, 3);
        let hy = rand_hyper(&mut rng, 5, 2);
        let cfg = SolverConfig { init: InitKind::ProductJittered, ..SolverConfig::new(gauss()) };
        let t = DistortionTensor::build(&hx, &hy, &cfg.kernel, &cfg.tensor_policy).unwrap();
        let q = init_interior(&hx, &hy, &t, &cfg).unwrap();
        q.check_feasible(1e-12).unwrap();
        assert!(q.samples.row_plan.iter().all(|&v| v > 0.0));
        for (s, a) in q.samples.row_plan.sum_axis(Axis(1)).iter().zip(hx.sample_weights()) {
            assert!((s - a).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_rescales_and_zeroes() {
        let hx = DiscreteMeasureHypernetwork::new(array![1.0], array![1.0], array![[0.0]]).unwrap();
        let hy = DiscreteMeasureHypernetwork::new(array![1.0], array![1.0], array![[0.3]]).unwrap();
        let t = DistortionTensor::build(&hx, &hy, &gauss(), &TensorPolicy::default()).unwrap();
        let mut q = SemiCouplingQuadruple::zeros(&hx, &hy);
        q.samples.row_plan = array![[0.4]];
        q.samples.col_plan = array![[0.7]];
        q.features.row_plan = array![[0.2]];
        q.features.col_plan = array![[0.2]];
        let p = project_to_gamma_bar(&q, &t).unwrap();
        assert_eq!(p.samples.row_plan, array![[1.0]]);
        assert_eq!(p.samples.col_plan, array![[1.0]]);

        // Ω vanishes everywhere when the values are πδ apart under cos
        let cos = ConeKernel::truncated_cosine(0.5).unwrap();
        let far = DiscreteMeasureHypernetwork::new(array![1.0], array![1.0], array![[4.0]]).unwrap();
        let t = DistortionTensor::build(&hx, &far, &cos, &TensorPolicy::default()).unwrap();
        let p = project_to_gamma_bar(&q, &t).unwrap();
        assert!(p.samples.row_plan.iter().chain(p.features.col_plan.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn projection_never_decreases_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let hx = rand_hyper(&mut rng, 2, 2);
            let hy = rand_hyper(&mut rng, 2, 2);
            let t = DistortionTensor::build(&hx, &hy, &gauss(), &TensorPolicy::dense()).unwrap();
            let q = rand_quad(&mut rng, &hx, &hy);
            let before = objective_f(&q, &t).unwrap();
            let after = objective_f(&project_to_gamma_bar(&q, &t).unwrap(), &t).unwrap();
            assert!(after >= before - 1e-12);
        }
    }

    #[test]
    fn block_a_closed_form() {
        // n = 1, m = 2, a = [1], B = [[1, 1]], P = [[2, 1]] → E = [[0.8, 0.2]]
        let e = maximize_rows(&array![1.0], &array![[1.0, 1.0]], &array![[2.0, 1.0]]);
        assert!((e[[0, 0]] - 0.8).abs() < 1e-15 && (e[[0, 1]] - 0.2).abs() < 1e-15);
        // grid over the row simplex confirms it maximizes Σ sqrt(E B) P
        let value = |x: f64| 2.0 * x.sqrt() + (1.0 - x).sqrt();
        let best = (0..=1000).map(|s| s as f64 / 1000.0).fold(0.0f64, |acc, x| acc.max(value(x)));
        assert!(value(0.8) >= best - 1e-12);
        let z = maximize_rows(&array![1.0], &array![[0.0, 0.0]], &array![[2.0, 1.0]]);
        assert_eq!(z, array![[0.0, 0.0]]);
        let full = maximize_rows(&array![0.7], &array![[0.3]], &array![[0.9]]);
        assert!((full[[0, 0]] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn every_block_update_is_an_ascent_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let hx = rand_hyper(&mut rng, 3, 2);
            let hy = rand_hyper(&mut rng, 2, 4);
            let t = DistortionTensor::build(&hx, &hy, &gauss(), &TensorPolicy::dense()).unwrap();
            let mut q = rand_quad(&mut rng, &hx, &hy);
            let mut f = objective_f(&q, &t).unwrap();
            for block in [Block::A, Block::B, Block::APrime, Block::BPrime] {
                let e = update_block(block, &q, &t).unwrap();
                match block {
                    Block::A => q.samples.row_plan = e,
                    Block::B => q.samples.col_plan = e,
                    Block::APrime => q.features.row_plan = e,
                    Block::BPrime => q.features.col_plan = e,
                }
                let g = objective_f(&q, &t).unwrap();
                assert!(g >= f - 1e-12 * f.max(1.0), "{block:?}: {g} < {f}");
                f = g;
            }
            q.check_feasible(1e-12).unwrap();
        }
    }

    #[test]
    fn self_weighted_b_prime_variant_is_logged() {
        // Not asserted: records whether the alternative update can decrease F.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut decreases = 0;
        for _ in 0..50 {
            let hx = rand_hyper(&mut rng, 3, 3);
            let hy = rand_hyper(&mut rng, 3, 3);
            let t = DistortionTensor::build(&hx, &hy, &gauss(), &TensorPolicy::dense()).unwrap();
            let mut q = rand_quad(&mut rng, &hx, &hy);
            let before = objective_f(&q, &t).unwrap();
            q.features.col_plan = update_b_prime_self_weighted(&q, &t).unwrap();
            if objective_f(&q, &t).unwrap() < before - 1e-12 {
                decreases += 1;
            }
        }
        eprintln!("self-weighted B' update decreased F on {decreases}/50 random instances");
    }

    #[test]
    fn identical_hypernetworks_are_at_distance_zero() {
        // Near-duplicate kernel values make the objective almost flat, so
        // the tolerance has to be far below the default to resolve 1e-5.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for n in 1..=5 {
            let h = rand_hyper(&mut rng, n, 6 - n);
            let cfg = SolverConfig::new(gauss()).with_iters(50_000, 1e-15);
            let (d, q, report) = bca_solve(&h, &h, &cfg).unwrap();
            assert!(d <= 1e-5, "n={n}: {d}");
            q.check_feasible(1e-12).unwrap();
            assert!(report.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-10 * w[0].max(1.0)));
            let diagonal = SemiCouplingQuadruple {
                samples: diagonal_pair(h.sample_weights(), h.sample_weights()).unwrap(),
                features: diagonal_pair(h.feature_weights(), h.feature_weights()).unwrap(),
            };
            let t = DistortionTensor::build(&h, &h, &gauss(), &TensorPolicy::default()).unwrap();
            let f = objective_f(&diagonal, &t).unwrap();
            let zero = ccot_distance_from_objective(f, masses(&h, &h), 0.5, 1e-12).unwrap();
            assert!(zero < 1e-7 && d >= zero - 1e-12);
        }
    }

    #[test]
    fn empty_second_hypernetwork_gives_mass_term() {
        let hx = DiscreteMeasureHypernetwork::new(array![1.0], array![1.0], array![[0.0]]).unwrap();
        let hy = DiscreteMeasureHypernetwork::new(array![0.0], array![0.0], array![[0.0]]).unwrap();
        let (d, _, _) = bca_solve(&hx, &hy, &SolverConfig::new(gauss())).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_tensor_returns_mass_distance() {
        let cos = ConeKernel::truncated_cosine(0.5).unwrap();
        let hx = DiscreteMeasureHypernetwork::new(array![1.0, 1.0], array![1.0], array![[0.0], [0.0]]).unwrap();
        let hy = DiscreteMeasureHypernetwork::new(array![1.0], array![2.0], array![[5.0]]).unwrap();
        let (d, q, report) = bca_solve(&hx, &hy, &SolverConfig::new(cos)).unwrap();
        assert!(report.degenerate);
        assert!((d - (2.0f64 + 2.0).sqrt() * 2.0 * 0.5).abs() < 1e-12);
        assert!(q.samples.row_plan.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_networks_close_the_frobenius_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w = Array1::from_shape_fn(3, |_| rng.random_range(0.2..1.0));
        let k = Array2::from_shape_fn((3, 3), |_| rng.random_range(0.0..1.0));
        let net = DiscreteMeasureNetwork::new(w, k).unwrap();
        let cfg = SolverConfig::new(gauss()).with_iters(50_000, 1e-15);
        let (d, report) = cgw_solve(&net, &net, &cfg).unwrap();
        assert!(d <= 1e-5, "{d}");
        assert!(report.frobenius_gap.unwrap() < 1e-8);
    }

    #[test]
    fn point_and_its_double_are_within_unit_distance() {
        let net = DiscreteMeasureNetwork::from_vecs(vec![1.0], vec![vec![0.0]]).unwrap();
        let doubled = net.scale_measure(2.0).unwrap();
        let (d, _) = cgw_solve(&net, &doubled, &SolverConfig::new(gauss())).unwrap();
        assert!(d <= 1.0 + 1e-9, "{d}");
        let pair = diagonal_pair(&array![1.0], &array![2.0]).unwrap();
        let diag = cgw_distance_of_pair(&net, &doubled, &pair, &SolverConfig::new(gauss())).unwrap();
        assert!((diag - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swapping_inputs_preserves_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..5 {
            let hx = rand_hyper(&mut rng, 3, 4);
            let hy = rand_hyper(&mut rng, 4, 2);
            let cfg = SolverConfig::new(gauss());
            let (d1, _, _) = bca_solve(&hx, &hy, &cfg).unwrap();
            let (d2, _, _) = bca_solve(&hy, &hx, &cfg).unwrap();
            assert!((d1 - d2).abs() < 1e-6, "{d1} vs {d2}");
        }
    }

    #[test]
    fn scaled_quadruple_scales_objective_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let hx = rand_hyper(&mut rng, 3, 3);
        let hy = rand_hyper(&mut rng, 2, 3);
        let t = DistortionTensor::build(&hx, &hy, &gauss(), &TensorPolicy::dense()).unwrap();
        let q = rand_quad(&mut rng, &hx, &hy);
        let f = objective_f(&q, &t).unwrap();
        let r: f64 = 2.7;
        let fr = objective_f(&q.scaled(r), &t).unwrap();
        assert!((fr - r * r * f).abs() <= 1e-12 * fr);
    }

    #[test]
    fn injected_start_can_win() {
        let net = DiscreteMeasureNetwork::from_vecs(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let a = net.weights().clone();
        let cfg = SolverConfig::new(gauss()).with_restarts(1).with_iters(1, 1e-9);
        let sol = cgw_solve_with_starts(&net, &net, &cfg, &[diagonal_pair(&a, &a).unwrap()]).unwrap();
        assert_eq!(sol.report.restart_objectives.len(), 2);
        assert!(sol.distance <= 1e-7);
    }
}
