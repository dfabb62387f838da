//! The distortion tensor `Ω_ijkl = Ω(|ω_X(i,j) - ω_Y(k,l)| / 2δ)` and its two
//! contractions.
//!
//! Index convention: `i` runs over X samples (`n`), `j` over X features
//! (`n'`), `k` over Y samples (`m`), `l` over Y features (`m'`).
//!
//! Two storage modes exist. `Dense` materializes all `n·n'·m·m'` entries in
//! `(i, k, j, l)` order so that every `(i, k)` slice is contiguous. `Factored`
//! bins the values of each kernel and keeps only the bin indicators plus a
//! small table of `Ω` between bin representatives; a contraction then costs a
//! handful of matrix products per bin instead of a pass over the full tensor.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::ConeKernel;
use crate::error::{Error, Result};
use crate::network::DiscreteMeasureHypernetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorMode {
    Dense,
    Factored,
}

/// Which side a contraction sums out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `P_ik = Σ_jl Ω_ijkl M_jl`, with `M` of shape `n' x m'`.
    Sample,
    /// `Q_jl = Σ_ik Ω_ijkl M_ik`, with `M` of shape `n x m`.
    Feature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorPolicy {
    pub max_dense_bytes: usize,
    pub quantize_bins: usize,
    pub tile: usize,
    /// `None` picks dense whenever it fits the byte budget.
    pub force_mode: Option<TensorMode>,
}

impl Default for TensorPolicy {
    fn default() -> Self {
        Self {
            max_dense_bytes: 256 << 20,
            quantize_bins: 64,
            tile: 64,
            force_mode: None,
        }
    }
}

impl TensorPolicy {
    pub fn dense() -> Self {
        Self {
            force_mode: Some(TensorMode::Dense),
            ..Self::default()
        }
    }

    pub fn factored(quantize_bins: usize) -> Self {
        Self {
            quantize_bins,
            force_mode: Some(TensorMode::Factored),
            ..Self::default()
        }
    }
}

/// Value binning of one kernel matrix.
#[derive(Debug, Clone, PartialEq)]
struct Binning {
    values: Vec<f64>,
    bins: Array2<u32>,
    half_width: f64,
}

impl Binning {
    fn new(kernel: ArrayView2<f64>, max_bins: usize) -> Self {
        let mut distinct: Vec<f64> = kernel.iter().copied().collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() <= max_bins {
            let bins = kernel.mapv(|v| {
                distinct
                    .binary_search_by(|probe| probe.total_cmp(&v))
                    .expect("value present in its own distinct set") as u32
            });
            return Self {
                values: distinct,
                bins,
                half_width: 0.0,
            };
        }
        let lo = distinct[0];
        let hi = *distinct.last().unwrap();
        let width = (hi - lo) / max_bins as f64;
        let raw = kernel.mapv(|v| (((v - lo) / width).floor() as usize).min(max_bins - 1));
        // drop empty bins so every representative is used
        let mut used = vec![false; max_bins];
        raw.iter().for_each(|&b| used[b] = true);
        let mut remap = vec![u32::MAX; max_bins];
        let mut values = Vec::new();
        for (b, _) in used.iter().enumerate().filter(|(_, u)| **u) {
            remap[b] = values.len() as u32;
            values.push(lo + (b as f64 + 0.5) * width);
        }
        Self {
            values,
            bins: raw.mapv(|b| remap[b]),
            half_width: 0.5 * width,
        }
    }

    fn counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.values.len()];
        self.bins.iter().for_each(|&b| c[b as usize] += 1);
        c
    }

    /// Most populated bin; it is represented implicitly as "all ones minus the rest".
    fn reference(&self) -> usize {
        let counts = self.counts();
        (0..counts.len()).max_by_key(|&b| (counts[b], usize::MAX - b)).unwrap_or(0)
    }

    fn indicator(&self, bin: usize) -> Array2<f64> {
        self.bins.mapv(|b| if b as usize == bin { 1.0 } else { 0.0 })
    }
}

/// Factored representation over binned kernel values.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredTensor {
    x: Binning,
    y: Binning,
    omega_table: Array2<f64>,
    /// Non-reference X bins with their indicator and combined Y weights `W_u`.
    x_terms: Vec<(Array2<f64>, Array2<f64>)>,
    /// `W` paired with the all-ones X basis element.
    x_ones_weight: Array2<f64>,
    /// Non-reference Y bins with their indicator and combined X weights `V_v`.
    y_terms: Vec<(Array2<f64>, Array2<f64>)>,
    y_ones_weight: Array2<f64>,
}

impl FactoredTensor {
    fn new(x: Binning, y: Binning, kernel: &ConeKernel) -> Self {
        let omega_table = Array2::from_shape_fn((x.values.len(), y.values.len()), |(u, v)| {
            kernel.omega_between(x.values[u], y.values[v])
        });
        let (ux, vy) = (x.reference(), y.reference());
        let x_rest: Vec<usize> = (0..x.values.len()).filter(|&u| u != ux).collect();
        let y_rest: Vec<usize> = (0..y.values.len()).filter(|&v| v != vy).collect();
        // Basis change: I_ref = J - Σ_rest I_u turns the table into
        // double differences against the reference row/column.
        let t = &omega_table;
        let diff = |u: Option<usize>, v: Option<usize>| -> f64 {
            match (u, v) {
                (None, None) => t[[ux, vy]],
                (None, Some(v)) => t[[ux, v]] - t[[ux, vy]],
                (Some(u), None) => t[[u, vy]] - t[[ux, vy]],
                (Some(u), Some(v)) => t[[u, v]] - t[[ux, v]] - t[[u, vy]] + t[[ux, vy]],
            }
        };
        let y_ind: Vec<Array2<f64>> = y_rest.iter().map(|&v| y.indicator(v)).collect();
        let x_ind: Vec<Array2<f64>> = x_rest.iter().map(|&u| x.indicator(u)).collect();
        let combine_y = |u: Option<usize>| -> Array2<f64> {
            let mut w = Array2::from_elem(y.bins.dim(), diff(u, None));
            for (ind, &v) in y_ind.iter().zip(&y_rest) {
                w.scaled_add(diff(u, Some(v)), ind);
            }
            w
        };
        let combine_x = |v: Option<usize>| -> Array2<f64> {
            let mut w = Array2::from_elem(x.bins.dim(), diff(None, v));
            for (ind, &u) in x_ind.iter().zip(&x_rest) {
                w.scaled_add(diff(Some(u), v), ind);
            }
            w
        };
        let x_ones_weight = combine_y(None);
        let y_ones_weight = combine_x(None);
        let x_terms = x_ind
            .iter()
            .zip(&x_rest)
            .map(|(ind, &u)| (ind.clone(), combine_y(Some(u))))
            .collect();
        let y_terms = y_ind
            .iter()
            .zip(&y_rest)
            .map(|(ind, &v)| (ind.clone(), combine_x(Some(v))))
            .collect();
        Self {
            x,
            y,
            omega_table,
            x_terms,
            x_ones_weight,
            y_terms,
            y_ones_weight,
        }
    }

    fn estimated_bytes(x: &Binning, y: &Binning) -> usize {
        let (nx, ny) = (x.values.len(), y.values.len());
        let x_cells = x.bins.len();
        let y_cells = y.bins.len();
        8 * (nx * (x_cells + y_cells) + ny * (x_cells + y_cells)) + 4 * (x_cells + y_cells)
    }

    pub fn x_values(&self) -> &[f64] {
        &self.x.values
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y.values
    }

    pub fn x_bins(&self) -> &Array2<u32> {
        &self.x.bins
    }

    pub fn y_bins(&self) -> &Array2<u32> {
        &self.y.bins
    }

    pub fn omega_table(&self) -> &Array2<f64> {
        &self.omega_table
    }

    fn contract_sample(&self, m: ArrayView2<f64>, out_shape: (usize, usize)) -> Array2<f64> {
        // P = 1 ⊗ (W_ones c) + Σ_u (I_u M) W_uᵀ, c the column sums of M
        let c = m.sum_axis(Axis(0));
        let base = self.x_ones_weight.dot(&c);
        let mut p = Array2::from_shape_fn(out_shape, |(_, k)| base[k]);
        for (ind, w) in &self.x_terms {
            let left = ind.dot(&m);
            p += &left.dot(&w.t());
        }
        p
    }

    fn contract_feature(&self, m: ArrayView2<f64>, out_shape: (usize, usize)) -> Array2<f64> {
        // Q = (V_onesᵀ r) ⊗ 1 + Σ_v V_vᵀ (M I_v), r the row sums of M
        let r = m.sum_axis(Axis(1));
        let base = self.y_ones_weight.t().dot(&r);
        let mut q = Array2::from_shape_fn(out_shape, |(j, _)| base[j]);
        for (ind, v) in &self.y_terms {
            let right = m.dot(ind);
            q += &v.t().dot(&right);
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(Vec<f64>),
    Factored(Box<FactoredTensor>),
}

/// The four-index distortion cost driving the CCOT objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionTensor {
    dims: (usize, usize, usize, usize),
    tile: usize,
    storage: Storage,
    quantization_error: f64,
}

impl DistortionTensor {
    pub fn build(
        hx: &DiscreteMeasureHypernetwork,
        hy: &DiscreteMeasureHypernetwork,
        kernel: &ConeKernel,
        policy: &TensorPolicy,
    ) -> Result<Self> {
        Self::from_kernels(hx.kernel().view(), hy.kernel().view(), kernel, policy)
    }

    pub fn from_kernels(
        omega_x: ArrayView2<f64>,
        omega_y: ArrayView2<f64>,
        kernel: &ConeKernel,
        policy: &TensorPolicy,
    ) -> Result<Self> {
        let (n, np) = omega_x.dim();
        let (m, mp) = omega_y.dim();
        let dims = (n, np, m, mp);
        let tile = policy.tile.max(1);
        let entries = n
            .checked_mul(np)
            .and_then(|v| v.checked_mul(m))
            .and_then(|v| v.checked_mul(mp));
        let dense_bytes = entries.and_then(|e| e.checked_mul(8));
        let dense_fits = dense_bytes.is_some_and(|b| b <= policy.max_dense_bytes);
        let mode = match policy.force_mode {
            Some(mode) => mode,
            None if dense_fits => TensorMode::Dense,
            None => TensorMode::Factored,
        };
        match mode {
            TensorMode::Dense => {
                let total = entries.ok_or_else(|| {
                    Error::DimensionMismatch("dense tensor size overflows".into())
                })?;
                let mut data = vec![0.0; total];
                let block = np * mp;
                if block > 0 {
                    data.par_chunks_mut(block).enumerate().for_each(|(ik, chunk)| {
                        let (i, k) = (ik / m, ik % m);
                        for j in 0..np {
                            let xv = omega_x[[i, j]];
                            for l in 0..mp {
                                chunk[j * mp + l] = kernel.omega_between(xv, omega_y[[k, l]]);
                            }
                        }
                    });
                }
                Ok(Self {
                    dims,
                    tile,
                    storage: Storage::Dense(data),
                    quantization_error: 0.0,
                })
            }
            TensorMode::Factored => {
                if policy.quantize_bins == 0 {
                    return Err(Error::InvalidConfig("quantize_bins must be >= 1".into()));
                }
                let x = Binning::new(omega_x, policy.quantize_bins);
                let y = Binning::new(omega_y, policy.quantize_bins);
                let needed = FactoredTensor::estimated_bytes(&x, &y);
                if needed > policy.max_dense_bytes {
                    return Err(Error::BudgetTooSmallForEitherPath {
                        budget: policy.max_dense_bytes,
                        needed,
                    });
                }
                let quantization_error =
                    kernel.lipschitz() * (x.half_width + y.half_width) / (2.0 * kernel.delta());
                Ok(Self {
                    dims,
                    tile,
                    storage: Storage::Factored(Box::new(FactoredTensor::new(x, y, kernel))),
                    quantization_error,
                })
            }
        }
    }

    pub fn mode(&self) -> TensorMode {
        match self.storage {
            Storage::Dense(_) => TensorMode::Dense,
            Storage::Factored(_) => TensorMode::Factored,
        }
    }

    /// `(n, n', m, m')`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.dims
    }

    /// Bound on `|Ω_quantized - Ω_exact|` per entry; zero for dense or exact bins.
    pub fn quantization_error(&self) -> f64 {
        self.quantization_error
    }

    pub fn factored(&self) -> Option<&FactoredTensor> {
        match &self.storage {
            Storage::Factored(f) => Some(f),
            Storage::Dense(_) => None,
        }
    }

    /// Single entry `Ω_ijkl` as represented by this tensor.
    pub fn entry(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let (_, np, m, mp) = self.dims;
        match &self.storage {
            Storage::Dense(data) => data[((i * m + k) * np + j) * mp + l],
            Storage::Factored(f) => {
                f.omega_table[[f.x.bins[[i, j]] as usize, f.y.bins[[k, l]] as usize]]
            }
        }
    }

    /// Contracts away one side of the tensor against `m`.
    pub fn contract(&self, side: Side, m: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (n, np, mm, mp) = self.dims;
        let (expected, out_shape) = match side {
            Side::Sample => ((np, mp), (n, mm)),
            Side::Feature => ((n, mm), (np, mp)),
        };
        if m.dim() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{side:?} contraction expects {expected:?}, got {:?}",
                m.dim()
            )));
        }
        Ok(match &self.storage {
            Storage::Dense(data) => match side {
                Side::Sample => self.dense_sample(data, m),
                Side::Feature => self.dense_feature(data, m),
            },
            Storage::Factored(f) => match side {
                Side::Sample => f.contract_sample(m, out_shape),
                Side::Feature => f.contract_feature(m, out_shape),
            },
        })
    }

    fn dense_sample(&self, data: &[f64], m: ArrayView2<f64>) -> Array2<f64> {
        let (n, np, mm, mp) = self.dims;
        let block = np * mp;
        let flat: Vec<f64> = m.iter().copied().collect();
        let mut out = vec![0.0; n * mm];
        if block > 0 {
            out.par_chunks_mut(mm).enumerate().for_each(|(i, row)| {
                for (k, slot) in row.iter_mut().enumerate() {
                    let start = (i * mm + k) * block;
                    *slot = dot(&data[start..start + block], &flat);
                }
            });
        }
        Array2::from_shape_vec((n, mm), out).expect("shape matches buffer")
    }

    fn dense_feature(&self, data: &[f64], m: ArrayView2<f64>) -> Array2<f64> {
        let (n, np, mm, mp) = self.dims;
        let block = np * mp;
        let tile = self.tile;
        let tiles: Vec<(usize, usize)> = (0..n.div_ceil(tile))
            .flat_map(|ti| (0..mm.div_ceil(tile)).map(move |tk| (ti, tk)))
            .collect();
        // fixed tile partition and sequential reduction keep the sum order
        // independent of the thread count
        let partials: Vec<Vec<f64>> = tiles
            .par_iter()
            .map(|&(ti, tk)| {
                let mut acc = vec![0.0; block];
                for i in ti * tile..((ti + 1) * tile).min(n) {
                    for k in tk * tile..((tk + 1) * tile).min(mm) {
                        let w = m[[i, k]];
                        if w == 0.0 {
                            continue;
                        }
                        let start = (i * mm + k) * block;
                        for (a, &t) in acc.iter_mut().zip(&data[start..start + block]) {
                            *a += w * t;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; block];
        for part in partials {
            for (o, p) in out.iter_mut().zip(part) {
                *o += p;
            }
        }
        Array2::from_shape_vec((np, mp), out).expect("shape matches buffer")
    }

    /// Row sums of the tensor over `(j, l)` for each `(i, k)`.
    pub fn sample_slice_sums(&self) -> Array2<f64> {
        let (_, np, _, mp) = self.dims;
        self.contract(Side::Sample, Array2::ones((np, mp)).view())
            .expect("ones matrix has the right shape")
    }

    /// Sums over `(i, k)` for each `(j, l)`.
    pub fn feature_slice_sums(&self) -> Array2<f64> {
        let (n, _, m, _) = self.dims;
        self.contract(Side::Feature, Array2::ones((n, m)).view())
            .expect("ones matrix has the right shape")
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators; the order is fixed so results are reproducible
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let o = c * 4;
        acc[0] += a[o] * b[o];
        acc[1] += a[o + 1] * b[o + 1];
        acc[2] += a[o + 2] * b[o + 2];
        acc[3] += a[o + 3] * b[o + 3];
    }
    let mut tail = 0.0;
    for o in chunks * 4..a.len() {
        tail += a[o] * b[o];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Sum of every tensor entry weighted by the two matchings, the naive way.
/// Test support for the contraction identities.
#[doc(hidden)]
pub fn naive_contract(
    tensor: &DistortionTensor,
    side: Side,
    m: ArrayView2<f64>,
) -> Array2<f64> {
    let (n, np, mm, mp) = tensor.dims();
    match side {
        Side::Sample => Array2::from_shape_fn((n, mm), |(i, k)| {
            let mut s = 0.0;
            for j in 0..np {
                for l in 0..mp {
                    s += tensor.entry(i, j, k, l) * m[[j, l]];
                }
            }
            s
        }),
        Side::Feature => Array2::from_shape_fn((np, mp), |(j, l)| {
            let mut s = 0.0;
            for i in 0..n {
                for k in 0..mm {
                    s += tensor.entry(i, j, k, l) * m[[i, k]];
                }
            }
            s
        }),
    }
}
