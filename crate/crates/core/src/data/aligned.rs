use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::network::DiscreteMeasureHypernetwork;

const CLUSTERS: usize = 5;
const LATENT_DIM: usize = 4;
const CELL_SPREAD: f64 = 0.15;

/// Two modalities measured on overlapping cells, with the ground truth.
#[derive(Debug, Clone)]
pub struct AlignedData {
    pub hx: DiscreteMeasureHypernetwork,
    pub hy: DiscreteMeasureHypernetwork,
    /// `(cell in X, same cell in Y)` for every cell kept in `Y`.
    pub cells: Vec<(usize, usize)>,
    /// `(feature in X, linked feature in Y)`.
    pub features: Vec<(usize, usize)>,
}

/// Divides every column by its standard deviation across cells, so that
/// noise levels are relative to each feature's spread. Values stay
/// nonnegative: columns are rescaled, not centred.
fn unit_spread(mut a: Array2<f64>) -> Array2<f64> {
    for mut col in a.columns_mut() {
        let sd = col.std(0.0);
        if sd > 0.0 {
            col.mapv_inplace(|v| v / sd);
        }
    }
    a
}

/// Latent-cluster stand-in for a paired multi-omics experiment.
///
/// Cells sit around `CLUSTERS` latent centres in a nonnegative
/// `LATENT_DIM`-dimensional factor space; each modality reads them through
/// its own nonnegative loadings, and every feature is scaled to unit
/// standard deviation. The first `min(feat_x, feat_y)` features of
/// `Y` copy features of `X` (in shuffled order) plus Gaussian noise of
/// standard deviation `noise`, any surplus `Y` features get fresh loadings.
/// `Y` keeps `⌈downsample_y · n_cells⌉` of the cells, also shuffled. Both
/// axes carry uniform probability weights.
pub fn gen_aligned_hypernetworks(
    n_cells: usize,
    feat_x: usize,
    feat_y: usize,
    noise: f64,
    downsample_y: f64,
    seed: u64,
) -> Result<AlignedData> {
    if !(downsample_y > 0.0 && downsample_y <= 1.0) {
        return Err(Error::InvalidConfig(format!("downsample_y {downsample_y} outside (0, 1]")));
    }
    if n_cells == 0 || feat_x == 0 || feat_y == 0 {
        return Err(Error::InvalidConfig("cell and feature counts must be positive".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise {noise} must be nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0, CELL_SPREAD).expect("positive spread");
    let centres = Array2::from_shape_fn((CLUSTERS, LATENT_DIM), |_| rng.random_range(0.0..1.0));
    let latent = Array2::from_shape_fn((n_cells, LATENT_DIM), |(i, d)| {
        (centres[[i % CLUSTERS, d]] + spread.sample(&mut rng)).max(0.0)
    });
    let loadings = |rng: &mut ChaCha8Rng, f: usize| {
        Array2::from_shape_fn((LATENT_DIM, f), |_| rng.random_range(0.0..1.0) / LATENT_DIM as f64)
    };
    let x = unit_spread(latent.dot(&loadings(&mut rng, feat_x)));
    let surplus = feat_y.saturating_sub(feat_x);
    let x_extra = unit_spread(latent.dot(&loadings(&mut rng, surplus)));

    let linked = feat_x.min(feat_y);
    let mut feature_perm: Vec<usize> = (0..feat_y).collect();
    feature_perm.shuffle(&mut rng);
    let kept = ((downsample_y * n_cells as f64).ceil() as usize).clamp(1, n_cells);
    let mut cell_order: Vec<usize> = (0..n_cells).collect();
    cell_order.shuffle(&mut rng);
    cell_order.truncate(kept);

    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let mut y = Array2::zeros((kept, feat_y));
    for (k, &cell) in cell_order.iter().enumerate() {
        for j in 0..feat_y {
            let clean = if j < linked { x[[cell, j]] } else { x_extra[[cell, j - linked]] };
            let jitter = if noise > 0.0 { noise * gauss.sample(&mut rng) } else { 0.0 };
            y[[k, feature_perm[j]]] = (clean + jitter).max(0.0);
        }
    }
    let uniform = |n: usize| Array1::from_elem(n, 1.0 / n as f64);
    Ok(AlignedData {
        hx: DiscreteMeasureHypernetwork::new(uniform(n_cells), uniform(feat_x), x)?,
        hy: DiscreteMeasureHypernetwork::new(uniform(kept), uniform(feat_y), y)?,
        cells: cell_order.iter().enumerate().map(|(k, &cell)| (cell, k)).collect(),
        features: (0..linked).map(|j| (j, feature_perm[j])).collect(),
    })
}
