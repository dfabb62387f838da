use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::DiscreteMeasureNetwork;

/// Grayscale image, row-major `[row][col]`.
pub type Image = Array2<f64>;

const PLACEMENT_ATTEMPTS: usize = 10_000;

/// `count` images of `image_size²` pixels, each holding `g` non-overlapping
/// axis-aligned squares of side `side` with i.i.d. uniform brightness.
pub fn gen_squares(count: usize, g: usize, side: usize, image_size: usize, seed: u64) -> Result<Vec<Image>> {
    if side == 0 || side > image_size {
        return Err(Error::InvalidConfig(format!(
            "square side {side} must lie in 1..={image_size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = image_size - side + 1;
    (0..count)
        .map(|_| {
            let mut corners: Vec<(usize, usize)> = Vec::with_capacity(g);
            let mut attempts = 0;
            while corners.len() < g {
                attempts += 1;
                if attempts > PLACEMENT_ATTEMPTS {
                    return Err(Error::PlacementFailure { attempts: PLACEMENT_ATTEMPTS });
                }
                let (r, c) = (rng.random_range(0..span), rng.random_range(0..span));
                let clear = corners
                    .iter()
                    .all(|&(r2, c2)| r.abs_diff(r2) >= side || c.abs_diff(c2) >= side);
                if clear {
                    corners.push((r, c));
                }
            }
            let mut img = Array2::zeros((image_size, image_size));
            for (r, c) in corners {
                let b: f64 = rng.random();
                img.slice_mut(ndarray::s![r..r + side, c..c + side]).mapv_inplace(|v| v + b);
            }
            Ok(img)
        })
        .collect()
}

/// Directed k-nearest-neighbour adjacency of a point cloud: `ω_ij = 1` iff
/// `j` is among the `k` closest points to `i` (itself excluded, ties broken
/// by the smaller index).
fn knn_adjacency(points: &Array2<f64>, k: usize) -> Array2<f64> {
    let n = points.nrows();
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d = (&points.row(i) - &points.row(j)).mapv(|x| x * x).sum();
                (d, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            adj[[i, j]] = 1.0;
        }
    }
    adj
}

/// Samples `n_sample` pixels uniformly without replacement and builds the
/// network with intensity-proportional probability weights and directed kNN
/// adjacency between the sampled coordinates.
///
/// If every sampled pixel is dark the draw is repeated once with the next
/// random stream before giving up with [`Error::InsufficientMass`].
pub fn image_to_network(image: &Image, n_sample: usize, knn: usize, seed: u64) -> Result<DiscreteMeasureNetwork> {
    let (rows, cols) = image.dim();
    let pixels = rows * cols;
    if n_sample > pixels || n_sample == 0 {
        return Err(Error::InvalidConfig(format!(
            "cannot sample {n_sample} of {pixels} pixels"
        )));
    }
    if knn >= n_sample {
        return Err(Error::InvalidConfig(format!(
            "knn {knn} must be smaller than the sample size {n_sample}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..2 {
        let mut chosen: Vec<usize> = if n_sample == pixels {
            (0..pixels).collect()
        } else {
            sample(&mut rng, pixels, n_sample).into_vec()
        };
        chosen.sort_unstable();
        let intensity: Array1<f64> = chosen.iter().map(|&p| image[[p / cols, p % cols]]).collect();
        let total = intensity.sum();
        if total <= 0.0 {
            continue;
        }
        let points = Array2::from_shape_fn((n_sample, 2), |(i, d)| {
            let p = chosen[i];
            if d == 0 { (p / cols) as f64 } else { (p % cols) as f64 }
        });
        let kernel = knn_adjacency(&points, knn);
        return DiscreteMeasureNetwork::new(intensity / total, kernel)?.with_points(points);
    }
    Err(Error::InsufficientMass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_square_fills_the_image() {
        let imgs = gen_squares(3, 1, 32, 32, 0).unwrap();
        for img in imgs {
            let v = img[[0, 0]];
            assert!(img.iter().all(|&x| x == v));
        }
    }

    #[test]
    fn pixel_counts() {
        for (side, want) in [(3, 36), (5, 100)] {
            for img in gen_squares(20, 4, side, 32, 7).unwrap() {
                assert_eq!(img.iter().filter(|&&x| x > 0.0).count(), want);
                assert!(img.iter().all(|&x| x < 1.0));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen_squares(4, 4, 3, 32, 11).unwrap(), gen_squares(4, 4, 3, 32, 11).unwrap());
        assert_ne!(gen_squares(4, 4, 3, 32, 11).unwrap(), gen_squares(4, 4, 3, 32, 12).unwrap());
    }

    #[test]
    fn placement_can_fail() {
        let err = gen_squares(1, 2, 20, 32, 0).unwrap_err();
        assert_eq!(err.code(), "placement_failure");
    }

    #[test]
    fn constant_image_gives_uniform_weights() {
        let img = Array2::from_elem((2, 2), 0.3);
        let net = image_to_network(&img, 4, 1, 0).unwrap();
        assert!(net.weights().iter().all(|&w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn adjacency_rows_have_knn_entries() {
        let img = &gen_squares(1, 4, 5, 32, 3).unwrap()[0];
        let net = image_to_network(img, 200, 4, 9).unwrap();
        assert!((net.mass() - 1.0).abs() < 1e-12);
        for row in net.kernel().rows() {
            assert_eq!(row.sum(), 4.0);
        }
        assert!(net.kernel().diag().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn neighbour_ties_go_to_the_smaller_index() {
        // a plus shape: the centre has four equidistant neighbours
        let pts = array![[1.0, 1.0], [0.0, 1.0], [1.0, 0.0], [1.0, 2.0], [2.0, 1.0]];
        let adj = knn_adjacency(&pts, 2);
        assert_eq!(adj.row(0).to_vec(), vec![0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn dark_image_is_rejected() {
        let img = Array2::zeros((4, 4));
        assert_eq!(image_to_network(&img, 5, 2, 0).unwrap_err(), Error::InsufficientMass);
    }
}
