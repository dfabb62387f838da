//! Seeded fixtures shared by the benchmarks: pairs of square-image kNN
//! networks like the ones the scalability experiments run on.

use cgw_core::data::{gen_squares, image_to_network};
use cgw_core::{DiscreteMeasureNetwork, Error};
use ndarray::Array2;

/// Two networks of `n` sampled pixels from seeded side-5 square images.
pub fn square_pair(n: usize, seed: u64) -> (DiscreteMeasureNetwork, DiscreteMeasureNetwork) {
    let images = gen_squares(2, 4, 5, 32, seed).expect("squares fit in 32x32");
    let sample = |k: usize| {
        let mut s = seed.wrapping_add(k as u64);
        loop {
            match image_to_network(&images[k], n, 4, s) {
                Ok(net) => return net,
                Err(Error::InsufficientMass) => s = s.wrapping_add(1 << 32),
                Err(e) => panic!("{e}"),
            }
        }
    };
    (sample(0), sample(1))
}

/// A positive `rows × cols` matrix, deterministic in `seed`.
pub fn probe_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    // a small LCG keeps the fixtures free of extra dependencies
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Array2::from_shape_fn((rows, cols), |_| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        0.05 + (state >> 11) as f64 / (1u64 << 53) as f64
    })
}
