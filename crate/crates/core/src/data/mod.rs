//! Synthetic datasets and evaluation metrics.
//!
//! Everything here is deterministic given its seed: the square-image and
//! latent-factor generators used by the experiments, the image-to-network
//! conversion, and the FOSCTTM / k-NN scores used to evaluate them.

mod aligned;
mod metrics;
mod squares;

pub use aligned::{gen_aligned_hypernetworks, AlignedData};
pub use metrics::{foscttm, knn_classify, perturb_measure, PerturbMode};
pub use squares::{gen_squares, image_to_network, Image};
