//! Conic Gromov-Wasserstein (CGW) and conic co-optimal transport (CCOT)
//! distances between discrete measure networks and hypernetworks.
//!
//! The central solver is a cyclic block coordinate ascent over two pairs of
//! semi-couplings with closed-form block maximizers ([`solver`]). Around it
//! sit the cone kernels ([`cone`]), the distortion tensor and its
//! contractions ([`tensor`]), balanced GW/COT/OT baselines ([`baselines`]),
//! a conic UOT lower bound ([`uot`]), numerical probes of the metric's
//! theoretical guarantees ([`analysis`]) and synthetic data generators and
//! evaluation metrics ([`data`]).

mod accel;
pub mod analysis;
pub mod baselines;
pub mod cone;
pub mod data;
pub mod error;
pub mod network;
pub mod solver;
pub mod tensor;
pub mod uot;

pub use cone::{ConeKernel, ConePoint, KernelConstants, KernelFamily};
pub use error::{Error, Result};
pub use network::{
    DiscreteMeasureHypernetwork, DiscreteMeasureNetwork, DiscreteValueMeasure, NetworkDocument,
    SemiCouplingPair,
};
pub use solver::{
    bca_solve, cgw_solve, InitKind, SemiCouplingQuadruple, SolverConfig, SolverReport,
};
pub use tensor::{DistortionTensor, Side, TensorMode, TensorPolicy};
