//! Dynamic multi-coil MRI reconstruction by variable splitting over
//! complementary spatio-temporal (x-t) and temporal-frequency (x-f) domains.
//!
//! The solver alternates four closed-form or proximal steps per iteration:
//! x-f de-aliasing, x-t de-aliasing, coil-wise point-wise data consistency,
//! and a weighted coupling of the three estimates. De-aliasing can use exact
//! soft-thresholding or a small trainable convolutional-recurrent network
//! with hand-written reverse-mode gradients.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coils;
pub mod error;
pub mod io;
pub mod learned;
pub mod metrics;
pub mod phantom;
pub mod regularizers;
pub mod sampling;
pub mod solver;
pub mod tensors;
pub mod transforms;

pub use coils::CoilMaps;
pub use error::{Error, Result};
pub use sampling::SamplingMask;
pub use solver::{ctf_solve, Mode, NetPair, PenaltyWeights, SolverConfig, SolverState};
pub use tensors::{Dims, Domain, DynTensor, NormKind, RealTensor, C64};
