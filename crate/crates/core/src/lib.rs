//! Neural tangent kernels of plain and gated (GLU) two-layer networks.
//!
//! The crate covers the whole pipeline used by the `glu-ntk` experiments:
//!
//! * [`data`]: seeded Gaussian inputs, Gram caches, targets, IDX ingestion.
//! * [`kernel`]: arc-cosine closed forms, structured approximations and the
//!   Hadamard gating construction.
//! * [`empirical`]: finite-width models with analytic parameter gradients and
//!   Monte Carlo NTK estimates.
//! * [`spectral`]: symmetric eigensolver, condition numbers and the
//!   random-matrix predictors for extreme eigenvalues.
//! * [`dynamics`]: kernel-regime residual evolution, expected loss curves and
//!   loss-crossing detection, plus a full-batch finite-width trainer.
//! * [`stats`]: energy distance and its permutation test.

pub mod config;
pub mod data;
pub mod dynamics;
pub mod empirical;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use config::{Activation, Arch, ExperimentConfig};
pub use data::{DataMatrix, Dataset, Provenance, TargetKind};
pub use dynamics::{LossTrajectory, ModeDecomposition, TrajectorySource};
pub use empirical::Params;
pub use error::{Error, Result};
pub use kernel::{KernelMatrix, KernelMethod, StructuredCoefficients};
pub use linalg::SymMatrix;
pub use rng::derive_stream_seed;
pub use spectral::{SpectralSummary, TheoryEstimate};
