//! Spectral permutation synchronization.
//!
//! Recovers `n` latent permutations `Z*_1, …, Z*_n` of `[d]` from noisy,
//! partially observed relative measurements `X_jk ≈ Z*_j Z*_kᵀ`. Two
//! estimators share the same eigenspace of the observation matrix:
//!
//! * the vanilla estimator rounds `U_j U_1ᵀ`, anchoring every object on the
//!   first block of the eigenspace;
//! * the anchored estimator clusters all `nd` rows of the eigenspace into `d`
//!   centers, stacks them (scaled by `√n`) into an anchor `M`, and rounds
//!   `U_j Mᵀ` for every object.
//!
//! The crate also provides the seeded synthetic model, exact losses,
//! perturbation diagnostics against the ground truth and a Monte Carlo
//! sweep harness.

pub mod cluster;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod model;
pub mod permutation;
pub mod sync;

pub use error::{Error, Result};
pub use model::{Instance, ModelParams, TruthMode};
pub use permutation::Permutation;
