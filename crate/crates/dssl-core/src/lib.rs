//! Two-step self-supervised learning of disentangled shared and
//! modality-specific representations for paired two-modality data, plus a
//! discrete information-bottleneck oracle and an evaluation/sweep harness.
//!
//! The crate is organized around six modules:
//!
//! - [`numerics`]: dense f64 tensors, reverse-mode autodiff, Adam,
//!   finite-difference gradient checking, checkpoint persistence.
//! - [`synthdata`]: the synthetic two-modality benchmark (Gaussian latents,
//!   linear mixing, binary labels, augmentation, mixed-entanglement
//!   variant).
//! - [`losses`]: InfoNCE, the spherical alignment surrogate, batch
//!   orthogonality, and the step-1/step-2 composites built from them.
//! - [`training`]: the two-step optimization, the joint-optimization
//!   baseline, and run bookkeeping.
//! - [`eval`]: linear probes, cross-modal retrieval, reconstruction gain,
//!   and grid sweeps over the trade-off weights.
//! - [`oracle`]: exact discrete-distribution computations — mutual
//!   information, bottleneck optimization over stochastic encoders, curve
//!   tracing, and attainability classification.

pub mod error;
pub mod eval;
pub mod losses;
pub mod numerics;
pub mod oracle;
pub mod rng;
pub mod synthdata;
pub mod training;

pub use error::{Error, Result};

/// Installs a global rayon pool with `threads` workers (or all cores when
/// `None`). Call once, before any sweep; later calls are ignored.
pub fn init_thread_pool(threads: Option<usize>) {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let _ = builder.build_global();
}
