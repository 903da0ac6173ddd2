//! Probabilistic sensor selection with a fully-connected Ising model,
//! trained jointly with an image-reconstruction decoder, applied to VLBI
//! telescope-array design.
//!
//! This crate is `no_std` + `alloc`. File formats, the command line and
//! run-directory management live in the `isingarray` companion crate.
//!
//! Module map:
//! - [`autodiff`]: reverse-mode differentiation engine
//! - [`ising`]: energies, exact enumeration oracles, conditionals, cliques
//! - [`gibbs`]: exact and relaxed (differentiable) Gibbs sampling
//! - [`vlbi`]: site geometry, uv coverage, visibilities, noise, closure phases
//! - [`recon`]: blur kernels, decoders A/B and similarity losses
//! - [`train`]: joint objective, optimizer loop and experiment protocols
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod gibbs;
pub mod ising;
pub mod math;
pub mod recon;
pub mod train;
pub mod vlbi;

/// Deterministic RNG used throughout (portable across platforms).
pub type Rng64 = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng64 {
    use rand::SeedableRng;
    Rng64::seed_from_u64(seed)
}
