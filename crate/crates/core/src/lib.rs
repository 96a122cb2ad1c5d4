//! Core numerics for performance-driven massing generation.
//!
//! A building on a 10 m square plot is parameterized by a 5×5 heightmap. For
//! each arrangement of neighbouring obstructions (a [`scene::BoundaryCondition`])
//! simulated annealing searches heightmaps that maximize average winter solar
//! irradiance while keeping the volume near a target. The best trade-offs are
//! rasterized into 16×16 top-view depth maps, a small convolutional VAE is
//! trained on them, and new geometries are produced by gradient descent over the
//! VAE's latent space against a boundary-only loss.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallel drivers,
//! the CLI and the HTTP service live in the `heliogen` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bench;
pub mod codec;
mod error;
pub mod latent;
pub mod math;
pub mod nn;
pub mod optimizer;
pub mod pareto;
pub mod scene;
pub mod solar;

pub use error::{Error, Result};

/// Deterministic generator used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG from a seed and an independent stream id.
///
/// Distinct streams of one seed never overlap, so per-item work (one boundary
/// condition, one restart) can be reproduced without replaying its neighbours.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
