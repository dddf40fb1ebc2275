//! Site-specific analog beam codebook learning from digital-twin channels.
//!
//! The crate is organised as a pipeline:
//!
//! * [`mimo`] holds the array/channel algebra, quantized beams, codebooks and
//!   the classical baselines (DFT grid, equal-gain bound, exhaustive search).
//! * [`scene`] is a 2.5D urban scene model with an image-method ray tracer and
//!   fidelity knobs used to derive an imperfect "twin" of a target scene.
//! * [`clustering`] groups users by the gains they see on random sensing beams.
//! * [`drl`] learns one quantized beam per user cluster with DDPG.
//! * [`eval`] scores codebooks on a dataset and runs fidelity sensitivity sweeps.
//! * [`pipeline`] wires clustering and training together for single or
//!   LoS/NLoS split codebooks.
//! * [`cli`] is the command-line front end and the file formats it persists.

pub mod cli;
pub mod clustering;
pub mod drl;
pub mod error;
pub mod eval;
pub mod mimo;
pub mod pipeline;
pub mod scene;

pub use error::{Error, Result};

/// Derives an independent stream seed from a parent seed and a stream index.
///
/// SplitMix64 finalizer; distinct `(seed, stream)` pairs give well separated
/// seeds, so per-cluster or per-user RNGs never share a sequence.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
