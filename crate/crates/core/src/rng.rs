//! Deterministic random streams.
//!
//! Every consumer (bits, channel, noise, interleaver, ...) draws from its own
//! ChaCha stream keyed by SHA-256 of (master seed, purpose label, trial index).
//! Streams never share state, so trials can run in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derives the independent stream for `(seed, label, trial)`.
pub fn stream(seed: u64, label: &str, trial: u64) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(trial.to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
