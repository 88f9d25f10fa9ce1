//! Deterministic derivation of independent PRNG streams from one master seed.
//!
//! Every run owns a master seed; each instance and purpose-tagged stream
//! gets its own collision-resistant subseed so that parallel work is
//! reproducible regardless of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The PRNG family used throughout; the name is recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Mix a master seed, an instance index, and a purpose tag into an
/// independent stream seed.
pub fn derive_subseed(master_seed: u64, instance_index: u64, stream_tag: &str) -> u64 {
    let digest = subseed_digest(master_seed, instance_index, stream_tag);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Full-entropy RNG for one derived stream.
pub fn subseed_rng(master_seed: u64, instance_index: u64, stream_tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(subseed_digest(master_seed, instance_index, stream_tag))
}

fn subseed_digest(master_seed: u64, instance_index: u64, stream_tag: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(instance_index.to_le_bytes());
    hasher.update((stream_tag.len() as u64).to_le_bytes());
    hasher.update(stream_tag.as_bytes());
    hasher.finalize().into()
}
