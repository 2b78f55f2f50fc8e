//! Stable seed derivation.
//!
//! Every random stream in the harness is keyed by a tuple of labels and
//! integers, hashed with SHA-256. The mapping is independent of platform,
//! thread count and execution order, so any single cell of a run matrix can
//! be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One component of a seed key.
#[derive(Debug, Clone, Copy)]
pub enum SeedPart<'a> {
    Str(&'a str),
    Int(u64),
}

impl<'a> From<&'a str> for SeedPart<'a> {
    fn from(s: &'a str) -> Self {
        SeedPart::Str(s)
    }
}

impl<'a> From<&'a String> for SeedPart<'a> {
    fn from(s: &'a String) -> Self {
        SeedPart::Str(s.as_str())
    }
}

impl From<u64> for SeedPart<'_> {
    fn from(v: u64) -> Self {
        SeedPart::Int(v)
    }
}

impl From<usize> for SeedPart<'_> {
    fn from(v: usize) -> Self {
        SeedPart::Int(v as u64)
    }
}

/// Hashes the key parts into a 64-bit seed.
///
/// Parts are length-prefixed and type-tagged so `("ab", "c")` and
/// `("a", "bc")` never collide.
pub fn derive_seed(parts: &[SeedPart<'_>]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        match part {
            SeedPart::Str(s) => {
                hasher.update([0u8]);
                hasher.update((s.len() as u64).to_le_bytes());
                hasher.update(s.as_bytes());
            }
            SeedPart::Int(v) => {
                hasher.update([1u8]);
                hasher.update(v.to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// The generator used throughout the crate. ChaCha8 output is specified
/// independently of the `rand` version, which keeps stored trajectories
/// reproducible across dependency upgrades.
pub type HarnessRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> HarnessRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for replicate `index` of a resampling loop. Each replicate owns
/// its own stream, so results do not depend on how replicates are scheduled.
pub fn replicate_rng(seed: u64, index: u64) -> HarnessRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_separating() {
        let a = derive_seed(&["ab".into(), "c".into()]);
        let b = derive_seed(&["a".into(), "bc".into()]);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(&["ab".into(), "c".into()]));
        assert_ne!(derive_seed(&[1u64.into()]), derive_seed(&["1".into()]));
    }

    #[test]
    fn replicate_streams_differ() {
        let x: u64 = replicate_rng(7, 0).random();
        let y: u64 = replicate_rng(7, 1).random();
        assert_ne!(x, y);
        let z: u64 = replicate_rng(7, 1).random();
        assert_eq!(y, z);
    }
}
