//! Seed derivation. One experiment seed fans out to per-stage and per-item
//! streams through a fixed hash, so adding items or stages never perturbs
//! the randomness of unrelated work.

/// FNV-1a over raw bytes. Stable across platforms and versions, which the
/// std hasher does not promise.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// splitmix64 finalizer; decorrelates nearby inputs.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a named stage of an experiment.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    splitmix(base ^ fnv1a(label.as_bytes()))
}

/// Seed for the `index`-th item of a batch (stories, requests).
pub fn derive_indexed_seed(base: u64, index: u64) -> u64 {
    splitmix(base ^ (index.wrapping_add(1)).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_are_stable_and_distinct() {
        let a = derive_seed(7, "synth");
        assert_eq!(a, derive_seed(7, "synth"));
        assert_ne!(a, derive_seed(7, "train"));
        assert_ne!(a, derive_seed(8, "synth"));
    }

    #[test]
    fn indexed_seeds_do_not_collide_in_small_batches() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..10_000 {
            assert!(seen.insert(derive_indexed_seed(42, i)));
        }
    }
}
