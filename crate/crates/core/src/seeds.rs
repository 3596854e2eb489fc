//! Derivation of per-stream RNG seeds from one run seed.

pub(crate) const NET_INIT: u64 = 0x11;
pub(crate) const ACTION: u64 = 0x22;
pub(crate) const BATCH: u64 = 0x33;

/// SplitMix64 mix of a base seed and a stream tag. Streams derived from the
/// same base seed are decorrelated yet fully reproducible.
pub(crate) fn derive(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
