//! 64-bit FNV-1a.
//!
//! Used by the hashing embedder, the daily verse selection and the corpus
//! fingerprint. The constants are the published FNV-1a 64 parameters.

const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(OFFSET_BASIS, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(PRIME)
    })
}
