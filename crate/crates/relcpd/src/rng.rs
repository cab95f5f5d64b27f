//! Deterministic, parallel-safe random-number streams.
//!
//! Every stochastic computation in this crate draws from a ChaCha stream
//! derived from a `(seed, stream index)` pair via SplitMix64 mixing. Because
//! each logical unit of work (a Monte Carlo replication, a simulated time
//! step) owns its own derived stream, results are bit-identical no matter how
//! the work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One step of SplitMix64.
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for logical stream `stream` of master `seed`.
///
/// Used to give every experiment cell / replication its own reproducible
/// sub-seed independent of evaluation order.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut state = seed;
    let mixed = splitmix64(&mut state) ^ stream.wrapping_mul(GOLDEN | 1);
    let mut state2 = mixed;
    splitmix64(&mut state2)
}

/// Construct an independent ChaCha RNG for logical stream `stream` of
/// master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut state = derive_seed(seed, stream);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(bytes)
}
