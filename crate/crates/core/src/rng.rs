//! Reproducible random streams.
//!
//! Every random draw in a run is addressed by `(master seed, stream id, draw
//! index)`. The master seed keys a ChaCha8 generator, the stream id selects one
//! of its 2^64 independent streams, and the draw index is the position inside
//! that stream. Two calls with the same address always see the same numbers,
//! whatever thread executes them and in whatever order.
//!
//! Stream ids pack a domain tag and two counters:
//!
//! ```text
//!  63 62 | 61 ............. 24 | 23 ........ 0
//!  domain|        n (38 bits)  | index (24 bits)
//! ```
//!
//! The packing is injective, so streams from different domains (development
//! draws, the validation draw, tuning draws, bootstrap resampling) can never
//! collide.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const N_BITS: u32 = 38;
const INDEX_BITS: u32 = 24;

/// Largest `n` a stream id can carry.
pub const MAX_STREAM_N: u64 = (1 << N_BITS) - 1;
/// Largest replicate / purpose index a stream id can carry.
pub const MAX_STREAM_INDEX: u64 = (1 << INDEX_BITS) - 1;

/// Namespace of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Bootstrap resampling for quantile standard errors.
    Boot,
    /// Development samples, addressed by (n, replicate).
    Dev,
    /// Validation samples.
    Val,
    /// Generator tuning and re-evaluation draws.
    Tune,
}

impl Domain {
    fn code(self) -> u64 {
        match self {
            Domain::Boot => 0,
            Domain::Dev => 1,
            Domain::Val => 2,
            Domain::Tune => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Domain::Boot => "boot",
            Domain::Dev => "dev",
            Domain::Val => "val",
            Domain::Tune => "tune",
        }
    }
}

/// Identifier of one random stream under a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamId(u64);

impl StreamId {
    /// Packs `(domain, n, index)` into a stream id.
    ///
    /// Panics if `n > MAX_STREAM_N` or `index > MAX_STREAM_INDEX`.
    pub fn new(domain: Domain, n: u64, index: u64) -> Self {
        assert!(n <= MAX_STREAM_N, "stream n {n} exceeds {MAX_STREAM_N}");
        assert!(
            index <= MAX_STREAM_INDEX,
            "stream index {index} exceeds {MAX_STREAM_INDEX}"
        );
        StreamId((domain.code() << (N_BITS + INDEX_BITS)) | (n << INDEX_BITS) | index)
    }

    pub fn dev(n: u64, replicate: u64) -> Self {
        Self::new(Domain::Dev, n, replicate)
    }

    pub fn val(n: u64, index: u64) -> Self {
        Self::new(Domain::Val, n, index)
    }

    pub fn tune(index: u64) -> Self {
        Self::new(Domain::Tune, 0, index)
    }

    pub fn boot(n: u64, index: u64) -> Self {
        Self::new(Domain::Boot, n, index)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn domain(self) -> Domain {
        match self.0 >> (N_BITS + INDEX_BITS) {
            0 => Domain::Boot,
            1 => Domain::Dev,
            2 => Domain::Val,
            _ => Domain::Tune,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands a 64-bit master seed into a 256-bit ChaCha key with SplitMix64.
fn expand_seed(master_seed: u64) -> [u8; 32] {
    let mut state = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// A 64-bit seed for consumers that take a plain seed (stochastic model
/// strategies, bootstrap resampling), derived from a stream address.
pub fn derive_seed(master_seed: u64, stream: StreamId) -> u64 {
    let mut state = master_seed ^ stream.raw().rotate_left(29);
    splitmix64(&mut state);
    splitmix64(&mut state)
}

/// Generator positioned at the start of `stream` under `master_seed`.
pub fn stream_rng(master_seed: u64, stream: StreamId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(expand_seed(master_seed));
    rng.set_stream(stream.raw());
    rng.set_word_pos(0);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_address_same_numbers() {
        let a: Vec<u64> = stream_rng(7, StreamId::dev(100, 3))
            .random_iter()
            .take(16)
            .collect();
        let b: Vec<u64> = stream_rng(7, StreamId::dev(100, 3))
            .random_iter()
            .take(16)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let a: u64 = stream_rng(7, StreamId::dev(100, 3)).random();
        let b: u64 = stream_rng(7, StreamId::dev(100, 4)).random();
        let c: u64 = stream_rng(8, StreamId::dev(100, 3)).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn domains_are_disjoint() {
        for n in [0u64, 1, 50, 3510, MAX_STREAM_N] {
            for r in [0u64, 1, 399, MAX_STREAM_INDEX] {
                let ids = [
                    StreamId::dev(n, r),
                    StreamId::val(n, r),
                    StreamId::boot(n, r),
                    StreamId::new(Domain::Tune, n, r),
                ];
                for (i, a) in ids.iter().enumerate() {
                    assert_eq!(a.domain().tag(), [ "dev", "val", "boot", "tune"][i]);
                    for b in &ids[i + 1..] {
                        assert_ne!(a, b);
                    }
                }
            }
        }
    }

    #[test]
    #[should_panic]
    fn oversized_n_rejected() {
        StreamId::dev(MAX_STREAM_N + 1, 0);
    }
}
