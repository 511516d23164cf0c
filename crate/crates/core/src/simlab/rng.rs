//! Counter-addressed random streams.
//!
//! Every draw is a pure function of `(seed, stream, unit index)`, so results do not
//! depend on evaluation order or thread count. The generator is ChaCha8 from
//! `rand_chacha` 0.3.1, pinned in the manifest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 32-bit words reserved per unit: four `f64` draws.
pub const WORDS_PER_UNIT: u128 = 8;

pub const STREAM_GENERATE: u64 = 0;
pub const STREAM_MASK: u64 = 1;
pub const STREAM_MECHANISM: u64 = 2;

/// Stream id of a per-replication role (`STREAM_GENERATE`, `STREAM_MASK`, `STREAM_MECHANISM`).
pub fn replication_stream(rep: u64, role: u64) -> u64 {
    ((rep + 1) << 8) | role
}

/// A stream positioned at unit `index`.
pub fn unit_stream(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(index as u128 * WORDS_PER_UNIT);
    rng
}

/// Reads the four uniforms of consecutive units from a positioned stream.
pub struct UnitDraws {
    rng: ChaCha8Rng,
}

impl UnitDraws {
    pub fn new(seed: u64, stream: u64, first: u64) -> Self {
        Self { rng: unit_stream(seed, stream, first) }
    }

    /// Uniforms in `[0, 1)` for the next unit.
    pub fn next_unit(&mut self) -> [f64; 4] {
        let mut u = [0.0; 4];
        for x in &mut u {
            *x = self.rng.gen::<f64>();
        }
        u
    }
}

/// `n` uniforms for small parameter draws (e.g. a random mechanism).
pub fn uniforms(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = unit_stream(seed, stream, 0);
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// A deterministic permutation of `0..n`.
pub fn permutation(seed: u64, stream: u64, n: usize) -> Vec<usize> {
    let mut rng = unit_stream(seed, stream, 0);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
