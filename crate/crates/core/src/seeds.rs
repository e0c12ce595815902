//! Named sub-seeds derived from one master seed, so data, initialization
//! and shuffling can be varied independently.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Shuffle = 3,
    Split = 4,
}

/// First word of the ChaCha stream `stream` keyed by `master`.
pub fn sub_seed(master: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream as u64);
    rng.next_u64()
}
