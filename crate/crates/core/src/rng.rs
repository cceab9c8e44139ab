//! Counter-based random streams.
//!
//! Every Monte Carlo trial owns a ChaCha8 keystream addressed by
//! `(seed, point, trial)`: the seed selects the key, the sweep point selects
//! the 64-bit stream id and the trial index selects a disjoint block of the
//! counter space. A trial's draws therefore do not depend on how trials are
//! split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words of keystream reserved for one trial (`2^32` 32-bit words).
const TRIAL_STRIDE_BITS: u32 = 32;

pub type TrialRng = ChaCha8Rng;

/// Random stream for a given trial of a given sweep point.
pub fn trial_rng(seed: u64, point: u64, trial: u64) -> TrialRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    // Domain tag so that other uses of the same seed never collide.
    key[8..16].copy_from_slice(b"ed-trial");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(point);
    rng.set_word_pos((trial as u128) << TRIAL_STRIDE_BITS);
    rng
}

/// Stream for auxiliary, non-trial randomness (e.g. optimizer restarts).
pub fn aux_rng(seed: u64, stream: u64) -> TrialRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(b"ed-auxil");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}
