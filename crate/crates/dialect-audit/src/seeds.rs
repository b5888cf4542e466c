//! Seed derivation for reproducible trials. Every trial gets a base seed
//! derived from (run seed, trial index) via splitmix64, so resumption and
//! parallel dispatch never change any randomization. Independent decisions
//! within a trial draw from numbered ChaCha streams of that base seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
pub fn splitmix64(z: u64) -> u64 {
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Base seed for one trial: random access into the splitmix64 sequence
/// started at the run seed.
pub fn trial_seed(run_seed: u64, trial_index: u64) -> u64 {
    splitmix64(run_seed.wrapping_add(trial_index.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// FNV-1a hash, used to fold string keys (backend ids, cell labels) into seeds.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Purpose-keyed randomness streams within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Coin deciding which writer letter takes the dialect role.
    WriterCoin = 0,
    /// Adjective sampling and shuffling.
    Adjectives = 1,
    /// Decision concept draw and slot order.
    Concepts = 2,
    /// Noise injection for the noisy control setting.
    Noise = 3,
    /// Mock backend reply randomness.
    MockReply = 4,
    /// Bootstrap resampling.
    Bootstrap = 5,
}

/// RNG for one purpose stream of a trial. Streams with the same base seed
/// are statistically independent.
pub fn stream_rng(base_seed: u64, stream: Stream) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(base_seed);
    rng.set_stream(stream as u64);
    rng
}
