//! Counter-based random streams.
//!
//! Every simulated run draws from its own ChaCha8 stream selected by
//! `(master_seed, domain, index)`, so the numbers a run sees do not depend on
//! which worker executes it or in which order runs are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinguishes independent families of runs sharing a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    ChargePlus = 1,
    ChargeMinus = 2,
    Gaussian = 3,
    Decay = 4,
    Calibration = 5,
    Labels = 6,
    Misc = 7,
}

const INDEX_BITS: u32 = 48;

/// Returns the generator for run `index` of `domain`.
pub fn stream(master_seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    assert!(index < (1 << INDEX_BITS), "run index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((domain as u64) << INDEX_BITS) | index);
    rng
}
