//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! experiment's root seed. Stages never share a generator: each one selects
//! its own ChaCha stream, numbered `(stage << 32) | index`, so adding draws to
//! one stage cannot shift the numbers another stage sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Synth = 1,
    Split = 2,
    Init = 3,
    Dropout = 4,
    Folds = 5,
}

pub fn stream(root_seed: u64, stage: Stage, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(((stage as u64) << 32) | (index & 0xffff_ffff));
    rng
}
