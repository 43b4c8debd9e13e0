//! Seeded, counter-addressed random streams.
//!
//! Every random draw made by an experiment comes from a ChaCha8 stream keyed
//! by `(seed, k, role)`. Two runs with the same seed therefore see the same
//! samples at the same iteration and role, whatever else they do in between.
//! This is what makes paired algorithm comparisons possible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Which gradient estimate a draw belongs to within one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// Estimate at the current iterate x_k.
    X = 0,
    /// Estimate at the previous iterate x_{k-1}.
    XPrev = 1,
    /// Estimate at the extrapolated point y_k.
    Y = 2,
    /// Anything else attached to iteration k (initial points, pools).
    Aux = 3,
}

const ROLES: u64 = 4;

/// A family of independent streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStream {
    seed: u64,
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an unrelated family, e.g. one per algorithm when draws must not
    /// be shared.
    pub fn fork(&self, salt: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(salt.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }

    pub fn rng(&self, k: usize, role: Role) -> Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((k as u64).wrapping_mul(ROLES) + role as u64);
        rng
    }
}

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
