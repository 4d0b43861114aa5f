//! Counter-based random streams.
//!
//! Every random draw in the crate is addressed by a `(seed, substream)` pair.
//! A stream maps to a ChaCha8 generator keyed by the seed with the substream
//! id as its stream counter, so results do not depend on scheduling order.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stream {
    pub seed: u64,
    pub id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream { seed, id: 0 }
    }

    /// Derives the `k`-th child substream.
    pub fn child(&self, k: u64) -> Stream {
        Stream {
            seed: self.seed,
            id: splitmix64(self.id.rotate_left(17) ^ splitmix64(k.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.id);
        rng
    }
}

/// `n` i.i.d. standard normal draws from `stream`.
pub fn sample_gaussian(n: usize, stream: Stream) -> DVector<f64> {
    let mut rng = stream.rng();
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)))
}

// Substream tags used across modules.
pub(crate) const TAG_SEARCH: u64 = 1;
pub(crate) const TAG_MODEL_CS: u64 = 2;
pub(crate) const TAG_BOOTSTRAP: u64 = 3;
pub(crate) const TAG_GENERATE: u64 = 4;
pub(crate) const TAG_FUNCTIONAL: u64 = 5;
