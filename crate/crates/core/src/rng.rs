//! Seeded, splittable random streams.
//!
//! Every stochastic consumer derives its own labeled substream from one
//! 64-bit seed, so adding a consumer never perturbs the others and
//! parallel work stays reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self(splitmix64(seed))
    }

    pub fn derive(self, label: &str) -> Self {
        Self(splitmix64(self.0 ^ fnv1a(label)))
    }

    pub fn child(self, index: u64) -> Self {
        Self(splitmix64(self.0.wrapping_add(splitmix64(index))))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
