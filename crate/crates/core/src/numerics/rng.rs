use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Seed plus stream selector for a ChaCha8 counter-based generator.
///
/// The same `(seed, stream)` pair yields the same sequence on every
/// platform; independent work items derive their own stream with
/// [`RngState::derive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Child stream keyed by `key`.
    pub fn derive(&self, key: u64) -> Self {
        Self { seed: self.seed, stream: splitmix64(self.stream ^ splitmix64(key.wrapping_add(0x5851_f42d_4c95_7f2d))) }
    }

    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sample_standard_normal(rng: &RngState, n: usize) -> Vec<f64> {
    let mut g = rng.generator();
    (0..n).map(|_| g.sample(StandardNormal)).collect()
}

pub fn sample_uniform(rng: &RngState, n: usize, low: f64, high: f64) -> Vec<f64> {
    let mut g = rng.generator();
    (0..n).map(|_| g.random_range(low..high)).collect()
}
