//! Seeded Gaussian noise.
//!
//! Standard normals are produced by the Box-Muller transform from two uniform
//! draws of a ChaCha20 stream; only the cosine branch is used, so each normal
//! consumes exactly two `u64` words and the stream position fully describes
//! the generator state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Source of i.i.d. standard normal draws.
pub trait NoiseSource {
    fn standard_normal(&mut self) -> f64;

    /// `N(0, scale^2)`.
    fn normal(&mut self, scale: f64) -> f64 {
        scale * self.standard_normal()
    }
}

#[derive(Debug, Clone)]
pub struct GaussianNoise {
    seed: u64,
    rng: ChaCha20Rng,
}

/// Serializable position of a [`GaussianNoise`] stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseCheckpoint {
    pub seed: u64,
    /// ChaCha word position; kept as a decimal string in JSON since it is a u128.
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl GaussianNoise {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn checkpoint(&self) -> NoiseCheckpoint {
        NoiseCheckpoint {
            seed: self.seed,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn restore(checkpoint: NoiseCheckpoint) -> Self {
        let mut noise = Self::new(checkpoint.seed);
        noise.rng.set_word_pos(checkpoint.word_pos);
        noise
    }
}

impl NoiseSource for GaussianNoise {
    fn standard_normal(&mut self) -> f64 {
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Noise source that always returns zero; for noiseless reference runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}
