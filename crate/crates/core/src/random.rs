//! Reproducible random streams.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Var;
use crate::error::{bail, Result};
use crate::tensor::{numel, Real, Tensor};

/// A seeded ChaCha8 stream whose full position can be saved and restored.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedStream {
    rng: ChaCha8Rng,
}

/// Distributions accepted by [`sample`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dist {
    StandardNormal,
    /// Half-open interval `[low, high)`.
    Uniform(f64, f64),
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent sub-stream `stream` of the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn fill_normal<T: Real>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| T::lit(self.normal())).collect()
    }

    /// Stream state as seven words: seed (4), stream id, word position (2).
    pub fn to_words(&self) -> [u64; 7] {
        let seed = self.rng.get_seed();
        let mut out = [0u64; 7];
        for (i, chunk) in seed.chunks_exact(8).enumerate() {
            let mut b = [0u8; 8];
            b.copy_from_slice(chunk);
            out[i] = u64::from_le_bytes(b);
        }
        out[4] = self.rng.get_stream();
        let pos = self.rng.get_word_pos();
        out[5] = pos as u64;
        out[6] = (pos >> 64) as u64;
        out
    }

    pub fn from_words(words: &[u64]) -> Result<Self> {
        if words.len() != 7 {
            bail!(Contract, "stream state needs 7 words, got {}", words.len());
        }
        let mut seed = [0u8; 32];
        for i in 0..4 {
            seed[i * 8..(i + 1) * 8].copy_from_slice(&words[i].to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(words[4]);
        rng.set_word_pos(u128::from(words[5]) | (u128::from(words[6]) << 64));
        Ok(Self { rng })
    }
}

/// Draws a constant (non-differentiable) tensor from `dist`.
pub fn sample<T: Real>(shape: &[usize], dist: Dist, stream: &mut SeedStream) -> Result<Var<T>> {
    let n = numel(shape);
    let data = match dist {
        Dist::StandardNormal => stream.fill_normal(n),
        Dist::Uniform(a, b) => {
            if !(b > a) {
                bail!(Contract, "uniform({a}, {b}) needs a < b");
            }
            let mut v: Vec<T> = (0..n).map(|_| T::lit(stream.uniform_range(a, b))).collect();
            // rounding to f32 can land exactly on the upper bound
            let hi = T::lit(b);
            for x in v.iter_mut() {
                if *x >= hi {
                    *x = T::lit(a);
                }
            }
            v
        }
    };
    Ok(Var::constant(Tensor::new(shape.to_vec(), data)?))
}
