//! Seeded random stream shared by every sampler.
//!
//! Parallel work never shares a stream: a parent hands out numbered
//! substreams (same ChaCha key, distinct stream ids), so results depend only
//! on the seed and never on scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

#[derive(Clone, Debug)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// `count` independent substreams. Advances `self` by one draw.
    pub fn split(&mut self, count: usize) -> Vec<RandomStream> {
        let base = self.inner.next_u64();
        (0..count)
            .map(|k| {
                let mut inner = ChaCha8Rng::seed_from_u64(base);
                inner.set_stream(k as u64);
                RandomStream { inner }
            })
            .collect()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn standard_normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Gamma with the given shape and *rate*.
    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        Gamma::new(shape, 1.0 / rate)
            .expect("gamma parameters must be positive")
            .sample(&mut self.inner)
    }

    /// Inverse gamma with density ∝ x^{−a−1} e^{−b/x}.
    pub fn inv_gamma(&mut self, shape: f64, scale: f64) -> f64 {
        1.0 / self.gamma(shape, scale)
    }

    pub fn chi_squared(&mut self, df: f64) -> f64 {
        ChiSquared::new(df)
            .expect("chi-squared degrees of freedom must be positive")
            .sample(&mut self.inner)
    }
}
