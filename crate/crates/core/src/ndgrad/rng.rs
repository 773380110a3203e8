use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::Tensor;

/// Seeded ChaCha8 generator.
///
/// `Rng::new(seed)` and `Rng::stream(seed, id)` always produce the same
/// sequence for the same arguments. Distinct stream ids are independent
/// ChaCha streams of the same key, which is how per-epoch and per-purpose
/// generators are derived from one master seed.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { inner }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Standard normal via Box–Muller; the second variate is discarded so
    /// every draw consumes exactly two uniforms.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `n` i.i.d. draws from `N(mean, std²)` as a rank-1 tensor.
pub fn gaussian_draw<T: Scalar>(rng: &mut Rng, n: usize, mean: T, std: T) -> Tensor<T> {
    let (m, s) = (mean.f64(), std.f64());
    Tensor::vector((0..n).map(|_| T::of(rng.normal(m, s))).collect())
}
