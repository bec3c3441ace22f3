//! Seeded random streams with labeled substreams.
//!
//! Every random decision in a run draws from a substream named by its purpose
//! ("init/enc/w1", "noise/step42/ce/l0", ...). Substreams of one seed are
//! mutually independent ChaCha streams, so adding or removing one consumer
//! (say, a variant that skips decoder initialization) leaves every other
//! stream untouched. That is what makes ablation variants comparable under a
//! single seed and training runs bit-for-bit reproducible.

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// FNV-1a hash of a label path, used as the ChaCha stream id.
fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A deterministic random stream identified by `(seed, label path)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    path: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Root stream for a seed (empty label path).
    pub fn new(seed: u64) -> Self {
        Self::with_path(seed, String::new())
    }

    fn with_path(seed: u64, path: String) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a64(&path));
        Self { seed, path, rng }
    }

    /// Child stream at `label`, independent of this stream's position.
    pub fn substream(&self, label: &str) -> Self {
        let path = if self.path.is_empty() {
            label.to_string()
        } else {
            format!("{}/{}", self.path, label)
        };
        Self::with_path(self.seed, path)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    /// Next raw 64 bits.
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Unbiased draw from `[0, bound)` by rejection sampling.
    pub fn uniform_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "uniform_below: bound must be positive");
        let zone = (u64::MAX / bound) * bound;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// Standard normal draw.
    pub fn normal_f64(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Fill a slice with draws from `N(mean, std^2)`.
    pub fn fill_normal<S: Scalar>(&mut self, out: &mut [S], mean: f64, std: f64) {
        for v in out.iter_mut() {
            *v = S::from_f64(mean + std * self.normal_f64());
        }
    }

    /// Tensor of draws from `N(0, sigma^2)`; `sigma` must be finite and >= 0.
    ///
    /// `sigma == 0` returns zeros without consuming any draws; each noise
    /// consumer owns a dedicated substream, so skipping draws here cannot
    /// shift any other stream.
    pub fn normal_tensor<S: Scalar>(
        &mut self,
        rows: usize,
        cols: usize,
        sigma: f64,
    ) -> Result<Tensor<S>> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::Config(format!(
                "noise std must be finite and non-negative, got {sigma}"
            )));
        }
        if sigma == 0.0 {
            return Ok(Tensor::zeros(rows, cols));
        }
        let mut data = vec![S::zero(); rows * cols];
        self.fill_normal(&mut data, 0.0, sigma);
        Tensor::new(rows, cols, data)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.uniform_below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_path_reproduce_bitwise() {
        let mut a = RngStream::new(7).substream("noise/step3/l1");
        let mut b = RngStream::new(7).substream("noise/step3/l1");
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_labels_give_different_streams() {
        let mut a = RngStream::new(7).substream("init/w1");
        let mut b = RngStream::new(7).substream("init/w2");
        let draws_a: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let draws_b: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(draws_a, draws_b, "distinct labels must not collide");
    }

    #[test]
    fn nested_substream_equals_joined_path() {
        let mut nested = RngStream::new(3).substream("a").substream("b");
        let mut joined = RngStream::new(3).substream("a/b");
        assert_eq!(nested.path(), "a/b");
        for _ in 0..10 {
            assert_eq!(nested.next_u64(), joined.next_u64());
        }
    }

    #[test]
    fn sibling_consumption_does_not_shift_substreams() {
        // Consuming from one substream must not move its siblings.
        let root = RngStream::new(11);
        let mut a1 = root.substream("a");
        let _ = a1.next_u64();
        let mut b_after = root.substream("b");
        let mut b_fresh = RngStream::new(11).substream("b");
        for _ in 0..10 {
            assert_eq!(b_after.next_u64(), b_fresh.next_u64());
        }
    }

    #[test]
    fn normal_draws_have_requested_moments() {
        let mut rng = RngStream::new(1234).substream("moments");
        let n = 1_000_000usize;
        let sigma = 0.3f64;
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for _ in 0..n {
            let x = sigma * rng.normal_f64();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let std = (sumsq / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.01, "sample mean {mean} too far from 0");
        assert!(
            (std - sigma).abs() < 0.01 * sigma.max(1.0),
            "sample std {std} too far from {sigma}"
        );
    }

    #[test]
    fn normal_tensor_sigma_zero_is_zeros_and_draw_free() {
        let mut rng = RngStream::new(5).substream("z");
        let t: Tensor<f32> = rng.normal_tensor(3, 4, 0.0).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
        // The stream position is untouched.
        let mut fresh = RngStream::new(5).substream("z");
        assert_eq!(rng.next_u64(), fresh.next_u64());
    }

    #[test]
    fn normal_tensor_rejects_bad_sigma() {
        let mut rng = RngStream::new(5);
        assert!(rng.normal_tensor::<f32>(1, 1, -0.1).is_err());
        assert!(rng.normal_tensor::<f32>(1, 1, f64::NAN).is_err());
    }

    #[test]
    fn uniform_below_stays_in_range_and_covers_values() {
        let mut rng = RngStream::new(99).substream("u");
        let bound = 7u64;
        let mut seen = [0u32; 7];
        for _ in 0..7000 {
            let v = rng.uniform_below(bound);
            assert!(v < bound);
            seen[v as usize] += 1;
        }
        for (i, &count) in seen.iter().enumerate() {
            assert!(count > 800, "value {i} drawn only {count}/7000 times");
        }
    }

    #[test]
    fn shuffle_is_a_deterministic_permutation() {
        let mut xs: Vec<usize> = (0..50).collect();
        let mut ys = xs.clone();
        RngStream::new(42).substream("perm").shuffle(&mut xs);
        RngStream::new(42).substream("perm").shuffle(&mut ys);
        assert_eq!(xs, ys, "same stream must shuffle identically");
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>(), "shuffle must be a permutation");
        assert_ne!(xs, (0..50).collect::<Vec<_>>(), "shuffle left 50 items in place");
    }
}
