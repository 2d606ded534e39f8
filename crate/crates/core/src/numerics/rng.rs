//! Seeded random streams.
//!
//! Every stochastic routine takes a [`SeedStream`] or a raw seed; there is no
//! ambient generator. Child streams are derived by mixing the parent seed with
//! a tag, so independent consumers never share state.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DenseMatrix;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically combine a seed with a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Hash a string label into a tag for [`derive_seed`].
pub fn label_tag(label: &str) -> u64 {
    // FNV-1a
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// A named, splittable 64-bit random stream.
#[derive(Clone, Debug)]
pub struct SeedStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by a numeric tag; does not advance `self`.
    pub fn child(&self, tag: u64) -> SeedStream {
        SeedStream::new(derive_seed(self.seed, tag))
    }

    /// Child stream keyed by a label; does not advance `self`.
    pub fn named(&self, label: &str) -> SeedStream {
        self.child(label_tag(label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        // Fisher-Yates
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `count` distinct elements of `items`, uniformly without replacement,
    /// in sampling order.
    pub fn sample_without_replacement<T: Copy>(&mut self, items: &[T], count: usize) -> Vec<T> {
        let mut pool = items.to_vec();
        let count = count.min(pool.len());
        for i in 0..count {
            let j = i + self.below(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| scale * self.normal())
    }

    /// Glorot/Xavier uniform initialization.
    pub fn glorot(&mut self, fan_in: usize, fan_out: usize) -> DenseMatrix {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        DenseMatrix::from_fn(fan_in, fan_out, |_, _| self.uniform_range(-limit, limit))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = SeedStream::new(7);
        let mut b = SeedStream::new(7);
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn children_differ_and_do_not_advance_parent() {
        let parent = SeedStream::new(3);
        let c1 = parent.child(1).next_u64_clone();
        let c2 = parent.child(2).next_u64_clone();
        assert_ne!(c1, c2);
        assert_eq!(parent.named("x").seed(), parent.named("x").seed());
        assert_ne!(parent.named("x").seed(), parent.named("y").seed());
    }

    #[test]
    fn sample_without_replacement_is_distinct() {
        let mut s = SeedStream::new(11);
        let items: Vec<usize> = (0..50).collect();
        let mut got = s.sample_without_replacement(&items, 20);
        got.sort_unstable();
        got.dedup();
        assert_eq!(got.len(), 20);
    }

    impl SeedStream {
        fn next_u64_clone(mut self) -> u64 {
            self.next_u64()
        }
    }
}
