//! Counter-based splittable random number generator.
//!
//! Every draw is a pure function of `(key, counter)`, so streams are
//! reproducible across runs and platforms, and `split` derives independent
//! child streams from a label without touching the parent state. Per-tensor
//! stochastic rounding relies on this: each call site owns a child keyed by
//! its role, and results do not depend on layer evaluation order.

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const SPLIT_TAG: u64 = 0xa076_1d64_78bd_642f;

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    key: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng {
            key: mix64(seed ^ GOLDEN_GAMMA),
            counter: 0,
        }
    }

    /// Derives an independent child stream from a textual label.
    ///
    /// Children with distinct labels get distinct keys; the parent is left
    /// untouched, so split order does not matter.
    pub fn split(&self, label: &str) -> Rng {
        let mut h = self.key ^ SPLIT_TAG;
        for &b in label.as_bytes() {
            h = mix64(h ^ u64::from(b));
        }
        h = mix64(h ^ (label.len() as u64));
        Rng { key: h, counter: 0 }
    }

    /// Numeric-label variant of [`split`](Self::split) for hot paths.
    pub fn split_index(&self, index: u64) -> Rng {
        Rng {
            key: mix64(self.key ^ SPLIT_TAG ^ mix64(index.wrapping_add(GOLDEN_GAMMA))),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)));
        self.counter += 1;
        v
    }

    /// Uniform draw in `[0, 1)` with 53 bits of mantissa.
    #[inline]
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::param("range", format!("lo={lo}, hi={hi}")));
        }
        Ok(lo + (hi - lo) * self.unit_f64())
    }

    /// Gaussian draw via Box-Muller; `std = 0` returns `mean` exactly.
    pub fn gaussian(&mut self, mean: f64, std: f64) -> Result<f64> {
        if std < 0.0 || !std.is_finite() || !mean.is_finite() {
            return Err(Error::param("std", format!("mean={mean}, std={std}")));
        }
        if std == 0.0 {
            return Ok(mean);
        }
        Ok(mean + std * self.standard_normal())
    }

    pub fn standard_normal(&mut self) -> f64 {
        // 1 - u keeps the log argument strictly positive.
        let u1 = 1.0 - self.unit_f64();
        let u2 = self.unit_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.unit_f64() * n as f64) as usize % n
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_labels_distinct_streams() {
        let root = Rng::new(1);
        let mut a = root.split("a");
        let mut b = root.split("b");
        let n = 10_000;
        let differing = (0..n)
            .filter(|_| a.next_u64() != b.next_u64())
            .count();
        assert!(differing >= n * 99 / 100, "only {differing}/{n} differ");
    }

    #[test]
    fn split_does_not_disturb_parent() {
        let mut a = Rng::new(5);
        let mut b = Rng::new(5);
        let _ = b.split("child");
        let _ = b.split_index(3);
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform_mean_law_of_large_numbers() {
        let mut rng = Rng::new(9);
        let n = 100_000;
        let mean: f64 =
            (0..n).map(|_| rng.uniform(0.0, 1.0).unwrap()).sum::<f64>() / n as f64;
        // 6 sigma of the sample mean: 6 * (1/sqrt(12)) / sqrt(n) ~ 0.0055
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn gaussian_zero_std_is_exact() {
        let mut rng = Rng::new(1);
        assert_eq!(rng.gaussian(3.25, 0.0).unwrap(), 3.25);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::new(17);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.gaussian(1.0, 2.0).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
        assert!((var - 4.0).abs() < 0.15, "var {var}");
    }

    #[test]
    fn invalid_params_rejected() {
        let mut rng = Rng::new(0);
        assert!(rng.uniform(1.0, 1.0).is_err());
        assert!(rng.uniform(2.0, -1.0).is_err());
        assert!(rng.gaussian(0.0, -0.5).is_err());
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = Rng::new(23);
        let mut v: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, (0..50).collect::<Vec<_>>());
    }
}
