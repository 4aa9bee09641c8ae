//! Deterministic counter-based randomness.
//!
//! Every random factor used by the metric is a pure function of
//! (global seed, origin, oversample iteration, element id), so results never
//! depend on thread count or evaluation order, and any draw can be recomputed
//! in isolation. Draws come from a splitmix64-style avalanche of the key,
//! mapped through the inverse normal CDF where a Gaussian is needed.

use crate::math;

const MASK: u64 = 0x7fff_ffff_ffff_ffff;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Strictly inside (0, 1) so the normal quantile stays finite. 52-bit
/// resolution: the +0.5 offset stays exactly representable at the top of the
/// range, so neither endpoint is ever produced.
#[inline]
pub fn uniform01(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / 4503599627370496.0)
}

/// One substream of the global generator, keyed by origin and oversample
/// iteration. `at(i)` is pure; the same (seed, key, index) always yields the
/// same value. `next_uniform` is a sequential convenience over the same space.
#[derive(Clone, Debug)]
pub struct RandStream {
    base: u64,
    counter: u64,
}

impl RandStream {
    pub fn new(global_seed: u64, origin: u64, iteration: u64) -> Self {
        let base = mix64(mix64(mix64(global_seed) ^ origin) ^ iteration);
        RandStream { base, counter: 0 }
    }

    /// Uniform in (0, 1) for the given draw index.
    #[inline]
    pub fn at(&self, draw_index: u64) -> f64 {
        uniform01(mix64(self.base ^ draw_index))
    }

    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        let u = self.at(self.counter | !MASK);
        self.counter += 1;
        u
    }
}

/// Inverse standard normal CDF (Acklam's rational approximation, relative
/// error below 1.2e-9 across (0, 1); ample for factors that are averaged over
/// many oversample draws).
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = math::sqrt(-2.0 * math::ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = math::sqrt(-2.0 * math::ln(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Small sequential generator for shuffles and synthetic noise. Same mixing
/// core as [`RandStream`], separate key space.
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: mix64(seed ^ 0x6c62_272e_07bb_0142), counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.state ^ self.counter);
        self.counter += 1;
        v
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        uniform01(self.next_u64())
    }

    pub fn normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }

    /// Uniform integer in [0, n) via the multiply-shift reduction.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_draws_are_pure_and_keyed() {
        let s = RandStream::new(1, 7, 3);
        assert_eq!(s.at(42).to_bits(), s.at(42).to_bits());
        assert_ne!(s.at(42).to_bits(), s.at(43).to_bits());
        let other = RandStream::new(1, 7, 4);
        assert_ne!(s.at(42).to_bits(), other.at(42).to_bits());
        let reseeded = RandStream::new(2, 7, 3);
        assert_ne!(s.at(42).to_bits(), reseeded.at(42).to_bits());
    }

    #[test]
    fn uniform_stays_inside_open_interval() {
        assert_eq!(uniform01(0), 0.5 / 4503599627370496.0);
        assert_eq!(uniform01(u64::MAX), 1.0 - 0.5 / 4503599627370496.0);
        assert!(uniform01(0) > 0.0);
        assert!(uniform01(u64::MAX) < 1.0);
    }

    #[test]
    fn quantile_matches_known_values() {
        assert!((normal_quantile(0.5)).abs() < 1e-12);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((normal_quantile(0.025) + 1.959963984540054).abs() < 1e-8);
        assert!((normal_quantile(0.8413447460685429) - 1.0).abs() < 1e-7);
        assert!((normal_quantile(1e-10) + 6.361340902404056).abs() < 1e-5);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = Rng::new(9);
        let mut v: Vec<u32> = (0..100).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn below_is_in_range() {
        let mut rng = Rng::new(4);
        for _ in 0..1000 {
            assert!(rng.below(7) < 7);
        }
    }
}
