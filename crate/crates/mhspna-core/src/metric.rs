//! Hybrid angular/Euclidean routing metric with randomized perturbation.
//!
//! Traversing a link costs `(a * curvature_deg + (1 - a) * length_m) * rand`;
//! turning at a junction costs `a * angle_deg * rand`. Degrees and metres are
//! combined literally, without rescaling. Each `rand` factor is drawn as
//! Normal(mean 1, sigma) censored to the clamp range: draws outside the range
//! move to the nearest endpoint. The radius metric is plain length with free
//! turns and is never randomized.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::math;
use crate::network::{Link, SpatialNetwork};
use crate::rng::{normal_quantile, RandStream};

pub const DEFAULT_CLAMP: (f64, f64) = (0.1, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Angular/Euclidean blend in [0, 1]: 0 is pure Euclidean, 1 pure angular.
    pub a: f64,
    /// Spread of the random factor; 0 disables randomization entirely.
    pub sigma: f64,
    pub clamp: (f64, f64),
    /// Paths sampled per origin; flows are averaged over the samples.
    pub oversample: u32,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams { a: 0.5, sigma: 1.0, clamp: DEFAULT_CLAMP, oversample: 50 }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<(), MetricError> {
        let fail = |reason: alloc::string::String| Err(MetricError::InvalidParams { reason });
        if !(self.a >= 0.0 && self.a <= 1.0) {
            return fail(format!("a must lie in [0,1], got {}", self.a));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be finite and nonnegative, got {}", self.sigma));
        }
        let (lo, hi) = self.clamp;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
            return fail(format!("clamp must satisfy 0 < lo <= 1 <= hi, got ({lo}, {hi})"));
        }
        if self.oversample == 0 {
            return fail("oversample must be at least 1".into());
        }
        Ok(())
    }
}

/// One censored-normal factor. With sigma 0 this is exactly 1.0.
#[inline]
pub fn factor_from_uniform(u: f64, params: &MetricParams) -> f64 {
    if params.sigma == 0.0 {
        return 1.0;
    }
    math::clamp(1.0 + params.sigma * normal_quantile(u), params.clamp.0, params.clamp.1)
}

/// Sequential draw from a stream; see [`RandStream::at`] for keyed access.
pub fn sample_rand(stream: &mut RandStream, params: &MetricParams) -> f64 {
    factor_from_uniform(stream.next_uniform(), params)
}

/// Cost of traversing a whole link under the routing metric.
#[inline]
pub fn link_cost(link: &Link, params: &MetricParams, rand: f64) -> f64 {
    (params.a * link.angular_curvature + (1.0 - params.a) * link.length) * rand
}

/// Cost of a junction turn through `angle_deg` in [0, 180].
#[inline]
pub fn turn_cost(angle_deg: f64, params: &MetricParams, rand: f64) -> f64 {
    params.a * angle_deg * rand
}

/// Radius metric contribution of a link: its length. Junction turns are free.
#[inline]
pub fn radius_cost(link: &Link) -> f64 {
    link.length
}

/// Precomputed deterministic base costs, shared across all origins.
#[derive(Clone, Debug)]
pub struct CostBasis {
    pub hybrid: alloc::vec::Vec<f64>,
    pub length: alloc::vec::Vec<f64>,
}

impl CostBasis {
    pub fn new(net: &SpatialNetwork, params: &MetricParams) -> Self {
        let hybrid = net
            .links()
            .iter()
            .map(|l| params.a * l.angular_curvature + (1.0 - params.a) * l.length)
            .collect();
        let length = net.links().iter().map(|l| l.length).collect();
        CostBasis { hybrid, length }
    }
}

/// Element ids for keyed factor draws. Links use their index; turns hash the
/// junction and both (link, end) keys symmetrically into a disjoint id space.
pub mod elements {
    use crate::rng::mix64;

    #[inline]
    pub fn link(link_idx: usize) -> u64 {
        link_idx as u64
    }

    #[inline]
    pub fn turn(junction: usize, a: (usize, u8), b: (usize, u8)) -> u64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let h = mix64(
            mix64(junction as u64 ^ 0x9a3f_0710_5c1e_77d3)
                ^ ((lo.0 as u64) << 1 | lo.1 as u64),
        );
        let h = mix64(h ^ ((hi.0 as u64) << 1 | hi.1 as u64));
        h | 0x8000_0000_0000_0000
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::network::RawLink;
    use alloc::collections::BTreeMap;
    use alloc::vec;

    fn link(pts: &[(f64, f64)]) -> Link {
        let geometry: vec::Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        Link {
            id: "t".into(),
            length: crate::geometry::polyline_length(&geometry),
            angular_curvature: crate::geometry::angular_curvature(&geometry),
            geometry,
            weights: BTreeMap::new(),
        }
    }

    fn params(a: f64, sigma: f64) -> MetricParams {
        MetricParams { a, sigma, ..MetricParams::default() }
    }

    #[test]
    fn sigma_zero_factor_is_exactly_one() {
        let p = params(0.5, 0.0);
        let mut s = RandStream::new(1, 0, 0);
        for _ in 0..100 {
            assert_eq!(sample_rand(&mut s, &p).to_bits(), 1.0f64.to_bits());
        }
    }

    #[test]
    fn factors_respect_clamp_and_hit_endpoints() {
        let p = params(0.5, 5.0);
        let mut s = RandStream::new(7, 3, 1);
        let (mut lo_hits, mut hi_hits) = (0u32, 0u32);
        for _ in 0..100_000 {
            let f = sample_rand(&mut s, &p);
            assert!((0.1..=10.0).contains(&f));
            if f == 0.1 {
                lo_hits += 1;
            }
            if f == 10.0 {
                hi_hits += 1;
            }
        }
        assert!(lo_hits > 0 && hi_hits > 0);
    }

    #[test]
    fn mean_factor_near_one() {
        let p = params(0.5, 0.25);
        let s = RandStream::new(42, 0, 0);
        let mut sum = 0.0;
        let n = 1_000_000u64;
        for i in 0..n {
            sum += factor_from_uniform(s.at(i), &p);
        }
        assert!((sum / n as f64 - 1.0).abs() < 0.005);
    }

    #[test]
    fn link_cost_examples() {
        let straight = link(&[(0.0, 0.0), (100.0, 0.0)]);
        assert_eq!(link_cost(&straight, &params(0.5, 0.0), 1.0), 50.0);
        assert_eq!(link_cost(&straight, &params(0.0, 0.0), 1.3), 130.0);

        let l_shape = link(&[(0.0, 0.0), (50.0, 0.0), (50.0, 50.0)]);
        assert_eq!(link_cost(&l_shape, &params(1.0, 0.0), 2.0), 180.0);
        // curvature contributes degrees, length metres, summed literally
        let hybrid = link_cost(&l_shape, &params(0.5, 0.0), 1.0);
        assert!((hybrid - 95.0).abs() < 1e-12);
    }

    #[test]
    fn turn_cost_examples() {
        assert_eq!(turn_cost(0.0, &params(0.5, 0.0), 1.7), 0.0);
        assert_eq!(turn_cost(90.0, &params(0.5, 0.0), 1.0), 45.0);
        assert_eq!(turn_cost(90.0, &params(0.0, 0.0), 1.9), 0.0);
    }

    #[test]
    fn radius_cost_ignores_curvature() {
        let bent = link(&[(0.0, 0.0), (50.0, 0.0), (50.0, 50.0)]);
        assert_eq!(radius_cost(&bent), bent.length);
    }

    #[test]
    fn costs_scale_linearly_in_rand() {
        let l = link(&[(0.0, 0.0), (30.0, 40.0)]);
        let p = params(0.5, 0.0);
        let c1 = link_cost(&l, &p, 1.0);
        assert!((link_cost(&l, &p, 2.5) - 2.5 * c1).abs() < 1e-12);
        assert!((turn_cost(60.0, &p, 3.0) - 3.0 * turn_cost(60.0, &p, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn param_validation() {
        assert!(params(0.5, 1.0).validate().is_ok());
        assert!(params(-0.1, 1.0).validate().is_err());
        assert!(params(1.1, 1.0).validate().is_err());
        assert!(params(0.5, -1.0).validate().is_err());
        let bad_clamp = MetricParams { clamp: (0.0, 10.0), ..MetricParams::default() };
        assert!(bad_clamp.validate().is_err());
        let bad_over = MetricParams { oversample: 0, ..MetricParams::default() };
        assert!(bad_over.validate().is_err());
    }

    #[test]
    fn turn_elements_are_symmetric_and_tagged() {
        let t1 = elements::turn(4, (10, 0), (12, 1));
        let t2 = elements::turn(4, (12, 1), (10, 0));
        assert_eq!(t1, t2);
        assert_ne!(t1, elements::turn(5, (10, 0), (12, 1)));
        assert!(t1 & 0x8000_0000_0000_0000 != 0);
    }

    #[test]
    fn cost_basis_matches_link_cost() {
        let net = SpatialNetwork::build(
            vec![RawLink {
                id: "a".into(),
                geometry: vec![Point::new(0.0, 0.0), Point::new(50.0, 0.0), Point::new(50.0, 50.0)],
                weights: BTreeMap::new(),
            }],
            0.5,
        )
        .unwrap();
        let p = params(0.5, 0.0);
        let basis = CostBasis::new(&net, &p);
        assert_eq!(basis.hybrid[0], link_cost(&net.links()[0], &p, 1.0));
        assert_eq!(basis.length[0], 100.0);
    }
}
