//! Edge-based shortest paths between link centres.
//!
//! Routing runs on the dual graph: a state is (link, entry end), two per
//! undirected link. A state's stored label is the cost from the origin link's
//! centre to the state's exit junction, so the origin's own states carry half
//! the origin link cost and every relaxation adds one turn plus one full link
//! cost. Centre-to-centre cost to a link is the smaller state label minus
//! half that link's cost.
//!
//! Ties between equal-cost paths resolve to the smaller predecessor state
//! key (link index, entry end); with links indexed in id order this picks the
//! path whose reversed-from-destination key sequence is lexicographically
//! minimal. Immediate re-entry into the link just exited (a U-turn through
//! the same end) is forbidden; going around a small loop instead is allowed
//! and sometimes cheaper under the angular metric.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::bearing_change;
use crate::math;
use crate::metric::{self, elements, CostBasis, MetricParams};
use crate::network::{JunctionIdx, LinkIdx, SpatialNetwork};
use crate::rng::RandStream;

pub type StateIdx = usize;

#[inline]
pub fn state(link: LinkIdx, entry_end: u8) -> StateIdx {
    link * 2 + entry_end as usize
}

#[inline]
pub fn state_link(s: StateIdx) -> LinkIdx {
    s / 2
}

#[inline]
pub fn state_entry(s: StateIdx) -> u8 {
    (s & 1) as u8
}

const PRED_NONE: usize = usize::MAX;
const PRED_ORIGIN: usize = usize::MAX - 1;

/// Per-run cost surface: full traversal cost per link plus turn costs.
pub trait StateCost {
    fn link_cost(&self, link: LinkIdx) -> f64;
    fn turn_cost(&self, junction: JunctionIdx, from: (LinkIdx, u8), to: (LinkIdx, u8), angle_deg: f64) -> f64;
}

/// Hybrid randomized metric for one (origin, oversample iteration) substream.
pub struct HybridCost<'a> {
    params: &'a MetricParams,
    stream: RandStream,
    link_full: Vec<f64>,
}

impl<'a> HybridCost<'a> {
    pub fn new(
        basis: &'a CostBasis,
        params: &'a MetricParams,
        seed: u64,
        origin: LinkIdx,
        iteration: u32,
    ) -> Self {
        let stream = RandStream::new(seed, origin as u64, iteration as u64);
        let link_full = if params.sigma == 0.0 {
            basis.hybrid.clone()
        } else {
            basis
                .hybrid
                .iter()
                .enumerate()
                .map(|(l, &c)| c * metric::factor_from_uniform(stream.at(elements::link(l)), params))
                .collect()
        };
        HybridCost { params, stream, link_full }
    }
}

impl StateCost for HybridCost<'_> {
    #[inline]
    fn link_cost(&self, link: LinkIdx) -> f64 {
        self.link_full[link]
    }

    #[inline]
    fn turn_cost(&self, junction: JunctionIdx, from: (LinkIdx, u8), to: (LinkIdx, u8), angle_deg: f64) -> f64 {
        if self.params.a == 0.0 {
            return 0.0;
        }
        let rand = if self.params.sigma == 0.0 {
            1.0
        } else {
            metric::factor_from_uniform(self.stream.at(elements::turn(junction, from, to)), self.params)
        };
        self.params.a * angle_deg * rand
    }
}

/// Plain network-Euclidean metric: link length, free turns, never randomized.
pub struct RadiusCost<'a> {
    lengths: &'a [f64],
}

impl<'a> RadiusCost<'a> {
    pub fn new(lengths: &'a [f64]) -> Self {
        RadiusCost { lengths }
    }
}

impl StateCost for RadiusCost<'_> {
    #[inline]
    fn link_cost(&self, link: LinkIdx) -> f64 {
        self.lengths[link]
    }

    #[inline]
    fn turn_cost(&self, _: JunctionIdx, _: (LinkIdx, u8), _: (LinkIdx, u8), _: f64) -> f64 {
        0.0
    }
}

/// Cost of one state transition: the junction turn plus the next link's full
/// traversal cost. Exposed so path costs can be re-derived term by term.
pub fn transition_cost(
    net: &SpatialNetwork,
    cost: &impl StateCost,
    from: StateIdx,
    to: StateIdx,
) -> f64 {
    let (fl, fe) = (state_link(from), state_entry(from));
    let exit = 1 - fe;
    let j = net.junction_of(fl, exit);
    let (tl, te) = (state_link(to), state_entry(to));
    let angle = bearing_change(net.arrival_bearing(fl, exit), net.departure_bearing(tl, te));
    cost.turn_cost(j, (fl, exit), (tl, te), angle) + cost.link_cost(tl)
}

#[derive(Clone, Debug)]
pub struct PathTree {
    pub origin: LinkIdx,
    labels: Vec<f64>,
    preds: Vec<usize>,
    /// Radius-metric distance accumulated along the chosen route, to the
    /// state's exit junction (same convention as `labels`).
    radius_along: Vec<f64>,
    /// Full per-link traversal cost of the run that built this tree.
    link_cost: Vec<f64>,
    lengths: Vec<f64>,
}

impl PathTree {
    pub fn label(&self, s: StateIdx) -> f64 {
        self.labels[s]
    }

    pub fn pred(&self, s: StateIdx) -> Option<StateIdx> {
        match self.preds[s] {
            PRED_NONE | PRED_ORIGIN => None,
            p => Some(p),
        }
    }

    pub fn reached(&self, link: LinkIdx) -> bool {
        self.labels[state(link, 0)].is_finite() || self.labels[state(link, 1)].is_finite()
    }

    /// State by which the shortest centre-to-centre route enters `link`;
    /// label ties pick entry end 0.
    pub fn arrival_state(&self, link: LinkIdx) -> Option<StateIdx> {
        let (s0, s1) = (state(link, 0), state(link, 1));
        let (l0, l1) = (self.labels[s0], self.labels[s1]);
        if !l0.is_finite() && !l1.is_finite() {
            return None;
        }
        Some(if l1 < l0 { s1 } else { s0 })
    }

    pub fn cost_to_centre(&self, link: LinkIdx) -> Option<f64> {
        self.arrival_state(link)
            .map(|s| self.labels[s] - 0.5 * self.link_cost[link])
    }

    /// Radius-metric distance to `link`'s centre along the routing-chosen
    /// path (not necessarily the shortest radius distance).
    pub fn radius_to_centre(&self, link: LinkIdx) -> Option<f64> {
        self.arrival_state(link)
            .map(|s| self.radius_along[s] - 0.5 * self.lengths[link])
    }

    /// Links along the route from the origin to `link`, inclusive. A route
    /// may traverse a link twice (once per direction); duplicates are kept.
    pub fn path_states(&self, link: LinkIdx) -> Option<Vec<StateIdx>> {
        let mut s = self.arrival_state(link)?;
        if !self.labels[s].is_finite() {
            return None;
        }
        let mut chain = vec![s];
        while let Some(p) = self.pred(s) {
            chain.push(p);
            s = p;
        }
        chain.reverse();
        Some(chain)
    }

    pub fn path_links(&self, link: LinkIdx) -> Option<Vec<LinkIdx>> {
        Some(self.path_states(link)?.into_iter().map(state_link).collect())
    }

    pub fn states(&self) -> usize {
        self.labels.len()
    }
}

#[derive(PartialEq)]
struct Entry {
    cost: f64,
    state: StateIdx,
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        // reversed: BinaryHeap is a max-heap, we pop the smallest cost,
        // breaking ties toward the smaller state index
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap()
            .then_with(|| other.state.cmp(&self.state))
    }
}

/// Optional early-stop set: the search may halt once both states of every
/// listed link are settled (unreachable states simply exhaust the queue).
pub struct TargetSet {
    want: Vec<bool>,
    remaining: usize,
}

impl TargetSet {
    pub fn from_links(n_links: usize, links: impl Iterator<Item = LinkIdx>) -> Self {
        let mut want = vec![false; 2 * n_links];
        let mut remaining = 0;
        for l in links {
            for e in 0..2u8 {
                if !want[state(l, e)] {
                    want[state(l, e)] = true;
                    remaining += 1;
                }
            }
        }
        TargetSet { want, remaining }
    }
}

/// Dijkstra over routing states. Labels are exact left-to-right sums, so
/// `label(child) == label(parent) + transition_cost(parent, child)` bitwise.
pub fn shortest_path_tree(
    net: &SpatialNetwork,
    origin: LinkIdx,
    cost: &impl StateCost,
    mut targets: Option<TargetSet>,
) -> PathTree {
    let n = net.len();
    let mut labels = vec![f64::INFINITY; 2 * n];
    let mut preds = vec![PRED_NONE; 2 * n];
    let mut radius_along = vec![f64::INFINITY; 2 * n];
    let mut settled = vec![false; 2 * n];
    let link_cost: Vec<f64> = (0..n).map(|l| cost.link_cost(l)).collect();
    let lengths: Vec<f64> = net.links().iter().map(|l| l.length).collect();

    let mut heap: BinaryHeap<Entry> = BinaryHeap::new();
    let half = 0.5 * link_cost[origin];
    let half_len = 0.5 * lengths[origin];
    for e in 0..2u8 {
        let s = state(origin, e);
        labels[s] = half;
        radius_along[s] = half_len;
        preds[s] = PRED_ORIGIN;
        heap.push(Entry { cost: half, state: s });
    }

    while let Some(Entry { cost: c, state: s }) = heap.pop() {
        if settled[s] {
            continue;
        }
        settled[s] = true;
        if let Some(t) = targets.as_mut() {
            if t.want[s] {
                t.want[s] = false;
                t.remaining -= 1;
                if t.remaining == 0 {
                    break;
                }
            }
        }
        let (l, e) = (state_link(s), state_entry(s));
        let exit = 1 - e;
        let j = net.junction_of(l, exit);
        let arrive = net.arrival_bearing(l, exit);
        for &(m, g) in &net.junctions()[j].incident {
            if (m, g) == (l, exit) {
                continue;
            }
            let t = state(m, g);
            if settled[t] {
                continue;
            }
            let angle = bearing_change(arrive, net.departure_bearing(m, g));
            let cand = c + (cost.turn_cost(j, (l, exit), (m, g), angle) + link_cost[m]);
            if cand < labels[t] {
                labels[t] = cand;
                preds[t] = s;
                radius_along[t] = radius_along[s] + lengths[m];
                heap.push(Entry { cost: cand, state: t });
            } else if cand == labels[t] && preds[t] != PRED_ORIGIN && s < preds[t] {
                preds[t] = s;
                radius_along[t] = radius_along[s] + lengths[m];
            }
        }
    }

    PathTree { origin, labels, preds, radius_along, link_cost, lengths }
}

/// True shortest radius-metric distances from one origin's centre to every
/// link centre. Distance to the origin itself is exactly 0.
#[derive(Clone, Debug)]
pub struct RadiusField {
    pub origin: LinkIdx,
    dist: Vec<f64>,
    lengths: Vec<f64>,
}

pub fn radius_field(net: &SpatialNetwork, origin: LinkIdx) -> RadiusField {
    let lengths: Vec<f64> = net.links().iter().map(|l| l.length).collect();
    let tree = shortest_path_tree(net, origin, &RadiusCost::new(&lengths), None);
    let dist = (0..net.len())
        .map(|l| tree.cost_to_centre(l).unwrap_or(f64::INFINITY))
        .collect();
    RadiusField { origin, dist, lengths }
}

impl RadiusField {
    /// Centre-to-centre network-Euclidean distance; infinite if unreachable.
    pub fn distance(&self, link: LinkIdx) -> f64 {
        self.dist[link]
    }

    /// Membership in the annulus (rmin, rmax]; the origin itself (distance 0)
    /// belongs only when rmin is 0.
    pub fn in_radius(&self, link: LinkIdx, rmin: f64, rmax: f64) -> bool {
        let d = self.dist[link];
        d <= rmax && (d > rmin || (rmin == 0.0 && d == 0.0))
    }

    pub fn members(&self, rmin: f64, rmax: f64) -> Vec<(LinkIdx, f64)> {
        (0..self.dist.len())
            .filter(|&l| self.in_radius(l, rmin, rmax))
            .map(|l| (l, self.dist[l]))
            .collect()
    }

    /// Fraction of `link`'s length within `r` of the origin centre, by linear
    /// interpolation from the link's nearer end. The origin link itself grows
    /// from its centre in both directions.
    pub fn fraction_within(&self, link: LinkIdx, r: f64) -> f64 {
        let len = self.lengths[link];
        if link == self.origin {
            return math::min(1.0, (2.0 * r) / len);
        }
        let d = self.dist[link];
        if !d.is_finite() {
            return 0.0;
        }
        let d_near = d - 0.5 * len;
        math::clamp((r - d_near) / len, 0.0, 1.0)
    }
}

/// One-call helpers matching the module-level operations.
pub fn radius_set(
    net: &SpatialNetwork,
    origin: LinkIdx,
    rmin: f64,
    rmax: f64,
) -> Vec<(LinkIdx, f64)> {
    radius_field(net, origin).members(rmin, rmax)
}

pub fn fraction_within_radius(
    net: &SpatialNetwork,
    origin: LinkIdx,
    target: LinkIdx,
    rmax: f64,
) -> f64 {
    radius_field(net, origin).fraction_within(target, rmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::network::RawLink;
    use alloc::collections::BTreeMap;
    use alloc::string::String;

    fn raw(id: &str, pts: &[(f64, f64)]) -> RawLink {
        RawLink {
            id: id.into(),
            geometry: pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            weights: BTreeMap::new(),
        }
    }

    fn chain3() -> SpatialNetwork {
        SpatialNetwork::build(
            vec![
                raw("a", &[(0.0, 0.0), (100.0, 0.0)]),
                raw("b", &[(100.0, 0.0), (200.0, 0.0)]),
                raw("c", &[(200.0, 0.0), (300.0, 0.0)]),
            ],
            0.5,
        )
        .unwrap()
    }

    fn hybrid_tree(net: &SpatialNetwork, params: &MetricParams, origin: &str) -> PathTree {
        let basis = CostBasis::new(net, params);
        let o = net.link_index(origin).unwrap();
        let cost = HybridCost::new(&basis, params, 1, o, 0);
        shortest_path_tree(net, o, &cost, None)
    }

    fn p(a: f64) -> MetricParams {
        MetricParams { a, sigma: 0.0, ..MetricParams::default() }
    }

    #[test]
    fn straight_chain_costs() {
        let net = chain3();
        let tree = hybrid_tree(&net, &p(0.5), "a");
        let idx = |id: &str| net.link_index(id).unwrap();
        assert_eq!(tree.cost_to_centre(idx("a")), Some(0.0));
        assert_eq!(tree.cost_to_centre(idx("b")), Some(50.0));
        assert_eq!(tree.cost_to_centre(idx("c")), Some(100.0));
        assert_eq!(
            tree.path_links(idx("c")).unwrap(),
            vec![idx("a"), idx("b"), idx("c")]
        );
        // origin's own stored cost is half its link cost
        assert_eq!(tree.label(state(idx("a"), 0)), 25.0);
        assert_eq!(tree.label(state(idx("a"), 1)), 25.0);
    }

    #[test]
    fn right_angle_turn_costs() {
        let net = SpatialNetwork::build(
            vec![
                raw("east", &[(0.0, 0.0), (100.0, 0.0)]),
                raw("north", &[(100.0, 0.0), (100.0, 100.0)]),
            ],
            0.5,
        )
        .unwrap();
        let tree = hybrid_tree(&net, &p(0.5), "east");
        let n = net.link_index("north").unwrap();
        // 25 (half origin) + 45 (turn) + 50 (link) - 25 (half target)
        assert!((tree.cost_to_centre(n).unwrap() - 95.0).abs() < 1e-12);

        let pure_euclid = hybrid_tree(&net, &p(0.0), "east");
        assert!((pure_euclid.cost_to_centre(n).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_origin_reaches_only_itself() {
        let net = SpatialNetwork::build(
            vec![
                raw("a", &[(0.0, 0.0), (100.0, 0.0)]),
                raw("b", &[(500.0, 500.0), (600.0, 500.0)]),
            ],
            0.5,
        )
        .unwrap();
        let tree = hybrid_tree(&net, &p(0.5), "a");
        assert!(tree.reached(net.link_index("a").unwrap()));
        assert!(!tree.reached(net.link_index("b").unwrap()));
        assert_eq!(tree.cost_to_centre(net.link_index("b").unwrap()), None);
    }

    #[test]
    fn equal_cost_paths_pick_smaller_link_id() {
        // two identical-geometry middle links; route a -> c must use "m1"
        let net = SpatialNetwork::build(
            vec![
                raw("a", &[(0.0, 0.0), (100.0, 0.0)]),
                raw("m1", &[(100.0, 0.0), (200.0, 0.0)]),
                raw("m2", &[(100.0, 0.0), (200.0, 0.0)]),
                raw("c", &[(200.0, 0.0), (300.0, 0.0)]),
            ],
            0.5,
        )
        .unwrap();
        let tree = hybrid_tree(&net, &p(0.5), "a");
        let path = tree.path_links(net.link_index("c").unwrap()).unwrap();
        let names: Vec<String> = path.iter().map(|&l| net.links()[l].id.clone()).collect();
        assert_eq!(names, vec!["a", "m1", "c"]);
    }

    #[test]
    fn relaxation_identity_is_exact() {
        let net = SpatialNetwork::build(
            vec![
                raw("a", &[(0.0, 0.0), (100.0, 0.0)]),
                raw("b", &[(100.0, 0.0), (180.0, 60.0)]),
                raw("c", &[(180.0, 60.0), (180.0, 160.0)]),
                raw("d", &[(100.0, 0.0), (180.0, -60.0)]),
                raw("e", &[(180.0, -60.0), (180.0, 60.0)]),
            ],
            0.5,
        )
        .unwrap();
        let params = MetricParams { a: 0.5, sigma: 0.7, ..MetricParams::default() };
        let basis = CostBasis::new(&net, &params);
        let o = net.link_index("a").unwrap();
        let cost = HybridCost::new(&basis, &params, 9, o, 2);
        let tree = shortest_path_tree(&net, o, &cost, None);
        for s in 0..tree.states() {
            if let Some(pr) = tree.pred(s) {
                let recomputed = tree.label(pr) + transition_cost(&net, &cost, pr, s);
                assert_eq!(recomputed.to_bits(), tree.label(s).to_bits());
            }
        }
    }

    #[test]
    fn radius_field_chain_distances() {
        let net = chain3();
        let idx = |id: &str| net.link_index(id).unwrap();
        let field = radius_field(&net, idx("b"));
        assert_eq!(field.distance(idx("b")), 0.0);
        assert_eq!(field.distance(idx("a")), 100.0);
        assert_eq!(field.distance(idx("c")), 100.0);

        let members = field.members(0.0, 150.0);
        assert_eq!(members.len(), 3);
        assert_eq!(field.members(0.0, 90.0), vec![(idx("b"), 0.0)]);
        assert_eq!(field.members(0.0, f64::MAX).len(), 3);
        // annulus excludes the origin and the lower bound is open
        assert_eq!(field.members(100.0, 150.0), vec![]);
        assert_eq!(field.members(99.0, 150.0).len(), 2);
    }

    #[test]
    fn radius_ignores_angularity() {
        let net = SpatialNetwork::build(
            vec![
                raw("east", &[(0.0, 0.0), (100.0, 0.0)]),
                raw("north", &[(100.0, 0.0), (100.0, 100.0)]),
            ],
            0.5,
        )
        .unwrap();
        let f = radius_field(&net, net.link_index("east").unwrap());
        assert_eq!(f.distance(net.link_index("north").unwrap()), 100.0);
    }

    #[test]
    fn fraction_within_examples() {
        let net = chain3();
        let idx = |id: &str| net.link_index(id).unwrap();
        let field = radius_field(&net, idx("a"));
        // c's near end is 150 from a's centre
        assert_eq!(field.fraction_within(idx("c"), 250.0), 1.0);
        assert_eq!(field.fraction_within(idx("c"), 150.0), 0.0);
        assert!((field.fraction_within(idx("c"), 180.0) - 0.3).abs() < 1e-12);
        // origin link grows from its centre in both directions
        assert_eq!(field.fraction_within(idx("a"), 50.0), 1.0);
        assert_eq!(field.fraction_within(idx("a"), 25.0), 0.5);
        // one-call helper agrees
        assert!((fraction_within_radius(&net, idx("a"), idx("c"), 180.0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn early_stop_matches_full_run() {
        let net = chain3();
        let idx = |id: &str| net.link_index(id).unwrap();
        let params = p(0.5);
        let basis = CostBasis::new(&net, &params);
        let cost = HybridCost::new(&basis, &params, 1, idx("a"), 0);
        let full = shortest_path_tree(&net, idx("a"), &cost, None);
        let targets = TargetSet::from_links(net.len(), [idx("b")].into_iter());
        let stopped = shortest_path_tree(&net, idx("a"), &cost, Some(targets));
        assert_eq!(
            stopped.cost_to_centre(idx("b")).unwrap().to_bits(),
            full.cost_to_centre(idx("b")).unwrap().to_bits()
        );
    }

    #[test]
    fn radius_along_tracks_route_lengths() {
        let net = chain3();
        let idx = |id: &str| net.link_index(id).unwrap();
        let tree = hybrid_tree(&net, &p(0.5), "a");
        assert_eq!(tree.radius_to_centre(idx("c")), Some(200.0));
        assert_eq!(tree.radius_to_centre(idx("a")), Some(0.0));
    }
}
