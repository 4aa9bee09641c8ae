//! Reference implementations used to cross-check the main crate in
//! integration tests, plus deterministic generators for random networks and
//! regression problems.
//!
//! The reference side deliberately shares only leaf primitives with the main
//! crate (bearing math, the per-element cost expressions) so that exact
//! floating-point ties resolve identically on both sides, and re-implements
//! everything above that layer by different algorithms: Bellman-Ford fixpoint
//! instead of heap Dijkstra, Floyd-Warshall junction distances instead of the
//! state-graph search, literal per-pair flow accumulation instead of the
//! chunked battery engine, and a raw-space Gauss-Jordan solve instead of the
//! standardized Cholesky path.

use std::collections::BTreeMap;

use mhspna_core::betweenness::{AnalysisSpec, BetweennessType, ColumnId, OriginSpec};
use mhspna_core::calibrate::{observation_weights, DesignMatrix, ObservationWeights};
use mhspna_core::geometry::{bearing, bearing_change, Point};
use mhspna_core::metric::{CostBasis, MetricParams, DEFAULT_CLAMP};
use mhspna_core::network::{LinkIdx, RawLink, SpatialNetwork, EVERYWHERE};
use mhspna_core::rng::Rng;
use mhspna_core::routing::{
    radius_field, shortest_path_tree, state, state_entry, state_link, transition_cost, HybridCost,
    StateCost, StateIdx, TargetSet,
};

// ---------------------------------------------------------------------------
// random sparse test networks

/// Jittered-grid street network: a spanning tree over 9..25 junctions plus a
/// few extra links, an occasional exact parallel duplicate (forces cost ties),
/// and some curved 3-point links. At most 28 links. Weight fields "wo" and
/// "wd" are present on most links.
pub fn random_network(seed: u64) -> SpatialNetwork {
    let mut rng = Rng::new(seed ^ 0x6e65_7477_6f72_6b73);
    let side = 3 + rng.below(3) as usize;
    let nj = side * side;
    let mut pos = Vec::with_capacity(nj);
    for gy in 0..side {
        for gx in 0..side {
            let jx = rng.below(15) as f64 - 7.0;
            let jy = rng.below(15) as f64 - 7.0;
            pos.push(Point::new(100.0 * gx as f64 + jx, 100.0 * gy as f64 + jy));
        }
    }

    let mut edges: Vec<(usize, usize)> = Vec::new();
    for j in 1..nj {
        edges.push((rng.below(j as u64) as usize, j));
    }
    for _ in 0..rng.below(4) {
        let a = rng.below(nj as u64) as usize;
        let b = rng.below(nj as u64) as usize;
        if a != b {
            edges.push((a, b));
        }
    }

    let mut raw: Vec<RawLink> = Vec::new();
    let mut straight: Vec<usize> = Vec::new();
    for (i, &(a, b)) in edges.iter().enumerate() {
        let geometry = if rng.below(4) == 0 {
            // bend the link: midpoint pushed perpendicular to the chord
            let (pa, pb) = (pos[a], pos[b]);
            let mx = 0.5 * (pa.x + pb.x);
            let my = 0.5 * (pa.y + pb.y);
            let (dx, dy) = (pb.x - pa.x, pb.y - pa.y);
            let norm = (dx * dx + dy * dy).sqrt();
            let off = (10 + rng.below(16)) as f64 * if rng.below(2) == 0 { 1.0 } else { -1.0 };
            vec![pa, Point::new(mx - dy / norm * off, my + dx / norm * off), pb]
        } else {
            straight.push(i);
            vec![pos[a], pos[b]]
        };
        let mut weights = BTreeMap::new();
        if rng.below(5) < 4 {
            weights.insert("wo".to_string(), [0.5, 1.0, 1.5, 2.0, 3.0][rng.below(5) as usize]);
        }
        if rng.below(5) < 4 {
            weights.insert("wd".to_string(), [0.5, 1.0, 1.5, 2.0, 3.0][rng.below(5) as usize]);
        }
        raw.push(RawLink { id: format!("L{i:03}"), geometry, weights });
    }
    // exact duplicate of one straight link: same geometry, fresh id
    if !straight.is_empty() && rng.below(2) == 0 {
        let src = &raw[straight[rng.below(straight.len() as u64) as usize]];
        let mut dup = src.clone();
        dup.id = format!("{}d", src.id);
        raw.push(dup);
    }
    // analyses error on weight fields no link carries, so guarantee presence
    raw[0].weights.entry("wo".to_string()).or_insert(1.0);
    raw[0].weights.entry("wd".to_string()).or_insert(1.0);

    SpatialNetwork::build(raw, 0.5).expect("generated network must build")
}

// ---------------------------------------------------------------------------
// reference routing: Bellman-Ford fixpoint over (link, entry end) states

/// Deterministic hybrid cost recomputed from link fields and own bearing
/// tables; matches the main crate's sigma = 0 cost surface bit for bit.
pub struct ReferenceCost {
    a: f64,
    link: Vec<f64>,
    bearings: Vec<[f64; 2]>,
}

impl ReferenceCost {
    pub fn sigma0(net: &SpatialNetwork, a: f64) -> Self {
        let link = net
            .links()
            .iter()
            .map(|l| a * l.angular_curvature + (1.0 - a) * l.length)
            .collect();
        let bearings = net
            .links()
            .iter()
            .map(|l| {
                let g = &l.geometry;
                [bearing(g[0], g[1]), bearing(g[g.len() - 2], g[g.len() - 1])]
            })
            .collect();
        ReferenceCost { a, link, bearings }
    }
}

fn flip(b: f64) -> f64 {
    if b > 0.0 {
        b - 180.0
    } else {
        b + 180.0
    }
}

impl StateCost for ReferenceCost {
    fn link_cost(&self, link: LinkIdx) -> f64 {
        self.link[link]
    }

    // ignores the caller-supplied angle and re-derives it from own tables
    fn turn_cost(&self, _j: usize, from: (LinkIdx, u8), to: (LinkIdx, u8), _angle: f64) -> f64 {
        let arrive = match from.1 {
            0 => flip(self.bearings[from.0][0]),
            _ => self.bearings[from.0][1],
        };
        let depart = match to.1 {
            0 => self.bearings[to.0][0],
            _ => flip(self.bearings[to.0][1]),
        };
        self.a * bearing_change(arrive, depart) * 1.0
    }
}

pub struct FixpointTree {
    pub origin: LinkIdx,
    pub labels: Vec<f64>,
    pub preds: Vec<Option<StateIdx>>,
}

/// Bellman-Ford fixpoint with the contracted tie rule: equal candidate labels
/// keep the smaller predecessor state key; origin predecessors are never
/// replaced. Converges to the same labels and predecessors as the heap search
/// whenever every transition strictly increases the label (asserted).
pub fn fixpoint_tree(net: &SpatialNetwork, origin: LinkIdx, cost: &impl StateCost) -> FixpointTree {
    let n2 = 2 * net.len();
    let mut labels = vec![f64::INFINITY; n2];
    let mut preds: Vec<Option<StateIdx>> = vec![None; n2];

    let half = 0.5 * cost.link_cost(origin);
    let (o0, o1) = (state(origin, 0), state(origin, 1));
    labels[o0] = half;
    labels[o1] = half;

    loop {
        let mut changed = false;
        for s in 0..n2 {
            if !labels[s].is_finite() {
                continue;
            }
            let (l, e) = (state_link(s), state_entry(s));
            let exit = 1 - e;
            let j = net.junction_of(l, exit);
            for &(m, g) in &net.junctions()[j].incident {
                if (m, g) == (l, exit) {
                    continue;
                }
                let t = state(m, g);
                let cand = labels[s] + transition_cost(net, cost, s, t);
                assert!(
                    cand > labels[s],
                    "transition must strictly increase the label (tie equivalence precondition)"
                );
                if cand < labels[t] {
                    assert!(t != o0 && t != o1, "origin label is minimal by construction");
                    labels[t] = cand;
                    preds[t] = Some(s);
                    changed = true;
                } else if cand == labels[t] {
                    if let Some(p) = preds[t] {
                        if s < p {
                            preds[t] = Some(s);
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    FixpointTree { origin, labels, preds }
}

impl FixpointTree {
    /// Arrival state at `link` with the contracted tie rule (entry end 0 on
    /// equal labels), or None if unreached.
    pub fn arrival(&self, link: LinkIdx) -> Option<StateIdx> {
        let (s0, s1) = (state(link, 0), state(link, 1));
        if !self.labels[s0].is_finite() && !self.labels[s1].is_finite() {
            return None;
        }
        Some(if self.labels[s1] < self.labels[s0] { s1 } else { s0 })
    }

    /// Links on the route to `link`, deduplicated, origin first.
    pub fn route_links(&self, link: LinkIdx) -> Option<Vec<LinkIdx>> {
        let mut s = self.arrival(link)?;
        let mut rev = vec![s];
        while let Some(p) = self.preds[s] {
            rev.push(p);
            s = p;
        }
        let mut links: Vec<LinkIdx> = Vec::with_capacity(rev.len());
        for &st in rev.iter().rev() {
            let l = state_link(st);
            if !links.contains(&l) {
                links.push(l);
            }
        }
        Some(links)
    }
}

// ---------------------------------------------------------------------------
// reference radius distances: Floyd-Warshall on the junction graph

pub fn junction_distances(net: &SpatialNetwork) -> Vec<Vec<f64>> {
    let nj = net.junctions().len();
    let mut d = vec![vec![f64::INFINITY; nj]; nj];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for l in 0..net.len() {
        let (a, b) = (net.junction_of(l, 0), net.junction_of(l, 1));
        let len = net.link(l).length;
        if len < d[a][b] {
            d[a][b] = len;
            d[b][a] = len;
        }
    }
    for k in 0..nj {
        for i in 0..nj {
            if !d[i][k].is_finite() {
                continue;
            }
            for j in 0..nj {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Centre-to-centre network-Euclidean distance from the junction matrix:
/// half of each terminal link plus the best junction-to-junction path.
pub fn centre_distance(net: &SpatialNetwork, d: &[Vec<f64>], y: LinkIdx, z: LinkIdx) -> f64 {
    if y == z {
        return 0.0;
    }
    let mut mid = f64::INFINITY;
    for ey in 0..2u8 {
        for ez in 0..2u8 {
            let v = d[net.junction_of(y, ey)][net.junction_of(z, ez)];
            if v < mid {
                mid = v;
            }
        }
    }
    if mid.is_finite() {
        0.5 * net.link(y).length + mid + 0.5 * net.link(z).length
    } else {
        f64::INFINITY
    }
}

fn in_band(d: f64, rmin: f64, rmax: f64) -> bool {
    d <= rmax && (d > rmin || (rmin == 0.0 && d == 0.0))
}

// ---------------------------------------------------------------------------
// radii picked at gap midpoints so both distance computations classify alike

/// All finite centre distances (including the self distance 0), ascending.
pub fn attained_distances(net: &SpatialNetwork, d: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0];
    for y in 0..net.len() {
        for z in (y + 1)..net.len() {
            let v = centre_distance(net, d, y, z);
            if v.is_finite() {
                out.push(v);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Midpoint of the first gap of at least 1e-3 at or after the given quantile;
/// falls back to beyond the largest distance.
pub fn gap_radius(ds: &[f64], quantile: f64) -> f64 {
    let start = ((ds.len() - 1) as f64 * quantile) as usize;
    for i in start..ds.len() - 1 {
        if ds[i + 1] - ds[i] > 1e-3 {
            return 0.5 * (ds[i] + ds[i + 1]);
        }
    }
    ds[ds.len() - 1] + 10.0
}

/// Panics unless every attained distance keeps a safe margin from every
/// radius, so a tolerance-level disagreement cannot flip a membership call.
pub fn assert_radius_margins(ds: &[f64], radii: &[f64]) {
    for &r in radii {
        for &d in ds {
            assert!((d - r).abs() > 2e-4, "distance {d} too close to radius {r}");
        }
    }
}

/// Three analyses (elastic, two-phase, single-origin) over radii that are
/// safely separated from every attained distance: 5 columns in total.
pub fn random_specs(seed: u64, net: &SpatialNetwork, d: &[Vec<f64>]) -> Vec<AnalysisSpec> {
    let mut rng = Rng::new(seed ^ 0x7370_6563);
    let ds = attained_distances(net, d);
    let r_small = gap_radius(&ds, 0.25);
    let r_mid = gap_radius(&ds, 0.6);
    let r_big = ds[ds.len() - 1] * 1.25 + 10.0;
    assert!(r_small < r_mid && r_mid < r_big);
    assert_radius_margins(&ds, &[r_small, r_mid, r_big]);

    let origin_id = net.link(rng.below(net.len() as u64) as usize).id.clone();
    vec![
        AnalysisSpec {
            key: "go".to_string(),
            btype: BetweennessType::Elastic,
            origin: OriginSpec::WeightField("wo".to_string()),
            destination_weight_field: "wd".to_string(),
            radii: vec![(0.0, r_small), (0.0, r_big)],
            continuous: false,
        },
        AnalysisSpec {
            key: "tp".to_string(),
            btype: BetweennessType::TwoPhase,
            origin: OriginSpec::WeightField("wo".to_string()),
            destination_weight_field: "wd".to_string(),
            radii: vec![(0.0, r_mid), (r_small, r_big)],
            continuous: false,
        },
        AnalysisSpec {
            key: "one".to_string(),
            btype: BetweennessType::SingleOrigin,
            origin: OriginSpec::Link(origin_id),
            destination_weight_field: EVERYWHERE.to_string(),
            radii: vec![(0.0, r_mid)],
            continuous: false,
        },
    ]
}

// ---------------------------------------------------------------------------
// reference flows: literal per-pair accumulation of the definitions

fn resolve_weights(net: &SpatialNetwork, field: &str) -> Vec<f64> {
    if field == EVERYWHERE {
        return vec![1.0; net.len()];
    }
    net.links()
        .iter()
        .map(|l| l.weights.get(field).copied().unwrap_or(0.0))
        .collect()
}

fn resolve_origins(net: &SpatialNetwork, origin: &OriginSpec) -> Vec<f64> {
    match origin {
        OriginSpec::WeightField(f) => resolve_weights(net, f),
        OriginSpec::Link(id) => {
            let mut v = vec![0.0; net.len()];
            v[net.link_index(id).expect("origin link must exist")] = 1.0;
            v
        }
    }
}

/// Reference betweenness for binary (non-prorated) radii at sigma = 0:
/// for every in-band pair, route once, apply the endpoint/interior/self
/// fractions, weight by the demand model, and sum.
pub fn reference_flows(
    net: &SpatialNetwork,
    specs: &[AnalysisSpec],
    a: f64,
    d: &[Vec<f64>],
) -> Vec<(ColumnId, Vec<f64>)> {
    let n = net.len();
    let cost = ReferenceCost::sigma0(net, a);

    struct Col {
        spec: usize,
        rmin: f64,
        rmax: f64,
    }
    let mut cols: Vec<(ColumnId, Col)> = Vec::new();
    for (si, spec) in specs.iter().enumerate() {
        assert!(!spec.continuous, "reference flows cover binary radii only");
        for &(rmin, rmax) in &spec.radii {
            let id = ColumnId { analysis: spec.key.clone(), radius: rmax };
            cols.push((id, Col { spec: si, rmin, rmax }));
        }
    }
    let origin_w: Vec<Vec<f64>> = specs.iter().map(|s| resolve_origins(net, &s.origin)).collect();
    let dest_w: Vec<Vec<f64>> =
        specs.iter().map(|s| resolve_weights(net, &s.destination_weight_field)).collect();

    let mut flows = vec![vec![0.0f64; n]; cols.len()];
    for y in 0..n {
        if !origin_w.iter().any(|w| w[y] > 0.0) {
            continue;
        }
        let tree = fixpoint_tree(net, y, &cost);
        let mut routes: Vec<Option<Vec<LinkIdx>>> = vec![None; n];
        for (ci, (_, col)) in cols.iter().enumerate() {
            let wy = origin_w[col.spec][y];
            if wy == 0.0 {
                continue;
            }
            let wd = &dest_w[col.spec];
            let mut members: Vec<(LinkIdx, f64)> = Vec::new();
            for z in 0..n {
                if wd[z] > 0.0 && in_band(centre_distance(net, d, y, z), col.rmin, col.rmax) {
                    members.push((z, wd[z]));
                }
            }
            let denom: f64 = members.iter().map(|&(_, wz)| wz).sum();
            for &(z, wz) in &members {
                let w = match specs[col.spec].btype {
                    BetweennessType::Elastic | BetweennessType::SingleOrigin => wy * wz,
                    BetweennessType::TwoPhase => {
                        if denom > 0.0 {
                            wy * wz / denom
                        } else {
                            continue;
                        }
                    }
                };
                if z == y {
                    flows[ci][y] += w * (1.0 / 3.0);
                    continue;
                }
                if routes[z].is_none() {
                    routes[z] =
                        Some(tree.route_links(z).expect("in-band destination must be routable"));
                }
                for &x in routes[z].as_ref().unwrap() {
                    flows[ci][x] += if x == y || x == z { 0.5 * w } else { w };
                }
            }
        }
    }
    cols.into_iter().map(|(id, _)| id).zip(flows).collect()
}

// ---------------------------------------------------------------------------
// agreement drivers

pub struct FlowCheck {
    pub nets: usize,
    pub columns: usize,
    pub max_abs_diff: f64,
    pub max_activity_err: f64,
}

fn blend_for(seed: u64) -> f64 {
    match seed % 3 {
        0 => 0.5,
        1 => 0.25,
        _ => 0.75,
    }
}

/// Full pipeline agreement on one generated network: battery vs reference,
/// every column, absolute differences. Panics on structural mismatch.
pub fn check_flows(seed: u64) -> FlowCheck {
    let net = random_network(seed);
    let d = junction_distances(&net);
    let specs = random_specs(seed, &net, &d);
    let a = blend_for(seed);
    let params =
        MetricParams { a, sigma: 0.0, clamp: DEFAULT_CLAMP, oversample: 1 };
    let (fields, report) =
        mhspna_core::run_battery(&net, &specs, &params, seed).expect("battery must run");
    let reference = reference_flows(&net, &specs, a, &d);

    assert_eq!(fields.len(), reference.len(), "column count mismatch");
    let mut max_abs_diff = 0.0f64;
    for (f, (id, vals)) in fields.iter().zip(&reference) {
        assert_eq!(&f.column, id, "column order mismatch");
        for (&got, &want) in f.values.iter().zip(vals) {
            let diff = (got - want).abs();
            if diff > max_abs_diff {
                max_abs_diff = diff;
            }
        }
    }
    FlowCheck {
        nets: 1,
        columns: fields.len(),
        max_abs_diff,
        max_activity_err: report.max_activity_error(),
    }
}

pub fn check_flows_many(seeds: impl Iterator<Item = u64>) -> FlowCheck {
    let mut total = FlowCheck { nets: 0, columns: 0, max_abs_diff: 0.0, max_activity_err: 0.0 };
    for seed in seeds {
        let one = check_flows(seed);
        total.nets += 1;
        total.columns += one.columns;
        total.max_abs_diff = total.max_abs_diff.max(one.max_abs_diff);
        total.max_activity_err = total.max_activity_err.max(one.max_activity_err);
    }
    total
}

/// Label/predecessor agreement between the heap search and the fixpoint on
/// every state of every origin; also validates radius distances against the
/// junction matrix and early-stop target runs against the full run. Returns
/// the number of states compared.
pub fn check_trees(seed: u64, sigma: f64) -> usize {
    let net = random_network(seed);
    let a = blend_for(seed);
    let params = MetricParams { a, sigma, clamp: DEFAULT_CLAMP, oversample: 1 };
    let basis = CostBasis::new(&net, &params);
    let d = junction_distances(&net);
    let reference = ReferenceCost::sigma0(&net, a);
    let mut rng = Rng::new(seed ^ 0x7472_6565);
    let mut compared = 0;

    for origin in 0..net.len() {
        let cost = HybridCost::new(&basis, &params, seed, origin, 0);
        let tree = shortest_path_tree(&net, origin, &cost, None);
        let fix = if sigma == 0.0 {
            fixpoint_tree(&net, origin, &reference)
        } else {
            fixpoint_tree(&net, origin, &cost)
        };
        for s in 0..2 * net.len() {
            assert_eq!(
                tree.label(s).to_bits(),
                fix.labels[s].to_bits(),
                "label mismatch at state {s} origin {origin}"
            );
            assert_eq!(tree.pred(s), fix.preds[s], "pred mismatch at state {s} origin {origin}");
            compared += 1;
        }

        // the radius metric agrees with the junction-graph distances
        let field = radius_field(&net, origin);
        for z in 0..net.len() {
            let want = centre_distance(&net, &d, origin, z);
            let got = field.distance(z);
            if want.is_finite() {
                assert!(
                    (got - want).abs() <= 1e-9 * want.max(1.0),
                    "radius distance mismatch origin {origin} z {z}: {got} vs {want}"
                );
            } else {
                assert!(!got.is_finite());
            }
        }

        // early termination must not change settled targets
        let mut targets: Vec<LinkIdx> = (0..net.len()).filter(|_| rng.below(3) == 0).collect();
        if targets.is_empty() {
            targets.push(origin);
        }
        let cost2 = HybridCost::new(&basis, &params, seed, origin, 0);
        let early = shortest_path_tree(
            &net,
            origin,
            &cost2,
            Some(TargetSet::from_links(net.len(), targets.iter().copied())),
        );
        for &z in &targets {
            for e in 0..2u8 {
                let s = state(z, e);
                if early.label(s).is_finite() {
                    assert_eq!(early.label(s).to_bits(), tree.label(s).to_bits());
                    assert_eq!(early.pred(s), tree.pred(s));
                }
            }
        }
    }
    compared
}

// ---------------------------------------------------------------------------
// reference weighted ridge: raw-space normal equations via Gauss-Jordan

/// Solves A x = b by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            b.swap(piv, col);
        }
        let inv = 1.0 / a[col * n + col];
        for c in 0..n {
            a[col * n + c] *= inv;
        }
        b[col] *= inv;
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    Some(b)
}

/// Closed-form weighted ridge in raw coordinates: minimizes
/// sum_i w_i (y_i - b0 - x_i . beta)^2 + lambda * sum_j (beta_j * s_j)^2
/// with an unpenalized (optional) intercept, s_j the unweighted population
/// std over the rows. Constant columns are dropped (coefficient 0).
pub fn reference_ridge(
    x: &DesignMatrix,
    weights: &[f64],
    lambda_r: f64,
    intercept: bool,
) -> (f64, Vec<f64>) {
    let n = x.n();
    let p = x.p();
    // column stats by a different route than the fit: E[x^2] - mean^2
    let mut means = vec![0.0f64; p];
    let mut sqs = vec![0.0f64; p];
    for i in 0..n {
        for j in 0..p {
            let v = x.value(i, j);
            means[j] += v;
            sqs[j] += v * v;
        }
    }
    for j in 0..p {
        means[j] /= n as f64;
        sqs[j] /= n as f64;
    }
    let var = |j: usize| sqs[j] - means[j] * means[j];
    let active: Vec<usize> = (0..p).filter(|&j| var(j) > 0.0).collect();

    let q = active.len();
    let dim = q + intercept as usize;
    let mut a = vec![0.0f64; dim * dim];
    let mut b = vec![0.0f64; dim];
    let off = intercept as usize;
    if intercept {
        let sw: f64 = weights.iter().sum();
        a[0] = sw;
        for (k, &j) in active.iter().enumerate() {
            let swx: f64 = (0..n).map(|i| weights[i] * x.value(i, j)).sum();
            a[k + off] = swx;
            a[(k + off) * dim] = swx;
        }
        b[0] = (0..n).map(|i| weights[i] * x.y[i]).sum();
    }
    for (k, &j) in active.iter().enumerate() {
        for (l, &j2) in active.iter().enumerate() {
            let mut s: f64 = (0..n).map(|i| weights[i] * x.value(i, j) * x.value(i, j2)).sum();
            if k == l {
                s += lambda_r * var(j);
            }
            a[(k + off) * dim + (l + off)] = s;
        }
        b[k + off] = (0..n).map(|i| weights[i] * x.value(i, j) * x.y[i]).sum();
    }

    let sol = gauss_jordan(a, b, dim).expect("reference system must be solvable");
    let mut coeffs = vec![0.0f64; p];
    for (k, &j) in active.iter().enumerate() {
        coeffs[j] = sol[k + off];
    }
    (if intercept { sol[0] } else { 0.0 }, coeffs)
}

pub struct RidgeCase {
    pub x: DesignMatrix,
    pub weights: ObservationWeights,
    pub lambda_r: f64,
    pub intercept: bool,
}

/// Random 200x5 weighted ridge problem: varied column scales, one case in
/// five with an exactly duplicated column, planted linear signal plus noise,
/// strictly positive responses.
pub fn random_ridge_case(seed: u64) -> RidgeCase {
    let mut rng = Rng::new(seed ^ 0x7269_6467_65);
    let (n, p) = (200usize, 5usize);
    let mut scales = vec![0.0f64; p];
    let mut centers = vec![0.0f64; p];
    for j in 0..p {
        scales[j] = 0.5 + 2.5 * rng.uniform();
        centers[j] = 6.0 * rng.uniform() - 2.0;
    }
    let mut x = vec![0.0f64; n * p];
    for i in 0..n {
        for j in 0..p {
            x[i * p + j] = centers[j] + scales[j] * rng.normal();
        }
    }
    if seed % 5 == 0 {
        for i in 0..n {
            x[i * p + 4] = x[i * p + 3];
        }
    }
    let mut coeffs = vec![0.0f64; p];
    for c in coeffs.iter_mut() {
        *c = 2.0 * rng.uniform() - 1.0;
    }
    let mut y = vec![0.0f64; n];
    let mut low = f64::INFINITY;
    for i in 0..n {
        let mut v = 3.0;
        for j in 0..p {
            v += coeffs[j] * x[i * p + j];
        }
        v += 0.3 * rng.normal();
        y[i] = v;
        low = low.min(v);
    }
    for v in y.iter_mut() {
        *v += 1.0 - low; // strictly positive responses
    }

    let columns: Vec<ColumnId> = (0..p)
        .map(|j| ColumnId { analysis: format!("c{j}"), radius: 100.0 * (j + 1) as f64 })
        .collect();
    let mut means = vec![0.0f64; p];
    let mut stds = vec![0.0f64; p];
    for j in 0..p {
        let m: f64 = (0..n).map(|i| x[i * p + j]).sum::<f64>() / n as f64;
        let v: f64 = (0..n).map(|i| (x[i * p + j] - m).powi(2)).sum::<f64>() / n as f64;
        means[j] = m;
        stds[j] = v.sqrt();
    }
    let design = DesignMatrix {
        x,
        y: y.clone(),
        columns,
        point_ids: (0..n).map(|i| format!("p{i}")).collect(),
        links: (0..n).collect(),
        means,
        stds,
    };
    let lambda_w = [0.0, 0.25, 0.5, 0.75, 1.0][(seed % 5) as usize];
    let weights = observation_weights(&design.y, lambda_w).expect("positive responses");
    let lambda_r = 10.0f64.powf(3.0 * rng.uniform() - 1.0); // 0.1 .. 100
    RidgeCase { x: design, weights, lambda_r, intercept: seed % 5 != 3 }
}

pub struct RidgeCheck {
    pub cases: usize,
    pub max_abs_diff: f64,
}

pub fn check_ridge(seeds: impl Iterator<Item = u64>) -> RidgeCheck {
    use mhspna_core::calibrate::{ridge_fit, FitOptions};
    let mut out = RidgeCheck { cases: 0, max_abs_diff: 0.0 };
    for seed in seeds {
        let case = random_ridge_case(seed);
        let opts = FitOptions { intercept: case.intercept, ..FitOptions::default() };
        let model =
            ridge_fit(&case.x, &case.weights, case.lambda_r, &opts).expect("fit must succeed");
        let (b0, coeffs) =
            reference_ridge(&case.x, &case.weights.values, case.lambda_r, case.intercept);
        let mut d = (model.intercept - b0).abs();
        for (mc, &c) in model.columns.iter().zip(&coeffs) {
            d = d.max((mc.coeff - c).abs());
        }
        out.cases += 1;
        out.max_abs_diff = out.max_abs_diff.max(d);
    }
    out
}
