//! Spatial network construction and cleaning.
//!
//! Links are undirected polylines carrying named nonnegative weights.
//! Junctions are formed by merging link endpoints that lie within the snap
//! tolerance of each other (transitively). Links are indexed in sorted-id
//! order, so every downstream tie-break on link index is a tie-break on id.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;
use crate::geometry::{self, angular_curvature, bearing, nearest_on_polyline, polyline_length, Point};
use crate::math;

pub type LinkIdx = usize;
pub type JunctionIdx = usize;

/// Synthetic weight field equal to 1 on every link.
pub const EVERYWHERE: &str = "everywhere";

pub const DEFAULT_SNAP_TOLERANCE: f64 = 0.5;

/// Input record before junction resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawLink {
    pub id: String,
    pub geometry: Vec<Point>,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub id: String,
    pub geometry: Vec<Point>,
    pub length: f64,
    pub angular_curvature: f64,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct Junction {
    pub position: Point,
    /// Incident (link, end) pairs in ascending order.
    pub incident: Vec<(LinkIdx, u8)>,
}

#[derive(Clone, Debug)]
pub struct SpatialNetwork {
    links: Vec<Link>,
    junctions: Vec<Junction>,
    /// Junction of each link's end 0 and end 1.
    ends: Vec<[JunctionIdx; 2]>,
    /// Per link: bearing of the first segment and of the last segment.
    bearings: Vec<[f64; 2]>,
    index: BTreeMap<String, LinkIdx>,
    fields: BTreeSet<String>,
}

impl PartialEq for SpatialNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.links == other.links
    }
}

fn validate_geometry(raw: &RawLink) -> Result<(), NetworkError> {
    let id = &raw.id;
    if raw.geometry.len() < 2 {
        return Err(NetworkError::MalformedGeometry {
            id: id.clone(),
            reason: "fewer than two points",
        });
    }
    for p in &raw.geometry {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(NetworkError::MalformedGeometry {
                id: id.clone(),
                reason: "non-finite coordinate",
            });
        }
    }
    for w in raw.geometry.windows(2) {
        if w[0] == w[1] {
            return Err(NetworkError::MalformedGeometry {
                id: id.clone(),
                reason: "repeated consecutive point",
            });
        }
    }
    for (_, w) in &raw.weights {
        if !w.is_finite() || *w < 0.0 {
            return Err(NetworkError::MalformedGeometry {
                id: id.clone(),
                reason: "weight must be finite and nonnegative",
            });
        }
    }
    Ok(())
}

/// Degree-sized bbox combined with sub-metre link lengths is taken as
/// longitude/latitude data. Small planar networks near the origin pass
/// because street links are metres long.
fn looks_geographic(links: &[RawLink]) -> bool {
    let mut max_len = 0.0f64;
    for l in links {
        for p in &l.geometry {
            if math::abs(p.x) > 180.0 || math::abs(p.y) > 90.0 {
                return false;
            }
        }
        max_len = math::max(max_len, polyline_length(&l.geometry));
    }
    max_len < 1.0
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != c {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller root so cluster numbering is deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

impl SpatialNetwork {
    /// Builds a network, merging endpoints within `snap_tolerance`
    /// (transitively; a junction sits at the centroid of its merged
    /// endpoints). Links end up sorted by id.
    pub fn build(mut raw: Vec<RawLink>, snap_tolerance: f64) -> Result<Self, NetworkError> {
        if !(snap_tolerance.is_finite() && snap_tolerance > 0.0) {
            return Err(NetworkError::InvalidTolerance { value: snap_tolerance });
        }
        if raw.is_empty() {
            return Err(NetworkError::EmptyNetwork);
        }
        for r in &raw {
            validate_geometry(r)?;
        }
        if looks_geographic(&raw) {
            return Err(NetworkError::GeographicCoordinates);
        }
        raw.sort_by(|a, b| a.id.cmp(&b.id));
        for w in raw.windows(2) {
            if w[0].id == w[1].id {
                return Err(NetworkError::DuplicateId { id: w[0].id.clone() });
            }
        }

        let n = raw.len();
        // endpoint index: link * 2 + end
        let endpoint = |raw: &[RawLink], e: usize| -> Point {
            let g = &raw[e / 2].geometry;
            if e % 2 == 0 {
                g[0]
            } else {
                *g.last().unwrap()
            }
        };

        let mut dsu = Dsu::new(2 * n);
        let cell = |v: f64| -> i64 { math::floor(v / snap_tolerance) as i64 };
        let mut grid: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for e in 0..2 * n {
            let p = endpoint(&raw, e);
            grid.entry((cell(p.x), cell(p.y))).or_default().push(e);
        }
        for e in 0..2 * n {
            let p = endpoint(&raw, e);
            let (cx, cy) = (cell(p.x), cell(p.y));
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(others) = grid.get(&(cx + dx, cy + dy)) {
                        for &o in others {
                            if o > e && p.dist(endpoint(&raw, o)) <= snap_tolerance {
                                dsu.union(e, o);
                            }
                        }
                    }
                }
            }
        }

        let mut cluster_of = vec![usize::MAX; 2 * n];
        let mut junctions: Vec<Junction> = Vec::new();
        let mut sums: Vec<(f64, f64, usize)> = Vec::new();
        for e in 0..2 * n {
            let root = dsu.find(e);
            if cluster_of[root] == usize::MAX {
                cluster_of[root] = junctions.len();
                junctions.push(Junction { position: Point::new(0.0, 0.0), incident: Vec::new() });
                sums.push((0.0, 0.0, 0));
            }
            let j = cluster_of[root];
            cluster_of[e] = j;
            let p = endpoint(&raw, e);
            sums[j].0 += p.x;
            sums[j].1 += p.y;
            sums[j].2 += 1;
            junctions[j].incident.push((e / 2, (e % 2) as u8));
        }
        for (j, s) in sums.iter().enumerate() {
            junctions[j].position = Point::new(s.0 / s.2 as f64, s.1 / s.2 as f64);
        }

        let mut ends = vec![[0usize; 2]; n];
        for e in 0..2 * n {
            ends[e / 2][e % 2] = cluster_of[e];
        }

        let mut links = Vec::with_capacity(n);
        let mut bearings = Vec::with_capacity(n);
        let mut index = BTreeMap::new();
        let mut fields = BTreeSet::new();
        for (i, r) in raw.into_iter().enumerate() {
            let g = &r.geometry;
            bearings.push([bearing(g[0], g[1]), bearing(g[g.len() - 2], g[g.len() - 1])]);
            index.insert(r.id.clone(), i);
            for k in r.weights.keys() {
                fields.insert(k.clone());
            }
            links.push(Link {
                length: polyline_length(g),
                angular_curvature: angular_curvature(g),
                id: r.id,
                geometry: r.geometry,
                weights: r.weights,
            });
        }

        Ok(SpatialNetwork { links, junctions, ends, bearings, index, fields })
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, i: LinkIdx) -> &Link {
        &self.links[i]
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn junction_of(&self, link: LinkIdx, end: u8) -> JunctionIdx {
        self.ends[link][end as usize]
    }

    pub fn link_index(&self, id: &str) -> Option<LinkIdx> {
        self.index.get(id).copied()
    }

    /// Direction of travel when arriving at the given end from inside the
    /// link, degrees in (-180, 180].
    pub fn arrival_bearing(&self, link: LinkIdx, end: u8) -> f64 {
        match end {
            0 => reverse_bearing(self.bearings[link][0]),
            _ => self.bearings[link][1],
        }
    }

    /// Direction of travel when departing into the link at the given end.
    pub fn departure_bearing(&self, link: LinkIdx, end: u8) -> f64 {
        match end {
            0 => self.bearings[link][0],
            _ => reverse_bearing(self.bearings[link][1]),
        }
    }

    pub fn weight_fields(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|s| s.as_str())
    }

    /// Materializes a weight field over all links; absent values are 0.
    /// The synthetic field [`EVERYWHERE`] is 1 on every link.
    pub fn weight_column(&self, field: &str) -> Result<Vec<f64>, NetworkError> {
        if field == EVERYWHERE {
            return Ok(vec![1.0; self.links.len()]);
        }
        if !self.fields.contains(field) {
            return Err(NetworkError::UnknownWeightField { field: field.to_string() });
        }
        Ok(self
            .links
            .iter()
            .map(|l| l.weights.get(field).copied().unwrap_or(0.0))
            .collect())
    }

    pub fn to_raw(&self) -> Vec<RawLink> {
        self.links
            .iter()
            .map(|l| RawLink {
                id: l.id.clone(),
                geometry: l.geometry.clone(),
                weights: l.weights.clone(),
            })
            .collect()
    }

    pub fn total_length(&self) -> f64 {
        self.links.iter().map(|l| l.length).sum()
    }
}

fn reverse_bearing(b: f64) -> f64 {
    if b > 0.0 {
        b - 180.0
    } else {
        b + 180.0
    }
}

#[derive(Clone, Debug)]
pub struct PrepareOptions {
    pub snap_tolerance: f64,
    /// Keep disconnected components instead of dropping all but the largest.
    pub keep_islands: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions { snap_tolerance: DEFAULT_SNAP_TOLERANCE, keep_islands: false }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SplitRecord {
    pub id: String,
    pub parts: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IslandRecord {
    pub link_ids: Vec<String>,
    pub total_length: f64,
    pub removed: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PrepareReport {
    /// Ids removed because an identical-geometry link (forward or reversed)
    /// with a smaller id exists.
    pub duplicates_removed: Vec<String>,
    pub splits: Vec<SplitRecord>,
    pub islands: Vec<IslandRecord>,
    pub total_length_before: f64,
    pub total_length_after: f64,
    /// Length dropped with duplicates and islands; splitting conserves length
    /// and prorates weights by length fraction.
    pub removed_length: f64,
    pub messages: Vec<String>,
}

fn geometry_key(g: &[Point]) -> Vec<u64> {
    let fwd: Vec<u64> = g.iter().flat_map(|p| [p.x.to_bits(), p.y.to_bits()]).collect();
    let rev: Vec<u64> = g.iter().rev().flat_map(|p| [p.x.to_bits(), p.y.to_bits()]).collect();
    if rev < fwd {
        rev
    } else {
        fwd
    }
}

/// Cleans a built network: removes exact duplicate links, splits links whose
/// interior passes through a junction, and drops all but the largest
/// connected component (unless `keep_islands`). Idempotent.
pub fn prepare(
    net: &SpatialNetwork,
    opts: &PrepareOptions,
) -> Result<(SpatialNetwork, PrepareReport), NetworkError> {
    let tol = opts.snap_tolerance;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(NetworkError::InvalidTolerance { value: tol });
    }
    let mut report = PrepareReport {
        total_length_before: net.total_length(),
        ..PrepareReport::default()
    };

    // Pass 1: duplicates. Links are in id order, so the first of each
    // geometry group has the smallest id.
    let mut seen: BTreeMap<Vec<u64>, ()> = BTreeMap::new();
    let mut kept: Vec<RawLink> = Vec::with_capacity(net.len());
    for l in net.links() {
        let key = geometry_key(&l.geometry);
        if seen.contains_key(&key) {
            report.duplicates_removed.push(l.id.clone());
            report.removed_length += l.length;
        } else {
            seen.insert(key, ());
            kept.push(RawLink {
                id: l.id.clone(),
                geometry: l.geometry.clone(),
                weights: l.weights.clone(),
            });
        }
    }

    // Pass 2: split links that run through a junction mid-geometry. Junction
    // positions come from a rebuild of the deduplicated set.
    let staged = SpatialNetwork::build(kept, tol)?;
    let mut out: Vec<RawLink> = Vec::with_capacity(staged.len());
    let taken_ids: BTreeSet<String> = staged.links().iter().map(|l| l.id.clone()).collect();
    for (li, l) in staged.links().iter().enumerate() {
        let own = [staged.junction_of(li, 0), staged.junction_of(li, 1)];
        // cut positions as (arc length, segment, t), ascending along the link;
        // every segment is scanned so repeated passes near one junction all cut
        let mut cuts: Vec<(f64, usize, f64)> = Vec::new();
        let seg_starts = arc_offsets(&l.geometry);
        for (ji, j) in staged.junctions().iter().enumerate() {
            if own.contains(&ji) {
                continue;
            }
            for seg in 0..l.geometry.len() - 1 {
                let (a, b) = (l.geometry[seg], l.geometry[seg + 1]);
                let t = geometry::project_on_segment(j.position, a, b);
                let q = geometry::point_on_segment(a, b, t);
                if j.position.dist(q) > tol {
                    continue;
                }
                let arc = seg_starts[seg] + a.dist(b) * t;
                if arc <= tol || arc >= l.length - tol {
                    continue;
                }
                cuts.push((arc, seg, t));
            }
        }
        cuts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        cuts.dedup_by(|next, kept| next.0 - kept.0 <= tol);
        if cuts.is_empty() {
            out.push(RawLink {
                id: l.id.clone(),
                geometry: l.geometry.clone(),
                weights: l.weights.clone(),
            });
            continue;
        }
        let mut rest = l.geometry.clone();
        let mut consumed_segs = 0usize;
        let mut consumed_arc = 0.0f64;
        let mut pieces: Vec<Vec<Point>> = Vec::new();
        for &(arc, seg, t) in &cuts {
            let local_seg = seg - consumed_segs;
            let local_t = if local_seg == 0 {
                // first segment of `rest` may be a partial segment
                let seg_len = rest[0].dist(rest[1]);
                (arc - consumed_arc - 0.0).max(0.0) / seg_len
            } else {
                t
            };
            let (head, tail) = geometry::split_polyline(&rest, local_seg, local_t);
            pieces.push(head);
            rest = tail;
            consumed_segs = seg;
            consumed_arc = arc;
        }
        pieces.push(rest);
        let mut record = SplitRecord { id: l.id.clone(), parts: Vec::new() };
        for (k, g) in pieces.into_iter().enumerate() {
            let mut pid = format!("{}.{}", l.id, k + 1);
            while taken_ids.contains(&pid) {
                pid.push('+');
            }
            let frac = polyline_length(&g) / l.length;
            let weights = l
                .weights
                .iter()
                .map(|(name, w)| (name.clone(), w * frac))
                .collect();
            record.parts.push(pid.clone());
            out.push(RawLink { id: pid, geometry: g, weights });
        }
        report.splits.push(record);
    }

    // Pass 3: connected components over the rebuilt network.
    let rebuilt = SpatialNetwork::build(out, tol)?;
    let comp = components(&rebuilt);
    let ncomp = comp.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    let keep_comp = if ncomp <= 1 {
        0
    } else {
        let mut count = vec![0usize; ncomp];
        let mut length = vec![0.0f64; ncomp];
        for (li, l) in rebuilt.links().iter().enumerate() {
            count[comp[li]] += 1;
            length[comp[li]] += l.length;
        }
        let mut best = 0usize;
        for c in 1..ncomp {
            if (count[c], length[c]) > (count[best], length[best]) {
                best = c;
            }
        }
        for c in 0..ncomp {
            if c == best {
                continue;
            }
            let ids: Vec<String> = rebuilt
                .links()
                .iter()
                .enumerate()
                .filter(|(li, _)| comp[*li] == c)
                .map(|(_, l)| l.id.clone())
                .collect();
            report.islands.push(IslandRecord {
                total_length: length[c],
                removed: !opts.keep_islands,
                link_ids: ids,
            });
            if !opts.keep_islands {
                report.removed_length += length[c];
            }
        }
        best
    };

    let final_raw: Vec<RawLink> = rebuilt
        .links()
        .iter()
        .enumerate()
        .filter(|(li, _)| opts.keep_islands || ncomp <= 1 || comp[*li] == keep_comp)
        .map(|(_, l)| RawLink {
            id: l.id.clone(),
            geometry: l.geometry.clone(),
            weights: l.weights.clone(),
        })
        .collect();
    let final_net = SpatialNetwork::build(final_raw, tol)?;
    report.total_length_after = final_net.total_length();
    if !report.duplicates_removed.is_empty() {
        report.messages.push(format!(
            "removed {} duplicate link(s)",
            report.duplicates_removed.len()
        ));
    }
    if !report.splits.is_empty() {
        report
            .messages
            .push(format!("split {} link(s) at mid-geometry junctions", report.splits.len()));
    }
    if !report.islands.is_empty() {
        report.messages.push(format!(
            "{} disconnected component(s) besides the largest",
            report.islands.len()
        ));
    }
    Ok((final_net, report))
}

fn arc_offsets(g: &[Point]) -> Vec<f64> {
    let mut offs = Vec::with_capacity(g.len().saturating_sub(1));
    let mut acc = 0.0;
    for w in g.windows(2) {
        offs.push(acc);
        acc += w[0].dist(w[1]);
    }
    offs
}

/// Component id per link, over shared-junction adjacency.
pub fn components(net: &SpatialNetwork) -> Vec<usize> {
    let n = net.len();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0usize;
    let mut stack: Vec<LinkIdx> = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(li) = stack.pop() {
            for end in 0..2u8 {
                let j = net.junction_of(li, end);
                for &(m, _) in &net.junctions()[j].incident {
                    if comp[m] == usize::MAX {
                        comp[m] = next;
                        stack.push(m);
                    }
                }
            }
        }
        next += 1;
    }
    comp
}

/// An observation site attached to its nearest link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawCountPoint {
    pub id: String,
    pub position: Point,
    /// year label -> observed flow
    pub observations: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountPoint {
    pub id: String,
    pub position: Point,
    pub link: LinkIdx,
    pub snap_distance: f64,
    pub observations: BTreeMap<String, f64>,
}

/// Attaches each point to its nearest link. Points farther than `tolerance`
/// from every link, or with two equidistant candidates (within 1e-6), are
/// reported together in one error.
pub fn snap_count_points(
    net: &SpatialNetwork,
    points: &[RawCountPoint],
    tolerance: f64,
) -> Result<Vec<CountPoint>, NetworkError> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(NetworkError::InvalidTolerance { value: tolerance });
    }
    let mut out = Vec::with_capacity(points.len());
    let mut unresolved: Vec<String> = Vec::new();
    let mut ambiguous: Vec<String> = Vec::new();
    for p in points {
        let mut best = (f64::INFINITY, usize::MAX);
        let mut second = f64::INFINITY;
        for (li, l) in net.links().iter().enumerate() {
            let (d, _, _) = nearest_on_polyline(&l.geometry, p.position);
            if d < best.0 {
                second = best.0;
                best = (d, li);
            } else if d < second {
                second = d;
            }
        }
        if best.0 > tolerance {
            unresolved.push(p.id.clone());
        } else if second - best.0 < 1e-6 {
            ambiguous.push(p.id.clone());
        } else {
            out.push(CountPoint {
                id: p.id.clone(),
                position: p.position,
                link: best.1,
                snap_distance: best.0,
                observations: p.observations.clone(),
            });
        }
    }
    if unresolved.is_empty() && ambiguous.is_empty() {
        Ok(out)
    } else {
        Err(NetworkError::Snap { unresolved, ambiguous })
    }
}
