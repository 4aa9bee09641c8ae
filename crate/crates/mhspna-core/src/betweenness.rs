//! Radius-constrained betweenness flows.
//!
//! For each origin link y, each destination z within the radius (measured
//! centre-to-centre under the plain length metric), a trip of weight W(y,z)
//! is routed along the shortest hybrid-metric path and every link on the path
//! accumulates the trip weight times its origin-destination fraction: 1 for
//! interior links, 1/2 at either endpoint, 1/3 when the pair is the origin
//! itself. Paths are resampled `oversample` times with fresh random factors
//! and flows are averaged.
//!
//! Demand models: `Elastic` sends W(y)*W(z) per pair (activity grows with
//! what the radius reaches), `TwoPhase` normalizes each origin's outgoing
//! trips to exactly W(y) split in proportion to destination weight, and
//! `SingleOrigin` routes unit weight from one named link.
//!
//! Results are bit-identical for any worker count: origins are processed in
//! fixed chunks and partial sums are folded in chunk order, serial and
//! parallel alike.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::BatteryError;
use crate::metric::{CostBasis, MetricParams};
use crate::network::{LinkIdx, SpatialNetwork};
use crate::routing::{radius_field, shortest_path_tree, HybridCost, RadiusField, TargetSet};

const CHUNK: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetweennessType {
    Elastic,
    TwoPhase,
    SingleOrigin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OriginSpec {
    /// Weight field naming the origin activity (elastic and two-phase).
    #[serde(rename = "origin_field")]
    WeightField(String),
    /// Explicit origin link id (single-origin).
    #[serde(rename = "origin_link")]
    Link(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    pub key: String,
    pub btype: BetweennessType,
    #[serde(flatten)]
    pub origin: OriginSpec,
    pub destination_weight_field: String,
    /// (rmin, rmax) pairs; rmin 0 means the origin link itself is included.
    pub radii: Vec<(f64, f64)>,
    /// Prorate destination weight by the fraction of the link within radius
    /// instead of all-or-nothing membership.
    #[serde(default)]
    pub continuous: bool,
}

impl AnalysisSpec {
    pub fn validate(&self) -> Result<(), BatteryError> {
        if self.key.is_empty() {
            return Err(BatteryError::InvalidKey { key: self.key.clone(), reason: "empty" });
        }
        if self.key.contains('@') {
            return Err(BatteryError::InvalidKey {
                key: self.key.clone(),
                reason: "'@' is reserved for column labels",
            });
        }
        if self.radii.is_empty() {
            return Err(BatteryError::InvalidRadii {
                key: self.key.clone(),
                reason: "no radii".to_string(),
            });
        }
        for &(rmin, rmax) in &self.radii {
            if !(rmin >= 0.0 && rmax > rmin && rmax.is_finite()) {
                return Err(BatteryError::InvalidRadii {
                    key: self.key.clone(),
                    reason: format!("need 0 <= rmin < rmax finite, got ({rmin}, {rmax})"),
                });
            }
        }
        Ok(())
    }
}

/// Identifies one flow column: an analysis key plus the outer radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnId {
    pub analysis: String,
    pub radius: f64,
}

impl Eq for ColumnId {}

impl Ord for ColumnId {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.analysis
            .cmp(&other.analysis)
            .then_with(|| self.radius.total_cmp(&other.radius))
    }
}

impl PartialOrd for ColumnId {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

pub fn radius_label(r: f64) -> String {
    if crate::math::floor(r) == r && crate::math::abs(r) < 1e15 {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

impl ColumnId {
    pub fn label(&self) -> String {
        format!("{}@{}", self.analysis, radius_label(self.radius))
    }

    /// Parses "key@radius"; the split is on the last '@'.
    pub fn parse(label: &str) -> Option<ColumnId> {
        let at = label.rfind('@')?;
        let radius: f64 = label[at + 1..].parse().ok()?;
        Some(ColumnId { analysis: label[..at].to_string(), radius })
    }
}

/// One flow value per link, aligned with the network's link order.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub column: ColumnId,
    pub values: Vec<f64>,
}

/// Network-independent view of flow columns keyed by link id, the exchange
/// format between battery runs, files, and the calibration stage.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTable {
    pub link_ids: Vec<String>,
    pub columns: Vec<(ColumnId, Vec<f64>)>,
}

impl FlowTable {
    pub fn from_fields(net: &SpatialNetwork, fields: &[FlowField]) -> Self {
        FlowTable {
            link_ids: net.links().iter().map(|l| l.id.clone()).collect(),
            columns: fields.iter().map(|f| (f.column.clone(), f.values.clone())).collect(),
        }
    }

    pub fn column_index(&self, id: &ColumnId) -> Option<usize> {
        self.columns.iter().position(|(c, _)| c == id)
    }

    pub fn link_row(&self, id: &str) -> Option<usize> {
        self.link_ids.iter().position(|l| l == id)
    }
}

/// Fraction of one origin-destination trip carried by link x: 1 strictly
/// inside the path, 1/2 at an endpoint, 1/3 for the origin's own trip to
/// itself, 0 off the path.
pub fn od_contribution(x: LinkIdx, y: LinkIdx, z: LinkIdx, path: &[LinkIdx]) -> f64 {
    if !path.contains(&x) {
        return 0.0;
    }
    if y == z {
        return if x == y { 1.0 / 3.0 } else { 0.0 };
    }
    if x == y || x == z {
        0.5
    } else {
        1.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActivityCheck {
    pub column: String,
    /// Total trip weight the demand model should have emitted.
    pub expected: f64,
    /// Trip weight actually accumulated while walking paths.
    pub accumulated: f64,
    /// Two-phase origins with positive weight but no reachable destination.
    pub zero_destination_origins: usize,
}

impl ActivityCheck {
    pub fn error(&self) -> f64 {
        let scale = if self.expected.abs() > 1.0 { self.expected.abs() } else { 1.0 };
        (self.expected - self.accumulated).abs() / scale
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BatteryReport {
    pub warnings: Vec<String>,
    pub checks: Vec<ActivityCheck>,
    pub origins_processed: usize,
}

impl BatteryReport {
    pub fn max_activity_error(&self) -> f64 {
        let mut e = 0.0f64;
        for c in &self.checks {
            if c.error() > e {
                e = c.error();
            }
        }
        e
    }
}

struct ColumnPlan {
    spec: usize,
    rmin: f64,
    rmax: f64,
}

struct Ctx<'a> {
    net: &'a SpatialNetwork,
    basis: CostBasis,
    params: MetricParams,
    seed: u64,
    columns: Vec<ColumnPlan>,
    specs: Vec<AnalysisSpec>,
    origin_w: Vec<Vec<f64>>,
    dest_w: Vec<Vec<f64>>,
    dest_bound: f64,
}

struct ChunkOut {
    flows: Vec<Vec<f64>>,
    expected: Vec<f64>,
    accumulated: Vec<f64>,
    zero_dest: Vec<usize>,
    origins: usize,
}

fn band_factor(field: &RadiusField, z: LinkIdx, plan: &ColumnPlan, continuous: bool) -> f64 {
    if continuous {
        if z == field.origin {
            if plan.rmin == 0.0 {
                field.fraction_within(z, plan.rmax)
            } else {
                0.0
            }
        } else {
            field.fraction_within(z, plan.rmax) - field.fraction_within(z, plan.rmin)
        }
    } else if field.in_radius(z, plan.rmin, plan.rmax) {
        1.0
    } else {
        0.0
    }
}

fn process_chunk(ctx: &Ctx<'_>, origins: &[LinkIdx]) -> ChunkOut {
    let n = ctx.net.len();
    let ncols = ctx.columns.len();
    let mut out = ChunkOut {
        flows: vec![vec![0.0; n]; ncols],
        expected: vec![0.0; ncols],
        accumulated: vec![0.0; ncols],
        zero_dest: vec![0; ncols],
        origins: origins.len(),
    };
    let mut stamp: Vec<u32> = vec![0; n];
    let mut stamp_gen: u32 = 0;
    let mut unique: Vec<LinkIdx> = Vec::new();

    for &y in origins {
        let field = radius_field(ctx.net, y);

        // (z, column, trip weight) in ascending z; two passes so the
        // two-phase denominator is ready before weights are fixed
        let mut entries: Vec<(LinkIdx, u16, f64)> = Vec::new();
        let mut denom = vec![0.0f64; ncols];
        for z in 0..n {
            let d = field.distance(z);
            if !(d <= ctx.dest_bound) {
                continue;
            }
            for (ci, plan) in ctx.columns.iter().enumerate() {
                if ctx.origin_w[plan.spec][y] == 0.0 {
                    continue;
                }
                let wz = ctx.dest_w[plan.spec][z];
                if wz == 0.0 {
                    continue;
                }
                let f = band_factor(&field, z, plan, ctx.specs[plan.spec].continuous);
                if f == 0.0 {
                    continue;
                }
                let wzf = wz * f;
                denom[ci] += wzf;
                entries.push((z, ci as u16, wzf));
            }
        }

        let mut final_entries: Vec<(LinkIdx, u16, f64)> = Vec::with_capacity(entries.len());
        for &(z, ci, wzf) in &entries {
            let plan = &ctx.columns[ci as usize];
            let wy = ctx.origin_w[plan.spec][y];
            let w = match ctx.specs[plan.spec].btype {
                BetweennessType::Elastic | BetweennessType::SingleOrigin => wy * wzf,
                BetweennessType::TwoPhase => {
                    if denom[ci as usize] > 0.0 {
                        wy * wzf / denom[ci as usize]
                    } else {
                        continue;
                    }
                }
            };
            final_entries.push((z, ci, w));
        }

        for (ci, plan) in ctx.columns.iter().enumerate() {
            let wy = ctx.origin_w[plan.spec][y];
            if wy == 0.0 {
                continue;
            }
            match ctx.specs[plan.spec].btype {
                BetweennessType::Elastic | BetweennessType::SingleOrigin => {
                    out.expected[ci] += wy * denom[ci];
                }
                BetweennessType::TwoPhase => {
                    if denom[ci] > 0.0 {
                        out.expected[ci] += wy;
                    } else {
                        out.zero_dest[ci] += 1;
                    }
                }
            }
        }

        if final_entries.is_empty() {
            continue;
        }

        let mut targets: Vec<LinkIdx> = Vec::new();
        for &(z, _, _) in &final_entries {
            if z != y && targets.last() != Some(&z) {
                targets.push(z);
            }
        }

        for it in 0..ctx.params.oversample {
            let tree = if targets.is_empty() {
                None
            } else {
                let cost = HybridCost::new(&ctx.basis, &ctx.params, ctx.seed, y, it);
                Some(shortest_path_tree(
                    ctx.net,
                    y,
                    &cost,
                    Some(TargetSet::from_links(n, targets.iter().copied())),
                ))
            };

            let mut i = 0;
            while i < final_entries.len() {
                let z = final_entries[i].0;
                let mut j = i;
                if z == y {
                    while j < final_entries.len() && final_entries[j].0 == z {
                        let (_, ci, w) = final_entries[j];
                        out.flows[ci as usize][y] += w * (1.0 / 3.0);
                        out.accumulated[ci as usize] += w;
                        j += 1;
                    }
                    i = j;
                    continue;
                }
                let tree = tree.as_ref().unwrap();
                let states = tree
                    .path_states(z)
                    .expect("destination within radius must be routable");
                stamp_gen += 1;
                unique.clear();
                for &s in &states {
                    let l = crate::routing::state_link(s);
                    if stamp[l] != stamp_gen {
                        stamp[l] = stamp_gen;
                        unique.push(l);
                    }
                }
                while j < final_entries.len() && final_entries[j].0 == z {
                    let (_, ci, w) = final_entries[j];
                    let ci = ci as usize;
                    for &x in &unique {
                        let odf = if x == y || x == z { 0.5 } else { 1.0 };
                        out.flows[ci][x] += odf * w;
                    }
                    out.accumulated[ci] += w;
                    j += 1;
                }
                i = j;
            }
        }
    }
    out
}

fn fold(total: &mut ChunkOut, part: ChunkOut) {
    for (tc, pc) in total.flows.iter_mut().zip(part.flows) {
        for (t, p) in tc.iter_mut().zip(pc) {
            *t += p;
        }
    }
    for (t, p) in total.expected.iter_mut().zip(part.expected) {
        *t += p;
    }
    for (t, p) in total.accumulated.iter_mut().zip(part.accumulated) {
        *t += p;
    }
    for (t, p) in total.zero_dest.iter_mut().zip(part.zero_dest) {
        *t += p;
    }
    total.origins += part.origins;
}

/// Runs every analysis in one pass, sharing path trees across specs. Returns
/// one field per (spec, radius) in the given order plus a self-check report.
/// Deterministic given the seed, for any worker count.
pub fn run_battery(
    net: &SpatialNetwork,
    specs: &[AnalysisSpec],
    params: &MetricParams,
    seed: u64,
) -> Result<(Vec<FlowField>, BatteryReport), BatteryError> {
    params.validate()?;
    if specs.is_empty() {
        return Err(BatteryError::NoAnalyses);
    }
    let mut columns: Vec<ColumnPlan> = Vec::new();
    let mut ids: Vec<ColumnId> = Vec::new();
    let mut origin_w: Vec<Vec<f64>> = Vec::new();
    let mut dest_w: Vec<Vec<f64>> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    for (si, spec) in specs.iter().enumerate() {
        spec.validate()?;
        let ow = match &spec.origin {
            OriginSpec::WeightField(f) => net.weight_column(f)?,
            OriginSpec::Link(id) => {
                let idx = net
                    .link_index(id)
                    .ok_or_else(|| BatteryError::Network(crate::error::NetworkError::UnknownLink {
                        id: id.clone(),
                    }))?;
                let mut v = vec![0.0; net.len()];
                v[idx] = 1.0;
                v
            }
        };
        if ow.iter().all(|&w| w == 0.0) {
            warnings.push(format!(
                "analysis {:?}: no origins with positive weight; flows are all zero",
                spec.key
            ));
        }
        let dw = net.weight_column(&spec.destination_weight_field)?;
        origin_w.push(ow);
        dest_w.push(dw);
        for &(rmin, rmax) in &spec.radii {
            let id = ColumnId { analysis: spec.key.clone(), radius: rmax };
            if ids.contains(&id) {
                return Err(BatteryError::DuplicateColumn { label: id.label() });
            }
            ids.push(id);
            columns.push(ColumnPlan { spec: si, rmin, rmax });
        }
    }

    let max_len = net.links().iter().fold(0.0f64, |m, l| if l.length > m { l.length } else { m });
    let max_rmax = columns.iter().fold(0.0f64, |m, c| if c.rmax > m { c.rmax } else { m });
    let any_continuous = specs.iter().any(|s| s.continuous);
    let dest_bound = if any_continuous { max_rmax + 0.5 * max_len } else { max_rmax };

    let ctx = Ctx {
        net,
        basis: CostBasis::new(net, params),
        params: *params,
        seed,
        columns,
        specs: specs.to_vec(),
        origin_w,
        dest_w,
        dest_bound,
    };

    let actives: Vec<LinkIdx> = (0..net.len())
        .filter(|&y| ctx.origin_w.iter().any(|w| w[y] > 0.0))
        .collect();
    let chunks: Vec<&[LinkIdx]> = actives.chunks(CHUNK).collect();

    let mut total = ChunkOut {
        flows: vec![vec![0.0; net.len()]; ctx.columns.len()],
        expected: vec![0.0; ctx.columns.len()],
        accumulated: vec![0.0; ctx.columns.len()],
        zero_dest: vec![0; ctx.columns.len()],
        origins: 0,
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let parts: Vec<ChunkOut> = chunks.par_iter().map(|c| process_chunk(&ctx, c)).collect();
        for part in parts {
            fold(&mut total, part);
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        for c in &chunks {
            fold(&mut total, process_chunk(&ctx, c));
        }
    }

    let k = params.oversample as f64;
    let fields: Vec<FlowField> = ids
        .into_iter()
        .zip(total.flows)
        .map(|(column, mut values)| {
            for v in &mut values {
                *v /= k;
            }
            FlowField { column, values }
        })
        .collect();

    let checks: Vec<ActivityCheck> = fields
        .iter()
        .enumerate()
        .map(|(ci, f)| ActivityCheck {
            column: f.column.label(),
            expected: total.expected[ci],
            accumulated: total.accumulated[ci] / k,
            zero_destination_origins: total.zero_dest[ci],
        })
        .collect();

    let report = BatteryReport { warnings, checks, origins_processed: total.origins };
    debug_assert!(report.max_activity_error() <= 1e-9, "activity accounting drifted");
    Ok((fields, report))
}

/// Convenience wrapper for a single analysis.
pub fn run_single(
    net: &SpatialNetwork,
    spec: &AnalysisSpec,
    params: &MetricParams,
    seed: u64,
) -> Result<(Vec<FlowField>, BatteryReport), BatteryError> {
    run_battery(net, core::slice::from_ref(spec), params, seed)
}
