//! Synthetic grid networks with optional weight plans and planted counts,
//! for fixtures and end-to-end checks. Everything is a pure function of the
//! seed: same flags, same bytes.

use std::collections::BTreeMap;

use mhspna_core::betweenness::{run_battery, AnalysisSpec, ColumnId};
use mhspna_core::geometry::Point;
use mhspna_core::network::{RawCountPoint, RawLink};
use mhspna_core::rng::Rng;
use mhspna_core::{MetricParams, SpatialNetwork};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightPlan {
    None,
    Default,
}

/// rows x cols junctions joined by straight links, `spacing` metres apart.
/// Ids are "h_<row>_<col>" and "v_<row>_<col>" by the lower-left junction.
pub fn grid_links(rows: usize, cols: usize, spacing: f64) -> CliResult<Vec<RawLink>> {
    if rows < 2 || cols < 2 {
        return Err(CliError::usage(format!(
            "grid needs at least 2x2 junctions, got {rows}x{cols}"
        )));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(CliError::usage(format!("spacing must be positive, got {spacing}")));
    }
    let at = |r: usize, c: usize| Point::new(c as f64 * spacing, r as f64 * spacing);
    let mut links = Vec::with_capacity(rows * (cols - 1) + (rows - 1) * cols);
    for r in 0..rows {
        for c in 0..cols - 1 {
            links.push(RawLink {
                id: format!("h_{r}_{c}"),
                geometry: vec![at(r, c), at(r, c + 1)],
                weights: BTreeMap::new(),
            });
        }
    }
    for r in 0..rows - 1 {
        for c in 0..cols {
            links.push(RawLink {
                id: format!("v_{r}_{c}"),
                geometry: vec![at(r, c), at(r + 1, c)],
                weights: BTreeMap::new(),
            });
        }
    }
    Ok(links)
}

/// Link midpoint row/col in junction coordinates.
fn grid_pos(id: &str) -> Option<(f64, f64)> {
    let mut it = id.split('_');
    let kind = it.next()?;
    let r: usize = it.next()?.parse().ok()?;
    let c: usize = it.next()?.parse().ok()?;
    match kind {
        "h" => Some((r as f64, c as f64 + 0.5)),
        "v" => Some((r as f64 + 0.5, c as f64)),
        _ => None,
    }
}

/// Sprinkles weight fields over a grid: `retail_m2` clustered at the centre,
/// a few `carpark` links, `parking_north` along the top band, and unit
/// markers on the two station links h_1_1 and v_1_1.
fn apply_default_plan(links: &mut [RawLink], rows: usize, cols: usize, seed: u64) {
    let mut rng = Rng::new(seed ^ 0x73796e7468);
    let centre = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
    let reach = rows.max(cols) as f64 / 4.0 + 0.5;
    for l in links.iter_mut() {
        let Some((r, c)) = grid_pos(&l.id) else { continue };
        let cheb = (r - centre.0).abs().max((c - centre.1).abs());
        if cheb <= reach {
            let v = 100.0 * (1 + rng.below(9)) as f64;
            l.weights.insert("retail_m2".to_string(), v);
        }
    }
    let mut order: Vec<usize> = (0..links.len()).collect();
    rng.shuffle(&mut order);
    let carparks = 2 + rows * cols / 20;
    for &i in order.iter().take(carparks.min(links.len())) {
        let v = 100.0 * (2 + rng.below(7)) as f64;
        links[i].weights.insert("carpark".to_string(), v);
    }
    for l in links.iter_mut() {
        let Some((r, _)) = grid_pos(&l.id) else { continue };
        // top band: both endpoints in the two northernmost junction rows
        if r >= rows as f64 - 2.0 && rng.below(2) == 0 {
            let v = 10.0 * (5 + rng.below(11)) as f64;
            l.weights.insert("parking_north".to_string(), v);
        }
    }
    for l in links.iter_mut() {
        if l.id == "h_1_1" {
            l.weights.insert("station_queen".to_string(), 1.0);
        } else if l.id == "v_1_1" {
            l.weights.insert("station_central".to_string(), 1.0);
        }
    }
}

pub fn synth_links(
    rows: usize,
    cols: usize,
    spacing: f64,
    plan: WeightPlan,
    seed: u64,
) -> CliResult<Vec<RawLink>> {
    let mut links = grid_links(rows, cols, spacing)?;
    if plan == WeightPlan::Default {
        apply_default_plan(&mut links, rows, cols, seed);
    }
    Ok(links)
}

#[derive(Clone, Debug)]
pub struct PlantOptions {
    pub year: String,
    pub points: usize,
    pub intercept: f64,
    /// (column label, coefficient) pairs over the battery's columns.
    pub coefficients: Vec<(ColumnId, f64)>,
    /// Multiplicative noise level; observed = linear * (1 + noise * N(0,1)).
    pub noise: f64,
    pub seed: u64,
}

fn midpoint(g: &[Point]) -> Point {
    let total: f64 = g.windows(2).map(|w| w[0].dist(w[1])).sum();
    let mut remain = total / 2.0;
    for w in g.windows(2) {
        let seg = w[0].dist(w[1]);
        if remain <= seg && seg > 0.0 {
            return mhspna_core::geometry::point_on_segment(w[0], w[1], remain / seg);
        }
        remain -= seg;
    }
    *g.last().unwrap()
}

/// Generates observations that are an exact linear function of battery flow
/// columns (plus optional multiplicative noise) at distinct link midpoints.
pub fn plant_counts(
    net: &SpatialNetwork,
    specs: &[AnalysisSpec],
    params: &MetricParams,
    battery_seed: u64,
    opts: &PlantOptions,
) -> CliResult<Vec<RawCountPoint>> {
    if opts.points == 0 {
        return Err(CliError::usage("planted counts need at least one point".to_string()));
    }
    if opts.points > net.links().len() {
        return Err(CliError::usage(format!(
            "cannot place {} points on {} links",
            opts.points,
            net.links().len()
        )));
    }
    let (fields, _) = run_battery(net, specs, params, battery_seed)?;
    let mut picked = Vec::with_capacity(opts.coefficients.len());
    for (id, coeff) in &opts.coefficients {
        let f = fields.iter().find(|f| &f.column == id).ok_or_else(|| {
            CliError::usage(format!(
                "planted coefficient names column {} which the battery does not produce",
                id.label()
            ))
        })?;
        picked.push((*coeff, f));
    }
    let mut rng = Rng::new(opts.seed ^ 0x706c616e74);
    let mut order: Vec<usize> = (0..net.links().len()).collect();
    rng.shuffle(&mut order);
    let mut chosen: Vec<usize> = order.into_iter().take(opts.points).collect();
    chosen.sort_unstable();
    let mut out = Vec::with_capacity(chosen.len());
    for (k, &li) in chosen.iter().enumerate() {
        let mut y = opts.intercept;
        for (coeff, f) in &picked {
            y += coeff * f.values[li];
        }
        if opts.noise > 0.0 {
            y *= 1.0 + opts.noise * rng.normal();
        }
        if !(y > 0.0 && y.is_finite()) {
            return Err(CliError::domain(format!(
                "planted response at link {:?} is {y}; counts must be positive \
                 (raise the intercept or lower the noise)",
                net.link(li).id
            )));
        }
        let mut observations = BTreeMap::new();
        observations.insert(opts.year.clone(), y);
        out.push(RawCountPoint {
            id: format!("pt{k:03}"),
            position: midpoint(&net.link(li).geometry),
            observations,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mhspna_core::betweenness::{BetweennessType, OriginSpec};

    #[test]
    fn grid_combinatorics() {
        let links = grid_links(3, 3, 100.0).unwrap();
        assert_eq!(links.len(), 12);
        let net = SpatialNetwork::build(links, 0.5).unwrap();
        assert_eq!(net.junctions().len(), 9);
        assert!(grid_links(1, 5, 100.0).is_err());
        assert!(grid_links(5, 5, 0.0).is_err());
    }

    #[test]
    fn default_plan_is_deterministic_and_marks_stations() {
        let a = synth_links(6, 5, 100.0, WeightPlan::Default, 42).unwrap();
        let b = synth_links(6, 5, 100.0, WeightPlan::Default, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_links(6, 5, 100.0, WeightPlan::Default, 43).unwrap();
        assert_ne!(a, c);
        let queen = a.iter().find(|l| l.id == "h_1_1").unwrap();
        assert_eq!(queen.weights.get("station_queen"), Some(&1.0));
        let central = a.iter().find(|l| l.id == "v_1_1").unwrap();
        assert_eq!(central.weights.get("station_central"), Some(&1.0));
        assert!(a.iter().any(|l| l.weights.contains_key("retail_m2")));
        assert!(a.iter().any(|l| l.weights.contains_key("carpark")));
        assert!(a.iter().any(|l| l.weights.contains_key("parking_north")));
    }

    #[test]
    fn planted_counts_are_the_linear_model() {
        let links = synth_links(5, 5, 100.0, WeightPlan::Default, 7).unwrap();
        let net = SpatialNetwork::build(links, 0.5).unwrap();
        let spec = AnalysisSpec {
            key: "e2s".into(),
            btype: BetweennessType::Elastic,
            origin: OriginSpec::WeightField("everywhere".into()),
            destination_weight_field: "retail_m2".into(),
            radii: vec![(0.0, 300.0)],
            continuous: false,
        };
        let params = MetricParams { sigma: 0.0, oversample: 1, ..MetricParams::default() };
        let opts = PlantOptions {
            year: "2007".into(),
            points: 10,
            intercept: 5.0,
            coefficients: vec![(ColumnId { analysis: "e2s".into(), radius: 300.0 }, 0.25)],
            noise: 0.0,
            seed: 7,
        };
        let counts =
            plant_counts(&net, std::slice::from_ref(&spec), &params, 7, &opts).unwrap();
        assert_eq!(counts.len(), 10);
        let (fields, _) = run_battery(&net, std::slice::from_ref(&spec), &params, 7).unwrap();
        // every observation sits at a link midpoint and equals 5 + 0.25*flow
        for p in &counts {
            let li = net
                .links()
                .iter()
                .position(|l| midpoint(&l.geometry) == p.position)
                .expect("point at a link midpoint");
            let want = 5.0 + 0.25 * fields[0].values[li];
            assert_eq!(p.observations["2007"], want);
        }
        let again = plant_counts(&net, std::slice::from_ref(&spec), &params, 7, &opts).unwrap();
        assert_eq!(counts, again);
    }

    #[test]
    fn planted_counts_must_stay_positive() {
        let links = synth_links(4, 4, 100.0, WeightPlan::Default, 7).unwrap();
        let net = SpatialNetwork::build(links, 0.5).unwrap();
        let spec = AnalysisSpec {
            key: "e2s".into(),
            btype: BetweennessType::Elastic,
            origin: OriginSpec::WeightField("everywhere".into()),
            destination_weight_field: "retail_m2".into(),
            radii: vec![(0.0, 300.0)],
            continuous: false,
        };
        let params = MetricParams { sigma: 0.0, oversample: 1, ..MetricParams::default() };
        let opts = PlantOptions {
            year: "2007".into(),
            points: 5,
            intercept: -1e12,
            coefficients: vec![],
            noise: 0.0,
            seed: 1,
        };
        let err =
            plant_counts(&net, std::slice::from_ref(&spec), &params, 7, &opts).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
