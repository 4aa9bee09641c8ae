//! One function per subcommand. Commands read documented file formats,
//! call into mhspna-core and write deterministic outputs; stdout carries a
//! short summary, warnings go to stderr.

use std::collections::BTreeMap;
use std::path::Path;

use mhspna_core::betweenness::{run_battery, ColumnId, FlowField, FlowTable};
use mhspna_core::calibrate::{
    assemble_design, cv_select_penalty, evaluate, incremental_inputs, observation_weights,
    predict_direct, predict_incremental, predict_null, sweep_sigma, PointPrediction,
};
use mhspna_core::geometry::Point;
use mhspna_core::network::{prepare, snap_count_points, CountPoint, PrepareOptions, RawCountPoint};
use mhspna_core::{CalibratedModel, SpatialNetwork};

use crate::config::ProjectConfig;
use crate::error::{CliError, CliResult};
use crate::files;
use crate::geojson;
use crate::synth::{plant_counts, synth_links, PlantOptions, WeightPlan};

pub fn cmd_prepare(
    cfg: &ProjectConfig,
    input: &Path,
    output: &Path,
    report_out: Option<&Path>,
    tolerance: Option<f64>,
    keep_islands: bool,
) -> CliResult<()> {
    let tol = tolerance.unwrap_or(cfg.network_tolerance);
    let raw = geojson::read_raw_links(input)?;
    let net = SpatialNetwork::build(raw, tol)?;
    let (cleaned, report) = prepare(&net, &PrepareOptions { snap_tolerance: tol, keep_islands })?;
    geojson::write_network(output, &cleaned)?;
    if let Some(path) = report_out {
        files::write_report(path, &report)?;
    }
    for m in &report.messages {
        eprintln!("warning: {m}");
    }
    let islands_dropped = report.islands.iter().filter(|i| i.removed).count();
    println!(
        "prepared: {} links, {} junctions ({} duplicates removed, {} splits, {} islands dropped)",
        cleaned.links().len(),
        cleaned.junctions().len(),
        report.duplicates_removed.len(),
        report.splits.len(),
        islands_dropped
    );
    Ok(())
}

fn configured_specs(cfg: &ProjectConfig) -> CliResult<Vec<mhspna_core::AnalysisSpec>> {
    let specs = cfg.specs()?;
    if specs.is_empty() {
        return Err(CliError::usage("no analyses configured"));
    }
    Ok(specs)
}

pub fn cmd_analyze(
    cfg: &ProjectConfig,
    network: &Path,
    output: &Path,
    csv_out: Option<&Path>,
    seed: u64,
) -> CliResult<()> {
    let specs = configured_specs(cfg)?;
    let net = geojson::read_network(network, cfg.network_tolerance)?;
    let (fields, report) = run_battery(&net, &specs, &cfg.metric.params(), seed)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    geojson::write_flows(output, &net, &fields)?;
    if let Some(path) = csv_out {
        files::write_flow_table(path, &FlowTable::from_fields(&net, &fields))?;
    }
    println!("analyzed: {} columns x {} links", fields.len(), net.links().len());
    Ok(())
}

/// Reorders flow-table columns to network link order; the table must cover
/// exactly the network's links.
fn table_to_fields(net: &SpatialNetwork, table: &FlowTable) -> CliResult<Vec<FlowField>> {
    if table.link_ids.len() != net.links().len() {
        return Err(CliError::domain(format!(
            "flow table covers {} links, network has {}",
            table.link_ids.len(),
            net.links().len()
        )));
    }
    let row_of: BTreeMap<&str, usize> =
        table.link_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut rows = Vec::with_capacity(net.links().len());
    for l in net.links() {
        let row = row_of.get(l.id.as_str()).ok_or_else(|| {
            CliError::domain(format!("flow table has no rows for link {:?}", l.id))
        })?;
        rows.push(*row);
    }
    Ok(table
        .columns
        .iter()
        .map(|(id, vals)| FlowField {
            column: id.clone(),
            values: rows.iter().map(|&r| vals[r]).collect(),
        })
        .collect())
}

fn expected_columns(specs: &[mhspna_core::AnalysisSpec]) -> Vec<ColumnId> {
    specs
        .iter()
        .flat_map(|s| {
            s.radii
                .iter()
                .map(|&(_, rmax)| ColumnId { analysis: s.key.clone(), radius: rmax })
                .collect::<Vec<_>>()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_calibrate(
    cfg: &ProjectConfig,
    network: &Path,
    flows: &Path,
    counts: &Path,
    year: &str,
    model_out: &Path,
    coefficients_out: Option<&Path>,
    no_intercept: bool,
    seed: u64,
) -> CliResult<()> {
    let specs = configured_specs(cfg)?;
    let net = geojson::read_network(network, cfg.network_tolerance)?;
    let table = files::read_flow_table(flows)?;

    let mut expect: Vec<String> = expected_columns(&specs).iter().map(ColumnId::label).collect();
    let mut got: Vec<String> = table.columns.iter().map(|(c, _)| c.label()).collect();
    expect.sort();
    got.sort();
    if expect != got {
        return Err(CliError::domain(format!(
            "flow table columns [{}] do not match the configured analyses [{}]",
            got.join(", "),
            expect.join(", ")
        )));
    }

    let fields = table_to_fields(&net, &table)?;
    let raw_points = files::read_counts(counts)?;
    for p in &raw_points {
        if let Some(&v) = p.observations.get(year) {
            if !(v > 0.0) {
                return Err(CliError::domain(format!(
                    "count point {:?}: observed flow {v} for year {year:?} is outside the \
                     weighting domain (weights are flow^(lambda_w - 1), which needs flow > 0)",
                    p.id
                )));
            }
        }
    }
    let points = snap_count_points(&net, &raw_points, cfg.count_tolerance)?;
    let design = assemble_design(&fields, &points, year)?;
    let weights = observation_weights(&design.y, cfg.lambda_w)?;
    let mut cv_opts = cfg.cv_options(seed)?;
    if no_intercept {
        cv_opts.fit.intercept = false;
    }
    let result = cv_select_penalty(&design, &weights, &cv_opts)?;
    let model = result.model.with_context(cfg.metric.params(), specs);
    files::write_model(model_out, &model)?;
    if let Some(path) = coefficients_out {
        files::write_coefficients(path, &model)?;
    }
    println!(
        "lambda_r = {} ({})",
        model.lambda_r,
        if cfg.lambda_r.is_some() { "manual" } else { "grid-selected" }
    );
    match model.cv_r2 {
        Some(v) => println!("cv_r2 = {v}"),
        None => println!("cv_r2 = n/a"),
    }
    Ok(())
}

fn battery_fields(
    net: &SpatialNetwork,
    model: &CalibratedModel,
    seed: u64,
) -> CliResult<Vec<FlowField>> {
    let (fields, report) = run_battery(net, &model.specs, &model.metric, seed)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(fields)
}

pub enum PredictMode {
    Direct,
    Incremental,
    Null,
}

pub struct PredictArgs<'a> {
    pub model: &'a Path,
    pub mode: PredictMode,
    pub network: Option<&'a Path>,
    pub network_t1: Option<&'a Path>,
    pub network_t2: Option<&'a Path>,
    pub baseline: Option<&'a Path>,
    pub year: Option<&'a str>,
    pub label: &'a str,
    pub output: &'a Path,
}

fn need<'a, T: ?Sized>(v: Option<&'a T>, flag: &str, mode: &str) -> CliResult<&'a T> {
    v.ok_or_else(|| CliError::usage(format!("{mode} mode needs {flag}")))
}

fn positions_of(points: &[RawCountPoint]) -> BTreeMap<String, Point> {
    points.iter().map(|p| (p.id.clone(), p.position)).collect()
}

pub fn cmd_predict(cfg: &ProjectConfig, args: &PredictArgs<'_>, seed: u64) -> CliResult<()> {
    let model = files::read_model(args.model)?;
    match args.mode {
        PredictMode::Direct => {
            let net_path = need(args.network, "--network", "direct")?;
            let net = geojson::read_network(net_path, cfg.network_tolerance)?;
            let fields = battery_fields(&net, &model, seed)?;
            let pred = predict_direct(&model, &fields)?;
            geojson::write_predictions(args.output, &net, &pred.values)?;
            println!("predicted: {} links ({} floored)", pred.values.len(), pred.floored.len());
        }
        PredictMode::Incremental => {
            let t1 = need(args.network_t1, "--network-t1", "incremental")?;
            let t2 = need(args.network_t2, "--network-t2", "incremental")?;
            let baseline = need(args.baseline, "--baseline", "incremental")?;
            let year = need(args.year, "--year", "incremental")?;
            let net1 = geojson::read_network(t1, cfg.network_tolerance)?;
            let net2 = geojson::read_network(t2, cfg.network_tolerance)?;
            let raw = files::read_counts(baseline)?;
            let points_t1 = snap_count_points(&net1, &raw, cfg.count_tolerance)?;
            let points_t2 = snap_count_points(&net2, &raw, cfg.count_tolerance)?;
            let inputs = incremental_inputs(&points_t1, &points_t2, year)?;
            let fields_t1 = battery_fields(&net1, &model, seed)?;
            let fields_t2 = battery_fields(&net2, &model, seed)?;
            let preds = predict_incremental(&model, &fields_t1, &fields_t2, &inputs)?;
            files::write_point_predictions(args.output, &preds, &positions_of(&raw), args.label)?;
            let floored = preds.iter().filter(|p| p.floored).count();
            println!("predicted: {} points ({floored} floored)", preds.len());
        }
        PredictMode::Null => {
            let baseline = need(args.baseline, "--baseline", "null")?;
            let year = need(args.year, "--year", "null")?;
            let raw = files::read_counts(baseline)?;
            // the null model never looks at the network, so no snapping
            let stubs: Vec<CountPoint> = raw
                .iter()
                .map(|p| CountPoint {
                    id: p.id.clone(),
                    position: p.position,
                    link: 0,
                    snap_distance: 0.0,
                    observations: p.observations.clone(),
                })
                .collect();
            let preds: Vec<PointPrediction> = predict_null(&stubs, year)?;
            files::write_point_predictions(args.output, &preds, &positions_of(&raw), args.label)?;
            println!("predicted: {} points (0 floored)", preds.len());
        }
    }
    Ok(())
}

pub fn cmd_evaluate(
    predictions: &Path,
    pred_year: &str,
    observations: &Path,
    obs_year: &str,
    report_out: Option<&Path>,
) -> CliResult<()> {
    let pred = files::read_counts(predictions)?;
    let obs = files::read_counts(observations)?;
    let pred_by_id: BTreeMap<&str, &RawCountPoint> =
        pred.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut pairs: Vec<(String, f64, f64)> = Vec::new();
    for o in &obs {
        let Some(p) = pred_by_id.get(o.id.as_str()) else { continue };
        let observed = *o.observations.get(obs_year).ok_or_else(|| {
            CliError::domain(format!("point {:?} has no observation for year {obs_year:?}", o.id))
        })?;
        let predicted = *p.observations.get(pred_year).ok_or_else(|| {
            CliError::domain(format!("point {:?} has no prediction for year {pred_year:?}", o.id))
        })?;
        pairs.push((o.id.clone(), predicted, observed));
    }
    let report = evaluate(&pairs)?;
    if let Some(path) = report_out {
        files::write_report(path, &report)?;
    }
    match report.r2 {
        Some(v) => println!("r2 = {v}"),
        None => println!("r2 = n/a"),
    }
    println!("geh_mean = {}", report.geh_mean);
    println!("geh_under_5_fraction = {}", report.geh_under_5_fraction);
    Ok(())
}

pub struct SynthArgs<'a> {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub plan: WeightPlan,
    pub output: &'a Path,
    pub counts_out: Option<&'a Path>,
    pub plant_year: &'a str,
    pub plant_points: usize,
    pub plant_intercept: f64,
    pub plant_coefficients: &'a [(ColumnId, f64)],
    pub plant_noise: f64,
}

pub fn cmd_synth(cfg: &ProjectConfig, args: &SynthArgs<'_>, seed: u64) -> CliResult<()> {
    let links = synth_links(args.rows, args.cols, args.spacing, args.plan, seed)?;
    let net = SpatialNetwork::build(links, cfg.network_tolerance)?;
    geojson::write_network(args.output, &net)?;
    println!(
        "synth grid {}x{}: {} links, {} junctions",
        args.rows,
        args.cols,
        net.links().len(),
        net.junctions().len()
    );
    if let Some(counts_out) = args.counts_out {
        let specs = configured_specs(cfg)?;
        let opts = PlantOptions {
            year: args.plant_year.to_string(),
            points: args.plant_points,
            intercept: args.plant_intercept,
            coefficients: args.plant_coefficients.to_vec(),
            noise: args.plant_noise,
            seed,
        };
        let counts = plant_counts(&net, &specs, &cfg.metric.params(), seed, &opts)?;
        files::write_counts(counts_out, &counts)?;
        println!("planted {} count points (year {:?})", counts.len(), args.plant_year);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep_sigma(
    cfg: &ProjectConfig,
    network: &Path,
    counts: &Path,
    year: &str,
    analysis: &str,
    radius: f64,
    sigma_grid: &[f64],
    a_grid: &[f64],
    output: &Path,
    seed: u64,
) -> CliResult<()> {
    if sigma_grid.is_empty() {
        return Err(CliError::usage("--sigma-grid is empty"));
    }
    if a_grid.is_empty() {
        return Err(CliError::usage("--a-grid is empty"));
    }
    let specs = configured_specs(cfg)?;
    let spec = specs.iter().find(|s| s.key == analysis).ok_or_else(|| {
        CliError::usage(format!("no configured analysis named {analysis:?}"))
    })?;
    let net = geojson::read_network(network, cfg.network_tolerance)?;
    let raw = files::read_counts(counts)?;
    let points = snap_count_points(&net, &raw, cfg.count_tolerance)?;
    let table = sweep_sigma(
        &net,
        spec,
        radius,
        sigma_grid,
        a_grid,
        &points,
        year,
        cfg.lambda_w,
        cfg.metric.clamp,
        seed,
    )?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    files::write_sweep(output, &table)?;
    println!("swept {} cells", table.rows.len());
    Ok(())
}
