//! CSV and JSON file formats: counts, flow tables, models, coefficient
//! exports and reports. All writes are deterministic.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use mhspna_core::betweenness::{radius_label, ColumnId, FlowTable};
use mhspna_core::calibrate::{PointPrediction, SweepTable};
use mhspna_core::geometry::Point;
use mhspna_core::network::RawCountPoint;
use mhspna_core::CalibratedModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::geojson::{read_json, write_json_pretty, SCHEMA_VERSION};

const COUNT_HEADERS: [&str; 5] = ["point_id", "x", "y", "year", "flow"];
const FLOW_HEADERS: [&str; 4] = ["link_id", "analysis", "radius", "value"];

#[derive(Serialize, Deserialize)]
struct CountRow {
    point_id: String,
    x: f64,
    y: f64,
    year: String,
    flow: f64,
}

fn open_csv(path: &Path, expected: &[&str]) -> CliResult<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let headers = rdr.headers().map_err(|e| CliError::io(path, e))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(CliError::io(
            path,
            format!("expected header {:?}, got {:?}", expected.join(","), got.join(",")),
        ));
    }
    Ok(rdr)
}

/// Reads a counts table. Rows sharing a point_id merge into one point and
/// must agree on coordinates; (point, year) pairs must be unique. Positivity
/// is not enforced here — calibration checks it where the weighting needs it.
pub fn read_counts(path: &Path) -> CliResult<Vec<RawCountPoint>> {
    let mut rdr = open_csv(path, &COUNT_HEADERS)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, RawCountPoint> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: CountRow = row.map_err(|e| CliError::io(path, e))?;
        if !(row.x.is_finite() && row.y.is_finite()) {
            return Err(CliError::domain(format!(
                "count point {:?}: coordinates must be finite",
                row.point_id
            )));
        }
        if !row.flow.is_finite() {
            return Err(CliError::domain(format!(
                "count point {:?}: flow must be finite, got {}",
                row.point_id, row.flow
            )));
        }
        match by_id.get_mut(&row.point_id) {
            None => {
                let mut observations = BTreeMap::new();
                observations.insert(row.year, row.flow);
                order.push(row.point_id.clone());
                by_id.insert(
                    row.point_id.clone(),
                    RawCountPoint {
                        id: row.point_id,
                        position: Point::new(row.x, row.y),
                        observations,
                    },
                );
            }
            Some(p) => {
                if p.position.x != row.x || p.position.y != row.y {
                    return Err(CliError::domain(format!(
                        "count point {:?} appears with two positions",
                        row.point_id
                    )));
                }
                if p.observations.insert(row.year.clone(), row.flow).is_some() {
                    return Err(CliError::domain(format!(
                        "count point {:?} has two rows for year {:?}",
                        row.point_id, row.year
                    )));
                }
            }
        }
    }
    Ok(order.into_iter().map(|id| by_id.remove(&id).unwrap()).collect())
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

pub fn write_counts(path: &Path, points: &[RawCountPoint]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(COUNT_HEADERS).map_err(|e| CliError::io(path, e))?;
    for p in points {
        for (year, flow) in &p.observations {
            w.write_record([
                p.id.as_str(),
                &format!("{}", p.position.x),
                &format!("{}", p.position.y),
                year,
                &format!("{flow}"),
            ])
            .map_err(|e| CliError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Per-point predictions in the counts schema, so evaluate can read them back.
pub fn write_point_predictions(
    path: &Path,
    preds: &[PointPrediction],
    positions: &BTreeMap<String, Point>,
    year: &str,
) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(COUNT_HEADERS).map_err(|e| CliError::io(path, e))?;
    for p in preds {
        let pos = positions.get(&p.point_id).ok_or_else(|| {
            CliError::domain(format!("no position for predicted point {:?}", p.point_id))
        })?;
        w.write_record([
            p.point_id.as_str(),
            &format!("{}", pos.x),
            &format!("{}", pos.y),
            year,
            &format!("{}", p.value),
        ])
        .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_flow_table(path: &Path, table: &FlowTable) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(FLOW_HEADERS).map_err(|e| CliError::io(path, e))?;
    for (column, values) in &table.columns {
        if values.len() != table.link_ids.len() {
            return Err(CliError::domain(format!(
                "column {} has {} values for {} links",
                column.label(),
                values.len(),
                table.link_ids.len()
            )));
        }
        let radius = radius_label(column.radius);
        for (id, v) in table.link_ids.iter().zip(values) {
            w.write_record([id.as_str(), &column.analysis, &radius, &format!("{v}")])
                .map_err(|e| CliError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a flow table. Rows must be grouped by column; the first column
/// fixes the link order and every later column must repeat it exactly.
pub fn read_flow_table(path: &Path) -> CliResult<FlowTable> {
    let mut rdr = open_csv(path, &FLOW_HEADERS)?;
    let mut columns: Vec<(ColumnId, Vec<f64>)> = Vec::new();
    let mut link_ids: Vec<String> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| CliError::io(path, e))?;
        let link = row.get(0).unwrap_or("").to_string();
        let analysis = row.get(1).unwrap_or("").to_string();
        let radius: f64 = row
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|e| CliError::io(path, format!("bad radius for link {link:?}: {e}")))?;
        let value: f64 = row
            .get(3)
            .unwrap_or("")
            .parse()
            .map_err(|e| CliError::io(path, format!("bad value for link {link:?}: {e}")))?;
        let id = ColumnId { analysis, radius };
        let same = columns.last().map_or(false, |(c, _)| *c == id);
        if !same {
            if let Some((c, v)) = columns.last() {
                if v.len() != link_ids.len() {
                    return Err(CliError::domain(format!(
                        "column {} has {} rows, expected {}",
                        c.label(),
                        v.len(),
                        link_ids.len()
                    )));
                }
            }
            if columns.iter().any(|(c, _)| *c == id) {
                return Err(CliError::domain(format!(
                    "column {} rows are not contiguous",
                    id.label()
                )));
            }
            columns.push((id, Vec::new()));
        }
        let is_first = columns.len() == 1;
        let vals = &mut columns.last_mut().unwrap().1;
        let pos = vals.len();
        if is_first {
            link_ids.push(link);
        } else if link_ids.get(pos).map(String::as_str) != Some(link.as_str()) {
            return Err(CliError::domain(format!(
                "link order differs between columns at row {pos} (got {link:?})"
            )));
        }
        vals.push(value);
    }
    if columns.is_empty() {
        return Err(CliError::domain(format!("{}: no flow rows", path.display())));
    }
    if let Some((c, v)) = columns.last() {
        if v.len() != link_ids.len() {
            return Err(CliError::domain(format!(
                "column {} has {} rows, expected {}",
                c.label(),
                v.len(),
                link_ids.len()
            )));
        }
    }
    Ok(FlowTable { link_ids, columns })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    /// Hash of the analysis recipe (specs + metric), binding the model to
    /// the battery that produced its design columns.
    content_hash: String,
    model: CalibratedModel,
}

pub fn model_content_hash(model: &CalibratedModel) -> String {
    let canonical = serde_json::to_string(&(&model.specs, &model.metric))
        .expect("specs and metric always serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_model(path: &Path, model: &CalibratedModel) -> CliResult<()> {
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        content_hash: model_content_hash(model),
        model: model.clone(),
    };
    write_json_pretty(path, &file)
}

pub fn read_model(path: &Path) -> CliResult<CalibratedModel> {
    let value = read_json(path)?;
    let file: ModelFile = serde_json::from_value(value).map_err(|e| CliError::io(path, e))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::domain(format!(
            "{}: unsupported schema_version {}",
            path.display(),
            file.schema_version
        )));
    }
    let expect = model_content_hash(&file.model);
    if file.content_hash != expect {
        return Err(CliError::domain(format!(
            "{}: content hash does not match the stored analysis recipe",
            path.display()
        )));
    }
    Ok(file.model)
}

/// Table of per-column results: variable, radius, raw coefficient, column
/// standard deviation and standardized coefficient.
pub fn write_coefficients(path: &Path, model: &CalibratedModel) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["variable", "radius", "coeff", "std", "stdcoeff"])
        .map_err(|e| CliError::io(path, e))?;
    for c in &model.columns {
        w.write_record([
            c.column.analysis.as_str(),
            &radius_label(c.column.radius),
            &format!("{}", c.coeff),
            &format!("{}", c.std),
            &format!("{}", c.stdcoeff),
        ])
        .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct Versioned<T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

pub fn write_report(path: &Path, body: &impl Serialize) -> CliResult<()> {
    write_json_pretty(path, &Versioned { schema_version: SCHEMA_VERSION, body })
}

pub fn write_sweep(path: &Path, table: &SweepTable) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["a", "sigma", "r2"]).map_err(|e| CliError::io(path, e))?;
    for row in &table.rows {
        let r2 = row.r2.map(|v| format!("{v}")).unwrap_or_default();
        w.write_record([&format!("{}", row.a), &format!("{}", row.sigma), &r2])
            .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
