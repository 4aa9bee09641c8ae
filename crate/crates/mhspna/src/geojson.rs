//! Strict GeoJSON I/O for link networks.
//!
//! Networks are FeatureCollections of LineString features. Every feature
//! needs a string `id` property; every other property must be a number and
//! becomes a weight field (null means absent). Writes are deterministic:
//! features in network link order, object keys sorted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use mhspna_core::betweenness::FlowField;
use mhspna_core::geometry::Point;
use mhspna_core::network::RawLink;
use mhspna_core::SpatialNetwork;
use serde_json::{Map, Number, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub fn read_json(path: &Path) -> CliResult<Value> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::io(path, e))
}

pub fn write_json_pretty(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn shape(path: &Path, detail: String) -> CliError {
    CliError::io(path, detail)
}

fn as_object<'a>(path: &Path, v: &'a Value, what: &str) -> CliResult<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| shape(path, format!("{what} must be a JSON object")))
}

fn parse_position(path: &Path, id: &str, v: &Value) -> CliResult<Point> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| shape(path, format!("link {id:?}: coordinates must be [x, y] pairs")))?;
    let x = arr[0]
        .as_f64()
        .ok_or_else(|| shape(path, format!("link {id:?}: non-numeric coordinate")))?;
    let y = arr[1]
        .as_f64()
        .ok_or_else(|| shape(path, format!("link {id:?}: non-numeric coordinate")))?;
    Ok(Point::new(x, y))
}

fn parse_feature(path: &Path, index: usize, v: &Value) -> CliResult<RawLink> {
    let feature = as_object(path, v, &format!("feature {index}"))?;
    if feature.get("type").and_then(Value::as_str) != Some("Feature") {
        return Err(shape(path, format!("feature {index}: type must be \"Feature\"")));
    }
    let props = match feature.get("properties") {
        Some(Value::Object(m)) => m.clone(),
        Some(Value::Null) | None => Map::new(),
        Some(_) => {
            return Err(shape(path, format!("feature {index}: properties must be an object")))
        }
    };
    let id = match props.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(shape(path, format!("feature {index}: id property must be a string")))
        }
        None => return Err(shape(path, format!("feature {index}: missing id property"))),
    };
    let geometry = feature
        .get("geometry")
        .and_then(Value::as_object)
        .ok_or_else(|| shape(path, format!("link {id:?}: missing geometry")))?;
    if geometry.get("type").and_then(Value::as_str) != Some("LineString") {
        return Err(shape(path, format!("link {id:?}: geometry must be a LineString")));
    }
    let coords = geometry
        .get("coordinates")
        .and_then(Value::as_array)
        .ok_or_else(|| shape(path, format!("link {id:?}: missing coordinates")))?;
    let mut points = Vec::with_capacity(coords.len());
    for c in coords {
        points.push(parse_position(path, &id, c)?);
    }
    let mut weights = std::collections::BTreeMap::new();
    for (k, val) in &props {
        if k == "id" {
            continue;
        }
        match val {
            Value::Number(n) => {
                let v = n.as_f64().ok_or_else(|| {
                    shape(path, format!("link {id:?}: property {k:?} is not a finite number"))
                })?;
                weights.insert(k.clone(), v);
            }
            Value::Null => {}
            _ => {
                return Err(shape(
                    path,
                    format!("link {id:?}: property {k:?} must be a number or null"),
                ))
            }
        }
    }
    Ok(RawLink { id, geometry: points, weights })
}

pub fn read_raw_links(path: &Path) -> CliResult<Vec<RawLink>> {
    let root = read_json(path)?;
    let obj = as_object(path, &root, "the document")?;
    if obj.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(shape(path, "type must be \"FeatureCollection\"".to_string()));
    }
    let features = obj
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| shape(path, "missing features array".to_string()))?;
    features.iter().enumerate().map(|(i, f)| parse_feature(path, i, f)).collect()
}

pub fn read_network(path: &Path, snap_tolerance: f64) -> CliResult<SpatialNetwork> {
    let raw = read_raw_links(path)?;
    Ok(SpatialNetwork::build(raw, snap_tolerance)?)
}

fn number(path: &Path, context: &str, v: f64) -> CliResult<Value> {
    Number::from_f64(v)
        .map(Value::Number)
        .ok_or_else(|| CliError::io(path, format!("{context}: value {v} is not representable")))
}

/// One extra property column shared by every feature.
pub struct ExtraColumn<'a> {
    pub name: String,
    pub values: &'a [f64],
}

fn feature_collection(
    path: &Path,
    links: &[RawLink],
    extra: &[ExtraColumn<'_>],
) -> CliResult<Value> {
    for col in extra {
        if col.values.len() != links.len() {
            return Err(CliError::domain(format!(
                "column {:?} has {} values for {} links",
                col.name,
                col.values.len(),
                links.len()
            )));
        }
    }
    let mut features = Vec::with_capacity(links.len());
    for (i, link) in links.iter().enumerate() {
        let mut props = Map::new();
        props.insert("id".to_string(), Value::String(link.id.clone()));
        for (k, &v) in &link.weights {
            props.insert(k.clone(), number(path, k, v)?);
        }
        for col in extra {
            props.insert(col.name.clone(), number(path, &col.name, col.values[i])?);
        }
        let coords: Vec<Value> = link
            .geometry
            .iter()
            .map(|p| {
                Ok(Value::Array(vec![
                    number(path, "coordinate", p.x)?,
                    number(path, "coordinate", p.y)?,
                ]))
            })
            .collect::<CliResult<_>>()?;
        let mut geometry = Map::new();
        geometry.insert("type".to_string(), Value::String("LineString".to_string()));
        geometry.insert("coordinates".to_string(), Value::Array(coords));
        let mut feature = Map::new();
        feature.insert("type".to_string(), Value::String("Feature".to_string()));
        feature.insert("geometry".to_string(), Value::Object(geometry));
        feature.insert("properties".to_string(), Value::Object(props));
        features.push(Value::Object(feature));
    }
    let mut root = Map::new();
    root.insert("type".to_string(), Value::String("FeatureCollection".to_string()));
    root.insert("schema_version".to_string(), Value::Number(SCHEMA_VERSION.into()));
    root.insert("features".to_string(), Value::Array(features));
    Ok(Value::Object(root))
}

pub fn write_network(path: &Path, net: &SpatialNetwork) -> CliResult<()> {
    let doc = feature_collection(path, &net.to_raw(), &[])?;
    write_json_pretty(path, &doc)
}

/// Network plus one property per flow column, named by the column label.
pub fn write_flows(path: &Path, net: &SpatialNetwork, fields: &[FlowField]) -> CliResult<()> {
    let extra: Vec<ExtraColumn<'_>> = fields
        .iter()
        .map(|f| ExtraColumn { name: f.column.label(), values: &f.values })
        .collect();
    let doc = feature_collection(path, &net.to_raw(), &extra)?;
    write_json_pretty(path, &doc)
}

/// Network plus a per-link `prediction` property.
pub fn write_predictions(path: &Path, net: &SpatialNetwork, values: &[f64]) -> CliResult<()> {
    let extra = [ExtraColumn { name: "prediction".to_string(), values }];
    let doc = feature_collection(path, &net.to_raw(), &extra)?;
    write_json_pretty(path, &doc)
}
