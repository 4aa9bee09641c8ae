//! Project configuration: metric parameters, the analysis battery and
//! calibration settings, in strict JSON (unknown keys are errors).

use std::path::Path;

use mhspna_core::betweenness::{AnalysisSpec, BetweennessType, ColumnId, OriginSpec};
use mhspna_core::calibrate::{CvOptions, FitOptions};
use mhspna_core::metric::DEFAULT_CLAMP;
use mhspna_core::network::DEFAULT_SNAP_TOLERANCE;
use mhspna_core::MetricParams;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::geojson::read_json;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub a: f64,
    pub sigma: f64,
    pub clamp: (f64, f64),
    pub oversample: u32,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { a: 0.5, sigma: 1.0, clamp: DEFAULT_CLAMP, oversample: 50 }
    }
}

impl MetricConfig {
    pub fn params(&self) -> MetricParams {
        MetricParams { a: self.a, sigma: self.sigma, clamp: self.clamp, oversample: self.oversample }
    }
}

/// Inner/outer radius band; plain numbers in `radii` mean rmin = 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusBand {
    pub rmin: f64,
    pub rmax: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RadiusEntry {
    Single(f64),
    Band(RadiusBand),
}

impl RadiusEntry {
    fn band(&self) -> (f64, f64) {
        match *self {
            RadiusEntry::Single(r) => (0.0, r),
            RadiusEntry::Band(b) => (b.rmin, b.rmax),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub key: String,
    #[serde(rename = "type")]
    pub btype: BetweennessType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_link: Option<String>,
    pub destination_weight_field: String,
    pub radii: Vec<RadiusEntry>,
    #[serde(default)]
    pub continuous: bool,
}

impl AnalysisConfig {
    pub fn to_spec(&self) -> CliResult<AnalysisSpec> {
        let origin = match (&self.origin_field, &self.origin_link) {
            (Some(f), None) => OriginSpec::WeightField(f.clone()),
            (None, Some(l)) => OriginSpec::Link(l.clone()),
            _ => {
                return Err(CliError::usage(format!(
                    "analysis {:?}: exactly one of origin_field or origin_link is required",
                    self.key
                )))
            }
        };
        Ok(AnalysisSpec {
            key: self.key.clone(),
            btype: self.btype,
            origin,
            destination_weight_field: self.destination_weight_field.clone(),
            radii: self.radii.iter().map(RadiusEntry::band).collect(),
            continuous: self.continuous,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub metric: MetricConfig,
    pub analyses: Vec<AnalysisConfig>,
    /// Junction snap tolerance when building networks, metres.
    pub network_tolerance: f64,
    /// Snap tolerance when attaching count points to links, metres.
    pub count_tolerance: f64,
    /// Observation weighting exponent; weights are flow^(lambda_w - 1).
    pub lambda_w: f64,
    pub folds: usize,
    pub repetitions: usize,
    /// Manual ridge penalty; set to skip grid selection.
    pub lambda_r: Option<f64>,
    /// Explicit penalty grid; None builds the default log-spaced grid.
    pub penalty_grid: Option<Vec<f64>>,
    pub intercept: bool,
    pub nonnegative: bool,
    /// Column labels ("key@radius") forced out of the model.
    pub exclude: Vec<String>,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            schema_version: 1,
            seed: 1,
            metric: MetricConfig::default(),
            analyses: Vec::new(),
            network_tolerance: DEFAULT_SNAP_TOLERANCE,
            count_tolerance: 20.0,
            lambda_w: 0.7,
            folds: 7,
            repetitions: 50,
            lambda_r: None,
            penalty_grid: None,
            intercept: true,
            nonnegative: false,
            exclude: Vec::new(),
        }
    }
}

impl ProjectConfig {
    pub fn load(path: &Path) -> CliResult<ProjectConfig> {
        let value = read_json(path)?;
        serde_json::from_value(value).map_err(|e| CliError::io(path, e))
    }

    pub fn specs(&self) -> CliResult<Vec<AnalysisSpec>> {
        self.analyses.iter().map(AnalysisConfig::to_spec).collect()
    }

    pub fn fit_options(&self) -> CliResult<FitOptions> {
        let mut exclude = Vec::with_capacity(self.exclude.len());
        for label in &self.exclude {
            let id = ColumnId::parse(label).ok_or_else(|| {
                CliError::usage(format!("exclude entry {label:?} is not a \"key@radius\" label"))
            })?;
            exclude.push(id);
        }
        Ok(FitOptions { intercept: self.intercept, nonnegative: self.nonnegative, exclude })
    }

    pub fn cv_options(&self, seed: u64) -> CliResult<CvOptions> {
        Ok(CvOptions {
            folds: self.folds,
            repetitions: self.repetitions,
            seed,
            grid: self.penalty_grid.clone(),
            manual_lambda: self.lambda_r,
            fit: self.fit_options()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ProjectConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ProjectConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn radii_take_numbers_or_bands() {
        let cfg: ProjectConfig = serde_json::from_str(
            r#"{"analyses": [{
                "key": "x", "type": "two_phase", "origin_field": "w",
                "destination_weight_field": "w",
                "radii": [400, {"rmin": 120, "rmax": 800}]
            }]}"#,
        )
        .unwrap();
        let specs = cfg.specs().unwrap();
        assert_eq!(specs[0].radii, vec![(0.0, 400.0), (120.0, 800.0)]);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ProjectConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<ProjectConfig>(r#"{"sneed": 1}"#).is_err());
        assert!(serde_json::from_str::<ProjectConfig>(r#"{"metric": {"b": 1}}"#).is_err());
        let bad_band = r#"{"analyses": [{
            "key": "x", "type": "elastic", "origin_field": "w",
            "destination_weight_field": "w",
            "radii": [{"rmin": 0, "rmax": 1, "extra": 2}]
        }]}"#;
        assert!(serde_json::from_str::<ProjectConfig>(bad_band).is_err());
    }

    #[test]
    fn origin_must_be_exactly_one() {
        let both: AnalysisConfig = serde_json::from_str(
            r#"{"key": "x", "type": "elastic", "origin_field": "w", "origin_link": "l",
                "destination_weight_field": "w", "radii": [100]}"#,
        )
        .unwrap();
        assert!(both.to_spec().is_err());
        let neither: AnalysisConfig = serde_json::from_str(
            r#"{"key": "x", "type": "elastic", "destination_weight_field": "w", "radii": [100]}"#,
        )
        .unwrap();
        assert!(neither.to_spec().is_err());
    }

    #[test]
    fn exclude_labels_parse() {
        let cfg = ProjectConfig { exclude: vec!["p2s@600".to_string()], ..Default::default() };
        let fit = cfg.fit_options().unwrap();
        assert_eq!(fit.exclude.len(), 1);
        assert_eq!(fit.exclude[0].analysis, "p2s");
        assert_eq!(fit.exclude[0].radius, 600.0);
        let bad = ProjectConfig { exclude: vec!["nope".to_string()], ..Default::default() };
        assert!(bad.fit_options().is_err());
    }
}
