//! Error types for network construction, battery runs, and calibration.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum NetworkError {
    /// Fewer than two points, repeated consecutive points, or non-finite
    /// coordinates.
    MalformedGeometry { id: String, reason: &'static str },
    DuplicateId { id: String },
    /// Coordinates look like longitude/latitude degrees. A planar metric CRS
    /// is required; reproject before loading.
    GeographicCoordinates,
    UnknownWeightField { field: String },
    UnknownLink { id: String },
    /// Count points that could not be attached to the network.
    Snap {
        unresolved: Vec<String>,
        ambiguous: Vec<String>,
    },
    InvalidTolerance { value: f64 },
    EmptyNetwork,
}

impl fmt::Display for NetworkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkError::MalformedGeometry { id, reason } => {
                write!(f, "link {id:?}: malformed geometry ({reason})")
            }
            NetworkError::DuplicateId { id } => write!(f, "duplicate link id {id:?}"),
            NetworkError::GeographicCoordinates => write!(
                f,
                "coordinates look geographic (degree-sized bbox, sub-metre links); \
                 reproject to a planar metric CRS before loading"
            ),
            NetworkError::UnknownWeightField { field } => {
                write!(f, "unknown weight field {field:?}")
            }
            NetworkError::UnknownLink { id } => write!(f, "unknown link id {id:?}"),
            NetworkError::Snap { unresolved, ambiguous } => {
                write!(f, "count point snap failed:")?;
                if !unresolved.is_empty() {
                    write!(f, " no link within tolerance for {unresolved:?}")?;
                }
                if !ambiguous.is_empty() {
                    write!(f, " equidistant candidate links for {ambiguous:?}")?;
                }
                Ok(())
            }
            NetworkError::InvalidTolerance { value } => {
                write!(f, "tolerance must be finite and positive, got {value}")
            }
            NetworkError::EmptyNetwork => write!(f, "network has no links"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MetricError {
    /// a outside [0,1], sigma negative, clamp bounds not 0 < lo <= 1 <= hi,
    /// or oversample of zero.
    InvalidParams { reason: String },
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::InvalidParams { reason } => write!(f, "invalid metric params: {reason}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BatteryError {
    Network(NetworkError),
    Metric(MetricError),
    NoAnalyses,
    DuplicateColumn { label: String },
    InvalidRadii { key: String, reason: String },
    InvalidKey { key: String, reason: &'static str },
}

impl fmt::Display for BatteryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatteryError::Network(e) => write!(f, "{e}"),
            BatteryError::Metric(e) => write!(f, "{e}"),
            BatteryError::NoAnalyses => write!(f, "no analyses configured"),
            BatteryError::DuplicateColumn { label } => {
                write!(f, "duplicate analysis column {label:?}")
            }
            BatteryError::InvalidRadii { key, reason } => {
                write!(f, "analysis {key:?}: {reason}")
            }
            BatteryError::InvalidKey { key, reason } => write!(f, "analysis key {key:?}: {reason}"),
        }
    }
}

impl From<NetworkError> for BatteryError {
    fn from(e: NetworkError) -> Self {
        BatteryError::Network(e)
    }
}

impl From<MetricError> for BatteryError {
    fn from(e: MetricError) -> Self {
        BatteryError::Metric(e)
    }
}

impl From<BatteryError> for CalibrateError {
    fn from(e: BatteryError) -> Self {
        CalibrateError::Battery(e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CalibrateError {
    Battery(BatteryError),
    EmptyDesign,
    MissingObservation { point: String, year: String },
    MissingColumnValue { link: String },
    NonPositiveCount { point: String, value: f64 },
    TooFewPoints { have: usize, need: usize },
    SingularSystem,
    InvalidPenalty { value: f64 },
    InvalidWeightExponent { value: f64 },
    ColumnMismatch { detail: String },
    UnknownColumn { label: String },
    EmptyGrid,
}

impl fmt::Display for CalibrateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalibrateError::Battery(e) => write!(f, "{e}"),
            CalibrateError::EmptyDesign => write!(f, "design matrix has no rows or no columns"),
            CalibrateError::MissingObservation { point, year } => {
                write!(f, "count point {point:?} has no observation for year {year:?}")
            }
            CalibrateError::MissingColumnValue { link } => {
                write!(f, "flow table has no value for link {link:?}")
            }
            CalibrateError::NonPositiveCount { point, value } => {
                write!(f, "count point {point:?}: flow must be positive, got {value}")
            }
            CalibrateError::TooFewPoints { have, need } => {
                write!(f, "need at least {need} points, have {have}")
            }
            CalibrateError::SingularSystem => {
                write!(f, "normal equations are singular; raise the ridge penalty")
            }
            CalibrateError::InvalidPenalty { value } => {
                write!(f, "ridge penalty must be finite and nonnegative, got {value}")
            }
            CalibrateError::InvalidWeightExponent { value } => {
                write!(f, "weighting exponent must lie in [0,1], got {value}")
            }
            CalibrateError::ColumnMismatch { detail } => write!(f, "column mismatch: {detail}"),
            CalibrateError::UnknownColumn { label } => {
                write!(f, "model column {label:?} not present in flow table")
            }
            CalibrateError::EmptyGrid => write!(f, "penalty grid is empty"),
        }
    }
}

#[cfg(feature = "std")]
mod std_impls {
    use super::*;
    impl std::error::Error for NetworkError {}
    impl std::error::Error for MetricError {}
    impl std::error::Error for BatteryError {}
    impl std::error::Error for CalibrateError {}
}
