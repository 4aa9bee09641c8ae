//! Core algorithms for flow modelling on pedestrian-scale street networks.
//!
//! The pipeline: build a [`network::SpatialNetwork`] from polylines, route
//! between link centres under a hybrid angular/Euclidean metric with
//! deterministic random perturbation ([`metric`], [`routing`]), accumulate
//! radius-constrained betweenness flows ([`betweenness`]), then calibrate the
//! resulting flow columns against observed counts with weighted ridge
//! regression and predict flows after network edits ([`calibrate`]).
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the `libm`
//! feature for float math without `std`, and `parallel` for multi-threaded
//! batteries and cross-validation. Every public entry point is deterministic
//! given its seed, independent of thread count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod betweenness;
pub mod calibrate;
pub mod error;
pub mod geometry;
mod linalg;
pub(crate) mod math;
pub mod metric;
pub mod network;
pub mod rng;
pub mod routing;

pub use betweenness::{run_battery, AnalysisSpec, BetweennessType, ColumnId, FlowField, FlowTable};
pub use calibrate::{CalibratedModel, DesignMatrix, EvalReport};
pub use metric::MetricParams;
pub use network::{CountPoint, Link, SpatialNetwork};
pub use routing::PathTree;
