//! Beja-Goldman disequilibrium market model toolkit.
//!
//! The Beja-Goldman model couples a log-price equation driven by aggregate
//! excess demand to the relaxation dynamics of a chartist price estimate.
//! This crate provides:
//!
//! - the model vector field and its affine matrix form ([`model`]),
//! - closed-form eigen-analysis, the exact trajectory of the linear system
//!   and the stability/oscillation classification ([`spectral`]),
//! - rank-one Tikhonov-Fenichel reductions in the liquid-market (epsilon -> 0)
//!   and liquid-chartist (gamma -> 0) limits ([`reduction`]),
//! - a stiff-capable adaptive implicit ODE integrator ([`integrate`]),
//! - a declarative experiment runner for trajectory, comparison, sweep and
//!   region-grid scenarios ([`experiments`]),
//! - scenario file parsing, CSV/summary emission and static SVG plots
//!   ([`scenario`], [`output`], [`plot`]).

pub mod experiments;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod output;
pub mod plot;
pub mod reduction;
pub mod scenario;
pub mod spectral;

pub use experiments::{run_scenario, ExperimentResult, ScenarioConfig, ScenarioKind};
pub use model::{AffineSystem, ExcessDemand, ModelError, ModelParams, State, ValidationMode};
pub use output::{emit_result, OutputFormat, RunManifest};
pub use reduction::LimitKind;
pub use scenario::{config_hash, parse_scenario, serialize_scenario, ScenarioError};
