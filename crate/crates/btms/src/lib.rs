//! Battery thermal management numerics: module-level metrics, thermal
//! resistance models for a flat heat pipe enveloping cylindrical cells, and
//! an explicit-Euler nodal integrator with a contact-angle sweep.
//!
//! All quantities are SI (temperatures in kelvin) unless a field name says
//! otherwise; conversions from table units happen at the edges.

pub mod assembly;
pub mod fluid;
pub mod metrics;
pub mod network;
pub mod resistance;
pub mod sweep;

use std::path::PathBuf;

pub use assembly::{AssemblySpec, DischargeResult, SimulationOptions};
pub use fluid::{PropertyTable, WorkingFluidState};
pub use metrics::{BatteryCellSpec, CoolantLoopSpec, ModuleGeometry, ResistanceCurve};
pub use network::{ThermalNetwork, ThermalNode};
pub use sweep::{sweep_contact_angle, ExecutionMode, SweepRow};

pub const ZERO_CELSIUS: f64 = 273.15;

pub fn celsius(kelvin: f64) -> f64 {
    kelvin - ZERO_CELSIUS
}

pub fn kelvin(celsius: f64) -> f64 {
    celsius + ZERO_CELSIUS
}

/// Directory holding the shipped assembly and property files.
pub fn bundled_assets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets")
}

#[derive(Debug, thiserror::Error)]
pub enum BtmsError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("time step {dt} s violates the explicit stability bound {bound} s")]
    StabilityViolation { dt: f64, bound: f64 },
    #[error("cannot assemble network: {0}")]
    Assembly(String),
    #[error("pump energy is zero; efficiency undefined")]
    ZeroPumpEnergy,
    #[error("series mismatch: {0}")]
    SeriesMismatch(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = BtmsError> = std::result::Result<T, E>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(BtmsError::InvalidSpec(msg()))
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| BtmsError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| BtmsError::Json { path: path.to_path_buf(), source })
}
