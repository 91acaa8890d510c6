//! Working-fluid saturation properties from a shipped table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{ensure, read_json, BtmsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingFluidState {
    /// K
    pub vapor_temperature: f64,
    /// Pa
    pub vapor_pressure: f64,
    /// J/kg
    pub latent_heat: f64,
    /// Pa·s
    pub vapor_viscosity: f64,
    /// kg/m³
    pub vapor_density: f64,
    /// J/(kg·K)
    pub gas_constant: f64,
    pub accommodation: f64,
}

impl WorkingFluidState {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vapor_temperature", self.vapor_temperature),
            ("vapor_pressure", self.vapor_pressure),
            ("latent_heat", self.latent_heat),
            ("vapor_viscosity", self.vapor_viscosity),
            ("vapor_density", self.vapor_density),
            ("gas_constant", self.gas_constant),
        ] {
            ensure(v > 0.0 && v.is_finite(), || format!("fluid {name} must be positive, got {v}"))?;
        }
        ensure(self.accommodation > 0.0 && self.accommodation <= 1.0, || {
            format!("accommodation {} outside (0, 1]", self.accommodation)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationRow {
    pub temperature: f64,
    pub pressure: f64,
    pub latent_heat: f64,
    pub vapor_density: f64,
    pub vapor_viscosity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyTable {
    pub fluid: String,
    pub gas_constant: f64,
    pub bin_width: f64,
    pub states: Vec<SaturationRow>,
}

const ACETONE: &str = include_str!("../assets/acetone.json");

impl PropertyTable {
    pub fn acetone() -> Self {
        serde_json::from_str(ACETONE).expect("bundled acetone table parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: Self = read_json(path)?;
        ensure(!t.states.is_empty(), || format!("{}: empty property table", path.display()))?;
        Ok(t)
    }

    /// Saturation state at `temperature` rounded to the nearest bin.
    pub fn state_at(&self, temperature: f64, accommodation: f64) -> Result<WorkingFluidState> {
        let bin = (temperature / self.bin_width).round() * self.bin_width;
        let row = self.states.iter().find(|r| (r.temperature - bin).abs() < 1e-9).ok_or_else(|| {
            BtmsError::InvalidSpec(format!("{} K is outside the {} property table", temperature, self.fluid))
        })?;
        let s = WorkingFluidState {
            vapor_temperature: row.temperature,
            vapor_pressure: row.pressure,
            latent_heat: row.latent_heat,
            vapor_viscosity: row.vapor_viscosity,
            vapor_density: row.vapor_density,
            gas_constant: self.gas_constant,
            accommodation,
        };
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_bins() {
        let t = PropertyTable::acetone();
        assert_eq!(t.state_at(301.9, 1.0).unwrap().vapor_temperature, 300.0);
        assert_eq!(t.state_at(302.6, 1.0).unwrap().vapor_temperature, 305.0);
        assert!(t.state_at(400.0, 1.0).is_err());
        // ideal-gas consistency of the shipped rows
        for r in &t.states {
            let rho = r.pressure / (t.gas_constant * r.temperature);
            assert!((rho / r.vapor_density - 1.0).abs() < 1e-3, "{r:?}");
        }
    }
}
