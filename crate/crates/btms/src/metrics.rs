//! Module-level evaluation metrics and cell heat generation.

use serde::{Deserialize, Serialize};

use crate::{ensure, BtmsError, Result};

/// Internal resistance as a function of state of charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResistanceCurve {
    Constant(f64),
    /// `(soc, ohm)` points, sorted by soc, covering both 0 and 1. Linear in between.
    Table(Vec<(f64, f64)>),
}

impl ResistanceCurve {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant(r) => ensure(*r > 0.0, || format!("resistance {r} must be positive")),
            Self::Table(points) => {
                ensure(points.len() >= 2, || "resistance table needs at least two points".into())?;
                ensure(points.windows(2).all(|w| w[0].0 < w[1].0), || "resistance table soc must increase".into())?;
                ensure(points.iter().all(|p| p.1 > 0.0), || "resistance table values must be positive".into())?;
                let (lo, hi) = (points[0].0, points[points.len() - 1].0);
                ensure(lo <= 0.0 && hi >= 1.0, || format!("resistance table covers [{lo}, {hi}], not [0, 1]"))
            }
        }
    }

    pub fn at(&self, soc: f64) -> f64 {
        match self {
            Self::Constant(r) => *r,
            Self::Table(points) => {
                let soc = soc.clamp(points[0].0, points[points.len() - 1].0);
                let k = points.partition_point(|p| p.0 <= soc).clamp(1, points.len() - 1);
                let ((s0, r0), (s1, r1)) = (points[k - 1], points[k]);
                r0 + (r1 - r0) * (soc - s0) / (s1 - s0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryCellSpec {
    /// Ah
    pub capacity: f64,
    /// V
    pub nominal_voltage: f64,
    /// kg
    pub mass: f64,
    /// m
    pub radius: f64,
    /// m
    pub height: f64,
    /// J/(kg·K)
    pub specific_heat: f64,
    /// W/(m·K)
    pub k_radial: f64,
    pub k_axial: f64,
    pub resistance_curve: ResistanceCurve,
}

impl BatteryCellSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("capacity", self.capacity),
            ("nominal_voltage", self.nominal_voltage),
            ("mass", self.mass),
            ("radius", self.radius),
            ("height", self.height),
            ("specific_heat", self.specific_heat),
            ("k_radial", self.k_radial),
            ("k_axial", self.k_axial),
        ] {
            ensure(v > 0.0 && v.is_finite(), || format!("cell {name} must be positive, got {v}"))?;
        }
        self.resistance_curve.validate()
    }

    /// Discharge current in A.
    pub fn current(&self, c_rate: f64) -> f64 {
        self.capacity * c_rate
    }

    pub fn volume(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius * self.height
    }
}

/// Volumes in litres, energy in Wh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuleGeometry {
    pub v_batt: f64,
    pub v_module: f64,
    pub e_batt: f64,
}

impl ModuleGeometry {
    pub fn new(v_batt: f64, v_module: f64, e_batt: f64) -> Result<Self> {
        ensure(v_batt > 0.0 && v_batt <= v_module, || {
            format!("need 0 < v_batt <= v_module, got {v_batt} and {v_module}")
        })?;
        ensure(e_batt > 0.0, || format!("e_batt must be positive, got {e_batt}"))?;
        Ok(Self { v_batt, v_module, e_batt })
    }
}

pub fn grouping_efficiency(g: &ModuleGeometry) -> f64 {
    g.v_batt / g.v_module
}

/// Wh/L.
pub fn volumetric_energy_density(g: &ModuleGeometry) -> f64 {
    g.e_batt / g.v_module
}

/// Ohmic heat in W at the given C-rate and state of charge.
pub fn heat_generation(cell: &BatteryCellSpec, c_rate: f64, soc: f64) -> f64 {
    let i = cell.current(c_rate);
    i * i * cell.resistance_curve.at(soc.clamp(0.0, 1.0))
}

/// Coolant loop in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolantLoopSpec {
    /// kg/m³
    pub density: f64,
    /// m³/s
    pub flow_rate: f64,
    /// m²
    pub channel_area: f64,
    pub efficiency: f64,
}

impl CoolantLoopSpec {
    pub fn new(density: f64, flow_rate: f64, channel_area: f64, efficiency: f64) -> Result<Self> {
        ensure(density > 0.0 && channel_area > 0.0, || "density and channel area must be positive".into())?;
        ensure(flow_rate >= 0.0, || format!("flow rate must be non-negative, got {flow_rate}"))?;
        ensure(efficiency > 0.0 && efficiency <= 1.0, || format!("efficiency {efficiency} outside (0, 1]"))?;
        Ok(Self { density, flow_rate, channel_area, efficiency })
    }

    /// From the units tables usually quote: L/min and cm².
    pub fn from_table_units(density: f64, litres_per_min: f64, area_cm2: f64, efficiency: f64) -> Result<Self> {
        Self::new(density, litres_per_min / 1000.0 / 60.0, area_cm2 * 1e-4, efficiency)
    }
}

/// P = ρ q^{3/2} / (S² η), in W.
pub fn pump_power(l: &CoolantLoopSpec) -> f64 {
    l.density * l.flow_rate.powf(1.5) / (l.channel_area * l.channel_area * l.efficiency)
}

/// Trapezoidal integral of samples on a uniform grid with spacing `dt`.
pub fn trapezoid(samples: &[f64], dt: f64) -> f64 {
    match samples {
        [] | [_] => 0.0,
        [first, inner @ .., last] => dt * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Heat removed per unit of thermal-management energy:
/// (∫Q dt − c·m·ΔT) / ∫P dt, with m the total cell mass.
pub fn tms_efficiency(
    q_series: &[f64],
    p_series: &[f64],
    dt: f64,
    cell: &BatteryCellSpec,
    n_cells: usize,
    t0: f64,
    t_end: f64,
) -> Result<f64> {
    if q_series.len() != p_series.len() {
        return Err(BtmsError::SeriesMismatch(format!(
            "{} heat samples vs {} power samples",
            q_series.len(),
            p_series.len()
        )));
    }
    let pump = trapezoid(p_series, dt);
    if pump <= 0.0 {
        return Err(BtmsError::ZeroPumpEnergy);
    }
    let stored = cell.specific_heat * cell.mass * n_cells as f64 * (t_end - t0);
    Ok((trapezoid(q_series, dt) - stored) / pump)
}
