//! Flat-heat-pipe module assembly: geometry → thermal network → discharge run.
//!
//! Layout, for `n` cells along one pipe with the condenser at the far end:
//!
//! ```text
//! cell_i ──(core radial + shell connection)── evap_i ──(wick, phase change,
//!    vapor flow, condenser phase change + wick share)── condenser ── fins ── ambient
//! evap_i ──(wick + phase change on both sides + vapor flow)── evap_{i+1}
//! ```

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fluid::{PropertyTable, WorkingFluidState};
use crate::metrics::{heat_generation, pump_power, BatteryCellSpec, CoolantLoopSpec};
use crate::network::ThermalNetwork;
use crate::resistance::{
    connection_resistance, heat_sink_resistance, phase_change_resistance, radial_resistance, slab_resistance,
    vapor_flow_resistance,
};
use crate::{ensure, read_json, BtmsError, Result};

/// Lengths in m, angle in rad, conductivities W/(m·K), densities kg/m³,
/// specific heats J/(kg·K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhpGeometry {
    pub contact_angle: f64,
    pub shell_thickness: f64,
    pub wick_thickness: f64,
    pub vapor_thickness: f64,
    /// per cell
    pub evaporator_length: f64,
    pub condenser_length: f64,
    pub width: f64,
    pub total_length: f64,
    pub fin_thickness: f64,
    pub fin_width: f64,
    pub fin_spacing: f64,
    pub wick_conductivity: f64,
    pub shell_conductivity: f64,
    pub shell_density: f64,
    pub shell_specific_heat: f64,
    pub wick_density: f64,
    pub wick_specific_heat: f64,
}

impl FhpGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure(self.contact_angle > 0.0 && self.contact_angle <= PI / 2.0, || {
            format!("contact angle {} rad outside (0, π/2]", self.contact_angle)
        })?;
        for (name, v) in [
            ("shell_thickness", self.shell_thickness),
            ("wick_thickness", self.wick_thickness),
            ("vapor_thickness", self.vapor_thickness),
            ("evaporator_length", self.evaporator_length),
            ("condenser_length", self.condenser_length),
            ("width", self.width),
            ("total_length", self.total_length),
            ("fin_thickness", self.fin_thickness),
            ("fin_width", self.fin_width),
            ("fin_spacing", self.fin_spacing),
            ("wick_conductivity", self.wick_conductivity),
            ("shell_conductivity", self.shell_conductivity),
            ("shell_density", self.shell_density),
            ("shell_specific_heat", self.shell_specific_heat),
            ("wick_density", self.wick_density),
            ("wick_specific_heat", self.wick_specific_heat),
        ] {
            ensure(v > 0.0 && v.is_finite(), || format!("geometry {name} must be positive, got {v}"))?;
        }
        Ok(())
    }

    pub fn fin_count(&self) -> usize {
        (self.condenser_length / (self.fin_thickness + self.fin_spacing) + 1e-9).floor() as usize
    }

    /// Both faces of every fin.
    pub fn fin_area(&self) -> f64 {
        self.fin_count() as f64 * 2.0 * self.fin_width * self.width
    }

    pub fn condenser_area(&self) -> f64 {
        self.condenser_length * self.width
    }

    pub fn vapor_flow_area(&self) -> f64 {
        self.vapor_thickness * self.width
    }

    /// Vapor-side surface of the wick wrapped around a cell of radius `r_b`.
    pub fn evaporation_area(&self, r_b: f64, h_b: f64) -> f64 {
        2.0 * self.contact_angle * (r_b + self.shell_thickness + self.wick_thickness) * h_b
    }

    /// Shell and wick heat capacity of one evaporator segment: the flat
    /// part plus the curved envelope.
    pub fn evaporator_capacity(&self, r_b: f64, h_b: f64) -> f64 {
        let flat_shell = 2.0 * self.shell_thickness * self.evaporator_length * self.width;
        let flat_wick = self.wick_thickness * self.evaporator_length * self.width;
        let r_s = r_b + self.shell_thickness;
        let r_w = r_s + self.wick_thickness;
        let sector = |r0: f64, r1: f64| self.contact_angle * (r1 * r1 - r0 * r0) * h_b;
        let shell = flat_shell + sector(r_b, r_s);
        let wick = flat_wick + sector(r_s, r_w);
        shell * self.shell_density * self.shell_specific_heat + wick * self.wick_density * self.wick_specific_heat
    }

    pub fn condenser_capacity(&self) -> f64 {
        let shell = 2.0 * self.shell_thickness * self.condenser_area();
        let wick = self.wick_thickness * self.condenser_area();
        let fins = self.fin_count() as f64 * self.fin_thickness * self.fin_width * self.width;
        (shell + fins) * self.shell_density * self.shell_specific_heat
            + wick * self.wick_density * self.wick_specific_heat
    }
}

/// Battery node properties. These may differ from the cell datasheet (the
/// network uses its own heat capacity and density).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryNodeSpec {
    pub specific_heat: f64,
    pub density: f64,
    /// Radius of the isotherm that stands for the lumped cell temperature.
    pub core_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidSpec {
    /// Bundled table name ("acetone") or a path relative to the spec file.
    pub table: String,
    /// K; properties are taken at this temperature's table bin.
    pub reference_temperature: f64,
    pub accommodation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    /// K
    pub ambient: f64,
    /// K
    pub initial: f64,
    /// W/(m²·K)
    pub h_fin: f64,
}

/// Per-cell heat by C-rate. Exact table hits are used as given; other rates
/// fall back to I²R(soc).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeatSpec {
    pub table: Vec<(f64, f64)>,
}

impl HeatSpec {
    pub fn tabulated(&self, c_rate: f64) -> Option<f64> {
        self.table.iter().find(|(c, _)| (c - c_rate).abs() < 1e-9).map(|(_, q)| *q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblySpec {
    pub name: String,
    pub n_cells: usize,
    pub cell: BatteryCellSpec,
    pub node: BatteryNodeSpec,
    pub geometry: FhpGeometry,
    pub fluid: FluidSpec,
    pub coolant: CoolantLoopSpec,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub heat: HeatSpec,
    #[serde(skip)]
    pub property_table: Option<PropertyTable>,
}

const FHP_BTMS: &str = include_str!("../assets/fhp_btms.json");

/// Indexes of the assembled network's nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub cells: Vec<usize>,
    pub evaporators: Vec<usize>,
    pub condenser: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub c_rate: f64,
    /// rad; overrides the geometry's contact angle
    pub theta: Option<f64>,
    /// s; defaults to a full discharge, 3600 / c_rate
    pub duration: Option<f64>,
    pub dt: f64,
    /// s between recorded samples
    pub sample_interval: f64,
}

impl SimulationOptions {
    pub fn new(c_rate: f64) -> Self {
        Self { c_rate, theta: None, duration: None, dt: 0.25, sample_interval: 10.0 }
    }

    pub fn theta(mut self, theta: f64) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn theta_degrees(self, deg: f64) -> Self {
        self.theta(deg.to_radians())
    }

    pub fn duration(mut self, seconds: f64) -> Self {
        self.duration = Some(seconds);
        self
    }

    pub fn dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn sample_interval(mut self, s: f64) -> Self {
        self.sample_interval = s;
        self
    }

    pub fn resolved_duration(&self) -> Result<f64> {
        match self.duration {
            Some(d) => Ok(d),
            None if self.c_rate > 0.0 => Ok(3600.0 / self.c_rate),
            None => Err(BtmsError::InvalidSpec("duration is required when the C-rate is zero".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DischargeResult {
    pub c_rate: f64,
    pub theta: f64,
    pub dt: f64,
    pub stability_bound: f64,
    pub times: Vec<f64>,
    /// `[sample][cell]`, K
    pub cell_temperatures: Vec<Vec<f64>>,
    pub condenser_temperature: Vec<f64>,
    /// total heat generated by all cells at each sample, W
    pub heat: Vec<f64>,
    /// highest cell temperature seen, K
    pub max_temp: f64,
    /// highest cell temperature at the end, K
    pub final_max_temp: f64,
    /// largest spread between cells at any sample, K
    pub max_temp_diff: f64,
}

impl DischargeResult {
    /// `time_s, cell_1 … cell_n, condenser, heat_w`; temperatures in °C.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.cell_temperatures.first().map_or(0, Vec::len);
        let mut header = vec!["time_s".to_string()];
        header.extend((1..=n).map(|i| format!("cell_{i}_c")));
        header.extend(["condenser_c".to_string(), "heat_w".to_string()]);
        w.write_record(&header)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t}")];
            row.extend(self.cell_temperatures[k].iter().map(|x| format!("{:.6}", crate::celsius(*x))));
            row.push(format!("{:.6}", crate::celsius(self.condenser_temperature[k])));
            row.push(format!("{:.6}", self.heat[k]));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| BtmsError::Csv(e.into()))?;
        Ok(())
    }
}

impl AssemblySpec {
    pub fn bundled() -> Self {
        let spec: Self = serde_json::from_str(FHP_BTMS).expect("bundled assembly parses");
        spec.validate().expect("bundled assembly is valid");
        spec
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: Self = read_json(path)?;
        if spec.fluid.table != "acetone" {
            let p = path.parent().unwrap_or(Path::new(".")).join(&spec.fluid.table);
            spec.property_table = Some(PropertyTable::load(&p)?);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.n_cells >= 1, || "at least one cell is required".into())?;
        self.cell.validate()?;
        self.geometry.validate()?;
        let n = &self.node;
        ensure(n.specific_heat > 0.0 && n.density > 0.0, || "node heat capacity and density must be positive".into())?;
        ensure(n.core_radius > 0.0 && n.core_radius < self.cell.radius, || {
            format!("core radius {} must lie inside the cell radius {}", n.core_radius, self.cell.radius)
        })?;
        ensure(self.boundary.h_fin > 0.0, || "h_fin must be positive".into())?;
        ensure(self.boundary.ambient > 0.0 && self.boundary.initial > 0.0, || "temperatures are in K".into())?;
        let pipe = self.n_cells as f64 * self.geometry.evaporator_length + self.geometry.condenser_length;
        if pipe > self.geometry.total_length + 1e-9 {
            return Err(BtmsError::Assembly(format!(
                "{} evaporators and the condenser need {pipe} m but the pipe is {} m",
                self.n_cells, self.geometry.total_length
            )));
        }
        if self.heat.table.iter().any(|(c, q)| *c < 0.0 || *q < 0.0) {
            return Err(BtmsError::InvalidSpec("heat table entries must be non-negative".into()));
        }
        self.fluid_state().map(|_| ())
    }

    pub fn fluid_state(&self) -> Result<WorkingFluidState> {
        let table = match &self.property_table {
            Some(t) => t.clone(),
            None if self.fluid.table == "acetone" => PropertyTable::acetone(),
            None => return Err(BtmsError::InvalidSpec(format!("unknown fluid table {}", self.fluid.table))),
        };
        table.state_at(self.fluid.reference_temperature, self.fluid.accommodation)
    }

    pub fn with_contact_angle(&self, theta: f64) -> Self {
        let mut s = self.clone();
        s.geometry.contact_angle = theta;
        s
    }

    pub fn pump_power(&self) -> f64 {
        pump_power(&self.coolant)
    }

    /// Heat per cell at `c_rate` after `t` seconds of discharge.
    pub fn cell_heat(&self, c_rate: f64, t: f64) -> f64 {
        self.heat.tabulated(c_rate).unwrap_or_else(|| {
            let soc = 1.0 - c_rate * t / 3600.0;
            heat_generation(&self.cell, c_rate, soc)
        })
    }

    pub fn cell_capacity(&self) -> f64 {
        self.node.specific_heat * self.node.density * self.cell.volume()
    }

    /// Path resistances, K/W, for inspection and testing.
    pub fn resistances(&self) -> Result<PathResistances> {
        let g = &self.geometry;
        let f = self.fluid_state()?;
        let (r_b, h) = (self.cell.radius, self.cell.height);
        let theta = g.contact_angle;
        let r_s = r_b + g.shell_thickness;
        let r_w = r_s + g.wick_thickness;
        let n = self.n_cells as f64;
        Ok(PathResistances {
            core: radial_resistance(self.node.core_radius, r_b, self.cell.k_radial, theta, h),
            connection: connection_resistance(theta, g.shell_thickness, g.shell_conductivity, r_b, h),
            evaporator_wick: radial_resistance(r_s, r_w, g.wick_conductivity, theta, h),
            evaporation: phase_change_resistance(&f, g.evaporation_area(r_b, h)),
            condensation_share: phase_change_resistance(&f, g.condenser_area() / n),
            condenser_wick_share: slab_resistance(g.wick_thickness, g.wick_conductivity, g.condenser_area() / n),
            vapor_per_metre: vapor_flow_resistance(&f, g.vapor_thickness, 1.0, g.vapor_flow_area()),
            heat_sink: heat_sink_resistance(self.boundary.h_fin, g.fin_area()),
        })
    }

    pub fn build_network(&self) -> Result<(ThermalNetwork, Layout)> {
        self.validate()?;
        let g = &self.geometry;
        let r = self.resistances()?;
        let t0 = self.boundary.initial;
        let mut net = ThermalNetwork::new();
        let cells = (0..self.n_cells)
            .map(|i| net.add_node(format!("cell_{}", i + 1), self.cell_capacity(), t0))
            .collect::<Result<Vec<_>>>()?;
        let evap_c = g.evaporator_capacity(self.cell.radius, self.cell.height);
        let evaporators = (0..self.n_cells)
            .map(|i| net.add_node(format!("evaporator_{}", i + 1), evap_c, t0))
            .collect::<Result<Vec<_>>>()?;
        let condenser = net.add_node("condenser", g.condenser_capacity(), t0)?;

        let evap_side = r.evaporator_wick + r.evaporation;
        for i in 0..self.n_cells {
            net.connect(cells[i], evaporators[i], r.core + r.connection)?;
            // distance from segment centre to the condenser centre
            let to_condenser =
                (self.n_cells - i) as f64 * g.evaporator_length - 0.5 * g.evaporator_length + 0.5 * g.condenser_length;
            net.connect(
                evaporators[i],
                condenser,
                evap_side + r.vapor_per_metre * to_condenser + r.condensation_share + r.condenser_wick_share,
            )?;
            if i + 1 < self.n_cells {
                net.connect(
                    evaporators[i],
                    evaporators[i + 1],
                    2.0 * evap_side + r.vapor_per_metre * g.evaporator_length,
                )?;
            }
        }
        net.connect_boundary(condenser, self.boundary.ambient, r.heat_sink)?;
        Ok((net, Layout { cells, evaporators, condenser }))
    }

    pub fn simulate(&self, opts: &SimulationOptions) -> Result<DischargeResult> {
        let spec = match opts.theta {
            Some(t) => self.with_contact_angle(t),
            None => self.clone(),
        };
        ensure(opts.c_rate >= 0.0 && opts.c_rate.is_finite(), || format!("C-rate {} is invalid", opts.c_rate))?;
        ensure(opts.sample_interval > 0.0, || "sample interval must be positive".into())?;
        let duration = opts.resolved_duration()?;
        ensure(duration > 0.0 && duration.is_finite(), || format!("duration {duration} must be positive"))?;

        let (mut net, layout) = spec.build_network()?;
        let bound = net.stability_bound();
        if !(opts.dt > 0.0 && opts.dt < bound) {
            return Err(BtmsError::StabilityViolation { dt: opts.dt, bound });
        }

        let steps = (duration / opts.dt - 1e-9).ceil() as usize;
        let sample_every = ((opts.sample_interval / opts.dt).round() as usize).max(1);
        let mut out = DischargeResult {
            c_rate: opts.c_rate,
            theta: spec.geometry.contact_angle,
            dt: opts.dt,
            stability_bound: bound,
            times: Vec::new(),
            cell_temperatures: Vec::new(),
            condenser_temperature: Vec::new(),
            heat: Vec::new(),
            max_temp: f64::MIN,
            final_max_temp: f64::MIN,
            max_temp_diff: 0.0,
        };
        let mut t = 0.0;
        let mut q = spec.cell_heat(opts.c_rate, 0.0);
        let record = |net: &ThermalNetwork, t: f64, q: f64, out: &mut DischargeResult| {
            let temps: Vec<f64> = layout.cells.iter().map(|&i| net.nodes[i].temperature).collect();
            let hi = temps.iter().copied().fold(f64::MIN, f64::max);
            let lo = temps.iter().copied().fold(f64::MAX, f64::min);
            out.max_temp = out.max_temp.max(hi);
            out.final_max_temp = hi;
            out.max_temp_diff = out.max_temp_diff.max(hi - lo);
            out.times.push(t);
            out.cell_temperatures.push(temps);
            out.condenser_temperature.push(net.nodes[layout.condenser].temperature);
            out.heat.push(q * layout.cells.len() as f64);
        };
        record(&net, t, q, &mut out);
        for k in 1..=steps {
            let h = if k == steps { duration - t } else { opts.dt };
            q = spec.cell_heat(opts.c_rate, t);
            for &c in &layout.cells {
                net.set_source(c, q);
            }
            net.step_unchecked(h);
            t = if k == steps { duration } else { t + h };
            if k % sample_every == 0 || k == steps {
                record(&net, t, q, &mut out);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathResistances {
    pub core: f64,
    pub connection: f64,
    pub evaporator_wick: f64,
    pub evaporation: f64,
    pub condensation_share: f64,
    pub condenser_wick_share: f64,
    pub vapor_per_metre: f64,
    pub heat_sink: f64,
}

/// Load the bundled assembly or one from disk.
pub fn load_or_bundled(path: Option<&Path>) -> Result<AssemblySpec> {
    match path {
        Some(p) => AssemblySpec::load(p),
        None => Ok(AssemblySpec::bundled()),
    }
}

/// Convenience for reports: the spec plus options as a one-line label.
pub fn describe(spec: &AssemblySpec, opts: &SimulationOptions) -> String {
    format!(
        "{} ({} cells), {}C, θ = {:.1}°",
        spec.name,
        spec.n_cells,
        opts.c_rate,
        opts.theta.unwrap_or(spec.geometry.contact_angle).to_degrees()
    )
}
