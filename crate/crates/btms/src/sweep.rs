//! Contact-angle × C-rate grid of final maximum temperatures.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assembly::{AssemblySpec, SimulationOptions};
use crate::{BtmsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Sequential,
    /// Rows run on the rayon pool; identical to `Sequential` when the
    /// `parallel` feature is off.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// rad
    pub theta: f64,
    pub c_rate: f64,
    /// K
    pub final_max_temp: f64,
    /// K
    pub max_temp_diff: f64,
}

/// Every (θ, C-rate) pair, θ-major. `template` supplies dt, sample
/// interval and an optional fixed duration; its θ and C-rate are replaced.
pub fn sweep_contact_angle(
    base: &AssemblySpec,
    thetas: &[f64],
    c_rates: &[f64],
    template: &SimulationOptions,
    mode: ExecutionMode,
) -> Result<Vec<SweepRow>> {
    if thetas.is_empty() || c_rates.is_empty() {
        return Err(BtmsError::InvalidSpec("sweep needs at least one angle and one C-rate".into()));
    }
    let grid: Vec<(f64, f64)> = thetas.iter().flat_map(|&t| c_rates.iter().map(move |&c| (t, c))).collect();
    let run = |&(theta, c_rate): &(f64, f64)| -> Result<SweepRow> {
        let opts = SimulationOptions { c_rate, theta: Some(theta), ..*template };
        let r = base.simulate(&opts)?;
        Ok(SweepRow { theta, c_rate, final_max_temp: r.final_max_temp, max_temp_diff: r.max_temp_diff })
    };
    match mode {
        ExecutionMode::Sequential => grid.iter().map(run).collect(),
        ExecutionMode::Parallel => run_parallel(&grid, run),
    }
}

#[cfg(feature = "parallel")]
fn run_parallel<F>(grid: &[(f64, f64)], run: F) -> Result<Vec<SweepRow>>
where
    F: Fn(&(f64, f64)) -> Result<SweepRow> + Sync + Send,
{
    use rayon::prelude::*;
    grid.par_iter().map(run).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<F>(grid: &[(f64, f64)], run: F) -> Result<Vec<SweepRow>>
where
    F: Fn(&(f64, f64)) -> Result<SweepRow>,
{
    grid.iter().map(run).collect()
}

/// `theta_deg,c_rate,final_max_temp_c,max_temp_diff_k`
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta_deg", "c_rate", "final_max_temp_c", "max_temp_diff_k"])?;
    for r in rows {
        w.write_record([
            format!("{:.3}", r.theta.to_degrees()),
            format!("{}", r.c_rate),
            format!("{:.6}", crate::celsius(r.final_max_temp)),
            format!("{:.6}", r.max_temp_diff),
        ])?;
    }
    w.flush().map_err(|e| BtmsError::Csv(e.into()))?;
    Ok(())
}
