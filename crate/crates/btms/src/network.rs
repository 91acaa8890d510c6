//! Lumped thermal network: capacitive nodes joined by resistances, with
//! optional fixed-temperature boundaries, integrated by explicit Euler.
//!
//! Each node obeys C dT/dt = Σ (T_nbr − T)/R + Q.

use serde::{Deserialize, Serialize};

use crate::{BtmsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalNode {
    pub name: String,
    /// c·ρ·V, J/K
    pub capacity: f64,
    /// K
    pub temperature: f64,
    /// W
    pub source: f64,
}

/// Undirected link; the same resistance applies from both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub resistance: f64,
}

/// Link from a node to a fixed-temperature reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLink {
    pub node: usize,
    pub temperature: f64,
    pub resistance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThermalNetwork {
    pub nodes: Vec<ThermalNode>,
    pub links: Vec<Link>,
    pub boundaries: Vec<BoundaryLink>,
}

impl ThermalNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>, capacity: f64, temperature: f64) -> Result<usize> {
        if !(capacity > 0.0 && capacity.is_finite()) {
            return Err(BtmsError::Assembly(format!("node capacity must be positive, got {capacity}")));
        }
        self.nodes.push(ThermalNode { name: name.into(), capacity, temperature, source: 0.0 });
        Ok(self.nodes.len() - 1)
    }

    fn check_resistance(r: f64) -> Result<()> {
        if r > 0.0 && r.is_finite() {
            Ok(())
        } else {
            Err(BtmsError::Assembly(format!("resistance must be positive and finite, got {r}")))
        }
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i < self.nodes.len() {
            Ok(())
        } else {
            Err(BtmsError::Assembly(format!("no node {i}")))
        }
    }

    pub fn connect(&mut self, a: usize, b: usize, resistance: f64) -> Result<()> {
        self.check_node(a)?;
        self.check_node(b)?;
        if a == b {
            return Err(BtmsError::Assembly(format!("node {a} linked to itself")));
        }
        Self::check_resistance(resistance)?;
        self.links.push(Link { a, b, resistance });
        Ok(())
    }

    pub fn connect_boundary(&mut self, node: usize, temperature: f64, resistance: f64) -> Result<()> {
        self.check_node(node)?;
        Self::check_resistance(resistance)?;
        self.boundaries.push(BoundaryLink { node, temperature, resistance });
        Ok(())
    }

    pub fn set_source(&mut self, node: usize, watts: f64) {
        self.nodes[node].source = watts;
    }

    pub fn temperatures(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.temperature).collect()
    }

    /// Σ C·T, J relative to 0 K.
    pub fn stored_energy(&self) -> f64 {
        self.nodes.iter().map(|n| n.capacity * n.temperature).sum()
    }

    /// Total conductance attached to each node, boundaries included.
    pub fn node_conductance(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.nodes.len()];
        for l in &self.links {
            g[l.a] += 1.0 / l.resistance;
            g[l.b] += 1.0 / l.resistance;
        }
        for b in &self.boundaries {
            g[b.node] += 1.0 / b.resistance;
        }
        g
    }

    /// Largest admissible explicit step: min C/ΣG. Infinite for a network
    /// without links.
    pub fn stability_bound(&self) -> f64 {
        self.nodes
            .iter()
            .zip(self.node_conductance())
            .filter(|(_, g)| *g > 0.0)
            .map(|(n, g)| n.capacity / g)
            .fold(f64::INFINITY, f64::min)
    }

    /// Net heat flow into each node at the current temperatures, W.
    pub fn heat_flows(&self) -> Vec<f64> {
        let mut flow: Vec<f64> = self.nodes.iter().map(|n| n.source).collect();
        for l in &self.links {
            let q = (self.nodes[l.b].temperature - self.nodes[l.a].temperature) / l.resistance;
            flow[l.a] += q;
            flow[l.b] -= q;
        }
        for b in &self.boundaries {
            flow[b.node] += (b.temperature - self.nodes[b.node].temperature) / b.resistance;
        }
        flow
    }

    /// One explicit Euler step, every node updated from the pre-step field.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let bound = self.stability_bound();
        if !(dt > 0.0 && dt < bound) {
            return Err(BtmsError::StabilityViolation { dt, bound });
        }
        self.step_unchecked(dt);
        Ok(())
    }

    pub(crate) fn step_unchecked(&mut self, dt: f64) {
        let flow = self.heat_flows();
        for (n, q) in self.nodes.iter_mut().zip(flow) {
            n.temperature += dt * q / n.capacity;
        }
    }
}

/// Pure form of [`ThermalNetwork::step`].
pub fn step_network(net: &ThermalNetwork, dt: f64) -> Result<ThermalNetwork> {
    let mut next = net.clone();
    next.step(dt)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_links() {
        let mut n = ThermalNetwork::new();
        let a = n.add_node("a", 1.0, 0.0).unwrap();
        assert!(n.connect(a, a, 1.0).is_err());
        assert!(n.connect(a, 5, 1.0).is_err());
        let b = n.add_node("b", 1.0, 0.0).unwrap();
        assert!(n.connect(a, b, 0.0).is_err());
        assert!(n.add_node("c", 0.0, 0.0).is_err());
    }

    #[test]
    fn bound_is_strict() {
        let mut n = ThermalNetwork::new();
        let a = n.add_node("a", 2.0, 0.0).unwrap();
        n.connect_boundary(a, 1.0, 1.0).unwrap();
        assert_eq!(n.stability_bound(), 2.0);
        assert!(matches!(n.step(2.0), Err(BtmsError::StabilityViolation { .. })));
        assert!(n.step(1.999).is_ok());
        assert!(n.step(-1.0).is_err());
    }
}
