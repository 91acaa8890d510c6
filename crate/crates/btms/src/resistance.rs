//! Thermal resistance models, all in K/W.

use std::f64::consts::PI;

use crate::fluid::WorkingFluidState;

/// Conduction through a cylindrical sector of half-angle `theta` between
/// `r_in` and `r_out`: ∫ dr / (k·2θ·r·L) = ln(r_out/r_in) / (2θ k L).
pub fn radial_resistance(r_in: f64, r_out: f64, k: f64, theta: f64, axial_len: f64) -> f64 {
    debug_assert!(r_out >= r_in && r_in > 0.0);
    (r_out / r_in).ln() / (2.0 * theta * k * axial_len)
}

/// Integrand of the shell connection conductance at angle `phi`.
pub fn connection_integrand(k_s: f64, r_b: f64, h_b: f64, t_s: f64, phi: f64) -> f64 {
    k_s * r_b * h_b / (t_s + r_b * (1.0 - phi.cos()))
}

/// Shell between a cell of radius `r_b` and height `h_b` and the pipe
/// wall, over the contact span [−θ, θ]. Conductance is integrated
/// numerically; the result is its reciprocal.
pub fn connection_resistance(theta: f64, t_s: f64, k_s: f64, r_b: f64, h_b: f64) -> f64 {
    if theta <= 0.0 {
        return f64::INFINITY;
    }
    let f = |phi: f64| connection_integrand(k_s, r_b, h_b, t_s, phi);
    // the integrand is even in φ
    let g = 2.0 * adaptive_simpson(&f, 0.0, theta, 1e-12, 50);
    1.0 / g
}

/// (2−σ)/(2σ) · (2π R T)^{1/2} · R T² / (A p H²).
pub fn phase_change_resistance(f: &WorkingFluidState, area: f64) -> f64 {
    let (s, r, t) = (f.accommodation, f.gas_constant, f.vapor_temperature);
    (2.0 - s) * (2.0 * PI * r * t).sqrt() * r * t * t
        / (2.0 * s * area * f.vapor_pressure * f.latent_heat * f.latent_heat)
}

/// Pressure-drop driven temperature drop along a vapor channel of
/// thickness `t_v`, flow `area` and `length`.
pub fn vapor_flow_resistance(f: &WorkingFluidState, t_v: f64, length: f64, area: f64) -> f64 {
    let (r, t, h) = (f.gas_constant, f.vapor_temperature, f.latent_heat);
    (r * t * t) / (f.vapor_pressure * h) * 12.0 * f.vapor_viscosity / (t_v * t_v * f.vapor_density * area * h) * length
}

pub fn heat_sink_resistance(h_fin: f64, a_fin: f64) -> f64 {
    1.0 / (h_fin * a_fin)
}

/// Plane-wall conduction t/(kA).
pub fn slab_resistance(thickness: f64, k: f64, area: f64) -> f64 {
    thickness / (k * area)
}

/// Adaptive Simpson quadrature on [a, b] to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics_and_close_on_sine() {
        let cubic = |x: f64| 3.0 * x * x * x - x + 2.0;
        assert!((adaptive_simpson(&cubic, 0.0, 2.0, 1e-12, 20) - 14.0).abs() < 1e-12);
        assert!((adaptive_simpson(&f64::sin, 0.0, PI, 1e-12, 50) - 2.0).abs() < 1e-10);
    }
}
