//! Kinetic-theory estimates for a gas at room conditions, and conversion of
//! simulation steps (one collision per particle) into seconds.
//!
//! Standard hard-sphere formulas:
//!
//! ```text
//! N   = p L^3 / (k_B T)
//! l_m = k_B T / (sqrt(2) π d^2 p)
//! v_m = sqrt(8 k_B T / (π m))
//! t_m = l_m / v_m,    rate = 1 / t_m
//! ```
//!
//! The default diameter and mass are not tabulated constants: they are solved
//! from the formulas so that at 300 K and 1e5 Pa the mean free path is exactly
//! 2e-7 m and the mean speed exactly 400 m/s.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boltzmann constant, J/K (exact in SI).
pub const BOLTZMANN: f64 = 1.380_649e-23;

pub const REFERENCE_TEMPERATURE: f64 = 300.0;
pub const REFERENCE_PRESSURE: f64 = 1.0e5;
pub const REFERENCE_LENGTH: f64 = 0.01;
pub const REFERENCE_MEAN_FREE_PATH: f64 = 2.0e-7;
pub const REFERENCE_MEAN_SPEED: f64 = 4.0e2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticParams {
    /// K
    pub temperature: f64,
    /// N m^-2
    pub pressure: f64,
    /// Side of the container, m.
    pub length: f64,
    /// Effective molecular diameter, m.
    pub diameter: f64,
    /// Molecular mass, kg.
    pub mass: f64,
}

impl Default for KineticParams {
    fn default() -> Self {
        Self {
            temperature: REFERENCE_TEMPERATURE,
            pressure: REFERENCE_PRESSURE,
            length: REFERENCE_LENGTH,
            diameter: default_diameter(),
            mass: default_mass(),
        }
    }
}

/// Diameter giving a mean free path of 2e-7 m at 300 K, 1e5 Pa (≈ 2.16e-10 m).
pub fn default_diameter() -> f64 {
    diameter_for_mean_free_path(REFERENCE_MEAN_FREE_PATH, REFERENCE_TEMPERATURE, REFERENCE_PRESSURE)
}

/// Mass giving a mean speed of 400 m/s at 300 K (≈ 6.59e-26 kg).
pub fn default_mass() -> f64 {
    mass_for_mean_speed(REFERENCE_MEAN_SPEED, REFERENCE_TEMPERATURE)
}

pub fn diameter_for_mean_free_path(mean_free_path: f64, temperature: f64, pressure: f64) -> f64 {
    (BOLTZMANN * temperature / (SQRT_2 * PI * pressure * mean_free_path)).sqrt()
}

pub fn mass_for_mean_speed(mean_speed: f64, temperature: f64) -> f64 {
    8.0 * BOLTZMANN * temperature / (PI * mean_speed * mean_speed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticDerived {
    pub n_particles: f64,
    /// m
    pub mean_free_path: f64,
    /// m/s
    pub mean_speed: f64,
    /// s
    pub mean_free_time: f64,
    /// 1/s
    pub collision_rate: f64,
}

impl KineticParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("temperature", self.temperature),
            ("pressure", self.pressure),
            ("length", self.length),
            ("diameter", self.diameter),
            ("mass", self.mass),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn derive(params: &KineticParams) -> Result<KineticDerived> {
    params.validate()?;
    let kt = BOLTZMANN * params.temperature;
    let mean_free_path = kt / (SQRT_2 * PI * params.diameter.powi(2) * params.pressure);
    let mean_speed = (8.0 * kt / (PI * params.mass)).sqrt();
    let mean_free_time = mean_free_path / mean_speed;
    Ok(KineticDerived {
        n_particles: params.pressure * params.length.powi(3) / kt,
        mean_free_path,
        mean_speed,
        mean_free_time,
        collision_rate: 1.0 / mean_free_time,
    })
}

pub fn steps_to_seconds(steps: u64, derived: &KineticDerived) -> f64 {
    steps as f64 * derived.mean_free_time
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    #[test]
    fn defaults_reproduce_room_estimates() {
        let p = KineticParams::default();
        assert!(rel(p.diameter, 2.16e-10) < 0.005);
        assert!(rel(p.mass, 6.59e-26) < 0.005);
        let d = derive(&p).unwrap();
        assert!(rel(d.n_particles, 2.5e19) < 0.05);
        assert!(rel(d.n_particles, 2.414e19) < 1e-3);
        assert!(rel(d.mean_free_path, 2e-7) < 1e-12);
        assert!(rel(d.mean_speed, 400.0) < 1e-12);
        assert!(rel(d.mean_free_time, 5e-10) < 1e-12);
        assert!(rel(d.collision_rate, 2e9) < 1e-12);
        assert_eq!(d.mean_free_time, d.mean_free_path / d.mean_speed);
        assert_eq!(d.collision_rate, 1.0 / d.mean_free_time);
    }

    #[test]
    fn doubling_pressure() {
        let base = derive(&KineticParams::default()).unwrap();
        let high = derive(&KineticParams {
            pressure: 2e5,
            ..KineticParams::default()
        })
        .unwrap();
        assert!(rel(high.n_particles, 2.0 * base.n_particles) < 1e-14);
        assert!(rel(high.mean_free_path, 0.5 * base.mean_free_path) < 1e-14);
        assert_eq!(high.mean_speed, base.mean_speed);
    }

    #[test]
    fn power_laws() {
        let base = KineticParams::default();
        let d0 = derive(&base).unwrap();
        let hot = derive(&KineticParams { temperature: 1200.0, ..base }).unwrap();
        assert!(rel(hot.mean_speed, 2.0 * d0.mean_speed) < 1e-14);
        assert!(rel(hot.mean_free_path, 4.0 * d0.mean_free_path) < 1e-14);
        let big = derive(&KineticParams { length: 0.02, ..base }).unwrap();
        assert!(rel(big.n_particles, 8.0 * d0.n_particles) < 1e-14);
        let fat = derive(&KineticParams { diameter: 2.0 * base.diameter, ..base }).unwrap();
        assert!(rel(fat.mean_free_path, 0.25 * d0.mean_free_path) < 1e-14);
        let heavy = derive(&KineticParams { mass: 4.0 * base.mass, ..base }).unwrap();
        assert!(rel(heavy.mean_speed, 0.5 * d0.mean_speed) < 1e-14);
    }

    #[test]
    fn rejects_non_positive() {
        for bad in [0.0, -1.0, f64::NAN] {
            let p = KineticParams { temperature: bad, ..KineticParams::default() };
            assert!(matches!(derive(&p), Err(Error::InvalidInput(_))));
            let p = KineticParams { mass: bad, ..KineticParams::default() };
            assert!(derive(&p).is_err());
        }
    }

    #[test]
    fn step_conversion() {
        let d = derive(&KineticParams::default()).unwrap();
        assert_eq!(steps_to_seconds(0, &d), 0.0);
        assert!(rel(steps_to_seconds(2_000_000_000, &d), 1.0) < 1e-12);
        assert!(rel(steps_to_seconds(20, &d), 1e-8) < 1e-12);
    }
}
