//! Lead-screw axis driven by a brushed DC motor, and the open-loop stepper
//! that rotates the end effector.
//!
//! The axis model lumps motor and screw into one second-order equation in
//! carrier position `z`:
//!
//! ```text
//! Va = K2·z̈ + K1·ż + K3·g
//! K1 = D·Ra·γ/Ka + Kb/K
//! K2 = Ra·J_l/(Ka·K) + Ra·m·γ/Ka
//! K3 = Ra·γ·m/Ka
//! ```
//!
//! Static friction is modelled as a rest-state gate: a carrier at rest stays
//! at rest while the armature voltage is inside the deadzone.

mod stepper;

pub use stepper::{stepper_update, StepperState};

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Velocity below which the carrier counts as resting (m/s).
pub const STICTION_V_EPS: f64 = 1e-4;

/// Gravitational acceleration fed to vertical axes (m/s²).
pub const GRAVITY: f64 = 9.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisName {
    X,
    Y,
    Z,
}

impl AxisName {
    pub const ALL: [AxisName; 3] = [AxisName::X, AxisName::Y, AxisName::Z];

    pub fn as_str(self) -> &'static str {
        match self {
            AxisName::X => "x",
            AxisName::Y => "y",
            AxisName::Z => "z",
        }
    }
}

impl fmt::Display for AxisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AxisName {
    type Err = PlantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" => Ok(AxisName::X),
            "y" => Ok(AxisName::Y),
            "z" => Ok(AxisName::Z),
            other => Err(PlantError::UnknownAxis(other.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlantError {
    #[error("axis {axis}: {field} = {value} violates {rule}")]
    InvalidParam {
        axis: AxisName,
        field: &'static str,
        value: f64,
        rule: &'static str,
    },
    #[error("axis {axis}: degenerate screw geometry ({field} = {value})")]
    DegenerateGeometry {
        axis: AxisName,
        field: &'static str,
        value: f64,
    },
    #[error("axis {axis}: fitted friction D = {value:.3} N·s/m is negative; calibration pair is inconsistent with the motor constants")]
    NegativeFriction { axis: AxisName, value: f64 },
    #[error("axis {axis}: calibration voltage {voltage} V does not exceed the gravity load {gravity_load:.4} V")]
    CalibrationBelowGravity {
        axis: AxisName,
        voltage: f64,
        gravity_load: f64,
    },
    #[error("axis {axis}: calibration velocity must be positive, got {velocity}")]
    NonPositiveVelocity { axis: AxisName, velocity: f64 },
    #[error("unknown axis `{0}` (expected x, y or z)")]
    UnknownAxis(String),
}

/// Physical and electrical parameters of one lead-screw axis (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisParams {
    pub name: AxisName,
    /// Load mass (kg).
    pub mass: f64,
    /// Dynamic friction coefficient D (N·s/m).
    pub friction: f64,
    /// Static friction coefficient of the thread.
    pub mu: f64,
    /// Screw radius (m).
    pub radius: f64,
    /// Screw length (m).
    pub length: f64,
    /// Pitch (m/rev).
    pub pitch: f64,
    /// Armature resistance (Ω).
    pub ra: f64,
    /// Armature torque constant (N·m/A).
    pub ka: f64,
    /// Back-EMF constant (V·s/rad).
    pub kb: f64,
    /// Screw material density (kg/m³).
    pub density: f64,
    /// Minimum armature voltage that moves the carrier from rest (V).
    pub v_deadzone: f64,
    /// Symmetric supply saturation (V).
    pub v_max: f64,
    /// Gravitational disturbance input: 9.8 for a vertical axis, 0 otherwise.
    pub g_input: f64,
    pub travel_min: f64,
    pub travel_max: f64,
    /// Terminal velocity measured at `v_max`, used to fit `friction`.
    pub v_calibration: f64,
}

impl AxisParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let axis = self.name;
        let positive = [
            ("mass", self.mass),
            ("radius", self.radius),
            ("length", self.length),
            ("pitch", self.pitch),
            ("ra", self.ra),
            ("ka", self.ka),
            ("kb", self.kb),
            ("density", self.density),
            ("v_max", self.v_max),
            ("v_calibration", self.v_calibration),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PlantError::InvalidParam {
                    axis,
                    field,
                    value,
                    rule: "must be finite and > 0",
                });
            }
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(PlantError::InvalidParam {
                axis,
                field: "mu",
                value: self.mu,
                rule: "0 <= mu < 1",
            });
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(PlantError::InvalidParam {
                axis,
                field: "friction",
                value: self.friction,
                rule: "must be finite and >= 0",
            });
        }
        if !(self.v_deadzone >= 0.0 && self.v_deadzone < self.v_max) {
            return Err(PlantError::InvalidParam {
                axis,
                field: "v_deadzone",
                value: self.v_deadzone,
                rule: "0 <= v_deadzone < v_max",
            });
        }
        if self.g_input != 0.0 && self.g_input != GRAVITY {
            return Err(PlantError::InvalidParam {
                axis,
                field: "g_input",
                value: self.g_input,
                rule: "must be 0 or 9.8",
            });
        }
        if self.travel_min.is_nan() || self.travel_max.is_nan() || self.travel_min >= self.travel_max {
            return Err(PlantError::InvalidParam {
                axis,
                field: "travel_max",
                value: self.travel_max,
                rule: "travel_min < travel_max",
            });
        }
        Ok(())
    }

    /// Encoder resolution for a disk with `segments` opaque sectors (m/count).
    pub fn encoder_resolution(&self, segments: u32) -> f64 {
        self.pitch / f64::from(segments)
    }
}

/// Constants computed from [`AxisParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// Thread helix angle (rad).
    pub alpha: f64,
    /// Torque required per newton of axial load (m).
    pub gamma: f64,
    /// Pitch constant, travel per radian (m/rad).
    pub pitch_const: f64,
    /// Screw mass (kg).
    pub screw_mass: f64,
    /// Screw moment of inertia (kg·m²).
    pub screw_inertia: f64,
    /// Velocity coefficient (V·s/m).
    pub k1: f64,
    /// Acceleration coefficient (V·s²/m).
    pub k2: f64,
    /// Gravity gain (V·s²/m).
    pub k3: f64,
}

impl DerivedConstants {
    /// Voltage consumed holding the load against gravity while moving.
    pub fn gravity_load(&self, p: &AxisParams) -> f64 {
        self.k3 * p.g_input
    }

    /// Open-loop velocity time constant K2/K1 (s).
    pub fn time_constant(&self) -> f64 {
        self.k2 / self.k1
    }
}

pub fn derive_constants(p: &AxisParams) -> Result<DerivedConstants, PlantError> {
    for (field, value) in [("radius", p.radius), ("pitch", p.pitch), ("ka", p.ka)] {
        if value.is_nan() || value <= 0.0 {
            return Err(PlantError::DegenerateGeometry {
                axis: p.name,
                field,
                value,
            });
        }
    }
    let pitch_const = p.pitch / (2.0 * PI);
    let alpha = (p.pitch / (2.0 * PI * p.radius)).atan();
    let (sin_a, cos_a) = alpha.sin_cos();
    let gamma = p.radius * (sin_a + p.mu * cos_a) / (cos_a - p.mu * sin_a);
    let screw_mass = PI * p.radius * p.radius * p.length * p.density;
    let screw_inertia = 0.5 * screw_mass * p.radius * p.radius;

    let k1 = p.friction * p.ra * gamma / p.ka + p.kb / pitch_const;
    let k2 = p.ra * screw_inertia / (p.ka * pitch_const) + p.ra * p.mass * gamma / p.ka;
    let k3 = p.ra * gamma * p.mass / p.ka;
    Ok(DerivedConstants {
        alpha,
        gamma,
        pitch_const,
        screw_mass,
        screw_inertia,
        k1,
        k2,
        k3,
    })
}

/// Solves the accel-free motion equation for D, given that `v_sat` volts
/// drive the carrier at a terminal velocity of `v_terminal`.
pub fn fit_dynamic_friction(p: &AxisParams, v_sat: f64, v_terminal: f64) -> Result<f64, PlantError> {
    if v_terminal.is_nan() || v_terminal <= 0.0 {
        return Err(PlantError::NonPositiveVelocity {
            axis: p.name,
            velocity: v_terminal,
        });
    }
    let frictionless = AxisParams {
        friction: 0.0,
        ..p.clone()
    };
    let dc = derive_constants(&frictionless)?;
    let gravity_load = dc.gravity_load(p);
    if v_sat <= gravity_load {
        return Err(PlantError::CalibrationBelowGravity {
            axis: p.name,
            voltage: v_sat,
            gravity_load,
        });
    }
    // V = (D·Ra·γ/Ka + Kb/K)·v + K3·g, with dc.k1 = Kb/K at D = 0.
    let per_d = p.ra * dc.gamma / p.ka;
    let d = ((v_sat - gravity_load) / v_terminal - dc.k1) / per_d;
    if d < 0.0 {
        return Err(PlantError::NegativeFriction { axis: p.name, value: d });
    }
    Ok(d)
}

/// Terminal velocity under a constant armature voltage; zero inside the
/// deadzone.
pub fn steady_state_velocity(p: &AxisParams, dc: &DerivedConstants, va: f64) -> f64 {
    if va.abs() < p.v_deadzone {
        return 0.0;
    }
    (va - dc.gravity_load(p)) / dc.k1
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    /// Carrier position (m).
    pub pos: f64,
    /// Carrier velocity (m/s).
    pub vel: f64,
    /// Simulation time (s).
    pub t: f64,
}

impl PlantState {
    pub fn at_rest(pos: f64) -> Self {
        PlantState { pos, vel: 0.0, t: 0.0 }
    }

    pub fn is_resting(&self) -> bool {
        self.vel.abs() < STICTION_V_EPS
    }
}

/// True when static friction holds the carrier: resting and the drive is
/// inside the deadzone.
pub fn stiction_holds(p: &AxisParams, vel: f64, va: f64) -> bool {
    vel.abs() < STICTION_V_EPS && va.abs() < p.v_deadzone
}

/// Time derivatives `(d_pos, d_vel)` of the carrier under armature voltage `va`.
pub fn plant_derivatives(p: &AxisParams, dc: &DerivedConstants, s: &PlantState, va: f64) -> (f64, f64) {
    if stiction_holds(p, s.vel, va) {
        return (0.0, 0.0);
    }
    moving_derivatives(p, dc, s.vel, va)
}

/// Derivatives with the stiction gate bypassed (carrier known to be moving).
pub fn moving_derivatives(p: &AxisParams, dc: &DerivedConstants, vel: f64, va: f64) -> (f64, f64) {
    let accel = (va - dc.k1 * vel - dc.gravity_load(p)) / dc.k2;
    (vel, accel)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn z_axis_constants_match_worked_example() {
        let dc = derive_constants(&z_axis()).unwrap();
        assert!(rel(dc.alpha.to_degrees(), 2.847) < 5e-3);
        assert!(rel(dc.gamma, 0.4403e-3) < 5e-3);
        assert!(rel(dc.pitch_const, 0.1989e-3) < 5e-3);
        assert!(rel(dc.screw_mass, 0.213) < 5e-3);
        assert!(rel(dc.screw_inertia, 1.71e-6) < 5e-3);
        assert!(rel(dc.screw_inertia / dc.pitch_const, 8.57e-3) < 5e-3);
    }

    #[test]
    fn motion_coefficients_by_hand() {
        // K2 = Ra·J_l/(Ka·K) + Ra·m·γ/Ka with J_l/K = 8.5683e-3, γ = 0.44026e-3:
        // 0.205·8.5683e-3/10.25e-3 + 0.205·1.3·0.44026e-3/10.25e-3
        //   = 0.171366 + 0.011447 = 0.182812
        // K3·g = 0.011447·9.8 = 0.112178
        let dc = derive_constants(&z_axis()).unwrap();
        assert!((dc.k2 - 0.182812).abs() < 1e-5, "k2 = {}", dc.k2);
        assert!((dc.k3 * GRAVITY - 0.112178).abs() < 1e-5);
        assert!(dc.k1 > 0.0 && dc.k2 > 0.0 && dc.k3 > 0.0);
        assert!((dc.time_constant() - 3.5e-3).abs() < 0.1e-3);
    }

    #[test]
    fn frictionless_screw_gamma_is_pitch_constant() {
        let p = AxisParams { mu: 0.0, ..z_axis() };
        let dc = derive_constants(&p).unwrap();
        assert!(rel(dc.gamma, dc.pitch_const) < 1e-12);
    }

    #[test]
    fn doubling_density_doubles_screw_mass_and_inertia() {
        let p = z_axis();
        let heavy = AxisParams {
            density: 2.0 * p.density,
            ..p.clone()
        };
        let a = derive_constants(&p).unwrap();
        let b = derive_constants(&heavy).unwrap();
        assert_eq!(b.screw_mass, 2.0 * a.screw_mass);
        assert_eq!(b.screw_inertia, 2.0 * a.screw_inertia);
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let p = AxisParams {
            radius: 0.0,
            ..z_axis()
        };
        assert!(matches!(
            derive_constants(&p),
            Err(PlantError::DegenerateGeometry { field: "radius", .. })
        ));
        let p = AxisParams {
            pitch: -1e-3,
            ..z_axis()
        };
        assert!(derive_constants(&p).is_err());
    }

    #[test]
    fn validation_catches_each_invariant() {
        assert!(z_axis().validate().is_ok());
        assert!(AxisParams { mu: 1.0, ..z_axis() }.validate().is_err());
        assert!(AxisParams {
            friction: -1.0,
            ..z_axis()
        }
        .validate()
        .is_err());
        assert!(AxisParams {
            v_deadzone: 13.8,
            ..z_axis()
        }
        .validate()
        .is_err());
        assert!(AxisParams {
            g_input: 3.0,
            ..z_axis()
        }
        .validate()
        .is_err());
        assert!(AxisParams {
            travel_max: 0.0,
            ..z_axis()
        }
        .validate()
        .is_err());
        assert!(AxisParams { mass: 0.0, ..z_axis() }.validate().is_err());
    }

    #[test]
    fn friction_fit_z() {
        let d = fit_dynamic_friction(&z_axis(), 13.8, 0.262).unwrap();
        assert!(rel(d, 81.0) < 0.02, "D = {d}");
    }

    #[test]
    fn friction_fit_inverts_steady_state() {
        let p = z_axis();
        let d = fit_dynamic_friction(&p, 13.8, 0.262).unwrap();
        let fitted = AxisParams { friction: d, ..p };
        let dc = derive_constants(&fitted).unwrap();
        let v = steady_state_velocity(&fitted, &dc, 13.8);
        assert!(rel(v, 0.262) < 1e-9);
    }

    #[test]
    fn friction_fit_rejects_inconsistent_pairs() {
        // Faster than the frictionless motor allows.
        assert!(matches!(
            fit_dynamic_friction(&z_axis(), 13.8, 0.5),
            Err(PlantError::NegativeFriction { .. })
        ));
        assert!(matches!(
            fit_dynamic_friction(&z_axis(), 0.1, 0.2),
            Err(PlantError::CalibrationBelowGravity { .. })
        ));
        assert!(fit_dynamic_friction(&z_axis(), 13.8, 0.0).is_err());
    }

    #[test]
    fn steady_state_velocity_cases() {
        let p = z_axis();
        let dc = derive_constants(&p).unwrap();
        assert!(rel(steady_state_velocity(&p, &dc, 13.8), 0.262) < 0.01);
        assert_eq!(steady_state_velocity(&p, &dc, 4.0), 0.0);
        let balance = AxisParams {
            v_deadzone: 0.0,
            ..p.clone()
        };
        assert_eq!(steady_state_velocity(&balance, &dc, dc.k3 * GRAVITY), 0.0);
    }

    #[test]
    fn derivatives_at_rest_and_full_drive() {
        let p = z_axis();
        let dc = derive_constants(&p).unwrap();
        let rest = PlantState::at_rest(0.1);
        assert_eq!(plant_derivatives(&p, &dc, &rest, 0.0), (0.0, 0.0));

        // (13.8 − 0.112178)/0.182812 = 74.874 m/s², computed by hand from
        // the coefficients above.
        let (dp, dv) = plant_derivatives(&p, &dc, &rest, 13.8);
        assert_eq!(dp, 0.0);
        assert!((dv - 74.874).abs() < 0.01, "dv = {dv}");
    }

    #[test]
    fn equilibrium_without_gravity() {
        let p = x_axis();
        let dc = derive_constants(&p).unwrap();
        let v = 0.1;
        let s = PlantState {
            pos: 0.2,
            vel: v,
            t: 0.0,
        };
        let (_, dv) = plant_derivatives(&p, &dc, &s, dc.k1 * v);
        assert!(dv.abs() < 1e-9);
    }

    #[test]
    fn moving_carrier_ignores_deadzone() {
        let p = x_axis();
        let dc = derive_constants(&p).unwrap();
        let s = PlantState {
            pos: 0.2,
            vel: 0.05,
            t: 0.0,
        };
        let (dp, dv) = plant_derivatives(&p, &dc, &s, 0.0);
        assert_eq!(dp, 0.05);
        assert!(dv < 0.0);
    }

    #[test]
    fn axis_name_round_trip() {
        for a in AxisName::ALL {
            assert_eq!(a.as_str().parse::<AxisName>().unwrap(), a);
        }
        assert!("w".parse::<AxisName>().is_err());
    }
}
