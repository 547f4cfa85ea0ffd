//! Per-axis PI position controller with clamping anti-windup and the
//! error-band power gate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GainError {
    #[error("kp must be > 0, got {0}")]
    Kp(f64),
    #[error("ki must be >= 0, got {0}")]
    Ki(f64),
    #[error("i_clamp must satisfy 0 < i_clamp <= v_sat, got i_clamp = {i_clamp}, v_sat = {v_sat}")]
    Clamp { i_clamp: f64, v_sat: f64 },
    #[error("gate band and delay must be positive, got band = {band}, delay = {delay}")]
    Gate { band: f64, delay: f64 },
}

/// PI gains in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    /// Proportional gain (V/m).
    pub kp: f64,
    /// Integral gain (V/(m·s)).
    pub ki: f64,
    /// Integrator magnitude limit (V).
    pub i_clamp: f64,
    /// Output saturation (V).
    pub v_sat: f64,
}

impl PiGains {
    pub fn validate(&self) -> Result<(), GainError> {
        if !(self.kp > 0.0 && self.kp.is_finite()) {
            return Err(GainError::Kp(self.kp));
        }
        if !(self.ki >= 0.0 && self.ki.is_finite()) {
            return Err(GainError::Ki(self.ki));
        }
        if !(self.i_clamp > 0.0 && self.i_clamp <= self.v_sat) {
            return Err(GainError::Clamp {
                i_clamp: self.i_clamp,
                v_sat: self.v_sat,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Integral term (V).
    pub integral: f64,
    /// Continuous time spent inside the error band (s).
    pub in_band_s: f64,
    pub pwm_on: bool,
    /// Error band (m).
    pub band: f64,
    /// Dwell inside the band before the output is switched off (s).
    pub gate_delay: f64,
}

impl Default for ControllerState {
    fn default() -> Self {
        ControllerState::new(1e-3, 5.0)
    }
}

impl ControllerState {
    pub fn new(band: f64, gate_delay: f64) -> Self {
        ControllerState {
            integral: 0.0,
            in_band_s: 0.0,
            pwm_on: true,
            band,
            gate_delay,
        }
    }

    pub fn validate(&self) -> Result<(), GainError> {
        if !(self.band > 0.0 && self.gate_delay > 0.0) {
            return Err(GainError::Gate {
                band: self.band,
                delay: self.gate_delay,
            });
        }
        Ok(())
    }
}

/// One controller tick. Returns the armature voltage and the next state.
///
/// Integration is suspended while the unclamped output is saturated and the
/// error pushes it further into saturation; the integral is also clamped to
/// `±i_clamp`. With the output gated off the voltage is zero and the
/// integrator holds.
pub fn pi_update(c: &ControllerState, g: &PiGains, setpoint: f64, measured: f64, dt: f64) -> (f64, ControllerState) {
    let mut next = *c;
    if !c.pwm_on {
        return (0.0, next);
    }
    let e = setpoint - measured;
    let unclamped = g.kp * e + c.integral;
    let winding_up = unclamped.abs() > g.v_sat && e * unclamped > 0.0;
    if !winding_up {
        next.integral = (c.integral + g.ki * e * dt).clamp(-g.i_clamp, g.i_clamp);
    }
    let va = (g.kp * e + next.integral).clamp(-g.v_sat, g.v_sat);
    (va, next)
}

/// Tracks time inside the error band and gates the output.
///
/// The output switches off once the error has stayed below `band` for
/// `gate_delay`; it switches back on (with a cleared integrator) the first
/// tick the error leaves the band.
pub fn power_gate_update(c: &ControllerState, e: f64, dt: f64) -> ControllerState {
    let mut next = *c;
    if e.abs() < c.band {
        next.in_band_s += dt;
        // Summing thousands of millisecond ticks leaves a few ulps of error.
        if next.in_band_s >= c.gate_delay - 1e-9 {
            next.pwm_on = false;
        }
    } else {
        next.in_band_s = 0.0;
        if !c.pwm_on {
            next.pwm_on = true;
            next.integral = 0.0;
        }
    }
    next
}
