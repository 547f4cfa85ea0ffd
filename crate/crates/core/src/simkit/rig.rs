//! Fixed-step closed loop: encoder, PI controller and plant for each axis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::integrate::advance_plant;
use super::latency::LatencyChannel;
use super::signal::Signal;
use super::trace::{AxisTrace, LatencyStats, Trace, TraceRow};
use crate::controller::{pi_update, power_gate_update, ControllerState, GainError, PiGains};
use crate::plant::{derive_constants, AxisParams, DerivedConstants, PlantError, PlantState};
use crate::sensing::{encoder_update, home, EncoderModel};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("sim periods must satisfy 0 < dt_plant <= dt_ctrl <= dt_sensor, got {dt_plant}, {dt_ctrl}, {dt_sensor}")]
    PeriodOrder {
        dt_plant: f64,
        dt_ctrl: f64,
        dt_sensor: f64,
    },
    #[error("{what} ({value} s) is not an integer multiple of {base} s")]
    NotMultiple { what: &'static str, value: f64, base: f64 },
    #[error("duration must be finite and >= 0, got {0}")]
    Duration(f64),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Gains(#[from] GainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt_plant: f64,
    pub dt_ctrl: f64,
    pub dt_sensor: f64,
    pub duration: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_plant: 1e-4,
            dt_ctrl: 1e-3,
            dt_sensor: 1e-2,
            duration: 2.0,
            seed: 0,
        }
    }
}

fn whole_ratio(what: &'static str, value: f64, base: f64) -> Result<u32, SimError> {
    let n = (value / base).round();
    if n < 1.0 || ((n * base - value) / value).abs() > 1e-9 {
        return Err(SimError::NotMultiple { what, value, base });
    }
    Ok(n as u32)
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt_plant > 0.0 && self.dt_plant <= self.dt_ctrl && self.dt_ctrl <= self.dt_sensor) {
            return Err(SimError::PeriodOrder {
                dt_plant: self.dt_plant,
                dt_ctrl: self.dt_ctrl,
                dt_sensor: self.dt_sensor,
            });
        }
        whole_ratio("dt_ctrl", self.dt_ctrl, self.dt_plant)?;
        whole_ratio("dt_sensor", self.dt_sensor, self.dt_ctrl)?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(SimError::Duration(self.duration));
        }
        Ok(())
    }

    /// Plant substeps per control tick.
    pub fn substeps(&self) -> u32 {
        (self.dt_ctrl / self.dt_plant).round() as u32
    }

    /// Control ticks per sensor sample.
    pub fn sensor_every(&self) -> u64 {
        (self.dt_sensor / self.dt_ctrl).round() as u64
    }

    pub fn ticks(&self) -> u64 {
        (self.duration / self.dt_ctrl).round() as u64
    }
}

/// Encoder construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// Opaque sectors per screw revolution.
    pub segments: u32,
    /// Counts lost per reversal, per m/s of approach speed.
    pub kappa: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            segments: 4,
            kappa: 12.0,
        }
    }
}

/// Power-gate parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    /// Error band (m).
    pub band_m: f64,
    /// Dwell inside the band before the drive is switched off (s).
    pub delay_s: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            band_m: 1e-3,
            delay_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigMode {
    /// Closed-loop tracking of the setpoint.
    Track,
    /// Driving open loop into the lower limit switch.
    Homing,
}

/// Output of one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    /// Voltage applied over the tick (V).
    pub va: f64,
    pub pwm_on: bool,
    /// Substeps that ended pinned at a travel limit.
    pub limit_hits: u32,
    /// Homing finished during this tick.
    pub homed: bool,
}

/// One lead-screw axis with its encoder and controller.
#[derive(Debug, Clone)]
pub struct AxisRig {
    pub params: AxisParams,
    pub dc: DerivedConstants,
    pub gains: PiGains,
    pub state: PlantState,
    pub ctrl: ControllerState,
    pub encoder: EncoderModel,
    /// Encoder reading held between sensor samples (m).
    pub sensed: f64,
    pub mode: RigMode,
    gate: GateConfig,
    substeps: u32,
    dt_plant: f64,
    dt_ctrl: f64,
    sensor_every: u64,
    tick: u64,
}

impl AxisRig {
    /// Builds an axis homed at `travel_min` whose carrier has been moved
    /// without loss to `start_pos`.
    pub fn new(
        params: AxisParams,
        gains: PiGains,
        gate: GateConfig,
        encoder: EncoderConfig,
        sim: &SimConfig,
        start_pos: f64,
    ) -> Result<Self, SimError> {
        params.validate()?;
        gains.validate()?;
        sim.validate()?;
        let ctrl = ControllerState::new(gate.band_m, gate.delay_s);
        ctrl.validate()?;
        let dc = derive_constants(&params)?;
        let start_pos = start_pos.clamp(params.travel_min, params.travel_max);
        let encoder = EncoderModel::homed_then_moved(
            params.encoder_resolution(encoder.segments),
            encoder.kappa,
            params.travel_min,
            start_pos,
        );
        Ok(AxisRig {
            dc,
            gains,
            state: PlantState::at_rest(start_pos),
            ctrl,
            sensed: encoder.measured(),
            encoder,
            mode: RigMode::Track,
            gate,
            substeps: sim.substeps(),
            dt_plant: sim.dt_plant,
            dt_ctrl: sim.dt_ctrl,
            sensor_every: sim.sensor_every(),
            tick: 0,
            params,
        })
    }

    pub fn ticks_run(&self) -> u64 {
        self.tick
    }

    /// Difference between what the controller sees and the truth (m).
    pub fn drift(&self) -> f64 {
        self.encoder.measured() - self.state.pos
    }

    /// Starts driving the carrier into the lower limit switch. Tracking
    /// resumes once the encoder has been re-homed there.
    pub fn start_homing(&mut self) {
        self.mode = RigMode::Homing;
    }

    fn sample_sensor(&mut self) {
        self.encoder = encoder_update(&self.encoder, self.state.pos, self.state.vel);
        self.sensed = self.encoder.measured();
    }

    /// Samples the sensor if due and computes the drive for this tick.
    pub fn control(&mut self, setpoint: f64) -> (f64, bool) {
        if self.tick.is_multiple_of(self.sensor_every) {
            self.sample_sensor();
        }
        match self.mode {
            RigMode::Track => {
                let e = setpoint - self.sensed;
                self.ctrl = power_gate_update(&self.ctrl, e, self.dt_ctrl);
                let (va, c) = pi_update(&self.ctrl, &self.gains, setpoint, self.sensed, self.dt_ctrl);
                self.ctrl = c;
                (va, self.ctrl.pwm_on)
            }
            RigMode::Homing => (-self.gains.v_sat, true),
        }
    }

    /// Integrates the plant over one control period under `va`.
    pub fn advance(&mut self, va: f64, pwm_on: bool) -> TickOutput {
        self.tick += 1;
        let mut limit_hits = 0;
        for _ in 0..self.substeps {
            let s = advance_plant(&self.params, &self.dc, &self.state, va, self.dt_plant);
            self.state = s.state;
            limit_hits += u32::from(s.hit_limit);
        }
        let mut homed = false;
        if self.mode == RigMode::Homing && self.state.pos <= self.params.travel_min && self.state.vel == 0.0 {
            self.encoder = home(&self.encoder, self.params.travel_min);
            self.sensed = self.encoder.measured();
            self.ctrl = ControllerState::new(self.gate.band_m, self.gate.delay_s);
            self.mode = RigMode::Track;
            homed = true;
        }
        TickOutput {
            va,
            pwm_on,
            limit_hits,
            homed,
        }
    }

    /// One full control period toward `setpoint`.
    pub fn step(&mut self, setpoint: f64) -> TickOutput {
        let (va, pwm_on) = self.control(setpoint);
        self.advance(va, pwm_on)
    }

    fn row(&self, t: f64, setpoint: f64, va: f64, pwm_on: bool) -> TraceRow {
        TraceRow {
            t,
            setpoint,
            true_pos: self.state.pos,
            measured: self.sensed,
            va,
            pwm_on,
            sector: self.encoder.sector(),
        }
    }
}

/// Runs every rig against `signal` for `sim.duration`.
///
/// Each control tick the reference is sampled and sent through `channel`;
/// the latest delivered value is the setpoint. Until the first delivery the
/// setpoint is the reference's resting value. Rows record the state at the start of
/// each tick together with the voltage held over it.
pub fn run_closed_loop(
    rigs: &mut [AxisRig],
    signal: &Signal,
    sim: &SimConfig,
    channel: &mut LatencyChannel<f64>,
) -> Trace {
    let n = sim.ticks();
    let mut axes: Vec<AxisTrace> = rigs.iter().map(|r| AxisTrace::new(r.params.name)).collect();
    for a in &mut axes {
        a.rows.reserve(n as usize);
    }
    let mut setpoint = signal.offset;
    for k in 0..n {
        let t = k as f64 * sim.dt_ctrl;
        let now_ms = t * 1e3;
        channel.send(signal.value(t), now_ms);
        if let Some(d) = channel.poll(now_ms).pop() {
            setpoint = d.msg;
        }
        for (rig, axis) in rigs.iter_mut().zip(axes.iter_mut()) {
            let (va, pwm_on) = rig.control(setpoint);
            axis.rows.push(rig.row(t, setpoint, va, pwm_on));
            let out = rig.advance(va, pwm_on);
            axis.limit_hits += u64::from(out.limit_hits);
        }
    }
    Trace {
        dt_ctrl: sim.dt_ctrl,
        axes,
        theta: Vec::new(),
        latency: LatencyStats {
            sent: channel.sent(),
            delivered: channel.delivered(),
            max_delay_ms: channel.max_delay_ms(),
            violation: channel.violation(),
        },
    }
}
