//! The simulated arm as the service drives it: three lead-screw axes, the
//! roll stepper and the command latency channel, advanced one control tick
//! at a time.

use telearm_core::config::{ConfigError, ExperimentConfig};
use telearm_core::plant::{stepper_update, AxisName, StepperState};
use telearm_core::simkit::{AxisRig, LatencyChannel, LatencyConfig, RigMode, LATENCY_LIMIT_MS};

use crate::wire::{Axes, AxisState, AxisValues, ClientMsg, Hello, LatencyState, Range, Role, State, Target, Workspace};

/// State broadcast rate (Hz).
pub const STATE_HZ: f64 = 50.0;

const M_TO_MM: f64 = 1000.0;

#[derive(Debug, Clone)]
struct Axis {
    rig: AxisRig,
    setpoint: f64,
    clamped: bool,
    va: f64,
    pwm: bool,
}

impl Axis {
    fn snapshot(&self) -> AxisState {
        AxisState {
            set_mm: self.setpoint * M_TO_MM,
            meas_mm: self.rig.sensed * M_TO_MM,
            true_mm: self.rig.state.pos * M_TO_MM,
            va_v: self.va,
            pwm: self.pwm,
            drift_mm: self.rig.drift() * M_TO_MM,
            clamped: self.clamped,
            homing: self.rig.mode == RigMode::Homing,
        }
    }
}

/// Arm state owned by the tick loop.
#[derive(Debug)]
pub struct ArmSim {
    axes: [Axis; 3],
    stepper: StepperState,
    theta_set: f64,
    channel: LatencyChannel<Target>,
    dt_ctrl: f64,
    ticks: u64,
    last_cmd_ms: Option<f64>,
    cmd_violation: bool,
}

impl ArmSim {
    /// Builds the arm with every carrier homed and resting at its lower
    /// limit. Target latency starts at `latency`.
    pub fn new(cfg: &ExperimentConfig, latency: LatencyConfig) -> Result<Self, ConfigError> {
        let axis = |name| -> Result<Axis, ConfigError> {
            let start = cfg.axis(name)?.travel_min;
            Ok(Axis {
                rig: cfg.build_rig(name, start)?,
                setpoint: start,
                clamped: false,
                va: 0.0,
                pwm: false,
            })
        };
        Ok(ArmSim {
            axes: [axis(AxisName::X)?, axis(AxisName::Y)?, axis(AxisName::Z)?],
            stepper: StepperState::new(cfg.stepper.step_deg, cfg.stepper.step_hz),
            theta_set: 0.0,
            channel: LatencyChannel::new(latency, cfg.sim.seed),
            dt_ctrl: cfg.sim.dt_ctrl,
            ticks: 0,
            last_cmd_ms: None,
            cmd_violation: false,
        })
    }

    /// Simulation clock (ms).
    pub fn now_ms(&self) -> f64 {
        self.ticks as f64 * self.dt_ctrl * 1000.0
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn dt_ctrl(&self) -> f64 {
        self.dt_ctrl
    }

    pub fn latency(&self) -> LatencyConfig {
        self.channel.config()
    }

    pub fn rig(&self, name: AxisName) -> &AxisRig {
        &self.axes[index(name)].rig
    }

    pub fn theta_deg(&self) -> f64 {
        self.stepper.theta()
    }

    /// Accepts an operator command at the current simulation time. Targets
    /// enter the latency channel; calibration and latency changes act at once.
    pub fn submit(&mut self, msg: ClientMsg) {
        match msg {
            ClientMsg::Target(t) => {
                let now = self.now_ms();
                self.channel.send(t, now);
            }
            ClientMsg::Calibrate(_) => {
                for a in &mut self.axes {
                    a.rig.start_homing();
                }
            }
            ClientMsg::SetLatency(s) => self.channel.set_config(LatencyConfig {
                base_ms: s.base_ms,
                jitter_ms: s.jitter_ms,
            }),
        }
    }

    fn apply(&mut self, t: &Target) {
        for (a, v) in self.axes.iter_mut().zip([t.x_mm, t.y_mm, t.z_mm]) {
            if let Some(mm) = v {
                let want = mm / M_TO_MM;
                let p = &a.rig.params;
                a.setpoint = want.clamp(p.travel_min, p.travel_max);
                a.clamped = a.setpoint != want;
            }
        }
        if let Some(th) = t.theta_deg {
            self.theta_set = th;
        }
    }

    /// Advances one control period.
    pub fn tick(&mut self) {
        let now = self.now_ms();
        let delivered = self.channel.poll(now);
        let mut probe = None;
        if !delivered.is_empty() {
            let before: Vec<(Axis, f64)> = self.axes.iter().map(|a| (a.clone(), a.setpoint)).collect();
            let theta_before = self.stepper.quantize(self.theta_set);
            for d in &delivered {
                self.apply(&d.msg);
            }
            let sent = delivered.last().map_or(now, |d| d.sent_ms);
            probe = Some((before, theta_before, sent));
        }

        let mut changed = false;
        let probing = probe.as_ref();
        for (i, a) in self.axes.iter_mut().enumerate() {
            let (va, pwm) = a.rig.control(a.setpoint);
            if let Some((before, _, _)) = probing {
                let (mut old, old_set) = before[i].clone();
                let (old_va, _) = old.rig.control(old_set);
                changed |= old_va != va;
            }
            a.va = va;
            a.pwm = pwm;
            a.rig.advance(va, pwm);
        }
        if let Some((_, theta_before, sent)) = probe {
            changed |= self.stepper.quantize(self.theta_set) != theta_before;
            if changed {
                let lat = now - sent;
                self.last_cmd_ms = Some(lat);
                self.cmd_violation |= lat > LATENCY_LIMIT_MS;
            }
        }
        self.stepper = stepper_update(&self.stepper, self.theta_set, self.dt_ctrl);
        self.ticks += 1;
    }

    /// Immutable view of the arm at the current tick.
    pub fn snapshot(&self) -> State {
        let [x, y, z] = &self.axes;
        let cfg = self.channel.config();
        State {
            t_ms: self.now_ms(),
            x_mm: x.rig.sensed * M_TO_MM,
            y_mm: y.rig.sensed * M_TO_MM,
            z_mm: z.rig.sensed * M_TO_MM,
            theta_deg: self.stepper.theta(),
            theta_set_deg: self.theta_set,
            clamped: self.axes.iter().any(|a| a.clamped),
            axes: Axes {
                x: x.snapshot(),
                y: y.snapshot(),
                z: z.snapshot(),
            },
            latency: LatencyState {
                base_ms: cfg.base_ms,
                jitter_ms: cfg.jitter_ms,
                max_delay_ms: self.channel.max_delay_ms(),
                last_cmd_ms: self.last_cmd_ms,
                violation: self.channel.violation() || self.cmd_violation,
            },
        }
    }

    /// Greeting sent to a new session.
    pub fn hello(&self, role: Role) -> Hello {
        let range = |a: &Axis| Range {
            min_mm: a.rig.params.travel_min * M_TO_MM,
            max_mm: a.rig.params.travel_max * M_TO_MM,
        };
        let [x, y, z] = &self.axes;
        Hello {
            role,
            tick_hz: 1.0 / self.dt_ctrl,
            state_hz: STATE_HZ,
            workspace: Workspace {
                x: range(x),
                y: range(y),
                z: range(z),
            },
            theta_step_deg: self.stepper.step_size,
            encoder_resolution_mm: AxisValues {
                x: x.rig.encoder.resolution * M_TO_MM,
                y: y.rig.encoder.resolution * M_TO_MM,
                z: z.rig.encoder.resolution * M_TO_MM,
            },
            latency_limit_ms: LATENCY_LIMIT_MS,
        }
    }

    /// Control ticks per state snapshot.
    pub fn ticks_per_state(&self) -> u64 {
        ((1.0 / (STATE_HZ * self.dt_ctrl)).round() as u64).max(1)
    }
}

fn index(name: AxisName) -> usize {
    match name {
        AxisName::X => 0,
        AxisName::Y => 1,
        AxisName::Z => 2,
    }
}
