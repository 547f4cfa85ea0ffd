//! Reference waveforms.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Step,
    Ramp,
    Sine,
    Tri,
}

impl SignalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::Step => "step",
            SignalKind::Ramp => "ramp",
            SignalKind::Sine => "sine",
            SignalKind::Tri => "tri",
        }
    }

    pub fn is_periodic(self) -> bool {
        matches!(self, SignalKind::Sine | SignalKind::Tri)
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "step" => Ok(SignalKind::Step),
            "ramp" => Ok(SignalKind::Ramp),
            "sine" => Ok(SignalKind::Sine),
            "tri" => Ok(SignalKind::Tri),
            other => Err(format!("unknown signal kind `{other}`")),
        }
    }
}

/// A setpoint waveform anchored at `offset` and starting at `onset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signal {
    pub kind: SignalKind,
    /// Step height or wave amplitude (m).
    pub amplitude: f64,
    /// Wave frequency (Hz).
    pub freq: f64,
    /// Ramp slope (m/s).
    pub slope: f64,
    /// Value before onset and the wave's centre line (m).
    pub offset: f64,
    /// Start time (s).
    pub onset: f64,
    /// Time after which the reference returns to `offset` and holds (s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
}

impl Signal {
    pub fn step(amplitude: f64) -> Self {
        Signal {
            kind: SignalKind::Step,
            amplitude,
            freq: 0.0,
            slope: 0.0,
            offset: 0.0,
            onset: 0.0,
            stop: None,
        }
    }

    pub fn sine(amplitude: f64, freq: f64) -> Self {
        Signal {
            kind: SignalKind::Sine,
            freq,
            ..Signal::step(amplitude)
        }
    }

    pub fn tri(amplitude: f64, freq: f64) -> Self {
        Signal {
            kind: SignalKind::Tri,
            freq,
            ..Signal::step(amplitude)
        }
    }

    pub fn ramp(slope: f64) -> Self {
        Signal {
            kind: SignalKind::Ramp,
            slope,
            ..Signal::step(0.0)
        }
    }

    pub fn with_offset(self, offset: f64) -> Self {
        Signal { offset, ..self }
    }

    pub fn with_onset(self, onset: f64) -> Self {
        Signal { onset, ..self }
    }

    pub fn with_stop(self, stop: f64) -> Self {
        Signal {
            stop: Some(stop),
            ..self
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        if self.stop.is_some_and(|stop| t >= stop) {
            return self.offset;
        }
        self.offset + gen_signal(self.kind, self.amplitude, self.freq, self.slope, t - self.onset)
    }

    /// Setpoint path length over `[0, duration]`, excluding the return to
    /// `offset` at `stop`.
    pub fn path_length(&self, duration: f64) -> f64 {
        let duration = self.stop.map_or(duration, |stop| duration.min(stop));
        match self.kind {
            SignalKind::Sine | SignalKind::Tri => {
                4.0 * self.amplitude.abs() * self.freq * (duration - self.onset).max(0.0)
            }
            SignalKind::Ramp => self.slope.abs() * (duration - self.onset).max(0.0),
            SignalKind::Step => self.amplitude.abs(),
        }
    }
}

/// Unit triangle wave with period 1, range [−1, 1], zero at the origin and a
/// peak at the quarter period.
pub fn unit_triangle(phase: f64) -> f64 {
    let p = phase.rem_euclid(1.0);
    if p < 0.25 {
        4.0 * p
    } else if p < 0.75 {
        2.0 - 4.0 * p
    } else {
        4.0 * p - 4.0
    }
}

/// Waveform value at time `t` since onset. Everything is zero before onset.
pub fn gen_signal(kind: SignalKind, amplitude: f64, freq: f64, slope: f64, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    match kind {
        SignalKind::Step => amplitude,
        SignalKind::Ramp => slope * t,
        SignalKind::Sine => amplitude * (2.0 * PI * freq * t).sin(),
        SignalKind::Tri => amplitude * unit_triangle(freq * t),
    }
}
