//! Canned experiments: single runs, the endurance presets, and the Table 1 /
//! Table 2 reproductions.

use std::fmt::{self, Write as _};
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig};
use crate::plant::AxisName;
use crate::simkit::{
    compute_metrics, run_closed_loop, LatencyChannel, Metrics, Signal, SignalKind, SignalMeta, SimConfig, Trace,
};

pub const WAVE_AMPLITUDE_M: f64 = 0.1;
pub const SINE_FREQ_HZ: f64 = 0.25;
pub const TRI_FREQ_HZ: f64 = 0.375;
pub const SINE_ENDURANCE_S: f64 = 68.0;
pub const TRI_ENDURANCE_S: f64 = 41.0;
/// Hold at the start point after an endurance waveform before the offset
/// error is read (s).
pub const ENDURANCE_SETTLE_S: f64 = 3.0;
/// Default ramp slope when the config leaves it at zero (m/s).
pub const DEFAULT_RAMP_SLOPE: f64 = 0.05;
/// Duration of the sinusoidal run used for deadzone timing (s).
pub const DEADZONE_RUN_S: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Step,
    Ramp,
    Sine,
    Tri,
    Endurance,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Step => "step",
            ExperimentKind::Ramp => "ramp",
            ExperimentKind::Sine => "sine",
            ExperimentKind::Tri => "tri",
            ExperimentKind::Endurance => "endurance",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "step" => Ok(ExperimentKind::Step),
            "ramp" => Ok(ExperimentKind::Ramp),
            "sine" => Ok(ExperimentKind::Sine),
            "tri" => Ok(ExperimentKind::Tri),
            "endurance" => Ok(ExperimentKind::Endurance),
            other => Err(format!("unknown experiment `{other}`")),
        }
    }
}

/// One requested run. Unset fields fall back to the config or the presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRequest {
    pub kind: ExperimentKind,
    pub axis: AxisName,
    pub amplitude: Option<f64>,
    pub freq: Option<f64>,
    pub duration: Option<f64>,
    /// Waveform of an endurance run: sine or tri (default tri).
    pub waveform: Option<SignalKind>,
}

impl RunRequest {
    pub fn new(kind: ExperimentKind, axis: AxisName) -> Self {
        RunRequest {
            kind,
            axis,
            amplitude: None,
            freq: None,
            duration: None,
            waveform: None,
        }
    }
}

fn mid_travel(cfg: &ExperimentConfig, axis: AxisName) -> Result<f64, ConfigError> {
    let p = cfg.axis(axis)?;
    Ok(0.5 * (p.travel_min + p.travel_max))
}

/// Resolves a request into a reference and a run length.
///
/// Steps and ramps start from `experiment.offset`. Waves are centred at
/// mid-travel so a 0.1 m amplitude stays clear of the stops. Endurance runs
/// return to the centre at the end and hold there for
/// [`ENDURANCE_SETTLE_S`] before the offset error is read.
pub fn resolve_signal(cfg: &ExperimentConfig, req: &RunRequest) -> Result<(Signal, f64), ConfigError> {
    let base = cfg.experiment;
    let duration = req.duration.unwrap_or(cfg.sim.duration);
    let wave_freq = |kind: SignalKind| {
        req.freq.unwrap_or(if base.kind == kind && base.freq > 0.0 {
            base.freq
        } else if kind == SignalKind::Sine {
            SINE_FREQ_HZ
        } else {
            TRI_FREQ_HZ
        })
    };
    let wave_amp = || {
        req.amplitude
            .unwrap_or(if base.kind.is_periodic() && base.amplitude != 0.0 {
                base.amplitude
            } else {
                WAVE_AMPLITUDE_M
            })
    };
    let centre = mid_travel(cfg, req.axis)?;
    let (signal, duration) = match req.kind {
        ExperimentKind::Step => {
            let amp = req.amplitude.unwrap_or(if base.kind == SignalKind::Step {
                base.amplitude
            } else {
                WAVE_AMPLITUDE_M
            });
            (
                Signal::step(amp).with_offset(base.offset).with_onset(base.onset),
                duration,
            )
        }
        ExperimentKind::Ramp => {
            let slope = if base.slope != 0.0 {
                base.slope
            } else {
                DEFAULT_RAMP_SLOPE
            };
            (
                Signal::ramp(slope).with_offset(base.offset).with_onset(base.onset),
                duration,
            )
        }
        ExperimentKind::Sine => (
            Signal::sine(wave_amp(), wave_freq(SignalKind::Sine)).with_offset(centre),
            duration,
        ),
        ExperimentKind::Tri => (
            Signal::tri(wave_amp(), wave_freq(SignalKind::Tri)).with_offset(centre),
            duration,
        ),
        ExperimentKind::Endurance => {
            let waveform = req.waveform.unwrap_or(SignalKind::Tri);
            let (freq, length) = match waveform {
                SignalKind::Sine => (SINE_FREQ_HZ, SINE_ENDURANCE_S),
                SignalKind::Tri => (TRI_FREQ_HZ, TRI_ENDURANCE_S),
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "endurance waveform must be sine or tri, got {other}"
                    )))
                }
            };
            let length = req.duration.unwrap_or(length);
            let amp = req.amplitude.unwrap_or(WAVE_AMPLITUDE_M);
            let freq = req.freq.unwrap_or(freq);
            let signal = Signal {
                kind: waveform,
                amplitude: amp,
                freq,
                slope: 0.0,
                offset: centre,
                onset: 0.0,
                stop: Some(length),
            };
            (signal, length + ENDURANCE_SETTLE_S)
        }
    };
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(ConfigError::Invalid(format!("duration must be > 0, got {duration}")));
    }
    Ok((signal, duration))
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub request: RunRequest,
    pub signal: Signal,
    pub sim: SimConfig,
    pub trace: Trace,
    pub metrics: Metrics,
    /// Encoder reading minus true position at the end (mm).
    pub drift_mm: f64,
    /// Counts lost to reversals over the run.
    pub lost_counts: u64,
    /// Encoder resolution of the axis (mm).
    pub resolution_mm: f64,
}

impl RunReport {
    /// Spec violations raised by the run.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.trace.latency.violation {
            out.push(format!(
                "command latency {:.1} ms exceeds the 500 ms operator limit",
                self.trace.latency.max_delay_ms
            ));
        }
        out
    }

    fn axis_trace(&self) -> &crate::simkit::AxisTrace {
        &self.trace.axes[0]
    }

    /// Writes the flat `key = value` metrics document, including the
    /// resolved config and seed.
    pub fn write_metrics<W: Write>(&self, cfg: &ExperimentConfig, mut w: W) -> io::Result<()> {
        let m = &self.metrics;
        let s = &self.signal;
        writeln!(w, "axis = \"{}\"", self.request.axis)?;
        writeln!(w, "experiment = \"{}\"", self.request.kind)?;
        writeln!(w, "seed = {}", self.sim.seed)?;
        writeln!(w, "signal.kind = \"{}\"", s.kind)?;
        writeln!(w, "signal.amplitude_m = {}", s.amplitude)?;
        writeln!(w, "signal.freq_hz = {}", s.freq)?;
        writeln!(w, "signal.slope_m_per_s = {}", s.slope)?;
        writeln!(w, "signal.offset_m = {}", s.offset)?;
        writeln!(w, "signal.onset_s = {}", s.onset)?;
        if let Some(stop) = s.stop {
            writeln!(w, "signal.stop_s = {stop}")?;
        }
        writeln!(w, "duration_s = {}", self.sim.duration)?;
        for (key, v) in [
            ("rise_time_s", m.rise_time_s),
            ("overshoot_pct", m.overshoot_pct),
            ("settle2_s", m.settle2_s),
            ("ss_error_mm", m.ss_error_mm),
            ("deadzone_time_s", m.deadzone_time_s),
        ] {
            if let Some(v) = v {
                writeln!(w, "{key} = {v:.6}")?;
            }
        }
        writeln!(w, "offset_error_mm = {:.6}", m.offset_error_mm)?;
        writeln!(w, "displacement_m = {:.6}", m.displacement_m)?;
        writeln!(w, "error_pct = {:.6}", m.error_pct)?;
        writeln!(w, "drift_mm = {:.6}", self.drift_mm)?;
        writeln!(w, "encoder_resolution_mm = {:.6}", self.resolution_mm)?;
        writeln!(w, "lost_counts = {}", self.lost_counts)?;
        writeln!(w, "limit_hits = {}", self.axis_trace().limit_hits)?;
        let l = &self.trace.latency;
        writeln!(w, "latency.sent = {}", l.sent)?;
        writeln!(w, "latency.delivered = {}", l.delivered)?;
        writeln!(w, "latency.max_delay_ms = {:.6}", l.max_delay_ms)?;
        writeln!(w, "latency.violation = {}", l.violation)?;
        let flat = cfg
            .flatten()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        for (k, v) in flat {
            writeln!(w, "{k} = {v}")?;
        }
        Ok(())
    }

    pub fn metrics_string(&self, cfg: &ExperimentConfig) -> String {
        let mut buf = Vec::new();
        self.write_metrics(cfg, &mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("metrics are UTF-8")
    }
}

/// Runs one experiment on one axis.
pub fn run_experiment(cfg: &ExperimentConfig, req: &RunRequest) -> Result<RunReport, ConfigError> {
    let (signal, duration) = resolve_signal(cfg, req)?;
    let sim = SimConfig { duration, ..cfg.sim };
    sim.validate()?;
    let mut rig = cfg.build_rig(req.axis, signal.offset)?;
    let mut channel = LatencyChannel::new(cfg.latency, sim.seed);
    let trace = run_closed_loop(std::slice::from_mut(&mut rig), &signal, &sim, &mut channel);
    let metrics = compute_metrics(&trace.axes[0].rows, &SignalMeta::from(&signal));
    Ok(RunReport {
        request: *req,
        signal,
        sim,
        metrics,
        drift_mm: rig.drift() * 1e3,
        lost_counts: rig.encoder.lost_counts,
        resolution_mm: rig.encoder.resolution * 1e3,
        trace,
    })
}

/// Published figure, simulated figure and the acceptance band for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub label: &'static str,
    pub axis: AxisName,
    pub published: f64,
    pub simulated: Option<f64>,
    pub band: &'static str,
    pub pass: bool,
}

impl Cell {
    fn new(
        label: &'static str,
        axis: AxisName,
        published: f64,
        simulated: Option<f64>,
        band: &'static str,
        ok: fn(f64) -> bool,
    ) -> Self {
        Cell {
            label,
            axis,
            published,
            simulated,
            band,
            pass: simulated.is_some_and(ok),
        }
    }
}

/// Side-by-side comparison with the published figures.
#[derive(Debug, Clone, PartialEq)]
pub struct TableReport {
    pub title: &'static str,
    pub cells: Vec<Cell>,
    /// Cross-axis checks, e.g. waveform ordering.
    pub checks: Vec<(String, bool)>,
}

impl TableReport {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass) && self.checks.iter().all(|c| c.1)
    }

    pub fn cell(&self, label: &str, axis: AxisName) -> Option<&Cell> {
        self.cells.iter().find(|c| c.label == label && c.axis == axis)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(
            s,
            "{:<24} {:<4} {:>10} {:>12}  {:<18} result",
            "quantity", "axis", "published", "simulated", "band"
        );
        for c in &self.cells {
            let sim = c.simulated.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:<24} {:<4} {:>10} {:>12}  {:<18} {}",
                c.label,
                c.axis,
                c.published,
                sim,
                c.band,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        for (what, ok) in &self.checks {
            let _ = writeln!(s, "{what}: {}", if *ok { "PASS" } else { "FAIL" });
        }
        s
    }
}

const TABLE1_PUBLISHED: [(AxisName, [f64; 5]); 3] = [
    // ss error mm, rise s, overshoot %, settle s, deadzone s
    (AxisName::X, [0.9, 0.35, 16.0, 1.31, 0.33]),
    (AxisName::Y, [0.313, 0.28, 16.3, 0.95, 0.35]),
    (AxisName::Z, [0.9, 0.41, 11.9, 1.21, 0.33]),
];

const TABLE2_PUBLISHED: [(AxisName, [f64; 6]); 3] = [
    // sine: offset mm, displacement m, error %; tri: offset mm, displacement m, error %
    (AxisName::X, [0.938, 6.8, 0.0138, 11.6, 4.4, 0.264]),
    (AxisName::Y, [3.73, 6.8, 0.0549, 7.34, 4.3, 0.171]),
    (AxisName::Z, [2.5, 6.8, 0.0368, 24.1, 4.4, 0.548]),
];

fn selected(axis: Option<AxisName>) -> impl Iterator<Item = AxisName> {
    AxisName::ALL.into_iter().filter(move |a| axis.is_none_or(|s| s == *a))
}

/// Step response figures per axis (0.1 m step) and deadzone time from a
/// 0.25 Hz sinusoid.
pub fn reproduce_table1(cfg: &ExperimentConfig, axis: Option<AxisName>) -> Result<TableReport, ConfigError> {
    let mut cells = Vec::new();
    let mut rises = Vec::new();
    for name in selected(axis) {
        let published = TABLE1_PUBLISHED
            .iter()
            .find(|p| p.0 == name)
            .expect("all axes listed")
            .1;
        let mut step = RunRequest::new(ExperimentKind::Step, name);
        step.amplitude = Some(WAVE_AMPLITUDE_M);
        let step = run_experiment(cfg, &step)?.metrics;
        let mut sine = RunRequest::new(ExperimentKind::Sine, name);
        sine.duration = Some(DEADZONE_RUN_S);
        sine.freq = Some(SINE_FREQ_HZ);
        sine.amplitude = Some(WAVE_AMPLITUDE_M);
        let sine = run_experiment(cfg, &sine)?.metrics;
        cells.push(Cell::new(
            "steady-state error (mm)",
            name,
            published[0],
            step.ss_error_mm,
            "< 1",
            |v| v < 1.0,
        ));
        cells.push(Cell::new(
            "rise time (s)",
            name,
            published[1],
            step.rise_time_s,
            "< 0.5",
            |v| v < 0.5,
        ));
        cells.push(Cell::new(
            "overshoot (%)",
            name,
            published[2],
            step.overshoot_pct,
            "(0, 25)",
            |v| v > 0.0 && v < 25.0,
        ));
        cells.push(Cell::new(
            "2% settling time (s)",
            name,
            published[3],
            step.settle2_s,
            "< 1.4",
            |v| v < 1.4,
        ));
        cells.push(Cell::new(
            "deadzone time (s)",
            name,
            published[4],
            sine.deadzone_time_s,
            "[0.2, 0.5]",
            |v| (0.2..=0.5).contains(&v),
        ));
        if let Some(r) = step.rise_time_s {
            rises.push((name, r));
        }
    }
    let mut checks = Vec::new();
    if axis.is_none_or(|a| a == AxisName::Y) && rises.len() == 3 {
        let y = rises.iter().find(|r| r.0 == AxisName::Y).expect("y present").1;
        let fastest = rises.iter().all(|r| r.0 == AxisName::Y || r.1 > y);
        checks.push(("y-axis rise time is the smallest".to_string(), fastest));
    } else if axis == Some(AxisName::Y) {
        let all = reproduce_table1(cfg, None)?;
        checks = all.checks;
    }
    Ok(TableReport {
        title: "Table 1: step and deadzone performance",
        cells,
        checks,
    })
}

/// Endurance drift per axis for the two Table 2 waveforms.
pub fn reproduce_table2(cfg: &ExperimentConfig, axis: Option<AxisName>) -> Result<TableReport, ConfigError> {
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    for name in selected(axis) {
        let published = TABLE2_PUBLISHED
            .iter()
            .find(|p| p.0 == name)
            .expect("all axes listed")
            .1;
        let mut runs = Vec::new();
        for waveform in [SignalKind::Sine, SignalKind::Tri] {
            let mut req = RunRequest::new(ExperimentKind::Endurance, name);
            req.waveform = Some(waveform);
            let report = run_experiment(cfg, &req)?;
            runs.push(report.metrics);
        }
        let (sine, tri) = (runs[0], runs[1]);
        cells.push(Cell::new(
            "sine offset error (mm)",
            name,
            published[0],
            Some(sine.offset_error_mm),
            "reported",
            |_| true,
        ));
        cells.push(Cell::new(
            "sine displacement (m)",
            name,
            published[1],
            Some(sine.displacement_m),
            "6.8 ±5%",
            |v| (v - 6.8).abs() <= 0.05 * 6.8,
        ));
        cells.push(Cell::new(
            "sine error (%)",
            name,
            published[2],
            Some(sine.error_pct),
            "reported",
            |_| true,
        ));
        let tri_band: fn(f64) -> bool = if name == AxisName::Z {
            |v| (5.0..=25.0).contains(&v)
        } else {
            |_| true
        };
        cells.push(Cell::new(
            "tri offset error (mm)",
            name,
            published[3],
            Some(tri.offset_error_mm),
            if name == AxisName::Z { "[5, 25]" } else { "reported" },
            tri_band,
        ));
        cells.push(Cell::new(
            "tri displacement (m)",
            name,
            published[4],
            Some(tri.displacement_m),
            "4.4 ±5%",
            |v| (v - 4.4).abs() <= 0.05 * 4.4,
        ));
        cells.push(Cell::new(
            "tri error (%)",
            name,
            published[5],
            Some(tri.error_pct),
            "reported",
            |_| true,
        ));
        checks.push((
            format!("{name}: tri offset error > sine offset error"),
            tri.offset_error_mm > sine.offset_error_mm,
        ));
    }
    Ok(TableReport {
        title: "Table 2: endurance error accumulation",
        cells,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parse() {
        assert_eq!(
            "endurance".parse::<ExperimentKind>().unwrap(),
            ExperimentKind::Endurance
        );
        assert!("walk".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn endurance_presets() {
        let cfg = ExperimentConfig::default_config();
        let mut req = RunRequest::new(ExperimentKind::Endurance, AxisName::Z);
        let (s, d) = resolve_signal(&cfg, &req).unwrap();
        assert_eq!(
            (s.kind, s.freq, s.amplitude, s.stop),
            (SignalKind::Tri, 0.375, 0.1, Some(41.0))
        );
        assert_eq!(s.offset, 0.225);
        assert_eq!(d, 44.0);
        req.waveform = Some(SignalKind::Sine);
        let (s, d) = resolve_signal(&cfg, &req).unwrap();
        assert_eq!((s.kind, s.freq, s.stop), (SignalKind::Sine, 0.25, Some(68.0)));
        assert_eq!(d, 71.0);
        req.waveform = Some(SignalKind::Step);
        assert!(resolve_signal(&cfg, &req).is_err());
    }

    #[test]
    fn flags_override_config() {
        let cfg = ExperimentConfig::default_config();
        let mut req = RunRequest::new(ExperimentKind::Step, AxisName::X);
        req.amplitude = Some(0.05);
        req.duration = Some(1.5);
        let (s, d) = resolve_signal(&cfg, &req).unwrap();
        assert_eq!((s.amplitude, d), (0.05, 1.5));
    }

    #[test]
    fn metrics_document_embeds_config_and_seed() {
        let cfg = ExperimentConfig::default_config();
        let mut req = RunRequest::new(ExperimentKind::Step, AxisName::Z);
        req.duration = Some(0.2);
        let report = run_experiment(&cfg, &req).unwrap();
        let text = report.metrics_string(&cfg);
        assert!(text.contains("seed = 7\n"));
        assert!(text.contains("config.sim.seed = 7\n"));
        assert!(text.contains("config.gains.kp = 55.0\n"));
        assert!(text.contains("latency.violation = false\n"));
        assert!(report.violations().is_empty());
    }
}
