//! Scalar performance figures extracted from one axis trace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::signal::{Signal, SignalKind};
use super::trace::TraceRow;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{metric} needs a step reference, got {kind}")]
    NotAStep { metric: &'static str, kind: SignalKind },
    #[error("step amplitude must be non-zero")]
    ZeroAmplitude,
    #[error("trace has no samples after onset")]
    Empty,
    #[error("response never reached {0} % of the step")]
    NeverReached(u32),
    #[error("response is still outside the 2 % band at the end of the trace")]
    NeverSettled,
    #[error("no encoder motion followed the command")]
    NoMotion,
}

/// What the metrics need to know about the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalMeta {
    pub kind: SignalKind,
    pub onset: f64,
    pub amplitude: f64,
    pub offset: f64,
}

impl From<&Signal> for SignalMeta {
    fn from(s: &Signal) -> Self {
        SignalMeta {
            kind: s.kind,
            onset: s.onset,
            amplitude: s.amplitude,
            offset: s.offset,
        }
    }
}

impl SignalMeta {
    fn require_step(&self, metric: &'static str) -> Result<(), MetricsError> {
        if self.kind != SignalKind::Step {
            return Err(MetricsError::NotAStep {
                metric,
                kind: self.kind,
            });
        }
        if self.amplitude == 0.0 {
            return Err(MetricsError::ZeroAmplitude);
        }
        Ok(())
    }

    fn final_value(&self) -> f64 {
        self.offset + self.amplitude
    }
}

/// Step-response and endurance quantities. Step-only figures are `None` for other
/// references.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub rise_time_s: Option<f64>,
    pub overshoot_pct: Option<f64>,
    pub settle2_s: Option<f64>,
    pub ss_error_mm: Option<f64>,
    pub deadzone_time_s: Option<f64>,
    pub offset_error_mm: f64,
    pub displacement_m: f64,
    pub error_pct: f64,
}

fn after_onset<'a>(rows: &'a [TraceRow], meta: &SignalMeta) -> Result<&'a [TraceRow], MetricsError> {
    let start = rows.partition_point(|r| r.t < meta.onset);
    if start == rows.len() {
        return Err(MetricsError::Empty);
    }
    Ok(&rows[start..])
}

/// Normalised step response: 0 before the step, 1 at the commanded value.
fn normalised(r: &TraceRow, meta: &SignalMeta) -> f64 {
    (r.true_pos - meta.offset) / meta.amplitude
}

/// First time the normalised response reaches `level`, interpolated between
/// samples.
fn first_crossing(rows: &[TraceRow], meta: &SignalMeta, level: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for r in rows {
        let y = normalised(r, meta);
        if y >= level {
            return Some(match prev {
                Some((t0, y0)) if y > y0 => t0 + (level - y0) / (y - y0) * (r.t - t0),
                _ => r.t,
            });
        }
        prev = Some((r.t, y));
    }
    None
}

/// 10 %–90 % rise time (s).
pub fn rise_time(rows: &[TraceRow], meta: &SignalMeta) -> Result<f64, MetricsError> {
    meta.require_step("rise time")?;
    let rows = after_onset(rows, meta)?;
    let t10 = first_crossing(rows, meta, 0.1).ok_or(MetricsError::NeverReached(10))?;
    let t90 = first_crossing(rows, meta, 0.9).ok_or(MetricsError::NeverReached(90))?;
    Ok(t90 - t10)
}

/// Peak excursion past the commanded value as a percentage of the step;
/// zero for an overdamped response.
pub fn overshoot_pct(rows: &[TraceRow], meta: &SignalMeta) -> Result<f64, MetricsError> {
    meta.require_step("overshoot")?;
    let rows = after_onset(rows, meta)?;
    let peak = rows
        .iter()
        .map(|r| normalised(r, meta))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(((peak - 1.0) * 100.0).max(0.0))
}

/// Time from onset after which the response stays within ±2 % of the step
/// around the commanded value (s).
pub fn settle2(rows: &[TraceRow], meta: &SignalMeta) -> Result<f64, MetricsError> {
    meta.require_step("settling time")?;
    let rows = after_onset(rows, meta)?;
    let band = 0.02 * meta.amplitude.abs();
    let target = meta.final_value();
    match rows.iter().rposition(|r| (r.true_pos - target).abs() > band) {
        None => Ok(0.0),
        Some(i) if i + 1 == rows.len() => Err(MetricsError::NeverSettled),
        Some(i) => Ok(rows[i + 1].t - meta.onset),
    }
}

/// Mean |setpoint − true| over the final 20 % of the post-onset trace (mm).
pub fn ss_error_mm(rows: &[TraceRow], meta: &SignalMeta) -> Result<f64, MetricsError> {
    meta.require_step("steady-state error")?;
    let rows = after_onset(rows, meta)?;
    let tail = &rows[rows.len() - (rows.len() / 5).max(1)..];
    let sum: f64 = tail.iter().map(|r| (r.setpoint - r.true_pos).abs()).sum();
    Ok(sum / tail.len() as f64 * 1e3)
}

fn direction(d: f64) -> i8 {
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

/// Indices where the setpoint changes direction, with the new direction.
fn setpoint_reversals(rows: &[TraceRow]) -> Vec<(usize, i8)> {
    let mut out = Vec::new();
    let mut dir = 0i8;
    for i in 1..rows.len() {
        let d = direction(rows[i].setpoint - rows[i - 1].setpoint);
        if d != 0 {
            if dir != 0 && d != dir {
                out.push((i - 1, d));
            }
            dir = d;
        }
    }
    out
}

/// Time from `start` until the encoder first registers an edge in `dir`.
fn first_edge_after(rows: &[TraceRow], start: usize, dir: i8) -> Option<f64> {
    let t0 = rows[start].t;
    rows[start..]
        .windows(2)
        .find(|w| direction((w[1].sector - w[0].sector) as f64) == dir)
        .map(|w| w[1].t - t0)
}

/// Mean delay between a command (step or ramp onset, or a reversal of a
/// periodic reference) and the first encoder edge in the commanded
/// direction (s).
pub fn deadzone_time(rows: &[TraceRow], meta: &SignalMeta) -> Result<f64, MetricsError> {
    let rows = after_onset(rows, meta)?;
    let events: Vec<(usize, i8)> = match meta.kind {
        SignalKind::Step | SignalKind::Ramp => {
            let dir = rows
                .iter()
                .map(|r| direction(r.setpoint - meta.offset))
                .find(|&d| d != 0)
                .ok_or(MetricsError::NoMotion)?;
            vec![(0, dir)]
        }
        SignalKind::Sine | SignalKind::Tri => setpoint_reversals(rows),
    };
    let delays: Vec<f64> = events
        .iter()
        .filter_map(|&(i, dir)| first_edge_after(rows, i, dir))
        .collect();
    if delays.is_empty() {
        return Err(MetricsError::NoMotion);
    }
    Ok(delays.iter().sum::<f64>() / delays.len() as f64)
}

/// Path length travelled by the carrier (m).
pub fn displacement_m(rows: &[TraceRow]) -> f64 {
    rows.windows(2).map(|w| (w[1].true_pos - w[0].true_pos).abs()).sum()
}

/// |true − setpoint| at the end of the trace (mm).
pub fn offset_error_mm(rows: &[TraceRow]) -> f64 {
    rows.last().map_or(0.0, |r| (r.true_pos - r.setpoint).abs() * 1e3)
}

pub fn compute_metrics(rows: &[TraceRow], meta: &SignalMeta) -> Metrics {
    let offset_error_mm = offset_error_mm(rows);
    let displacement_m = displacement_m(rows);
    let error_pct = if displacement_m > 0.0 {
        100.0 * offset_error_mm / (displacement_m * 1e3)
    } else {
        0.0
    };
    Metrics {
        rise_time_s: rise_time(rows, meta).ok(),
        overshoot_pct: overshoot_pct(rows, meta).ok(),
        settle2_s: settle2(rows, meta).ok(),
        ss_error_mm: ss_error_mm(rows, meta).ok(),
        deadzone_time_s: deadzone_time(rows, meta).ok(),
        offset_error_mm,
        displacement_m,
        error_pct,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(t: f64, setpoint: f64, true_pos: f64, sector: i64) -> TraceRow {
        TraceRow {
            t,
            setpoint,
            true_pos,
            measured: true_pos,
            va: 0.0,
            pwm_on: true,
            sector,
        }
    }

    /// Synthetic step response: linear rise over 0.4 s to 110 %, then a
    /// linear fall back to 100 % that leaves the 2 % band between samples.
    fn synthetic_step() -> Vec<TraceRow> {
        (0..=1000)
            .map(|k| {
                let t = k as f64 * 1e-3;
                let y = if t < 0.4 {
                    1.1 * t / 0.4
                } else if t < 0.60063 {
                    1.1 - 0.1 * (t - 0.4) / 0.20063
                } else {
                    1.0
                };
                row(t, 0.1, 0.1 * y, (0.1 * y / 1e-3) as i64)
            })
            .collect()
    }

    fn step_meta() -> SignalMeta {
        SignalMeta {
            kind: SignalKind::Step,
            onset: 0.0,
            amplitude: 0.1,
            offset: 0.0,
        }
    }

    #[test]
    fn hand_computed_step_figures() {
        let rows = synthetic_step();
        let m = step_meta();
        // 10 % at t = 0.4·0.1/1.1, 90 % at t = 0.4·0.9/1.1.
        assert!((rise_time(&rows, &m).unwrap() - 0.4 * 0.8 / 1.1).abs() < 1e-9);
        assert!((overshoot_pct(&rows, &m).unwrap() - 10.0).abs() < 0.05);
        // Enters the 2 % band for good at y = 1.02, t = 0.5605.
        assert!((settle2(&rows, &m).unwrap() - 0.561).abs() < 1e-9);
        assert!(ss_error_mm(&rows, &m).unwrap() < 1e-9);
        assert!((deadzone_time(&rows, &m).unwrap() - 0.004).abs() < 1e-9);
    }

    #[test]
    fn step_metrics_reject_waves() {
        let rows = synthetic_step();
        let m = SignalMeta {
            kind: SignalKind::Sine,
            ..step_meta()
        };
        assert!(matches!(rise_time(&rows, &m), Err(MetricsError::NotAStep { .. })));
        assert!(matches!(overshoot_pct(&rows, &m), Err(MetricsError::NotAStep { .. })));
        let all = compute_metrics(&rows, &m);
        assert_eq!(all.rise_time_s, None);
    }

    #[test]
    fn overdamped_has_no_overshoot() {
        let rows: Vec<_> = (0..=1000)
            .map(|k| {
                let t = k as f64 * 1e-3;
                row(t, 0.1, 0.1 * (1.0 - (-t / 0.1).exp()), 0)
            })
            .collect();
        assert_eq!(overshoot_pct(&rows, &step_meta()).unwrap(), 0.0);
    }

    #[test]
    fn unsettled_is_an_error() {
        let rows: Vec<_> = (0..100).map(|k| row(k as f64 * 1e-3, 0.1, 0.0, 0)).collect();
        assert_eq!(settle2(&rows, &step_meta()), Err(MetricsError::NeverSettled));
    }

    #[test]
    fn reversal_dwell_measured_from_setpoint_turn() {
        // Setpoint rises to t = 1 then falls; the encoder moves down from t = 1.3.
        let rows: Vec<_> = (0..=2000)
            .map(|k| {
                let t = k as f64 * 1e-3;
                let sp = if t <= 1.0 { t } else { 2.0 - t };
                let sector = if t < 1.3 {
                    100
                } else {
                    100 - ((t - 1.3) * 1e3) as i64 - 1
                };
                row(t, sp, 0.0, sector)
            })
            .collect();
        let meta = SignalMeta {
            kind: SignalKind::Tri,
            onset: 0.0,
            amplitude: 1.0,
            offset: 0.0,
        };
        assert!((deadzone_time(&rows, &meta).unwrap() - 0.3).abs() < 1e-9);
    }

    #[test]
    fn path_and_error_pct() {
        let rows = vec![row(0.0, 0.0, 0.0, 0), row(1.0, 0.1, 0.1, 0), row(2.0, 0.0, 0.002, 0)];
        let m = compute_metrics(
            &rows,
            &SignalMeta {
                kind: SignalKind::Tri,
                ..step_meta()
            },
        );
        assert!((m.displacement_m - 0.198).abs() < 1e-12);
        assert!((m.offset_error_mm - 2.0).abs() < 1e-9);
        assert!((m.error_pct - 100.0 * 2.0 / 198.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn invariant_under_time_shift_and_offset(shift in -50.0f64..50.0, offset in -0.3f64..0.3) {
            let base = synthetic_step();
            let meta = step_meta();
            let moved: Vec<_> = base
                .iter()
                .map(|r| TraceRow {
                    t: r.t + shift,
                    setpoint: r.setpoint + offset,
                    true_pos: r.true_pos + offset,
                    measured: r.measured + offset,
                    ..*r
                })
                .collect();
            let moved_meta = SignalMeta { onset: shift, offset, ..meta };
            let a = compute_metrics(&base, &meta);
            let b = compute_metrics(&moved, &moved_meta);
            let close = |x: Option<f64>, y: Option<f64>| match (x, y) {
                (Some(x), Some(y)) => (x - y).abs() < 1e-6,
                (None, None) => true,
                _ => false,
            };
            prop_assert!(close(a.rise_time_s, b.rise_time_s));
            prop_assert!(close(a.overshoot_pct, b.overshoot_pct));
            prop_assert!(close(a.settle2_s, b.settle2_s));
            prop_assert!(close(a.ss_error_mm, b.ss_error_mm));
            prop_assert!(close(a.deadzone_time_s, b.deadzone_time_s));
            prop_assert!((a.offset_error_mm - b.offset_error_mm).abs() < 1e-6);
            prop_assert!((a.displacement_m - b.displacement_m).abs() < 1e-9);
        }
    }
}
