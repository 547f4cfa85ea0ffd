//! Experiment time series and their CSV form.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::plant::AxisName;

pub const CSV_HEADER: &str = "t_s,axis,setpoint_m,true_m,measured_m,va_V,pwm_on";

/// State of one axis at the start of a control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub setpoint: f64,
    pub true_pos: f64,
    pub measured: f64,
    /// Armature voltage held over the following tick (V).
    pub va: f64,
    pub pwm_on: bool,
    /// Encoder disk sector, the raw edge counter behind `measured`.
    pub sector: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisTrace {
    pub axis: AxisName,
    pub rows: Vec<TraceRow>,
    /// Plant substeps that ended pinned at a travel limit.
    pub limit_hits: u64,
}

impl AxisTrace {
    pub fn new(axis: AxisName) -> Self {
        AxisTrace {
            axis,
            rows: Vec::new(),
            limit_hits: 0,
        }
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaRow {
    pub t: f64,
    pub target_deg: f64,
    pub theta_deg: f64,
}

/// Delay statistics of the command channel over a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub sent: u64,
    pub delivered: u64,
    pub max_delay_ms: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub dt_ctrl: f64,
    pub axes: Vec<AxisTrace>,
    pub theta: Vec<ThetaRow>,
    pub latency: LatencyStats,
}

impl Trace {
    pub fn axis(&self, name: AxisName) -> Option<&AxisTrace> {
        self.axes.iter().find(|a| a.axis == name)
    }

    pub fn ticks(&self) -> usize {
        self.axes.first().map_or(0, |a| a.rows.len())
    }

    /// Writes the CSV trace, time-major with axes in config order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for k in 0..self.ticks() {
            for a in &self.axes {
                let r = &a.rows[k];
                writeln!(
                    w,
                    "{:.4},{},{:.9},{:.9},{:.9},{:.6},{}",
                    r.t,
                    a.axis,
                    r.setpoint,
                    r.true_pos,
                    r.measured,
                    r.va,
                    u8::from(r.pwm_on)
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> TraceRow {
        TraceRow {
            t,
            setpoint: 0.1,
            true_pos: 0.05,
            measured: 0.0499,
            va: 13.8,
            pwm_on: true,
            sector: 160,
        }
    }

    #[test]
    fn csv_is_time_major() {
        let mut x = AxisTrace::new(AxisName::X);
        let mut z = AxisTrace::new(AxisName::Z);
        for k in 0..2 {
            x.rows.push(row(k as f64 * 1e-3));
            z.rows.push(row(k as f64 * 1e-3));
        }
        let tr = Trace {
            dt_ctrl: 1e-3,
            axes: vec![x, z],
            theta: Vec::new(),
            latency: LatencyStats::default(),
        };
        let csv = tr.to_csv_string();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0.0000,x,0.100000000,0.050000000,0.049900000,13.800000,1");
        assert!(lines[2].starts_with("0.0000,z,"));
        assert!(lines[3].starts_with("0.0010,x,"));
        assert_eq!(lines.len(), 5);
    }
}
