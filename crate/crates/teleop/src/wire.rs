//! Newline-delimited JSON wire schema. Every message is one object with a
//! `type` discriminator.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Operator command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Target(Target),
    Calibrate(Calibrate),
    SetLatency(SetLatency),
}

/// Target pose. Omitted coordinates keep their previous target.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibrate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetLatency {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ms: Option<f64>,
    pub base_ms: f64,
    pub jitter_ms: f64,
}

impl ClientMsg {
    pub fn t_ms(&self) -> Option<f64> {
        match self {
            ClientMsg::Target(m) => m.t_ms,
            ClientMsg::Calibrate(m) => m.t_ms,
            ClientMsg::SetLatency(m) => m.t_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Hello(Hello),
    State(Box<State>),
    Error(ErrorMsg),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operator,
    Observer,
}

/// Travel range of one axis (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min_mm: f64,
    pub max_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x: Range,
    pub y: Range,
    pub z: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub role: Role,
    pub tick_hz: f64,
    pub state_hz: f64,
    pub workspace: Workspace,
    pub theta_step_deg: f64,
    pub encoder_resolution_mm: AxisValues,
    pub latency_limit_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisValues {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Snapshot of one linear axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisState {
    pub set_mm: f64,
    pub meas_mm: f64,
    pub true_mm: f64,
    pub va_v: f64,
    pub pwm: bool,
    /// Encoder reading minus true position.
    pub drift_mm: f64,
    /// The last applied target was outside travel and was clamped.
    pub clamped: bool,
    pub homing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub x: AxisState,
    pub y: AxisState,
    pub z: AxisState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyState {
    pub base_ms: f64,
    pub jitter_ms: f64,
    /// Largest channel delay seen so far.
    pub max_delay_ms: f64,
    /// Send to first change of drive voltage for the latest target that
    /// produced one.
    pub last_cmd_ms: Option<f64>,
    /// Some command exceeded the 500 ms operator limit.
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t_ms: f64,
    /// Measured pose, as the controller sees it.
    pub x_mm: f64,
    pub y_mm: f64,
    pub z_mm: f64,
    pub theta_deg: f64,
    pub theta_set_deg: f64,
    /// Any axis clamped its last target.
    pub clamped: bool,
    pub axes: Axes,
    pub latency: LatencyState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Line is not a JSON object with a string `type`.
    Parse,
    /// `type` is not a known command; the message was ignored.
    UnknownType,
    /// Known `type` with missing, extra or ill-typed fields.
    Invalid,
    /// Sender `t_ms` went backwards; the message was dropped.
    NonMonotonic,
    /// Commands from observer sessions are ignored.
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorMsg {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ErrorMsg {
            code,
            message: message.into(),
        }
    }
}

impl ServerMsg {
    /// One JSON line without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialise")
    }
}

fn from_fields<T: serde::de::DeserializeOwned>(kind: &str, fields: Map<String, Value>) -> Result<T, ErrorMsg> {
    serde_json::from_value(Value::Object(fields)).map_err(|e| ErrorMsg::new(ErrorCode::Invalid, format!("{kind}: {e}")))
}

fn finite(kind: &str, name: &str, v: Option<f64>) -> Result<(), ErrorMsg> {
    match v {
        Some(x) if !x.is_finite() => Err(ErrorMsg::new(
            ErrorCode::Invalid,
            format!("{kind}: {name} must be finite"),
        )),
        _ => Ok(()),
    }
}

/// Parses one inbound line.
pub fn parse_client_line(line: &str) -> Result<ClientMsg, ErrorMsg> {
    let value: Value = serde_json::from_str(line).map_err(|e| ErrorMsg::new(ErrorCode::Parse, e.to_string()))?;
    let Value::Object(mut fields) = value else {
        return Err(ErrorMsg::new(ErrorCode::Parse, "message must be a JSON object"));
    };
    let kind = match fields.remove("type") {
        Some(Value::String(s)) => s,
        _ => return Err(ErrorMsg::new(ErrorCode::Parse, "missing string field `type`")),
    };
    let msg = match kind.as_str() {
        "target" => {
            let t: Target = from_fields(&kind, fields)?;
            for (name, v) in [
                ("x_mm", t.x_mm),
                ("y_mm", t.y_mm),
                ("z_mm", t.z_mm),
                ("theta_deg", t.theta_deg),
            ] {
                finite(&kind, name, v)?;
            }
            ClientMsg::Target(t)
        }
        "calibrate" => ClientMsg::Calibrate(from_fields(&kind, fields)?),
        "set_latency" => {
            let s: SetLatency = from_fields(&kind, fields)?;
            for (name, v) in [("base_ms", s.base_ms), ("jitter_ms", s.jitter_ms)] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ErrorMsg::new(
                        ErrorCode::Invalid,
                        format!("set_latency: {name} must be >= 0"),
                    ));
                }
            }
            ClientMsg::SetLatency(s)
        }
        other => {
            return Err(ErrorMsg::new(
                ErrorCode::UnknownType,
                format!("ignored message of unknown type `{other}`"),
            ))
        }
    };
    finite(&kind, "t_ms", msg.t_ms())?;
    Ok(msg)
}
