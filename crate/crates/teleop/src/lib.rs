//! Live teleoperation of the simulated arm over newline-delimited JSON,
//! served on a `/teleop` web socket or a raw TCP socket.

pub mod service;
pub mod sim;
pub mod wire;

pub use service::{serve, spawn, ServeError, ServeOptions, ServiceHandle, Transport, MAX_CATCH_UP_TICKS};
pub use sim::{ArmSim, STATE_HZ};
