//! Simulation core for a three-axis lead-screw arm with a stepper-driven
//! wrist: plant dynamics, PI control, sensing models, closed-loop runs and
//! experiment drivers.

pub mod config;
pub mod controller;
pub mod experiments;
pub mod plant;
pub mod sensing;
pub mod simkit;
