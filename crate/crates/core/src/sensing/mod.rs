//! Measurement channels: incremental encoders with homing, and the IR
//! cameras that locate the operator's forearm.

mod camera;
mod encoder;

pub use camera::{
    camera_project, camera_project_noisy, detect_pose, marker_positions, observe_pose, theta_quantization_bound_deg,
    Blob, CameraError, CameraModel, DetectError, Pose4,
};
pub use encoder::{encoder_update, home, EncoderModel};
