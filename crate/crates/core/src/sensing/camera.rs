//! IR camera projection and 4-DOF pose recovery from marker blobs.
//!
//! The overhead camera sees the retroreflective wrist band as one blob whose
//! centroid gives x and y. The side camera sees the two hand LEDs; their
//! midpoint gives z and the direction of the pair gives the roll angle.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    /// Horizontal scale (mm/pixel).
    pub mm_per_px_u: f64,
    /// Vertical scale (mm/pixel).
    pub mm_per_px_v: f64,
    pub width: u32,
    pub height: u32,
    /// Pixel onto which the world origin projects.
    pub origin_px: (f64, f64),
    /// Uniform centroid jitter bound (pixels); 0 for a noise-free workspace.
    #[serde(default)]
    pub jitter_px: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("camera scale must be in (0, 1] mm/pixel, got {0}")]
    Scale(f64),
    #[error("camera sensor must be non-empty")]
    Sensor,
    #[error("jitter must be >= 0, got {0}")]
    Jitter(f64),
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), CameraError> {
        for s in [self.mm_per_px_u, self.mm_per_px_v] {
            if !(s > 0.0 && s <= 1.0) {
                return Err(CameraError::Scale(s));
            }
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Sensor);
        }
        if self.jitter_px.is_nan() || self.jitter_px < 0.0 {
            return Err(CameraError::Jitter(self.jitter_px));
        }
        Ok(())
    }

    fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < f64::from(self.width) && v < f64::from(self.height)
    }

    /// World extent visible along u and v, as (min, max) in mm.
    pub fn field_of_view_mm(&self) -> ((f64, f64), (f64, f64)) {
        let (u0, v0) = self.origin_px;
        let u_lo = (-0.5 - u0) * self.mm_per_px_u;
        let u_hi = (f64::from(self.width) - 0.5 - u0) * self.mm_per_px_u;
        let v_lo = (-0.5 - v0) * self.mm_per_px_v;
        let v_hi = (f64::from(self.height) - 0.5 - v0) * self.mm_per_px_v;
        ((u_lo, u_hi), (v_lo, v_hi))
    }
}

/// Detected marker centroid in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub u: f64,
    pub v: f64,
}

impl Blob {
    pub fn new(u: f64, v: f64) -> Self {
        Blob { u, v }
    }
}

/// Forearm pose: positions in metres, roll in degrees within (−180, 180].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose4 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("detection dropout: {0} marker(s) missing")]
    Dropout(usize),
}

/// Projects a world point (mm) onto the sensor. `None` when it falls outside
/// the sensor.
pub fn camera_project(c: &CameraModel, world_mm: (f64, f64)) -> Option<Blob> {
    let (a, b) = world_mm;
    if !(a.is_finite() && b.is_finite()) {
        return None;
    }
    let u = (a / c.mm_per_px_u).round() + c.origin_px.0;
    let v = (b / c.mm_per_px_v).round() + c.origin_px.1;
    c.contains(u, v).then_some(Blob { u, v })
}

/// Like [`camera_project`] but adds uniform centroid jitter of up to
/// `c.jitter_px` before rounding.
pub fn camera_project_noisy<R: Rng>(c: &CameraModel, world_mm: (f64, f64), rng: &mut R) -> Option<Blob> {
    if c.jitter_px == 0.0 {
        return camera_project(c, world_mm);
    }
    let du = rng.random_range(-c.jitter_px..=c.jitter_px) * c.mm_per_px_u;
    let dv = rng.random_range(-c.jitter_px..=c.jitter_px) * c.mm_per_px_v;
    camera_project(c, (world_mm.0 + du, world_mm.1 + dv))
}

fn wrap_degrees(mut deg: f64) -> f64 {
    while deg <= -180.0 {
        deg += 360.0;
    }
    while deg > 180.0 {
        deg -= 360.0;
    }
    deg
}

/// Recovers the forearm pose from the band blob (overhead camera) and the LED
/// pair (side camera). Any missing blob is a dropout; callers keep the last
/// good pose.
pub fn detect_pose(
    top: Option<Blob>,
    side_pair: (Option<Blob>, Option<Blob>),
    cams: (&CameraModel, &CameraModel),
) -> Result<Pose4, DetectError> {
    let missing = [top.is_none(), side_pair.0.is_none(), side_pair.1.is_none()]
        .iter()
        .filter(|m| **m)
        .count();
    let (Some(band), Some(led_a), Some(led_b)) = (top, side_pair.0, side_pair.1) else {
        return Err(DetectError::Dropout(missing));
    };
    let (top_cam, side_cam) = cams;

    let x_mm = (band.u - top_cam.origin_px.0) * top_cam.mm_per_px_u;
    let y_mm = (band.v - top_cam.origin_px.1) * top_cam.mm_per_px_v;
    let mid_v = 0.5 * (led_a.v + led_b.v);
    let z_mm = (mid_v - side_cam.origin_px.1) * side_cam.mm_per_px_v;

    let du = (led_b.u - led_a.u) * side_cam.mm_per_px_u;
    let dv = (led_b.v - led_a.v) * side_cam.mm_per_px_v;
    let theta = wrap_degrees(dv.atan2(du).to_degrees());

    Ok(Pose4 {
        x: x_mm * 1e-3,
        y: y_mm * 1e-3,
        z: z_mm * 1e-3,
        theta,
    })
}

/// World positions (mm) of the band and the two LEDs for a given pose.
/// The LEDs sit `baseline_mm` apart, centred on (x, z) in the side view.
pub fn marker_positions(pose: &Pose4, baseline_mm: f64) -> ((f64, f64), (f64, f64), (f64, f64)) {
    let (x, y, z) = (pose.x * 1e3, pose.y * 1e3, pose.z * 1e3);
    let (s, c) = pose.theta.to_radians().sin_cos();
    let h = 0.5 * baseline_mm;
    ((x, y), (x - h * c, z - h * s), (x + h * c, z + h * s))
}

/// Projects a pose through both cameras.
pub fn observe_pose(
    pose: &Pose4,
    baseline_mm: f64,
    cams: (&CameraModel, &CameraModel),
) -> (Option<Blob>, (Option<Blob>, Option<Blob>)) {
    let (band, a, b) = marker_positions(pose, baseline_mm);
    (
        camera_project(cams.0, band),
        (camera_project(cams.1, a), camera_project(cams.1, b)),
    )
}

/// Worst-case roll error from rounding both LED centroids to whole pixels.
pub fn theta_quantization_bound_deg(side: &CameraModel, baseline_mm: f64) -> f64 {
    // Each centroid moves by at most half a pixel per axis, so the pair's
    // difference vector moves by at most one pixel per axis.
    let shift = side.mm_per_px_u.hypot(side.mm_per_px_v);
    (shift / baseline_mm).min(1.0).asin().to_degrees()
}
