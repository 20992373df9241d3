use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{GeometryError, Intrinsics, Pose};

/// Direction-only measurement from a camera to a 3D point: elevation
/// `theta` from the optical axis in [0, pi] and azimuth `phi` in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bearing {
    pub theta: f64,
    pub phi: f64,
}

impl Bearing {
    /// Bearing of a camera-frame direction. `phi` is the full-quadrant
    /// azimuth; on the optical axis it is 0 by convention.
    pub fn of_direction(d: &Vector3<f64>) -> Bearing {
        let r = d.norm();
        let theta = (d.z / r).clamp(-1.0, 1.0).acos();
        let phi = if d.x == 0.0 && d.y == 0.0 {
            0.0
        } else {
            d.y.atan2(d.x)
        };
        Bearing {
            theta,
            phi: wrap_angle(phi),
        }
    }

    /// Unit direction in the camera frame.
    pub fn direction(&self) -> Vector3<f64> {
        let s = self.theta.sin();
        Vector3::new(s * self.phi.cos(), s * self.phi.sin(), self.theta.cos())
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Back-projects pixel (u, v) through the camera matrix and returns its
/// elevation/azimuth bearing.
pub fn bearing_of_pixel(k: &Intrinsics, u: f64, v: f64) -> Bearing {
    Bearing::of_direction(&k.ray(u, v))
}

/// Bearing of `point` (world frame) as seen from `camera`.
pub fn predict_bearing(camera: &Pose, point: &Vector3<f64>) -> Result<Bearing, GeometryError> {
    let in_cam = camera.inverse().transform_point(point);
    let dist = in_cam.norm();
    if dist <= 1e-12 {
        return Err(GeometryError::DegeneratePoint(dist));
    }
    Ok(Bearing::of_direction(&in_cam))
}
