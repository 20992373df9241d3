//! Upright body frames in local East-North-Up coordinates. Cameras and
//! panorama frames use x right, y down, z forward; the world frame is ENU
//! (x east, y north, z up).

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::Pose;

/// Fixed axis alignment of an upright body facing north: right maps to
/// east, down to -up, forward to north.
pub fn upright_alignment() -> Rotation3<f64> {
    Rotation3::from_matrix_unchecked(Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, //
        0.0, -1.0, 0.0,
    ))
}

/// Rotation of an upright body facing the given compass heading (radians,
/// clockwise from north).
pub fn rotation_from_heading(heading_rad: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), -heading_rad) * upright_alignment()
}

/// Body-to-world pose at `pos` facing the given compass heading.
pub fn pose_from_heading(pos: Vector3<f64>, heading_rad: f64) -> Pose {
    Pose::new(
        UnitQuaternion::from_rotation_matrix(&rotation_from_heading(heading_rad)),
        pos,
    )
}

/// Compass heading (radians) of an upright body pose.
pub fn heading_of_pose(pose: &Pose) -> f64 {
    let fwd = pose.rotate(&Vector3::new(0.0, 0.0, 1.0));
    fwd.x.atan2(fwd.y)
}
