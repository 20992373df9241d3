//! Rigid-body poses, pinhole projection, bearing angles and plate-carrée
//! panorama projections.

mod bearing;
pub mod enu;
mod pano;
mod pose;
pub mod so3;

pub use bearing::{bearing_of_pixel, predict_bearing, wrap_angle, Bearing};
pub use enu::{heading_of_pose, pose_from_heading};
pub use pano::{
    direction_of_pano_pixel, extract_rectilinear, pano_pixel_of_direction, standard_view_yaws,
    standard_views, view_intrinsics, view_rotation, PanoImage, Raster, RectView,
    STANDARD_VIEW_COUNT, STANDARD_VIEW_FOV,
};
pub use pose::{Intrinsics, Pose};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point within {0} m of the camera center cannot be observed")]
    DegeneratePoint(f64),
    #[error("field of view {0} rad outside (0, pi)")]
    BadFov(f64),
    #[error("invalid intrinsics: {0}")]
    BadIntrinsics(String),
    #[error("panorama must be plate carree (width = 2*height), got {width}x{height}")]
    BadPanoSize { width: usize, height: usize },
}
