use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::so3;
use super::GeometryError;

/// 6-DOF rigid transform mapping body-frame coordinates into the parent
/// frame: `p_parent = R * p_body + t`. A camera pose maps camera-frame
/// points into the world, so `translation` is the camera center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Unit quaternion (w, x, y, z).
    pub rotation: UnitQuaternion<f64>,
    /// Meters.
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
        .renormalized()
    }

    pub fn from_parts(quat_wxyz: [f64; 4], translation: [f64; 3]) -> Self {
        let q = nalgebra::Quaternion::new(quat_wxyz[0], quat_wxyz[1], quat_wxyz[2], quat_wxyz[3]);
        Self::new(
            UnitQuaternion::from_quaternion(q),
            Vector3::from(translation),
        )
    }

    /// Composition: `self` then `other` in `self`'s body frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
        .renormalized()
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.inverse();
        Pose {
            rotation: inv_rot,
            translation: -(inv_rot * self.translation),
        }
        .renormalized()
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Local increment used by the optimizer: world-frame translation delta
    /// plus a right-multiplied rotation vector.
    pub fn retract(&self, delta: &[f64; 6]) -> Pose {
        let dt = Vector3::new(delta[0], delta[1], delta[2]);
        let dw = Vector3::new(delta[3], delta[4], delta[5]);
        Pose {
            rotation: self.rotation * so3::exp(&dw),
            translation: self.translation + dt,
        }
        .renormalized()
    }

    /// Rotation angle of `self.rotation` in radians.
    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    /// Angle (rad) and translation distance (m) separating two poses.
    pub fn separation(&self, other: &Pose) -> (f64, f64) {
        let dq = self.rotation.inverse() * other.rotation;
        (dq.angle(), (self.translation - other.translation).norm())
    }

    fn renormalized(mut self) -> Self {
        self.rotation.renormalize();
        self
    }
}

/// Pinhole camera parameters in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::BadIntrinsics(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::BadIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Camera frame with a horizontal field of view of `hfov` radians.
    pub fn with_hfov(hfov: f64, width: usize, height: usize) -> Result<Self, GeometryError> {
        if !(0.0..std::f64::consts::PI).contains(&hfov) || hfov == 0.0 {
            return Err(GeometryError::BadFov(hfov));
        }
        let f = (width as f64 / 2.0) / (hfov / 2.0).tan();
        Self::new(
            f,
            f,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }

    /// Ray direction through pixel (u, v), unnormalized: ((u-cx)/fx, (v-cy)/fy, 1).
    pub fn ray(&self, u: f64, v: f64) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point with positive depth to pixels.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn arbitrary_pose(seed: (f64, f64, f64, f64, f64, f64)) -> Pose {
        let (a, b, c, x, y, z) = seed;
        Pose::new(
            UnitQuaternion::from_euler_angles(a, b, c),
            Vector3::new(x, y, z),
        )
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = arbitrary_pose((0.4, -1.1, 2.0, 3.0, -5.0, 0.7));
        let e = p.compose(&p.inverse());
        assert!(e.rotation_angle() < 1e-9);
        assert!(e.translation.norm() < 1e-9);
    }

    #[test]
    fn quaternion_stays_normalized_through_operations() {
        let mut p = arbitrary_pose((0.1, 0.2, 0.3, 1.0, 2.0, 3.0));
        for _ in 0..1000 {
            p = p.compose(&arbitrary_pose((0.01, -0.02, 0.005, 0.1, 0.0, -0.1)));
        }
        assert!((p.rotation.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn retract_zero_is_identity_increment() {
        let p = arbitrary_pose((0.3, 0.1, -0.4, 1.0, 0.0, 2.0));
        let q = p.retract(&[0.0; 6]);
        let (da, dt) = p.separation(&q);
        assert!(da < 1e-12 && dt < 1e-12);
    }

    #[test]
    fn intrinsics_rejects_bad_values() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 10.0, 0.0, 10, 10).is_err());
        assert!(Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).is_ok());
    }

    #[test]
    fn hfov_intrinsics() {
        // fov = pi/2 over 512 px: f = 256.
        let k = Intrinsics::with_hfov(std::f64::consts::FRAC_PI_2, 512, 512).unwrap();
        assert_relative_eq!(k.fx, 256.0, epsilon = 1e-12);
        assert_relative_eq!(k.cy, 256.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn composition_associative(
            a in -3.0f64..3.0, b in -1.5f64..1.5, c in -3.0f64..3.0,
            d in -3.0f64..3.0, e in -1.5f64..1.5, f in -3.0f64..3.0,
            g in -3.0f64..3.0, h in -1.5f64..1.5, i in -3.0f64..3.0,
        ) {
            let p = arbitrary_pose((a, b, c, 1.0, -2.0, 0.5));
            let q = arbitrary_pose((d, e, f, 0.3, 4.0, -1.0));
            let r = arbitrary_pose((g, h, i, -2.0, 0.0, 2.0));
            let left = p.compose(&q).compose(&r);
            let right = p.compose(&q.compose(&r));
            let (da, dt) = left.separation(&right);
            prop_assert!(da < 1e-9 && dt < 1e-9);
        }

        #[test]
        fn inverse_is_two_sided(
            a in -3.0f64..3.0, b in -1.5f64..1.5, c in -3.0f64..3.0,
            x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0,
        ) {
            let p = arbitrary_pose((a, b, c, x, y, z));
            let left = p.inverse().compose(&p);
            let right = p.compose(&p.inverse());
            prop_assert!(left.rotation_angle() < 1e-9 && left.translation.norm() < 1e-9);
            prop_assert!(right.rotation_angle() < 1e-9 && right.translation.norm() < 1e-9);
        }
    }
}
