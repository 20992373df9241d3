//! Rotation-vector helpers shared by the pose type and the solver's local
//! parametrization.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

/// Exponential map: rotation vector -> unit quaternion.
pub fn exp(omega: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*omega)
}

/// Logarithm map: unit quaternion -> rotation vector with angle in [0, pi].
pub fn log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    q.scaled_axis()
}

pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of the right Jacobian of the SO(3) logarithm, evaluated at the
/// rotation vector `phi`. Satisfies Log(Exp(phi)Exp(delta)) ~ phi +
/// Jr_inv(phi) delta for small delta.
pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let hat_phi = hat(phi);
    if theta < 1e-8 {
        return Matrix3::identity() + 0.5 * hat_phi + hat_phi * hat_phi / 12.0;
    }
    let beta = 1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
    Matrix3::identity() + 0.5 * hat_phi + beta * (hat_phi * hat_phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_log_round_trip() {
        let omega = Vector3::new(0.3, -0.2, 0.9);
        let q = exp(&omega);
        assert_relative_eq!(log(&q), omega, epsilon = 1e-12);
    }

    #[test]
    fn right_jacobian_inv_matches_definition() {
        // Finite-difference check of Log(Exp(phi) Exp(eps e_i)) around phi.
        let phi = Vector3::new(0.4, -0.7, 0.2);
        let jr_inv = right_jacobian_inv(&phi);
        let eps = 1e-6;
        for i in 0..3 {
            let mut d = Vector3::zeros();
            d[i] = eps;
            let plus = log(&(exp(&phi) * exp(&d)));
            let minus = log(&(exp(&phi) * exp(&(-d))));
            let col = (plus - minus) / (2.0 * eps);
            assert_relative_eq!(col, jr_inv.column(i).into_owned(), epsilon = 1e-6);
        }
    }

    #[test]
    fn right_jacobian_inv_small_angle() {
        let phi = Vector3::new(1e-10, 0.0, 0.0);
        let j = right_jacobian_inv(&phi);
        assert_relative_eq!(j, Matrix3::identity(), epsilon = 1e-9);
    }
}
