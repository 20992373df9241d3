use nalgebra::{DMatrix, DVector};

use super::{dcs_scale, symmetric_within, Problem, SolveError, Value, VarId};
use crate::geometry::{so3, wrap_angle, Bearing, Pose};

/// Robust kernel applied to a factor's chi-square error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    None,
    Dcs { phi: f64 },
}

#[derive(Debug, Clone)]
pub enum FactorKind {
    /// Elevation/azimuth observation of a point from a pose. Residual is
    /// (theta_hat - theta, wrap(phi_hat - phi)); the azimuth component is
    /// always wrapped into (-pi, pi]. Variables: [pose, point].
    Bearing { measured: Bearing },
    /// 6-dof constraint between two poses; the residual is the local
    /// coordinates of (measured relative pose)^-1 * (predicted relative
    /// pose), translation first. Variables: [pose_a, pose_b].
    RelativePose { measured: Pose },
}

#[derive(Debug, Clone)]
pub struct Factor {
    pub vars: Vec<VarId>,
    pub kind: FactorKind,
    information: DMatrix<f64>,
    /// Upper-triangular whitener W with W'W = information.
    sqrt_information: DMatrix<f64>,
    pub kernel: Kernel,
}

impl Factor {
    pub fn bearing(
        pose: VarId,
        point: VarId,
        measured: Bearing,
        information: DMatrix<f64>,
        kernel: Kernel,
    ) -> Result<Self, SolveError> {
        Self::new(
            vec![pose, point],
            FactorKind::Bearing { measured },
            information,
            kernel,
        )
    }

    pub fn relative_pose(
        a: VarId,
        b: VarId,
        measured: Pose,
        information: DMatrix<f64>,
        kernel: Kernel,
    ) -> Result<Self, SolveError> {
        Self::new(
            vec![a, b],
            FactorKind::RelativePose { measured },
            information,
            kernel,
        )
    }

    fn new(
        vars: Vec<VarId>,
        kind: FactorKind,
        information: DMatrix<f64>,
        kernel: Kernel,
    ) -> Result<Self, SolveError> {
        let dim = match kind {
            FactorKind::Bearing { .. } => 2,
            FactorKind::RelativePose { .. } => 6,
        };
        if information.nrows() != dim || information.ncols() != dim {
            return Err(SolveError::BadInformation(format!(
                "expected {dim}x{dim}, got {}x{}",
                information.nrows(),
                information.ncols()
            )));
        }
        if !symmetric_within(&information, 1e-12) {
            return Err(SolveError::BadInformation("not symmetric".into()));
        }
        let chol = information
            .clone()
            .cholesky()
            .ok_or_else(|| SolveError::BadInformation("not positive definite".into()))?;
        let sqrt_information = chol.l().transpose();
        Ok(Self {
            vars,
            kind,
            information,
            sqrt_information,
            kernel,
        })
    }

    pub fn information(&self) -> &DMatrix<f64> {
        &self.information
    }

    pub fn residual_dim(&self) -> usize {
        self.information.nrows()
    }

    pub(crate) fn kind_name(&self) -> &'static str {
        match self.kind {
            FactorKind::Bearing { .. } => "bearing",
            FactorKind::RelativePose { .. } => "relative_pose",
        }
    }

    pub(crate) fn kernel_name(&self) -> String {
        match self.kernel {
            Kernel::None => "none".into(),
            Kernel::Dcs { phi } => format!("dcs({phi})"),
        }
    }

    pub(crate) fn validate(&self, problem: &Problem) -> Result<(), SolveError> {
        let expected = 2;
        if self.vars.len() != expected {
            return Err(SolveError::BadArity {
                expected,
                got: self.vars.len(),
            });
        }
        for id in &self.vars {
            if problem.variable(*id).is_none() {
                return Err(SolveError::MissingVariable(*id));
            }
        }
        let kinds_ok = match self.kind {
            FactorKind::Bearing { .. } => {
                matches!(problem.variable(self.vars[0]).unwrap().value, Value::Pose(_))
                    && matches!(problem.variable(self.vars[1]).unwrap().value, Value::Point(_))
            }
            FactorKind::RelativePose { .. } => self.vars.iter().all(|id| {
                matches!(problem.variable(*id).unwrap().value, Value::Pose(_))
            }),
        };
        if !kinds_ok {
            return Err(SolveError::WrongVariableKind(self.vars[0]));
        }
        Ok(())
    }

    /// Raw (unwhitened) residual.
    pub fn residual(&self, values: &[&Value]) -> DVector<f64> {
        match &self.kind {
            FactorKind::Bearing { measured } => {
                let pose = values[0].as_pose().expect("bearing factor pose var");
                let point = values[1].as_point().expect("bearing factor point var");
                let in_cam = pose.inverse().transform_point(point);
                let predicted = Bearing::of_direction(&in_cam);
                DVector::from_column_slice(&[
                    predicted.theta - measured.theta,
                    wrap_angle(predicted.phi - measured.phi),
                ])
            }
            FactorKind::RelativePose { measured } => {
                let a = values[0].as_pose().expect("relative factor pose var");
                let b = values[1].as_pose().expect("relative factor pose var");
                let diff = measured.inverse().compose(&a.inverse().compose(b));
                let rot = so3::log(&diff.rotation);
                DVector::from_column_slice(&[
                    diff.translation.x,
                    diff.translation.y,
                    diff.translation.z,
                    rot.x,
                    rot.y,
                    rot.z,
                ])
            }
        }
    }

    /// Chi-square error `r' Sigma r`.
    pub fn chi2(&self, values: &[&Value]) -> f64 {
        let r = self.residual(values);
        (&self.sqrt_information * r).norm_squared()
    }

    /// Kernel scale for the current chi-square.
    pub fn kernel_scale(&self, chi2: f64) -> f64 {
        match self.kernel {
            Kernel::None => 1.0,
            Kernel::Dcs { phi } => dcs_scale(chi2, phi),
        }
    }

    /// Robust cost contribution `s^2 * chi2`.
    pub fn robust_cost(&self, values: &[&Value]) -> f64 {
        let chi2 = self.chi2(values);
        let s = self.kernel_scale(chi2);
        s * s * chi2
    }

    /// Residual plus analytic Jacobians with respect to each variable's
    /// local increment (translation components first for poses).
    pub fn residual_and_jacobians(&self, values: &[&Value]) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        match &self.kind {
            FactorKind::Bearing { .. } => {
                let pose = values[0].as_pose().unwrap();
                let point = values[1].as_point().unwrap();
                let residual = self.residual(values);

                let rot_t = pose.rotation.inverse().to_rotation_matrix();
                let in_cam = rot_t * (point - pose.translation);
                let (dx, dy, dz) = (in_cam.x, in_cam.y, in_cam.z);
                let r2 = in_cam.norm_squared();
                let rho2 = dx * dx + dy * dy;
                let rho = rho2.sqrt();

                // d(theta, phi)/d(direction). Both angles lose their
                // gradient on the optical axis; zero rows keep the
                // linearization finite there.
                let mut g = nalgebra::Matrix2x3::<f64>::zeros();
                if rho > 1e-12 * r2.sqrt().max(1.0) {
                    g[(0, 0)] = dx * dz / (r2 * rho);
                    g[(0, 1)] = dy * dz / (r2 * rho);
                    g[(0, 2)] = -rho / r2;
                    g[(1, 0)] = -dy / rho2;
                    g[(1, 1)] = dx / rho2;
                }

                let d_cam_d_t = -rot_t.matrix();
                let d_cam_d_w = so3::hat(&in_cam);
                let mut j_pose = DMatrix::zeros(2, 6);
                j_pose.view_mut((0, 0), (2, 3)).copy_from(&(g * d_cam_d_t));
                j_pose.view_mut((0, 3), (2, 3)).copy_from(&(g * d_cam_d_w));
                let mut j_point = DMatrix::zeros(2, 3);
                j_point.copy_from(&(g * rot_t.matrix()));
                (residual, vec![j_pose, j_point])
            }
            FactorKind::RelativePose { measured } => {
                let a = values[0].as_pose().unwrap();
                let b = values[1].as_pose().unwrap();
                let residual = self.residual(values);

                let rz_t = measured.rotation.inverse().to_rotation_matrix();
                let ra_t = a.rotation.inverse().to_rotation_matrix();
                let rz_t_ra_t = rz_t.matrix() * ra_t.matrix();
                let rel_t = ra_t * (b.translation - a.translation);
                let e_rot = nalgebra::Vector3::new(residual[3], residual[4], residual[5]);
                let jr_inv = so3::right_jacobian_inv(&e_rot);

                let mut j_a = DMatrix::zeros(6, 6);
                j_a.view_mut((0, 0), (3, 3)).copy_from(&(-rz_t_ra_t));
                j_a.view_mut((0, 3), (3, 3))
                    .copy_from(&(rz_t.matrix() * so3::hat(&rel_t)));
                j_a.view_mut((3, 3), (3, 3))
                    .copy_from(&(-jr_inv.transpose() * rz_t.matrix()));

                let mut j_b = DMatrix::zeros(6, 6);
                j_b.view_mut((0, 0), (3, 3)).copy_from(&rz_t_ra_t);
                j_b.view_mut((3, 3), (3, 3)).copy_from(&jr_inv);

                (residual, vec![j_a, j_b])
            }
        }
    }

    /// Whitened residual and Jacobians scaled by the kernel, ready for
    /// normal-equation accumulation. Returns the robust cost as well.
    pub(crate) fn linearize(&self, values: &[&Value]) -> (f64, DVector<f64>, Vec<DMatrix<f64>>) {
        let (residual, jacobians) = self.residual_and_jacobians(values);
        let whitened = &self.sqrt_information * &residual;
        let chi2 = whitened.norm_squared();
        let s = self.kernel_scale(chi2);
        let r = s * whitened;
        let jacs = jacobians
            .into_iter()
            .map(|j| s * (&self.sqrt_information * j))
            .collect();
        (s * s * chi2, r, jacs)
    }

}

/// Isotropic information matrix from a per-axis standard deviation.
pub fn isotropic_information(dim: usize, sigma: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal_element(dim, dim, 1.0 / (sigma * sigma))
}
