//! Sparse nonlinear least-squares over pose and point variables.
//!
//! Levenberg-Marquardt with multiplicative damping on the normal-equation
//! diagonal; point variables are eliminated through their block-diagonal
//! Schur complement so the dense solve only spans the pose blocks. Factors
//! carry an information matrix and an optional Dynamic Covariance Scaling
//! kernel that shrinks a factor's information as its chi-square error grows.

mod factors;
mod numeric;
mod solver;

pub use factors::{isotropic_information, Factor, FactorKind, Kernel};
pub use numeric::numeric_jacobian;
pub use solver::{SolveConfig, SolveReport, Termination};

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{self, Write};
use thiserror::Error;

use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub u64);

/// State attached to a variable: a 6-dof pose (rotation-vector plus
/// translation increments) or a 3-dof point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Pose(Pose),
    Point(Vector3<f64>),
}

impl Value {
    pub fn local_dim(&self) -> usize {
        match self {
            Value::Pose(_) => 6,
            Value::Point(_) => 3,
        }
    }

    pub fn retract(&self, delta: &[f64]) -> Value {
        match self {
            Value::Pose(p) => {
                let d: [f64; 6] = delta.try_into().expect("pose delta is 6-dof");
                Value::Pose(p.retract(&d))
            }
            Value::Point(p) => {
                assert_eq!(delta.len(), 3, "point delta is 3-dof");
                Value::Point(p + Vector3::new(delta[0], delta[1], delta[2]))
            }
        }
    }

    pub fn as_pose(&self) -> Option<&Pose> {
        match self {
            Value::Pose(p) => Some(p),
            Value::Point(_) => None,
        }
    }

    pub fn as_point(&self) -> Option<&Vector3<f64>> {
        match self {
            Value::Point(p) => Some(p),
            Value::Pose(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub id: VarId,
    pub value: Value,
    pub fixed: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("duplicate variable id {0:?}")]
    DuplicateVariable(VarId),
    #[error("factor references unknown variable {0:?}")]
    MissingVariable(VarId),
    #[error("free variable {0:?} is touched by no factor")]
    UnconstrainedVariable(VarId),
    #[error("problem has no factors")]
    NoFactors,
    #[error("no fixed variable anchors the gauge")]
    NoAnchor,
    #[error("damped normal equations unsolvable even at lambda = 1e8")]
    SingularSystem,
    #[error("residual is not finite")]
    NonFiniteResidual,
    #[error("information matrix invalid: {0}")]
    BadInformation(String),
    #[error("factor arity mismatch: kind expects {expected} variables, got {got}")]
    BadArity { expected: usize, got: usize },
    #[error("factor variable {0:?} has the wrong kind")]
    WrongVariableKind(VarId),
}

/// Dynamic Covariance Scaling: `s = min(1, 2*phi / (phi + chi2))`, in (0, 1].
/// The factor's effective information becomes `s^2 * Sigma`, so inliers
/// (small chi-square) keep full weight while gross outliers are driven
/// toward zero influence.
pub fn dcs_scale(chi2: f64, phi: f64) -> f64 {
    debug_assert!(chi2 >= 0.0 && phi > 0.0);
    (2.0 * phi / (phi + chi2)).min(1.0)
}

/// A least-squares problem: variables plus factors over them.
#[derive(Debug, Clone, Default)]
pub struct Problem {
    variables: Vec<Variable>,
    index: HashMap<VarId, usize>,
    factors: Vec<Factor>,
}

impl Problem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, var: Variable) -> Result<(), SolveError> {
        if self.index.contains_key(&var.id) {
            return Err(SolveError::DuplicateVariable(var.id));
        }
        self.index.insert(var.id, self.variables.len());
        self.variables.push(var);
        Ok(())
    }

    pub fn add_factor(&mut self, factor: Factor) -> Result<(), SolveError> {
        factor.validate(self)?;
        self.factors.push(factor);
        Ok(())
    }

    pub fn variable(&self, id: VarId) -> Option<&Variable> {
        self.index.get(&id).map(|&i| &self.variables[i])
    }

    pub fn variable_mut(&mut self, id: VarId) -> Option<&mut Variable> {
        let i = *self.index.get(&id)?;
        Some(&mut self.variables[i])
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factors_mut(&mut self) -> &mut [Factor] {
        &mut self.factors
    }

    pub fn set_fixed(&mut self, id: VarId, fixed: bool) {
        if let Some(v) = self.variable_mut(id) {
            v.fixed = fixed;
        }
    }

    /// Fixes or frees every pose variable.
    pub fn set_all_poses_fixed(&mut self, fixed: bool) {
        for v in &mut self.variables {
            if matches!(v.value, Value::Pose(_)) {
                v.fixed = fixed;
            }
        }
    }

    pub(crate) fn values_for(&self, factor: &Factor) -> Vec<&Value> {
        factor
            .vars
            .iter()
            .map(|id| &self.variable(*id).expect("validated at add").value)
            .collect()
    }

    /// Total robust cost: sum over factors of `s^2 * r' Sigma r`.
    pub fn total_cost(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| f.robust_cost(&self.values_for(f)))
            .sum()
    }

    /// Runs Levenberg-Marquardt; variables are updated in place.
    pub fn solve(&mut self, config: &SolveConfig) -> Result<SolveReport, SolveError> {
        solver::solve(self, config)
    }

    /// Deterministic text dump of variables and factors for debugging;
    /// field order is fixed so dumps diff cleanly.
    pub fn dump<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for v in &self.variables {
            match &v.value {
                Value::Pose(p) => {
                    let q = p.rotation.quaternion();
                    writeln!(
                        w,
                        "var {} pose fixed={} q=[{:.17e} {:.17e} {:.17e} {:.17e}] t=[{:.17e} {:.17e} {:.17e}]",
                        v.id.0, v.fixed, q.w, q.i, q.j, q.k,
                        p.translation.x, p.translation.y, p.translation.z
                    )?;
                }
                Value::Point(p) => {
                    writeln!(
                        w,
                        "var {} point fixed={} p=[{:.17e} {:.17e} {:.17e}]",
                        v.id.0, v.fixed, p.x, p.y, p.z
                    )?;
                }
            }
        }
        for (i, f) in self.factors.iter().enumerate() {
            let vars: Vec<String> = f.vars.iter().map(|v| v.0.to_string()).collect();
            let info: Vec<String> = f
                .information()
                .iter()
                .map(|x| format!("{x:.17e}"))
                .collect();
            writeln!(
                w,
                "factor {} {} vars=[{}] kernel={} info=[{}]",
                i,
                f.kind_name(),
                vars.join(" "),
                f.kernel_name(),
                info.join(" ")
            )?;
        }
        Ok(())
    }
}

pub(crate) fn symmetric_within(m: &DMatrix<f64>, tol: f64) -> bool {
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}
