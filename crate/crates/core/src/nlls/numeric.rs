use nalgebra::{DMatrix, DVector};

use super::{SolveError, Value};

/// Central-difference Jacobian of an arbitrary residual function with
/// respect to each variable's local increment. Serves as the independent
/// oracle for the analytic factor Jacobians.
pub fn numeric_jacobian<F>(
    residual: F,
    values: &[Value],
    eps: f64,
) -> Result<Vec<DMatrix<f64>>, SolveError>
where
    F: Fn(&[Value]) -> DVector<f64>,
{
    let base = residual(values);
    if !base.iter().all(|x| x.is_finite()) {
        return Err(SolveError::NonFiniteResidual);
    }
    let dim = base.len();
    let mut jacobians = Vec::with_capacity(values.len());
    for (vi, value) in values.iter().enumerate() {
        let local = value.local_dim();
        let mut jac = DMatrix::zeros(dim, local);
        for k in 0..local {
            let mut delta = vec![0.0; local];
            delta[k] = eps;
            let mut plus_vals = values.to_vec();
            plus_vals[vi] = value.retract(&delta);
            delta[k] = -eps;
            let mut minus_vals = values.to_vec();
            minus_vals[vi] = value.retract(&delta);
            let plus = residual(&plus_vals);
            let minus = residual(&minus_vals);
            if !(plus.iter().all(|x| x.is_finite()) && minus.iter().all(|x| x.is_finite())) {
                return Err(SolveError::NonFiniteResidual);
            }
            let col = (plus - minus) / (2.0 * eps);
            jac.set_column(k, &col);
        }
        jacobians.push(jac);
    }
    Ok(jacobians)
}
