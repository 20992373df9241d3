use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Problem, SolveError, Value, Variable};

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub max_iters: usize,
    pub lm_lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Skip the fixed-anchor check for callers that accept gauge freedom.
    pub allow_gauge_freedom: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            lm_lambda0: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            allow_gauge_freedom: false,
        }
    }
}

const LAMBDA_MAX: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIters,
    Stalled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Initial cost followed by the cost after each accepted step.
    pub cost_trace: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Slot {
    Fixed,
    Pose(usize),
    Point(usize),
}

/// Variable layout: free poses first (6 columns each), free points last so
/// their block-diagonal Hessian can be eliminated by a Schur complement.
struct Layout {
    slots: Vec<Slot>,
    pose_vars: Vec<usize>,
    point_vars: Vec<usize>,
}

impl Layout {
    fn build(variables: &[Variable]) -> Self {
        let mut slots = vec![Slot::Fixed; variables.len()];
        let mut pose_vars = Vec::new();
        let mut point_vars = Vec::new();
        for (i, v) in variables.iter().enumerate() {
            if v.fixed {
                continue;
            }
            match v.value {
                Value::Pose(_) => {
                    slots[i] = Slot::Pose(pose_vars.len());
                    pose_vars.push(i);
                }
                Value::Point(_) => {
                    slots[i] = Slot::Point(point_vars.len());
                    point_vars.push(i);
                }
            }
        }
        Self {
            slots,
            pose_vars,
            point_vars,
        }
    }

    fn pose_dim(&self) -> usize {
        6 * self.pose_vars.len()
    }
}

struct Normals {
    cost: f64,
    a: DMatrix<f64>,
    g_pose: DVector<f64>,
    c: Vec<DMatrix<f64>>,
    g_point: Vec<DVector<f64>>,
    /// Per point: (pose block, 6x3 cross term) pairs.
    cross: Vec<Vec<(usize, DMatrix<f64>)>>,
}

pub(super) fn solve(problem: &mut Problem, config: &SolveConfig) -> Result<SolveReport, SolveError> {
    validate(problem, config)?;
    let layout = Layout::build(problem.variables());

    let mut values: Vec<Value> = problem.variables().iter().map(|v| v.value).collect();
    let var_index: std::collections::HashMap<_, _> = problem
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.id, i))
        .collect();
    let factor_vars: Vec<Vec<usize>> = problem
        .factors()
        .iter()
        .map(|f| f.vars.iter().map(|id| var_index[id]).collect())
        .collect();

    let eval_cost = |vals: &[Value]| -> f64 {
        problem
            .factors()
            .iter()
            .zip(&factor_vars)
            .map(|(f, vars)| {
                let refs: Vec<&Value> = vars.iter().map(|&i| &vals[i]).collect();
                f.robust_cost(&refs)
            })
            .sum()
    };

    let initial_cost = eval_cost(&values);
    if !initial_cost.is_finite() {
        return Err(SolveError::NonFiniteResidual);
    }
    let mut trace = vec![initial_cost];
    let mut cost = initial_cost;
    let mut lambda = config.lm_lambda0;
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    if initial_cost <= config.abs_tol {
        return Ok(finish(
            problem,
            values,
            initial_cost,
            initial_cost,
            0,
            Termination::Converged,
            trace,
        ));
    }

    'outer: for it in 0..config.max_iters {
        let normals = linearize(problem, &factor_vars, &values, &layout);
        let mut solved_once = false;
        loop {
            match try_step(&normals, &layout, lambda) {
                Some(delta) => {
                    solved_once = true;
                    let candidate = apply_step(&values, &layout, &delta);
                    let new_cost = eval_cost(&candidate);
                    if new_cost.is_finite() && new_cost < cost {
                        let rel_drop = (cost - new_cost) / cost.max(1e-300);
                        values = candidate;
                        cost = new_cost;
                        trace.push(cost);
                        iterations = it + 1;
                        lambda = (lambda / config.lambda_down).max(1e-15);
                        if cost <= config.abs_tol || rel_drop < config.rel_tol {
                            termination = Termination::Converged;
                            break 'outer;
                        }
                        break;
                    }
                    lambda *= config.lambda_up;
                }
                None => {
                    lambda *= config.lambda_up;
                }
            }
            if lambda > LAMBDA_MAX {
                if !solved_once {
                    return Err(SolveError::SingularSystem);
                }
                termination = Termination::Stalled;
                break 'outer;
            }
        }
    }

    Ok(finish(
        problem,
        values,
        initial_cost,
        cost,
        iterations,
        termination,
        trace,
    ))
}

fn finish(
    problem: &mut Problem,
    values: Vec<Value>,
    initial_cost: f64,
    final_cost: f64,
    iterations: usize,
    termination: Termination,
    cost_trace: Vec<f64>,
) -> SolveReport {
    for (i, value) in values.into_iter().enumerate() {
        let var = &mut problem.variables[i];
        if !var.fixed {
            var.value = value;
        }
    }
    SolveReport {
        initial_cost,
        final_cost,
        iterations,
        termination,
        cost_trace,
    }
}

fn validate(problem: &Problem, config: &SolveConfig) -> Result<(), SolveError> {
    if problem.factors().is_empty() {
        return Err(SolveError::NoFactors);
    }
    let mut touched = vec![false; problem.variables().len()];
    let index: std::collections::HashMap<_, _> = problem
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.id, i))
        .collect();
    for f in problem.factors() {
        for id in &f.vars {
            let i = *index.get(id).ok_or(SolveError::MissingVariable(*id))?;
            touched[i] = true;
        }
    }
    for (i, v) in problem.variables().iter().enumerate() {
        if !v.fixed && !touched[i] {
            return Err(SolveError::UnconstrainedVariable(v.id));
        }
    }
    if !config.allow_gauge_freedom && !problem.variables().iter().any(|v| v.fixed) {
        return Err(SolveError::NoAnchor);
    }
    Ok(())
}

fn linearize(
    problem: &Problem,
    factor_vars: &[Vec<usize>],
    values: &[Value],
    layout: &Layout,
) -> Normals {
    let pose_dim = layout.pose_dim();
    let n_points = layout.point_vars.len();
    let mut normals = Normals {
        cost: 0.0,
        a: DMatrix::zeros(pose_dim, pose_dim),
        g_pose: DVector::zeros(pose_dim),
        c: vec![DMatrix::zeros(3, 3); n_points],
        g_point: vec![DVector::zeros(3); n_points],
        cross: vec![Vec::new(); n_points],
    };

    for (f, vars) in problem.factors().iter().zip(factor_vars) {
        let refs: Vec<&Value> = vars.iter().map(|&i| &values[i]).collect();
        let (cost_f, r, jacs) = f.linearize(&refs);
        normals.cost += cost_f;
        let slots: Vec<Slot> = vars.iter().map(|&i| layout.slots[i]).collect();

        for (si, slot_i) in slots.iter().enumerate() {
            match slot_i {
                Slot::Fixed => continue,
                Slot::Pose(p) => {
                    let g = jacs[si].transpose() * &r;
                    normals
                        .g_pose
                        .rows_mut(6 * p, 6)
                        .add_assign(&g);
                }
                Slot::Point(q) => {
                    let g = jacs[si].transpose() * &r;
                    normals.g_point[*q] += g;
                }
            }
            for (sj, slot_j) in slots.iter().enumerate() {
                let block = jacs[si].transpose() * &jacs[sj];
                match (slot_i, slot_j) {
                    (Slot::Pose(pi), Slot::Pose(pj)) => {
                        normals
                            .a
                            .view_mut((6 * pi, 6 * pj), (6, 6))
                            .add_assign(&block);
                    }
                    (Slot::Pose(pi), Slot::Point(qj)) => {
                        let entry = normals.cross[*qj]
                            .iter_mut()
                            .find(|(pb, _)| pb == pi);
                        match entry {
                            Some((_, e)) => *e += block,
                            None => normals.cross[*qj].push((*pi, block)),
                        }
                    }
                    (Slot::Point(qi), Slot::Point(qj)) => {
                        debug_assert_eq!(qi, qj, "no factor couples two points");
                        normals.c[*qi] += block;
                    }
                    (Slot::Point(_), Slot::Pose(_)) => {
                        // Transpose of the pose-point cross term; implied.
                    }
                    (Slot::Fixed, _) | (_, Slot::Fixed) => {}
                }
            }
        }
    }
    normals
}

/// One damped Gauss-Newton step: eliminate the point blocks, solve the
/// reduced pose system by dense Cholesky and back-substitute. Returns None
/// when the damped system is not positive definite.
fn try_step(normals: &Normals, layout: &Layout, lambda: f64) -> Option<Vec<f64>> {
    let pose_dim = layout.pose_dim();
    let mut s = normals.a.clone();
    for i in 0..pose_dim {
        s[(i, i)] += lambda * s[(i, i)].max(1e-12);
    }
    let mut rhs = -normals.g_pose.clone();

    let mut c_inv = Vec::with_capacity(layout.point_vars.len());
    for q in 0..layout.point_vars.len() {
        let mut c = normals.c[q].clone();
        for i in 0..3 {
            c[(i, i)] += lambda * c[(i, i)].max(1e-12);
        }
        let inv = c.cholesky()?.inverse();
        for (pa, ea) in &normals.cross[q] {
            let e_cinv = ea * &inv;
            rhs.rows_mut(6 * pa, 6)
                .add_assign(&(&e_cinv * &normals.g_point[q]));
            for (pb, eb) in &normals.cross[q] {
                let block = &e_cinv * eb.transpose();
                s.view_mut((6 * pa, 6 * pb), (6, 6)).sub_assign(&block);
            }
        }
        c_inv.push(inv);
    }

    let delta_pose = if pose_dim > 0 {
        s.cholesky()?.solve(&rhs)
    } else {
        DVector::zeros(0)
    };

    let mut delta = vec![0.0; pose_dim + 3 * layout.point_vars.len()];
    delta[..pose_dim].copy_from_slice(delta_pose.as_slice());
    for q in 0..layout.point_vars.len() {
        let mut rhs_q = -normals.g_point[q].clone();
        for (pa, ea) in &normals.cross[q] {
            rhs_q -= ea.transpose() * delta_pose.rows(6 * pa, 6);
        }
        let dq = &c_inv[q] * rhs_q;
        delta[pose_dim + 3 * q..pose_dim + 3 * q + 3].copy_from_slice(dq.as_slice());
    }
    Some(delta)
}

fn apply_step(values: &[Value], layout: &Layout, delta: &[f64]) -> Vec<Value> {
    let mut out = values.to_vec();
    for (p, &vi) in layout.pose_vars.iter().enumerate() {
        out[vi] = values[vi].retract(&delta[6 * p..6 * p + 6]);
    }
    let pose_dim = layout.pose_dim();
    for (q, &vi) in layout.point_vars.iter().enumerate() {
        out[vi] = values[vi].retract(&delta[pose_dim + 3 * q..pose_dim + 3 * q + 3]);
    }
    out
}

use std::ops::{AddAssign, SubAssign};
