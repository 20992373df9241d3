//! Intentionally slow, simple grid-search oracles used as an independent
//! check of the least-squares estimates. Three levels: a 1 m grid over the
//! search box, then two refinements at one tenth the scale each, giving a
//! final resolution of 0.01 m.

use nalgebra::Vector3;

use super::{pose_from_heading, SimError};
use crate::geometry::{predict_bearing, wrap_angle, Bearing, Pose};

#[derive(Debug, Clone, Copy)]
pub struct SearchBox {
    pub center: Vector3<f64>,
    pub half_extent: Vector3<f64>,
}

/// Unweighted bearing cost of a candidate point against (pose, measurement)
/// pairs; the azimuth residual is wrapped.
pub fn bearing_cost(point: &Vector3<f64>, observations: &[(Pose, Bearing)]) -> f64 {
    let mut cost = 0.0;
    for (pose, meas) in observations {
        match predict_bearing(pose, point) {
            Ok(pred) => {
                cost += (pred.theta - meas.theta).powi(2)
                    + wrap_angle(pred.phi - meas.phi).powi(2);
            }
            Err(_) => return f64::INFINITY,
        }
    }
    cost
}

/// Bearing cost of a candidate pose against (measurement, landmark) pairs.
pub fn pose_bearing_cost(pose: &Pose, correspondences: &[(Bearing, Vector3<f64>)]) -> f64 {
    let mut cost = 0.0;
    for (meas, lm) in correspondences {
        match predict_bearing(pose, lm) {
            Ok(pred) => {
                cost += (pred.theta - meas.theta).powi(2)
                    + wrap_angle(pred.phi - meas.phi).powi(2);
            }
            Err(_) => return f64::INFINITY,
        }
    }
    cost
}

const LEVEL_SPACINGS: [f64; 3] = [1.0, 0.1, 0.01];
/// Refinement window in units of the previous level's spacing. Wider than
/// one cell because the discrete argmin of a flat cost valley can sit a few
/// cells from the continuous optimum.
const REFINE_WINDOW: f64 = 2.5;

fn grid_search_point<F: Fn(&Vector3<f64>) -> f64>(
    cost: F,
    bbox: &SearchBox,
) -> (Vector3<f64>, f64) {
    let mut center = bbox.center;
    let mut half = bbox.half_extent;
    let mut best = (center, f64::INFINITY);
    for spacing in LEVEL_SPACINGS {
        let steps = |h: f64| (h / spacing).ceil() as i64;
        let (nx, ny, nz) = (steps(half.x), steps(half.y), steps(half.z));
        for ix in -nx..=nx {
            for iy in -ny..=ny {
                for iz in -nz..=nz {
                    let p = center
                        + Vector3::new(
                            ix as f64 * spacing,
                            iy as f64 * spacing,
                            iz as f64 * spacing,
                        );
                    let c = cost(&p);
                    if c < best.1 {
                        best = (p, c);
                    }
                }
            }
        }
        center = best.0;
        let w = REFINE_WINDOW * spacing;
        half = Vector3::new(w, w, w);
    }
    best
}

/// Dense grid search for the point minimizing the bearing cost.
pub fn oracle_triangulate(
    observations: &[(Pose, Bearing)],
    bbox: &SearchBox,
) -> Result<Vector3<f64>, SimError> {
    if observations.len() < 2 {
        return Err(SimError::DegenerateGeometry(format!(
            "need >= 2 observations, got {}",
            observations.len()
        )));
    }
    let dirs: Vec<Vector3<f64>> = observations
        .iter()
        .map(|(pose, b)| pose.rotate(&b.direction()))
        .collect();
    let mut max_angle = 0.0f64;
    for i in 0..dirs.len() {
        for j in (i + 1)..dirs.len() {
            max_angle = max_angle.max(dirs[i].dot(&dirs[j]).clamp(-1.0, 1.0).acos());
        }
    }
    if max_angle < 1e-6 {
        return Err(SimError::DegenerateGeometry(
            "rays are parallel; no parallax".into(),
        ));
    }
    let (best, cost) = grid_search_point(|p| bearing_cost(p, observations), bbox);
    if !cost.is_finite() {
        return Err(SimError::DegenerateGeometry(
            "no finite cost in the search box".into(),
        ));
    }
    Ok(best)
}

/// Dense grid search over position and yaw (4 dof) for the body pose
/// minimizing the bearing cost; yaw is sampled at 360 one-degree steps at
/// the coarse level, then refined with the position.
pub fn oracle_pose(
    correspondences: &[(Bearing, Vector3<f64>)],
    bbox: &SearchBox,
) -> Result<(Vector3<f64>, f64), SimError> {
    if correspondences.len() < 3 {
        return Err(SimError::DegenerateGeometry(format!(
            "need >= 3 correspondences, got {}",
            correspondences.len()
        )));
    }
    // All landmarks on one line leave the pose ambiguous.
    let centroid = correspondences
        .iter()
        .fold(Vector3::zeros(), |acc, (_, lm)| acc + lm)
        / correspondences.len() as f64;
    let mut scatter = nalgebra::Matrix3::<f64>::zeros();
    for (_, lm) in correspondences {
        let d = lm - centroid;
        scatter += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(scatter);
    let mut evs: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    evs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if evs[1] < 1e-9 * evs[0].max(1e-12) {
        return Err(SimError::DegenerateGeometry(
            "landmarks are collinear".into(),
        ));
    }

    let yaw_levels: [(f64, f64); 3] = [
        (std::f64::consts::PI, 1.0f64.to_radians()),
        (5.0f64.to_radians(), 0.5f64.to_radians()),
        (0.5f64.to_radians(), 0.05f64.to_radians()),
    ];
    let mut center = bbox.center;
    let mut half = bbox.half_extent;
    let mut yaw_center = 0.0;
    let mut best = (center, 0.0, f64::INFINITY);
    for (level, spacing) in LEVEL_SPACINGS.iter().enumerate() {
        let (yaw_half, yaw_step) = yaw_levels[level];
        let steps = |h: f64| (h / spacing).ceil() as i64;
        let (nx, ny, nz) = (steps(half.x), steps(half.y), steps(half.z));
        let n_yaw = (yaw_half / yaw_step).round() as i64;
        for ix in -nx..=nx {
            for iy in -ny..=ny {
                for iz in -nz..=nz {
                    let p = center
                        + Vector3::new(
                            ix as f64 * spacing,
                            iy as f64 * spacing,
                            iz as f64 * spacing,
                        );
                    for iy_yaw in -n_yaw..n_yaw {
                        let yaw = yaw_center + iy_yaw as f64 * yaw_step;
                        let pose = pose_from_heading(p, yaw);
                        let c = pose_bearing_cost(&pose, correspondences);
                        if c < best.2 {
                            best = (p, yaw, c);
                        }
                    }
                }
            }
        }
        center = best.0;
        yaw_center = best.1;
        let w = REFINE_WINDOW * spacing;
        half = Vector3::new(w, w, w);
    }
    if !best.2.is_finite() {
        return Err(SimError::DegenerateGeometry(
            "no finite cost in the search box".into(),
        ));
    }
    Ok((best.0, wrap_angle(best.1)))
}
