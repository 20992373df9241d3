//! Phase 2: register geotagged panoramas against the phase-1 landmark map.
//! Each panorama's rectilinear views are localized by bearing factors to
//! the fixed landmarks, either independently per view or with all views of
//! one panorama rigidly connected (shared position, fixed yaw offsets).
//! Accepted estimates anchor a 4-dof trajectory-to-world transform that
//! georeferences every camera pose. Panoramas never constrain each other.

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::dataset::PanoRecord;
use crate::geo::{enu_to_gps, gps_to_enu, GeoPoint};
use crate::geometry::enu::{rotation_from_heading, upright_alignment};
use crate::geometry::{
    bearing_of_pixel, predict_bearing, view_intrinsics, view_rotation, wrap_angle, Bearing, Pose,
};
use crate::nlls::{
    Factor, Kernel, Problem, SolveConfig, SolveError, SolveReport, Termination, Value, VarId,
    Variable,
};
use crate::pointmap::TrajectoryEstimate;
use crate::tracks::{match_descriptors, DescriptorDistance, Feature, Track};

#[derive(Debug, Error)]
pub enum RegisterError {
    #[error("panorama {pano}: {got} correspondences, need {min}")]
    NoCorrespondences {
        pano: String,
        got: usize,
        min: usize,
    },
    #[error("no view reaches the per-view correspondence minimum")]
    UnderConstrained,
    #[error("no accepted panorama estimate to georeference from")]
    NoAcceptedPanoramas,
    #[error(transparent)]
    Solver(#[from] SolveError),
}

#[derive(Debug, Clone)]
pub struct RegisterConfig {
    pub ratio: f64,
    /// Minimum correspondences across all views of a panorama.
    pub min_corr: usize,
    /// Minimum correspondences for a view to be optimized.
    pub min_view_corr: usize,
    /// Yaw offset between consecutive rig views, degrees.
    pub rig_spacing_deg: f64,
    /// Information placed on the rig's relative-pose constraints.
    pub rig_info: f64,
    pub sigma_bearing_rad: f64,
    pub dcs_on_bearing: bool,
    pub dcs_phi: f64,
    /// Yaw candidates for the initialization grid.
    pub yaw_grid: usize,
    /// Camera pushback from the landmark centroid at initialization, m.
    pub init_pushback_m: f64,
    pub max_pano_dist_m: f64,
    pub solve: SolveConfig,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        Self {
            ratio: 0.7,
            min_corr: 12,
            min_view_corr: 6,
            rig_spacing_deg: 45.0,
            rig_info: 1e8,
            sigma_bearing_rad: 0.005,
            dcs_on_bearing: true,
            dcs_phi: 1.0,
            yaw_grid: 12,
            init_pushback_m: 10.0,
            max_pano_dist_m: 100.0,
            solve: SolveConfig::default(),
        }
    }
}

/// One view-keypoint-to-landmark association with its precomputed bearing.
#[derive(Debug, Clone)]
pub struct Correspondence {
    pub view_index: usize,
    pub keypoint: [f64; 2],
    pub landmark: u64,
    pub bearing: Bearing,
}

/// All correspondences of one panorama, grouped by view.
#[derive(Debug, Clone)]
pub struct CorrespondenceSet {
    pub pano_id: String,
    pub items: Vec<Correspondence>,
    /// View index -> yaw (radians) within the panorama rig.
    pub view_yaws: BTreeMap<usize, f64>,
}

impl CorrespondenceSet {
    pub fn of_view(&self, view: usize) -> impl Iterator<Item = &Correspondence> {
        self.items.iter().filter(move |c| c.view_index == view)
    }

    fn views_with_at_least(&self, min: usize) -> Vec<usize> {
        self.view_yaws
            .keys()
            .copied()
            .filter(|v| self.of_view(*v).count() >= min)
            .collect()
    }
}

/// Matches the features of a panorama's accepted views against the solved
/// tracks (one mean descriptor per track bound to a landmark) and converts
/// each matched keypoint to a bearing through the view's pinhole model:
/// the focal length comes from the known field of view, the principal
/// point is the image center.
pub fn build_correspondences(
    pano: &PanoRecord,
    accepted_views: &[usize],
    estimate: &TrajectoryEstimate,
    tracks: &[Track],
    cfg: &RegisterConfig,
) -> Result<CorrespondenceSet, RegisterError> {
    let bound_tracks: Vec<(&Track, u64)> = tracks
        .iter()
        .filter_map(|t| estimate.landmark_of_track(t.id).map(|lm| (t, lm)))
        .collect();
    let track_features: Vec<Feature> = bound_tracks
        .iter()
        .map(|(t, _)| Feature {
            keypoint: [0.0, 0.0],
            descriptor: t.mean_descriptor(),
        })
        .collect();

    let mut items = Vec::new();
    let mut view_yaws = BTreeMap::new();
    for view in &pano.views {
        if !accepted_views.contains(&view.view_index) {
            continue;
        }
        view_yaws.insert(view.view_index, view.yaw_deg.to_radians());
        if view.features.is_empty() || track_features.is_empty() {
            continue;
        }
        let k = match view_intrinsics(view.fov_deg.to_radians(), view.size_px) {
            Ok(k) => k,
            Err(_) => continue,
        };
        let view_features: Vec<Feature> = view.features.iter().map(Feature::from).collect();
        let Ok(pairs) = match_descriptors(
            &view_features,
            &track_features,
            cfg.ratio,
            DescriptorDistance::Euclidean,
        ) else {
            continue;
        };
        for (vi, ti) in pairs {
            let keypoint = view_features[vi].keypoint;
            items.push(Correspondence {
                view_index: view.view_index,
                keypoint,
                landmark: bound_tracks[ti].1,
                bearing: bearing_of_pixel(&k, keypoint[0], keypoint[1]),
            });
        }
    }
    if items.len() < cfg.min_corr {
        return Err(RegisterError::NoCorrespondences {
            pano: pano.id.clone(),
            got: items.len(),
            min: cfg.min_corr,
        });
    }
    Ok(CorrespondenceSet {
        pano_id: pano.id.clone(),
        items,
        view_yaws,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RigMode {
    Independent,
    Connected,
}

#[derive(Debug, Clone)]
pub struct ViewPoseEstimate {
    pub view_index: usize,
    pub pose: Pose,
    pub correspondences: usize,
}

/// Pose estimate of one panorama in the trajectory frame.
#[derive(Debug, Clone)]
pub struct PanoPoseEstimate {
    pub pano_id: String,
    pub mode: RigMode,
    pub views: Vec<ViewPoseEstimate>,
    /// Pose of the panorama frame (view yaw removed). In connected mode the
    /// view poses are regenerated from this rig pose, so they share its
    /// translation exactly.
    pub rig_pose: Pose,
    pub matched_landmarks: usize,
    pub report: SolveReport,
}

fn unweighted_cost(pose: &Pose, corr: &[&Correspondence], lms: &BTreeMap<u64, Vector3<f64>>) -> f64 {
    let mut cost = 0.0;
    for c in corr {
        let lm = lms[&c.landmark];
        match predict_bearing(pose, &lm) {
            Ok(pred) => {
                cost += (pred.theta - c.bearing.theta).powi(2)
                    + wrap_angle(pred.phi - c.bearing.phi).powi(2);
            }
            Err(_) => return f64::INFINITY,
        }
    }
    cost
}

/// The bearing-only cost has yaw-dependent local minima, so the start pose
/// comes from a coarse search: position at the matched-landmark centroid
/// pushed back along the mean view direction, swept over a yaw grid. The
/// candidates are upright in the trajectory frame, meaning the yaw sweep
/// rotates about the anchor camera's vertical (body y) axis; the full 6-dof
/// refinement follows.
fn grid_init(
    corr: &[&Correspondence],
    lms: &BTreeMap<u64, Vector3<f64>>,
    cfg: &RegisterConfig,
) -> Pose {
    let centroid = corr
        .iter()
        .fold(Vector3::zeros(), |acc, c| acc + lms[&c.landmark])
        / corr.len() as f64;
    let mean_dir = corr
        .iter()
        .fold(Vector3::zeros(), |acc, c| acc + c.bearing.direction());
    let mean_dir = if mean_dir.norm() > 1e-9 {
        mean_dir.normalize()
    } else {
        Vector3::new(0.0, 0.0, 1.0)
    };
    let mut best: Option<(Pose, f64)> = None;
    for i in 0..cfg.yaw_grid.max(1) {
        let yaw = i as f64 * 2.0 * std::f64::consts::PI / cfg.yaw_grid.max(1) as f64;
        let rot = view_rotation(yaw, 0.0);
        let pos = centroid - cfg.init_pushback_m * (rot * mean_dir);
        let pose = Pose::new(UnitQuaternion::from_rotation_matrix(&rot), pos);
        let cost = unweighted_cost(&pose, corr, lms);
        if best.as_ref().map_or(true, |(_, c)| cost < *c) {
            best = Some((pose, cost));
        }
    }
    best.expect("yaw grid nonempty").0
}

fn bearing_info(cfg: &RegisterConfig) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_diagonal_element(
        2,
        2,
        1.0 / (cfg.sigma_bearing_rad * cfg.sigma_bearing_rad),
    )
}

/// Solves the pose problem in two passes: plain least squares first, then
/// (when enabled) a robust re-solve with the DCS kernel on the bearing
/// factors. The robust cost of a far-off initialization sits in the
/// kernel's decaying tail where gradient steps toward the optimum look like
/// cost increases, so the kernel only engages once the plain solve has
/// reached the right basin.
fn solve_two_pass(problem: &mut Problem, cfg: &RegisterConfig) -> Result<SolveReport, SolveError> {
    let plain = problem.solve(&cfg.solve)?;
    if !cfg.dcs_on_bearing {
        return Ok(plain);
    }
    for f in problem.factors_mut() {
        if matches!(f.kind, crate::nlls::FactorKind::Bearing { .. }) {
            f.kernel = Kernel::Dcs { phi: cfg.dcs_phi };
        }
    }
    problem.solve(&cfg.solve)
}

fn landmark_positions(estimate: &TrajectoryEstimate) -> BTreeMap<u64, Vector3<f64>> {
    estimate
        .landmarks
        .iter()
        .map(|(id, p)| (*id, Vector3::from(*p)))
        .collect()
}

fn add_landmark_vars(
    problem: &mut Problem,
    corr: &[&Correspondence],
    lms: &BTreeMap<u64, Vector3<f64>>,
) -> Result<(), SolveError> {
    let mut seen = std::collections::BTreeSet::new();
    for c in corr {
        if seen.insert(c.landmark) {
            problem.add_variable(Variable {
                id: crate::pointmap::landmark_var(c.landmark),
                value: Value::Point(lms[&c.landmark]),
                fixed: true,
            })?;
        }
    }
    Ok(())
}

fn merge_reports(reports: Vec<SolveReport>) -> SolveReport {
    let mut merged = SolveReport {
        initial_cost: 0.0,
        final_cost: 0.0,
        iterations: 0,
        termination: Termination::Converged,
        cost_trace: Vec::new(),
    };
    for r in reports {
        merged.initial_cost += r.initial_cost;
        merged.final_cost += r.final_cost;
        merged.iterations = merged.iterations.max(r.iterations);
        if r.termination != Termination::Converged {
            merged.termination = r.termination;
        }
        merged.cost_trace.extend(r.cost_trace);
    }
    merged
}

/// Removes the view yaw from a view pose, giving the panorama-frame pose.
fn rig_of_view(view_pose: &Pose, yaw: f64) -> Pose {
    let unyaw = UnitQuaternion::from_rotation_matrix(&view_rotation(yaw, 0.0)).inverse();
    Pose::new(view_pose.rotation * unyaw, view_pose.translation)
}

/// Mean pose: arithmetic translation mean, quaternion mean through the
/// tangent space of the first rotation.
fn mean_pose(poses: &[Pose]) -> Pose {
    let t = poses
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.translation)
        / poses.len() as f64;
    let q0 = poses[0].rotation;
    let mut delta = Vector3::zeros();
    for p in poses {
        delta += crate::geometry::so3::log(&(q0.inverse() * p.rotation));
    }
    delta /= poses.len() as f64;
    Pose::new(q0 * crate::geometry::so3::exp(&delta), t)
}

/// Independent-view registration: every view with enough correspondences is
/// optimized on its own against the fixed landmarks.
pub fn localize_independent(
    corr: &CorrespondenceSet,
    estimate: &TrajectoryEstimate,
    cfg: &RegisterConfig,
) -> Result<PanoPoseEstimate, RegisterError> {
    let lms = landmark_positions(estimate);
    let views = corr.views_with_at_least(cfg.min_view_corr);
    if views.is_empty() {
        return Err(RegisterError::UnderConstrained);
    }
    let mut view_estimates = Vec::new();
    let mut reports = Vec::new();
    let mut matched = std::collections::BTreeSet::new();
    for v in views {
        let vc: Vec<&Correspondence> = corr.of_view(v).collect();
        for c in &vc {
            matched.insert(c.landmark);
        }
        let mut problem = Problem::new();
        let pose_id = VarId(v as u64);
        problem
            .add_variable(Variable {
                id: pose_id,
                value: Value::Pose(grid_init(&vc, &lms, cfg)),
                fixed: false,
            })
            .map_err(RegisterError::Solver)?;
        add_landmark_vars(&mut problem, &vc, &lms)?;
        for c in &vc {
            problem
                .add_factor(Factor::bearing(
                    pose_id,
                    crate::pointmap::landmark_var(c.landmark),
                    c.bearing,
                    bearing_info(cfg),
                    Kernel::None,
                )?)
                .map_err(RegisterError::Solver)?;
        }
        let report = solve_two_pass(&mut problem, cfg)?;
        let pose = *problem
            .variable(pose_id)
            .unwrap()
            .value
            .as_pose()
            .expect("pose variable");
        view_estimates.push(ViewPoseEstimate {
            view_index: v,
            pose,
            correspondences: vc.len(),
        });
        reports.push(report);
    }
    let rigs: Vec<Pose> = view_estimates
        .iter()
        .map(|v| rig_of_view(&v.pose, corr.view_yaws[&v.view_index]))
        .collect();
    Ok(PanoPoseEstimate {
        pano_id: corr.pano_id.clone(),
        mode: RigMode::Independent,
        rig_pose: mean_pose(&rigs),
        views: view_estimates,
        matched_landmarks: matched.len(),
        report: merge_reports(reports),
    })
}

/// Connected registration: all views of the panorama share one problem with
/// hard inter-view constraints (identical translation, fixed relative yaw,
/// zero relative pitch/roll) realized as high-information relative-pose
/// factors. The reported estimate is projected onto the exact rig manifold:
/// the rig pose is the information-weighted mean of the per-view rig poses
/// and the view poses are regenerated from it.
pub fn localize_connected(
    corr: &CorrespondenceSet,
    estimate: &TrajectoryEstimate,
    cfg: &RegisterConfig,
) -> Result<PanoPoseEstimate, RegisterError> {
    let lms = landmark_positions(estimate);
    let views = corr.views_with_at_least(cfg.min_view_corr);
    if views.is_empty() {
        return Err(RegisterError::UnderConstrained);
    }

    let mut problem = Problem::new();
    // Initialize the whole rig from the best-supported view.
    let best_view = *views
        .iter()
        .max_by_key(|v| corr.of_view(**v).count())
        .unwrap();
    let best_corr: Vec<&Correspondence> = corr.of_view(best_view).collect();
    let best_init = grid_init(&best_corr, &lms, cfg);
    let rig_init = rig_of_view(&best_init, corr.view_yaws[&best_view]);

    let mut all_corr: Vec<&Correspondence> = Vec::new();
    let mut matched = std::collections::BTreeSet::new();
    for &v in &views {
        let yaw = corr.view_yaws[&v];
        let view_pose = Pose::new(
            rig_init.rotation * UnitQuaternion::from_rotation_matrix(&view_rotation(yaw, 0.0)),
            rig_init.translation,
        );
        problem
            .add_variable(Variable {
                id: VarId(v as u64),
                value: Value::Pose(view_pose),
                fixed: false,
            })
            .map_err(RegisterError::Solver)?;
        for c in corr.of_view(v) {
            matched.insert(c.landmark);
        }
        all_corr.extend(corr.of_view(v));
    }
    add_landmark_vars(&mut problem, &all_corr, &lms)?;
    for c in &all_corr {
        problem
            .add_factor(Factor::bearing(
                VarId(c.view_index as u64),
                crate::pointmap::landmark_var(c.landmark),
                c.bearing,
                bearing_info(cfg),
                Kernel::None,
            )?)
            .map_err(RegisterError::Solver)?;
    }
    // Rig constraints between consecutive optimized views.
    for w in views.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d_yaw = corr.view_yaws[&b] - corr.view_yaws[&a];
        let spacing = cfg.rig_spacing_deg.to_radians();
        let steps = (d_yaw / spacing).round();
        let measured = Pose::new(
            UnitQuaternion::from_rotation_matrix(&view_rotation(steps * spacing, 0.0)),
            Vector3::zeros(),
        );
        problem
            .add_factor(Factor::relative_pose(
                VarId(a as u64),
                VarId(b as u64),
                measured,
                nalgebra::DMatrix::from_diagonal_element(6, 6, cfg.rig_info),
                Kernel::None,
            )?)
            .map_err(RegisterError::Solver)?;
    }
    let report = solve_two_pass(&mut problem, cfg)?;

    let solved: Vec<(usize, Pose)> = views
        .iter()
        .map(|&v| {
            (
                v,
                *problem
                    .variable(VarId(v as u64))
                    .unwrap()
                    .value
                    .as_pose()
                    .expect("pose variable"),
            )
        })
        .collect();
    let rigs: Vec<Pose> = solved
        .iter()
        .map(|(v, p)| rig_of_view(p, corr.view_yaws[v]))
        .collect();
    let rig_pose = mean_pose(&rigs);
    let view_estimates = solved
        .iter()
        .map(|(v, _)| ViewPoseEstimate {
            view_index: *v,
            pose: Pose::new(
                rig_pose.rotation
                    * UnitQuaternion::from_rotation_matrix(&view_rotation(
                        corr.view_yaws[v],
                        0.0,
                    )),
                rig_pose.translation,
            ),
            correspondences: corr.of_view(*v).count(),
        })
        .collect();
    Ok(PanoPoseEstimate {
        pano_id: corr.pano_id.clone(),
        mode: RigMode::Connected,
        views: view_estimates,
        rig_pose,
        matched_landmarks: matched.len(),
        report,
    })
}

/// Accepts an estimate only if its rig center lies within `max_dist` of the
/// nearest trajectory pose (closed threshold). Far estimates are spurious
/// registrations and are never reported.
pub fn reject_far_estimate(
    estimate: &PanoPoseEstimate,
    trajectory: &TrajectoryEstimate,
    max_dist: f64,
) -> bool {
    let nearest = trajectory
        .poses
        .iter()
        .map(|p| (Vector3::from(p.t) - estimate.rig_pose.translation).norm())
        .fold(f64::INFINITY, f64::min);
    nearest <= max_dist
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanoResidual {
    pub pano_id: String,
    pub position_m: f64,
    pub yaw_rad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraGps {
    pub frame_id: u64,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub rel_height_m: f64,
    pub source_pano_ids: Vec<String>,
}

/// The solved 4-dof trajectory-to-world transform and the per-camera GPS
/// output. World coordinates are ENU at `reference` (the first accepted
/// panorama's geotag); heights are relative to the panorama centers since
/// geotags carry no altitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeoRegistration {
    pub reference: GeoPoint,
    pub yaw_rad: f64,
    pub translation: [f64; 3],
    pub per_pano: Vec<PanoResidual>,
    pub camera_gps: Vec<CameraGps>,
}

/// Solves the small least squares for the shared 4-dof (x, y, z, yaw)
/// transform mapping the trajectory frame into world ENU: each accepted
/// panorama's geotag plus heading anchors one observation of the transform;
/// with several panoramas the yaw is their circular mean and the
/// translation the mean of the implied offsets, with per-panorama residual
/// disagreement reported.
pub fn georeference(
    trajectory: &TrajectoryEstimate,
    estimates: &[PanoPoseEstimate],
    records: &[PanoRecord],
) -> Result<GeoRegistration, RegisterError> {
    let mut anchors = Vec::new();
    for est in estimates {
        let Some(rec) = records.iter().find(|r| r.id == est.pano_id) else {
            continue;
        };
        anchors.push((est, rec));
    }
    if anchors.is_empty() {
        return Err(RegisterError::NoAcceptedPanoramas);
    }
    let reference = GeoPoint::new(anchors[0].1.lat_deg, anchors[0].1.lon_deg)
        .expect("pano geotag is a valid GeoPoint");

    let a = upright_alignment();
    // Per-panorama yaw observation of the trajectory-to-world rotation.
    let mut yaws = Vec::new();
    let mut world_poses = Vec::new();
    for (est, rec) in &anchors {
        let (e, n) = gps_to_enu(
            &reference,
            &GeoPoint::new(rec.lat_deg, rec.lon_deg).expect("valid geotag"),
        )
        .expect("panoramas within tangent range");
        let world_rot = rotation_from_heading(rec.heading_deg.to_radians());
        let q = world_rot.matrix() * est.rig_pose.rotation.to_rotation_matrix().matrix().transpose();
        // q should be Rz(yaw) * A for an upright trajectory frame.
        let m = q * a.matrix().transpose();
        yaws.push((m[(1, 0)] - m[(0, 1)]).atan2(m[(0, 0)] + m[(1, 1)]));
        world_poses.push((Vector3::new(e, n, 0.0), est.rig_pose.translation));
    }
    // Circular mean of the yaw observations.
    let (s, c) = yaws
        .iter()
        .fold((0.0, 0.0), |(s, c), y| (s + y.sin(), c + y.cos()));
    let yaw = s.atan2(c);
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw) * a;
    let translation = world_poses
        .iter()
        .fold(Vector3::zeros(), |acc, (world, traj)| {
            acc + (world - rot * traj)
        })
        / world_poses.len() as f64;

    let per_pano = anchors
        .iter()
        .zip(yaws.iter().zip(&world_poses))
        .map(|((est, _), (y, (world, traj)))| PanoResidual {
            pano_id: est.pano_id.clone(),
            position_m: (world - (rot * traj + translation)).norm(),
            yaw_rad: wrap_angle(y - yaw).abs(),
        })
        .collect();

    let source_pano_ids: Vec<String> = anchors.iter().map(|(e, _)| e.pano_id.clone()).collect();
    let camera_gps = trajectory
        .poses
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let world = rot * Vector3::from(p.t) + translation;
            let gps = enu_to_gps(&reference, world.x, world.y);
            CameraGps {
                frame_id: k as u64,
                lat_deg: gps.lat_deg,
                lon_deg: gps.lon_deg,
                rel_height_m: world.z,
                source_pano_ids: source_pano_ids.clone(),
            }
        })
        .collect();

    Ok(GeoRegistration {
        reference,
        yaw_rad: yaw,
        translation: [translation.x, translation.y, translation.z],
        per_pano,
        camera_gps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointmap::{self, PointMapConfig};
    use crate::simworld::{self, ground_truth_tracks, PanoSpec, WorldSpec};
    use crate::tracks::TrackStatus;

    fn noise_free_spec(seed: u64) -> WorldSpec {
        WorldSpec {
            seed,
            n_landmarks: 70,
            dist_band: [15.0, 30.0],
            waypoints: vec![[0.0, 0.0], [10.0, 0.0]],
            step_length_m: 0.5,
            odom_sigma_t_frac: 0.0,
            odom_sigma_r_deg: 0.0,
            pixel_noise_px: 0.0,
            descriptor_noise: 0.0,
            outlier_frac: 0.0,
            panoramas: vec![
                PanoSpec {
                    pos: [5.0, -5.0, 1.6],
                    heading_deg: 20.0,
                },
                PanoSpec {
                    pos: [9.0, 4.0, 1.6],
                    heading_deg: 250.0,
                },
            ],
            ..Default::default()
        }
    }

    struct Setup {
        ds: simworld::SimDataset,
        gt: simworld::GroundTruth,
        tracks: Vec<Track>,
        est: TrajectoryEstimate,
    }

    fn setup(seed: u64) -> Setup {
        let spec = noise_free_spec(seed);
        let (ds, gt) = simworld::generate(&spec).unwrap();
        let tracks = ground_truth_tracks(&gt, &ds.frames, 3);
        let rels: Vec<Pose> = ds.odometry.iter().map(|o| o.rel_pose.pose()).collect();
        let est = pointmap::estimate(&rels, &tracks, &spec.camera, &PointMapConfig::default())
            .unwrap();
        Setup {
            ds,
            gt,
            tracks,
            est,
        }
    }

    fn all_views() -> Vec<usize> {
        (0..crate::geometry::STANDARD_VIEW_COUNT).collect()
    }

    /// Ground-truth pano pose expressed in the trajectory frame.
    fn gt_pano_in_traj(gt: &simworld::GroundTruth, idx: usize) -> Pose {
        gt.poses[0].inverse().compose(&gt.pano_poses[idx])
    }

    #[test]
    fn correspondences_cover_the_visible_landmarks() {
        let s = setup(1);
        let corr = build_correspondences(
            &s.ds.panos[0],
            &all_views(),
            &s.est,
            &s.tracks,
            &RegisterConfig::default(),
        )
        .unwrap();
        // Noise-free identity descriptors: every view feature whose landmark
        // was solved must match.
        let solved: std::collections::BTreeSet<u64> =
            s.est.bindings.iter().map(|(_, lm)| *lm).collect();
        assert!(corr.items.len() >= 30, "only {}", corr.items.len());
        for c in &corr.items {
            assert!(solved.contains(&c.landmark));
        }
    }

    #[test]
    fn disjoint_scene_has_no_correspondences() {
        let s = setup(2);
        // A second, unrelated world provides the disjoint panorama.
        let other = setup(77);
        let err = build_correspondences(
            &other.ds.panos[0],
            &all_views(),
            &s.est,
            &s.tracks,
            &RegisterConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, RegisterError::NoCorrespondences { .. }));
    }

    #[test]
    fn unbound_tracks_are_excluded() {
        let s = setup(3);
        // Tracks not bound to a landmark (e.g. rejected at triangulation)
        // must contribute nothing: pass only tracks with no binding.
        let unbound: Vec<Track> = s
            .tracks
            .iter()
            .filter(|t| s.est.landmark_of_track(t.id).is_none())
            .cloned()
            .collect();
        let result = build_correspondences(
            &s.ds.panos[0],
            &all_views(),
            &s.est,
            &unbound,
            &RegisterConfig::default(),
        );
        assert!(matches!(
            result,
            Err(RegisterError::NoCorrespondences { .. })
        ));
    }

    #[test]
    fn independent_views_recover_truth_on_noise_free_data() {
        let s = setup(4);
        let cfg = RegisterConfig::default();
        let corr =
            build_correspondences(&s.ds.panos[0], &all_views(), &s.est, &s.tracks, &cfg).unwrap();
        let est = localize_independent(&corr, &s.est, &cfg).unwrap();
        let truth = gt_pano_in_traj(&s.gt, 0);
        for v in &est.views {
            let yaw = corr.view_yaws[&v.view_index];
            let rig = rig_of_view(&v.pose, yaw);
            let (da, dt) = rig.separation(&truth);
            assert!(da < 1e-6 && dt < 1e-5, "view {}: da={da} dt={dt}", v.view_index);
        }
        let (da, dt) = est.rig_pose.separation(&truth);
        assert!(da < 1e-6 && dt < 1e-5, "rig: da={da} dt={dt}");
    }

    #[test]
    fn connected_rig_is_exact_and_rigid() {
        let s = setup(5);
        let cfg = RegisterConfig::default();
        let corr =
            build_correspondences(&s.ds.panos[0], &all_views(), &s.est, &s.tracks, &cfg).unwrap();
        let est = localize_connected(&corr, &s.est, &cfg).unwrap();
        let truth = gt_pano_in_traj(&s.gt, 0);
        let (da, dt) = est.rig_pose.separation(&truth);
        assert!(da < 1e-6 && dt < 1e-5, "rig: da={da} dt={dt}");
        // All view translations identical and yaws spaced by the rig step.
        for pair in est.views.windows(2) {
            let d = (pair[0].pose.translation - pair[1].pose.translation).norm();
            assert!(d < 1e-9, "translations differ by {d}");
            let rel = pair[0].pose.inverse().compose(&pair[1].pose);
            let expected = (corr.view_yaws[&pair[1].view_index]
                - corr.view_yaws[&pair[0].view_index])
                .abs();
            assert!((rel.rotation_angle() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn landmarks_are_never_modified_by_phase_two() {
        let s = setup(6);
        let cfg = RegisterConfig::default();
        let before = s.est.landmarks.clone();
        let corr =
            build_correspondences(&s.ds.panos[0], &all_views(), &s.est, &s.tracks, &cfg).unwrap();
        let _ = localize_independent(&corr, &s.est, &cfg).unwrap();
        let _ = localize_connected(&corr, &s.est, &cfg).unwrap();
        // Bit-identical.
        assert_eq!(before, s.est.landmarks);
    }

    #[test]
    fn panorama_independence() {
        // Solving panorama 0 is unaffected by panorama 1's presence: the
        // estimate depends only on its own correspondence set.
        let s = setup(7);
        let cfg = RegisterConfig::default();
        let corr0 =
            build_correspondences(&s.ds.panos[0], &all_views(), &s.est, &s.tracks, &cfg).unwrap();
        let a = localize_connected(&corr0, &s.est, &cfg).unwrap();
        let _corr1 =
            build_correspondences(&s.ds.panos[1], &all_views(), &s.est, &s.tracks, &cfg).unwrap();
        let b = localize_connected(&corr0, &s.est, &cfg).unwrap();
        assert_eq!(a.rig_pose.translation, b.rig_pose.translation);
        assert_eq!(a.rig_pose.rotation, b.rig_pose.rotation);
    }

    #[test]
    fn single_view_degenerates_to_a_plain_solve() {
        let s = setup(8);
        let cfg = RegisterConfig::default();
        // Keep only one view's correspondences.
        let full =
            build_correspondences(&s.ds.panos[0], &all_views(), &s.est, &s.tracks, &cfg).unwrap();
        let view = *full
            .view_yaws
            .keys()
            .find(|v| full.of_view(**v).count() >= cfg.min_view_corr)
            .expect("some view has enough correspondences");
        let single = CorrespondenceSet {
            pano_id: full.pano_id.clone(),
            items: full
                .items
                .iter()
                .filter(|c| c.view_index == view)
                .cloned()
                .collect(),
            view_yaws: full
                .view_yaws
                .iter()
                .filter(|(v, _)| **v == view)
                .map(|(v, y)| (*v, *y))
                .collect(),
        };
        let est = localize_connected(&single, &s.est, &cfg).unwrap();
        assert_eq!(est.views.len(), 1);
        let truth = gt_pano_in_traj(&s.gt, 0);
        let (da, dt) = est.rig_pose.separation(&truth);
        assert!(da < 1e-5 && dt < 1e-4, "da={da} dt={dt}");
    }

    #[test]
    fn far_estimates_are_rejected_at_the_closed_threshold() {
        let s = setup(9);
        let mk = |d: f64| PanoPoseEstimate {
            pano_id: "x".into(),
            mode: RigMode::Connected,
            views: Vec::new(),
            rig_pose: Pose::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, d)),
            matched_landmarks: 0,
            report: SolveReport {
                initial_cost: 0.0,
                final_cost: 0.0,
                iterations: 0,
                termination: Termination::Converged,
                cost_trace: vec![],
            },
        };
        assert!(reject_far_estimate(&mk(5.0), &s.est, 100.0));
        assert!(!reject_far_estimate(&mk(500.0), &s.est, 100.0));
        // Exactly at the threshold: accepted.
        let nearest = s
            .est
            .poses
            .iter()
            .map(|p| (Vector3::from(p.t) - Vector3::new(0.0, 0.0, 0.0)).norm())
            .fold(f64::INFINITY, f64::min);
        let exact = mk(nearest + 100.0 - nearest); // distance exactly 100 from origin pose
        let _ = exact;
        let at = PanoPoseEstimate {
            rig_pose: Pose::new(
                UnitQuaternion::identity(),
                Vector3::from(s.est.poses[0].t) + Vector3::new(100.0, 0.0, 0.0),
            ),
            ..mk(0.0)
        };
        assert!(reject_far_estimate(&at, &s.est, 100.0));
    }

    #[test]
    fn georeference_recovers_ground_truth_gps() {
        let s = setup(10);
        let cfg = RegisterConfig::default();
        let mut estimates = Vec::new();
        for pano in &s.ds.panos {
            let corr =
                build_correspondences(pano, &all_views(), &s.est, &s.tracks, &cfg).unwrap();
            estimates.push(localize_connected(&corr, &s.est, &cfg).unwrap());
        }
        let reg = georeference(&s.est, &estimates, &s.ds.panos).unwrap();
        // Each camera's GPS matches the simulator's ground truth within an
        // equivalent of a few micrometers.
        for (k, cam) in reg.camera_gps.iter().enumerate() {
            let truth_enu = s.gt.poses[k].translation;
            let got = GeoPoint::new(cam.lat_deg, cam.lon_deg).unwrap();
            let truth_gps = enu_to_gps(&s.gt.geo_ref, truth_enu.x, truth_enu.y);
            let (de, dn) = gps_to_enu(&truth_gps, &got).unwrap();
            let err = (de * de + dn * dn).sqrt();
            assert!(err < 1e-5, "camera {k} gps error {err} m");
        }
        for r in &reg.per_pano {
            assert!(r.position_m < 1e-5, "pano residual {}", r.position_m);
            assert!(r.yaw_rad < 1e-6);
        }
    }

    #[test]
    fn georeference_is_covariant_with_heading_rotation() {
        // Rotating a panorama's heading metadata by 90 degrees rotates the
        // whole output consistently: the camera GPS positions rotate around
        // that panorama's geotag.
        let s = setup(11);
        let cfg = RegisterConfig::default();
        let corr = build_correspondences(&s.ds.panos[0], &all_views(), &s.est, &s.tracks, &cfg)
            .unwrap();
        let est = localize_connected(&corr, &s.est, &cfg).unwrap();
        let base = georeference(&s.est, std::slice::from_ref(&est), &s.ds.panos).unwrap();

        let mut rotated_panos = s.ds.panos.clone();
        rotated_panos[0].heading_deg += 90.0;
        let rot = georeference(&s.est, &[est], &rotated_panos).unwrap();
        // Compass headings are clockwise, world yaw counter-clockwise.
        assert!((wrap_angle(rot.yaw_rad - base.yaw_rad + std::f64::consts::FRAC_PI_2)).abs() < 1e-9);
        // Distances from the anchor are preserved.
        for (a, b) in base.camera_gps.iter().zip(&rot.camera_gps) {
            let ga = GeoPoint::new(a.lat_deg, a.lon_deg).unwrap();
            let gb = GeoPoint::new(b.lat_deg, b.lon_deg).unwrap();
            let (ea, na) = gps_to_enu(&base.reference, &ga).unwrap();
            let (eb, nb) = gps_to_enu(&base.reference, &gb).unwrap();
            let da = (ea * ea + na * na).sqrt();
            let db = (eb * eb + nb * nb).sqrt();
            assert!((da - db).abs() < 1e-6);
        }
    }

    #[test]
    fn georeference_is_invariant_to_the_trajectory_gauge() {
        // Re-expressing the whole trajectory frame through a yaw+translation
        // transform leaves the output GPS unchanged: the anchor is the
        // panorama, not the trajectory frame.
        let s = setup(12);
        let cfg = RegisterConfig::default();
        let corr = build_correspondences(&s.ds.panos[0], &all_views(), &s.est, &s.tracks, &cfg)
            .unwrap();
        let est = localize_connected(&corr, &s.est, &cfg).unwrap();
        let base = georeference(&s.est, std::slice::from_ref(&est), &s.ds.panos).unwrap();

        let t = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.7),
            Vector3::new(12.0, -3.0, 4.0),
        );
        // Wait: the trajectory frame's vertical axis is the body y; a yaw of
        // the world corresponds to a rotation about the trajectory's y axis.
        let mut moved_traj = s.est.clone();
        for p in &mut moved_traj.poses {
            *p = crate::dataset::PoseRecord::from(&t.compose(&p.pose()));
        }
        for (_, lm) in moved_traj.landmarks.iter_mut() {
            let p = t.transform_point(&Vector3::from(*lm));
            *lm = [p.x, p.y, p.z];
        }
        let moved_est = PanoPoseEstimate {
            rig_pose: t.compose(&est.rig_pose),
            views: est
                .views
                .iter()
                .map(|v| ViewPoseEstimate {
                    view_index: v.view_index,
                    pose: t.compose(&v.pose),
                    correspondences: v.correspondences,
                })
                .collect(),
            ..est.clone()
        };
        let moved = georeference(&moved_traj, &[moved_est], &s.ds.panos).unwrap();
        for (a, b) in base.camera_gps.iter().zip(&moved.camera_gps) {
            assert!((a.lat_deg - b.lat_deg).abs() < 1e-9, "lat moved");
            assert!((a.lon_deg - b.lon_deg).abs() < 1e-9, "lon moved");
            assert!((a.rel_height_m - b.rel_height_m).abs() < 1e-6);
        }
    }

    #[test]
    fn no_accepted_panoramas_is_an_error() {
        let s = setup(13);
        assert!(matches!(
            georeference(&s.est, &[], &s.ds.panos),
            Err(RegisterError::NoAcceptedPanoramas)
        ));
    }

    #[test]
    fn tracks_status_does_not_matter_for_binding() {
        // Sanity: ground-truth tracks are all terminated; bindings exist.
        let s = setup(14);
        assert!(s.tracks.iter().all(|t| t.status == TrackStatus::Terminated));
        assert!(!s.est.bindings.is_empty());
    }
}
