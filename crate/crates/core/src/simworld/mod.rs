//! Synthetic-world generator and brute-force oracles. Generates
//! ground-truthed datasets (frame stream, odometry, panorama store) with
//! configurable noise and outlier rates, standing in for a physical
//! ground-truth apparatus.

mod oracle;

pub use oracle::{bearing_cost, oracle_pose, oracle_triangulate, pose_bearing_cost, SearchBox};

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    FeatureOriginRecord, FeatureRecord, FrameRecord, GroundTruthFile, OdometryRecord, PanoRecord,
    PoseRecord, ViewRecord,
};
use crate::geo::{enu_to_gps, GeoPoint};
use crate::geometry::{
    heading_of_pose, pano_pixel_of_direction, pose_from_heading, view_intrinsics, view_rotation,
    Intrinsics, PanoImage, Pose, Raster, STANDARD_VIEW_COUNT, STANDARD_VIEW_FOV,
};
use crate::tracks::{Track, TrackObservation, TrackStatus};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoSpec {
    /// East/north/up position in the simulation frame, meters.
    pub pos: [f64; 3],
    /// Compass heading of the panorama's forward axis, degrees.
    pub heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub seed: u64,
    pub n_landmarks: usize,
    /// Landmark distance band from their anchor camera, meters.
    pub dist_band: [f64; 2],
    /// Ground-plane waypoints (east, north) the camera walks along.
    pub waypoints: Vec<[f64; 2]>,
    pub step_length_m: f64,
    /// Odometry translation noise as a fraction of the step length.
    pub odom_sigma_t_frac: f64,
    /// Odometry rotation noise per step, degrees.
    pub odom_sigma_r_deg: f64,
    pub pixel_noise_px: f64,
    /// Fraction of frame observations replaced by outliers, in [0, 1).
    pub outlier_frac: f64,
    pub camera: Intrinsics,
    pub camera_height_m: f64,
    pub landmark_height_range: [f64; 2],
    pub panoramas: Vec<PanoSpec>,
    pub geo_ref: GeoPoint,
    pub descriptor_dim: usize,
    pub descriptor_noise: f64,
    /// Square size of the synthetic rectilinear panorama views, pixels.
    pub pano_view_size: usize,
    /// Also render raster plate-carree panoramas for projection tests.
    pub raster_panos: bool,
    pub pano_raster_height: usize,
    /// Landmarks farther than this are invisible, meters.
    pub visibility_depth_max: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_landmarks: 120,
            dist_band: [15.0, 50.0],
            waypoints: vec![[0.0, 0.0], [12.0, 0.0]],
            step_length_m: 0.15,
            odom_sigma_t_frac: 0.01,
            odom_sigma_r_deg: 0.2,
            pixel_noise_px: 1.0,
            outlier_frac: 0.0,
            // 100 degree horizontal field of view.
            camera: Intrinsics::with_hfov(100f64.to_radians(), 800, 600)
                .expect("default intrinsics valid"),
            camera_height_m: 1.6,
            landmark_height_range: [0.0, 4.0],
            panoramas: Vec::new(),
            geo_ref: GeoPoint {
                lat_deg: 48.0125518,
                lon_deg: 7.8322567,
            },
            descriptor_dim: 128,
            descriptor_noise: 0.05,
            pano_view_size: 512,
            raster_panos: false,
            pano_raster_height: 256,
            visibility_depth_max: 200.0,
        }
    }
}

/// Everything the generator knows that the pipeline must estimate.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub geo_ref: GeoPoint,
    pub poses: Vec<Pose>,
    pub landmarks: Vec<Vector3<f64>>,
    pub pano_poses: Vec<Pose>,
    pub pano_ids: Vec<String>,
    /// Per frame, per feature index: source landmark and outlier flag.
    pub frame_features: Vec<Vec<FeatureOriginRecord>>,
    /// Per-landmark basis descriptors (before observation noise).
    pub basis_descriptors: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn visible(&self, frame: usize, landmark: usize) -> bool {
        self.frame_features[frame]
            .iter()
            .any(|f| f.landmark == landmark)
    }

    /// Visibility table: frame -> landmark ids in feature order.
    pub fn visibility(&self) -> Vec<Vec<usize>> {
        self.frame_features
            .iter()
            .map(|fs| fs.iter().map(|f| f.landmark).collect())
            .collect()
    }

    pub fn to_file(&self) -> GroundTruthFile {
        GroundTruthFile {
            geo_ref: self.geo_ref,
            poses: self.poses.iter().map(PoseRecord::from).collect(),
            landmarks: self
                .landmarks
                .iter()
                .map(|l| [l.x, l.y, l.z])
                .collect(),
            pano_poses: self.pano_poses.iter().map(PoseRecord::from).collect(),
            pano_ids: self.pano_ids.clone(),
            frame_features: self.frame_features.clone(),
        }
    }
}

/// Generated dataset in memory, in the exact shapes the on-disk formats use.
#[derive(Debug, Clone)]
pub struct SimDataset {
    pub camera: Intrinsics,
    pub frames: Vec<FrameRecord>,
    pub odometry: Vec<OdometryRecord>,
    pub panos: Vec<PanoRecord>,
    pub rasters: Vec<(String, Raster)>,
}

fn validate(spec: &WorldSpec) -> Result<(), SimError> {
    if spec.waypoints.len() < 2 {
        return Err(SimError::InfeasibleSpec(
            "need at least two waypoints".into(),
        ));
    }
    if spec.step_length_m <= 0.0 {
        return Err(SimError::InfeasibleSpec("step_length_m must be > 0".into()));
    }
    if spec.n_landmarks == 0 {
        return Err(SimError::InfeasibleSpec("n_landmarks must be > 0".into()));
    }
    if !(0.0..1.0).contains(&spec.outlier_frac) {
        return Err(SimError::InfeasibleSpec(
            "outlier_frac must be in [0, 1)".into(),
        ));
    }
    for (name, v) in [
        ("odom_sigma_t_frac", spec.odom_sigma_t_frac),
        ("odom_sigma_r_deg", spec.odom_sigma_r_deg),
        ("pixel_noise_px", spec.pixel_noise_px),
        ("descriptor_noise", spec.descriptor_noise),
    ] {
        if v < 0.0 {
            return Err(SimError::InfeasibleSpec(format!("{name} must be >= 0")));
        }
    }
    if spec.dist_band[0] <= 0.0 || spec.dist_band[1] < spec.dist_band[0] {
        return Err(SimError::InfeasibleSpec("bad dist_band".into()));
    }
    Ok(())
}

/// Walks the waypoint polyline at the configured step length; the camera
/// faces along the direction of travel.
fn trajectory_poses(spec: &WorldSpec) -> Vec<Pose> {
    let mut poses = Vec::new();
    let pts: Vec<Vector3<f64>> = spec
        .waypoints
        .iter()
        .map(|w| Vector3::new(w[0], w[1], spec.camera_height_m))
        .collect();
    let mut seg = 0usize;
    let mut pos = pts[0];
    loop {
        let target = pts[seg + 1];
        let to_target = target - pos;
        let dist = to_target.norm();
        let dir = if dist > 1e-12 {
            to_target / dist
        } else {
            Vector3::new(0.0, 1.0, 0.0)
        };
        let heading = dir.x.atan2(dir.y);
        poses.push(pose_from_heading(pos, heading));
        let mut remaining = spec.step_length_m;
        let mut cur = pos;
        let mut cur_seg = seg;
        loop {
            let t = pts[cur_seg + 1] - cur;
            let d = t.norm();
            if d >= remaining {
                cur += t / d * remaining;
                break;
            }
            remaining -= d;
            cur = pts[cur_seg + 1];
            cur_seg += 1;
            if cur_seg + 1 >= pts.len() {
                return poses;
            }
        }
        pos = cur;
        seg = cur_seg;
    }
}

fn sample_unit_descriptor(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut d: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    d.iter_mut().for_each(|v| *v /= norm);
    d
}

fn noisy_descriptor(rng: &mut ChaCha8Rng, basis: &[f64], sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return basis.to_vec();
    }
    let normal = Normal::new(0.0, sigma).unwrap();
    basis.iter().map(|b| b + normal.sample(rng)).collect()
}

/// Gaussian truncated at 4 sigma, so every non-outlier observation
/// reprojects from ground truth within 4 sigma by construction.
fn truncated_noise(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).unwrap();
    normal.sample(rng).clamp(-4.0 * sigma, 4.0 * sigma)
}

/// Generates a complete dataset plus its ground truth. Deterministic per
/// seed: the same spec yields byte-identical files.
pub fn generate(spec: &WorldSpec) -> Result<(SimDataset, GroundTruth), SimError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let poses = trajectory_poses(spec);
    if poses.len() < 2 {
        return Err(SimError::InfeasibleSpec(
            "trajectory shorter than two frames".into(),
        ));
    }

    // Landmarks: each anchored to a random frame, placed inside that
    // camera's horizontal field of view within the distance band.
    let hfov = 2.0 * ((spec.camera.width as f64 / 2.0) / spec.camera.fx).atan();
    let mut landmarks = Vec::with_capacity(spec.n_landmarks);
    let mut basis_descriptors = Vec::with_capacity(spec.n_landmarks);
    for _ in 0..spec.n_landmarks {
        let anchor = &poses[rng.gen_range(0..poses.len())];
        let heading = heading_of_pose(anchor);
        let az = heading + rng.gen_range(-0.5..0.5) * (hfov - 10f64.to_radians());
        let r = rng.gen_range(spec.dist_band[0]..=spec.dist_band[1]);
        let z = rng.gen_range(spec.landmark_height_range[0]..=spec.landmark_height_range[1]);
        let pos = anchor.translation
            + Vector3::new(az.sin() * r, az.cos() * r, z - anchor.translation.z);
        landmarks.push(pos);
        basis_descriptors.push(sample_unit_descriptor(&mut rng, spec.descriptor_dim));
    }

    // Frame stream with per-frame visibility, pixel noise and outliers.
    let mut frames = Vec::with_capacity(poses.len());
    let mut frame_features = Vec::with_capacity(poses.len());
    let mut total_obs = 0usize;
    for (fi, pose) in poses.iter().enumerate() {
        let inv = pose.inverse();
        let mut feats = Vec::new();
        let mut origins = Vec::new();
        for (li, lm) in landmarks.iter().enumerate() {
            let in_cam = inv.transform_point(lm);
            if in_cam.z <= 0.0 || in_cam.norm() > spec.visibility_depth_max {
                continue;
            }
            let Some((u, v)) = spec.camera.project(&in_cam) else {
                continue;
            };
            if !spec.camera.contains_pixel(u, v) {
                continue;
            }
            let outlier = spec.outlier_frac > 0.0 && rng.gen_range(0.0..1.0) < spec.outlier_frac;
            let (pu, pv, desc) = if outlier {
                (
                    rng.gen_range(0.0..spec.camera.width as f64),
                    rng.gen_range(0.0..spec.camera.height as f64),
                    {
                        let fresh = sample_unit_descriptor(&mut rng, spec.descriptor_dim);
                        noisy_descriptor(&mut rng, &fresh, spec.descriptor_noise)
                    },
                )
            } else {
                (
                    u + truncated_noise(&mut rng, spec.pixel_noise_px),
                    v + truncated_noise(&mut rng, spec.pixel_noise_px),
                    noisy_descriptor(&mut rng, &basis_descriptors[li], spec.descriptor_noise),
                )
            };
            feats.push(FeatureRecord {
                u: pu,
                v: pv,
                desc,
            });
            origins.push(FeatureOriginRecord {
                landmark: li,
                outlier,
            });
            total_obs += 1;
        }
        frames.push(FrameRecord {
            frame_id: fi as u64,
            timestamp_s: fi as f64 * 0.1,
            features: feats,
        });
        frame_features.push(origins);
    }
    if total_obs == 0 {
        return Err(SimError::InfeasibleSpec(
            "no landmark visible from any pose".into(),
        ));
    }

    // Odometry: true relative pose perturbed in the body frame.
    let mut odometry = Vec::with_capacity(poses.len() - 1);
    for k in 0..poses.len() - 1 {
        let rel = poses[k].inverse().compose(&poses[k + 1]);
        let sigma_t = spec.odom_sigma_t_frac * spec.step_length_m;
        let sigma_r = spec.odom_sigma_r_deg.to_radians();
        let noise = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(
                truncated_noise(&mut rng, sigma_r),
                truncated_noise(&mut rng, sigma_r),
                truncated_noise(&mut rng, sigma_r),
            )),
            Vector3::new(
                truncated_noise(&mut rng, sigma_t),
                truncated_noise(&mut rng, sigma_t),
                truncated_noise(&mut rng, sigma_t),
            ),
        );
        odometry.push(OdometryRecord {
            frame_id: k as u64 + 1,
            rel_pose: PoseRecord::from(&rel.compose(&noise)),
        });
    }

    // Panoramas: analytic view-feature lists, plus optional rasters.
    let view_k = view_intrinsics(STANDARD_VIEW_FOV, spec.pano_view_size)
        .expect("standard fov valid");
    let mut panos = Vec::new();
    let mut pano_poses = Vec::new();
    let mut pano_ids = Vec::new();
    let mut rasters = Vec::new();
    for (pi, ps) in spec.panoramas.iter().enumerate() {
        let pose = pose_from_heading(Vector3::from(ps.pos), ps.heading_deg.to_radians());
        let gps = enu_to_gps(&spec.geo_ref, ps.pos[0], ps.pos[1]);
        let id = format!("{pi:03}");
        let mut views = Vec::with_capacity(STANDARD_VIEW_COUNT);
        for vi in 0..STANDARD_VIEW_COUNT {
            let yaw = vi as f64 * 2.0 * std::f64::consts::PI / STANDARD_VIEW_COUNT as f64;
            let view_pose = Pose::new(
                pose.rotation * UnitQuaternion::from_rotation_matrix(&view_rotation(yaw, 0.0)),
                pose.translation,
            );
            let inv = view_pose.inverse();
            let mut feats = Vec::new();
            for (li, lm) in landmarks.iter().enumerate() {
                let in_view = inv.transform_point(lm);
                if in_view.z <= 0.0 || in_view.norm() > spec.visibility_depth_max {
                    continue;
                }
                let Some((u, v)) = view_k.project(&in_view) else {
                    continue;
                };
                if !view_k.contains_pixel(u, v) {
                    continue;
                }
                feats.push(FeatureRecord {
                    u: u + truncated_noise(&mut rng, spec.pixel_noise_px),
                    v: v + truncated_noise(&mut rng, spec.pixel_noise_px),
                    desc: noisy_descriptor(
                        &mut rng,
                        &basis_descriptors[li],
                        spec.descriptor_noise,
                    ),
                });
            }
            views.push(ViewRecord {
                view_index: vi,
                yaw_deg: yaw.to_degrees(),
                fov_deg: STANDARD_VIEW_FOV.to_degrees(),
                size_px: spec.pano_view_size,
                features: feats,
            });
        }
        panos.push(PanoRecord {
            id: id.clone(),
            lat_deg: gps.lat_deg,
            lon_deg: gps.lon_deg,
            heading_deg: ps.heading_deg,
            views,
        });
        if spec.raster_panos {
            rasters.push((id.clone(), render_pano_raster(&pose, &landmarks, spec)));
        }
        pano_poses.push(pose);
        pano_ids.push(id);
    }

    Ok((
        SimDataset {
            camera: spec.camera,
            frames,
            odometry,
            panos,
            rasters,
        },
        GroundTruth {
            geo_ref: spec.geo_ref,
            poses,
            landmarks,
            pano_poses,
            pano_ids,
            frame_features,
            basis_descriptors,
        },
    ))
}

/// Plate-carree raster with a bright dot per visible landmark over a dim
/// vertical gradient. Only used by projection tests.
fn render_pano_raster(pose: &Pose, landmarks: &[Vector3<f64>], spec: &WorldSpec) -> Raster {
    let h = spec.pano_raster_height;
    let w = 2 * h;
    let mut raster = Raster::new(w, h, 1);
    for y in 0..h {
        let shade = 20 + (40 * y / h) as u8;
        for x in 0..w {
            raster.set(x, y, 0, shade);
        }
    }
    let inv = pose.inverse();
    for lm in landmarks {
        let in_pano = inv.transform_point(lm);
        let dist = in_pano.norm();
        if dist > spec.visibility_depth_max || dist < 1e-9 {
            continue;
        }
        let (u, v) = pano_pixel_of_direction(&(in_pano / dist), w, h);
        let (x, y) = (u as isize, v as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let px = (x + dx).rem_euclid(w as isize) as usize;
                let py = (y + dy).clamp(0, h as isize - 1) as usize;
                raster.set(px, py, 0, 255);
            }
        }
    }
    raster
}

/// Builds tracks straight from the ground-truth identity map: one track per
/// maximal run of consecutive frames in which a landmark appears, carrying
/// the recorded (noisy or outlier-substituted) features. This bypasses the
/// matcher so estimation layers can be tested in isolation.
pub fn ground_truth_tracks(
    gt: &GroundTruth,
    frames: &[FrameRecord],
    min_len: usize,
) -> Vec<Track> {
    let n_landmarks = gt.landmarks.len();
    let mut runs: Vec<Vec<TrackObservation>> = vec![Vec::new(); n_landmarks];
    let mut tracks = Vec::new();
    let mut next_id = 0u64;
    let mut flush = |obs: &mut Vec<TrackObservation>, next_id: &mut u64| {
        if obs.len() >= min_len {
            tracks.push(Track {
                id: *next_id,
                observations: std::mem::take(obs),
                status: TrackStatus::Terminated,
            });
            *next_id += 1;
        } else {
            obs.clear();
        }
    };
    for (fi, frame) in frames.iter().enumerate() {
        let origins = &gt.frame_features[fi];
        let mut seen = vec![false; n_landmarks];
        for (idx, origin) in origins.iter().enumerate() {
            seen[origin.landmark] = true;
            let run = &mut runs[origin.landmark];
            if let Some(last) = run.last() {
                if last.frame_id + 1 != frame.frame_id {
                    flush(run, &mut next_id);
                }
            }
            let f = &frame.features[idx];
            run.push(TrackObservation {
                frame_id: frame.frame_id,
                feature_index: idx,
                keypoint: [f.u, f.v],
                descriptor: f.desc.clone(),
            });
        }
        for (li, run) in runs.iter_mut().enumerate() {
            if !seen[li] && !run.is_empty() {
                flush(run, &mut next_id);
            }
        }
    }
    for run in runs.iter_mut() {
        flush(run, &mut next_id);
    }
    tracks.sort_by_key(|t| (t.first_frame(), t.id));
    for (i, t) in tracks.iter_mut().enumerate() {
        t.id = i as u64;
    }
    tracks
}

/// The landmark each ground-truth track observes (all observations of a
/// ground-truth track share one landmark by construction).
pub fn track_landmark(gt: &GroundTruth, track: &Track) -> usize {
    let obs = &track.observations[0];
    gt.frame_features[obs.frame_id as usize][obs.feature_index].landmark
}

/// Renders a plate-carree raster panorama for an arbitrary pose; used by
/// geometry round-trip tests.
pub fn render_raster_pano(
    pose: &Pose,
    landmarks: &[Vector3<f64>],
    height: usize,
    depth_max: f64,
) -> PanoImage {
    let spec = WorldSpec {
        pano_raster_height: height,
        visibility_depth_max: depth_max,
        ..Default::default()
    };
    PanoImage::new(render_pano_raster(pose, landmarks, &spec)).expect("raster is plate carree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_spec() -> WorldSpec {
        WorldSpec {
            seed: 7,
            n_landmarks: 40,
            dist_band: [18.0, 25.0],
            waypoints: vec![[0.0, 0.0], [8.0, 0.0]],
            step_length_m: 0.4,
            panoramas: vec![
                PanoSpec {
                    pos: [4.0, -3.0, 1.6],
                    heading_deg: 30.0,
                },
                PanoSpec {
                    pos: [8.0, 2.0, 1.6],
                    heading_deg: 200.0,
                },
            ],
            ..Default::default()
        }
    }

    #[test]
    fn pose_from_heading_faces_the_compass_direction() {
        let p = pose_from_heading(Vector3::zeros(), 0.0);
        let fwd = p.rotate(&Vector3::new(0.0, 0.0, 1.0));
        assert_relative_eq!(fwd, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        // Down in the body frame is down in the world.
        let down = p.rotate(&Vector3::new(0.0, 1.0, 0.0));
        assert_relative_eq!(down, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-12);

        let east = pose_from_heading(Vector3::zeros(), std::f64::consts::FRAC_PI_2);
        let fwd = east.rotate(&Vector3::new(0.0, 0.0, 1.0));
        assert_relative_eq!(fwd, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(
            heading_of_pose(&east),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn same_seed_gives_identical_datasets() {
        let spec = small_spec();
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(
            serde_json::to_string(&a.frames).unwrap(),
            serde_json::to_string(&b.frames).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&a.odometry).unwrap(),
            serde_json::to_string(&b.odometry).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&a.panos).unwrap(),
            serde_json::to_string(&b.panos).unwrap()
        );
    }

    #[test]
    fn observations_reproject_within_four_sigma() {
        let spec = small_spec();
        let (ds, gt) = generate(&spec).unwrap();
        for (fi, frame) in ds.frames.iter().enumerate() {
            for (idx, origin) in gt.frame_features[fi].iter().enumerate() {
                if origin.outlier {
                    continue;
                }
                let lm = gt.landmarks[origin.landmark];
                let in_cam = gt.poses[fi].inverse().transform_point(&lm);
                let (u, v) = spec.camera.project(&in_cam).unwrap();
                let f = &frame.features[idx];
                let err = ((f.u - u).powi(2) + (f.v - v).powi(2)).sqrt();
                assert!(
                    err <= 4.0 * spec.pixel_noise_px * 2f64.sqrt() + 1e-9,
                    "obs {err} beyond 4 sigma"
                );
            }
        }
    }

    #[test]
    fn visibility_table_matches_feature_lists() {
        let spec = small_spec();
        let (ds, gt) = generate(&spec).unwrap();
        let vis = gt.visibility();
        for (fi, frame) in ds.frames.iter().enumerate() {
            assert_eq!(vis[fi].len(), frame.features.len());
        }
    }

    #[test]
    fn zero_landmarks_is_infeasible() {
        let spec = WorldSpec {
            n_landmarks: 0,
            ..small_spec()
        };
        assert!(matches!(generate(&spec), Err(SimError::InfeasibleSpec(_))));
    }

    #[test]
    fn invisible_world_is_infeasible() {
        // All landmarks far beyond the visibility limit.
        let spec = WorldSpec {
            dist_band: [500.0, 600.0],
            visibility_depth_max: 100.0,
            ..small_spec()
        };
        assert!(matches!(generate(&spec), Err(SimError::InfeasibleSpec(_))));
    }

    #[test]
    fn ground_truth_tracks_match_covisibility_runs() {
        let spec = WorldSpec {
            pixel_noise_px: 0.0,
            descriptor_noise: 0.0,
            odom_sigma_t_frac: 0.0,
            odom_sigma_r_deg: 0.0,
            ..small_spec()
        };
        let (ds, gt) = generate(&spec).unwrap();
        let tracks = ground_truth_tracks(&gt, &ds.frames, 1);
        // Each track is one maximal consecutive run of a landmark.
        for t in &tracks {
            let lm = track_landmark(&gt, t);
            for obs in &t.observations {
                assert!(gt.visible(obs.frame_id as usize, lm));
            }
            for w in t.observations.windows(2) {
                assert_eq!(w[1].frame_id, w[0].frame_id + 1);
            }
            // Maximality: not visible just before or after.
            let first = t.first_frame();
            let last = t.last_frame();
            if first > 0 {
                assert!(!gt.visible(first as usize - 1, lm));
            }
            if (last as usize) + 1 < ds.frames.len() {
                assert!(!gt.visible(last as usize + 1, lm));
            }
        }
        // Total observations across tracks = total features.
        let total: usize = tracks.iter().map(|t| t.len()).sum();
        let expected: usize = ds.frames.iter().map(|f| f.features.len()).sum();
        assert_eq!(total, expected);
    }

    #[test]
    fn pano_views_see_landmarks_panoramically() {
        let spec = small_spec();
        let (ds, _) = generate(&spec).unwrap();
        for pano in &ds.panos {
            assert_eq!(pano.views.len(), STANDARD_VIEW_COUNT);
            let total: usize = pano.views.iter().map(|v| v.features.len()).sum();
            assert!(total > 0, "panorama {} sees nothing", pano.id);
        }
    }
}
