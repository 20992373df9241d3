//! Offline batch pipeline over an on-disk dataset: feature tracking, the
//! two-step point/pose optimization, bag-of-words panorama retrieval with
//! geometric verification, per-panorama registration in both rig modes and
//! the final georeferencing. Also hosts the evaluation metrics the CLI
//! reports.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::dataset::{Dataset, GroundTruthFile, PoseRecord};
use crate::geometry::Pose;
use crate::nlls::SolveReport;
use crate::pointmap::{self, PointMapError, TrajectoryEstimate};
use crate::register::{
    self, GeoRegistration, PanoPoseEstimate, RegisterError, RigMode,
};
use crate::retrieval::{
    self, bow_histogram, query_top_k, verify_candidates, BowDocument, BowIndex, CandidateView,
    DocMeta, RetrievalError,
};
use crate::tracks::{Track, TrackError, TrackStore};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    PointMap(#[from] PointMapError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("no panorama was accepted; nothing to georeference")]
    NoAcceptedPanoramas,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewPoseRecord {
    pub view_index: usize,
    pub pose: PoseRecord,
    pub correspondences: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanoEstimateRecord {
    pub rig_pose: PoseRecord,
    pub views: Vec<ViewPoseRecord>,
    pub matched_landmarks: usize,
    pub accepted: bool,
    pub report: SolveReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanoLocalization {
    pub pano_id: String,
    pub retrieved_views: Vec<usize>,
    pub independent: Option<PanoEstimateRecord>,
    pub connected: Option<PanoEstimateRecord>,
    /// Why the panorama produced no estimate, when it did not.
    pub skipped: Option<String>,
}

/// Contents of `localization.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationFile {
    pub panoramas: Vec<PanoLocalization>,
    pub registration: GeoRegistration,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub tracks_s: f64,
    pub pointmap_s: f64,
    pub retrieval_s: f64,
    pub register_s: f64,
}

#[derive(Debug)]
pub struct LocalizeOutputs {
    pub trajectory: TrajectoryEstimate,
    pub localization: LocalizationFile,
    pub timings: StageTimings,
}

fn record_estimate(est: &PanoPoseEstimate, accepted: bool) -> PanoEstimateRecord {
    PanoEstimateRecord {
        rig_pose: PoseRecord::from(&est.rig_pose),
        views: est
            .views
            .iter()
            .map(|v| ViewPoseRecord {
                view_index: v.view_index,
                pose: PoseRecord::from(&v.pose),
                correspondences: v.correspondences,
            })
            .collect(),
        matched_landmarks: est.matched_landmarks,
        accepted,
        report: est.report.clone(),
    }
}

/// Runs the full localization pipeline on a loaded dataset.
pub fn run_localize(
    dataset: &Dataset,
    cfg: &PipelineConfig,
) -> Result<LocalizeOutputs, PipelineError> {
    let mut timings = StageTimings::default();

    // Feature tracking over the ordered frame stream.
    let t0 = Instant::now();
    let mut store = TrackStore::new(cfg.track_store_config());
    let mut frames = dataset.frames.clone();
    frames.sort_by_key(|f| f.frame_id);
    for frame in &frames {
        store.update(frame.frame_id, &frame.features())?;
    }
    let tracks = store.into_tracks();
    timings.tracks_s = t0.elapsed().as_secs_f64();

    // Phase 1: landmark map.
    let t0 = Instant::now();
    let mut odometry = dataset.odometry.clone();
    odometry.sort_by_key(|o| o.frame_id);
    let rels: Vec<Pose> = odometry.iter().map(|o| o.rel_pose.pose()).collect();
    let trajectory = pointmap::estimate(&rels, &tracks, &dataset.camera, &cfg.pointmap_config())?;
    timings.pointmap_s = t0.elapsed().as_secs_f64();

    // Panorama-view retrieval: vocabulary, TF-IDF index, per-frame queries
    // with homography verification.
    let t0 = Instant::now();
    let mut docs = Vec::new();
    let mut doc_views: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    let mut all_descriptors = Vec::new();
    for (pi, pano) in dataset.panos.iter().enumerate() {
        let gps = crate::geo::GeoPoint::new(pano.lat_deg, pano.lon_deg)
            .expect("pano geotag is valid");
        for view in &pano.views {
            let id = docs.len() as u64;
            let descriptors: Vec<Vec<f64>> =
                view.features.iter().map(|f| f.desc.clone()).collect();
            all_descriptors.extend(descriptors.iter().cloned());
            doc_views.insert(id, (pi, view.view_index));
            docs.push(BowDocument {
                id,
                descriptors,
                meta: DocMeta {
                    pano_id: pano.id.clone(),
                    view_index: view.view_index,
                    yaw_deg: view.yaw_deg,
                    gps,
                },
            });
        }
    }
    // Accepted views per panorama, by best inlier count.
    let mut accepted_views: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    if !docs.is_empty() && !all_descriptors.is_empty() {
        let k = cfg.vocab_k.min(all_descriptors.len()).max(1);
        let codebook =
            retrieval::build_codebook(&all_descriptors, k, cfg.kmeans_seed, cfg.kmeans_iters)?;
        let index = BowIndex::build(&docs, &codebook);
        let verify = cfg.verify_params();
        for frame in frames.iter().step_by(cfg.query_stride.max(1)) {
            if frame.features.is_empty() {
                continue;
            }
            let descs: Vec<Vec<f64>> = frame.features.iter().map(|f| f.desc.clone()).collect();
            let hist = bow_histogram(&descs, &codebook, index.idf());
            let top = query_top_k(&hist, &index, cfg.top_k, None)?;
            let candidates: Vec<CandidateView> = top
                .iter()
                .map(|(doc_id, _)| {
                    let (pi, vi) = doc_views[doc_id];
                    let view = dataset.panos[pi]
                        .views
                        .iter()
                        .find(|v| v.view_index == vi)
                        .expect("indexed view exists");
                    CandidateView {
                        doc_id: *doc_id,
                        features: view.features.iter().map(crate::tracks::Feature::from).collect(),
                    }
                })
                .collect();
            let frame_features = frame.features();
            for verified in verify_candidates(&frame_features, &candidates, &verify) {
                let (pi, vi) = doc_views[&verified.doc_id];
                let entry = accepted_views
                    .entry(pi)
                    .or_default()
                    .entry(vi)
                    .or_insert(0);
                *entry = (*entry).max(verified.inliers);
            }
        }
    }
    timings.retrieval_s = t0.elapsed().as_secs_f64();

    // Phase 2: per-panorama registration in both modes, then the 4-dof
    // georeferencing from the accepted connected estimates.
    let t0 = Instant::now();
    let reg_cfg = cfg.register_config();
    let mut pano_outputs = Vec::new();
    let mut accepted_for_georef = Vec::new();
    for (pi, pano) in dataset.panos.iter().enumerate() {
        let views: Vec<usize> = accepted_views
            .get(&pi)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default();
        let mut out = PanoLocalization {
            pano_id: pano.id.clone(),
            retrieved_views: views.clone(),
            independent: None,
            connected: None,
            skipped: None,
        };
        if views.is_empty() {
            out.skipped = Some("no view passed retrieval verification".into());
            pano_outputs.push(out);
            continue;
        }
        let corr = match register::build_correspondences(pano, &views, &trajectory, &tracks, &reg_cfg)
        {
            Ok(c) => c,
            Err(e) => {
                out.skipped = Some(e.to_string());
                pano_outputs.push(out);
                continue;
            }
        };
        match register::localize_independent(&corr, &trajectory, &reg_cfg) {
            Ok(est) => {
                let ok = register::reject_far_estimate(&est, &trajectory, reg_cfg.max_pano_dist_m);
                out.independent = Some(record_estimate(&est, ok));
            }
            Err(e) => out.skipped = Some(e.to_string()),
        }
        match register::localize_connected(&corr, &trajectory, &reg_cfg) {
            Ok(est) => {
                let ok = register::reject_far_estimate(&est, &trajectory, reg_cfg.max_pano_dist_m);
                out.connected = Some(record_estimate(&est, ok));
                if ok {
                    accepted_for_georef.push(est);
                }
            }
            Err(e) => out.skipped = Some(e.to_string()),
        }
        pano_outputs.push(out);
    }
    let registration = register::georeference(&trajectory, &accepted_for_georef, &dataset.panos)
        .map_err(|e| match e {
            RegisterError::NoAcceptedPanoramas => PipelineError::NoAcceptedPanoramas,
            other => PipelineError::PointMap(PointMapError::Solver(match other {
                RegisterError::Solver(s) => s,
                _ => unreachable!("georeference only fails on empty input"),
            })),
        })?;
    timings.register_s = t0.elapsed().as_secs_f64();

    Ok(LocalizeOutputs {
        trajectory,
        localization: LocalizationFile {
            panoramas: pano_outputs,
            registration,
        },
        timings,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanoErrorRecord {
    pub pano_id: String,
    /// Horizontal position error of the connected rig estimate, meters.
    pub connected_m: Option<f64>,
    /// Mean horizontal error of the independently localized views, meters.
    pub independent_m: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CumulativeBin {
    pub threshold_m: f64,
    pub connected_fraction: f64,
    pub independent_fraction: f64,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub per_pano: Vec<PanoErrorRecord>,
    pub cumulative: Vec<CumulativeBin>,
    pub median_connected_m: Option<f64>,
    pub median_independent_m: Option<f64>,
    pub connected_within_1m: f64,
    pub connected_within_1_5m: f64,
}

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("ground truth does not cover panorama {0}")]
    MissingGroundTruth(String),
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(values[values.len() / 2])
}

fn horizontal_error(a: &nalgebra::Vector3<f64>, b: &nalgebra::Vector3<f64>) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Compares localized panorama positions against ground truth. Estimates
/// live in the trajectory frame anchored at the first camera, so they are
/// mapped into the simulation frame through the true first pose; errors are
/// horizontal, matching geotag accuracy semantics. The cumulative histogram
/// runs over thresholds 0.25 m .. 5.0 m.
pub fn evaluate(
    localization: &LocalizationFile,
    gt: &GroundTruthFile,
) -> Result<MetricsFile, EvaluateError> {
    let gt0 = gt.poses[0].pose();
    let mut per_pano = Vec::new();
    let mut connected_errors = Vec::new();
    let mut independent_errors = Vec::new();
    for pano in &localization.panoramas {
        let idx = gt
            .pano_ids
            .iter()
            .position(|id| *id == pano.pano_id)
            .ok_or_else(|| EvaluateError::MissingGroundTruth(pano.pano_id.clone()))?;
        let truth = gt.pano_poses[idx].pose().translation;
        let connected_m = pano.connected.as_ref().filter(|e| e.accepted).map(|e| {
            let est = gt0.compose(&e.rig_pose.pose()).translation;
            horizontal_error(&est, &truth)
        });
        let independent_m = pano.independent.as_ref().filter(|e| e.accepted).map(|e| {
            let per_view: Vec<f64> = e
                .views
                .iter()
                .map(|v| {
                    let est = gt0.compose(&v.pose.pose()).translation;
                    horizontal_error(&est, &truth)
                })
                .collect();
            per_view.iter().sum::<f64>() / per_view.len() as f64
        });
        if let Some(e) = connected_m {
            connected_errors.push(e);
        }
        if let Some(e) = independent_m {
            independent_errors.push(e);
        }
        per_pano.push(PanoErrorRecord {
            pano_id: pano.pano_id.clone(),
            connected_m,
            independent_m,
        });
    }

    let fraction_below = |errors: &[f64], thr: f64| {
        if errors.is_empty() {
            0.0
        } else {
            errors.iter().filter(|e| **e <= thr).count() as f64 / errors.len() as f64
        }
    };
    let cumulative = (1..=20)
        .map(|i| {
            let threshold_m = i as f64 * 0.25;
            CumulativeBin {
                threshold_m,
                connected_fraction: fraction_below(&connected_errors, threshold_m),
                independent_fraction: fraction_below(&independent_errors, threshold_m),
            }
        })
        .collect();
    Ok(MetricsFile {
        connected_within_1m: fraction_below(&connected_errors, 1.0),
        connected_within_1_5m: fraction_below(&connected_errors, 1.5),
        median_connected_m: median(&mut connected_errors.clone()),
        median_independent_m: median(&mut independent_errors.clone()),
        per_pano,
        cumulative,
    })
}
