//! Pipeline configuration: every tunable named by the stage modules, with
//! their documented defaults. Unknown keys in a config file are an error so
//! typos never silently fall back to defaults.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlls::SolveConfig;
use crate::pointmap::PointMapConfig;
use crate::register::RegisterConfig;
use crate::retrieval::VerifyParams;
use crate::tracks::{RansacParams, TrackStoreConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("bad config: {0}")]
    Parse(String),
    #[error("bad --set override {key:?}: {message}")]
    BadOverride { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Lowe ratio for all descriptor matching.
    pub ratio: f64,
    /// Inter-frame RANSAC inlier tolerance, pixels.
    pub ransac_tol_px: f64,
    pub ransac_iters: usize,
    /// Minimum consensus for a valid inter-frame homography.
    pub ransac_min_inliers: usize,
    /// Track store sliding window, frames.
    pub track_window: usize,
    pub min_track_len: usize,
    pub parallax_min_deg: f64,
    pub depth_max_m: f64,
    pub sigma_bearing_rad: f64,
    pub odom_sigma_t_frac: f64,
    pub odom_sigma_r_deg: f64,
    pub dcs_phi: f64,
    pub dcs_on_bearing: bool,
    /// Visual vocabulary size.
    pub vocab_k: usize,
    pub kmeans_iters: usize,
    pub kmeans_seed: u64,
    /// Retrieval depth per query frame.
    pub top_k: usize,
    /// Minimum homography inliers to accept a retrieved view.
    pub retrieval_min_inliers: usize,
    /// Query every n-th frame during retrieval.
    pub query_stride: usize,
    /// Minimum correspondences per panorama.
    pub min_corr: usize,
    /// Minimum correspondences per optimized view.
    pub min_view_corr: usize,
    pub rig_spacing_deg: f64,
    pub rig_info: f64,
    /// Maximum distance of an accepted panorama from the trajectory, m.
    pub max_pano_dist_m: f64,
    pub solver_max_iters: usize,
    pub solver_lambda0: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ratio: 0.7,
            ransac_tol_px: 3.0,
            ransac_iters: 1000,
            ransac_min_inliers: 8,
            track_window: 300,
            min_track_len: 3,
            parallax_min_deg: 1.0,
            depth_max_m: 200.0,
            sigma_bearing_rad: 0.005,
            odom_sigma_t_frac: 0.01,
            odom_sigma_r_deg: 0.2,
            dcs_phi: 1.0,
            dcs_on_bearing: true,
            vocab_k: 256,
            kmeans_iters: 50,
            kmeans_seed: 0,
            top_k: 10,
            retrieval_min_inliers: 20,
            query_stride: 1,
            min_corr: 12,
            min_view_corr: 6,
            rig_spacing_deg: 45.0,
            rig_info: 1e8,
            max_pano_dist_m: 100.0,
            solver_max_iters: 100,
            solver_lambda0: 1e-4,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Applies a `key=value` override by patching the JSON form; unknown
    /// keys and unparsable values are errors.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec.split_once('=').ok_or_else(|| ConfigError::BadOverride {
            key: spec.to_string(),
            message: "expected key=value".into(),
        })?;
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let obj = doc.as_object_mut().expect("config is an object");
        let slot = obj
            .get_mut(key)
            .ok_or_else(|| ConfigError::BadOverride {
                key: key.to_string(),
                message: "unknown config key".into(),
            })?;
        let parsed: serde_json::Value =
            serde_json::from_str(value).map_err(|e| ConfigError::BadOverride {
                key: key.to_string(),
                message: e.to_string(),
            })?;
        *slot = parsed;
        *self = serde_json::from_value(doc).map_err(|e| ConfigError::BadOverride {
            key: key.to_string(),
            message: e.to_string(),
        })?;
        Ok(())
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            max_iters: self.solver_max_iters,
            lm_lambda0: self.solver_lambda0,
            ..SolveConfig::default()
        }
    }

    pub fn track_store_config(&self) -> TrackStoreConfig {
        TrackStoreConfig {
            ratio: self.ratio,
            ransac: RansacParams {
                inlier_tol: self.ransac_tol_px,
                iters: self.ransac_iters,
                seed: self.seed,
                min_consensus: self.ransac_min_inliers,
            },
            window: self.track_window,
            ..TrackStoreConfig::default()
        }
    }

    pub fn pointmap_config(&self) -> PointMapConfig {
        PointMapConfig {
            min_track_len: self.min_track_len,
            parallax_min_deg: self.parallax_min_deg,
            depth_max_m: self.depth_max_m,
            sigma_bearing_rad: self.sigma_bearing_rad,
            odom_sigma_t_frac: self.odom_sigma_t_frac,
            odom_sigma_r_deg: self.odom_sigma_r_deg,
            dcs_phi: self.dcs_phi,
            dcs_on_bearing: self.dcs_on_bearing,
            solve: self.solve_config(),
        }
    }

    pub fn verify_params(&self) -> VerifyParams {
        VerifyParams {
            ratio: self.ratio,
            ransac: RansacParams {
                inlier_tol: self.ransac_tol_px,
                iters: self.ransac_iters,
                seed: self.seed,
                min_consensus: self.retrieval_min_inliers,
            },
            min_inliers: self.retrieval_min_inliers,
        }
    }

    pub fn register_config(&self) -> RegisterConfig {
        RegisterConfig {
            ratio: self.ratio,
            min_corr: self.min_corr,
            min_view_corr: self.min_view_corr,
            rig_spacing_deg: self.rig_spacing_deg,
            rig_info: self.rig_info,
            sigma_bearing_rad: self.sigma_bearing_rad,
            dcs_on_bearing: self.dcs_on_bearing,
            dcs_phi: self.dcs_phi,
            max_pano_dist_m: self.max_pano_dist_m,
            solve: self.solve_config(),
            ..RegisterConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_json("{\"ratioo\": 0.7}").unwrap_err();
        assert!(err.to_string().contains("ratioo"));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = PipelineConfig::from_json("{\"top_k\": 5}").unwrap();
        assert_eq!(cfg.top_k, 5);
        assert_eq!(cfg.ratio, 0.7);
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_override("vocab_k=64").unwrap();
        assert_eq!(cfg.vocab_k, 64);
        assert!(cfg.apply_override("not_a_key=1").is_err());
        assert!(cfg.apply_override("vocab_k=haha").is_err());
        assert!(cfg.apply_override("vocab_k").is_err());
    }
}
