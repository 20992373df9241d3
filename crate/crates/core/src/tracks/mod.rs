//! Feature tracking over a sliding window of frames: descriptor matching
//! with the ratio test, homography-RANSAC geometric verification and track
//! lifecycle. Matching is strictly sequential; non-consecutive frames are
//! never related.

mod detector;
mod homography;
mod matching;
mod store;

pub use detector::{FeatureDetector, GridDetector};
pub use homography::{estimate_homography, ransac_homography, Homography, RansacParams};
pub use matching::{match_descriptors, DescriptorDistance};
pub use store::{Track, TrackObservation, TrackStatus, TrackStore, TrackStoreConfig, UpdateSummary};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A keypoint with its descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    /// Pixel coordinates (u, v).
    pub keypoint: [f64; 2],
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("descriptor dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty feature set")]
    EmptyFeatureSet,
    #[error("need at least 4 correspondences, got {0}")]
    TooFewMatches(usize),
    #[error("degenerate point configuration for homography")]
    DegenerateConfiguration,
    #[error("no consensus: best inlier count {best} below minimum {min}")]
    NoConsensus { best: usize, min: usize },
    #[error("frame {0} arrived after frame {1}; frames must be ordered")]
    FramesOutOfOrder(u64, u64),
}
