use serde::{Deserialize, Serialize};

use super::{
    match_descriptors, ransac_homography, DescriptorDistance, Feature, RansacParams, TrackError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackObservation {
    pub frame_id: u64,
    /// Index of the feature in its frame's feature list.
    pub feature_index: usize,
    pub keypoint: [f64; 2],
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Live,
    Terminated,
}

/// One physical feature's chain of matched keypoints over strictly
/// consecutive frames. A track terminates the first time its feature fails
/// to match; broken tracks are never merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub observations: Vec<TrackObservation>,
    pub status: TrackStatus,
}

impl Track {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn first_frame(&self) -> u64 {
        self.observations[0].frame_id
    }

    pub fn last_frame(&self) -> u64 {
        self.observations[self.observations.len() - 1].frame_id
    }

    pub fn last_observation(&self) -> &TrackObservation {
        self.observations.last().expect("tracks are never empty")
    }

    /// Component-wise mean descriptor over the track's observations.
    pub fn mean_descriptor(&self) -> Vec<f64> {
        let dim = self.observations[0].descriptor.len();
        let mut mean = vec![0.0; dim];
        for obs in &self.observations {
            for (m, d) in mean.iter_mut().zip(&obs.descriptor) {
                *m += d;
            }
        }
        let n = self.observations.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

#[derive(Debug, Clone)]
pub struct TrackStoreConfig {
    pub ratio: f64,
    pub distance: DescriptorDistance,
    pub ransac: RansacParams,
    /// Sliding-window length in frames; terminated tracks older than this
    /// are dropped.
    pub window: usize,
}

impl Default for TrackStoreConfig {
    fn default() -> Self {
        Self {
            ratio: 0.7,
            distance: DescriptorDistance::Euclidean,
            ransac: RansacParams::default(),
            window: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UpdateSummary {
    pub extended: usize,
    pub started: usize,
    pub terminated: usize,
    /// False when the homography check found no consensus and the update
    /// fell back to terminating everything.
    pub geometric_check: bool,
}

/// Single-writer track store over an ordered frame stream.
#[derive(Debug, Default)]
pub struct TrackStore {
    config: TrackStoreConfig,
    next_id: u64,
    live: Vec<Track>,
    finished: Vec<Track>,
    last_frame: Option<u64>,
}

impl TrackStore {
    pub fn new(config: TrackStoreConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    pub fn live_tracks(&self) -> &[Track] {
        &self.live
    }

    /// Terminated plus live tracks, in creation order.
    pub fn into_tracks(mut self) -> Vec<Track> {
        let mut all = std::mem::take(&mut self.finished);
        all.extend(self.live);
        all.sort_by_key(|t| t.id);
        all
    }

    /// Ingests the next frame: ratio-test match from the previous frame,
    /// homography-RANSAC verification, then extend/terminate/start tracks.
    pub fn update(
        &mut self,
        frame_id: u64,
        features: &[Feature],
    ) -> Result<UpdateSummary, TrackError> {
        if let Some(last) = self.last_frame {
            if frame_id <= last {
                return Err(TrackError::FramesOutOfOrder(frame_id, last));
            }
            if frame_id != last + 1 {
                // Gap in the stream: nothing is consecutive anymore.
                self.terminate_all();
            }
        }
        self.last_frame = Some(frame_id);

        let mut summary = UpdateSummary::default();
        if self.live.is_empty() || features.is_empty() {
            summary.terminated = self.live.len();
            self.terminate_all();
            summary.started = features.len();
            self.start_tracks(frame_id, features, None);
            self.evict_old(frame_id);
            return Ok(summary);
        }

        let prev: Vec<Feature> = self
            .live
            .iter()
            .map(|t| {
                let o = t.last_observation();
                Feature {
                    keypoint: o.keypoint,
                    descriptor: o.descriptor.clone(),
                }
            })
            .collect();
        let pairs = match_descriptors(&prev, features, self.config.ratio, self.config.distance)?;

        // Geometric verification of the keypoint arrangement.
        let verified: Vec<(usize, usize)> = if pairs.len() >= 4 {
            let pts: Vec<_> = pairs
                .iter()
                .map(|&(ti, fi)| (prev[ti].keypoint, features[fi].keypoint))
                .collect();
            let params = RansacParams {
                // Vary the stream deterministically per frame.
                seed: self.config.ransac.seed ^ frame_id.wrapping_mul(0x9e3779b97f4a7c15),
                ..self.config.ransac.clone()
            };
            match ransac_homography(&pts, &params) {
                Ok((_, mask)) => {
                    summary.geometric_check = true;
                    pairs
                        .into_iter()
                        .zip(mask)
                        .filter(|(_, keep)| *keep)
                        .map(|(p, _)| p)
                        .collect()
                }
                Err(TrackError::NoConsensus { .. }) => Vec::new(),
                Err(e) => return Err(e),
            }
        } else {
            Vec::new()
        };

        let mut matched_feature = vec![false; features.len()];
        let mut extended = vec![false; self.live.len()];
        for &(track_idx, feat_idx) in &verified {
            matched_feature[feat_idx] = true;
            extended[track_idx] = true;
            self.live[track_idx].observations.push(TrackObservation {
                frame_id,
                feature_index: feat_idx,
                keypoint: features[feat_idx].keypoint,
                descriptor: features[feat_idx].descriptor.clone(),
            });
        }
        summary.extended = verified.len();

        // Terminate tracks that did not extend.
        let mut still_live = Vec::with_capacity(verified.len());
        for (idx, mut track) in std::mem::take(&mut self.live).into_iter().enumerate() {
            if extended[idx] {
                still_live.push(track);
            } else {
                track.status = TrackStatus::Terminated;
                summary.terminated += 1;
                self.finished.push(track);
            }
        }
        self.live = still_live;

        summary.started = matched_feature.iter().filter(|&&m| !m).count();
        self.start_tracks(frame_id, features, Some(&matched_feature));
        self.evict_old(frame_id);
        Ok(summary)
    }

    fn start_tracks(&mut self, frame_id: u64, features: &[Feature], matched: Option<&[bool]>) {
        for (i, f) in features.iter().enumerate() {
            if matched.map_or(false, |m| m[i]) {
                continue;
            }
            self.live.push(Track {
                id: self.next_id,
                observations: vec![TrackObservation {
                    frame_id,
                    feature_index: i,
                    keypoint: f.keypoint,
                    descriptor: f.descriptor.clone(),
                }],
                status: TrackStatus::Live,
            });
            self.next_id += 1;
        }
    }

    fn terminate_all(&mut self) {
        for mut t in std::mem::take(&mut self.live) {
            t.status = TrackStatus::Terminated;
            self.finished.push(t);
        }
    }

    fn evict_old(&mut self, frame_id: u64) {
        let window = self.config.window as u64;
        self.finished
            .retain(|t| t.last_frame() + window >= frame_id);
    }
}
