use serde::{Deserialize, Serialize};

use super::{Codebook, RetrievalError};
use crate::geo::{gps_to_enu, GeoPoint};
use crate::tracks::{match_descriptors, ransac_homography, Feature, RansacParams, TrackError};

/// Where a view document came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocMeta {
    pub pano_id: String,
    pub view_index: usize,
    pub yaw_deg: f64,
    pub gps: GeoPoint,
}

/// Input document for index building.
#[derive(Debug, Clone)]
pub struct BowDocument {
    pub id: u64,
    pub descriptors: Vec<Vec<f64>>,
    pub meta: DocMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredDoc {
    id: u64,
    /// Sparse TF-IDF histogram as (word, weight) pairs, unit L2 norm unless
    /// the document was empty.
    weights: Vec<(usize, f64)>,
    meta: DocMeta,
}

/// TF-IDF weighted word-histogram index over view documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BowIndex {
    k: usize,
    idf: Vec<f64>,
    docs: Vec<StoredDoc>,
}

impl BowIndex {
    /// Builds the index: hard-assigns every document's descriptors to
    /// codebook words, derives idf_w = ln(N / (1 + n_w)) from document
    /// frequencies, then stores each document's unit-normalized tf-idf
    /// histogram.
    pub fn build(docs: &[BowDocument], codebook: &Codebook) -> Self {
        let k = codebook.k;
        let assignments: Vec<Vec<usize>> = docs
            .iter()
            .map(|d| d.descriptors.iter().map(|x| codebook.assign(x)).collect())
            .collect();
        let mut containing = vec![0usize; k];
        for words in &assignments {
            let mut seen = vec![false; k];
            for &w in words {
                if !seen[w] {
                    seen[w] = true;
                    containing[w] += 1;
                }
            }
        }
        let n = docs.len() as f64;
        let idf: Vec<f64> = containing
            .iter()
            .map(|&nw| (n / (1.0 + nw as f64)).ln())
            .collect();
        let stored = docs
            .iter()
            .zip(&assignments)
            .map(|(d, words)| StoredDoc {
                id: d.id,
                weights: dense_to_sparse(&weighted_histogram(words, k, &idf)),
                meta: d.meta.clone(),
            })
            .collect();
        Self {
            k,
            idf,
            docs: stored,
        }
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn meta(&self, doc_id: u64) -> Option<&DocMeta> {
        self.docs.iter().find(|d| d.id == doc_id).map(|d| &d.meta)
    }

    pub fn histogram(&self, doc_id: u64) -> Option<Vec<f64>> {
        self.docs.iter().find(|d| d.id == doc_id).map(|d| {
            let mut dense = vec![0.0; self.k];
            for &(w, v) in &d.weights {
                dense[w] = v;
            }
            dense
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("index serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, RetrievalError> {
        serde_json::from_str(s).map_err(|e| RetrievalError::Io(e.to_string()))
    }
}

fn weighted_histogram(words: &[usize], k: usize, idf: &[f64]) -> Vec<f64> {
    let mut hist = vec![0.0; k];
    if words.is_empty() {
        return hist;
    }
    for &w in words {
        hist[w] += 1.0;
    }
    let total = words.len() as f64;
    for (h, &idf_w) in hist.iter_mut().zip(idf) {
        *h = (*h / total) * idf_w;
    }
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for h in &mut hist {
            *h /= norm;
        }
    }
    hist
}

fn dense_to_sparse(hist: &[f64]) -> Vec<(usize, f64)> {
    hist.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(w, &v)| (w, v))
        .collect()
}

/// TF-IDF histogram of a descriptor set: hard word assignment, term
/// frequency times idf, L2-normalized. An empty descriptor set yields the
/// zero vector.
pub fn bow_histogram(descriptors: &[Vec<f64>], codebook: &Codebook, idf: &[f64]) -> Vec<f64> {
    let words: Vec<usize> = descriptors.iter().map(|d| codebook.assign(d)).collect();
    weighted_histogram(&words, codebook.k, idf)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Ranks documents by cosine similarity to the query histogram; ties break
/// by ascending document id. An optional GPS pre-filter restricts the
/// candidate set to documents within `radius_m` of a center before ranking.
pub fn query_top_k(
    query: &[f64],
    index: &BowIndex,
    k: usize,
    gps_filter: Option<(GeoPoint, f64)>,
) -> Result<Vec<(u64, f64)>, RetrievalError> {
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let mut scored: Vec<(u64, f64)> = index
        .docs
        .iter()
        .filter(|d| match &gps_filter {
            None => true,
            Some((center, radius)) => match gps_to_enu(center, &d.meta.gps) {
                Ok((e, n)) => (e * e + n * n).sqrt() <= *radius,
                Err(_) => false,
            },
        })
        .map(|d| {
            let score: f64 = d.weights.iter().map(|&(w, v)| v * query[w]).sum();
            (d.id, score)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(k);
    Ok(scored)
}

/// A retrieval candidate carrying its features for geometric verification.
#[derive(Debug, Clone)]
pub struct CandidateView {
    pub doc_id: u64,
    pub features: Vec<Feature>,
}

#[derive(Debug, Clone)]
pub struct VerifyParams {
    pub ratio: f64,
    pub ransac: RansacParams,
    pub min_inliers: usize,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            ratio: 0.7,
            ransac: RansacParams::default(),
            min_inliers: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifiedView {
    pub doc_id: u64,
    pub inliers: usize,
    /// (query feature index, candidate feature index) inlier pairs.
    pub matches: Vec<(usize, usize)>,
}

/// Homography-based verification of retrieval candidates against a camera
/// frame, mirroring the inter-frame tracking check. A candidate is accepted
/// when the consensus reaches `min_inliers`. Empty acceptance is a valid
/// result.
pub fn verify_candidates(
    frame_features: &[Feature],
    candidates: &[CandidateView],
    params: &VerifyParams,
) -> Vec<VerifiedView> {
    let mut accepted = Vec::new();
    for cand in candidates {
        if frame_features.is_empty() || cand.features.is_empty() {
            continue;
        }
        let Ok(pairs) = match_descriptors(
            frame_features,
            &cand.features,
            params.ratio,
            crate::tracks::DescriptorDistance::Euclidean,
        ) else {
            continue;
        };
        if pairs.len() < params.min_inliers.max(4) {
            continue;
        }
        let pts: Vec<_> = pairs
            .iter()
            .map(|&(qi, ci)| (frame_features[qi].keypoint, cand.features[ci].keypoint))
            .collect();
        let ransac = RansacParams {
            min_consensus: params.min_inliers,
            seed: params.ransac.seed ^ cand.doc_id.wrapping_mul(0x9e3779b97f4a7c15),
            ..params.ransac.clone()
        };
        match ransac_homography(&pts, &ransac) {
            Ok((_, mask)) => {
                let matches: Vec<(usize, usize)> = pairs
                    .iter()
                    .zip(&mask)
                    .filter(|(_, &m)| m)
                    .map(|(&p, _)| p)
                    .collect();
                accepted.push(VerifiedView {
                    doc_id: cand.doc_id,
                    inliers: matches.len(),
                    matches,
                });
            }
            Err(TrackError::NoConsensus { .. }) => {}
            Err(_) => {}
        }
    }
    accepted
}
