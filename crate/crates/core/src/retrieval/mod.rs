//! Bag-of-words panorama-view retrieval: k-means visual codebook, TF-IDF
//! weighted word histograms and cosine-similarity ranking, with a
//! homography-based geometric verification of the top candidates.

mod bow;
mod kmeans;

pub use bow::{
    bow_histogram, cosine_similarity, query_top_k, verify_candidates, BowDocument, BowIndex,
    CandidateView, DocMeta, VerifiedView, VerifyParams,
};
pub use kmeans::{assignment_cost, build_codebook, Codebook};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("need at least {needed} descriptors to build a {needed}-word codebook, got {got}")]
    TooFewDescriptors { needed: usize, got: usize },
    #[error("descriptor dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("index contains no documents")]
    EmptyIndex,
    #[error("codebook io: {0}")]
    Io(String),
}
