use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use super::RetrievalError;

/// Visual vocabulary: k cluster centers in descriptor space.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub k: usize,
    pub dim: usize,
    /// Row-major k x dim center matrix.
    pub centers: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CodebookSidecar {
    k: usize,
    #[serde(rename = "D")]
    dim: usize,
}

impl Codebook {
    pub fn center(&self, w: usize) -> &[f64] {
        &self.centers[w * self.dim..(w + 1) * self.dim]
    }

    /// Index of the nearest center; ties break toward the lower word index.
    pub fn assign(&self, descriptor: &[f64]) -> usize {
        let mut best = (0usize, f64::INFINITY);
        for w in 0..self.k {
            let d = squared_dist(self.center(w), descriptor);
            if d < best.1 {
                best = (w, d);
            }
        }
        best.0
    }

    /// Flat binary of k*dim little-endian f64 values.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for v in &self.centers {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn sidecar_json(&self) -> String {
        serde_json::to_string(&CodebookSidecar {
            k: self.k,
            dim: self.dim,
        })
        .expect("sidecar serializes")
    }

    pub fn read_binary<R: Read>(r: &mut R, sidecar_json: &str) -> Result<Self, RetrievalError> {
        let sidecar: CodebookSidecar =
            serde_json::from_str(sidecar_json).map_err(|e| RetrievalError::Io(e.to_string()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| RetrievalError::Io(e.to_string()))?;
        let expected = sidecar.k * sidecar.dim * 8;
        if bytes.len() != expected {
            return Err(RetrievalError::Io(format!(
                "expected {expected} bytes for {}x{} codebook, got {}",
                sidecar.k,
                sidecar.dim,
                bytes.len()
            )));
        }
        let centers = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            k: sidecar.k,
            dim: sidecar.dim,
            centers,
        })
    }
}

fn squared_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Deterministic given the seed,
/// and independent of input order: all reductions run over a canonical
/// (lexicographic) ordering of the descriptors, so permuting the input can
/// only permute cluster labels. Terminates on an assignment fixpoint or
/// after `max_iters` rounds; empty clusters are re-seeded to the descriptor
/// farthest from its center.
pub fn build_codebook(
    descriptors: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Codebook, RetrievalError> {
    if descriptors.len() < k || k == 0 {
        return Err(RetrievalError::TooFewDescriptors {
            needed: k,
            got: descriptors.len(),
        });
    }
    let dim = descriptors[0].len();
    for d in descriptors {
        if d.len() != dim {
            return Err(RetrievalError::DimensionMismatch(dim, d.len()));
        }
    }

    let mut order: Vec<usize> = (0..descriptors.len()).collect();
    order.sort_by(|&a, &b| {
        descriptors[a]
            .partial_cmp(&descriptors[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(descriptors[order[rng.gen_range(0..order.len())]].clone());
    let mut dist_sq: Vec<f64> = order
        .iter()
        .map(|&i| squared_dist(&descriptors[i], &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = dist_sq.iter().sum();
        let next = if total <= 0.0 {
            // All remaining mass at existing centers; take the first
            // canonical descriptor not yet chosen.
            order
                .iter()
                .position(|&i| centers.iter().all(|c| c != &descriptors[i]))
                .unwrap_or(0)
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = dist_sq.len() - 1;
            for (pos, &d) in dist_sq.iter().enumerate() {
                if target < d {
                    chosen = pos;
                    break;
                }
                target -= d;
            }
            chosen
        };
        let c = descriptors[order[next]].clone();
        for (pos, &i) in order.iter().enumerate() {
            let d = squared_dist(&descriptors[i], &c);
            if d < dist_sq[pos] {
                dist_sq[pos] = d;
            }
        }
        centers.push(c);
    }

    let mut book = Codebook {
        k,
        dim,
        centers: centers.into_iter().flatten().collect(),
    };

    let mut assignment = vec![usize::MAX; descriptors.len()];
    for _ in 0..max_iters {
        let mut changed = false;
        for &i in &order {
            let w = book.assign(&descriptors[i]);
            if w != assignment[i] {
                assignment[i] = w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for &i in &order {
            let w = assignment[i];
            counts[w] += 1;
            for (s, v) in sums[w * dim..(w + 1) * dim].iter_mut().zip(&descriptors[i]) {
                *s += v;
            }
        }
        for w in 0..k {
            if counts[w] == 0 {
                // Re-seed to the descriptor farthest from its own center.
                let far = order
                    .iter()
                    .copied()
                    .max_by(|&a, &b| {
                        let da = squared_dist(&descriptors[a], book.center(assignment[a]));
                        let db = squared_dist(&descriptors[b], book.center(assignment[b]));
                        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .expect("nonempty descriptor set");
                book.centers[w * dim..(w + 1) * dim].copy_from_slice(&descriptors[far]);
            } else {
                for (c, s) in book.centers[w * dim..(w + 1) * dim]
                    .iter_mut()
                    .zip(&sums[w * dim..(w + 1) * dim])
                {
                    *c = s / counts[w] as f64;
                }
            }
        }
    }
    Ok(book)
}

/// Total within-cluster squared distance for a fixed codebook.
pub fn assignment_cost(descriptors: &[Vec<f64>], book: &Codebook) -> f64 {
    descriptors
        .iter()
        .map(|d| squared_dist(book.center(book.assign(d)), d))
        .sum()
}
