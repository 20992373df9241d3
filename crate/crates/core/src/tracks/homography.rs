use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrackError;

/// 3x3 perspective transform, normalized so the bottom-right entry is 1
/// when it is nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    fn from_matrix(mut m: Matrix3<f64>) -> Result<Self, TrackError> {
        if m.determinant().abs() <= 1e-12 {
            return Err(TrackError::DegenerateConfiguration);
        }
        if m[(2, 2)].abs() > 1e-12 {
            m /= m[(2, 2)];
        } else {
            m /= m.norm();
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn apply(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let q = self.m * Vector3::new(p[0], p[1], 1.0);
        if q.z.abs() < 1e-12 {
            return None;
        }
        Some([q.x / q.z, q.y / q.z])
    }

    pub fn inverse(&self) -> Homography {
        Homography {
            m: self.m.try_inverse().expect("determinant checked nonzero"),
        }
    }

    /// Squared symmetric transfer error of the pair (a, b).
    pub fn symmetric_transfer_error_sq(&self, inv: &Homography, a: [f64; 2], b: [f64; 2]) -> f64 {
        let fwd = match self.apply(a) {
            Some(p) => (p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2),
            None => return f64::INFINITY,
        };
        let bwd = match inv.apply(b) {
            Some(p) => (p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2),
            None => return f64::INFINITY,
        };
        fwd + bwd
    }
}

/// Hartley normalization: translate to zero mean and scale so the RMS
/// distance from the origin is sqrt(2).
fn normalization(points: impl Iterator<Item = [f64; 2]> + Clone) -> Matrix3<f64> {
    let mut n = 0usize;
    let (mut mx, mut my) = (0.0, 0.0);
    for p in points.clone() {
        mx += p[0];
        my += p[1];
        n += 1;
    }
    let n_f = n as f64;
    mx /= n_f;
    my /= n_f;
    let mut rms = 0.0;
    for p in points {
        rms += (p[0] - mx).powi(2) + (p[1] - my).powi(2);
    }
    rms = (rms / n_f).sqrt();
    let s = if rms > 1e-12 { (2.0f64).sqrt() / rms } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

fn three_collinear(pts: &[[f64; 2]]) -> bool {
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            for k in (j + 1)..pts.len() {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let area2 =
                    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
                let scale = ((b[0] - a[0]).hypot(b[1] - a[1]))
                    * ((c[0] - a[0]).hypot(c[1] - a[1]));
                if area2.abs() <= 1e-9 * scale.max(1e-12) {
                    return true;
                }
            }
        }
    }
    false
}

/// Normalized-DLT homography minimizing algebraic error over >= 4
/// correspondences.
pub fn estimate_homography(pairs: &[([f64; 2], [f64; 2])]) -> Result<Homography, TrackError> {
    if pairs.len() < 4 {
        return Err(TrackError::TooFewMatches(pairs.len()));
    }
    if pairs.len() == 4 {
        let src: Vec<[f64; 2]> = pairs.iter().map(|p| p.0).collect();
        let dst: Vec<[f64; 2]> = pairs.iter().map(|p| p.1).collect();
        if three_collinear(&src) || three_collinear(&dst) {
            return Err(TrackError::DegenerateConfiguration);
        }
    }

    let t_a = normalization(pairs.iter().map(|p| p.0));
    let t_b = normalization(pairs.iter().map(|p| p.1));

    let mut a = DMatrix::zeros(2 * pairs.len(), 9);
    for (i, (pa, pb)) in pairs.iter().enumerate() {
        let qa = t_a * Vector3::new(pa[0], pa[1], 1.0);
        let qb = t_b * Vector3::new(pb[0], pb[1], 1.0);
        let (x, y) = (qa.x, qa.y);
        let (u, v) = (qb.x, qb.y);
        let r = 2 * i;
        a.view_mut((r, 0), (1, 9)).copy_from_slice(&[
            -x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u,
        ]);
        a.view_mut((r + 1, 0), (1, 9)).copy_from_slice(&[
            0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v,
        ]);
    }

    // Smallest right singular vector via the 9x9 normal matrix; a thin SVD
    // of the 2Nx9 system would drop the null vector when 2N < 9... and for
    // N = 4 it drops it outright (8 < 9).
    let ata = a.transpose() * &a;
    let eig = nalgebra::SymmetricEigen::new(ata);
    let mut min_idx = 0;
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let h = eig.eigenvectors.column(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let denorm = t_b
        .try_inverse()
        .ok_or(TrackError::DegenerateConfiguration)?
        * hn
        * t_a;
    Homography::from_matrix(denorm)
}

#[derive(Debug, Clone)]
pub struct RansacParams {
    /// Inlier threshold on the symmetric transfer error, pixels.
    pub inlier_tol: f64,
    pub iters: usize,
    pub seed: u64,
    /// Minimum consensus for a valid model.
    pub min_consensus: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_tol: 3.0,
            iters: 1000,
            seed: 0,
            min_consensus: 8,
        }
    }
}

/// Classic RANSAC over 4-point samples with a final re-fit on all inliers.
/// Deterministic for a fixed seed. With exactly 4 matches the exact-fit
/// model is returned directly.
pub fn ransac_homography(
    matches: &[([f64; 2], [f64; 2])],
    params: &RansacParams,
) -> Result<(Homography, Vec<bool>), TrackError> {
    let n = matches.len();
    if n < 4 {
        return Err(TrackError::TooFewMatches(n));
    }
    if n == 4 {
        let h = estimate_homography(matches)?;
        return Ok((h, vec![true; 4]));
    }

    let tol_sq = params.inlier_tol * params.inlier_tol;
    let inlier_mask = |h: &Homography| -> Vec<bool> {
        let inv = h.inverse();
        matches
            .iter()
            .map(|&(a, b)| h.symmetric_transfer_error_sq(&inv, a, b) < tol_sq)
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, Homography)> = None;
    let mut needed = params.iters;
    let mut it = 0;
    while it < needed.min(params.iters) {
        it += 1;
        let mut idx = [0usize; 4];
        let mut chosen = 0;
        while chosen < 4 {
            let candidate = rng.gen_range(0..n);
            if !idx[..chosen].contains(&candidate) {
                idx[chosen] = candidate;
                chosen += 1;
            }
        }
        let sample: Vec<_> = idx.iter().map(|&i| matches[i]).collect();
        let Ok(h) = estimate_homography(&sample) else {
            continue;
        };
        let count = inlier_mask(&h).iter().filter(|&&x| x).count();
        if best.as_ref().map_or(true, |(c, _)| count > *c) {
            best = Some((count, h));
            // Standard adaptive stop: enough iterations for 99.9% confidence
            // at the observed inlier ratio.
            let w = count as f64 / n as f64;
            let p_sample = w.powi(4);
            if p_sample > 1e-9 {
                let est = ((1.0f64 - 0.999).ln() / (1.0 - p_sample).max(1e-12).ln()).ceil();
                needed = (est.max(1.0) as usize).min(params.iters);
            }
        }
    }

    let (best_count, best_h) = best.ok_or(TrackError::DegenerateConfiguration)?;
    if best_count < params.min_consensus {
        return Err(TrackError::NoConsensus {
            best: best_count,
            min: params.min_consensus,
        });
    }

    // Re-fit on all inliers of the best sample model, then reclassify.
    let mask = inlier_mask(&best_h);
    let inliers: Vec<_> = matches
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| *p)
        .collect();
    let final_h = estimate_homography(&inliers).unwrap_or(best_h);
    let final_mask = inlier_mask(&final_h);
    let final_count = final_mask.iter().filter(|&&x| x).count();
    if final_count < params.min_consensus {
        return Err(TrackError::NoConsensus {
            best: final_count,
            min: params.min_consensus,
        });
    }
    Ok((final_h, final_mask))
}
