use super::Feature;
use crate::geometry::Raster;

/// Pluggable feature detection: takes an image, returns keypoints with
/// descriptors. The pipeline's synthetic datasets carry precomputed
/// features so real detection never runs there; this trait exists for
/// raster inputs and smoke tests.
pub trait FeatureDetector {
    fn detect(&self, image: &Raster) -> Vec<Feature>;
}

/// Trivial detector placing keypoints on a regular grid and describing each
/// by its normalized surrounding patch. Good enough to smoke-test the
/// matching machinery on raster images; not a real interest-point detector.
#[derive(Debug, Clone)]
pub struct GridDetector {
    pub spacing: usize,
    pub patch: usize,
}

impl Default for GridDetector {
    fn default() -> Self {
        Self {
            spacing: 24,
            patch: 8,
        }
    }
}

impl FeatureDetector for GridDetector {
    fn detect(&self, image: &Raster) -> Vec<Feature> {
        let half = self.patch / 2;
        let mut features = Vec::new();
        let mut y = half + 1;
        while y + half < image.height {
            let mut x = half + 1;
            while x + half < image.width {
                let mut desc = Vec::with_capacity(self.patch * self.patch);
                for dy in 0..self.patch {
                    for dx in 0..self.patch {
                        desc.push(image.get(x - half + dx, y - half + dy, 0) as f64);
                    }
                }
                let mean = desc.iter().sum::<f64>() / desc.len() as f64;
                desc.iter_mut().for_each(|v| *v -= mean);
                let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-9 {
                    desc.iter_mut().for_each(|v| *v /= norm);
                }
                features.push(Feature {
                    keypoint: [x as f64, y as f64],
                    descriptor: desc,
                });
                x += self.spacing;
            }
            y += self.spacing;
        }
        features
    }
}
