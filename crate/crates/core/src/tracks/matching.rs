use super::{Feature, TrackError};

/// Descriptor distance used for matching. Squared Euclidean skips the square
/// root; the ratio test compares like with like so both give identical
/// matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DescriptorDistance {
    #[default]
    Euclidean,
    SquaredEuclidean,
}

fn squared_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lowe-style ratio-test matching from `a` into `b`: a feature matches its
/// nearest neighbor only if that distance is below `ratio` times the
/// second-nearest. The result is a one-to-one partial mapping; when two
/// `a`-features claim the same `b`-feature the smaller distance wins.
pub fn match_descriptors(
    a: &[Feature],
    b: &[Feature],
    ratio: f64,
    distance: DescriptorDistance,
) -> Result<Vec<(usize, usize)>, TrackError> {
    if a.is_empty() || b.is_empty() {
        return Err(TrackError::EmptyFeatureSet);
    }
    let dim = a[0].descriptor.len();
    for f in a.iter().chain(b.iter()) {
        if f.descriptor.len() != dim {
            return Err(TrackError::DimensionMismatch(dim, f.descriptor.len()));
        }
    }
    // With a single candidate there is no second neighbor to test against;
    // reject conservatively.
    if b.len() < 2 {
        return Ok(Vec::new());
    }

    // candidate[j] = (a index, distance) currently claiming b feature j.
    let mut claimed: Vec<Option<(usize, f64)>> = vec![None; b.len()];
    for (ai, fa) in a.iter().enumerate() {
        let mut best = (usize::MAX, f64::INFINITY);
        let mut second = f64::INFINITY;
        for (bi, fb) in b.iter().enumerate() {
            let d = squared_dist(&fa.descriptor, &fb.descriptor);
            if d < best.1 {
                second = best.1;
                best = (bi, d);
            } else if d < second {
                second = d;
            }
        }
        let accepted = match distance {
            DescriptorDistance::Euclidean => best.1.sqrt() < ratio * second.sqrt(),
            DescriptorDistance::SquaredEuclidean => best.1 < ratio * ratio * second,
        };
        if !accepted {
            continue;
        }
        match claimed[best.0] {
            Some((_, d)) if d <= best.1 => {}
            _ => claimed[best.0] = Some((ai, best.1)),
        }
    }

    Ok(claimed
        .iter()
        .enumerate()
        .filter_map(|(bi, c)| c.map(|(ai, _)| (ai, bi)))
        .collect())
}
