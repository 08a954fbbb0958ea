//! Lloyd's k-means with k-means++ seeding, deterministic for a given seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ITERATIONS: usize = 50;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cluster label per point. Every cluster is non-empty when `k <= points.len()`
/// and the points are pairwise distinct.
pub fn kmeans(points: &[&[f64]], k: usize, seed: u64) -> Vec<usize> {
    assert!(k >= 1 && k <= points.len(), "k out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..points.len())].to_vec()];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            d.iter().position(|&w| {
                r -= w;
                r < 0.0
            })
            .unwrap_or(points.len() - 1)
        } else {
            rng.gen_range(0..points.len())
        };
        centers.push(points[next].to_vec());
    }

    let mut labels = vec![0; points.len()];
    for _ in 0..ITERATIONS {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b])))
                .expect("k >= 1");
            moved |= best != labels[i];
            labels[i] = best;
        }
        // Re-seed empty clusters at the point farthest from its center.
        for c in 0..k {
            if !labels.contains(&c) {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        dist2(points[a], &centers[labels[a]]).total_cmp(&dist2(points[b], &centers[labels[b]]))
                    })
                    .expect("non-empty");
                labels[far] = c;
                moved = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| *p).collect();
            if members.is_empty() {
                continue;
            }
            for (d, v) in center.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
        if !moved {
            break;
        }
    }
    labels
}
