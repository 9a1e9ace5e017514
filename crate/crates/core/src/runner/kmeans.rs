use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fitted K-means centroids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KMeans {
    /// Lloyd iterations from a seeded k-means++ start. Empty clusters keep
    /// their previous centroid.
    pub fn fit(points: &[Vec<f64>], k: usize, iterations: usize, seed: u64) -> Result<Self> {
        if k == 0 || points.len() < k {
            return Err(Error::Config(format!(
                "cannot form {k} clusters from {} points",
                points.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
        while centroids.len() < k {
            let d2: Vec<f64> = points
                .iter()
                .map(|p| centroids.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
                .collect();
            let next = match WeightedIndex::new(&d2) {
                Ok(w) => w.sample(&mut rng),
                // every point coincides with a centroid already
                Err(_) => rng.random_range(0..points.len()),
            };
            centroids.push(points[next].clone());
        }
        let dim = points[0].len();
        for _ in 0..iterations {
            let model = KMeans { centroids };
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for p in points {
                let c = model.assign(p);
                counts[c] += 1;
                for (s, x) in sums[c].iter_mut().zip(p) {
                    *s += x;
                }
            }
            centroids = model.centroids;
            for c in 0..k {
                if counts[c] > 0 {
                    centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
        }
        Ok(Self { centroids })
    }

    /// Nearest centroid, ties to the lowest index.
    pub fn assign(&self, point: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let d = sq_dist(point, c);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_obvious_clusters() {
        let mut pts = Vec::new();
        for i in 0..10 {
            let e = i as f64 * 0.01;
            pts.push(vec![0.0 + e, 0.0]);
            pts.push(vec![5.0 + e, 5.0]);
            pts.push(vec![-5.0, 5.0 + e]);
        }
        let km = KMeans::fit(&pts, 3, 20, 1).unwrap();
        let labels: Vec<usize> = pts.iter().map(|p| km.assign(p)).collect();
        for chunk in labels.chunks(3) {
            assert_eq!(chunk[0], labels[0]);
            assert_eq!(chunk[1], labels[1]);
            assert_eq!(chunk[2], labels[2]);
        }
        assert_ne!(labels[0], labels[1]);
        assert_ne!(labels[1], labels[2]);
        assert_eq!(km, KMeans::fit(&pts, 3, 20, 1).unwrap());
    }

    #[test]
    fn too_few_points() {
        assert!(KMeans::fit(&[vec![1.0]], 2, 5, 0).is_err());
    }
}
