//! Lloyd's k-means with k-means++ seeding, the distance-based baseline.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::sampling::stream_rng;
use crate::stats::DataMatrix;

const MAX_ITERS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// Row-major `k x d`.
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeds<R: Rng>(data: &DataMatrix, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = data.n();
    let mut centroids = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = data.rows().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // Every point coincides with a centroid already.
            rng.random_range(0..n)
        };
        let c = data.row(pick).to_vec();
        for (x, d) in data.rows().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Partitions `data` into `k` clusters.
pub fn kmeans(data: &DataMatrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = data.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if k > n {
        return Err(invalid(format!("k = {k} exceeds the {n} points")));
    }
    let d = data.d();
    let mut rng = stream_rng(seed, 0x6b6d);
    let mut centroids = plus_plus_seeds(data, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..MAX_ITERS {
        iterations += 1;
        let mut changed = false;
        for (x, l) in data.rows().zip(labels.iter_mut()) {
            let (j, _) = nearest(x, &centroids);
            if *l != j {
                *l = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.rows().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            // An emptied cluster keeps its old centroid.
            if counts[j] > 0 {
                for s in &mut sums[j] {
                    *s /= counts[j] as f64;
                }
                centroids[j] = std::mem::take(&mut sums[j]);
            }
        }
    }
    let inertia = data
        .rows()
        .zip(&labels)
        .map(|(x, &l)| sq_dist(x, &centroids[l]))
        .sum();
    Ok(KMeansResult {
        labels,
        centroids,
        iterations,
        inertia,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::standard_normal;

    #[test]
    fn two_points_two_clusters() {
        let data = DataMatrix::from_rows(&[[0.0, 0.0], [5.0, 5.0]]).unwrap();
        let r = kmeans(&data, 2, 0).unwrap();
        assert_ne!(r.labels[0], r.labels[1]);
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let mut rng = stream_rng(3, 0);
        let mut v = Vec::new();
        for c in [-10.0, 10.0] {
            for _ in 0..500 {
                v.push(c + standard_normal(&mut rng));
            }
        }
        let data = DataMatrix::from_column(v).unwrap();
        let r = kmeans(&data, 2, 1).unwrap();
        let first = r.labels[0];
        assert!(r.labels[..500].iter().all(|&l| l == first));
        assert!(r.labels[500..].iter().all(|&l| l != first));
    }

    #[test]
    fn k_equal_one_and_n() {
        let data = DataMatrix::from_column(vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        assert!(kmeans(&data, 1, 0).unwrap().labels.iter().all(|&l| l == 0));
        let mut all = kmeans(&data, 4, 0).unwrap().labels;
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn invalid_k() {
        let data = DataMatrix::from_column(vec![1.0, 2.0]).unwrap();
        assert!(kmeans(&data, 3, 0).is_err());
        assert!(kmeans(&data, 0, 0).is_err());
    }
}
