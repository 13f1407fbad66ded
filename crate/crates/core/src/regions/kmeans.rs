//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub history: Vec<f64>,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.history.last().expect("at least one assignment step")
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point (ties to the lowest centroid) and the
/// resulting objective.
fn assign<P: AsRef<[f64]> + Sync>(points: &[P], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let best: Vec<(usize, f64)> = points
        .par_iter()
        .map(|p| {
            let p = p.as_ref();
            let mut best = (0, f64::INFINITY);
            for (c, cent) in centroids.iter().enumerate() {
                let d = dist2(p, cent);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect();
    let objective = best.iter().map(|b| b.1).sum();
    (best.into_iter().map(|b| b.0).collect(), objective)
}

fn plus_plus_init<P: AsRef<[f64]> + Sync>(points: &[P], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    let n = points.len();
    let first = rng.random_range(0..n);
    let mut centroids = vec![points[first].as_ref().to_vec()];
    let mut d2: Vec<f64> = points
        .par_iter()
        .map(|p| dist2(p.as_ref(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].as_ref().to_vec();
        d2.par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(dist2(p.as_ref(), &c)));
        centroids.push(c);
    }
    centroids
}

/// Clusters `points` into `k` groups. Seeding is k-means++ driven by
/// `seed`; Lloyd updates run until the assignment reaches a fixpoint or
/// `max_iters` updates have been made. Empty clusters keep their centroid.
pub fn kmeans<P: AsRef<[f64]> + Sync>(points: &[P], k: usize, max_iters: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs K >= 1".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "K = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let dim = points[0].as_ref().len();
    if points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::InvalidArgument("points differ in dimension".into()));
    }

    let mut centroids = plus_plus_init(points, k, seed);
    let (mut assignments, objective) = assign(points, &centroids);
    let mut history = vec![objective];
    for _ in 0..max_iters {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.as_ref()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let (next, objective) = assign(points, &centroids);
        history.push(objective);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let r = kmeans(&pts, 1, 10, 0).unwrap();
        assert!((r.centroids[0][0] - 1.0).abs() < 1e-12);
        assert!((r.centroids[0][1] - 1.0).abs() < 1e-12);
        assert_eq!(r.assignments, vec![0, 0, 0]);
    }

    #[test]
    fn k_equal_count_has_zero_objective() {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![(i * i) as f64, i as f64 * 0.5]).collect();
        let r = kmeans(&pts, 9, 20, 3).unwrap();
        assert_eq!(r.objective(), 0.0);
        let mut seen = r.assignments.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn rejects_too_many_clusters() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(kmeans(&pts, 3, 10, 0).is_err());
        assert!(kmeans(&pts, 0, 10, 0).is_err());
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for trial in 0..20 {
            let pts: Vec<[f64; 3]> = (0..200)
                .map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
                .collect();
            let r = kmeans(&pts, 7, 100, trial).unwrap();
            for w in r.history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", r.history);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let pts: Vec<[f64; 2]> = (0..50).map(|i| [(i % 7) as f64, (i % 11) as f64]).collect();
        assert_eq!(kmeans(&pts, 4, 50, 9).unwrap(), kmeans(&pts, 4, 50, 9).unwrap());
    }

    /// Best objective over every 2-partition, by enumeration.
    fn best_two_partition(pts: &[[f64; 2]]) -> (f64, Vec<usize>) {
        let n = pts.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << n) - 1 {
            let groups: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut obj = 0.0;
            for g in 0..2 {
                let members: Vec<&[f64; 2]> = (0..n).filter(|&i| groups[i] == g).map(|i| &pts[i]).collect();
                let m = members.len() as f64;
                let cx = members.iter().map(|p| p[0]).sum::<f64>() / m;
                let cy = members.iter().map(|p| p[1]).sum::<f64>() / m;
                obj += members.iter().map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sum::<f64>();
            }
            if obj < best.0 {
                best = (obj, groups);
            }
        }
        best
    }

    #[test]
    fn separated_blobs_match_exhaustive_optimum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..10 {
            let n = rng.random_range(4..=12);
            let pts: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let off = if i % 2 == 0 { 0.0 } else { 20.0 };
                    [off + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
                })
                .collect();
            let (best, groups) = best_two_partition(&pts);
            let r = kmeans(&pts, 2, 100, trial).unwrap();
            assert!((r.objective() - best).abs() <= 1e-9 * best.max(1.0));
            // blob membership up to relabeling
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(r.assignments[i] == r.assignments[j], groups[i] == groups[j]);
                    assert_eq!(r.assignments[i] == r.assignments[j], i % 2 == j % 2);
                }
            }
        }
    }
}
