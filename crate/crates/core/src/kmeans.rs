//! Lloyd's k-means over full-length series vectors.
//!
//! Seeding is k-means++, distance is squared Euclidean, and the fit with the
//! lowest inertia over `restarts` independent runs wins. A run stops when the
//! assignment stops changing or after `max_iter` passes. Clusters that empty
//! out take over the point farthest from its own centroid.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{GuardrailError, Result};
use crate::rng::SeededRng;

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, restarts: DEFAULT_RESTARTS, max_iter: DEFAULT_MAX_ITER }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances from each row to the centroid it is assigned to.
pub fn inertia<R: AsRef<[f64]>>(rows: &[R], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    rows.iter().zip(assignments).map(|(row, &c)| squared_distance(row.as_ref(), &centroids[c])).sum()
}

/// Mean of the rows in each cluster. Empty clusters get an all-zero centroid.
pub fn centroids_of<R: AsRef<[f64]>>(rows: &[R], assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = rows.first().map_or(0, |r| r.as_ref().len());
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (row, &c) in rows.iter().zip(assignments) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(row.as_ref()) {
            *s += v;
        }
    }
    for (sum, &count) in sums.iter_mut().zip(&counts) {
        if count > 0 {
            let inv = 1.0 / count as f64;
            sum.iter_mut().for_each(|s| *s *= inv);
        }
    }
    sums
}

pub fn kmeans_timeseries<R: AsRef<[f64]>>(rows: &[R], config: KMeansConfig) -> Result<KMeansFit> {
    let KMeansConfig { k, restarts, .. } = config;
    if k == 0 {
        return Err(GuardrailError::InvalidSpec("k must be at least 1".into()));
    }
    if k > rows.len() {
        return Err(GuardrailError::TooManyClusters { k, rows: rows.len() });
    }
    for (i, row) in rows.iter().enumerate() {
        if let Some(t) = row.as_ref().iter().position(|v| !v.is_finite()) {
            return Err(GuardrailError::NonFinite { item: alloc::format!("row {i}"), timestep: t });
        }
    }

    let mut best: Option<KMeansFit> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = SeededRng::with_stream(config.seed, restart as u64);
        let fit = lloyd(rows, plus_plus(rows, k, &mut rng), config.max_iter);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// k-means++ seeding: the first centre is uniform, each later one is drawn
/// with probability proportional to its squared distance to the nearest
/// centre chosen so far.
fn plus_plus<R: AsRef<[f64]>>(rows: &[R], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let first = rng.below(rows.len() as u64) as usize;
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = rows.iter().map(|r| squared_distance(r.as_ref(), rows[first].as_ref())).collect();

    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.unit() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // Every row sits on a centre already.
            (0..rows.len()).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (d, row) in nearest.iter_mut().zip(rows) {
            *d = d.min(squared_distance(row.as_ref(), rows[next].as_ref()));
        }
    }
    chosen.into_iter().map(|i| rows[i].as_ref().to_vec()).collect()
}

fn nearest_centroid(row: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(row, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn lloyd<R: AsRef<[f64]>>(rows: &[R], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansFit {
    let k = centroids.len();
    let mut assignments: Vec<usize> = rows.iter().map(|r| nearest_centroid(r.as_ref(), &centroids)).collect();

    for _ in 0..max_iter {
        reseed_empty(rows, &mut assignments, &centroids, k);
        centroids = centroids_of(rows, &assignments, k);
        // Ties keep the current cluster so re-seeded points do not bounce back.
        let next: Vec<usize> = rows
            .iter()
            .zip(&assignments)
            .map(|(r, &current)| {
                let row = r.as_ref();
                let c = nearest_centroid(row, &centroids);
                if squared_distance(row, &centroids[current]) <= squared_distance(row, &centroids[c]) {
                    current
                } else {
                    c
                }
            })
            .collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    reseed_empty(rows, &mut assignments, &centroids, k);
    let centroids = centroids_of(rows, &assignments, k);
    let inertia = inertia(rows, &assignments, &centroids);
    KMeansFit { assignments, centroids, inertia }
}

fn reseed_empty<R: AsRef<[f64]>>(rows: &[R], assignments: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    let mut counts = vec![0usize; k];
    for &c in assignments.iter() {
        counts[c] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, row) in rows.iter().enumerate() {
            let c = assignments[i];
            if counts[c] < 2 {
                continue;
            }
            let d = squared_distance(row.as_ref(), &centroids[c]);
            if d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        if let Some(i) = far {
            counts[assignments[i]] -= 1;
            assignments[i] = empty;
            counts[empty] = 1;
        }
    }
}
