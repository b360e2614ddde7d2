//! Seeded k-means used to order heatmap rows so similar samples sit together.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tfidf::{CodeVectorSet, SparseVector};

const MAX_ITERATIONS: usize = 100;
const MOVEMENT_EPS: f64 = 1e-6;
pub const MAX_DEFAULT_K: usize = 8;

/// `ceil(sqrt(n / 2))`, clamped to `1..=MAX_DEFAULT_K`.
pub fn default_k(n: usize) -> usize {
    ((n as f64 / 2.0).sqrt().ceil() as usize).clamp(1, MAX_DEFAULT_K)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOrder {
    /// `permutation[row]` is the original sample position shown at `row`.
    pub permutation: Vec<usize>,
    /// Cluster label per original position, numbered by first appearance.
    pub labels: Vec<usize>,
    pub k: usize,
    pub iterations: usize,
}

fn sq_dist(x: &SparseVector, x_sq: f64, c: &[f64], c_sq: f64) -> f64 {
    (x_sq - 2.0 * x.dot_dense(c) + c_sq).max(0.0)
}

fn densify(v: &SparseVector, dim: usize) -> Vec<f64> {
    let mut d = vec![0.0; dim];
    for &(i, x) in &v.entries {
        d[i as usize] = x;
    }
    d
}

fn nearest(x: &SparseVector, x_sq: f64, centroids: &[Vec<f64>], c_sq: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, (cent, &csq)) in centroids.iter().zip(c_sq).enumerate() {
        let d = sq_dist(x, x_sq, cent, csq);
        // strict comparison keeps the lowest index on ties
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn kmeanspp(set: &CodeVectorSet, k: usize, x_sq: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = set.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = densify(&set.vectors[*chosen.last().unwrap()], set.dim);
        let last_sq: f64 = last.iter().map(|v| v * v).sum();
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(&set.vectors[i], x_sq[i], &last, last_sq));
        }
        let total: f64 = d2.iter().sum();
        let next = if total <= 1e-18 {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        } else {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc >= target {
                    pick = i;
                    break;
                }
            }
            pick
        };
        chosen.push(next);
    }
    chosen.iter().map(|&i| densify(&set.vectors[i], set.dim)).collect()
}

/// Clusters the vectors and returns a row order grouping each cluster
/// contiguously, clusters in order of first appearance, members by original
/// position. Deterministic for a given seed.
pub fn cluster_order(set: &CodeVectorSet, k: usize, seed: u64) -> ClusterOrder {
    let n = set.len();
    if n == 0 {
        return ClusterOrder { permutation: vec![], labels: vec![], k: 0, iterations: 0 };
    }
    let mut k = k.max(1);
    if k > n {
        log::warn!("k_clusters {k} exceeds sample count {n}; clamping");
        k = n;
    }

    let x_sq: Vec<f64> = set.vectors.iter().map(|v| v.norm().powi(2)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeanspp(set, k, &x_sq, &mut rng);
    let mut assign = vec![usize::MAX; n];
    let mut iterations = 0;

    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let c_sq: Vec<f64> = centroids.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let next: Vec<usize> = (0..n)
            .map(|i| nearest(&set.vectors[i], x_sq[i], &centroids, &c_sq))
            .collect();
        let changed = next != assign;
        assign = next;

        let mut sums = vec![vec![0.0; set.dim]; k];
        let mut sizes = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            sizes[c] += 1;
            for &(t, v) in &set.vectors[i].entries {
                sums[c][t as usize] += v;
            }
        }
        let mut movement: f64 = 0.0;
        for c in 0..k {
            // an empty cluster keeps its previous centroid
            if sizes[c] == 0 {
                continue;
            }
            let inv = 1.0 / sizes[c] as f64;
            let mut shift = 0.0;
            for (old, s) in centroids[c].iter_mut().zip(&sums[c]) {
                let new = s * inv;
                shift += (new - *old) * (new - *old);
                *old = new;
            }
            movement = movement.max(shift.sqrt());
        }
        if !changed || movement < MOVEMENT_EPS {
            break;
        }
    }

    let mut relabel = vec![usize::MAX; k];
    let mut next_label = 0;
    let labels: Vec<usize> = assign
        .iter()
        .map(|&c| {
            if relabel[c] == usize::MAX {
                relabel[c] = next_label;
                next_label += 1;
            }
            relabel[c]
        })
        .collect();
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.sort_by_key(|&i| (labels[i], i));

    ClusterOrder { permutation, labels, k, iterations }
}
