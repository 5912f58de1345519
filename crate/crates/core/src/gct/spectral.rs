//! Normalized spectral clustering (symmetric Laplacian, row-normalized embedding, k-means).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 300;

/// Spectral embedding: rows of the k smallest eigenvectors of
/// I − D^{-1/2} W D^{-1/2}, scaled to unit length.
pub fn embedding(w: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    if k == 0 || k > n {
        return Err(Error::validation(format!("spectral k = {k} must lie in 1..={n}")));
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = w.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]
    });
    let eig = lap.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut u = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])]);
    for mut row in u.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(u)
}

fn sq_dist(x: &DMatrix<f64>, r: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    (0..x.ncols()).map(|d| (x[(r, d)] - c[(j, d)]).powi(2)).sum()
}

fn kmeans_once(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = x.nrows();
    // k-means++ seeding
    let mut centers = DMatrix::zeros(k, x.ncols());
    let first = rng.gen_range(0..n);
    centers.row_mut(0).copy_from(&x.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|r| sq_dist(x, r, &centers, 0)).collect();
    for j in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (r, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = r;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(j).copy_from(&x.row(pick));
        for (r, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(x, r, &centers, j));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (r, label) in labels.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for j in 0..k {
                let d = sq_dist(x, r, &centers, j);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for j in 0..k {
            let members: Vec<usize> = (0..n).filter(|&r| labels[r] == j).collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..x.ncols() {
                centers[(j, d)] = members.iter().map(|&r| x[(r, d)]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let inertia = (0..n).map(|r| sq_dist(x, r, &centers, labels[r])).sum();
    (labels, inertia)
}

/// k-means with several k-means++ restarts; lowest inertia wins, earliest on ties.
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (labels, inertia) = kmeans_once(x, k, &mut rng);
        if best.as_ref().map_or(true, |(_, b)| inertia < *b - 1e-12) {
            best = Some((labels, inertia));
        }
    }
    best.map(|(l, _)| l).unwrap_or_default()
}

/// Partition the graph into `k` groups by normalized cuts.
pub fn spectral_cluster(w: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let u = embedding(w, k)?;
    Ok(kmeans(&u, k, seed))
}
