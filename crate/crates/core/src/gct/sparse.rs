//! Affinely constrained, weighted ℓ1 sparse coding in a tangent space.
//!
//! Solves
//!
//! ```text
//!   min_α ‖Σ_j α_j x_j‖² + Σ_j exp(‖x_j‖/σ_α)·|α_j|   s.t. Σ_j α_j = 1
//! ```
//!
//! where the x_j are the neighbors' tangent vectors at a point whose own
//! tangent representative is zero. Accelerated proximal gradient handles the
//! smooth term; the prox of the weighted ℓ1 norm restricted to the affine
//! hyperplane is computed exactly by a scalar search on the multiplier of the
//! constraint. A final active-set solve polishes the iterate to machine
//! precision when the support has settled.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Svd;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// exp(‖x_j‖/σ_α) for each neighbor.
pub fn penalty_weights(vectors: &[DVector<f64>], sigma_alpha: f64) -> Vec<f64> {
    vectors
        .iter()
        .map(|x| (x.norm() / sigma_alpha).exp())
        .collect()
}

/// Objective value for given coefficients.
pub fn objective(vectors: &[DVector<f64>], sigma_alpha: f64, alpha: &[f64]) -> f64 {
    let gram = gram(vectors);
    let w = penalty_weights(vectors, sigma_alpha);
    eval(&gram, &w, &DVector::from_column_slice(alpha))
}

fn gram(vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let k = vectors.len();
    DMatrix::from_fn(k, k, |i, j| vectors[i].dot(&vectors[j]))
}

fn eval(gram: &DMatrix<f64>, w: &[f64], alpha: &DVector<f64>) -> f64 {
    let quad = alpha.dot(&(gram * alpha));
    let l1: f64 = alpha.iter().zip(w).map(|(a, wi)| wi * a.abs()).sum();
    quad.max(0.0) + l1
}

fn soft(v: f64, thresh: f64) -> f64 {
    if v > thresh {
        v - thresh
    } else if v < -thresh {
        v + thresh
    } else {
        0.0
    }
}

/// argmin_α ½‖α − z‖² + Σ_j thresh_j·|α_j|  s.t. Σ α_j = 1.
///
/// The minimizer is α_j = soft(z_j − ν, thresh_j) for the unique ν making the
/// coefficients sum to one. The sum is piecewise linear and non-increasing
/// in ν, so ν is found exactly between two consecutive breakpoints.
fn prox_affine_l1(z: &DVector<f64>, thresh: &[f64]) -> DVector<f64> {
    let total = |nu: f64| -> f64 {
        z.iter()
            .zip(thresh)
            .map(|(zi, ti)| soft(zi - nu, *ti))
            .sum()
    };
    let mut breaks: Vec<f64> = z
        .iter()
        .zip(thresh)
        .flat_map(|(zi, ti)| [zi - ti, zi + ti])
        .collect();
    breaks.sort_by(|a, b| a.total_cmp(b));
    let k = z.len() as f64;

    let lo = breaks[0];
    let hi = *breaks.last().unwrap();
    let nu = if total(lo) <= 1.0 {
        // left of every breakpoint all coordinates are on their positive branch
        let s: f64 = z.iter().zip(thresh).map(|(zi, ti)| zi - ti).sum();
        (s - 1.0) / k
    } else if total(hi) >= 1.0 {
        let s: f64 = z.iter().zip(thresh).map(|(zi, ti)| zi + ti).sum();
        (s - 1.0) / k
    } else {
        let mut nu = 0.5 * (lo + hi);
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (ha, hb) = (total(a), total(b));
            if ha >= 1.0 && hb <= 1.0 {
                nu = if ha == hb { a } else { a + (ha - 1.0) * (b - a) / (ha - hb) };
                break;
            }
        }
        nu
    };
    let mut out = DVector::from_fn(z.len(), |j, _| soft(z[j] - nu, thresh[j]));
    // absorb the rounding drift on the largest coordinate
    let drift = 1.0 - out.sum();
    let pivot = out.iamax();
    out[pivot] += drift;
    out
}

/// Largest eigenvalue of a small symmetric PSD matrix.
fn spectral_radius(gram: &DMatrix<f64>) -> f64 {
    gram.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(*v))
}

/// Solve the sparse-coding task for one neighborhood.
pub fn sparse_code(
    vectors: &[DVector<f64>],
    sigma_alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SparseCode> {
    let k = vectors.len();
    if k == 0 {
        return Err(Error::input("sparse coding needs at least one neighbor"));
    }
    if !(sigma_alpha > 0.0) {
        return Err(Error::validation("sigma_alpha must be positive"));
    }
    let w = penalty_weights(vectors, sigma_alpha);
    if k == 1 {
        return Ok(SparseCode {
            alpha: vec![1.0],
            objective: eval(&gram(vectors), &w, &DVector::from_element(1, 1.0)),
            iterations: 0,
        });
    }
    let g = gram(vectors);
    let lipschitz = 2.0 * spectral_radius(&g);
    let mut step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let smooth = |a: &DVector<f64>| a.dot(&(&g * a)).max(0.0);
    let grad = |a: &DVector<f64>| (&g * a) * 2.0;

    let mut alpha = DVector::from_element(k, 1.0 / k as f64);
    let mut momentum = alpha.clone();
    let mut t_acc = 1.0f64;
    let mut current = eval(&g, &w, &alpha);
    let mut converged = false;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut restarted = false;

    while iterations < max_iter {
        iterations += 1;
        let fy = smooth(&momentum);
        let gy = grad(&momentum);
        // backtracking on the smooth part
        let next = loop {
            let thresh: Vec<f64> = w.iter().map(|wi| wi * step).collect();
            let cand = prox_affine_l1(&(&momentum - &gy * step), &thresh);
            let diff = &cand - &momentum;
            let bound = fy + gy.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if smooth(&cand) <= bound + 1e-14 * bound.abs().max(1.0) || step < 1e-300 {
                break cand;
            }
            step *= 0.5;
        };
        let value = eval(&g, &w, &next);
        if value > current {
            if restarted {
                // no descent from a plain proximal step: stationary up to rounding
                converged = true;
                break;
            }
            // adaptive restart keeps the iterates monotone
            restarted = true;
            momentum = alpha.clone();
            t_acc = 1.0;
            continue;
        }
        restarted = false;
        gap = current - value;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt());
        momentum = &next + (&next - &alpha) * ((t_acc - 1.0) / t_next);
        let moved = (&next - &alpha).norm();
        alpha = next;
        t_acc = t_next;
        current = value;
        if gap <= tol * current.abs().max(1.0) && moved <= tol.sqrt() {
            converged = true;
            break;
        }
    }
    // flat directions (duplicate neighbors) can keep the iterate drifting
    // while the objective has long stopped changing
    if !converged && gap > tol * current.abs().max(1.0) {
        return Err(Error::SolverNonConvergence { iterations, gap });
    }

    if let Some(polished) = polish(&g, &w, &alpha) {
        let value = eval(&g, &w, &polished);
        if value <= current {
            alpha = polished;
            current = value;
        }
    }
    Ok(SparseCode {
        alpha: alpha.iter().copied().collect(),
        objective: current,
        iterations,
    })
}

/// Exact minimizer on the current support and sign pattern, if consistent.
fn polish(g: &DMatrix<f64>, w: &[f64], alpha: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = alpha.amax().max(1.0);
    let support: Vec<usize> = (0..alpha.len())
        .filter(|&j| alpha[j].abs() > 1e-10 * scale)
        .collect();
    let s = support.len();
    if s == 0 {
        return None;
    }
    let mut kkt = DMatrix::<f64>::zeros(s + 1, s + 1);
    let mut rhs = DVector::<f64>::zeros(s + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            kkt[(a, b)] = 2.0 * g[(i, j)];
        }
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
        rhs[a] = -w[i] * alpha[i].signum();
    }
    rhs[s] = 1.0;
    let sol = Svd::new(&kkt).solve(&rhs, 1e-13);
    let mut out = DVector::<f64>::zeros(alpha.len());
    for (a, &i) in support.iter().enumerate() {
        if sol[a].signum() != alpha[i].signum() {
            return None;
        }
        out[i] = sol[a];
    }
    if (out.sum() - 1.0).abs() > 1e-12 {
        return None;
    }
    Some(out)
}
