//! Geodesic clustering by tangent spaces.
//!
//! Each point is described through its nearest neighbors: their log maps
//! give tangent vectors, a weighted sparse code ties the point to a few of
//! them, and local PCA gives a tangent subspace whose angles to the neighbor
//! vectors measure how well the neighborhood lies on one geodesic sheet.
//! Both quantities feed an affinity matrix that is partitioned by Louvain or
//! by normalized spectral clustering.

pub mod louvain;
pub mod sparse;
pub mod spectral;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{distance, log_map, vector_subspace_angle, GrassmannPoint};

/// Cluster id per input point, numbered from 0 by first appearance.
pub type Labeling = Vec<usize>;

/// Below this trace a neighborhood has no spread to analyse.
pub const DEGENERATE_TRACE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinitySupport {
    /// Weights only on the symmetrized KNN graph.
    #[default]
    KnnMasked,
    /// The weight formula on every pair, with α = θ = 0 off the KNN graph.
    LiteralPaper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Backend {
    Louvain {
        #[serde(default = "unit")]
        resolution: f64,
        #[serde(default)]
        seed: u64,
    },
    Spectral {
        k: usize,
    },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Louvain {
            resolution: 1.0,
            seed: 0,
        }
    }
}

fn unit() -> f64 {
    1.0
}

fn default_energy() -> f64 {
    0.9
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GctParams {
    pub k_nn: usize,
    pub sigma_alpha: f64,
    pub sigma_theta: f64,
    #[serde(default = "default_energy")]
    pub pca_energy: f64,
    #[serde(default)]
    pub affinity_support: AffinitySupport,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "default_tol")]
    pub sparse_solver_tol: f64,
    #[serde(default = "default_max_iter")]
    pub sparse_solver_max_iter: usize,
}

impl GctParams {
    pub fn new(k_nn: usize, sigma_alpha: f64, sigma_theta: f64) -> Self {
        Self {
            k_nn,
            sigma_alpha,
            sigma_theta,
            pca_energy: default_energy(),
            affinity_support: AffinitySupport::default(),
            backend: Backend::default(),
            sparse_solver_tol: default_tol(),
            sparse_solver_max_iter: default_max_iter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_nn < 2 {
            return Err(Error::validation("k_nn must be at least 2"));
        }
        for (name, v) in [("sigma_alpha", self.sigma_alpha), ("sigma_theta", self.sigma_theta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if !(self.pca_energy > 0.0 && self.pca_energy <= 1.0) {
            return Err(Error::validation("pca_energy must lie in (0, 1]"));
        }
        if !(self.sparse_solver_tol > 0.0) {
            return Err(Error::validation("sparse_solver_tol must be positive"));
        }
        if self.sparse_solver_max_iter == 0 {
            return Err(Error::validation("sparse_solver_max_iter must be positive"));
        }
        match self.backend {
            Backend::Louvain { resolution, .. } if !(resolution > 0.0) => {
                Err(Error::validation("Louvain resolution must be positive"))
            }
            Backend::Spectral { k: 0 } => Err(Error::validation("spectral k must be positive")),
            _ => Ok(()),
        }
    }

    /// Validation that also depends on the number of points.
    pub fn validate_for(&self, n_points: usize) -> Result<()> {
        self.validate()?;
        if self.k_nn >= n_points {
            return Err(Error::validation(format!(
                "k_nn = {} needs more than {} points",
                self.k_nn, n_points
            )));
        }
        if let Backend::Spectral { k } = self.backend {
            if k > n_points {
                return Err(Error::validation(format!(
                    "spectral k = {k} exceeds the {n_points} points"
                )));
            }
        }
        Ok(())
    }
}

/// Symmetric non-negative weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    pub weights: DMatrix<f64>,
}

/// Order all other points by distance to `i`, ties to the lower index.
fn ranked_others(dist: &DMatrix<f64>, i: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..dist.nrows()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
    others
}

fn distance_matrix(points: &[GrassmannPoint]) -> Result<DMatrix<f64>> {
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i < j { distance(&points[i], &points[j]) } else { Ok(0.0) })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            d[(i, j)] = rows[i][j];
            d[(j, i)] = rows[i][j];
        }
    }
    Ok(d)
}

/// The `k_nn` points nearest to `points[i]` by geodesic distance.
pub fn knn_neighbors(points: &[GrassmannPoint], i: usize, k_nn: usize) -> Result<Vec<usize>> {
    if i >= points.len() || k_nn >= points.len() {
        return Err(Error::input(format!(
            "need index < {0} and k_nn < {0} (got {i}, {k_nn})",
            points.len()
        )));
    }
    let mut keyed = Vec::with_capacity(points.len() - 1);
    for j in 0..points.len() {
        if j != i {
            keyed.push((distance(&points[i], &points[j])?, j));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(keyed.into_iter().take(k_nn).map(|(_, j)| j).collect())
}

/// Sample covariance (1/(n−1))·Σ(x − x̄)(x − x̄)ᵀ.
pub fn local_covariance(vectors: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::input("covariance needs at least two vectors"));
    }
    let centered = centered_rows(vectors)?;
    Ok(centered.transpose() * &centered / (n as f64 - 1.0))
}

fn centered_rows(vectors: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let p = vectors[0].len();
    if vectors.iter().any(|v| v.len() != p) {
        return Err(Error::input("vectors differ in length"));
    }
    let n = vectors.len();
    let mut x = DMatrix::from_fn(n, p, |r, c| vectors[r][c]);
    let mean = x.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &mean;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalSubspace {
    pub basis: DMatrix<f64>,
    /// The input had (numerically) zero trace; `basis` is e₁.
    pub degenerate: bool,
}

fn energy_cutoff(eigenvalues: &[f64], trace: f64, energy: f64) -> usize {
    let target = energy * trace * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (d, v) in eigenvalues.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= target {
            return d + 1;
        }
    }
    eigenvalues.len()
}

fn degenerate_basis(p: usize) -> PrincipalSubspace {
    let mut basis = DMatrix::zeros(p, 1);
    basis[(0, 0)] = 1.0;
    PrincipalSubspace {
        basis,
        degenerate: true,
    }
}

/// Leading eigenvectors of `c` carrying at least `energy` of its trace.
pub fn principal_subspace(c: &DMatrix<f64>, energy: f64) -> PrincipalSubspace {
    let p = c.nrows();
    let trace = c.trace();
    if trace < DEGENERATE_TRACE {
        return degenerate_basis(p);
    }
    let eig = c.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let d = energy_cutoff(&sorted, trace, energy);
    let basis = DMatrix::from_fn(p, d, |r, col| eig.eigenvectors[(r, order[col])]);
    PrincipalSubspace {
        basis,
        degenerate: false,
    }
}

/// Same subspace as `principal_subspace(local_covariance(vectors))`, computed
/// through the n×n Gram matrix when there are fewer vectors than dimensions.
pub fn sample_principal_subspace(vectors: &[DVector<f64>], energy: f64) -> Result<PrincipalSubspace> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::input("covariance needs at least two vectors"));
    }
    let p = vectors[0].len();
    if n >= p {
        return Ok(principal_subspace(&local_covariance(vectors)?, energy));
    }
    let x = centered_rows(vectors)?;
    let scale = 1.0 / (n as f64 - 1.0);
    let gram = &x * x.transpose() * scale;
    let trace = gram.trace();
    if trace < DEGENERATE_TRACE {
        return Ok(degenerate_basis(p));
    }
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let d = energy_cutoff(&sorted, trace, energy);
    let mut cols = Vec::with_capacity(d);
    for &k in order.iter().take(d) {
        let mu = eig.eigenvalues[k];
        if mu <= DEGENERATE_TRACE * trace {
            break;
        }
        // C u = μ u with u = Xᵀv / √(μ(n−1))
        let u = x.transpose() * eig.eigenvectors.column(k) / (mu / scale).sqrt();
        cols.push(u);
    }
    Ok(PrincipalSubspace {
        basis: DMatrix::from_columns(&cols),
        degenerate: false,
    })
}

/// Everything computed for one point before the affinity is assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub neighbors: Vec<usize>,
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
    /// Neighbors skipped because they sit on the cut locus of this point.
    pub dropped: Vec<usize>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GctDiagnostics {
    /// (point, neighbor) pairs removed for lying on the cut locus.
    pub cut_locus_drops: Vec<(usize, usize)>,
    /// Points whose neighborhood had zero spread.
    pub degenerate_neighborhoods: Vec<usize>,
    /// The affinity matrix had no weight at all.
    pub empty_graph: bool,
    /// Final modularity when the Louvain backend ran.
    pub modularity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GctResult {
    pub labels: Labeling,
    pub affinity: AffinityMatrix,
    pub neighborhoods: Vec<Neighborhood>,
    pub diagnostics: GctDiagnostics,
}

fn neighborhood(
    points: &[GrassmannPoint],
    dist: &DMatrix<f64>,
    i: usize,
    params: &GctParams,
) -> Result<Neighborhood> {
    let mut neighbors = Vec::with_capacity(params.k_nn);
    let mut vectors = Vec::with_capacity(params.k_nn);
    let mut dropped = Vec::new();
    for j in ranked_others(dist, i) {
        if neighbors.len() == params.k_nn {
            break;
        }
        match log_map(&points[i], &points[j]) {
            Ok(v) => {
                neighbors.push(j);
                vectors.push(v.flatten());
            }
            Err(Error::CutLocus { .. }) => dropped.push(j),
            Err(e) => return Err(e),
        }
    }
    if neighbors.is_empty() {
        return Ok(Neighborhood {
            neighbors,
            alpha: Vec::new(),
            theta: Vec::new(),
            dropped,
            degenerate: true,
        });
    }

    let code = sparse::sparse_code(
        &vectors,
        params.sigma_alpha,
        params.sparse_solver_tol,
        params.sparse_solver_max_iter,
    )?;

    // the point itself contributes the zero tangent vector
    let mut with_self = vectors.clone();
    with_self.push(DVector::zeros(vectors[0].len()));
    let sub = sample_principal_subspace(&with_self, params.pca_energy)?;
    let theta = if sub.degenerate {
        vec![std::f64::consts::FRAC_PI_2; vectors.len()]
    } else {
        vectors
            .iter()
            .map(|v| vector_subspace_angle(v, &sub.basis))
            .collect::<Result<_>>()?
    };
    Ok(Neighborhood {
        neighbors,
        alpha: code.alpha,
        theta,
        dropped,
        degenerate: sub.degenerate,
    })
}

/// Assemble W from per-point neighborhoods.
pub fn assemble_affinity(
    n: usize,
    hoods: &[Neighborhood],
    sigma_theta: f64,
    support: AffinitySupport,
) -> AffinityMatrix {
    let mut a = DMatrix::zeros(n, n);
    let mut t = DMatrix::zeros(n, n);
    let mut linked = vec![vec![false; n]; n];
    for (i, h) in hoods.iter().enumerate() {
        for (idx, &j) in h.neighbors.iter().enumerate() {
            a[(i, j)] = h.alpha[idx].abs();
            t[(i, j)] = h.theta[idx];
            linked[i][j] = true;
            linked[j][i] = true;
        }
    }
    let mut weights = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if support == AffinitySupport::KnnMasked && !linked[i][j] {
                continue;
            }
            let w = (a[(i, j)] + a[(j, i)]).exp() * (-(t[(i, j)] + t[(j, i)]) / sigma_theta).exp();
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    AffinityMatrix { weights }
}

/// Neighborhood analysis and affinity for every point.
pub fn build_affinity(
    points: &[GrassmannPoint],
    params: &GctParams,
) -> Result<(AffinityMatrix, Vec<Neighborhood>)> {
    params.validate_for(points.len())?;
    let dist = distance_matrix(points)?;
    let hoods: Vec<Neighborhood> = (0..points.len())
        .into_par_iter()
        .map(|i| neighborhood(points, &dist, i, params))
        .collect::<Result<_>>()?;
    let w = assemble_affinity(points.len(), &hoods, params.sigma_theta, params.affinity_support);
    Ok((w, hoods))
}

/// Renumber labels by order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Labeling {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Full clustering with intermediate results.
pub fn gct(points: &[GrassmannPoint], params: &GctParams) -> Result<GctResult> {
    let (affinity, neighborhoods) = build_affinity(points, params)?;
    let mut diagnostics = GctDiagnostics::default();
    for (i, h) in neighborhoods.iter().enumerate() {
        diagnostics
            .cut_locus_drops
            .extend(h.dropped.iter().map(|&j| (i, j)));
        if h.degenerate {
            diagnostics.degenerate_neighborhoods.push(i);
        }
    }
    if !diagnostics.cut_locus_drops.is_empty() {
        log::warn!(
            "{} cut-locus neighbor pairs dropped",
            diagnostics.cut_locus_drops.len()
        );
    }
    if !diagnostics.degenerate_neighborhoods.is_empty() {
        log::debug!(
            "{} degenerate neighborhoods",
            diagnostics.degenerate_neighborhoods.len()
        );
    }
    diagnostics.empty_graph = affinity.weights.iter().all(|&w| w == 0.0);

    let labels = match params.backend {
        Backend::Louvain { resolution, seed } => {
            let r = louvain::louvain(&affinity.weights, resolution, seed);
            diagnostics.modularity = Some(r.modularity);
            r.labels
        }
        Backend::Spectral { k } => spectral::spectral_cluster(&affinity.weights, k, 0)?,
    };
    Ok(GctResult {
        labels: canonical_labels(&labels),
        affinity,
        neighborhoods,
        diagnostics,
    })
}

/// Cluster Grassmann points; labels are numbered by first appearance.
pub fn gct_cluster(points: &[GrassmannPoint], params: &GctParams) -> Result<Labeling> {
    Ok(gct(points, params)?.labels)
}
