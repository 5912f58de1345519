//! Grassmannian feature extraction from windowed kernel cross-Gram matrices.
//!
//! For an anchor time `t`, the forward block Hankel matrix F_{t+1} and the
//! backward matrix B_t are never formed. Entry (r, s) of (1/τ_f)·F_{t+1} ⊛ B_tᵀ
//! with r = (i−1)N + n and s = (j−1)N + n′ is
//!
//! ```text
//!   (1/τ_f) Σ_{c=1..τ_f} κ( y_{t+i+c+n−2}, y_{t−j+c+n′−1} )
//! ```
//!
//! which depends on i and n only through i + n and on j and n′ only through
//! n′ − j. The kernel is therefore evaluated once per distinct index pair and
//! the τ_f-term sums are shared between entries.
//!
//! The top-ρ left singular vectors of that matrix span the estimated
//! observability subspace, one point of Gr(ρ, mN) per window.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{GrassmannPoint, Provenance, Scope};
use crate::kernels::KernelSpec;
use crate::linalg::Svd;

/// Relative threshold on σ_ρ / σ_1 below which a window is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Relative gap under which σ_ρ and σ_{ρ+1} count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Multivariate time series, one row per node and one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    samples: DMatrix<f64>,
    node_ids: Vec<String>,
    pub sample_period: Option<f64>,
    /// Index of column 0 within the panel this one was cut from.
    origin: usize,
}

impl TimeSeriesPanel {
    pub fn new(samples: DMatrix<f64>, node_ids: Vec<String>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::input("panel must have at least one node and one sample"));
        }
        if node_ids.len() != samples.nrows() {
            return Err(Error::input(format!(
                "{} node ids for {} rows",
                node_ids.len(),
                samples.nrows()
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % samples.nrows(), pos / samples.nrows());
            return Err(Error::input(format!(
                "non-finite sample at node {} time {c}",
                node_ids[r]
            )));
        }
        Ok(Self {
            samples,
            node_ids,
            sample_period: None,
            origin: 0,
        })
    }

    /// Panel with node ids `0..n`.
    pub fn from_samples(samples: DMatrix<f64>) -> Result<Self> {
        let ids = (0..samples.nrows()).map(|i| i.to_string()).collect();
        Self::new(samples, ids)
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn node_count(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    /// Columns `[start, end)` as a new panel that remembers its offset.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::range(format!(
                "slice [{start}, {end}) outside panel of length {}",
                self.len()
            )));
        }
        Ok(Self {
            samples: self.samples.columns(start, end - start).into_owned(),
            node_ids: self.node_ids.clone(),
            sample_period: self.sample_period,
            origin: self.origin + start,
        })
    }

    fn node_index(&self, node: &str) -> Result<usize> {
        self.node_ids
            .iter()
            .position(|n| n == node)
            .ok_or_else(|| Error::input(format!("unknown node id `{node}`")))
    }
}

/// Window geometry of one cross-Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Number of consecutive vectors stacked into each φ block (N).
    #[serde(rename = "N")]
    pub stack_depth: usize,
    /// Block rows of the forward matrix (m).
    #[serde(rename = "m")]
    pub block_rows: usize,
    /// Subspace rank (ρ).
    #[serde(rename = "rho")]
    pub rank: usize,
    pub tau_f: usize,
    pub tau_b: usize,
    /// Per-node buffer length; only read in per-node scope.
    #[serde(default = "one")]
    pub buff: usize,
    #[serde(default = "one")]
    pub stride: usize,
    pub scope: Scope,
}

fn one() -> usize {
    1
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("N", self.stack_depth),
            ("m", self.block_rows),
            ("rho", self.rank),
            ("tau_f", self.tau_f),
            ("tau_b", self.tau_b),
            ("buff", self.buff),
            ("stride", self.stride),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        let rows = self.block_rows * self.stack_depth;
        let cols = self.tau_b * self.stack_depth;
        if self.rank > rows.min(cols) {
            return Err(Error::validation(format!(
                "rho = {} exceeds min(m·N, tau_b·N) = {}",
                self.rank,
                rows.min(cols)
            )));
        }
        Ok(())
    }

    /// Number of consecutive observation vectors one window consumes.
    pub fn span(&self) -> usize {
        self.tau_b + self.tau_f + self.block_rows + self.stack_depth - 2
    }

    /// Number of raw samples one window consumes.
    pub fn sample_span(&self) -> usize {
        match self.scope {
            Scope::NetworkWide => self.span(),
            Scope::PerNode => self.span() + self.buff - 1,
        }
    }

    /// Feature-space dimension D = mN.
    pub fn ambient_dim(&self) -> usize {
        self.block_rows * self.stack_depth
    }

    /// Earliest admissible anchor (in vector indices).
    pub fn first_anchor(&self) -> usize {
        self.tau_b - 1
    }

    /// Latest admissible anchor for a sequence of `len` vectors.
    pub fn last_anchor(&self, len: usize) -> Option<usize> {
        let tail = self.tau_f + self.block_rows + self.stack_depth - 2;
        let last = len.checked_sub(tail + 1)?;
        (last >= self.first_anchor()).then_some(last)
    }

    /// Anchors from the first admissible one, stepping by `stride`.
    pub fn default_anchors(&self, len: usize) -> Vec<usize> {
        match self.last_anchor(len) {
            Some(last) => (self.first_anchor()..=last).step_by(self.stride).collect(),
            None => Vec::new(),
        }
    }

    /// Samples `[first, last]` touched by the window anchored at `t`.
    pub fn coverage(&self, t: usize) -> (usize, usize) {
        let first = t + 1 - self.tau_b;
        let last = t + self.tau_f + self.block_rows + self.stack_depth - 2;
        match self.scope {
            Scope::NetworkWide => (first, last),
            Scope::PerNode => (first, last + self.buff - 1),
        }
    }
}

/// A sequence of q-dimensional observation vectors, one column per time.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSeries {
    columns: DMatrix<f64>,
}

impl VectorSeries {
    pub fn new(columns: DMatrix<f64>) -> Self {
        Self { columns }
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }

    pub fn vector(&self, t: usize) -> &[f64] {
        let q = self.columns.nrows();
        &self.columns.as_slice()[t * q..(t + 1) * q]
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }
}

/// Build the observation vectors y_t for one scope instance.
///
/// Network-wide: y_t is column t of the panel. Per-node: y_t holds samples
/// t..t+buff−1 of the chosen node.
pub fn assemble_vectors(
    panel: &TimeSeriesPanel,
    cfg: &WindowConfig,
    node: Option<&str>,
) -> Result<VectorSeries> {
    match (cfg.scope, node) {
        (Scope::NetworkWide, None) => Ok(VectorSeries::new(panel.samples.clone())),
        (Scope::NetworkWide, Some(_)) => Err(Error::input(
            "network-wide scope does not take a node id",
        )),
        (Scope::PerNode, None) => Err(Error::input("per-node scope requires a node id")),
        (Scope::PerNode, Some(id)) => {
            let row = panel.node_index(id)?;
            let t_len = panel.len();
            if cfg.buff == 0 || cfg.buff > t_len {
                return Err(Error::range(format!(
                    "buffer of {} samples does not fit a panel of length {t_len}",
                    cfg.buff
                )));
            }
            let count = t_len - cfg.buff + 1;
            let cols = DMatrix::from_fn(cfg.buff, count, |l, t| panel.samples[(row, t + l)]);
            Ok(VectorSeries::new(cols))
        }
    }
}

/// (1/τ_f)·F_{t+1} ⊛ B_tᵀ, of shape (m·N) × (τ_b·N).
pub fn cross_gram(
    vectors: &VectorSeries,
    t: usize,
    cfg: &WindowConfig,
    kernel: &KernelSpec,
) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    let n = cfg.stack_depth;
    let m = cfg.block_rows;
    let tau_f = cfg.tau_f;
    let tau_b = cfg.tau_b;
    if t + 1 < tau_b {
        return Err(Error::range(format!(
            "anchor {t} leaves fewer than tau_b - 1 = {} samples of history",
            tau_b - 1
        )));
    }
    let needed_last = t + tau_f + m + n - 2;
    if needed_last >= vectors.len() {
        return Err(Error::range(format!(
            "anchor {t} needs vectors up to index {needed_last}, only {} available",
            vectors.len()
        )));
    }

    // Row offsets a = i + n − 2 ∈ [0, m + N − 2]; column offsets b = n′ − j ∈ [1 − τ_b, N − 1].
    // Row sample at c: t + a + c, column sample at c: t + b + c − 1, c = 1..τ_f.
    let row_offsets = m + n - 1;
    let col_offsets = n + tau_b - 1;
    let col_base = t + 1 - tau_b; // sample index for b = 1 − τ_b, c = 1
    let row_base = t + 1; // sample index for a = 0, c = 1

    // Kernel cache over the row range × column range actually visited.
    let rows_len = row_offsets + tau_f - 1;
    let cols_len = col_offsets + tau_f - 1;
    let mut gram = DMatrix::<f64>::zeros(rows_len, cols_len);
    for cj in 0..cols_len {
        let yb = vectors.vector(col_base + cj);
        for ri in 0..rows_len {
            gram[(ri, cj)] = kernel.eval_unchecked(vectors.vector(row_base + ri), yb);
        }
    }

    let scale = 1.0 / tau_f as f64;
    let mut reduced = DMatrix::<f64>::zeros(row_offsets, col_offsets);
    for bo in 0..col_offsets {
        for ao in 0..row_offsets {
            let mut acc = 0.0;
            for c in 0..tau_f {
                acc += gram[(ao + c, bo + c)];
            }
            reduced[(ao, bo)] = acc * scale;
        }
    }

    let mut out = DMatrix::<f64>::zeros(m * n, tau_b * n);
    for j in 0..tau_b {
        for np in 0..n {
            // b = n′ − j with 1-based n′, j  → offset index (np − j) + (τ_b − 1)
            let bo = np + tau_b - 1 - j;
            for i in 0..m {
                for nn in 0..n {
                    out[(i * n + nn, j * n + np)] = reduced[(i + nn, bo)];
                }
            }
        }
    }
    Ok(out)
}

/// Rank-ρ subspace estimate from one cross-Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEstimate {
    pub point: GrassmannPoint,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Σ_{1:ρ}·V_{:,1:ρ}ᵀ, the ρ × (τ_b·N) right factor.
    pub pi_hat: DMatrix<f64>,
    /// σ_ρ and σ_{ρ+1} coincide, so the subspace is not uniquely defined.
    pub ambiguous_cutoff: bool,
}

/// Truncated SVD of a cross-Gram matrix with a fixed sign convention.
///
/// Each retained left singular vector is flipped so its largest-magnitude
/// entry is positive (lowest index on ties), making repeated runs
/// bit-identical.
pub fn extract_feature(m: &DMatrix<f64>, rho: usize) -> Result<FeatureEstimate> {
    let (rows, cols) = m.shape();
    if rho == 0 || rho > rows.min(cols) {
        return Err(Error::input(format!(
            "rank {rho} invalid for a {rows}x{cols} matrix"
        )));
    }
    let svd = Svd::new(m);
    let (u, v_t) = (&svd.u, &svd.v_t);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();

    let top = singular_values[0];
    let sigma_rho = singular_values[rho - 1];
    let tolerance = RANK_TOLERANCE * top;
    if !(top > 0.0) || sigma_rho <= tolerance {
        return Err(Error::DegenerateRank {
            context: String::new(),
            rank: rho,
            sigma: sigma_rho,
            tolerance,
        });
    }
    let ambiguous_cutoff = singular_values
        .get(rho)
        .is_some_and(|&next| (sigma_rho - next) <= TIE_TOLERANCE * top);
    if ambiguous_cutoff {
        log::debug!("σ_ρ = σ_ρ+1 = {sigma_rho:e}: rank-{rho} subspace is ambiguous");
    }

    let mut basis = DMatrix::<f64>::zeros(rows, rho);
    let mut pi_hat = DMatrix::<f64>::zeros(rho, cols);
    for (col, &k) in order.iter().take(rho).enumerate() {
        let uk = u.column(k);
        let mut pivot = 0;
        for idx in 1..rows {
            if uk[idx].abs() > uk[pivot].abs() {
                pivot = idx;
            }
        }
        let sign = if uk[pivot] < 0.0 { -1.0 } else { 1.0 };
        basis.set_column(col, &(uk * sign));
        let row = v_t.row(k) * (svd.singular_values[k] * sign);
        pi_hat.set_row(col, &row);
    }
    // Re-orthonormalize away SVD rounding so the point invariant holds tightly.
    let gram = basis.transpose() * &basis;
    if (gram - DMatrix::<f64>::identity(rho, rho)).norm() > 1e-13 {
        let q = basis.clone().qr().q();
        // keep column signs aligned with the convention above
        let mut fixed = q;
        for c in 0..rho {
            if fixed.column(c).dot(&basis.column(c)) < 0.0 {
                let neg = -fixed.column(c);
                fixed.set_column(c, &neg);
            }
        }
        basis = fixed;
    }
    Ok(FeatureEstimate {
        point: GrassmannPoint::new(basis)?,
        singular_values,
        pi_hat,
        ambiguous_cutoff,
    })
}

/// One extracted feature with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub point: GrassmannPoint,
    pub singular_values: Vec<f64>,
    pub ambiguous_cutoff: bool,
}

impl Feature {
    pub fn provenance(&self) -> &Provenance {
        self.point
            .provenance
            .as_ref()
            .expect("extracted features always carry provenance")
    }
}

/// Which anchors to use, in vector-index coordinates of each scope instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Horizon {
    /// Every admissible anchor stepping by the configured stride.
    All,
    /// Explicit anchors; each must satisfy the span constraint.
    Anchors(Vec<usize>),
}

/// Run the extraction over every scope instance and anchor.
///
/// Output order is node-major, then time. Anchors recorded in the provenance
/// are panel-global sample indices.
pub fn extract_all(
    panel: &TimeSeriesPanel,
    cfg: &WindowConfig,
    kernel: &KernelSpec,
    horizon: &Horizon,
) -> Result<Vec<Feature>> {
    cfg.validate()?;
    kernel.validate()?;
    let instances: Vec<Option<&str>> = match cfg.scope {
        Scope::NetworkWide => vec![None],
        Scope::PerNode => panel.node_ids.iter().map(|s| Some(s.as_str())).collect(),
    };
    let required = cfg.sample_span();
    if panel.len() < required {
        return Err(Error::range(format!(
            "window span needs {required} samples, panel has {}",
            panel.len()
        )));
    }

    let series: Vec<VectorSeries> = instances
        .iter()
        .map(|node| assemble_vectors(panel, cfg, *node))
        .collect::<Result<_>>()?;
    let vec_len = series[0].len();
    let anchors = match horizon {
        Horizon::All => cfg.default_anchors(vec_len),
        Horizon::Anchors(list) => {
            let last = cfg.last_anchor(vec_len);
            for &t in list {
                if t < cfg.first_anchor() || last.map_or(true, |l| t > l) {
                    return Err(Error::range(format!(
                        "anchor {t} outside admissible range [{}, {}]",
                        cfg.first_anchor(),
                        last.map_or("none".to_string(), |l| l.to_string())
                    )));
                }
            }
            list.clone()
        }
    };

    let jobs: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|inst| anchors.iter().map(move |&t| (inst, t)))
        .collect();

    let features = jobs
        .par_iter()
        .map(|&(inst, t)| {
            let provenance = Provenance {
                scope: cfg.scope,
                node: instances[inst].unwrap_or("network").to_string(),
                anchor: panel.origin + t,
                state: None,
            };
            let m = cross_gram(&series[inst], t, cfg, kernel)?;
            let est = extract_feature(&m, cfg.rank)
                .map_err(|e| e.with_context(&format!("window {provenance}")))?;
            Ok(Feature {
                point: est.point.with_provenance(provenance),
                singular_values: est.singular_values,
                ambiguous_cutoff: est.ambiguous_cutoff,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ambiguous = features.iter().filter(|f| f.ambiguous_cutoff).count();
    if ambiguous > 0 {
        log::warn!("{ambiguous} of {} features have a tied rank-{} cutoff", features.len(), cfg.rank);
    }
    Ok(features)
}
