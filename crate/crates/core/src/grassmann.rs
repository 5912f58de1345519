//! Riemannian geometry of the Grassmannian Gr(ρ, D).
//!
//! Points are stored as column-orthonormal D×ρ bases. Every quantity that
//! depends only on the subspace (principal angles, geodesic distance,
//! vector-to-subspace angles) is invariant under right-multiplication of a
//! basis by an orthogonal ρ×ρ matrix. Tangent vectors are horizontal
//! representatives tied to the exact basis of their base point.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, Svd};

/// Tolerance on ‖XᵀX − I‖_F for a basis to count as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Smallest admissible singular value of XᵀY in the logarithm map.
pub const CUT_LOCUS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    NetworkWide,
    PerNode,
}

/// Where a feature came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub scope: Scope,
    /// Node label, or `"network"` for network-wide features.
    pub node: String,
    /// Anchor time as an index into the full panel.
    pub anchor: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<usize>,
}

impl Provenance {
    pub fn network(anchor: usize) -> Self {
        Self {
            scope: Scope::NetworkWide,
            node: "network".to_string(),
            anchor,
            state: None,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@t={}", self.node, self.anchor)?;
        if let Some(s) = self.state {
            write!(f, " (state {s})")?;
        }
        Ok(())
    }
}

/// A ρ-dimensional linear subspace of R^D, held as an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    basis: DMatrix<f64>,
    pub provenance: Option<Provenance>,
}

impl GrassmannPoint {
    /// Wrap an orthonormal basis; fails if `basisᵀ·basis` is not the identity.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let (d, rho) = basis.shape();
        if rho == 0 || rho > d {
            return Err(Error::input(format!(
                "basis of shape {d}x{rho} does not describe a proper subspace"
            )));
        }
        let gram = basis.transpose() * &basis;
        let defect = (gram - DMatrix::<f64>::identity(rho, rho)).norm();
        if !(defect <= ORTHONORMAL_TOL) {
            return Err(Error::input(format!(
                "basis is not orthonormal (‖XᵀX − I‖_F = {defect:e})"
            )));
        }
        Ok(Self {
            basis,
            provenance: None,
        })
    }

    /// Orthonormalize the columns of an arbitrary full-column-rank matrix.
    pub fn from_span(span: DMatrix<f64>) -> Result<Self> {
        let (d, rho) = span.shape();
        if rho == 0 || rho > d {
            return Err(Error::input(format!(
                "matrix of shape {d}x{rho} cannot span a proper subspace"
            )));
        }
        let qr = span.qr();
        let r = qr.r();
        let scale = r.diagonal().amax().max(f64::MIN_POSITIVE);
        if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * scale) {
            return Err(Error::input("spanning matrix is rank deficient"));
        }
        Self::new(qr.q())
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Same subspace, basis multiplied on the right by `r` (must be orthogonal).
    pub fn rebased(&self, r: &DMatrix<f64>) -> Result<Self> {
        let mut p = Self::new(&self.basis * r)?;
        p.provenance = self.provenance.clone();
        Ok(p)
    }

    fn context(&self) -> String {
        self.provenance
            .as_ref()
            .map(|p| p.to_string())
            .unwrap_or_else(|| "<unlabelled>".to_string())
    }
}

/// Horizontal tangent representative at a specific basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub delta: DMatrix<f64>,
}

impl TangentVector {
    pub fn zero(at: &GrassmannPoint) -> Self {
        Self {
            delta: DMatrix::zeros(at.ambient_dim(), at.rank()),
        }
    }

    /// Column-major flattening of the D×ρ representative.
    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_column_slice(self.delta.as_slice())
    }

    pub fn norm(&self) -> f64 {
        self.delta.norm()
    }

    /// ‖atᵀ·delta‖_F, zero for horizontal vectors.
    pub fn horizontality_defect(&self, at: &GrassmannPoint) -> f64 {
        (at.basis().transpose() * &self.delta).norm()
    }
}

fn check_shapes(x: &GrassmannPoint, y: &GrassmannPoint) -> Result<()> {
    if x.basis.shape() != y.basis.shape() {
        return Err(Error::input(format!(
            "Grassmann points differ in shape ({:?} vs {:?})",
            x.basis.shape(),
            y.basis.shape()
        )));
    }
    Ok(())
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = singular_values(m).iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Principal angles between two subspaces, ascending, each in [0, π/2].
///
/// Cosines come from the singular values of XᵀY and sines from those of
/// (I − XXᵀ)Y. Small angles are taken from the sines, large ones from the
/// cosines, so both ends of the range keep full relative accuracy.
pub fn principal_angles(x: &GrassmannPoint, y: &GrassmannPoint) -> Result<Vec<f64>> {
    check_shapes(x, y)?;
    let xty = x.basis.transpose() * &y.basis;
    let residual = &y.basis - &x.basis * &xty;
    // cosines descending -> angles ascending
    let cos = sorted_singular_values(&xty);
    // sines ascending -> angles ascending
    let mut sin = sorted_singular_values(&residual);
    sin.reverse();
    let rho = x.rank();
    let angles = (0..rho)
        .map(|k| {
            let c = cos[k].clamp(0.0, 1.0);
            let s = sin.get(k).copied().unwrap_or(0.0).clamp(0.0, 1.0);
            if c * c >= 0.5 {
                s.asin()
            } else {
                c.acos()
            }
        })
        .collect::<Vec<_>>();
    // the two branches can disagree in the last ulp around π/4
    let mut angles = angles;
    angles.sort_by(|a, b| a.total_cmp(b));
    Ok(angles)
}

/// Geodesic (arc-length) distance √(Σθ²).
pub fn distance(x: &GrassmannPoint, y: &GrassmannPoint) -> Result<f64> {
    Ok(principal_angles(x, y)?
        .iter()
        .map(|t| t * t)
        .sum::<f64>()
        .sqrt())
}

/// Riemannian logarithm log_X(Y) as a horizontal representative at X's basis.
pub fn log_map(x: &GrassmannPoint, y: &GrassmannPoint) -> Result<TangentVector> {
    check_shapes(x, y)?;
    let xty = x.basis.transpose() * &y.basis;
    let sigma_min = singular_values(&xty).min();
    if sigma_min < CUT_LOCUS_TOL {
        return Err(Error::CutLocus {
            context: format!("{} -> {}", x.context(), y.context()),
            sigma_min,
        });
    }
    let inv = xty.try_inverse().ok_or_else(|| Error::CutLocus {
        context: format!("{} -> {}", x.context(), y.context()),
        sigma_min,
    })?;
    let residual = &y.basis - &x.basis * (x.basis.transpose() * &y.basis);
    let g = residual * inv;
    let Svd { u, singular_values: sv, v_t } = Svd::new(&g);
    let atan = DMatrix::from_diagonal(&sv.map(f64::atan));
    let mut delta = u * atan * v_t;
    // remove the O(ε) vertical component left by rounding
    let vertical = &x.basis * (x.basis.transpose() * &delta);
    delta -= vertical;
    Ok(TangentVector { delta })
}

/// Riemannian exponential: follow the geodesic from X with initial velocity `v`.
pub fn exp_map(x: &GrassmannPoint, v: &TangentVector) -> Result<GrassmannPoint> {
    if v.delta.shape() != x.basis.shape() {
        return Err(Error::input(format!(
            "tangent vector shape {:?} does not match base point {:?}",
            v.delta.shape(),
            x.basis.shape()
        )));
    }
    let Svd { u, singular_values: sv, v_t } = Svd::new(&v.delta);
    let vm = v_t.transpose();
    let cos = DMatrix::from_diagonal(&sv.map(f64::cos));
    let sin = DMatrix::from_diagonal(&sv.map(f64::sin));
    let moved = &x.basis * &vm * cos * &v_t + u * sin * &v_t;
    let qr = moved.qr();
    let mut p = GrassmannPoint::new(qr.q())?;
    p.provenance = None;
    Ok(p)
}

/// Angle between a vector and a linear subspace given by an orthonormal basis.
///
/// Returns 0 for vectors of norm below 1e-14.
pub fn vector_subspace_angle(v: &DVector<f64>, subspace: &DMatrix<f64>) -> Result<f64> {
    if subspace.nrows() != v.len() {
        return Err(Error::input(format!(
            "vector of length {} against subspace of ambient dimension {}",
            v.len(),
            subspace.nrows()
        )));
    }
    if v.norm() < 1e-14 {
        return Ok(0.0);
    }
    let coeffs = subspace.transpose() * v;
    let inside = coeffs.norm();
    let outside = (v - subspace * &coeffs).norm();
    // atan2 of the two legs equals arccos(‖Sᵀv‖/‖v‖) but stays accurate near 0
    Ok(outside.atan2(inside).clamp(0.0, std::f64::consts::FRAC_PI_2))
}
