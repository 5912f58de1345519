//! Thin SVD with a verified fast path.
//!
//! nalgebra's bidiagonal SVD can return factors that do not reconstruct the
//! input when it has exactly repeated zero singular values (seen on 4×3
//! rank-1 matrices in 0.33 and 0.34). Its output is therefore checked for
//! reconstruction and orthonormality, and on failure the decomposition is
//! redone by Householder QR followed by one-sided Jacobi, which is slower but
//! has high relative accuracy.

use nalgebra::{DMatrix, DVector};

const MAX_SWEEPS: usize = 80;
/// Relative tolerance (per √k) for accepting the fast decomposition.
const VERIFY_TOL: f64 = 1e-12;

/// A = U·diag(σ)·Vᵀ with σ descending, U r×k, Vᵀ k×c, k = min(r, c).
///
/// Columns of U belonging to σ = 0 are zero.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (r, c) = a.shape();
        if r < c {
            let t = Self::new(&a.transpose());
            return Svd {
                u: t.v_t.transpose(),
                singular_values: t.singular_values,
                v_t: t.u.transpose(),
            };
        }
        if c == 0 {
            return Svd {
                u: DMatrix::zeros(r, 0),
                singular_values: DVector::zeros(0),
                v_t: DMatrix::zeros(0, 0),
            };
        }
        if let Some(fast) = Self::bidiagonal(a) {
            return fast;
        }
        Self::jacobi(a)
    }

    /// nalgebra's SVD, sorted, or None when its factors fail the checks.
    fn bidiagonal(a: &DMatrix<f64>) -> Option<Self> {
        let k = a.ncols();
        let raw = a.clone().svd(true, true);
        let (u, v_t) = (raw.u?, raw.v_t?);
        let sv = raw.singular_values;
        if sv.iter().any(|s| !s.is_finite()) {
            return None;
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]).then(x.cmp(&y)));
        let mut out = Svd {
            u: DMatrix::zeros(a.nrows(), k),
            singular_values: DVector::zeros(k),
            v_t: DMatrix::zeros(k, k),
        };
        for (dst, &src) in order.iter().enumerate() {
            out.singular_values[dst] = sv[src];
            if sv[src] > 0.0 {
                out.u.set_column(dst, &u.column(src));
            }
            out.v_t.set_row(dst, &v_t.row(src));
        }

        let scale = a.norm().max(f64::MIN_POSITIVE);
        let rec = &out.u * DMatrix::from_diagonal(&out.singular_values) * &out.v_t;
        let eye = DMatrix::<f64>::identity(k, k);
        let vv = (&out.v_t * out.v_t.transpose() - &eye).norm();
        let mut uu = out.u.transpose() * &out.u;
        for (i, &s) in out.singular_values.iter().enumerate() {
            if s == 0.0 {
                uu[(i, i)] = 1.0;
            }
        }
        let uu = (uu - eye).norm();
        let tol = VERIFY_TOL * (k as f64).sqrt();
        ((rec - a).norm() <= tol * scale && vv <= tol && uu <= tol).then_some(out)
    }

    /// QR then one-sided Jacobi on the square factor.
    fn jacobi(a: &DMatrix<f64>) -> Self {
        // A = Q R, R = U_R Σ Vᵀ  =>  A = (Q U_R) Σ Vᵀ
        let qr = a.clone().qr();
        let (q, rmat) = (qr.q(), qr.r());
        let (u_r, sigma, v) = jacobi_square(rmat);
        Svd {
            u: q * u_r,
            singular_values: sigma,
            v_t: v.transpose(),
        }
    }

    /// Least-squares solution treating singular values ≤ `eps` as zero.
    pub fn solve(&self, b: &DVector<f64>, eps: f64) -> DVector<f64> {
        let mut coeffs = self.u.transpose() * b;
        for (c, &s) in coeffs.iter_mut().zip(self.singular_values.iter()) {
            *c = if s > eps { *c / s } else { 0.0 };
        }
        self.v_t.transpose() * coeffs
    }
}

/// Singular values only, descending.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    Svd::new(a).singular_values
}

/// One-sided Jacobi on a square matrix: rotate column pairs until all are
/// mutually orthogonal, accumulating the rotations in V.
fn jacobi_square(mut w: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n = w.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut w, i, j, cs, sn);
                rotate(&mut v, i, j, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|k| w.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut u = DMatrix::zeros(w.nrows(), n);
    let mut vs = DMatrix::zeros(n, n);
    let mut sigma = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = norms[src];
        if norms[src] > 0.0 {
            u.set_column(dst, &(w.column(src) / norms[src]));
        }
        vs.set_column(dst, &v.column(src));
    }
    (u, sigma, vs)
}

fn rotate(m: &mut DMatrix<f64>, i: usize, j: usize, cs: f64, sn: f64) {
    for r in 0..m.nrows() {
        let (a, b) = (m[(r, i)], m[(r, j)]);
        m[(r, i)] = cs * a - sn * b;
        m[(r, j)] = sn * a + cs * b;
    }
}
