//! Dense helpers shared by the estimator and the diagnostics.

use nalgebra::{DMatrix, DVector};

/// Thin SVD of a wide matrix `X = U diag(s) V⊤` with `U` n×n, `s` descending
/// and `V` p×n with orthonormal columns spanning the row space.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Below this diagonal ratio the first Cholesky pass loses too much
/// orthogonality for a second pass to repair.
const CHOLQR_MIN_RATIO: f64 = 1e-6;

/// Thin SVD for `n ≤ p`.
///
/// The row space is orthonormalized with two passes of Cholesky-QR (two
/// Gram products, no Householder sweep over the long dimension), then the
/// n×n triangular factor is decomposed. Ill-conditioned or rank-deficient
/// inputs fall back to Householder QR of `X⊤`.
pub fn thin_svd_wide(x: &DMatrix<f64>) -> ThinSvd {
    let (n, p) = x.shape();
    assert!(n <= p, "thin_svd_wide expects a wide matrix, got {n}x{p}");
    let (m, qt) = cholesky_qr2(x).unwrap_or_else(|| householder_lq(x));
    let svd = m.svd(true, true);
    let (u, s, vt) = sorted(svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap());
    // X = M Q⊤-rows = U S (V_m⊤ Qt)
    let v = qt.transpose() * vt.transpose();
    ThinSvd { u, s, v }
}

/// `X = M Qt` with `M` n×n lower triangular and `Qt` having orthonormal rows.
fn cholesky_qr2(x: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let (l1, q1) = cholesky_qr_pass(x)?;
    let d = l1.diagonal();
    let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > CHOLQR_MIN_RATIO * hi) {
        return None;
    }
    let (l2, q2) = cholesky_qr_pass(&q1)?;
    Some((l1 * l2, q2))
}

fn cholesky_qr_pass(x: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    let gram = x * x.transpose();
    let l = gram.cholesky()?.l();
    let linv = l.solve_lower_triangular(&DMatrix::identity(n, n))?;
    if linv.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((l, linv * x))
}

fn householder_lq(x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = x.transpose().qr();
    let (q, r) = qr.unpack();
    (r.transpose(), q.transpose())
}

fn sorted(
    u: DMatrix<f64>,
    s: DVector<f64>,
    vt: DMatrix<f64>,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return (u, s, vt);
    }
    let u2 = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let s2 = DVector::from_fn(order.len(), |i, _| s[order[i]]);
    let vt2 = DMatrix::from_fn(order.len(), vt.ncols(), |r, c| vt[(order[r], c)]);
    (u2, s2, vt2)
}

/// Singular values (descending) of any matrix.
pub fn singular_values(x: &DMatrix<f64>) -> DVector<f64> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return DVector::zeros(0);
    }
    let wide = if x.nrows() <= x.ncols() { x.clone() } else { x.transpose() };
    let (m, _) = cholesky_qr2(&wide).unwrap_or_else(|| householder_lq(&wide));
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(s)
}

/// Eigenvalues of a symmetric matrix in descending order.
pub fn sym_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Relative Frobenius distance `‖a - b‖ / ‖b‖` (absolute when `b = 0`).
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}
