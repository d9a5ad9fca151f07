use nalgebra::{DMatrix, DVector};

use crate::datagen::RANK_TOLERANCE;
use crate::error::{Error, Result};
use crate::linalg::{self, ThinSvd};

/// `X = U D V⊤` for a full-row-rank `n × p` design with `p > n`.
///
/// Only the row-space block of `V` (its first `n` columns) is stored; the
/// remaining `p - n` columns span `null(X)` and enter every formula through
/// the projector `I - V_row V_row⊤`. [`SvdFactors::null_basis`] materializes
/// them for small problems.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    u: DMatrix<f64>,
    d: DVector<f64>,
    v_row: DMatrix<f64>,
}

pub fn svd_factors(x: &DMatrix<f64>) -> Result<SvdFactors> {
    let (n, p) = x.shape();
    if p <= n {
        return Err(Error::NotOverparameterized { n, p });
    }
    let ThinSvd { u, s, v } = linalg::thin_svd_wide(x);
    let (s_max, s_min) = (s[0], s[n - 1]);
    if !(s_max > 0.0 && s_min > RANK_TOLERANCE * s_max) {
        return Err(Error::RankDeficient { s_min, s_max });
    }
    Ok(SvdFactors { u, d: s, v_row: v })
}

impl SvdFactors {
    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn p(&self) -> usize {
        self.v_row.nrows()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> &DVector<f64> {
        &self.d
    }

    /// First `n` columns of `V`.
    pub fn v_row(&self) -> &DMatrix<f64> {
        &self.v_row
    }

    /// `D†` as a dense `p × n` matrix; rows `n..p` are zero.
    pub fn d_dagger(&self) -> DMatrix<f64> {
        let (n, p) = (self.n(), self.p());
        let mut m = DMatrix::zeros(p, n);
        for i in 0..n {
            m[(i, i)] = 1.0 / self.d[i];
        }
        m
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.d) * self.v_row.transpose()
    }

    /// Nonzero block of `D† U⊤ v`.
    pub fn pinv_rotate(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.u.tr_mul(v);
        out.component_div_assign(&self.d);
        out
    }

    /// `X⊤(XX⊤)⁻¹ v = V D† U⊤ v`.
    pub fn pinv_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.v_row * self.pinv_rotate(v)
    }

    /// Orthogonal projection onto the row space of `X`.
    pub fn project_row(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.v_row * self.v_row.tr_mul(w)
    }

    /// `(I - X⊤(XX⊤)⁻¹X) w`.
    pub fn project_null(&self, w: &DVector<f64>) -> DVector<f64> {
        w - self.project_row(w)
    }

    /// `Tr((XX⊤)⁻¹) = Σ 1/D_ii²`.
    pub fn trace_gram_inverse(&self) -> f64 {
        // smallest singular values dominate; add them last-to-first
        self.d.iter().rev().map(|d| 1.0 / (d * d)).sum()
    }

    /// Orthonormal basis of `null(X)` as a `p × (p - n)` matrix.
    ///
    /// Greedy pivoted Gram–Schmidt over the coordinate vectors; `O(p³)`, so
    /// intended for small `p`.
    pub fn null_basis(&self) -> DMatrix<f64> {
        let (n, p) = (self.n(), self.p());
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(p - n);
        let mut residuals: Vec<DVector<f64>> = (0..p)
            .map(|i| self.project_null(&DVector::from_fn(p, |r, _| if r == i { 1.0 } else { 0.0 })))
            .collect();
        while basis.len() < p - n {
            let (best, _) = residuals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm_squared().total_cmp(&b.1.norm_squared()))
                .expect("nonempty");
            let mut v = residuals[best].clone();
            // second pass restores orthogonality lost to cancellation
            for q in &basis {
                v -= q * q.dot(&v);
            }
            v = self.project_null(&v);
            for q in &basis {
                v -= q * q.dot(&v);
            }
            let q = v.normalize();
            for r in residuals.iter_mut() {
                let c = q.dot(r);
                *r -= &q * c;
            }
            basis.push(q);
        }
        DMatrix::from_columns(&basis)
    }

    /// Complete `p × p` orthogonal `V = [V_row | null basis]`.
    pub fn full_v(&self) -> DMatrix<f64> {
        let null = self.null_basis();
        let mut v = DMatrix::zeros(self.p(), self.p());
        v.columns_mut(0, self.n()).copy_from(&self.v_row);
        v.columns_mut(self.n(), self.p() - self.n()).copy_from(&null);
        v
    }
}

/// Data in the rotated coordinates `ỹ = D†U⊤y`, `w̃ = V⊤w`.
///
/// `ỹ` is stored as its nonzero block (length `n`). `w̃` is split into its
/// row-space block `V_row⊤ w` and the null-space component `P⊥ w` expressed in
/// the original coordinates, whose norm is `‖w̃_{n+1:p}‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedData {
    pub y_tilde: DVector<f64>,
    pub w_tilde_head: DVector<f64>,
    pub w_null: DVector<f64>,
}

impl TransformedData {
    pub fn w_tail_norm(&self) -> f64 {
        self.w_null.norm()
    }

    /// `‖w̃‖` assembled from both blocks.
    pub fn w_tilde_norm(&self) -> f64 {
        (self.w_tilde_head.norm_squared() + self.w_null.norm_squared()).sqrt()
    }

    /// `ỹ` padded with `p - n` zeros.
    pub fn y_tilde_full(&self, p: usize) -> DVector<f64> {
        let mut v = DVector::zeros(p);
        v.rows_mut(0, self.y_tilde.len()).copy_from(&self.y_tilde);
        v
    }
}

pub fn transformed_data(svd: &SvdFactors, y: &DVector<f64>, w: &DVector<f64>) -> Result<TransformedData> {
    if y.len() != svd.n() {
        return Err(Error::DimensionMismatch {
            what: "y length vs rows of X",
            expected: svd.n(),
            got: y.len(),
        });
    }
    if w.len() != svd.p() {
        return Err(Error::DimensionMismatch {
            what: "w length vs columns of X",
            expected: svd.p(),
            got: w.len(),
        });
    }
    let w_tilde_head = svd.v_row.tr_mul(w);
    let w_null = w - &svd.v_row * &w_tilde_head;
    Ok(TransformedData {
        y_tilde: svd.pinv_rotate(y),
        w_tilde_head,
        w_null,
    })
}
