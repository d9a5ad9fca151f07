use nalgebra::{DMatrix, DVector};

use super::svd::{svd_factors, transformed_data, SvdFactors};
use crate::error::{Error, Result};

/// Below this norm the stationarity residual is not evaluated; the
/// objective is not differentiable at `θ = 0`.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Positive root of `81α⁴ − 16ζα² − 16ρ = 0` with `ζ = w_tail_norm²` and
/// `ρ = y_tilde_norm²`:
///
/// `α* = √((8ζ + √(64ζ² + 1296ρ)) / 81)`.
pub fn alpha_star(y_tilde_norm: f64, w_tail_norm: f64) -> f64 {
    debug_assert!(y_tilde_norm >= 0.0 && w_tail_norm >= 0.0);
    let zeta = w_tail_norm * w_tail_norm;
    let rho = y_tilde_norm * y_tilde_norm;
    ((8.0 * zeta + (64.0 * zeta * zeta + 1296.0 * rho).sqrt()) / 81.0).sqrt()
}

/// `81α⁴ − 16ζα² − 16ρ`, divided by the largest of its three terms.
pub fn quartic_residual(alpha: f64, zeta: f64, rho: f64) -> f64 {
    let a2 = alpha * alpha;
    let terms = [81.0 * a2 * a2, 16.0 * zeta * a2, 16.0 * rho];
    let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if scale == 0.0 {
        0.0
    } else {
        (terms[0] - terms[1] - terms[2]) / scale
    }
}

/// Bounds on `α*` that use the full `‖w‖` in place of the tail norm:
///
/// `(2/3)‖ỹ‖^{1/2} ≤ α* ≤ (2/3)‖ỹ‖^{1/2} √(√(1 + 4‖w‖⁴/(81‖ỹ‖²)) + 2‖w‖²/(9‖ỹ‖))`.
pub fn alpha_sandwich(y_tilde_norm: f64, w_norm: f64) -> (f64, f64) {
    let lower = 2.0 / 3.0 * y_tilde_norm.sqrt();
    if y_tilde_norm == 0.0 {
        // limit of the upper form as ‖ỹ‖ → 0
        return (0.0, 4.0 / 9.0 * w_norm);
    }
    let w2 = w_norm * w_norm;
    let upper = lower
        * ((1.0 + 4.0 * w2 * w2 / (81.0 * y_tilde_norm * y_tilde_norm)).sqrt()
            + 2.0 * w2 / (9.0 * y_tilde_norm))
            .sqrt();
    (lower, upper)
}

/// `θ̂ = θ̂_OLS + α* (I − X⊤(XX⊤)⁻¹X) w`, the minimizer of
/// `‖θ‖^{3/2} − w⊤θ` over interpolants `Xθ = y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitBiasSolution {
    pub theta_hat: DVector<f64>,
    pub theta_ols: DVector<f64>,
    pub alpha_star: f64,
    /// `α* · P⊥ w`.
    pub perturbation: DVector<f64>,
    pub y_tilde_norm: f64,
    pub w_tail_norm: f64,
}

impl ImplicitBiasSolution {
    pub fn zeta(&self) -> f64 {
        self.w_tail_norm * self.w_tail_norm
    }

    pub fn rho(&self) -> f64 {
        self.y_tilde_norm * self.y_tilde_norm
    }
}

/// `‖θ‖^{3/2} − w⊤θ`.
pub fn objective(theta: &DVector<f64>, w: &DVector<f64>) -> f64 {
    theta.norm().powf(1.5) - w.dot(theta)
}

pub fn implicit_bias_estimate(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<ImplicitBiasSolution> {
    let svd = svd_factors(x)?;
    implicit_bias_from_svd(&svd, y, w)
}

/// Closed form on precomputed factors; lets several `w` share one factorization.
pub fn implicit_bias_from_svd(svd: &SvdFactors, y: &DVector<f64>, w: &DVector<f64>) -> Result<ImplicitBiasSolution> {
    let t = transformed_data(svd, y, w)?;
    let y_tilde_norm = t.y_tilde.norm();
    let w_tail_norm = t.w_tail_norm();
    let alpha = alpha_star(y_tilde_norm, w_tail_norm);
    let theta_ols = svd.v_row() * &t.y_tilde;
    let perturbation = t.w_null * alpha;
    Ok(ImplicitBiasSolution {
        theta_hat: &theta_ols + &perturbation,
        theta_ols,
        alpha_star: alpha,
        perturbation,
        y_tilde_norm,
        w_tail_norm,
    })
}

/// `X⊤(XX⊤)⁻¹y`, evaluated as `V D† U⊤ y`.
pub fn min_norm_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = svd_factors(x)?;
    if y.len() != svd.n() {
        return Err(Error::DimensionMismatch {
            what: "y length vs rows of X",
            expected: svd.n(),
            got: y.len(),
        });
    }
    Ok(svd.pinv_apply(y))
}

/// `‖Xθ − y‖ / ‖y‖` (absolute when `y = 0`).
pub fn interpolation_residual(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let r = (x * theta - y).norm();
    let base = y.norm();
    if base == 0.0 {
        r
    } else {
        r / base
    }
}

/// `‖P⊥((3/2) θ/‖θ‖^{1/2} − w)‖`, or `None` for `‖θ‖ < DEGENERATE_NORM`.
pub fn stationarity_residual(svd: &SvdFactors, theta: &DVector<f64>, w: &DVector<f64>) -> Option<f64> {
    let norm = theta.norm();
    if norm < DEGENERATE_NORM {
        return None;
    }
    let grad = theta * (1.5 / norm.sqrt()) - w;
    Some(svd.project_null(&grad).norm())
}
