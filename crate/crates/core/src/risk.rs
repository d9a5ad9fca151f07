//! Excess risk under a known diagonal covariance, its exact decomposition,
//! and the upper and lower bound expressions.
//!
//! Unspecified absolute constants enter as a single stand-in `c`.

use nalgebra::DVector;
use serde::Serialize;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{ImplicitBiasSolution, SvdFactors};
use crate::spectrum::CovarianceSpectrum;

pub const DEFAULT_DELTA: f64 = 0.05;

/// `Σ_i λ_i v_i²`.
fn sigma_norm_sq(lambdas: &[f64], v: &DVector<f64>) -> f64 {
    lambdas.iter().zip(v.iter()).map(|(l, x)| l * x * x).sum()
}

/// `Σ_i λ_i u_i v_i`.
fn sigma_inner(lambdas: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    lambdas.iter().zip(u.iter().zip(v.iter())).map(|(l, (a, b))| l * a * b).sum()
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}

/// `(θ − θ*)⊤ Σ (θ − θ*) = Σ_i λ_i (θ_i − θ*_i)²`.
pub fn excess_risk(theta: &DVector<f64>, theta_star: &DVector<f64>, spec: &CovarianceSpectrum) -> Result<f64> {
    check_len("theta length vs spectrum", spec.len(), theta.len())?;
    check_len("theta_star length vs spectrum", spec.len(), theta_star.len())?;
    Ok(sigma_norm_sq(spec.lambdas(), &(theta - theta_star)))
}

/// Stand-in values behind a bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    /// Replaces every absolute constant.
    pub c: f64,
    /// `λ₁`, the prefactor of `Ξ`.
    pub lambda1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTerms {
    pub bias: f64,
    pub bias_weak: f64,
    pub variance: f64,
    pub xi: f64,
    pub delta: f64,
    pub constants: BoundConstants,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.bias + self.variance + self.xi
    }
}

fn check_delta(delta: f64) -> Result<f64> {
    if delta > 0.0 && delta < 1.0 {
        Ok((1.0 / delta).ln())
    } else {
        Err(Error::param(format!("delta must lie in (0, 1), got {delta}")))
    }
}

/// Upper-bound terms for a general spectrum with head size `k`:
///
/// * `bias = c(‖(θ*−ψ)_{1:k}‖²_{Σ⁻¹}(s_k/n)² + ‖(θ*−ψ)_{k+1:p}‖²_Σ)`
/// * `bias_weak = 2c‖θ*−ψ‖² s_k/n`
/// * `variance = c log(1/δ)(k/n + n/R_k)`
/// * `xi = cλ₁‖ψ‖²[n/R_k + n²/r_k² + s_k/n + log(1/δ)/n + k²/n²]·max{√(r₀/n), r₀/n, √(log(1/δ)/n)}`
///
/// `bias ≤ bias_weak` holds whenever `λ_k ≥ s_k/(2n)` and `λ_{k+1} ≤ 2s_k/n`,
/// which is the case when `k` is the critical index for some `b ∈ [1/2, 2]`.
pub fn bound_terms(
    spec: &CovarianceSpectrum,
    n: usize,
    k: usize,
    theta_star: &DVector<f64>,
    psi: &DVector<f64>,
    delta: f64,
    c: f64,
) -> Result<BoundTerms> {
    let p = spec.len();
    check_len("theta_star length vs spectrum", p, theta_star.len())?;
    check_len("psi length vs spectrum", p, psi.len())?;
    if n == 0 {
        return Err(Error::param("n must be positive"));
    }
    let log_inv = check_delta(delta)?;
    let ranks = spec.effective_ranks(k)?;
    let (nf, kf, s_k) = (n as f64, k as f64, ranks.s);
    let r0 = spec.effective_ranks(0)?.r;
    let lambdas = spec.lambdas();
    let diff = theta_star - psi;

    let head: f64 = (0..k).map(|i| diff[i] * diff[i] / lambdas[i]).sum();
    let tail: f64 = (k..p).map(|i| lambdas[i] * diff[i] * diff[i]).sum();
    let bias = c * (head * (s_k / nf).powi(2) + tail);
    let bias_weak = 2.0 * c * diff.norm_squared() * s_k / nf;
    let variance = c * log_inv * (kf / nf + nf / ranks.r_big);
    let bracket = nf / ranks.r_big + (nf / ranks.r).powi(2) + s_k / nf + log_inv / nf + (kf / nf).powi(2);
    let spread = (r0 / nf).sqrt().max(r0 / nf).max((log_inv / nf).sqrt());
    let lambda1 = spec.top();
    let xi = c * lambda1 * psi.norm_squared() * bracket * spread;
    Ok(BoundTerms {
        bias,
        bias_weak,
        variance,
        xi,
        delta,
        constants: BoundConstants { c, lambda1 },
    })
}

/// Bound terms specialized to the `(k, ε)`-spike spectrum, with `s_k`
/// replaced by `εp`:
///
/// * `bias = c(‖(θ*−ψ)_{1:k}‖²(εp/n)² + ε‖(θ*−ψ)_{k+1:p}‖²)`
/// * `bias_weak = c‖θ*−ψ‖² εp/n`
/// * `variance = c log(1/δ)(k/n + n/p)`
/// * `xi = cλ₁‖ψ‖²[n/p + εp/n + log(1/δ)/n + k²/n²]·max{√((k+εp)/n), √(log(1/δ)/n)}`
#[allow(clippy::too_many_arguments)]
pub fn spike_bound_terms(
    k: usize,
    eps: f64,
    p: usize,
    n: usize,
    theta_star: &DVector<f64>,
    psi: &DVector<f64>,
    delta: f64,
    c: f64,
) -> Result<BoundTerms> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::param(format!("spike level must lie in (0, 1], got {eps}")));
    }
    if k >= p {
        return Err(Error::param(format!("spike size k = {k} must be below p = {p}")));
    }
    if n == 0 {
        return Err(Error::param("n must be positive"));
    }
    check_len("theta_star length vs p", p, theta_star.len())?;
    check_len("psi length vs p", p, psi.len())?;
    let log_inv = check_delta(delta)?;
    let (nf, kf, pf) = (n as f64, k as f64, p as f64);
    let ep = eps * pf;
    let diff = theta_star - psi;
    let head: f64 = diff.rows(0, k).norm_squared();
    let tail: f64 = diff.rows(k, p - k).norm_squared();
    let bias = c * (head * (ep / nf).powi(2) + eps * tail);
    let bias_weak = c * diff.norm_squared() * ep / nf;
    let variance = c * log_inv * (kf / nf + nf / pf);
    let bracket = nf / pf + ep / nf + log_inv / nf + (kf / nf).powi(2);
    let spread = ((kf + ep) / nf).sqrt().max((log_inv / nf).sqrt());
    let lambda1 = if k > 0 { 1.0 } else { eps };
    let xi = c * lambda1 * psi.norm_squared() * bracket * spread;
    Ok(BoundTerms {
        bias,
        bias_weak,
        variance,
        xi,
        delta,
        constants: BoundConstants { c, lambda1 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundReport {
    /// `θ*⊤ B θ*` with `B = P⊥ Σ P⊥`.
    pub bias_lb: f64,
    /// `σ² Tr(C)` with `C = (XX⊤)⁻¹ X Σ X⊤ (XX⊤)⁻¹`.
    pub variance_lb: f64,
}

/// `Tr(C) = Σ_j D_jj⁻² Σ_i λ_i V_ij²`.
pub fn trace_c(svd: &SvdFactors, spec: &CovarianceSpectrum) -> Result<f64> {
    check_len("spectrum length vs columns of X", svd.p(), spec.len())?;
    let v = svd.v_row();
    let d = svd.singular_values();
    let lambdas = spec.lambdas();
    Ok((0..svd.n())
        .map(|j| sigma_norm_sq(lambdas, &v.column(j).into_owned()) / (d[j] * d[j]))
        .sum())
}

/// Per-realization lower-bound quadratic forms on precomputed factors.
pub fn lower_bound_terms(
    svd: &SvdFactors,
    spec: &CovarianceSpectrum,
    theta_star: &DVector<f64>,
    sigma: f64,
) -> Result<LowerBoundReport> {
    check_len("theta_star length vs spectrum", spec.len(), theta_star.len())?;
    let bias_lb = sigma_norm_sq(spec.lambdas(), &svd.project_null(theta_star));
    let variance_lb = sigma * sigma * trace_c(svd, spec)?;
    Ok(LowerBoundReport { bias_lb, variance_lb })
}

/// Exact split of the excess risk of an interpolant
/// `θ − θ* = −v + g` with `v = P⊥(θ* − α*w)` and `g = X⊤(XX⊤)⁻¹ε`:
///
/// `risk = v⊤Σv − 2v⊤Σg + g⊤Σg`, where `v⊤Σv = (θ*−α*w)⊤B(θ*−α*w)` and
/// `g⊤Σg = ε⊤Cε`. The cross term is reported with its sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalRiskReport {
    pub risk_exact: f64,
    pub bias_term: f64,
    pub cross_term: f64,
    pub noise_term: f64,
}

impl EmpiricalRiskReport {
    /// `|bias + cross + noise − risk| / max(risk, terms)`.
    pub fn decomposition_error(&self) -> f64 {
        let sum = self.bias_term + self.cross_term + self.noise_term;
        let scale = self
            .risk_exact
            .abs()
            .max(self.bias_term.abs())
            .max(self.noise_term.abs())
            .max(f64::MIN_POSITIVE);
        (sum - self.risk_exact).abs() / scale
    }
}

pub fn empirical_risk_report(
    solution: &ImplicitBiasSolution,
    theta_star: &DVector<f64>,
    spec: &CovarianceSpectrum,
    ds: &Dataset,
    svd: &SvdFactors,
) -> Result<EmpiricalRiskReport> {
    check_len("theta_star length vs columns of X", svd.p(), theta_star.len())?;
    check_len("noise length vs rows of X", svd.n(), ds.eps.len())?;
    let v = svd.project_null(theta_star) - &solution.perturbation;
    risk_split(&solution.theta_hat, theta_star, &v, &ds.eps, spec, svd)
}

/// The same split for `θ̂_OLS`, i.e. `α* w` replaced by zero.
pub fn ols_risk_report(
    solution: &ImplicitBiasSolution,
    theta_star: &DVector<f64>,
    spec: &CovarianceSpectrum,
    ds: &Dataset,
    svd: &SvdFactors,
) -> Result<EmpiricalRiskReport> {
    check_len("theta_star length vs columns of X", svd.p(), theta_star.len())?;
    check_len("noise length vs rows of X", svd.n(), ds.eps.len())?;
    let v = svd.project_null(theta_star);
    risk_split(&solution.theta_ols, theta_star, &v, &ds.eps, spec, svd)
}

fn risk_split(
    theta: &DVector<f64>,
    theta_star: &DVector<f64>,
    v: &DVector<f64>,
    eps: &DVector<f64>,
    spec: &CovarianceSpectrum,
    svd: &SvdFactors,
) -> Result<EmpiricalRiskReport> {
    let lambdas = spec.lambdas();
    let g = svd.pinv_apply(eps);
    Ok(EmpiricalRiskReport {
        risk_exact: excess_risk(theta, theta_star, spec)?,
        bias_term: sigma_norm_sq(lambdas, v),
        cross_term: -2.0 * sigma_inner(lambdas, v, &g),
        noise_term: sigma_norm_sq(lambdas, &g),
    })
}
