//! Two-layer linear networks `x ↦ a⊤Wx` trained by full-batch gradient descent.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::spectrum::init_direction;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    /// Second-layer weights, length `m`.
    pub a: DVector<f64>,
    /// First-layer weights, `m × p`.
    pub w: DMatrix<f64>,
}

impl TwoLayerNet {
    pub fn new(a: DVector<f64>, w: DMatrix<f64>) -> Result<Self> {
        if a.len() != w.nrows() {
            return Err(Error::DimensionMismatch {
                what: "second-layer width vs first-layer rows",
                expected: w.nrows(),
                got: a.len(),
            });
        }
        Ok(Self { a, w })
    }

    pub fn width(&self) -> usize {
        self.a.len()
    }

    /// Induced linear predictor `θ = W⊤a`.
    pub fn theta(&self) -> DVector<f64> {
        self.w.tr_mul(&self.a)
    }

    /// `‖aa⊤ − WW⊤‖_F`.
    pub fn balancedness(&self) -> f64 {
        let aat = &self.a * self.a.transpose();
        let wwt = &self.w * self.w.transpose();
        (aat - wwt).norm()
    }

    /// `‖aa⊤ − WW⊤‖_F / ‖aa⊤‖_F`.
    pub fn relative_balancedness(&self) -> f64 {
        let scale = self.a.norm_squared();
        if scale == 0.0 {
            self.balancedness()
        } else {
            self.balancedness() / scale
        }
    }

    /// `L(a, W) = ‖y − X W⊤a‖²`.
    pub fn loss(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
        (y - x * self.theta()).norm_squared()
    }

    /// `(∂L/∂a, ∂L/∂W)`.
    pub fn gradients(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let r = y - x * self.theta();
        let g = x.tr_mul(&r) * -2.0;
        (&self.w * &g, &self.a * g.transpose())
    }
}

/// Rank-one balanced network with `W⊤a = θ0`: `a = √‖θ0‖ u`,
/// `W = u θ0⊤ / √‖θ0‖` for a random unit `u ∈ R^m` (sign fixed so `u_1 ≥ 0`).
pub fn balanced_init(theta0: &DVector<f64>, m: usize, seed: u64) -> Result<TwoLayerNet> {
    if m == 0 {
        return Err(Error::param("hidden width must be at least 1"));
    }
    let dir = init_direction(theta0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = DVector::<f64>::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
    if u[0] < 0.0 {
        u.neg_mut();
    }
    u.normalize_mut();
    let root = theta0.norm().sqrt();
    Ok(TwoLayerNet {
        a: &u * root,
        w: &u * dir.transpose(),
    })
}

/// Linear coefficient `v` for which the balanced flow started at `θ0` ends at
/// `argmin ‖θ‖^{3/2} − v⊤θ` subject to interpolation.
///
/// Along the balanced flow `θ̇ = −(‖θ‖I + θθ⊤/‖θ‖)∇L`, the quantity
/// `θ/√‖θ‖` moves only within the row space of `X`. At the limit this gives
/// `θ/√‖θ‖ − θ0/√‖θ0‖ ∈ row(X)`, the stationarity condition of the objective
/// with `v = (3/2) θ0/√‖θ0‖`.
pub fn flow_limit_coefficient(theta0: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(init_direction(theta0)? * 1.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GdOptions {
    /// Fixed step size; `None` selects `step_scale / (μ₁(XX⊤)(‖a₀‖² + ‖W₀‖²_op))`
    /// with halving on divergence.
    pub step: Option<f64>,
    pub step_scale: f64,
    pub max_iters: usize,
    /// Stop once `‖y − XW⊤a‖ ≤ tol · ‖y‖`.
    pub tol: f64,
    /// Balancedness is sampled every this many iterations.
    pub check_every: usize,
    pub max_halvings: usize,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self {
            step: None,
            step_scale: 0.1,
            max_iters: 2_000_000,
            tol: 1e-9,
            check_every: 1000,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GdSummary {
    pub iterations: usize,
    pub converged: bool,
    pub step: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `‖y − Xθ‖ / ‖y‖` at exit.
    pub final_residual: f64,
    pub final_balancedness: f64,
    /// Largest relative balancedness seen at the sampling points.
    pub max_balancedness: f64,
    pub halvings: usize,
}

/// `step_scale / (μ₁(XX⊤) (‖a₀‖² + ‖W₀‖²_op))`.
pub fn default_step(net: &TwoLayerNet, x: &DMatrix<f64>, step_scale: f64) -> f64 {
    let mu1 = linalg::singular_values(x)[0].powi(2);
    let w_op = linalg::singular_values(&net.w).get(0).copied().unwrap_or(0.0);
    let denom = mu1 * (net.a.norm_squared() + w_op * w_op);
    if denom > 0.0 {
        step_scale / denom
    } else {
        step_scale
    }
}

/// Full-batch gradient descent on `‖y − X W⊤a‖²`.
///
/// Non-convergence within `max_iters` is reported through
/// `GdSummary::converged`, not as an error. A loss above ten times the
/// initial loss is divergence: with an explicit step it is an error, with the
/// default rule the step is halved and training restarts.
pub fn train_gradient_descent(
    net: &TwoLayerNet,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &GdOptions,
) -> Result<(TwoLayerNet, GdSummary)> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "y length vs rows of X",
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.ncols() != net.w.ncols() {
        return Err(Error::DimensionMismatch {
            what: "network input dimension vs columns of X",
            expected: x.ncols(),
            got: net.w.ncols(),
        });
    }
    let mut step = match opts.step {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::param(format!("step must be positive, got {s}"))),
        None => default_step(net, x, opts.step_scale),
    };
    let mut halvings = 0;
    loop {
        match descend(net, x, y, step, opts) {
            Ok((trained, mut summary)) => {
                summary.halvings = halvings;
                return Ok((trained, summary));
            }
            Err(e @ Error::Diverged { .. }) => {
                if opts.step.is_some() || halvings >= opts.max_halvings {
                    return Err(e);
                }
                log::warn!("gradient descent diverged at step {step:e}; halving");
                step *= 0.5;
                halvings += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn descend(
    net: &TwoLayerNet,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    step: f64,
    opts: &GdOptions,
) -> Result<(TwoLayerNet, GdSummary)> {
    let (n, p) = x.shape();
    let m = net.width();
    let mut a = net.a.clone();
    let mut w = net.w.clone();
    let mut theta = DVector::zeros(p);
    let mut r = DVector::zeros(n);
    let mut g = DVector::zeros(p);
    let mut ga = DVector::zeros(m);

    let y_norm = y.norm();
    let target = opts.tol * y_norm;
    let residual = |theta: &mut DVector<f64>, r: &mut DVector<f64>, a: &DVector<f64>, w: &DMatrix<f64>| {
        theta.gemv_tr(1.0, w, a, 0.0);
        r.copy_from(y);
        r.gemv(-1.0, x, theta, 1.0);
        r.norm()
    };

    let initial_loss = residual(&mut theta, &mut r, &a, &w).powi(2);
    let check_every = opts.check_every.max(1);
    let mut max_bal = net.relative_balancedness();
    let mut iterations = 0;
    let mut res_norm = initial_loss.sqrt();
    while res_norm > target && iterations < opts.max_iters {
        g.gemv_tr(-2.0, x, &r, 0.0);
        ga.gemv(1.0, &w, &g, 0.0);
        w.ger(-step, &a, &g, 1.0);
        a.axpy(-step, &ga, 1.0);
        iterations += 1;

        res_norm = residual(&mut theta, &mut r, &a, &w);
        let loss = res_norm * res_norm;
        if !loss.is_finite() || loss > 10.0 * initial_loss.max(f64::MIN_POSITIVE) {
            return Err(Error::Diverged {
                iteration: iterations,
                loss,
                initial: initial_loss,
            });
        }
        if iterations % check_every == 0 {
            let bal = TwoLayerNet { a: a.clone(), w: w.clone() }.relative_balancedness();
            max_bal = max_bal.max(bal);
        }
    }
    let trained = TwoLayerNet { a, w };
    let final_bal = trained.relative_balancedness();
    let summary = GdSummary {
        iterations,
        converged: res_norm <= target,
        step,
        initial_loss,
        final_loss: res_norm * res_norm,
        final_residual: if y_norm > 0.0 { res_norm / y_norm } else { res_norm },
        final_balancedness: final_bal,
        max_balancedness: max_bal.max(final_bal),
        halvings: 0,
    };
    Ok((trained, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::closed_form::implicit_bias_estimate;

    fn normal_vec(len: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::<f64>::from_fn(len, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn scalar_balanced_init() {
        let mut theta0 = DVector::zeros(4);
        theta0[0] = 4.0;
        let net = balanced_init(&theta0, 1, 7).unwrap();
        assert!((net.a[0] - 2.0).abs() < 1e-15);
        assert!((net.w[(0, 0)] - 2.0).abs() < 1e-15);
        assert!(net.w.row(0).columns(1, 3).iter().all(|v| *v == 0.0));
        assert!(net.balancedness() < 1e-15);
    }

    #[test]
    fn balanced_init_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for seed in 0..10 {
            let theta0 = normal_vec(17, &mut rng);
            let net = balanced_init(&theta0, 6, seed).unwrap();
            assert!((net.theta() - &theta0).norm() <= 1e-12 * theta0.norm());
            assert!(net.relative_balancedness() < 1e-14);
            let s = linalg::singular_values(&net.w);
            assert!(s[1] < 1e-12 * s[0], "rank one");
        }
        assert!(balanced_init(&DVector::zeros(3), 2, 0).is_err());
        assert!(balanced_init(&DVector::from_element(3, 1.0), 0, 0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::<f64>::from_fn(4, 6, |_, _| StandardNormal.sample(&mut rng));
        let y = normal_vec(4, &mut rng);
        let net = TwoLayerNet::new(normal_vec(3, &mut rng), DMatrix::<f64>::from_fn(3, 6, |_, _| StandardNormal.sample(&mut rng))).unwrap();
        let (ga, gw) = net.gradients(&x, &y);
        let h = 1e-6;
        for i in 0..3 {
            let mut plus = net.clone();
            plus.a[i] += h;
            let mut minus = net.clone();
            minus.a[i] -= h;
            let fd = (plus.loss(&x, &y) - minus.loss(&x, &y)) / (2.0 * h);
            assert!((fd - ga[i]).abs() <= 1e-5 * ga[i].abs().max(1.0));
            for j in 0..6 {
                let mut plus = net.clone();
                plus.w[(i, j)] += h;
                let mut minus = net.clone();
                minus.w[(i, j)] -= h;
                let fd = (plus.loss(&x, &y) - minus.loss(&x, &y)) / (2.0 * h);
                assert!((fd - gw[(i, j)]).abs() <= 1e-5 * gw[(i, j)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn interpolating_net_takes_no_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::<f64>::from_fn(3, 7, |_, _| StandardNormal.sample(&mut rng));
        let theta0 = normal_vec(7, &mut rng);
        let y = &x * &theta0;
        let net = balanced_init(&theta0, 4, 0).unwrap();
        let (out, summary) = train_gradient_descent(&net, &x, &y, &GdOptions::default()).unwrap();
        assert_eq!(summary.iterations, 0);
        assert_eq!(out, net);
    }

    #[test]
    fn explicit_large_step_diverges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::<f64>::from_fn(5, 9, |_, _| StandardNormal.sample(&mut rng));
        let y = normal_vec(5, &mut rng);
        let net = balanced_init(&normal_vec(9, &mut rng), 3, 0).unwrap();
        let opts = GdOptions {
            step: Some(10.0),
            ..GdOptions::default()
        };
        assert!(matches!(
            train_gradient_descent(&net, &x, &y, &opts),
            Err(Error::Diverged { .. })
        ));
        // the default rule recovers by halving
        let opts = GdOptions {
            step_scale: 200.0,
            max_iters: 200_000,
            ..GdOptions::default()
        };
        let (_, summary) = train_gradient_descent(&net, &x, &y, &opts).unwrap();
        assert!(summary.halvings > 0);
    }

    #[test]
    fn flow_converges_to_rescaled_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, p, m) = (6, 14, 5);
        let x = DMatrix::<f64>::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = normal_vec(n, &mut rng);
        let theta0 = normal_vec(p, &mut rng).normalize();
        let net = balanced_init(&theta0, m, 1).unwrap();
        let opts = GdOptions {
            step_scale: 0.01,
            ..GdOptions::default()
        };
        let (trained, summary) = train_gradient_descent(&net, &x, &y, &opts).unwrap();
        assert!(summary.converged);
        let target = implicit_bias_estimate(&x, &y, &flow_limit_coefficient(&theta0).unwrap()).unwrap();
        let rel = (trained.theta() - &target.theta_hat).norm() / target.theta_hat.norm();
        assert!(rel < 5e-3, "relative gap {rel}");
        // drift from exact balance is first order in the step size
        assert!(summary.max_balancedness < 5e-3);
    }
}
