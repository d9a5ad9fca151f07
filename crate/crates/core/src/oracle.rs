//! Reference computations that avoid the estimator's factorization path.
//!
//! Used by the test suites and by `verify`. Everything here is dense and
//! meant for small problems.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Interpolant and orthonormal null-space basis of `X` from a Householder QR
/// of `X⊤`.
pub fn qr_parametrization(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (n, p) = x.shape();
    let (q, r) = x.transpose().qr().unpack();
    // X = R⊤ Q⊤, so θ = Q R⁻⊤ y interpolates
    let z = r
        .transpose()
        .solve_lower_triangular(y)
        .expect("X must have full row rank");
    let particular = &q * z;

    let proj = |v: &DVector<f64>| v - &q * q.tr_mul(v);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(p - n);
    let mut candidates: Vec<DVector<f64>> = (0..p)
        .map(|i| proj(&DVector::from_fn(p, |r, _| if r == i { 1.0 } else { 0.0 })))
        .collect();
    while basis.len() < p - n {
        let best = (0..p)
            .max_by(|&a, &b| candidates[a].norm_squared().total_cmp(&candidates[b].norm_squared()))
            .unwrap();
        let mut v = candidates[best].clone();
        for _ in 0..2 {
            v = proj(&v);
            for b in &basis {
                v -= b * b.dot(&v);
            }
        }
        let v = v.normalize();
        for c in candidates.iter_mut() {
            let d = v.dot(c);
            *c -= &v * d;
        }
        basis.push(v);
    }
    (particular, DMatrix::from_columns(&basis))
}

/// `argmin ‖θ‖^{3/2} − w⊤θ` over `Xθ = y`, by descent in null-space
/// coordinates `θ = θ_part + Nξ` from `restarts` random starts.
///
/// The reduced objective is smooth away from `θ = 0` and its Hessian has
/// condition number at most 2, so Armijo gradient descent converges quickly.
pub fn constrained_minimizer(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    restarts: usize,
    seed: u64,
) -> DVector<f64> {
    let (particular, null) = qr_parametrization(x, y);
    let dim = null.ncols();
    let wn = null.tr_mul(w);
    let f = |xi: &DVector<f64>| {
        let theta = &particular + &null * xi;
        theta.norm().powf(1.5) - w.dot(&theta)
    };
    let grad = |xi: &DVector<f64>| {
        let theta = &particular + &null * xi;
        let norm = theta.norm().max(1e-300);
        null.tr_mul(&theta) * (1.5 / norm.sqrt()) - &wn
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = particular.norm().max(w.norm()).max(1.0);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for r in 0..restarts.max(1) {
        let mut xi = if r == 0 {
            DVector::zeros(dim)
        } else {
            DVector::from_fn(dim, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
        };
        let mut fx = f(&xi);
        let mut step = 1.0;
        for _ in 0..20_000 {
            let g = grad(&xi);
            let g2 = g.norm_squared();
            if g2.sqrt() < 1e-13 * scale {
                break;
            }
            step *= 2.0;
            loop {
                let cand = &xi - &g * step;
                let fc = f(&cand);
                if fc <= fx - 0.5 * step * g2 {
                    xi = cand;
                    fx = fc;
                    break;
                }
                step *= 0.5;
                if step < 1e-300 {
                    break;
                }
            }
            if step < 1e-300 {
                break;
            }
        }
        if best.as_ref().is_none_or(|(bf, _)| fx < *bf) {
            best = Some((fx, xi));
        }
    }
    let (_, xi) = best.expect("at least one restart");
    &particular + &null * xi
}

/// `I − X⊤(XX⊤)⁻¹X` with the Gram inverse formed explicitly.
pub fn dense_null_projector(x: &DMatrix<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let gram_inv = (x * x.transpose()).try_inverse().expect("invertible Gram matrix");
    DMatrix::identity(p, p) - x.transpose() * gram_inv * x
}

/// Dense `B = P⊥ Σ P⊥` and `C = (XX⊤)⁻¹ X Σ X⊤ (XX⊤)⁻¹` for diagonal `Σ`.
pub fn dense_b_c(x: &DMatrix<f64>, lambdas: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(lambdas));
    let proj = dense_null_projector(x);
    let gram_inv = (x * x.transpose()).try_inverse().expect("invertible Gram matrix");
    let b = &proj * &sigma * &proj;
    let c = &gram_inv * x * &sigma * x.transpose() * &gram_inv;
    (b, c)
}
