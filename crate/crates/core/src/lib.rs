//! Numerical laboratory for benign overfitting of interpolating two-layer
//! linear networks.
//!
//! Gradient flow on a balanced network `x ↦ a⊤Wx` started at `θ(0)`
//! interpolates the data with a predictor of the form
//! `θ̂ = θ̂_OLS + α*·(I − X⊤(XX⊤)⁻¹X)w`, `w = θ(0)/√‖θ(0)‖`. This crate computes
//! that predictor in closed form, checks it against gradient descent and a
//! brute-force constrained optimizer, and measures its excess risk and the
//! random-matrix quantities that control it.
//!
//! | module | contents |
//! |--------|----------|
//! | [`spectrum`] | covariance spectra, effective ranks, critical index, `ψ` rescaling |
//! | [`datagen`] | seeded sampling of `(X, y, ε)` |
//! | [`estimator`] | SVD pipeline, closed form, `α*`, balanced networks and GD |
//! | [`risk`] | exact excess risk, decomposition, upper/lower bound terms |
//! | [`spectral`] | Gram head/tail split and concentration statistics |
//! | [`harness`] | trials, sweeps, CSV/SVG output, acceptance checks |
//! | [`oracle`] | dense reference computations used for cross-checks |

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod risk;
pub mod spectral;
pub mod spectrum;
mod stats;

pub use error::{Error, Result};
pub use stats::{least_squares_slope, Summary};
