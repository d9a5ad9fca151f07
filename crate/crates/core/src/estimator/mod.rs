//! The implicit-bias interpolator, its minimum-norm baseline, and the
//! two-layer network whose gradient flow it characterizes.

pub mod closed_form;
pub mod network;
pub mod svd;

pub use closed_form::{
    alpha_sandwich, alpha_star, implicit_bias_estimate, implicit_bias_from_svd, interpolation_residual,
    min_norm_ols, objective, quartic_residual, stationarity_residual, ImplicitBiasSolution,
};
pub use network::{
    balanced_init, default_step, flow_limit_coefficient, train_gradient_descent, GdOptions, GdSummary,
    TwoLayerNet,
};
pub use svd::{svd_factors, transformed_data, SvdFactors, TransformedData};
