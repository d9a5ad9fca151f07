//! The implicit-bias interpolator against minimum-norm least squares.

use benign_lab::datagen::{sample_dataset, FeatureDistribution, NoiseModel, ProblemInstance, ThetaStarPreset};
use benign_lab::estimator::{
    alpha_sandwich, implicit_bias_from_svd, interpolation_residual, objective, quartic_residual, stationarity_residual,
    svd_factors,
};
use benign_lab::risk::excess_risk;
use benign_lab::spectrum::{init_direction, CovarianceSpectrum};

fn main() -> benign_lab::Result<()> {
    let (n, p) = (50, 400);
    let spectrum = CovarianceSpectrum::spike(2, 0.01, p)?;
    let theta_star = ThetaStarPreset::E1.build(p)?;
    let instance = ProblemInstance::new(spectrum, theta_star.clone(), n, FeatureDistribution::Gaussian, NoiseModel::new(0.5)?)?;
    let ds = sample_dataset(&instance, 1)?;
    let svd = svd_factors(&ds.x)?;

    // an initialization pointing at the truth
    let w = init_direction(&(&theta_star * 0.5))?;
    let sol = implicit_bias_from_svd(&svd, &ds.y, &w)?;
    let (lo, hi) = alpha_sandwich(sol.y_tilde_norm, w.norm());

    println!("alpha* = {:.6} in [{lo:.6}, {hi:.6}]", sol.alpha_star);
    println!("quartic residual = {:.2e}", quartic_residual(sol.alpha_star, sol.zeta(), sol.rho()));
    println!("interpolation residual = {:.2e}", interpolation_residual(&ds.x, &ds.y, &sol.theta_hat));
    println!("stationarity residual = {:.2e}", stationarity_residual(&svd, &sol.theta_hat, &w).unwrap_or(0.0));
    println!("objective: estimate {:.6}, ols {:.6}", objective(&sol.theta_hat, &w), objective(&sol.theta_ols, &w));
    println!(
        "excess risk: estimate {:.6}, ols {:.6}",
        excess_risk(&sol.theta_hat, &theta_star, &instance.spectrum)?,
        excess_risk(&sol.theta_ols, &theta_star, &instance.spectrum)?
    );
    Ok(())
}
