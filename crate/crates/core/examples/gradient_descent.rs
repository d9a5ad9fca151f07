//! A balanced two-layer linear network trained by gradient descent, compared
//! with the closed form for two choices of the linear coefficient.

use benign_lab::datagen::{sample_dataset, FeatureDistribution, NoiseModel, ProblemInstance, ThetaStarPreset};
use benign_lab::estimator::{
    balanced_init, flow_limit_coefficient, implicit_bias_estimate, train_gradient_descent, GdOptions,
};
use benign_lab::spectrum::{init_direction, CovarianceSpectrum};

fn main() -> benign_lab::Result<()> {
    let (n, p, m) = (8, 20, 6);
    let instance = ProblemInstance::new(
        CovarianceSpectrum::isotropic(p)?,
        ThetaStarPreset::RandomUnit(1).build(p)?,
        n,
        FeatureDistribution::Gaussian,
        NoiseModel::new(0.5)?,
    )?;
    let ds = sample_dataset(&instance, 2)?;
    let theta0 = ThetaStarPreset::RandomUnit(3).build(p)?;
    let net = balanced_init(&theta0, m, 4)?;
    let opts = GdOptions {
        step_scale: 0.002,
        ..GdOptions::default()
    };
    let (trained, summary) = train_gradient_descent(&net, &ds.x, &ds.y, &opts)?;
    println!("{summary:#?}");

    let theta = trained.theta();
    for (label, w) in [("θ(0)/√‖θ(0)‖", init_direction(&theta0)?), ("1.5·θ(0)/√‖θ(0)‖", flow_limit_coefficient(&theta0)?)] {
        let target = implicit_bias_estimate(&ds.x, &ds.y, &w)?.theta_hat;
        println!("w = {label:<18} relative distance {:.3e}", (&theta - &target).norm() / target.norm());
    }
    Ok(())
}
