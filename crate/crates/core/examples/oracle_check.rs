//! The closed form against an independent constrained minimizer.

use benign_lab::datagen::{sample_dataset, FeatureDistribution, NoiseModel, ProblemInstance, ThetaStarPreset};
use benign_lab::estimator::{implicit_bias_estimate, objective};
use benign_lab::oracle::constrained_minimizer;
use benign_lab::spectrum::{init_direction, CovarianceSpectrum};

fn main() -> benign_lab::Result<()> {
    let (n, p) = (5, 12);
    for seed in 0..5 {
        let instance = ProblemInstance::new(
            CovarianceSpectrum::isotropic(p)?,
            ThetaStarPreset::RandomUnit(seed).build(p)?,
            n,
            FeatureDistribution::Gaussian,
            NoiseModel::new(0.5)?,
        )?;
        let ds = sample_dataset(&instance, seed)?;
        let w = init_direction(&ThetaStarPreset::RandomUnit(seed + 100).build(p)?)?;
        let closed = implicit_bias_estimate(&ds.x, &ds.y, &w)?.theta_hat;
        let reference = constrained_minimizer(&ds.x, &ds.y, &w, 4, seed);
        println!(
            "seed {seed}: relative gap {:.2e}, objective {:.8} vs {:.8}",
            (&closed - &reference).norm() / reference.norm(),
            objective(&closed, &w),
            objective(&reference, &w)
        );
    }
    Ok(())
}
