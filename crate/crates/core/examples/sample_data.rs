//! Seeded data generation: the same seed reproduces the same dataset.

use benign_lab::datagen::{rank_certificate, sample_dataset, trial_seed, FeatureDistribution, NoiseModel, ProblemInstance, ThetaStarPreset};
use benign_lab::spectrum::CovarianceSpectrum;

fn main() -> benign_lab::Result<()> {
    let spectrum = CovarianceSpectrum::spike(2, 0.01, 40)?;
    let theta_star = ThetaStarPreset::E1.build(40)?;
    let instance = ProblemInstance::new(spectrum, theta_star, 8, FeatureDistribution::Uniform, NoiseModel::new(0.5)?)?;

    let seed = trial_seed(7, 0);
    let ds = sample_dataset(&instance, seed)?;
    assert_eq!(ds, sample_dataset(&instance, seed)?);
    println!("{:?}", rank_certificate(&ds.x));

    let mut out = Vec::new();
    ds.write_csv(&mut out)?;
    let text = String::from_utf8(out).expect("utf-8");
    for line in text.lines().take(3) {
        println!("{}…", &line[..line.len().min(100)]);
    }
    Ok(())
}
