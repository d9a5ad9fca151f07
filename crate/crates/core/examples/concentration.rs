//! Monte Carlo concentration of Gram-matrix quantities and of alpha*.

use nalgebra::DVector;

use benign_lab::datagen::{FeatureDistribution, NoiseModel, ProblemInstance};
use benign_lab::spectral::{alpha_concentration_stat, eigen_range_stat, smallest_eig_tail_prob, trace_inverse_stat, Margins};
use benign_lab::spectrum::CovarianceSpectrum;

fn instance(spec: CovarianceSpectrum, n: usize, sigma: f64) -> benign_lab::Result<ProblemInstance> {
    let p = spec.len();
    ProblemInstance::new(spec, DVector::zeros(p), n, FeatureDistribution::Gaussian, NoiseModel::new(sigma)?)
}

fn main() -> benign_lab::Result<()> {
    let margins = Margins::default();
    let iso = instance(CovarianceSpectrum::spike(0, 0.001, 2000)?, 100, 1.0)?;
    let tr = trace_inverse_stat(&iso, 0, 30, 1, &margins)?;
    println!("Tr((XX⊤)⁻¹): observed {:.3} predicted {:.3} ({:+.3})", tr.observed, tr.predicted, tr.relative_deviation);

    let range = eigen_range_stat(&iso, &(0..2000).collect::<Vec<_>>(), 30, 2)?;
    println!("μ₁/s = {:.3}, μ_n/s = {:.3}", range.top.observed / range.top.predicted, range.bottom.observed / range.bottom.predicted);

    let table = smallest_eig_tail_prob(&iso, &(0..2000).collect::<Vec<_>>(), &[0.3, 0.5, 0.7], 30, 3, &margins)?;
    print!("{table}");

    let spike = instance(CovarianceSpectrum::spike(2, 0.001, 4000)?, 200, 1.0)?;
    let (alpha, flags) = alpha_concentration_stat(&spike, &DVector::zeros(4000), 30, 4, &margins)?;
    println!("α*: observed {:.4} predicted {:.4} ({flags:?})", alpha.observed, alpha.predicted);
    Ok(())
}
