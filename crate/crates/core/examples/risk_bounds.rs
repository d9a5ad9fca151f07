//! Exact risk decomposition of one trial next to the upper and lower bound terms.

use benign_lab::harness::{run_trial, ExperimentConfig, WPolicy};
use benign_lab::spectrum::SpectrumPreset;

fn main() -> benign_lab::Result<()> {
    for policy in [WPolicy::Zero, WPolicy::GuessExact, WPolicy::GuessNoisy(0.3)] {
        let cfg = ExperimentConfig {
            n: 100,
            spectrum: SpectrumPreset::Spike { k: 2, eps: 0.001, p: 3000 },
            w_policy: policy.clone(),
            trials: 1,
            master_seed: 5,
            ..ExperimentConfig::default()
        };
        let r = run_trial(&cfg, 0)?;
        println!("w_policy = {policy}");
        println!(
            "  risk {:.5} = bias {:.5} + cross {:+.5} + noise {:.5}  (error {:.1e})",
            r.risk_exact, r.bias_term, r.cross_term, r.noise_term, r.decomposition_error
        );
        println!(
            "  upper terms: bias {:.4}, bias_weak {:.4}, variance {:.4}, xi {:.4}",
            r.bounds.bias, r.bounds.bias_weak, r.bounds.variance, r.bounds.xi
        );
        println!("  lower terms: bias {:.5}, variance {:.5}", r.lower.bias_lb, r.lower.variance_lb);
    }
    Ok(())
}
