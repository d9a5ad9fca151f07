//! Experiments described in TOML, resolved and run trial by trial.

use benign_lab::harness::{run_trial_resolved, trials_table, write_csv, ExperimentConfig};

const CONFIG: &str = r#"
n = 40
spectrum = "poly(1, 800)"
theta_star = "random_unit(3)"
sigma = 0.3
w_policy = "guess_noisy(0.2)"
trials = 4
master_seed = 11
"#;

fn main() -> benign_lab::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let rc = cfg.resolve()?;
    println!("p = {}, k = {}, s_k = {:.4}, ‖ψ‖ = {:.4}", rc.instance.p(), rc.k, rc.s_k, rc.psi.norm());
    let results = (0..cfg.trials as u64)
        .map(|t| run_trial_resolved(&rc, t))
        .collect::<benign_lab::Result<Vec<_>>>()?;
    write_csv(&trials_table(&results), std::io::stdout())?;

    match ExperimentConfig::from_toml("n = 40\nspectrum = \"isotropic(20)\"\nsigma = 1\ntrials = 1\n") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("p must exceed n"),
    }
    Ok(())
}
