//! A sweep over n written as CSV and as a log-log SVG chart.
//!
//! Output goes to the directory named by `BENIGN_LAB_OUT`, or `out/`.

use std::path::PathBuf;

use benign_lab::harness::{emit_csv, emit_plot, run_sweep, ExperimentConfig, PlotOptions, SweepAxis, SweepSpec, WPolicy, OUT_DIR_ENV};
use benign_lab::spectrum::SpectrumPreset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| "out".into());
    let spec = SweepSpec {
        axis: SweepAxis::N,
        values: vec![25.0, 50.0, 100.0, 200.0],
        base: ExperimentConfig {
            n: 25,
            spectrum: SpectrumPreset::Spike { k: 2, eps: 0.001, p: 2000 },
            w_policy: WPolicy::GuessExact,
            trials: 20,
            ..ExperimentConfig::default()
        },
    };
    let table = run_sweep(&spec)?;
    emit_csv(&table, &dir.join("sweep_n.csv"))?;
    emit_plot(
        &table,
        "n",
        &["risk_exact", "bias_term", "noise_term"],
        &dir.join("sweep_n.svg"),
        &PlotOptions {
            title: Some("guess_exact, spike(2, 0.001, 2000)".into()),
            ..PlotOptions::log_log()
        },
    )?;
    for (n, r) in table.column("n")?.iter().zip(table.column("risk_exact")?) {
        println!("n = {n:>4}: mean risk {r:.5}");
    }
    println!("wrote {}", dir.display());
    Ok(())
}
