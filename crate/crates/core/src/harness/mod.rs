//! Seeded experiments: configuration, trials, sweeps, tabular output and the
//! acceptance checks behind `verify`.

mod config;
mod plot;
mod sweep;
mod table;
pub mod tolerances;
mod trial;
pub mod verify;

pub use config::{ExperimentConfig, ResolvedConfig, WPolicy};
pub use plot::{emit_plot, render_plot, PlotOptions};
pub use sweep::{paired_policy_comparison, run_sweep, PairedComparison, SweepAxis, SweepFailure, SweepSpec};
pub use table::{emit_csv, read_csv, write_csv, Cell, Table};
pub use tolerances::Tolerances;
pub use trial::{run_trial, run_trial_resolved, trials_table, TrialFlags, TrialResult, NUMERIC_FIELDS};

/// Scientific notation with 17 significant digits; parses back to the same bits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Output directory for CLI artifacts when `--out` is not given.
pub const OUT_DIR_ENV: &str = "BENIGN_LAB_OUT";
