use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use benign_lab::datagen::{sample_dataset, trial_seed, ThetaStarPreset};
use benign_lab::estimator::{
    balanced_init, flow_limit_coefficient, implicit_bias_estimate, train_gradient_descent, GdOptions,
};
use benign_lab::harness::verify::{self, CRITERIA};
use benign_lab::harness::{
    emit_csv, emit_plot, run_sweep, run_trial_resolved, trials_table, ExperimentConfig, PlotOptions, SweepAxis,
    SweepSpec, Tolerances, TrialResult, WPolicy, NUMERIC_FIELDS, OUT_DIR_ENV,
};
use benign_lab::spectrum::{init_direction, SpectrumPreset};
use benign_lab::{Error, Summary};

#[derive(Parser)]
#[command(name = "benign-lab", version, about = "Implicit-bias interpolation experiments")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trials of one configuration and summarize them.
    Estimate(EstimateArgs),
    /// Train a balanced two-layer network by gradient descent and compare with the closed form.
    Flow(FlowArgs),
    /// Run a configuration across values of one parameter.
    Sweep(SweepArgs),
    /// Run the acceptance checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// e.g. `spike(2, 0.001, 5000)`, `poly(1, 2000)`.
    #[arg(long)]
    spectrum: Option<SpectrumPreset>,
    #[arg(long)]
    theta_star: Option<ThetaStarPreset>,
    #[arg(long)]
    sigma: Option<f64>,
    /// zero, guess_exact, guess_noisy(s) or explicit([..]).
    #[arg(long)]
    w_policy: Option<WPolicy>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
}

impl ConfigArgs {
    fn build(&self) -> benign_lab::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = &self.spectrum {
            cfg.spectrum = v.clone();
        }
        if let Some(v) = &self.theta_star {
            cfg.theta_star = v.clone();
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = &self.w_policy {
            cfg.w_policy = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory for `trials.csv`; falls back to the output-dir variable.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    p: usize,
    #[arg(long, default_value_t = 30)]
    m: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2e-4)]
    step_scale: f64,
    #[arg(long, default_value_t = 2_000_000)]
    max_iters: usize,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// n, p, eps, k, b or sigma.
    #[arg(long)]
    axis: SweepAxis,
    /// Comma-separated, strictly monotone.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Output directory; falls back to the output-dir variable, then `out`.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
    /// Also write `sweep.svg` with these columns against the axis.
    #[arg(long, value_delimiter = ',')]
    plot: Vec<String>,
    #[arg(long)]
    loglog: bool,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Tolerance table; the built-in one when absent.
    #[arg(long)]
    tolerances: Option<PathBuf>,
    /// Comma-separated check ids.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    #[arg(long, default_value_t = verify::DEFAULT_SEED)]
    seed: u64,
    /// Trial count for the Monte Carlo checks (5, 6, 7, 8).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    dry_run: bool,
}

enum Failure {
    Lib(Error),
    Verify(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::RankDeficient { .. } | Error::Diverged { .. } => 3,
        Error::Io(_) | Error::Csv(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Flow(a) => flow(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => run_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Verify(n)) => {
            eprintln!("{n} check(s) failed");
            ExitCode::from(4)
        }
    }
}

fn estimate(a: EstimateArgs) -> Result<(), Failure> {
    let cfg = a.config.build()?;
    let rc = cfg.resolve()?;
    if a.dry_run {
        println!("# p = {}, k = {}, s_k = {:.6e}", rc.instance.p(), rc.k, rc.s_k);
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let results: Vec<TrialResult> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_trial_resolved(&rc, t))
        .collect::<benign_lab::Result<_>>()?;
    if let Some(dir) = &a.out {
        emit_csv(&trials_table(&results), &dir.join("trials.csv"))?;
    }
    let fields: Vec<(&str, Summary)> = NUMERIC_FIELDS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let v: Vec<f64> = results.iter().map(|r| r.numeric_fields()[i].1).collect();
            (*name, Summary::from_slice(&v))
        })
        .collect();
    if a.json {
        let map: serde_json::Map<String, serde_json::Value> = fields
            .iter()
            .map(|(name, s)| ((*name).to_string(), serde_json::to_value(s).expect("summary serializes")))
            .collect();
        println!("{}", serde_json::to_string_pretty(&map).expect("map serializes"));
    } else {
        println!("n = {}, p = {}, k = {}, trials = {}", rc.instance.n, rc.instance.p(), rc.k, results.len());
        for (name, s) in &fields {
            println!("{name:>24} {:>14.6e} ± {:.2e}", s.mean, s.std_error);
        }
    }
    Ok(())
}

fn flow(a: FlowArgs) -> Result<(), Failure> {
    let cfg = ExperimentConfig {
        n: a.n,
        spectrum: SpectrumPreset::Isotropic { p: a.p },
        theta_star: ThetaStarPreset::RandomUnit(a.seed ^ 1),
        sigma: a.sigma,
        trials: 1,
        master_seed: a.seed,
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    if a.m == 0 {
        return Err(Error::Config("--m must be at least 1".into()).into());
    }
    if a.dry_run {
        println!("n = {}, p = {}, m = {}, step_scale = {:e}, max_iters = {}", a.n, a.p, a.m, a.step_scale, a.max_iters);
        return Ok(());
    }
    let inst = cfg.instance()?;
    let ds = sample_dataset(&inst, trial_seed(a.seed, 0))?;
    let theta0 = ThetaStarPreset::RandomUnit(a.seed ^ 2).build(a.p)?;
    let net = balanced_init(&theta0, a.m, a.seed ^ 3)?;
    let opts = GdOptions {
        step_scale: a.step_scale,
        max_iters: a.max_iters,
        ..GdOptions::default()
    };
    let (trained, summary) = train_gradient_descent(&net, &ds.x, &ds.y, &opts)?;
    let theta = trained.theta();
    println!(
        "iterations = {}, converged = {}, step = {:.3e}, residual = {:.3e}, max balancedness = {:.3e}",
        summary.iterations, summary.converged, summary.step, summary.final_residual, summary.max_balancedness
    );
    for (label, w) in [
        ("w = θ(0)/√‖θ(0)‖", init_direction(&theta0)?),
        ("w = 1.5·θ(0)/√‖θ(0)‖", flow_limit_coefficient(&theta0)?),
    ] {
        let target = implicit_bias_estimate(&ds.x, &ds.y, &w)?.theta_hat;
        println!("{label:>24}: ‖θ_GD − θ̂‖/‖θ̂‖ = {:.3e}", (&theta - &target).norm() / target.norm());
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let spec = SweepSpec {
        axis: a.axis,
        values: a.values.clone(),
        base: a.config.build()?,
    };
    spec.validate()?;
    if a.dry_run {
        for &v in &spec.values {
            let rc = spec.config_at(v)?.resolve()?;
            println!(
                "{} = {v}: n = {}, p = {}, k = {}, trials = {}",
                spec.axis,
                rc.instance.n,
                rc.instance.p(),
                rc.k,
                rc.config.trials
            );
        }
        return Ok(());
    }
    let csv_path = a.out.join("sweep.csv");
    let table = match run_sweep(&spec) {
        Ok(t) => t,
        Err(f) => {
            emit_csv(&f.partial, &a.out.join("sweep.partial.csv"))?;
            eprintln!(
                "sweep stopped at {} = {}; {} completed row(s) written to {}",
                spec.axis,
                f.value,
                f.partial.rows.len(),
                a.out.join("sweep.partial.csv").display()
            );
            return Err(f.error.into());
        }
    };
    emit_csv(&table, &csv_path)?;
    println!("{}", csv_path.display());
    if !a.plot.is_empty() {
        let cols: Vec<&str> = a.plot.iter().map(String::as_str).collect();
        let opts = PlotOptions {
            log_x: a.loglog,
            log_y: a.loglog,
            title: Some(format!("sweep over {}", spec.axis)),
        };
        let svg = a.out.join("sweep.svg");
        emit_plot(&table, &spec.axis.to_string(), &cols, &svg, &opts)?;
        println!("{}", svg.display());
    }
    Ok(())
}

fn load_tolerances(path: Option<&Path>) -> benign_lab::Result<Tolerances> {
    match path {
        Some(p) => Tolerances::load(p),
        None => Ok(Tolerances::builtin()),
    }
}


fn run_verify(a: VerifyArgs) -> Result<(), Failure> {
    let mut tol = load_tolerances(a.tolerances.as_deref())?;
    if let Some(n) = a.trials {
        if n < 2 {
            return Err(Error::Config("--trials must be at least 2".into()).into());
        }
        tol.trace.trials = n;
        tol.alpha_concentration.trials = n;
        tol.decomposition.trials = n;
        tol.trend.trials = n;
    }
    let ids: Vec<&str> = if a.only.is_empty() {
        CRITERIA.iter().map(|(id, _)| *id).collect()
    } else {
        a.only.iter().map(String::as_str).collect()
    };
    for id in &ids {
        if !CRITERIA.iter().any(|(c, _)| c == id) {
            return Err(Error::Config(format!("unknown check `{id}`")).into());
        }
    }
    if a.dry_run {
        for id in &ids {
            let name = CRITERIA.iter().find(|(c, _)| c == id).map(|(_, n)| *n).unwrap_or_default();
            println!("{id:>3} {name}");
        }
        return Ok(());
    }
    let outcomes = verify::run_many(&ids, &tol, a.seed, |o| println!("{o}"))?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        Err(Failure::Verify(failed))
    } else {
        Ok(())
    }
}
