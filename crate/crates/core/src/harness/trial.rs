use serde::Serialize;

use crate::datagen::{sample_dataset, trial_seed};
use crate::error::{Error, Result};
use crate::estimator::{implicit_bias_from_svd, interpolation_residual, svd_factors};
use crate::risk::{bound_terms, empirical_risk_report, excess_risk, lower_bound_terms, BoundTerms, LowerBoundReport};

use super::config::{ExperimentConfig, ResolvedConfig};
use super::table::{Cell, Table};

/// Column names of [`TrialResult::numeric_fields`].
pub const NUMERIC_FIELDS: [&str; 18] = [
    "risk_exact",
    "risk_ols",
    "alpha_star",
    "trace_inv",
    "mu1",
    "mun",
    "bias_term",
    "cross_term",
    "noise_term",
    "decomposition_error",
    "interpolation_residual",
    "bias_ub",
    "bias_weak_ub",
    "variance_ub",
    "xi_ub",
    "bias_lb",
    "variance_lb",
    "delta",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialFlags {
    pub anticoncentration: bool,
    pub p_margin: bool,
    pub n_margin: bool,
}

/// Everything measured on one sampled dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: u64,
    pub seed: u64,
    pub risk_exact: f64,
    pub risk_ols: f64,
    pub alpha_star: f64,
    /// `Tr((XX⊤)⁻¹)`.
    pub trace_inv: f64,
    /// Largest eigenvalue of `XX⊤`.
    pub mu1: f64,
    /// Smallest eigenvalue of `XX⊤`.
    pub mun: f64,
    pub bias_term: f64,
    pub cross_term: f64,
    pub noise_term: f64,
    pub decomposition_error: f64,
    pub interpolation_residual: f64,
    pub bounds: BoundTerms,
    pub lower: LowerBoundReport,
    pub flags: TrialFlags,
}

impl TrialResult {
    /// Numeric fields with their stable column names.
    pub fn numeric_fields(&self) -> [(&'static str, f64); 18] {
        let values = [
            self.risk_exact,
            self.risk_ols,
            self.alpha_star,
            self.trace_inv,
            self.mu1,
            self.mun,
            self.bias_term,
            self.cross_term,
            self.noise_term,
            self.decomposition_error,
            self.interpolation_residual,
            self.bounds.bias,
            self.bounds.bias_weak,
            self.bounds.variance,
            self.bounds.xi,
            self.lower.bias_lb,
            self.lower.variance_lb,
            self.bounds.delta,
        ];
        std::array::from_fn(|i| (NUMERIC_FIELDS[i], values[i]))
    }

    pub fn flag_fields(&self) -> [(&'static str, bool); 3] {
        [
            ("anticoncentration", self.flags.anticoncentration),
            ("p_margin", self.flags.p_margin),
            ("n_margin", self.flags.n_margin),
        ]
    }

    fn check_finite(&self) -> Result<()> {
        match self.numeric_fields().iter().find(|(_, v)| !v.is_finite()) {
            Some((name, v)) => Err(Error::param(format!("non-finite {name} = {v}"))),
            None => Ok(()),
        }
    }
}

/// Trial `index` of `config`; a pure function of the pair.
pub fn run_trial(config: &ExperimentConfig, index: u64) -> Result<TrialResult> {
    run_trial_resolved(&config.resolve()?, index)
}

pub fn run_trial_resolved(rc: &ResolvedConfig, index: u64) -> Result<TrialResult> {
    let wrap = |e: Error| Error::Trial {
        trial: index,
        source: Box::new(e),
    };
    trial_inner(rc, index).map_err(wrap)
}

fn trial_inner(rc: &ResolvedConfig, index: u64) -> Result<TrialResult> {
    let cfg = &rc.config;
    let inst = &rc.instance;
    let seed = trial_seed(cfg.master_seed, index);
    let ds = sample_dataset(inst, seed)?;
    let svd = svd_factors(&ds.x)?;
    let sol = implicit_bias_from_svd(&svd, &ds.y, &rc.w)?;
    let report = empirical_risk_report(&sol, &inst.theta_star, &inst.spectrum, &ds, &svd)?;
    let d = svd.singular_values();
    let flags = cfg.margins.flags(inst.n, inst.p(), rc.k, rc.s_k);
    let result = TrialResult {
        trial: index,
        seed,
        risk_exact: report.risk_exact,
        risk_ols: excess_risk(&sol.theta_ols, &inst.theta_star, &inst.spectrum)?,
        alpha_star: sol.alpha_star,
        trace_inv: svd.trace_gram_inverse(),
        mu1: d[0] * d[0],
        mun: d[d.len() - 1] * d[d.len() - 1],
        bias_term: report.bias_term,
        cross_term: report.cross_term,
        noise_term: report.noise_term,
        decomposition_error: report.decomposition_error(),
        interpolation_residual: interpolation_residual(&ds.x, &ds.y, &sol.theta_hat),
        bounds: bound_terms(&inst.spectrum, inst.n, rc.k, &inst.theta_star, &rc.psi, cfg.delta, cfg.c)?,
        lower: lower_bound_terms(&svd, &inst.spectrum, &inst.theta_star, inst.noise.sigma)?,
        flags: TrialFlags {
            anticoncentration: inst.feature_dist.satisfies_anticoncentration(),
            p_margin: flags.p_margin,
            n_margin: flags.n_margin,
        },
    };
    result.check_finite()?;
    Ok(result)
}

/// One row per trial: `trial, seed`, the numeric fields, then the flags as 0/1.
pub fn trials_table(results: &[TrialResult]) -> Table {
    let mut columns = vec!["trial".to_string(), "seed".to_string()];
    columns.extend(NUMERIC_FIELDS.iter().map(|s| s.to_string()));
    columns.extend(["anticoncentration", "p_margin", "n_margin"].map(String::from));
    let mut table = Table::new(columns);
    for r in results {
        let mut row: Vec<Cell> = vec![r.trial.into(), r.seed.into()];
        row.extend(r.numeric_fields().iter().map(|(_, v)| Cell::from(*v)));
        row.extend(r.flag_fields().iter().map(|(_, v)| Cell::from(*v)));
        table.push(row).expect("row width matches header");
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::WPolicy;
    use crate::spectrum::SpectrumPreset;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n: 20,
            spectrum: SpectrumPreset::Spike { k: 2, eps: 0.01, p: 300 },
            trials: 4,
            master_seed: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let cfg = small();
        let a = run_trial(&cfg, 2).unwrap();
        assert_eq!(a, run_trial(&cfg, 2).unwrap());
        assert_ne!(a, run_trial(&cfg, 3).unwrap());
    }

    #[test]
    fn zero_policy_is_ols() {
        let r = run_trial(&small(), 0).unwrap();
        assert_eq!(r.risk_exact, r.risk_ols);
        assert!(r.decomposition_error < 1e-9);
        assert!(r.interpolation_residual < 1e-10);
    }

    #[test]
    fn noiseless_risk_is_projected_bias() {
        let cfg = ExperimentConfig {
            sigma: 0.0,
            ..small()
        };
        let r = run_trial(&cfg, 1).unwrap();
        assert!((r.risk_exact - r.lower.bias_lb).abs() <= 1e-12 * r.lower.bias_lb);
        assert_eq!(r.noise_term, 0.0);
    }

    #[test]
    fn guess_policy_changes_bias_only() {
        let zero = run_trial(&small(), 0).unwrap();
        let guess = run_trial(
            &ExperimentConfig {
                w_policy: WPolicy::GuessExact,
                ..small()
            },
            0,
        )
        .unwrap();
        assert_eq!(zero.noise_term, guess.noise_term);
        assert_eq!(zero.risk_ols, guess.risk_ols);
        assert!(guess.alpha_star > zero.alpha_star);
    }

    #[test]
    fn table_has_one_row_per_trial() {
        let cfg = small();
        let rs: Vec<_> = (0..3).map(|i| run_trial(&cfg, i).unwrap()).collect();
        let t = trials_table(&rs);
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.column("risk_exact").unwrap()[1], rs[1].risk_exact);
    }
}
