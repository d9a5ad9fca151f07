use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_dataset, trial_seed};
use crate::error::{Error, Result};
use crate::estimator::{implicit_bias_from_svd, svd_factors};
use crate::risk::empirical_risk_report;
use crate::spectrum::SpectrumPreset;
use crate::stats::Summary;

use super::config::{ExperimentConfig, WPolicy};
use super::table::{Cell, Table};
use super::trial::{run_trial_resolved, TrialResult, NUMERIC_FIELDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    N,
    P,
    Eps,
    K,
    B,
    Sigma,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::N => "n",
            SweepAxis::P => "p",
            SweepAxis::Eps => "eps",
            SweepAxis::K => "k",
            SweepAxis::B => "b",
            SweepAxis::Sigma => "sigma",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "n" => SweepAxis::N,
            "p" => SweepAxis::P,
            "eps" => SweepAxis::Eps,
            "k" => SweepAxis::K,
            "b" => SweepAxis::B,
            "sigma" => SweepAxis::Sigma,
            other => return Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub base: ExperimentConfig,
}

fn as_count(axis: SweepAxis, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("sweep value {v} for axis {axis} must be a nonnegative integer")))
    }
}

impl SweepSpec {
    /// `base` with the swept field set to `value`.
    pub fn config_at(&self, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = self.base.clone();
        let spike_only = || Error::Config(format!("axis {} needs a spike spectrum", self.axis));
        match self.axis {
            SweepAxis::N => cfg.n = as_count(self.axis, value)?,
            SweepAxis::P => cfg.spectrum = cfg.spectrum.with_dim(as_count(self.axis, value)?)?,
            SweepAxis::Eps => match cfg.spectrum {
                SpectrumPreset::Spike { k, p, .. } => cfg.spectrum = SpectrumPreset::Spike { k, eps: value, p },
                _ => return Err(spike_only()),
            },
            SweepAxis::K => match cfg.spectrum {
                SpectrumPreset::Spike { eps, p, .. } => {
                    cfg.spectrum = SpectrumPreset::Spike { k: as_count(self.axis, value)?, eps, p }
                }
                _ => return Err(spike_only()),
            },
            SweepAxis::B => cfg.margins.b = value,
            SweepAxis::Sigma => cfg.sigma = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        let increasing = self.values.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(Error::Config("sweep values must be strictly monotone".into()));
        }
        for &v in &self.values {
            self.config_at(v)?;
        }
        Ok(())
    }

    /// Header of the aggregated table.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec![self.axis.to_string(), "n".into(), "p".into(), "k".into(), "trials".into()];
        for name in NUMERIC_FIELDS {
            cols.push(name.to_string());
            cols.push(format!("{name}_se"));
        }
        cols.extend(["anticoncentration", "p_margin", "n_margin"].map(String::from));
        cols
    }
}

/// A sweep stopped by a failing trial, with the rows completed before it.
#[derive(Debug)]
pub struct SweepFailure {
    pub partial: Table,
    pub value: f64,
    pub error: Error,
}

impl fmt::Display for SweepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sweep failed at value {} after {} complete row(s): {}",
            self.value,
            self.partial.rows.len(),
            self.error
        )
    }
}

impl std::error::Error for SweepFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn aggregate_row(axis_value: f64, n: usize, p: usize, k: usize, results: &[TrialResult]) -> Vec<Cell> {
    let mut row: Vec<Cell> = vec![axis_value.into(), (n as u64).into(), (p as u64).into(), (k as u64).into(), (results.len() as u64).into()];
    for (i, _) in NUMERIC_FIELDS.iter().enumerate() {
        let values: Vec<f64> = results.iter().map(|r| r.numeric_fields()[i].1).collect();
        let s = Summary::from_slice(&values);
        let se = if values.len() > 1 { s.std_error } else { 0.0 };
        row.push(s.mean.into());
        row.push(se.into());
    }
    for j in 0..3 {
        row.push(results.iter().all(|r| r.flag_fields()[j].1).into());
    }
    row
}

/// Runs every axis value in order; trials within a value run in parallel and
/// are aggregated in trial order.
pub fn run_sweep(spec: &SweepSpec) -> std::result::Result<Table, SweepFailure> {
    let mut table = Table::new(spec.columns());
    let fail = |table: &Table, value: f64, error: Error| SweepFailure {
        partial: table.clone(),
        value,
        error,
    };
    if let Err(e) = spec.validate() {
        return Err(fail(&table, spec.values.first().copied().unwrap_or(f64::NAN), e));
    }
    for &value in &spec.values {
        let resolved = spec.config_at(value).and_then(|c| c.resolve());
        let rc = match resolved {
            Ok(rc) => rc,
            Err(e) => return Err(fail(&table, value, e)),
        };
        let results: Result<Vec<TrialResult>> = (0..rc.config.trials as u64)
            .into_par_iter()
            .map(|t| run_trial_resolved(&rc, t))
            .collect();
        match results {
            Ok(results) => {
                log::info!("{} = {value}: {} trials", spec.axis, results.len());
                let row = aggregate_row(value, rc.instance.n, rc.instance.p(), rc.k, &results);
                table.push(row).expect("row width matches header");
            }
            Err(e) => return Err(fail(&table, value, e)),
        }
    }
    Ok(table)
}

/// Per-trial risks of the configured policy against another policy on the
/// same datasets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedComparison {
    pub base_policy: String,
    pub other_policy: String,
    pub base_risk: Vec<f64>,
    pub other_risk: Vec<f64>,
    pub base_bias: Vec<f64>,
    pub other_bias: Vec<f64>,
    pub base_cross: Vec<f64>,
    pub other_cross: Vec<f64>,
    pub base_noise: Vec<f64>,
    pub other_noise: Vec<f64>,
}

impl PairedComparison {
    fn diff(a: &[f64], b: &[f64]) -> Summary {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        Summary::from_slice(&d)
    }

    /// Summary of `other − base` risk per trial.
    pub fn risk_difference(&self) -> Summary {
        Self::diff(&self.base_risk, &self.other_risk)
    }

    pub fn bias_difference(&self) -> Summary {
        Self::diff(&self.base_bias, &self.other_bias)
    }

    pub fn cross_difference(&self) -> Summary {
        Self::diff(&self.base_cross, &self.other_cross)
    }

    /// Whether both policies saw bitwise identical noise terms in every trial.
    pub fn noise_identical(&self) -> bool {
        self.base_noise
            .iter()
            .zip(&self.other_noise)
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Runs `config.trials` datasets once each and evaluates both `config.w_policy`
/// and `other` on the same factorization.
pub fn paired_policy_comparison(config: &ExperimentConfig, other: &WPolicy) -> Result<PairedComparison> {
    let base = config.resolve()?;
    let alt = ExperimentConfig {
        w_policy: other.clone(),
        ..config.clone()
    }
    .resolve()?;
    let inst = &base.instance;
    let rows: Vec<[f64; 8]> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| -> Result<[f64; 8]> {
            let inner = || -> Result<[f64; 8]> {
                let ds = sample_dataset(inst, trial_seed(config.master_seed, t))?;
                let svd = svd_factors(&ds.x)?;
                let a = implicit_bias_from_svd(&svd, &ds.y, &base.w)?;
                let b = implicit_bias_from_svd(&svd, &ds.y, &alt.w)?;
                let ra = empirical_risk_report(&a, &inst.theta_star, &inst.spectrum, &ds, &svd)?;
                let rb = empirical_risk_report(&b, &inst.theta_star, &inst.spectrum, &ds, &svd)?;
                Ok([
                    ra.risk_exact,
                    rb.risk_exact,
                    ra.bias_term,
                    rb.bias_term,
                    ra.cross_term,
                    rb.cross_term,
                    ra.noise_term,
                    rb.noise_term,
                ])
            };
            inner().map_err(|e| Error::Trial {
                trial: t,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    Ok(PairedComparison {
        base_policy: config.w_policy.to_string(),
        other_policy: other.to_string(),
        base_risk: col(0),
        other_risk: col(1),
        base_bias: col(2),
        other_bias: col(3),
        base_cross: col(4),
        other_cross: col(5),
        base_noise: col(6),
        other_noise: col(7),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::trial::run_trial;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            n: 10,
            spectrum: SpectrumPreset::Spike { k: 1, eps: 0.01, p: 120 },
            trials: 6,
            master_seed: 1,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_value_single_trial_is_the_trial() {
        let spec = SweepSpec {
            axis: SweepAxis::Sigma,
            values: vec![0.5],
            base: ExperimentConfig { trials: 1, ..base() },
        };
        let t = run_sweep(&spec).unwrap();
        assert_eq!(t.rows.len(), 1);
        let r = run_trial(&spec.base, 0).unwrap();
        assert_eq!(t.column("risk_exact").unwrap()[0], r.risk_exact);
        assert_eq!(t.column("risk_exact_se").unwrap()[0], 0.0);
        assert_eq!(t.column("mun").unwrap()[0], r.mun);
    }

    #[test]
    fn axis_values_are_applied_in_order() {
        let spec = SweepSpec {
            axis: SweepAxis::P,
            values: vec![60.0, 120.0, 240.0],
            base: base(),
        };
        let t = run_sweep(&spec).unwrap();
        assert_eq!(t.column("p").unwrap(), vec![60.0, 120.0, 240.0]);
        assert_eq!(t.columns[0], "p");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            SweepSpec { axis: SweepAxis::N, values: vec![10.0, 10.0], base: base() },
            SweepSpec { axis: SweepAxis::N, values: vec![10.0, 200.0], base: base() },
            SweepSpec { axis: SweepAxis::N, values: vec![], base: base() },
            SweepSpec { axis: SweepAxis::N, values: vec![2.5], base: base() },
            SweepSpec {
                axis: SweepAxis::Eps,
                values: vec![0.1],
                base: ExperimentConfig { spectrum: SpectrumPreset::Isotropic { p: 100 }, ..base() },
            },
        ];
        for spec in bad {
            let err = run_sweep(&spec).unwrap_err();
            assert!(matches!(err.error, Error::Config(_)), "{err}");
            assert!(err.partial.rows.is_empty());
        }
    }

    #[test]
    fn failure_keeps_completed_rows() {
        // b = 1000 leaves no critical index, so the second value cannot resolve
        let spec = SweepSpec {
            axis: SweepAxis::B,
            values: vec![1.0, 1000.0],
            base: base(),
        };
        let err = run_sweep(&spec).unwrap_err();
        assert_eq!(err.partial.rows.len(), 1);
        assert_eq!(err.value, 1000.0);
    }

    #[test]
    fn paired_comparison_shares_noise() {
        let cmp = paired_policy_comparison(&base(), &WPolicy::GuessExact).unwrap();
        assert!(cmp.noise_identical());
        assert_eq!(cmp.base_risk.len(), 6);
        let zero = run_trial(&base(), 4).unwrap();
        assert_eq!(cmp.base_risk[4], zero.risk_exact);
    }
}
