//! Gram-matrix diagnostics: head/tail split, trace-inverse and extreme
//! eigenvalue concentration, small-ball tail frequencies and the noise
//! projection.
//!
//! Monte Carlo statistics draw trial `t` from `trial_seed(master_seed, t)`
//! and aggregate in trial order, so results do not depend on the thread pool.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::datagen::{sample_dataset, trial_seed, whitened_columns, Dataset, ProblemInstance};
use crate::error::{Error, Result};
use crate::estimator::{alpha_star, implicit_bias_from_svd, svd_factors, SvdFactors};
use crate::linalg;
use crate::spectrum::{psi_scale, CovarianceSpectrum};
use crate::stats::Summary;

/// `A = XX⊤` and its split `A = H + T` into the first `k` whitened
/// directions and the rest.
#[derive(Debug, Clone)]
pub struct GramDecomposition {
    pub a: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

impl GramDecomposition {
    /// `‖A − H − T‖_F / ‖A‖_F`.
    pub fn additivity_error(&self) -> f64 {
        linalg::rel_frobenius(&(&self.h + &self.t), &self.a)
    }
}

pub fn gram_head_tail(ds: &Dataset, spec: &CovarianceSpectrum, k: usize) -> Result<GramDecomposition> {
    let p = ds.p();
    if k >= p {
        return Err(Error::IndexOutOfRange { index: k, len: p });
    }
    let z = whitened_columns(ds, spec)?;
    let n = ds.n();
    let mut h = DMatrix::zeros(n, n);
    let mut t = DMatrix::zeros(n, n);
    for (i, (zi, &l)) in z.iter().zip(spec.lambdas()).enumerate() {
        let target = if i < k { &mut h } else { &mut t };
        target.ger(l, zi, zi, 1.0);
    }
    Ok(GramDecomposition {
        a: &ds.x * ds.x.transpose(),
        h,
        t,
    })
}

/// Observed value of a random quantity against its predicted level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationStat {
    /// Mean over trials.
    pub observed: f64,
    pub predicted: f64,
    /// `(observed − predicted) / predicted`.
    pub relative_deviation: f64,
    pub n_trials: usize,
    /// Standard error of `observed`.
    pub std_error: f64,
    /// Per-trial values in trial order.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl ConcentrationStat {
    pub fn from_samples(samples: Vec<f64>, predicted: f64) -> Self {
        let s = Summary::from_slice(&samples);
        Self {
            observed: s.mean,
            predicted,
            relative_deviation: relative(s.mean, predicted),
            n_trials: samples.len(),
            std_error: if samples.len() > 1 { s.std_error } else { 0.0 },
            samples,
        }
    }

    /// CSV with columns `trial, observed, predicted, deviation`, one row per
    /// trial and a final `mean` row.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        use crate::harness::fmt_real;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["trial", "observed", "predicted", "deviation"])?;
        for (t, v) in self.samples.iter().enumerate() {
            out.write_record([
                t.to_string(),
                fmt_real(*v),
                fmt_real(self.predicted),
                fmt_real(relative(*v, self.predicted)),
            ])?;
        }
        out.write_record([
            "mean".to_string(),
            fmt_real(self.observed),
            fmt_real(self.predicted),
            fmt_real(self.relative_deviation),
        ])?;
        out.flush()?;
        Ok(())
    }
}

fn relative(observed: f64, predicted: f64) -> f64 {
    if predicted != 0.0 {
        (observed - predicted) / predicted
    } else {
        observed
    }
}

/// Hypothesis margins `p ≥ p_multiple·(n + k)` and `n ≥ n_multiple·max{k, s_k}`,
/// and the constant `b` of the critical index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Margins {
    pub p_multiple: f64,
    pub n_multiple: f64,
    pub b: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            p_multiple: 4.0,
            n_multiple: 4.0,
            b: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MarginFlags {
    pub p_margin: bool,
    pub n_margin: bool,
}

impl Margins {
    pub fn flags(&self, n: usize, p: usize, k: usize, s_k: f64) -> MarginFlags {
        MarginFlags {
            p_margin: p as f64 >= self.p_multiple * (n + k) as f64,
            n_margin: n as f64 >= self.n_multiple * (k as f64).max(s_k),
        }
    }
}

fn map_trials<T, F>(instance: &ProblemInstance, trials: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Dataset) -> Result<T> + Sync,
{
    if trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let ds = sample_dataset(instance, trial_seed(master_seed, t))?;
            f(&ds).map_err(|e| Error::Trial {
                trial: t,
                source: Box::new(e),
            })
        })
        .collect()
}

/// `Tr((XX⊤)⁻¹)` from the singular values of `X`.
pub fn trace_gram_inverse(x: &DMatrix<f64>) -> f64 {
    linalg::singular_values(x).iter().rev().map(|s| 1.0 / (s * s)).sum()
}

/// Mean of `Tr((XX⊤)⁻¹)` against `n / s_k`. Refuses instances with
/// `p < margins.p_multiple·(n + k)`.
pub fn trace_inverse_stat(
    instance: &ProblemInstance,
    k: usize,
    trials: usize,
    master_seed: u64,
    margins: &Margins,
) -> Result<ConcentrationStat> {
    let (n, p) = (instance.n, instance.p());
    let s_k = instance.spectrum.tail_sum(k)?;
    if !margins.flags(n, p, k, s_k).p_margin {
        return Err(Error::TailTooThin {
            p,
            multiple: margins.p_multiple,
            required: margins.p_multiple * (n + k) as f64,
        });
    }
    let samples = map_trials(instance, trials, master_seed, |ds| Ok(trace_gram_inverse(&ds.x)))?;
    Ok(ConcentrationStat::from_samples(samples, n as f64 / s_k))
}

/// Extreme eigenvalues `μ₁` and `μ_n` of `X_S X_S⊤`, both against `s(S)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenRangeStat {
    pub top: ConcentrationStat,
    pub bottom: ConcentrationStat,
    /// Smallest `μ_n` seen in any trial.
    pub min_bottom: f64,
}

fn columns(x: &DMatrix<f64>, set: &[usize]) -> DMatrix<f64> {
    x.select_columns(set)
}

fn subset(spec: &CovarianceSpectrum, set: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut idx = set.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if let Some(&last) = idx.last() {
        if last >= spec.len() {
            return Err(Error::IndexOutOfRange { index: last, len: spec.len() });
        }
    }
    if idx.len() < n {
        return Err(Error::param(format!(
            "index set has {} columns; at least n = {n} are needed for a nonzero smallest eigenvalue",
            idx.len()
        )));
    }
    Ok(idx)
}

/// Eigenvalues of `X_S X_S⊤` in descending order.
pub fn subset_gram_eigenvalues(x: &DMatrix<f64>, set: &[usize]) -> Vec<f64> {
    linalg::singular_values(&columns(x, set)).iter().map(|s| s * s).collect()
}

pub fn eigen_range_stat(
    instance: &ProblemInstance,
    set: &[usize],
    trials: usize,
    master_seed: u64,
) -> Result<EigenRangeStat> {
    let idx = subset(&instance.spectrum, set, instance.n)?;
    let s = instance.spectrum.subset_ranks(&idx)?.s;
    let pairs = map_trials(instance, trials, master_seed, |ds| {
        let ev = subset_gram_eigenvalues(&ds.x, &idx);
        Ok((ev[0], ev[ev.len() - 1]))
    })?;
    let (top, bottom): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let min_bottom = bottom.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EigenRangeStat {
        top: ConcentrationStat::from_samples(top, s),
        bottom: ConcentrationStat::from_samples(bottom, s),
        min_bottom,
    })
}

/// Empirical frequencies of `{μ_n(X_S X_S⊤) ≤ t·s(S)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailTable {
    pub t: Vec<f64>,
    pub counts: Vec<usize>,
    pub trials: usize,
    /// `μ_n / s(S)` per trial.
    #[serde(skip)]
    pub ratios: Vec<f64>,
}

impl TailTable {
    pub fn frequency(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.trials as f64
    }

    /// Frequency as printed in tables; an empty cell is shown as `< 1/trials`.
    pub fn display_frequency(&self, i: usize) -> String {
        if self.counts[i] == 0 {
            format!("< 1/{}", self.trials)
        } else {
            crate::harness::fmt_real(self.frequency(i))
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "count", "trials", "frequency"])?;
        for i in 0..self.t.len() {
            out.write_record([
                crate::harness::fmt_real(self.t[i]),
                self.counts[i].to_string(),
                self.trials.to_string(),
                self.display_frequency(i),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

impl fmt::Display for TailTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8}  {:>12}", "t", "frequency")?;
        for i in 0..self.t.len() {
            let freq = match self.counts[i] {
                0 => self.display_frequency(i),
                _ => format!("{:.4}", self.frequency(i)),
            };
            writeln!(f, "{:>8.3}  {:>12}", self.t[i], freq)?;
        }
        Ok(())
    }
}

pub fn smallest_eig_tail_prob(
    instance: &ProblemInstance,
    set: &[usize],
    t_grid: &[f64],
    trials: usize,
    master_seed: u64,
    margins: &Margins,
) -> Result<TailTable> {
    if let Some(bad) = t_grid.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::param(format!("tail thresholds must lie in (0, 1), got {bad}")));
    }
    let n = instance.n;
    let idx = subset(&instance.spectrum, set, n)?;
    let ranks = instance.spectrum.subset_ranks(&idx)?;
    if ranks.r < margins.p_multiple * n as f64 {
        return Err(Error::param(format!(
            "r(S) = {:.3} is below {} n = {}",
            ranks.r,
            margins.p_multiple,
            margins.p_multiple * n as f64
        )));
    }
    let ratios = map_trials(instance, trials, master_seed, |ds| {
        let ev = subset_gram_eigenvalues(&ds.x, &idx);
        Ok(ev[ev.len() - 1] / ranks.s)
    })?;
    let counts = t_grid.iter().map(|&t| ratios.iter().filter(|&&r| r <= t).count()).collect();
    Ok(TailTable {
        t: t_grid.to_vec(),
        counts,
        trials,
        ratios,
    })
}

/// `‖D†U⊤ε‖²` against its conditional mean `σ²Tr((XX⊤)⁻¹)` for one realization.
pub fn noise_projection_stat(ds: &Dataset, svd: &SvdFactors, sigma: f64) -> Result<ConcentrationStat> {
    if ds.eps.len() != svd.n() {
        return Err(Error::DimensionMismatch {
            what: "noise length vs rows of X",
            expected: svd.n(),
            got: ds.eps.len(),
        });
    }
    let observed = svd.pinv_rotate(&ds.eps).norm_squared();
    Ok(ConcentrationStat::from_samples(
        vec![observed],
        sigma * sigma * svd.trace_gram_inverse(),
    ))
}

/// `α*` with `w = 0` reduces to `(2/3)(y⊤(XX⊤)⁻¹y)^{1/4}`; one Cholesky
/// factorization of the Gram matrix suffices.
fn alpha_without_init(ds: &Dataset) -> Result<f64> {
    let gram = &ds.x * ds.x.transpose();
    let chol = gram.cholesky().ok_or(Error::RankDeficient {
        s_min: 0.0,
        s_max: f64::NAN,
    })?;
    let z = chol.l().solve_lower_triangular(&ds.y).ok_or(Error::RankDeficient {
        s_min: 0.0,
        s_max: f64::NAN,
    })?;
    Ok(alpha_star(z.norm(), 0.0))
}

/// Mean of `α*` against `2√σ n^{1/4} / (3 s_k^{1/4})`, with `k` the critical
/// index for `margins.b`. Margin violations are logged, not rejected.
pub fn alpha_concentration_stat(
    instance: &ProblemInstance,
    w: &DVector<f64>,
    trials: usize,
    master_seed: u64,
    margins: &Margins,
) -> Result<(ConcentrationStat, MarginFlags)> {
    let (n, p) = (instance.n, instance.p());
    if w.len() != p {
        return Err(Error::DimensionMismatch {
            what: "w length vs p",
            expected: p,
            got: w.len(),
        });
    }
    let k = instance.spectrum.critical_index(n, margins.b).finite()?;
    let s_k = instance.spectrum.tail_sum(k)?;
    let flags = margins.flags(n, p, k, s_k);
    if !(flags.p_margin && flags.n_margin) {
        log::warn!("alpha concentration outside the hypothesis margins: {flags:?} (n = {n}, p = {p}, k = {k}, s_k = {s_k:.4})");
    }
    if instance.theta_star.norm() > 1.0 || w.norm() > 1.0 {
        log::warn!("alpha concentration with ‖θ*‖ or ‖w‖ above 1");
    }
    let predicted = psi_scale(instance.noise.sigma, n, s_k)?;
    let zero_w = w.iter().all(|v| *v == 0.0);
    let samples = map_trials(instance, trials, master_seed, |ds| {
        if zero_w {
            alpha_without_init(ds)
        } else {
            let svd = svd_factors(&ds.x)?;
            Ok(implicit_bias_from_svd(&svd, &ds.y, w)?.alpha_star)
        }
    })?;
    Ok((ConcentrationStat::from_samples(samples, predicted), flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{FeatureDistribution, NoiseModel};
    use crate::estimator::svd_factors;
    use proptest::prelude::*;

    fn instance(spec: CovarianceSpectrum, n: usize, sigma: f64) -> ProblemInstance {
        let p = spec.len();
        ProblemInstance::new(
            spec,
            DVector::zeros(p),
            n,
            FeatureDistribution::Gaussian,
            NoiseModel::new(sigma).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn head_tail_edges() {
        let spec = CovarianceSpectrum::poly(1.0, 12).unwrap();
        let inst = instance(spec.clone(), 5, 1.0);
        let ds = sample_dataset(&inst, 3).unwrap();
        let g = gram_head_tail(&ds, &spec, 0).unwrap();
        assert_eq!(g.h.norm(), 0.0);
        assert!(linalg::rel_frobenius(&g.t, &g.a) < 1e-12);
        let g = gram_head_tail(&ds, &spec, 11).unwrap();
        let ev = linalg::sym_eigenvalues_desc(&g.t);
        assert!(ev[1].abs() < 1e-12 * ev[0]);
        let ev = linalg::sym_eigenvalues_desc(&g.h);
        assert!(ev.iter().filter(|v| v.abs() > 1e-10 * ev[0]).count() <= 11);
        assert!(gram_head_tail(&ds, &spec, 12).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn head_tail_additivity(seed in any::<u64>(), n in 2usize..10, extra in 1usize..40, k_frac in 0.0f64..1.0, a in 0.0f64..2.0) {
            let p = n + extra;
            let spec = CovarianceSpectrum::poly(a, p).unwrap();
            let inst = instance(spec.clone(), n, 1.0);
            let ds = sample_dataset(&inst, seed).unwrap();
            let k = ((p as f64 - 1.0) * k_frac) as usize;
            let g = gram_head_tail(&ds, &spec, k).unwrap();
            prop_assert!(g.additivity_error() <= 1e-10);
            let ev = linalg::sym_eigenvalues_desc(&g.h);
            let rank = ev.iter().filter(|v| v.abs() > 1e-9 * ev[0].abs().max(1e-300)).count();
            prop_assert!(rank <= k);
        }
    }

    #[test]
    fn trace_routes_agree() {
        let spec = CovarianceSpectrum::poly(0.5, 80).unwrap();
        let inst = instance(spec, 15, 1.0);
        for seed in 0..5 {
            let ds = sample_dataset(&inst, seed).unwrap();
            let direct = (&ds.x * ds.x.transpose()).try_inverse().unwrap().trace();
            let via_s = trace_gram_inverse(&ds.x);
            assert!((direct - via_s).abs() <= 1e-8 * direct);
            let svd = svd_factors(&ds.x).unwrap();
            assert!((svd.trace_gram_inverse() - via_s).abs() <= 1e-8 * direct);
        }
    }

    #[test]
    fn trace_equal_eigenvalue_case() {
        // rows scaled so that XX⊤ = s I
        let s = 7.5;
        let mut x = DMatrix::zeros(3, 9);
        for i in 0..3 {
            for j in 0..3 {
                x[(i, 3 * i + j)] = (s / 3.0f64).sqrt();
            }
        }
        assert!((trace_gram_inverse(&x) - 3.0 / s).abs() < 1e-14);
    }

    #[test]
    fn trace_stat_refuses_thin_tail() {
        let inst = instance(CovarianceSpectrum::isotropic(300).unwrap(), 100, 1.0);
        assert!(matches!(
            trace_inverse_stat(&inst, 0, 5, 0, &Margins::default()),
            Err(Error::TailTooThin { required, .. }) if required == 400.0
        ));
    }

    #[test]
    fn scalar_gram_has_mean_tail_sum() {
        let spec = CovarianceSpectrum::poly(1.0, 50).unwrap();
        let inst = instance(spec.clone(), 1, 1.0);
        let set: Vec<usize> = (0..50).collect();
        let stat = eigen_range_stat(&inst, &set, 4000, 9, ).unwrap();
        assert_eq!(stat.top.samples, stat.bottom.samples);
        let s = spec.trace();
        assert!((stat.top.observed - s).abs() <= 3.5 * stat.top.std_error, "{} vs {s}", stat.top.observed);
    }

    #[test]
    fn eigen_range_rejects_small_sets() {
        let inst = instance(CovarianceSpectrum::isotropic(40).unwrap(), 10, 1.0);
        assert!(eigen_range_stat(&inst, &[0, 1, 2], 2, 0).is_err());
        assert!(eigen_range_stat(&inst, &[0, 100], 2, 0).is_err());
    }

    #[test]
    fn tail_table_shape() {
        let inst = instance(CovarianceSpectrum::isotropic(400).unwrap(), 10, 1.0);
        let set: Vec<usize> = (0..400).collect();
        let t = smallest_eig_tail_prob(&inst, &set, &[0.25, 0.5, 0.9, 0.99], 100, 1, &Margins::default()).unwrap();
        assert!(t.counts.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(t.counts[0], 0);
        assert_eq!(t.display_frequency(0), "< 1/100");
        assert!(smallest_eig_tail_prob(&inst, &set, &[1.0], 10, 1, &Margins::default()).is_err());
        assert!(smallest_eig_tail_prob(&inst, &set, &[0.0], 10, 1, &Margins::default()).is_err());
    }

    #[test]
    fn noise_projection_homogeneity() {
        let inst = instance(CovarianceSpectrum::isotropic(30).unwrap(), 6, 1.0);
        let mut ds = sample_dataset(&inst, 2).unwrap();
        let svd = svd_factors(&ds.x).unwrap();
        let base = noise_projection_stat(&ds, &svd, 1.0).unwrap().observed;
        ds.eps *= 2.0;
        let doubled = noise_projection_stat(&ds, &svd, 1.0).unwrap().observed;
        assert!((doubled - 4.0 * base).abs() <= 1e-12 * doubled);
        ds.eps.fill(0.0);
        assert_eq!(noise_projection_stat(&ds, &svd, 1.0).unwrap().observed, 0.0);
    }

    #[test]
    fn noise_projection_conditional_mean() {
        let inst = instance(CovarianceSpectrum::poly(0.5, 60).unwrap(), 12, 0.8);
        let ds = sample_dataset(&inst, 0).unwrap();
        let svd = svd_factors(&ds.x).unwrap();
        let samples: Vec<f64> = (0..1000u64)
            .map(|s| {
                let fresh = sample_dataset(&inst, 1000 + s).unwrap();
                let resampled = Dataset { eps: fresh.eps, ..ds.clone() };
                noise_projection_stat(&resampled, &svd, 0.8).unwrap().observed
            })
            .collect();
        let stat = ConcentrationStat::from_samples(samples, 0.64 * svd.trace_gram_inverse());
        assert!((stat.observed - stat.predicted).abs() <= 3.0 * stat.std_error);
    }

    #[test]
    fn alpha_paths_agree_and_scale_arithmetic() {
        assert!((psi_scale(1.0, 81, 81.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let inst = instance(CovarianceSpectrum::spike(2, 0.01, 200).unwrap(), 20, 1.0);
        let ds = sample_dataset(&inst, 5).unwrap();
        let svd = svd_factors(&ds.x).unwrap();
        let via_svd = implicit_bias_from_svd(&svd, &ds.y, &DVector::zeros(200)).unwrap().alpha_star;
        assert!((alpha_without_init(&ds).unwrap() - via_svd).abs() <= 1e-12 * via_svd);
    }

    #[test]
    fn stats_are_thread_count_invariant() {
        let inst = instance(CovarianceSpectrum::spike(0, 0.01, 120).unwrap(), 10, 1.0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| trace_inverse_stat(&inst, 0, 16, 42, &Margins::default()).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
