//! Diagonal covariance spectra and the tail statistics derived from them.
//!
//! Indices follow two conventions. Tail statistics take `j`, the number of
//! leading eigenvalues excluded, so `tail_sum(j)` is the sum of
//! `lambdas[j..]` and `λ_{j+1}` is `lambdas[j]`. Index sets passed to
//! [`CovarianceSpectrum::subset_ranks`] are 0-based positions.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Eigenvalues `λ_1 ≥ … ≥ λ_p > 0` of a diagonal feature covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpectrum {
    lambdas: Vec<f64>,
    /// `suffix[j] = Σ_{i ≥ j} lambdas[i]`, accumulated from the smallest entry up.
    suffix: Vec<f64>,
    suffix_sq: Vec<f64>,
}

impl CovarianceSpectrum {
    /// Builds a spectrum, sorting into descending order if needed.
    pub fn new(mut lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::param("spectrum must have at least one eigenvalue"));
        }
        if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::param(format!(
                "eigenvalues must be finite and strictly positive, got {bad}"
            )));
        }
        if lambdas.windows(2).any(|w| w[0] < w[1]) {
            log::warn!("spectrum given out of order; sorting into descending order");
            lambdas.sort_by(|a, b| b.total_cmp(a));
        }
        let p = lambdas.len();
        let mut suffix = vec![0.0; p + 1];
        let mut suffix_sq = vec![0.0; p + 1];
        for i in (0..p).rev() {
            suffix[i] = suffix[i + 1] + lambdas[i];
            suffix_sq[i] = suffix_sq[i + 1] + lambdas[i] * lambdas[i];
        }
        Ok(Self {
            lambdas,
            suffix,
            suffix_sq,
        })
    }

    pub fn isotropic(p: usize) -> Result<Self> {
        Self::new(vec![1.0; p])
    }

    /// `(k, ε)`-spike: `k` unit eigenvalues followed by `p - k` copies of `eps`.
    pub fn spike(k: usize, eps: f64, p: usize) -> Result<Self> {
        if k >= p {
            return Err(Error::param(format!("spike needs k < p (k = {k}, p = {p})")));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::param(format!("spike needs 0 < eps <= 1, got {eps}")));
        }
        let mut l = vec![1.0; k];
        l.resize(p, eps);
        Self::new(l)
    }

    /// `λ_i = i^{-a}`.
    pub fn poly(a: f64, p: usize) -> Result<Self> {
        if !(a >= 0.0) {
            return Err(Error::param(format!("poly decay must be >= 0, got {a}")));
        }
        Self::new((1..=p).map(|i| (i as f64).powf(-a)).collect())
    }

    /// `λ_i = γ^i`.
    pub fn exp(gamma: f64, p: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::param(format!("exp rate must be in (0, 1], got {gamma}")));
        }
        Self::new((1..=p).map(|i| gamma.powi(i as i32)).collect())
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.lambdas)
    }

    pub fn top(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn trace(&self) -> f64 {
        self.suffix[0]
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.len() {
            Err(Error::IndexOutOfRange {
                index: j,
                len: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// `s_j = Σ_{i>j} λ_i`.
    pub fn tail_sum(&self, j: usize) -> Result<f64> {
        self.check_index(j)?;
        Ok(self.suffix[j])
    }

    /// `s_j`, `r_j = s_j / λ_{j+1}` and `R_j = s_j² / Σ_{i>j} λ_i²`.
    pub fn effective_ranks(&self, j: usize) -> Result<EffectiveRankReport> {
        self.check_index(j)?;
        let s = self.suffix[j];
        Ok(EffectiveRankReport {
            j: Some(j),
            s,
            r: s / self.lambdas[j],
            r_big: s * s / self.suffix_sq[j],
        })
    }

    /// Effective ranks of an arbitrary nonempty subset of 0-based positions.
    /// Duplicate positions are counted once.
    pub fn subset_ranks(&self, set: &[usize]) -> Result<EffectiveRankReport> {
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut idx = set.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if let Some(&last) = idx.last() {
            self.check_index(last)?;
        }
        // ascending magnitude = descending position
        let (mut s, mut sq) = (0.0, 0.0);
        for &i in idx.iter().rev() {
            s += self.lambdas[i];
            sq += self.lambdas[i] * self.lambdas[i];
        }
        let max = self.lambdas[idx[0]];
        Ok(EffectiveRankReport {
            j: None,
            s,
            r: s / max,
            r_big: s * s / sq,
        })
    }

    /// `k = min{j ≥ 0 : r_j ≥ b n}`, infinite when no such `j < p` exists.
    pub fn critical_index(&self, n: usize, b: f64) -> CriticalIndex {
        let threshold = b * n as f64;
        let k = (0..self.len())
            .find(|&j| self.suffix[j] / self.lambdas[j] >= threshold)
            .map_or(KIndex::Infinite, KIndex::Finite);
        CriticalIndex { k, b }
    }
}

impl Serialize for CovarianceSpectrum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.lambdas.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CovarianceSpectrum {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        CovarianceSpectrum::new(v).map_err(serde::de::Error::custom)
    }
}

/// Tail (or subset) mass with its two effective ranks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveRankReport {
    /// Tail start for `s_j`-style reports; `None` for subset reports.
    pub j: Option<usize>,
    pub s: f64,
    /// `s / max λ`.
    pub r: f64,
    /// `s² / Σ λ²`.
    pub r_big: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum KIndex {
    Finite(usize),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalIndex {
    pub k: KIndex,
    pub b: f64,
}

impl CriticalIndex {
    /// The finite index, or an error: bounds are not evaluated when `k = ∞`.
    pub fn finite(&self) -> Result<usize> {
        match self.k {
            KIndex::Finite(k) => Ok(k),
            KIndex::Infinite => Err(Error::InfiniteCriticalIndex),
        }
    }
}

/// `w = θ(0) / √‖θ(0)‖`: the linear coefficient the balanced-network flow
/// attaches to its initialization. Every conversion from `θ(0)` goes through here.
pub fn init_direction(theta0: &DVector<f64>) -> Result<DVector<f64>> {
    let norm = theta0.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector("initialization"));
    }
    Ok(theta0 / norm.sqrt())
}

/// `2√σ n^{1/4} / (3 s_k^{1/4})`, the level around which `α*` concentrates.
pub fn psi_scale(sigma: f64, n: usize, s_k: f64) -> Result<f64> {
    if !(sigma > 0.0) || !(s_k > 0.0) || n == 0 {
        return Err(Error::param(format!(
            "psi scale needs sigma > 0, s_k > 0, n >= 1 (sigma = {sigma}, s_k = {s_k}, n = {n})"
        )));
    }
    Ok(2.0 * sigma.sqrt() * (n as f64).powf(0.25) / (3.0 * s_k.powf(0.25)))
}

/// `ψ = psi_scale · θ(0)/√‖θ(0)‖`.
pub fn psi_from_init(theta0: &DVector<f64>, sigma: f64, n: usize, s_k: f64) -> Result<DVector<f64>> {
    let scale = psi_scale(sigma, n, s_k)?;
    Ok(init_direction(theta0)? * scale)
}

/// Initialization whose rescaling equals the guess:
/// `θ(0) = (9/4) ψ̂ ‖ψ̂‖ √(s_k / (σ² n))`.
pub fn init_for_guess(psi_hat: &DVector<f64>, sigma: f64, n: usize, s_k: f64) -> Result<DVector<f64>> {
    psi_scale(sigma, n, s_k)?;
    let norm = psi_hat.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector("guess"));
    }
    let factor = 2.25 * norm * (s_k / (sigma * sigma * n as f64)).sqrt();
    Ok(psi_hat * factor)
}

/// Config-level spectrum description, e.g. `spike(2, 0.001, 5000)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumPreset {
    Isotropic { p: usize },
    Spike { k: usize, eps: f64, p: usize },
    Poly { a: f64, p: usize },
    Exp { gamma: f64, p: usize },
    Explicit(Vec<f64>),
}

impl SpectrumPreset {
    pub fn build(&self) -> Result<CovarianceSpectrum> {
        match *self {
            SpectrumPreset::Isotropic { p } => CovarianceSpectrum::isotropic(p),
            SpectrumPreset::Spike { k, eps, p } => CovarianceSpectrum::spike(k, eps, p),
            SpectrumPreset::Poly { a, p } => CovarianceSpectrum::poly(a, p),
            SpectrumPreset::Exp { gamma, p } => CovarianceSpectrum::exp(gamma, p),
            SpectrumPreset::Explicit(ref v) => CovarianceSpectrum::new(v.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            SpectrumPreset::Isotropic { p }
            | SpectrumPreset::Spike { p, .. }
            | SpectrumPreset::Poly { p, .. }
            | SpectrumPreset::Exp { p, .. } => p,
            SpectrumPreset::Explicit(ref v) => v.len(),
        }
    }

    /// Same family with a different ambient dimension (explicit lists are fixed).
    pub fn with_dim(&self, p: usize) -> Result<Self> {
        Ok(match *self {
            SpectrumPreset::Isotropic { .. } => SpectrumPreset::Isotropic { p },
            SpectrumPreset::Spike { k, eps, .. } => SpectrumPreset::Spike { k, eps, p },
            SpectrumPreset::Poly { a, .. } => SpectrumPreset::Poly { a, p },
            SpectrumPreset::Exp { gamma, .. } => SpectrumPreset::Exp { gamma, p },
            SpectrumPreset::Explicit(_) => {
                return Err(Error::Config("cannot resize an explicit spectrum".into()))
            }
        })
    }
}

impl fmt::Display for SpectrumPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectrumPreset::Isotropic { p } => write!(f, "isotropic({p})"),
            SpectrumPreset::Spike { k, eps, p } => write!(f, "spike({k}, {eps}, {p})"),
            SpectrumPreset::Poly { a, p } => write!(f, "poly({a}, {p})"),
            SpectrumPreset::Exp { gamma, p } => write!(f, "exp({gamma}, {p})"),
            SpectrumPreset::Explicit(v) => {
                write!(f, "explicit({})", serde_json::to_string(v).map_err(|_| fmt::Error)?)
            }
        }
    }
}

impl FromStr for SpectrumPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let call = Call::parse(s)?;
        let preset = match call.name {
            "isotropic" => {
                call.arity(1)?;
                SpectrumPreset::Isotropic { p: call.arg(0)? }
            }
            "spike" => {
                call.arity(3)?;
                SpectrumPreset::Spike {
                    k: call.arg(0)?,
                    eps: call.arg(1)?,
                    p: call.arg(2)?,
                }
            }
            "poly" => {
                call.arity(2)?;
                SpectrumPreset::Poly {
                    a: call.arg(0)?,
                    p: call.arg(1)?,
                }
            }
            "exp" => {
                call.arity(2)?;
                SpectrumPreset::Exp {
                    gamma: call.arg(0)?,
                    p: call.arg(1)?,
                }
            }
            "explicit" => SpectrumPreset::Explicit(call.list()?),
            other => return Err(Error::Config(format!("unknown spectrum preset `{other}`"))),
        };
        Ok(preset)
    }
}

impl Serialize for SpectrumPreset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpectrumPreset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `name(arg, arg, …)` or `name([…])` as used by the config presets.
pub(crate) struct Call<'a> {
    pub name: &'a str,
    body: &'a str,
    args: Vec<&'a str>,
}

impl<'a> Call<'a> {
    pub fn parse(s: &'a str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::Config(format!("expected `name(args)`, got `{s}`")))?;
        let body = s[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| Error::Config(format!("missing `)` in `{s}`")))?
            .trim();
        let args = if body.is_empty() || body.starts_with('[') {
            Vec::new()
        } else {
            body.split(',').map(str::trim).collect()
        };
        Ok(Call {
            name: s[..open].trim(),
            body,
            args,
        })
    }

    pub fn arity(&self, n: usize) -> Result<()> {
        if self.args.len() == n {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "`{}` takes {n} argument(s), got {}",
                self.name,
                self.args.len()
            )))
        }
    }

    pub fn arg<T: FromStr>(&self, i: usize) -> Result<T> {
        self.args[i]
            .parse()
            .map_err(|_| Error::Config(format!("bad argument `{}` to `{}`", self.args[i], self.name)))
    }

    pub fn list(&self) -> Result<Vec<f64>> {
        serde_json::from_str(self.body)
            .map_err(|e| Error::Config(format!("`{}` expects a JSON array: {e}", self.name)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(v: &[f64]) -> CovarianceSpectrum {
        CovarianceSpectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn tail_sums() {
        assert_eq!(spec(&[1.0; 4]).tail_sum(0).unwrap(), 4.0);
        assert_eq!(spec(&[1.0, 1.0, 0.5, 0.5]).tail_sum(2).unwrap(), 1.0);
        let s = CovarianceSpectrum::spike(3, 0.001, 1000).unwrap();
        assert!((s.tail_sum(3).unwrap() - 0.997).abs() < 1e-12);
        assert!(matches!(s.tail_sum(1000), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn ranks_forced_arithmetic() {
        let iso = CovarianceSpectrum::isotropic(100).unwrap();
        let rep = iso.effective_ranks(0).unwrap();
        assert!((rep.r - 100.0).abs() < 1e-12 && (rep.r_big - 100.0).abs() < 1e-12);

        let rep = spec(&[4.0, 2.0, 2.0]).effective_ranks(0).unwrap();
        assert_eq!(rep.s, 8.0);
        assert_eq!(rep.r, 2.0);
        assert!((rep.r_big - 64.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn subset_ranks_cases() {
        let s = spec(&[9.0, 4.0, 1.0]);
        let rep = s.subset_ranks(&[1, 2]).unwrap();
        assert_eq!(rep.s, 5.0);
        assert_eq!(rep.r, 1.25);
        assert!((rep.r_big - 25.0 / 17.0).abs() < 1e-15);

        let single = spec(&[3.0, 1.0]).subset_ranks(&[0]).unwrap();
        assert_eq!((single.s, single.r, single.r_big), (3.0, 1.0, 1.0));

        let tail = s.subset_ranks(&[1, 2]).unwrap();
        let via_j = s.effective_ranks(1).unwrap();
        assert_eq!((tail.s, tail.r, tail.r_big), (via_j.s, via_j.r, via_j.r_big));

        assert!(matches!(s.subset_ranks(&[]), Err(Error::EmptySet)));
        assert!(s.subset_ranks(&[3]).is_err());
    }

    #[test]
    fn critical_index_cases() {
        let iso = CovarianceSpectrum::isotropic(1000).unwrap();
        assert_eq!(iso.critical_index(10, 5.0).k, KIndex::Finite(0));

        let spike = CovarianceSpectrum::spike(3, 0.001, 5000).unwrap();
        // Exact oracle: r_j for j < 3 is (3 - j + 0.001 * 4997) / 1 < 500; r_3 = 4997.
        for j in 0..3 {
            let exact = (3 - j) as f64 + 0.001 * 4997.0;
            assert!((spike.effective_ranks(j).unwrap().r - exact).abs() < 1e-9);
            assert!(exact < 500.0);
        }
        assert!((spike.effective_ranks(3).unwrap().r - 4997.0).abs() < 1e-6);
        assert_eq!(spike.critical_index(50, 10.0).k, KIndex::Finite(3));

        let k = spike.critical_index(1_000_000_000, 10.0);
        assert_eq!(k.k, KIndex::Infinite);
        assert!(matches!(k.finite(), Err(Error::InfiniteCriticalIndex)));
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let s = spec(&[1.0, 3.0, 2.0]);
        assert_eq!(s.lambdas(), &[3.0, 2.0, 1.0]);
        assert!(CovarianceSpectrum::new(vec![1.0, 0.0]).is_err());
        assert!(CovarianceSpectrum::new(vec![]).is_err());
    }

    #[test]
    fn psi_examples() {
        let mut e1 = DVector::zeros(5);
        e1[0] = 1.0;
        let psi = psi_from_init(&e1, 1.0, 81, 81.0).unwrap();
        assert!((psi[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((psi_scale(1.0, 81, 81.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let psi4 = psi_from_init(&(&e1 * 4.0), 1.0, 81, 81.0).unwrap();
        assert!((psi4[0] - 2.0 * psi[0]).abs() < 1e-15);

        let back = init_for_guess(&psi, 1.0, 81, 81.0).unwrap();
        assert!((&back - &e1).norm() < 1e-15);

        let doubled = init_for_guess(&(&psi * 2.0), 1.0, 81, 81.0).unwrap();
        assert!((doubled.norm() - 4.0).abs() < 1e-12);

        assert!(psi_from_init(&DVector::zeros(3), 1.0, 4, 1.0).is_err());
        assert!(init_for_guess(&DVector::zeros(3), 1.0, 4, 1.0).is_err());
    }

    #[test]
    fn preset_parsing() {
        let p: SpectrumPreset = "spike(2, 0.001, 5000)".parse().unwrap();
        assert_eq!(p, SpectrumPreset::Spike { k: 2, eps: 0.001, p: 5000 });
        let round: SpectrumPreset = p.to_string().parse().unwrap();
        assert_eq!(round, p);
        let e: SpectrumPreset = "explicit([3, 2.5, 1])".parse().unwrap();
        assert_eq!(e.build().unwrap().lambdas(), &[3.0, 2.5, 1.0]);
        assert_eq!(
            "poly(1.5, 10)".parse::<SpectrumPreset>().unwrap().build().unwrap().lambdas()[1],
            2f64.powf(-1.5)
        );
        assert_eq!("exp(0.5, 3)".parse::<SpectrumPreset>().unwrap().build().unwrap().lambdas(), &[0.5, 0.25, 0.125]);
        assert!("spike(2, 0.001)".parse::<SpectrumPreset>().is_err());
        assert!("wobble(3)".parse::<SpectrumPreset>().is_err());

        let json = serde_json::to_string(&spec(&[2.0, 1.0])).unwrap();
        assert_eq!(json, "[2.0,1.0]");
        let back: CovarianceSpectrum = serde_json::from_str(&json).unwrap();
        assert_eq!(back.lambdas(), &[2.0, 1.0]);
    }

    fn log_spaced() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-6.0f64..2.0, 1..60)
            .prop_map(|v| v.into_iter().map(|e| 10f64.powf(e)).collect())
    }

    proptest! {
        #[test]
        fn rank_sandwich(l in log_spaced(), j in 0usize..60) {
            let s = CovarianceSpectrum::new(l).unwrap();
            let j = j % s.len();
            let rep = s.effective_ranks(j).unwrap();
            let tol = 1e-12 * rep.r_big.max(1.0);
            prop_assert!(rep.r <= rep.r_big + tol);
            prop_assert!(rep.r_big <= rep.r * rep.r + tol * rep.r);
        }

        #[test]
        fn tail_sum_strictly_decreasing(l in log_spaced()) {
            let s = CovarianceSpectrum::new(l).unwrap();
            for j in 1..s.len() {
                prop_assert!(s.tail_sum(j).unwrap() < s.tail_sum(j - 1).unwrap());
            }
        }

        #[test]
        fn critical_index_monotone(l in log_spaced(), n in 1usize..50, b in 0.01f64..20.0) {
            let s = CovarianceSpectrum::new(l).unwrap();
            let base = s.critical_index(n, b).k;
            prop_assert!(s.critical_index(n, b * 1.5).k >= base);
            prop_assert!(s.critical_index(n + 3, b).k >= base);
        }

        #[test]
        fn guess_round_trip(v in prop::collection::vec(-5.0f64..5.0, 1..20),
                            sigma in 0.05f64..4.0, n in 1usize..1000, s_k in 0.01f64..100.0) {
            let psi_hat = DVector::from_vec(v);
            prop_assume!(psi_hat.norm() > 1e-6);
            let theta0 = init_for_guess(&psi_hat, sigma, n, s_k).unwrap();
            let psi = psi_from_init(&theta0, sigma, n, s_k).unwrap();
            prop_assert!((&psi - &psi_hat).norm() <= 1e-12 * psi_hat.norm());
        }
    }
}
