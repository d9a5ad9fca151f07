use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::datagen::{FeatureDistribution, NoiseModel, ProblemInstance, ThetaStarPreset};
use crate::error::{Error, Result};
use crate::risk::DEFAULT_DELTA;
use crate::spectral::Margins;
use crate::spectrum::{init_direction, init_for_guess, psi_from_init, Call, SpectrumPreset};

/// Mixed into the master seed for the `guess_noisy` direction, so it is
/// independent of every trial stream.
const GUESS_NOISE_STREAM: u64 = 0x005e_ed0f_9e55;

/// How the initialization `θ(0)` is chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum WPolicy {
    /// `θ(0) → 0`: the estimator reduces to minimum-norm OLS.
    #[default]
    Zero,
    /// `θ(0)` chosen so that `ψ = θ*`.
    GuessExact,
    /// `θ(0)` chosen so that `ψ = θ* + scale·u` for a unit vector `u` drawn
    /// once from the master seed.
    GuessNoisy(f64),
    /// `θ(0)` given verbatim.
    Explicit(Vec<f64>),
}

impl fmt::Display for WPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WPolicy::Zero => f.write_str("zero"),
            WPolicy::GuessExact => f.write_str("guess_exact"),
            WPolicy::GuessNoisy(s) => write!(f, "guess_noisy({s})"),
            WPolicy::Explicit(v) => write!(f, "explicit({})", serde_json::to_string(v).map_err(|_| fmt::Error)?),
        }
    }
}

impl FromStr for WPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" => return Ok(WPolicy::Zero),
            "guess_exact" => return Ok(WPolicy::GuessExact),
            _ => {}
        }
        let call = Call::parse(s)?;
        match call.name {
            "guess_noisy" => {
                call.arity(1)?;
                let scale: f64 = call.arg(0)?;
                if !(scale >= 0.0 && scale.is_finite()) {
                    return Err(Error::Config(format!("guess_noisy scale must be >= 0, got {scale}")));
                }
                Ok(WPolicy::GuessNoisy(scale))
            }
            "explicit" => Ok(WPolicy::Explicit(call.list()?)),
            other => Err(Error::Config(format!("unknown w policy `{other}`"))),
        }
    }
}

impl Serialize for WPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

fn default_theta_star() -> ThetaStarPreset {
    ThetaStarPreset::E1
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_c() -> f64 {
    1.0
}

/// One experiment, as read from a TOML file.
///
/// ```toml
/// n = 100
/// spectrum = "spike(2, 0.001, 5000)"
/// theta_star = "e1"
/// sigma = 0.5
/// w_policy = "guess_exact"
/// trials = 100
/// master_seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub spectrum: SpectrumPreset,
    #[serde(default = "default_theta_star")]
    pub theta_star: ThetaStarPreset,
    #[serde(default)]
    pub features: FeatureDistribution,
    pub sigma: f64,
    #[serde(default)]
    pub w_policy: WPolicy,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub margins: Margins,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Stand-in for the absolute constants in the bound terms.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Tolerance file; the built-in table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 100,
            spectrum: SpectrumPreset::Spike { k: 2, eps: 0.001, p: 5000 },
            theta_star: ThetaStarPreset::E1,
            features: FeatureDistribution::Gaussian,
            sigma: 0.5,
            w_policy: WPolicy::Zero,
            trials: 100,
            master_seed: 0,
            margins: Margins::default(),
            delta: DEFAULT_DELTA,
            c: 1.0,
            tolerances: None,
        }
    }
}

/// `ExperimentConfig` with the instance built and `θ(0)` fixed.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub instance: ProblemInstance,
    /// Critical index for `margins.b`.
    pub k: usize,
    pub s_k: f64,
    /// `None` under the zero policy.
    pub theta0: Option<DVector<f64>>,
    /// `θ(0)/√‖θ(0)‖`, or zero.
    pub w: DVector<f64>,
    /// Rescaled initialization entering the bias bound.
    pub psi: DVector<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are TOML-representable")
    }

    pub fn p(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.n == 0 || self.p() <= self.n {
            return bad(format!("need p > n >= 1, got n = {}, p = {}", self.n, self.p()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("c must be positive, got {}", self.c));
        }
        if !(self.margins.b > 0.0) {
            return bad(format!("b must be positive, got {}", self.margins.b));
        }
        if matches!(self.w_policy, WPolicy::GuessExact | WPolicy::GuessNoisy(_)) && self.sigma == 0.0 {
            return bad("guess policies need sigma > 0 to define the rescaling".into());
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<ProblemInstance> {
        let spectrum = self.spectrum.build().map_err(as_config)?;
        let theta_star = self.theta_star.build(spectrum.len()).map_err(as_config)?;
        ProblemInstance::new(
            spectrum,
            theta_star,
            self.n,
            self.features,
            NoiseModel::new(self.sigma).map_err(as_config)?,
        )
        .map_err(as_config)
    }

    /// Builds the instance and turns `w_policy` into a concrete `θ(0)`.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        self.validate()?;
        let instance = self.instance()?;
        let (n, p) = (self.n, instance.p());
        let k = instance
            .spectrum
            .critical_index(n, self.margins.b)
            .finite()
            .map_err(as_config)?;
        let s_k = instance.spectrum.tail_sum(k)?;
        let guess = |psi_hat: &DVector<f64>| -> Result<DVector<f64>> {
            init_for_guess(psi_hat, self.sigma, n, s_k).map_err(as_config)
        };
        let theta0 = match &self.w_policy {
            WPolicy::Zero => None,
            WPolicy::GuessExact => Some(guess(&instance.theta_star)?),
            WPolicy::GuessNoisy(scale) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed ^ GUESS_NOISE_STREAM);
                let u = DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(&mut rng)).normalize();
                Some(guess(&(&instance.theta_star + u * *scale))?)
            }
            WPolicy::Explicit(v) => {
                if v.len() != p {
                    return Err(Error::Config(format!("explicit θ(0) has length {}, expected p = {p}", v.len())));
                }
                Some(DVector::from_column_slice(v))
            }
        };
        let (w, psi) = match &theta0 {
            None => (DVector::zeros(p), DVector::zeros(p)),
            Some(t0) => {
                let w = init_direction(t0).map_err(as_config)?;
                let psi = if self.sigma > 0.0 {
                    psi_from_init(t0, self.sigma, n, s_k)?
                } else {
                    log::warn!("sigma = 0: the rescaled initialization is zero");
                    DVector::zeros(p)
                };
                (w, psi)
            }
        };
        Ok(ResolvedConfig {
            config: self.clone(),
            instance,
            k,
            s_k,
            theta0,
            w,
            psi,
        })
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_strings_round_trip() {
        for s in ["zero", "guess_exact", "guess_noisy(0.25)", "explicit([1.0,-2.0])"] {
            let p: WPolicy = s.parse().unwrap();
            assert_eq!(p.to_string().parse::<WPolicy>().unwrap(), p);
        }
        assert!("guess_noisy(-1)".parse::<WPolicy>().is_err());
        assert!("wild".parse::<WPolicy>().is_err());
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "n = 50\nspectrum = \"spike(2, 0.001, 1000)\"\nsigma = 0.5\ntrials = 10\nw_policy = \"guess_noisy(0.1)\"\n",
        )
        .unwrap();
        assert_eq!(cfg.theta_star, ThetaStarPreset::E1);
        assert_eq!(cfg.delta, 0.05);
        assert_eq!(cfg.margins, Margins::default());
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml("n = 50\nbogus = 1").is_err());
    }

    #[test]
    fn validation_errors_are_config_errors() {
        let base = ExperimentConfig::default();
        let bad = [
            ExperimentConfig { trials: 0, ..base.clone() },
            ExperimentConfig { n: 6000, ..base.clone() },
            ExperimentConfig { sigma: -1.0, ..base.clone() },
            ExperimentConfig { delta: 1.0, ..base.clone() },
            ExperimentConfig { sigma: 0.0, w_policy: WPolicy::GuessExact, ..base.clone() },
            ExperimentConfig { w_policy: WPolicy::Explicit(vec![1.0]), ..base.clone() },
            ExperimentConfig { theta_star: ThetaStarPreset::Zero, w_policy: WPolicy::GuessExact, ..base },
        ];
        for cfg in bad {
            assert!(matches!(cfg.resolve(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn guess_exact_recovers_theta_star() {
        let cfg = ExperimentConfig {
            w_policy: WPolicy::GuessExact,
            ..ExperimentConfig::default()
        };
        let r = cfg.resolve().unwrap();
        assert_eq!(r.k, 2);
        assert!((&r.psi - &r.instance.theta_star).norm() < 1e-12);
        let zero = ExperimentConfig::default().resolve().unwrap();
        assert!(zero.theta0.is_none() && zero.w.norm() == 0.0);
    }
}
