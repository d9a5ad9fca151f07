//! Sampling of regression instances `y = Xθ* + ε` with rows `x = Σ^{1/2}u`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;
use crate::spectrum::{Call, CovarianceSpectrum};

/// Relative singular-value floor below which `X` is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Law of the i.i.d. whitened coordinates `u_ij`; every kind has mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureDistribution {
    #[default]
    Gaussian,
    /// Uniform on `[-√3, √3]`.
    Uniform,
    Rademacher,
}

impl FeatureDistribution {
    /// Whether the coordinate law has a bounded density (the small-ball
    /// condition). Rademacher is discrete and fails it.
    pub fn satisfies_anticoncentration(self) -> bool {
        !matches!(self, FeatureDistribution::Rademacher)
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            FeatureDistribution::Gaussian => StandardNormal.sample(rng),
            FeatureDistribution::Uniform => {
                let r = 3f64.sqrt();
                rng.random_range(-r..r)
            }
            FeatureDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

impl FromStr for FeatureDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "uniform" => Ok(Self::Uniform),
            "rademacher" => Ok(Self::Rademacher),
            other => Err(Error::Config(format!("unknown feature distribution `{other}`"))),
        }
    }
}

/// Additive noise independent of `x`, Gaussian with standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!("noise sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(Self { sigma })
    }
}

/// Config-level description of the ground-truth regressor.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaStarPreset {
    Zero,
    E1,
    RandomUnit(u64),
    Explicit(Vec<f64>),
}

impl ThetaStarPreset {
    pub fn build(&self, p: usize) -> Result<DVector<f64>> {
        let v = match self {
            ThetaStarPreset::Zero => DVector::zeros(p),
            ThetaStarPreset::E1 => {
                let mut v = DVector::zeros(p);
                v[0] = 1.0;
                v
            }
            ThetaStarPreset::RandomUnit(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let v = DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
                let norm = v.norm();
                v / norm
            }
            ThetaStarPreset::Explicit(x) => {
                if x.len() != p {
                    return Err(Error::DimensionMismatch {
                        what: "explicit theta_star",
                        expected: p,
                        got: x.len(),
                    });
                }
                DVector::from_column_slice(x)
            }
        };
        Ok(v)
    }
}

impl fmt::Display for ThetaStarPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaStarPreset::Zero => f.write_str("zero"),
            ThetaStarPreset::E1 => f.write_str("e1"),
            ThetaStarPreset::RandomUnit(s) => write!(f, "random_unit({s})"),
            ThetaStarPreset::Explicit(v) => {
                write!(f, "explicit({})", serde_json::to_string(v).map_err(|_| fmt::Error)?)
            }
        }
    }
}

impl FromStr for ThetaStarPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" => return Ok(Self::Zero),
            "e1" => return Ok(Self::E1),
            _ => {}
        }
        let call = Call::parse(s)?;
        match call.name {
            "random_unit" => {
                call.arity(1)?;
                Ok(Self::RandomUnit(call.arg(0)?))
            }
            "explicit" => Ok(Self::Explicit(call.list()?)),
            other => Err(Error::Config(format!("unknown theta_star preset `{other}`"))),
        }
    }
}

impl Serialize for ThetaStarPreset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ThetaStarPreset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A fully specified sampling problem with `p > n`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub spectrum: CovarianceSpectrum,
    pub theta_star: DVector<f64>,
    pub n: usize,
    pub feature_dist: FeatureDistribution,
    pub noise: NoiseModel,
}

impl ProblemInstance {
    pub fn new(
        spectrum: CovarianceSpectrum,
        theta_star: DVector<f64>,
        n: usize,
        feature_dist: FeatureDistribution,
        noise: NoiseModel,
    ) -> Result<Self> {
        let inst = Self {
            spectrum,
            theta_star,
            n,
            feature_dist,
            noise,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.spectrum.len();
        if self.theta_star.len() != p {
            return Err(Error::DimensionMismatch {
                what: "theta_star length vs spectrum",
                expected: p,
                got: self.theta_star.len(),
            });
        }
        if self.n == 0 || p <= self.n {
            return Err(Error::NotOverparameterized { n: self.n, p });
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.spectrum.len()
    }
}

/// One realization of the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub eps: DVector<f64>,
    pub seed: u64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// CSV with one row per sample: `x0 … x{p-1}, y, eps`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let p = self.p();
        let mut header: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        header.push("eps".into());
        out.write_record(&header)?;
        for i in 0..self.n() {
            let mut row: Vec<String> = (0..p).map(|j| crate::harness::fmt_real(self.x[(i, j)])).collect();
            row.push(crate::harness::fmt_real(self.y[i]));
            row.push(crate::harness::fmt_real(self.eps[i]));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Draws `X`, `ε` and `y = Xθ* + ε` from a single ChaCha stream seeded by `seed`.
///
/// `X` is filled first (column by column), then `ε`, so datasets that differ
/// only in `σ` or `θ*` share the same features and standardized noise.
pub fn sample_dataset(instance: &ProblemInstance, seed: u64) -> Result<Dataset> {
    instance.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p) = (instance.n, instance.p());
    let dist = instance.feature_dist;
    let mut x = DMatrix::zeros(n, p);
    for (j, &lambda) in instance.spectrum.lambdas().iter().enumerate() {
        let scale = lambda.sqrt();
        for v in x.column_mut(j).iter_mut() {
            *v = scale * dist.sample(&mut rng);
        }
    }
    let sigma = instance.noise.sigma;
    let eps = DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    });
    let y = &x * &instance.theta_star + &eps;
    Ok(Dataset { x, y, eps, seed })
}

/// `z_i = X e_i / √λ_i` for every column.
pub fn whitened_columns(ds: &Dataset, spec: &CovarianceSpectrum) -> Result<Vec<DVector<f64>>> {
    if spec.len() != ds.p() {
        return Err(Error::DimensionMismatch {
            what: "spectrum length vs columns of X",
            expected: ds.p(),
            got: spec.len(),
        });
    }
    Ok(spec
        .lambdas()
        .iter()
        .enumerate()
        .map(|(i, &l)| ds.x.column(i) / l.sqrt())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankCertificate {
    pub full_rank: bool,
    pub s_min: f64,
    pub s_max: f64,
}

/// Full-rank check: `s_min(X) > RANK_TOLERANCE · s_max(X)`.
pub fn rank_certificate(x: &DMatrix<f64>) -> RankCertificate {
    let s = linalg::singular_values(x);
    if s.is_empty() {
        return RankCertificate {
            full_rank: false,
            s_min: 0.0,
            s_max: 0.0,
        };
    }
    let (s_max, s_min) = (s[0], s[s.len() - 1]);
    RankCertificate {
        full_rank: s_max > 0.0 && s_min > RANK_TOLERANCE * s_max,
        s_min,
        s_max,
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `t` under `master`: a pure function of the pair, so trials
/// can run in any order.
pub fn trial_seed(master: u64, t: u64) -> u64 {
    splitmix64(master ^ splitmix64(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(n: usize, p: usize, sigma: f64, dist: FeatureDistribution) -> ProblemInstance {
        let spec = CovarianceSpectrum::isotropic(p).unwrap();
        let theta = ThetaStarPreset::RandomUnit(9).build(p).unwrap();
        ProblemInstance::new(spec, theta, n, dist, NoiseModel::new(sigma).unwrap()).unwrap()
    }

    #[test]
    fn noiseless_and_deterministic() {
        let inst = instance(10, 30, 0.0, FeatureDistribution::Gaussian);
        let ds = sample_dataset(&inst, 3).unwrap();
        assert_eq!(ds.y, &ds.x * &inst.theta_star);
        assert_eq!(ds.eps, DVector::zeros(10));
        assert_eq!(sample_dataset(&inst, 3).unwrap(), ds);
        assert_ne!(sample_dataset(&inst, 4).unwrap().x, ds.x);
    }

    #[test]
    fn rejects_bad_shapes() {
        let spec = CovarianceSpectrum::isotropic(5).unwrap();
        let bad = ProblemInstance::new(
            spec.clone(),
            DVector::zeros(4),
            2,
            FeatureDistribution::Gaussian,
            NoiseModel::new(1.0).unwrap(),
        );
        assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
        let bad = ProblemInstance::new(
            spec,
            DVector::zeros(5),
            5,
            FeatureDistribution::Gaussian,
            NoiseModel::new(1.0).unwrap(),
        );
        assert!(matches!(bad, Err(Error::NotOverparameterized { n: 5, p: 5 })));
    }

    #[test]
    fn column_variance_near_one() {
        // Law-of-large-numbers oracle: 50 seeds × 200 rows per column.
        let inst = instance(200, 400, 1.0, FeatureDistribution::Gaussian);
        let mut sumsq = vec![0.0; 400];
        for seed in 0..50 {
            let ds = sample_dataset(&inst, seed).unwrap();
            for (acc, col) in sumsq.iter_mut().zip(ds.x.column_iter()) {
                *acc += col.norm_squared();
            }
        }
        for s in sumsq {
            let var = s / (200.0 * 50.0);
            assert!((var - 1.0).abs() < 0.25, "variance {var}");
        }
    }

    #[test]
    fn coordinate_moments_per_distribution() {
        // 40 trials of a 50×60 draw: mean within 4/√(n·trials), variance within 5/√(n·trials).
        for dist in [
            FeatureDistribution::Gaussian,
            FeatureDistribution::Uniform,
            FeatureDistribution::Rademacher,
        ] {
            let inst = instance(50, 60, 1.0, dist);
            let trials = 40;
            let (mut sum, mut sumsq) = (vec![0.0; 60], vec![0.0; 60]);
            for t in 0..trials {
                let ds = sample_dataset(&inst, trial_seed(11, t)).unwrap();
                for j in 0..60 {
                    sum[j] += ds.x.column(j).sum();
                    sumsq[j] += ds.x.column(j).norm_squared();
                }
            }
            let m = (50 * trials) as f64;
            for j in 0..60 {
                let mean = sum[j] / m;
                let var = sumsq[j] / m - mean * mean;
                assert!(mean.abs() < 4.0 / m.sqrt(), "{dist:?} mean {mean}");
                assert!((var - 1.0).abs() < 5.0 / m.sqrt(), "{dist:?} var {var}");
            }
        }
        assert!(FeatureDistribution::Gaussian.satisfies_anticoncentration());
        assert!(FeatureDistribution::Uniform.satisfies_anticoncentration());
        assert!(!FeatureDistribution::Rademacher.satisfies_anticoncentration());
    }

    #[test]
    fn uniform_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = 3f64.sqrt();
        for _ in 0..10_000 {
            let v = FeatureDistribution::Uniform.sample(&mut rng);
            assert!(v >= -r && v < r);
        }
    }

    #[test]
    fn whitening() {
        let spec = CovarianceSpectrum::new(vec![4.0, 1.0, 0.25]).unwrap();
        let ds = Dataset {
            x: DMatrix::from_row_slice(2, 3, &[2.0, 1.0, 0.5, 2.0, -1.0, 0.5]),
            y: DVector::zeros(2),
            eps: DVector::zeros(2),
            seed: 0,
        };
        let z = whitened_columns(&ds, &spec).unwrap();
        assert_eq!(z[0].as_slice(), &[1.0, 1.0]);
        assert_eq!(z[2].as_slice(), &[1.0, 1.0]);

        let bad = CovarianceSpectrum::isotropic(2).unwrap();
        assert!(whitened_columns(&ds, &bad).is_err());
    }

    #[test]
    fn whitening_isotropic_and_reassembly() {
        let inst = instance(8, 20, 1.0, FeatureDistribution::Gaussian);
        let ds = sample_dataset(&inst, 1).unwrap();
        let z = whitened_columns(&ds, &inst.spectrum).unwrap();
        for (i, zi) in z.iter().enumerate() {
            assert_eq!(zi, &ds.x.column(i).into_owned());
        }

        let spec = CovarianceSpectrum::poly(1.0, 20).unwrap();
        let inst = ProblemInstance::new(
            spec.clone(),
            DVector::zeros(20),
            8,
            FeatureDistribution::Uniform,
            NoiseModel::new(0.0).unwrap(),
        )
        .unwrap();
        let ds = sample_dataset(&inst, 2).unwrap();
        let z = whitened_columns(&ds, &spec).unwrap();
        let mut a = DMatrix::zeros(8, 8);
        for (l, zi) in spec.lambdas().iter().zip(&z) {
            a += zi * zi.transpose() * *l;
        }
        let direct = &ds.x * ds.x.transpose();
        assert!(linalg::rel_frobenius(&a, &direct) < 1e-10);
    }

    #[test]
    fn whitened_norm_monte_carlo() {
        let spec = CovarianceSpectrum::poly(0.5, 150).unwrap();
        let inst = ProblemInstance::new(
            spec.clone(),
            DVector::zeros(150),
            100,
            FeatureDistribution::Gaussian,
            NoiseModel::new(1.0).unwrap(),
        )
        .unwrap();
        let mut acc = 0.0;
        for t in 0..100 {
            let ds = sample_dataset(&inst, trial_seed(5, t)).unwrap();
            let z = whitened_columns(&ds, &spec).unwrap();
            acc += z[7].norm_squared() / 100.0;
        }
        assert!((acc / 100.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn rank_certificates() {
        let inst = instance(10, 20, 1.0, FeatureDistribution::Gaussian);
        let ds = sample_dataset(&inst, 0).unwrap();
        assert!(rank_certificate(&ds.x).full_rank);

        let mut dup = ds.x.clone();
        let row = dup.row(0).into_owned();
        dup.set_row(3, &row);
        assert!(!rank_certificate(&dup).full_rank);

        let zero = rank_certificate(&DMatrix::zeros(4, 9));
        assert!(!zero.full_rank);
        assert_eq!(zero.s_min, 0.0);
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|t| trial_seed(42, t)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }

    #[test]
    fn csv_export_shape() {
        let inst = instance(3, 5, 0.5, FeatureDistribution::Gaussian);
        let ds = sample_dataset(&inst, 0).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x0,x1,x2,x3,x4,y,eps");
        assert_eq!(lines.len(), 4);
        let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first[5], ds.y[0]);
        assert_eq!(first[6], ds.eps[0]);
    }

    #[test]
    fn preset_strings() {
        let t: ThetaStarPreset = "random_unit(7)".parse().unwrap();
        assert_eq!(t, ThetaStarPreset::RandomUnit(7));
        assert!((t.build(30).unwrap().norm() - 1.0).abs() < 1e-12);
        assert_eq!("e1".parse::<ThetaStarPreset>().unwrap().build(3).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert!("explicit([1, 2])".parse::<ThetaStarPreset>().unwrap().build(3).is_err());
        assert_eq!("uniform".parse::<FeatureDistribution>().unwrap(), FeatureDistribution::Uniform);
    }
}
