//! Seeded data generators for the simulation designs.
//!
//! Randomness comes from ChaCha8 (`rand_chacha` 0.9). A [`Seed`] selects a
//! key via `ChaCha8Rng::seed_from_u64(base)` and each replication owns four
//! ChaCha streams, `4 * stream + component`, so covariates, noise, loadings
//! and the t-mixing variables never share a sequence. Gaussian deviates use
//! the ziggurat sampler of `rand_distr::StandardNormal`; chi-squared mixing
//! variables use `rand_distr::ChiSquared`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::PanelMatrix;
use crate::spectra::{DataMatrix, ResponseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub base: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Component {
    Covariates = 0,
    Noise = 1,
    Loadings = 2,
    Mixing = 3,
}

impl Seed {
    pub fn new(base: u64, stream: u64) -> Self {
        Self { base, stream }
    }

    fn rng(&self, component: Component) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base);
        rng.set_stream(self.stream.wrapping_mul(4).wrapping_add(component as u64));
        rng
    }
}

/// `sign(x) |x|^power`; the odd extension of `x^power` to negative `x`.
pub fn signed_pow(x: f64, power: f64) -> f64 {
    x.signum() * x.abs().powf(power)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdrExample {
    /// `Y = X1 / {0.5 + |X2 + 1.5|^1.5} + X3^3 / 4 + 0.2 e`, q = 3.
    Ex1,
    /// `Y = X1 (X2 + X3 + 1) + 0.5 e`, q = 2.
    Ex2,
    /// `Y = (X1 + X2) + a (X1 + X2) X3^1.5 + e`, q = 2, limit q = 1.
    Ex3,
    /// `Y = 0.25 exp(2 X1) + a X2^3 + e`, q = 2, limit q = 1.
    Ex4,
}

impl SdrExample {
    fn default_sigma(self) -> f64 {
        match self {
            SdrExample::Ex1 => 0.2,
            SdrExample::Ex2 => 0.5,
            SdrExample::Ex3 | SdrExample::Ex4 => 1.0,
        }
    }

    /// Covariates the mean function touches.
    fn active(self) -> usize {
        match self {
            SdrExample::Ex4 => 2,
            _ => 3,
        }
    }

    pub fn is_local(self) -> bool {
        matches!(self, SdrExample::Ex3 | SdrExample::Ex4)
    }
}

impl fmt::Display for SdrExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SdrExample::Ex1 => "ex1",
            SdrExample::Ex2 => "ex2",
            SdrExample::Ex3 => "ex3",
            SdrExample::Ex4 => "ex4",
        })
    }
}

/// Coefficient `a` of the vanishing component in the local examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Drift {
    /// `a = 2 n^{-1/4}` for ex3 and `a = n^{-1/4}` for ex4.
    #[default]
    Default,
    /// The limiting model, `a = 0`.
    Zero,
    /// `a = scale * n^{-exponent}`.
    Power { scale: f64, exponent: f64 },
}

impl Drift {
    pub fn coefficient(self, example: SdrExample, n: usize) -> f64 {
        let n = n as f64;
        match self {
            Drift::Default => match example {
                SdrExample::Ex3 => 2.0 * n.powf(-0.25),
                SdrExample::Ex4 => n.powf(-0.25),
                _ => 0.0,
            },
            Drift::Zero => 0.0,
            Drift::Power { scale, exponent } => scale * n.powf(-exponent),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdrModelSpec {
    pub example: SdrExample,
    pub n: usize,
    pub p: usize,
    pub drift: Drift,
    /// Noise standard deviation; `None` uses the example's value.
    pub sigma: Option<f64>,
}

impl SdrModelSpec {
    pub fn new(example: SdrExample, n: usize, p: usize) -> Self {
        Self {
            example,
            n,
            p,
            drift: Drift::Default,
            sigma: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 20 {
            return Err(Error::InvalidArgument(format!("need n >= 20, got {}", self.n)));
        }
        if self.p < self.example.active() {
            return Err(Error::InvalidArgument(format!(
                "{} needs p >= {}, got {}",
                self.example,
                self.example.active(),
                self.p
            )));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise sd must be >= 0, got {s}")));
            }
        }
        Ok(())
    }

    /// True structural dimension for this `n`; for the local examples this
    /// drops to 1 when the drift coefficient is zero.
    pub fn q_true(&self) -> usize {
        match self.example {
            SdrExample::Ex1 => 3,
            SdrExample::Ex2 => 2,
            SdrExample::Ex3 | SdrExample::Ex4 => {
                if self.drift.coefficient(self.example, self.n) == 0.0 {
                    1
                } else {
                    2
                }
            }
        }
    }

    /// Dimension of the limiting model (local examples only).
    pub fn q_limit(&self) -> Option<usize> {
        self.example.is_local().then_some(1)
    }

    /// Noise-free mean function at one covariate row.
    pub fn mean_function(&self, x: &[f64]) -> f64 {
        let a = self.drift.coefficient(self.example, self.n);
        match self.example {
            SdrExample::Ex1 => {
                x[0] / (0.5 + (x[1] + 1.5).abs().powf(1.5)) + x[2].powi(3) / 4.0
            }
            SdrExample::Ex2 => x[0] * (x[1] + x[2] + 1.0),
            SdrExample::Ex3 => {
                let u = x[0] + x[1];
                u + a * u * signed_pow(x[2], 1.5)
            }
            SdrExample::Ex4 => 0.25 * (2.0 * x[0]).exp() + a * x[1].powi(3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdrSample {
    pub x: DataMatrix,
    pub y: ResponseVector,
    pub q_true: usize,
    pub q_limit: Option<usize>,
}

/// Draws `X ~ N(0, I_p)` row by row and `Y = mean(X) + sigma e`.
pub fn gen_sdr(spec: &SdrModelSpec, seed: Seed) -> Result<SdrSample> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut xr = seed.rng(Component::Covariates);
    let mut er = seed.rng(Component::Noise);
    let mut rows = Vec::with_capacity(n * p);
    for _ in 0..n * p {
        rows.push(StandardNormal.sample(&mut xr));
    }
    let x = DMatrix::from_row_slice(n, p, &rows);
    let sigma = spec.sigma.unwrap_or_else(|| spec.example.default_sigma());
    let y: Vec<f64> = rows
        .chunks_exact(p)
        .map(|row| {
            let e: f64 = StandardNormal.sample(&mut er);
            spec.mean_function(row) + sigma * e
        })
        .collect();
    Ok(SdrSample {
        x: DataMatrix::new(x)?,
        y: ResponseVector::new(y)?,
        q_true: spec.q_true(),
        q_limit: spec.q_limit(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FactorDist {
    Normal,
    /// Multivariate t with `nu > 2` degrees of freedom, scaled so that its
    /// covariance equals the target covariance.
    StudentT { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorCov {
    /// Identity.
    Sigma1,
    /// `0.8^{|i-j|}`.
    Sigma2,
    /// 1 on the diagonal, 0.7 elsewhere.
    Sigma3,
}

impl FactorCov {
    pub fn matrix(self, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                return 1.0;
            }
            match self {
                FactorCov::Sigma1 => 0.0,
                FactorCov::Sigma2 => 0.8f64.powi(i.abs_diff(j) as i32),
                FactorCov::Sigma3 => 0.7,
            }
        })
    }
}

impl FromStr for FactorCov {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigma1" | "1" | "identity" => Ok(FactorCov::Sigma1),
            "sigma2" | "2" | "ar" => Ok(FactorCov::Sigma2),
            "sigma3" | "3" | "equicorrelation" => Ok(FactorCov::Sigma3),
            other => Err(Error::InvalidArgument(format!(
                "unknown factor covariance `{other}` (sigma1, sigma2 or sigma3)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorModelSpec {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub factor_dist: FactorDist,
    pub cov: FactorCov,
    /// Multiplies the loadings; 0 gives a pure-noise panel.
    pub loading_scale: f64,
}

impl FactorModelSpec {
    pub fn new(n: usize, p: usize, factor_dist: FactorDist, cov: FactorCov) -> Self {
        Self {
            n,
            p,
            d: 4,
            factor_dist,
            cov,
            loading_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > self.n.min(self.p) {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= d <= min(n, p), got d = {}, n = {}, p = {}",
                self.d, self.n, self.p
            )));
        }
        if self.n < 3 || self.p < 3 {
            return Err(Error::InvalidArgument("need n >= 3 and p >= 3".into()));
        }
        if let FactorDist::StudentT { nu } = self.factor_dist {
            if !(nu > 2.0 && nu.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "t factors need finite nu > 2 for a covariance to exist, got {nu}"
                )));
            }
        }
        Ok(())
    }
}

/// The `d x n` factor matrix, columns `F_t` with covariance `Sigma`.
pub fn sample_factors(spec: &FactorModelSpec, seed: Seed) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let d = spec.d;
    let chol = Cholesky::new(spec.cov.matrix(d))
        .ok_or_else(|| Error::Invariant("factor covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut fr = seed.rng(Component::Covariates);
    let mut mr = seed.rng(Component::Mixing);
    let mix = match spec.factor_dist {
        FactorDist::Normal => None,
        FactorDist::StudentT { nu } => Some((
            nu,
            ChiSquared::new(nu).map_err(|e| Error::InvalidArgument(format!("chi-squared({nu}): {e}")))?,
        )),
    };
    let z = DMatrix::from_fn(d, spec.n, |_, _| StandardNormal.sample(&mut fr));
    let mut f = &l * z;
    if let Some((nu, chi)) = mix {
        for mut col in f.column_iter_mut() {
            let w: f64 = chi.sample(&mut mr);
            col *= ((nu - 2.0) / w).sqrt();
        }
    }
    Ok(f)
}

/// `Y = B F + U` with `B` rows from `N(0, I_d)` drawn per call and `U`
/// standard normal.
pub fn gen_factor(spec: &FactorModelSpec, seed: Seed) -> Result<PanelMatrix> {
    let f = sample_factors(spec, seed)?;
    let mut br = seed.rng(Component::Loadings);
    let mut ur = seed.rng(Component::Noise);
    let b = DMatrix::<f64>::from_fn(spec.p, spec.d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut br);
        spec.loading_scale * z
    });
    let u = DMatrix::<f64>::from_fn(spec.p, spec.n, |_, _| StandardNormal.sample(&mut ur));
    PanelMatrix::new(b * f + u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn signed_pow_values() {
        assert_abs_diff_eq!(signed_pow(-4.0, 1.5), -8.0, epsilon = 1e-12);
        assert_eq!(signed_pow(0.0, 1.5), 0.0);
        assert_eq!(signed_pow(1.0, 1.5), 1.0);
    }

    #[test]
    fn ex1_mean_at_origin() {
        let spec = SdrModelSpec::new(SdrExample::Ex1, 100, 5);
        assert_eq!(spec.mean_function(&[0.0; 5]), 0.0);
        assert_eq!(spec.q_true(), 3);
    }

    #[test]
    fn ex1_noise_free_sample_matches_mean() {
        let spec = SdrModelSpec {
            sigma: Some(0.0),
            ..SdrModelSpec::new(SdrExample::Ex1, 30, 4)
        };
        let s = gen_sdr(&spec, Seed::new(1, 0)).unwrap();
        for i in 0..30 {
            let row: Vec<f64> = s.x.as_matrix().row(i).iter().copied().collect();
            assert_eq!(s.y.values()[i], spec.mean_function(&row));
        }
    }

    #[test]
    fn local_examples_limit() {
        let mut spec = SdrModelSpec::new(SdrExample::Ex3, 400, 6);
        assert_eq!(spec.q_true(), 2);
        assert_abs_diff_eq!(spec.drift.coefficient(SdrExample::Ex3, 400), 2.0 / 400f64.powf(0.25));
        spec.drift = Drift::Zero;
        assert_eq!(spec.q_true(), 1);
        assert_eq!(spec.q_limit(), Some(1));
        // a = 0 leaves the single index X1 + X2
        assert_eq!(spec.mean_function(&[1.0, 2.0, -3.0, 0.0, 0.0, 0.0]), 3.0);
        let ex4 = SdrModelSpec::new(SdrExample::Ex4, 16, 3);
        assert_abs_diff_eq!(ex4.drift.coefficient(SdrExample::Ex4, 16), 0.5);
    }

    #[test]
    fn sdr_deterministic() {
        let spec = SdrModelSpec::new(SdrExample::Ex2, 50, 6);
        let a = gen_sdr(&spec, Seed::new(7, 3)).unwrap();
        let b = gen_sdr(&spec, Seed::new(7, 3)).unwrap();
        let c = gen_sdr(&spec, Seed::new(7, 4)).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn noise_level_does_not_touch_covariates() {
        let spec = SdrModelSpec::new(SdrExample::Ex1, 40, 5);
        let quiet = SdrModelSpec {
            sigma: Some(0.0),
            ..spec
        };
        let a = gen_sdr(&spec, Seed::new(3, 1)).unwrap();
        let b = gen_sdr(&quiet, Seed::new(3, 1)).unwrap();
        assert_eq!(a.x, b.x);
        assert_ne!(a.y, b.y);
    }

    #[test]
    fn invalid_specs() {
        assert!(gen_sdr(&SdrModelSpec::new(SdrExample::Ex1, 10, 5), Seed::new(0, 0)).is_err());
        assert!(gen_sdr(&SdrModelSpec::new(SdrExample::Ex1, 50, 2), Seed::new(0, 0)).is_err());
        let f = FactorModelSpec::new(3, 10, FactorDist::Normal, FactorCov::Sigma1);
        assert!(gen_factor(&f, Seed::new(0, 0)).is_err());
        let t = FactorModelSpec::new(30, 30, FactorDist::StudentT { nu: 2.0 }, FactorCov::Sigma1);
        assert!(gen_factor(&t, Seed::new(0, 0)).is_err());
    }

    fn sample_cov(f: &DMatrix<f64>) -> DMatrix<f64> {
        f * f.transpose() / f.ncols() as f64
    }

    #[test]
    fn factor_moments_match_covariance() {
        for cov in [FactorCov::Sigma1, FactorCov::Sigma2, FactorCov::Sigma3] {
            let spec = FactorModelSpec::new(10_000, 10, FactorDist::Normal, cov);
            let f = sample_factors(&spec, Seed::new(11, 0)).unwrap();
            let diff = (sample_cov(&f) - cov.matrix(4)).amax();
            assert!(diff <= 0.06, "{cov:?}: {diff}");
        }
    }

    #[test]
    fn t_factors_scaled_to_covariance_and_heavy_tailed() {
        let spec = FactorModelSpec::new(
            10_000,
            10,
            FactorDist::StudentT { nu: 2.5 },
            FactorCov::Sigma1,
        );
        let f = sample_factors(&spec, Seed::new(5, 0)).unwrap();
        let normal = sample_factors(
            &FactorModelSpec::new(10_000, 10, FactorDist::Normal, FactorCov::Sigma1),
            Seed::new(5, 0),
        )
        .unwrap();
        let kurt = |row: Vec<f64>| {
            let m2 = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
            let m4 = row.iter().map(|v| v.powi(4)).sum::<f64>() / row.len() as f64;
            m4 / (m2 * m2) - 3.0
        };
        let kt = kurt(f.row(0).iter().copied().collect());
        let kn = kurt(normal.row(0).iter().copied().collect());
        assert!(kt > 3.0 && kn.abs() < 0.5, "t {kt}, normal {kn}");
        // second moments of a t(2.5) converge slowly; a loose check suffices
        let diag = sample_cov(&f).diagonal();
        assert!(diag.iter().all(|v| (0.5..2.0).contains(v)), "{diag}");
    }

    #[test]
    fn zero_loadings_leave_noise() {
        let spec = FactorModelSpec {
            loading_scale: 0.0,
            ..FactorModelSpec::new(40, 30, FactorDist::Normal, FactorCov::Sigma1)
        };
        let y = gen_factor(&spec, Seed::new(2, 0)).unwrap();
        let mut ur = Seed::new(2, 0).rng(Component::Noise);
        let u = DMatrix::from_fn(30, 40, |_, _| StandardNormal.sample(&mut ur));
        assert_eq!(y.as_matrix(), &u);
    }

    #[test]
    fn factor_deterministic() {
        let spec = FactorModelSpec::new(20, 40, FactorDist::StudentT { nu: 2.5 }, FactorCov::Sigma3);
        let a = gen_factor(&spec, Seed::new(9, 2)).unwrap();
        let b = gen_factor(&spec, Seed::new(9, 2)).unwrap();
        assert_eq!(a, b);
    }
}
