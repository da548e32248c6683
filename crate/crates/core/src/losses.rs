//! Square and pinball losses, and the synthetic environments that draw i.i.d. samples
//! for them.
//!
//! Optimizers only see an [`Environment`] through [`Environment::sample`] and
//! [`Environment::gradient`]. The minimizer `θ*` is reachable only through
//! [`Environment::metrics`], which the harness uses for error curves.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::primitives::{dot, DenseVector};
use crate::rng::{stream_rng, Stream};

/// Holdout size for Monte-Carlo risk estimates.
pub const HOLDOUT_SIZE: usize = 100_000;

pub fn square_loss(theta: &DenseVector, x: &DenseVector, y: f64) -> Result<f64> {
    let r = y - theta.dot(x)?;
    Ok(r * r)
}

/// `2x(xᵀθ − y)`.
pub fn square_grad(theta: &DenseVector, x: &DenseVector, y: f64) -> Result<DenseVector> {
    let c = 2.0 * (theta.dot(x)? - y);
    DenseVector::new(x.iter().map(|v| c * v).collect())
}

/// `ρ(u) = u(α_q − 1{u<0})`.
pub fn pinball(u: f64, alpha_q: f64) -> f64 {
    u * (alpha_q - if u < 0.0 { 1.0 } else { 0.0 })
}

fn check_level(alpha_q: f64) -> Result<()> {
    if alpha_q > 0.0 && alpha_q < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("quantile level must lie in (0,1), got {alpha_q}")))
    }
}

pub fn pinball_loss(theta: &DenseVector, x: &DenseVector, y: f64, alpha_q: f64) -> Result<f64> {
    check_level(alpha_q)?;
    Ok(pinball(y - theta.dot(x)?, alpha_q))
}

/// `−x(α_q − 1{u<0})`; at the kink `u = 0` the factor is `α_q − 1`.
pub fn pinball_subgrad(
    theta: &DenseVector,
    x: &DenseVector,
    y: f64,
    alpha_q: f64,
) -> Result<DenseVector> {
    check_level(alpha_q)?;
    let u = y - theta.dot(x)?;
    let factor = if u <= 0.0 { alpha_q - 1.0 } else { alpha_q };
    DenseVector::new(x.iter().map(|v| -factor * v).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossFamily {
    Square,
    /// Pinball loss at level `alpha_q`, with a constant covariate prepended.
    Quantile { alpha_q: f64 },
}

/// Distribution of each covariate (coordinates are independent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Design {
    Gaussian,
    /// Standard normal conditioned on `|x| ≤ bound`.
    TruncatedGaussian { bound: f64 },
}

/// Environment settings. `d` counts covariates; quantile environments add the intercept
/// coordinate on top, see [`Environment::dim`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub loss: LossFamily,
    pub d: usize,
    pub d0: usize,
    pub noise_sd: f64,
    pub design: Design,
    /// Noise is conditioned on `|ε| ≤ noise_bound` when set (square loss only).
    pub noise_bound: Option<f64>,
    pub seed: u64,
}

impl EnvConfig {
    pub fn square(d: usize, d0: usize, noise_sd: f64, seed: u64) -> Self {
        EnvConfig {
            loss: LossFamily::Square,
            d,
            d0,
            noise_sd,
            design: Design::Gaussian,
            noise_bound: None,
            seed,
        }
    }

    pub fn quantile(d: usize, d0: usize, alpha_q: f64, noise_sd: f64, seed: u64) -> Self {
        EnvConfig {
            loss: LossFamily::Quantile { alpha_q },
            ..EnvConfig::square(d, d0, noise_sd, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d0 < 1 || self.d0 > self.d {
            return Err(Error::invalid(format!(
                "need 1 <= d0 <= d, got d0 = {}, d = {}",
                self.d0, self.d
            )));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::invalid("noise_sd must be finite and >= 0"));
        }
        if let Design::TruncatedGaussian { bound } = self.design {
            if !(bound > 0.0 && bound.is_finite()) {
                return Err(Error::invalid("design bound must be > 0"));
            }
        }
        if let Some(nb) = self.noise_bound {
            if !(nb > 0.0 && nb.is_finite()) {
                return Err(Error::invalid("noise bound must be > 0"));
            }
        }
        if let LossFamily::Quantile { alpha_q } = self.loss {
            check_level(alpha_q)?;
            if self.noise_bound.is_some() {
                return Err(Error::invalid("truncated noise is only supported for the square loss"));
            }
        }
        Ok(())
    }
}

/// Constants of a square-loss environment with bounded design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareLossSpec {
    /// Almost-sure bound on `‖x‖∞`.
    pub x: f64,
    /// Almost-sure bound on `|y|`.
    pub y: f64,
    /// Noise variance.
    pub sigma2: f64,
    /// Smallest eigenvalue of the covariate covariance.
    pub alpha: f64,
}

/// One observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: DenseVector,
    pub y: f64,
}

/// An excess-risk value with its Monte-Carlo standard error (0 when exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub value: f64,
    pub se: f64,
}

/// A seeded stream of i.i.d. samples from a sparse linear model.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    theta_star: DenseVector,
    rng: ChaCha8Rng,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn truncated_normal<R: Rng>(rng: &mut R, bound: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= bound {
            return z;
        }
    }
}

/// Variance of a standard normal conditioned on `|z| ≤ c`.
pub fn truncated_normal_variance(c: f64) -> f64 {
    let n = std_normal();
    1.0 - 2.0 * c * n.pdf(c) / (2.0 * n.cdf(c) - 1.0)
}

/// `E[ρ(Z)]` for `Z ~ N(mu, s²)`.
pub fn gaussian_pinball_risk(mu: f64, s: f64, alpha_q: f64) -> f64 {
    if s == 0.0 {
        return pinball(mu, alpha_q);
    }
    let n = std_normal();
    mu * (alpha_q - n.cdf(-mu / s)) + s * n.pdf(mu / s)
}

impl Environment {
    /// Square-loss environment with standard Gaussian design.
    pub fn square(d: usize, d0: usize, noise_sd: f64, seed: u64) -> Result<Self> {
        Environment::new(EnvConfig::square(d, d0, noise_sd, seed))
    }

    /// Quantile environment at level `alpha_q` with Gaussian noise.
    pub fn quantile(d: usize, d0: usize, alpha_q: f64, noise_sd: f64, seed: u64) -> Result<Self> {
        Environment::new(EnvConfig::quantile(d, d0, alpha_q, noise_sd, seed))
    }

    /// `θ*` has `d0` nonzero covariate coefficients at uniform positions, drawn as
    /// standard normals rescaled to unit l1 norm. Quantile environments prepend the
    /// intercept `noise_sd·Φ⁻¹(α_q)`.
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let mut prng = stream_rng(cfg.seed, Stream::Parameter);
        let support = sample_indices(&mut prng, cfg.d, cfg.d0);
        let mut coef = vec![0.0; cfg.d];
        for j in support.iter() {
            let z: f64 = StandardNormal.sample(&mut prng);
            coef[j] = z;
        }
        let l1: f64 = coef.iter().map(|v| v.abs()).sum();
        coef.iter_mut().for_each(|v| *v /= l1);
        let theta_star = match cfg.loss {
            LossFamily::Square => coef,
            LossFamily::Quantile { alpha_q } => {
                let shift = cfg.noise_sd * std_normal().inverse_cdf(alpha_q);
                std::iter::once(shift).chain(coef).collect()
            }
        };
        Ok(Environment {
            cfg,
            theta_star: DenseVector::new(theta_star)?,
            rng: stream_rng(cfg.seed, Stream::Samples),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Dimension of the parameter vector: `d`, or `d + 1` with an intercept.
    pub fn dim(&self) -> usize {
        match self.cfg.loss {
            LossFamily::Square => self.cfg.d,
            LossFamily::Quantile { .. } => self.cfg.d + 1,
        }
    }

    fn has_intercept(&self) -> bool {
        matches!(self.cfg.loss, LossFamily::Quantile { .. })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Sample {
        let mut x = Vec::with_capacity(self.dim());
        if self.has_intercept() {
            x.push(1.0);
        }
        for _ in 0..self.cfg.d {
            x.push(match self.cfg.design {
                Design::Gaussian => StandardNormal.sample(rng),
                Design::TruncatedGaussian { bound } => truncated_normal(rng, bound),
            });
        }
        let signal = if self.has_intercept() {
            dot(&x[1..], &self.theta_star.as_slice()[1..])
        } else {
            dot(&x, self.theta_star.as_slice())
        };
        let z = match self.cfg.noise_bound {
            Some(nb) if self.cfg.noise_sd > 0.0 => truncated_normal(rng, nb / self.cfg.noise_sd),
            _ => StandardNormal.sample(rng),
        };
        Sample {
            x: DenseVector::new(x).expect("finite draws"),
            y: signal + self.cfg.noise_sd * z,
        }
    }

    /// Next sample of the training stream.
    pub fn sample(&mut self) -> Sample {
        let mut rng = self.rng.clone();
        let s = self.draw(&mut rng);
        self.rng = rng;
        s
    }

    pub fn loss(&self, theta: &DenseVector, s: &Sample) -> Result<f64> {
        match self.cfg.loss {
            LossFamily::Square => square_loss(theta, &s.x, s.y),
            LossFamily::Quantile { alpha_q } => pinball_loss(theta, &s.x, s.y, alpha_q),
        }
    }

    pub fn gradient(&self, theta: &DenseVector, s: &Sample) -> Result<DenseVector> {
        match self.cfg.loss {
            LossFamily::Square => square_grad(theta, &s.x, s.y),
            LossFamily::Quantile { alpha_q } => pinball_subgrad(theta, &s.x, s.y, alpha_q),
        }
    }

    /// Strong-convexity constant of the risk when known in closed form (square loss).
    pub fn strong_convexity(&self) -> Option<f64> {
        match self.cfg.loss {
            LossFamily::Square => Some(self.design_variance()),
            LossFamily::Quantile { .. } => None,
        }
    }

    fn design_variance(&self) -> f64 {
        match self.cfg.design {
            Design::Gaussian => 1.0,
            Design::TruncatedGaussian { bound } => truncated_normal_variance(bound),
        }
    }

    /// Almost-sure constants for square-loss environments with truncated design and noise.
    pub fn square_spec(&self) -> Option<SquareLossSpec> {
        match (self.cfg.loss, self.cfg.design) {
            (LossFamily::Square, Design::TruncatedGaussian { bound }) => {
                let noise = match self.cfg.noise_bound {
                    Some(nb) => nb,
                    None if self.cfg.noise_sd == 0.0 => 0.0,
                    None => return None,
                };
                Some(SquareLossSpec {
                    x: bound,
                    y: bound * self.theta_star_l1() + noise,
                    sigma2: self.noise_variance(),
                    alpha: self.design_variance(),
                })
            }
            _ => None,
        }
    }

    fn theta_star_l1(&self) -> f64 {
        self.theta_star.iter().map(|v| v.abs()).sum()
    }

    fn noise_variance(&self) -> f64 {
        let s2 = self.cfg.noise_sd * self.cfg.noise_sd;
        match self.cfg.noise_bound {
            Some(nb) if s2 > 0.0 => s2 * truncated_normal_variance(nb / self.cfg.noise_sd),
            _ => s2,
        }
    }

    /// Metrics view; the only way to reach `θ*`.
    pub fn metrics(&self) -> Metrics<'_> {
        Metrics { env: self }
    }
}

/// `θ*`-aware evaluation of parameters.
pub struct Metrics<'a> {
    env: &'a Environment,
}

impl Metrics<'_> {
    pub fn theta_star(&self) -> &DenseVector {
        &self.env.theta_star
    }

    pub fn l2_error(&self, theta: &DenseVector) -> Result<f64> {
        crate::primitives::excess_l2(theta, &self.env.theta_star)
    }

    /// Closed-form excess risk when available: square loss with independent covariates,
    /// quantile loss with Gaussian design and noise.
    pub fn exact_excess_risk(&self, theta: &DenseVector) -> Option<Result<f64>> {
        let env = self.env;
        let diff = match theta.sub(&env.theta_star) {
            Ok(d) => d,
            Err(e) => return Some(Err(e)),
        };
        match (env.cfg.loss, env.cfg.design) {
            (LossFamily::Square, _) => {
                let sq: f64 = diff.iter().map(|v| v * v).sum();
                Some(Ok(env.design_variance() * sq))
            }
            (LossFamily::Quantile { alpha_q }, Design::Gaussian) => {
                let cov_sq: f64 = diff.as_slice()[1..].iter().map(|v| v * v).sum();
                let sigma2 = env.cfg.noise_sd * env.cfg.noise_sd;
                let at = gaussian_pinball_risk(-theta[0], (sigma2 + cov_sq).sqrt(), alpha_q);
                let best =
                    gaussian_pinball_risk(-env.theta_star[0], env.cfg.noise_sd, alpha_q);
                Some(Ok((at - best).max(0.0)))
            }
            _ => None,
        }
    }

    /// Paired Monte-Carlo estimate `mean(ℓ(θ) − ℓ(θ*))` over `n` holdout samples drawn
    /// from the environment's holdout stream (identical on every call).
    pub fn mc_excess_risk(&self, theta: &DenseVector, n: usize) -> Result<RiskEstimate> {
        theta.check_dim(self.env.dim())?;
        if n < 2 {
            return Err(Error::invalid("Monte-Carlo risk needs at least 2 samples"));
        }
        let mut rng = stream_rng(self.env.cfg.seed, Stream::Holdout);
        let (mut mean, mut m2) = (0.0, 0.0);
        for k in 1..=n {
            let s = self.env.draw(&mut rng);
            let diff = self.env.loss(theta, &s)? - self.env.loss(&self.env.theta_star, &s)?;
            let delta = diff - mean;
            mean += delta / k as f64;
            m2 += delta * (diff - mean);
        }
        let var = m2 / (n - 1) as f64;
        Ok(RiskEstimate {
            value: mean,
            se: (var / n as f64).sqrt(),
        })
    }

    /// Materializes the first `n` holdout samples for repeated Monte-Carlo evaluation.
    pub fn holdout(&self, n: usize) -> Result<Holdout> {
        if n < 2 {
            return Err(Error::invalid("Monte-Carlo risk needs at least 2 samples"));
        }
        let mut rng = stream_rng(self.env.cfg.seed, Stream::Holdout);
        let samples: Vec<Sample> = (0..n).map(|_| self.env.draw(&mut rng)).collect();
        let star_losses = samples
            .iter()
            .map(|s| self.env.loss(&self.env.theta_star, s))
            .collect::<Result<_>>()?;
        Ok(Holdout {
            samples,
            star_losses,
        })
    }

    /// Exact risk when available, otherwise a Monte-Carlo estimate on the default holdout.
    pub fn excess_risk(&self, theta: &DenseVector) -> Result<RiskEstimate> {
        match self.exact_excess_risk(theta) {
            Some(v) => Ok(RiskEstimate { value: v?, se: 0.0 }),
            None => self.mc_excess_risk(theta, HOLDOUT_SIZE),
        }
    }
}

/// Fixed holdout samples with the losses of `θ*` cached; same draws as
/// [`Metrics::mc_excess_risk`].
#[derive(Debug, Clone)]
pub struct Holdout {
    samples: Vec<Sample>,
    star_losses: Vec<f64>,
}

impl Holdout {
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn excess_risk(&self, env: &Environment, theta: &DenseVector) -> Result<RiskEstimate> {
        let n = self.samples.len();
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, (s, ls)) in self.samples.iter().zip(&self.star_losses).enumerate() {
            let diff = env.loss(theta, s)? - ls;
            let delta = diff - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (diff - mean);
        }
        Ok(RiskEstimate {
            value: mean,
            se: (m2 / (n - 1) as f64 / n as f64).sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn square_examples() {
        let th = v(&[0.0, 0.0]);
        let x = v(&[1.0, 0.0]);
        assert_eq!(square_loss(&th, &x, 1.0).unwrap(), 1.0);
        assert_eq!(square_grad(&th, &x, 1.0).unwrap(), v(&[-2.0, 0.0]));
        let star = v(&[0.5, -0.5]);
        let x2 = v(&[0.3, 0.7]);
        let y = star.dot(&x2).unwrap();
        assert_eq!(square_loss(&star, &x2, y).unwrap(), 0.0);
        assert_eq!(square_grad(&star, &x2, y).unwrap().sup_norm(), 0.0);
        assert!(square_loss(&th, &v(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn pinball_examples() {
        let z = v(&[0.0]);
        let one = v(&[1.0]);
        assert!((pinball_loss(&z, &one, 1.0, 0.8).unwrap() - 0.8).abs() < 1e-15);
        assert!((pinball_loss(&z, &one, -1.0, 0.8).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(pinball_loss(&z, &one, 0.0, 0.8).unwrap(), 0.0);
        let kink = pinball_subgrad(&z, &one, 0.0, 0.8).unwrap();
        assert!((kink[0] - 0.2).abs() < 1e-15);
        assert!(pinball_loss(&z, &one, 0.0, 1.0).is_err());
    }

    #[test]
    fn square_environment_shape() {
        let env = Environment::square(50, 5, 0.1, 3).unwrap();
        let star = env.metrics().theta_star().clone();
        assert_eq!(star.nnz(), 5);
        assert!((star.iter().map(|x| x.abs()).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(Environment::square(3, 4, 0.1, 1).is_err());
        assert!(Environment::square(3, 0, 0.1, 1).is_err());
    }

    #[test]
    fn noise_free_labels_are_exact() {
        let mut env = Environment::square(10, 3, 0.0, 8).unwrap();
        let star = env.metrics().theta_star().clone();
        for _ in 0..50 {
            let s = env.sample();
            assert_eq!(s.y, star.dot(&s.x).unwrap());
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let mut a = Environment::square(6, 2, 0.3, 42).unwrap();
        let mut b = Environment::square(6, 2, 0.3, 42).unwrap();
        for _ in 0..20 {
            assert_eq!(a.sample(), b.sample());
        }
        let mut c = Environment::square(6, 2, 0.3, 43).unwrap();
        assert_ne!(a.sample(), c.sample());
    }

    #[test]
    fn optimal_loss_is_noise_variance() {
        let mut env = Environment::square(8, 2, 0.4, 17).unwrap();
        let star = env.metrics().theta_star().clone();
        let n = 100_000;
        let losses: Vec<f64> = (0..n).map(|_| {
            let s = env.sample();
            env.loss(&star, &s).unwrap()
        }).collect();
        let mean = losses.iter().sum::<f64>() / n as f64;
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.16).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn quantile_intercept_shift() {
        let env = Environment::quantile(5, 2, 0.8, 0.1, 1).unwrap();
        assert_eq!(env.dim(), 6);
        assert!((env.metrics().theta_star()[0] - 0.0841621).abs() < 1e-4);
        let med = Environment::quantile(5, 2, 0.5, 0.3, 1).unwrap();
        assert!(med.metrics().theta_star()[0].abs() < 1e-12);
    }

    #[test]
    fn quantile_minimizer_by_grid_search() {
        // d = 1: θ = (intercept, slope). Scan the intercept with the slope fixed at θ*.
        let mut env = Environment::quantile(1, 1, 0.8, 0.1, 5).unwrap();
        let star = env.metrics().theta_star().clone();
        let samples: Vec<Sample> = (0..1_000_000).map(|_| env.sample()).collect();
        let mut best = (f64::INFINITY, 0.0);
        for k in -40..=40 {
            let b0 = star[0] + k as f64 * 0.0025;
            let th = v(&[b0, star[1]]);
            let r: f64 = samples.iter().map(|s| env.loss(&th, s).unwrap()).sum();
            if r < best.0 {
                best = (r, b0);
            }
        }
        assert!((best.1 - star[0]).abs() < 0.01);
    }

    #[test]
    fn gaussian_pinball_risk_matches_sampling() {
        let env = Environment::quantile(4, 2, 0.8, 0.2, 9).unwrap();
        let mut th = env.metrics().theta_star().clone().into_vec();
        th[1] += 0.1;
        th[0] -= 0.05;
        let th = v(&th);
        let exact = env.metrics().exact_excess_risk(&th).unwrap().unwrap();
        let mc = env.metrics().mc_excess_risk(&th, HOLDOUT_SIZE).unwrap();
        assert!((exact - mc.value).abs() < 3.0 * mc.se + 1e-12, "{exact} vs {mc:?}");
        let zero = env.metrics().excess_risk(env.metrics().theta_star()).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn cached_holdout_matches_streaming_estimate() {
        let env = Environment::quantile(3, 1, 0.3, 0.5, 4).unwrap();
        let mut th = env.metrics().theta_star().clone().into_vec();
        th[2] -= 0.2;
        let th = v(&th);
        let h = env.metrics().holdout(5000).unwrap();
        let a = h.excess_risk(&env, &th).unwrap();
        let b = env.metrics().mc_excess_risk(&th, 5000).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        assert!((a.se - b.se).abs() < 1e-12);
    }

    #[test]
    fn square_excess_risk_examples() {
        let env = Environment::square(4, 2, 0.1, 2).unwrap();
        let mut th = env.metrics().theta_star().clone().into_vec();
        th[0] += 1.0;
        assert!((env.metrics().excess_risk(&v(&th)).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_design_constants() {
        let cfg = EnvConfig {
            design: Design::TruncatedGaussian { bound: 1.5 },
            noise_bound: Some(0.3),
            ..EnvConfig::square(10, 3, 0.1, 4)
        };
        let mut env = Environment::new(cfg).unwrap();
        let spec = env.square_spec().unwrap();
        assert!((spec.x - 1.5).abs() < 1e-15);
        assert!(spec.alpha < 1.0 && spec.alpha > 0.5);
        for _ in 0..2000 {
            let s = env.sample();
            assert!(s.x.sup_norm() <= spec.x);
            assert!(s.y.abs() <= spec.y);
        }
        // Closed form against sampling for the truncated variance.
        let mut rng = stream_rng(1, Stream::Auxiliary);
        let n = 200_000;
        let m2: f64 = (0..n).map(|_| truncated_normal(&mut rng, 1.5).powi(2)).sum::<f64>() / n as f64;
        assert!((m2 - truncated_normal_variance(1.5)).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn square_grad_matches_finite_differences(
            th in proptest::collection::vec(-2.0f64..2.0, 3),
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            y in -3.0f64..3.0,
        ) {
            let (th, x) = (v(&th), v(&x));
            let g = square_grad(&th, &x, y).unwrap();
            let h = 1e-5;
            for j in 0..3 {
                let mut p = th.clone().into_vec();
                let mut m = p.clone();
                p[j] += h;
                m[j] -= h;
                let fd = (square_loss(&v(&p), &x, y).unwrap() - square_loss(&v(&m), &x, y).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()));
            }
        }

        #[test]
        fn subgradient_inequality(
            a in proptest::collection::vec(-2.0f64..2.0, 3),
            b in proptest::collection::vec(-2.0f64..2.0, 3),
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            y in -3.0f64..3.0,
            q in 0.05f64..0.95,
        ) {
            let (a, b, x) = (v(&a), v(&b), v(&x));
            let step = b.sub(&a).unwrap();
            let gp = pinball_subgrad(&a, &x, y, q).unwrap();
            let lp = pinball_loss(&b, &x, y, q).unwrap() - pinball_loss(&a, &x, y, q).unwrap();
            prop_assert!(lp >= gp.dot(&step).unwrap() - 1e-9);
            let gs = square_grad(&a, &x, y).unwrap();
            let ls = square_loss(&b, &x, y).unwrap() - square_loss(&a, &x, y).unwrap();
            prop_assert!(ls >= gs.dot(&step).unwrap() - 1e-9);
        }
    }
}
