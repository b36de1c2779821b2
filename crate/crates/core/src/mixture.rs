//! Conditionally independent mixture models
//! `P(X ∈ A) = ∫ Π_i Q_i(A_i, θ) γ(dθ)` with a product prior
//! `γ = γ_1 × … × γ_p`.
//!
//! Redrawing `X̃_i` from `Q_i(·, θ)` after drawing `θ` from the posterior
//! given `X` yields the knockoff law with density
//! `q(y) = ∫ Π f_i(y_i, θ) Π f_i(y_{p+i}, θ) γ(dθ)`, which is invariant
//! under every swap. Each coordinate is a conjugate prior/likelihood pair,
//! so `q`, the marginal `h` and the conditional `q/h` are closed-form.

use crate::error::{check_dim, Error, Result};
use crate::quadrature::integrate;
use crate::rng::{self, Rng};
use crate::sample::{KnockoffSampler, MarginalLaw};
use crate::special::{gamma_ur, ln_factorial, ln_gamma, normal_cdf};
use crate::stats::{covariance_se, mean_se};
use crate::swap::{BaseMeasure, Density2p};
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

/// One coordinate of a conjugate mixture: a likelihood `f(t, θ)` with a
/// one-dimensional prior on `θ` and closed-form predictives.
///
/// Implementations are checked against quadrature when wrapped in a
/// [`ConjugateFamily`]; see [`check_registration`].
pub trait CoordinateFamily: Send + Sync + Debug {
    fn name(&self) -> String;
    fn measure(&self) -> BaseMeasure;
    /// Likelihood density (or pmf) `f(t, θ)`.
    fn likelihood(&self, t: f64, theta: f64) -> f64;
    fn prior_density(&self, theta: f64) -> f64;
    /// Interval containing the prior's support.
    fn prior_support(&self) -> (f64, f64);
    /// Prior mean and standard deviation, used to place quadrature
    /// breakpoints around sharply concentrated priors.
    fn prior_moments(&self) -> (f64, f64);
    /// `ln ∫ Π_k f(obs_k, θ) γ(dθ)`, in closed form.
    fn ln_predictive(&self, obs: &[f64]) -> f64;
    fn sample_prior(&self, rng: &mut Rng) -> f64;
    /// One draw from the posterior of `θ` given a single observation.
    fn sample_posterior(&self, obs: f64, rng: &mut Rng) -> f64;
    fn sample_likelihood(&self, theta: f64, rng: &mut Rng) -> f64;
    /// `Q([lo, hi], θ)`.
    fn interval_probability(&self, lo: f64, hi: f64, theta: f64) -> f64;
    /// Mean of `Q(·, θ)`.
    fn likelihood_mean(&self, theta: f64) -> f64;
    /// Whether `likelihood_mean` does not depend on `θ`.
    fn mean_is_theta_free(&self) -> bool;
    /// Prior-predictive CDF of one observation, for continuous families.
    fn predictive_cdf(&self, _t: f64) -> Option<f64> {
        None
    }
    /// Observations at which the closed forms are cross-checked.
    fn registration_points(&self) -> Vec<f64>;
    /// For counting families: the smallest `K` such that the conditional
    /// law of `X̃_i` given `X_i = obs` puts mass below `tail` above `K`.
    fn conditional_tail_bound(&self, _obs: f64, _tail: f64) -> Option<u64> {
        None
    }
}

fn gamma_ln_density(theta: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() + (shape - 1.0) * theta.ln() - rate * theta - ln_gamma(shape)
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be positive and finite, got {v}")))
    }
}

fn is_count(t: f64) -> bool {
    t >= 0.0 && t.fract() == 0.0 && t.is_finite()
}

/// `X | θ ~ Poisson(θ)`, `θ ~ Gamma(a, rate b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonGamma {
    pub a: f64,
    pub b: f64,
}

impl PoissonGamma {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        check_positive("poisson-gamma shape a", a)?;
        check_positive("poisson-gamma rate b", b)?;
        Ok(Self { a, b })
    }
}

impl CoordinateFamily for PoissonGamma {
    fn name(&self) -> String {
        format!("poisson-gamma(a={}, b={})", self.a, self.b)
    }
    fn measure(&self) -> BaseMeasure {
        BaseMeasure::Counting
    }
    fn likelihood(&self, t: f64, theta: f64) -> f64 {
        if !is_count(t) {
            return 0.0;
        }
        if theta == 0.0 {
            return if t == 0.0 { 1.0 } else { 0.0 };
        }
        (t * theta.ln() - theta - ln_factorial(t as u64)).exp()
    }
    fn prior_density(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            0.0
        } else {
            gamma_ln_density(theta, self.a, self.b).exp()
        }
    }
    fn prior_support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn prior_moments(&self) -> (f64, f64) {
        (self.a / self.b, self.a.sqrt() / self.b)
    }
    fn ln_predictive(&self, obs: &[f64]) -> f64 {
        if !obs.iter().all(|&t| is_count(t)) {
            return f64::NEG_INFINITY;
        }
        let s: f64 = obs.iter().sum();
        let m = obs.len() as f64;
        let fact: f64 = obs.iter().map(|&t| ln_factorial(t as u64)).sum();
        self.a * self.b.ln() + ln_gamma(self.a + s) - ln_gamma(self.a) - fact - (self.a + s) * (self.b + m).ln()
    }
    fn sample_prior(&self, rng: &mut Rng) -> f64 {
        Gamma::new(self.a, 1.0 / self.b).expect("validated").sample(rng)
    }
    fn sample_posterior(&self, obs: f64, rng: &mut Rng) -> f64 {
        Gamma::new(self.a + obs, 1.0 / (self.b + 1.0)).expect("validated").sample(rng)
    }
    fn sample_likelihood(&self, theta: f64, rng: &mut Rng) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        Poisson::new(theta).map(|d| d.sample(rng)).unwrap_or(0.0)
    }
    fn interval_probability(&self, lo: f64, hi: f64, theta: f64) -> f64 {
        let lo = lo.max(0.0).ceil();
        let hi = hi.floor();
        if hi < lo {
            return 0.0;
        }
        // P(X ≤ k) = Q(k+1, θ), the regularized upper incomplete gamma
        let cdf = |k: f64| if k < 0.0 { 0.0 } else if theta <= 0.0 { 1.0 } else { gamma_ur(k + 1.0, theta) };
        let upper = if hi.is_finite() { cdf(hi) } else { 1.0 };
        (upper - cdf(lo - 1.0)).max(0.0)
    }
    fn likelihood_mean(&self, theta: f64) -> f64 {
        theta
    }
    fn mean_is_theta_free(&self) -> bool {
        false
    }
    fn registration_points(&self) -> Vec<f64> {
        vec![0.0, 1.0, 3.0, 7.0]
    }
    fn conditional_tail_bound(&self, obs: f64, tail: f64) -> Option<u64> {
        // X̃ | X = obs is negative binomial: size a + obs, success (b+1)/(b+2)
        let r = self.a + obs;
        let q = 1.0 / (self.b + 2.0);
        let mut pmf = ((self.b + 1.0) / (self.b + 2.0)).powf(r);
        let mut cum = pmf;
        let mut k = 0u64;
        while 1.0 - cum >= tail {
            pmf *= (r + k as f64) / (k as f64 + 1.0) * q;
            cum += pmf;
            k += 1;
            if k > 100_000_000 {
                return None;
            }
        }
        Some(k)
    }
}

/// `X | θ ~ N(θ, σ²)`, `θ ~ N(m, τ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalNormal {
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub noise_sd: f64,
}

impl NormalNormal {
    pub fn new(prior_mean: f64, prior_sd: f64, noise_sd: f64) -> Result<Self> {
        if !prior_mean.is_finite() {
            return Err(Error::InvalidInput("normal-normal prior mean must be finite".into()));
        }
        check_positive("normal-normal prior sd", prior_sd)?;
        check_positive("normal-normal noise sd", noise_sd)?;
        Ok(Self { prior_mean, prior_sd, noise_sd })
    }
}

impl CoordinateFamily for NormalNormal {
    fn name(&self) -> String {
        format!("normal-normal(m={}, tau={}, sigma={})", self.prior_mean, self.prior_sd, self.noise_sd)
    }
    fn measure(&self) -> BaseMeasure {
        BaseMeasure::Lebesgue
    }
    fn likelihood(&self, t: f64, theta: f64) -> f64 {
        let z = (t - theta) / self.noise_sd;
        (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * self.noise_sd)
    }
    fn prior_density(&self, theta: f64) -> f64 {
        let z = (theta - self.prior_mean) / self.prior_sd;
        (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * self.prior_sd)
    }
    fn prior_support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
    fn prior_moments(&self) -> (f64, f64) {
        (self.prior_mean, self.prior_sd)
    }
    fn ln_predictive(&self, obs: &[f64]) -> f64 {
        // N(m·1, σ²I + τ²11ᵀ), via Sherman–Morrison
        let m = obs.len() as f64;
        let (s2, t2) = (self.noise_sd.powi(2), self.prior_sd.powi(2));
        let dev: Vec<f64> = obs.iter().map(|y| y - self.prior_mean).collect();
        let ss: f64 = dev.iter().map(|d| d * d).sum();
        let sum: f64 = dev.iter().sum();
        let denom = s2 + m * t2;
        let quad = (ss - t2 * sum * sum / denom) / s2;
        let logdet = (m - 1.0) * s2.ln() + denom.ln();
        -0.5 * (m * (2.0 * PI).ln() + logdet + quad)
    }
    fn sample_prior(&self, rng: &mut Rng) -> f64 {
        Normal::new(self.prior_mean, self.prior_sd).expect("validated").sample(rng)
    }
    fn sample_posterior(&self, obs: f64, rng: &mut Rng) -> f64 {
        let (s2, t2) = (self.noise_sd.powi(2), self.prior_sd.powi(2));
        let v = 1.0 / (1.0 / t2 + 1.0 / s2);
        let mean = v * (self.prior_mean / t2 + obs / s2);
        Normal::new(mean, v.sqrt()).expect("validated").sample(rng)
    }
    fn sample_likelihood(&self, theta: f64, rng: &mut Rng) -> f64 {
        Normal::new(theta, self.noise_sd).expect("validated").sample(rng)
    }
    fn interval_probability(&self, lo: f64, hi: f64, theta: f64) -> f64 {
        (normal_cdf((hi - theta) / self.noise_sd) - normal_cdf((lo - theta) / self.noise_sd)).max(0.0)
    }
    fn likelihood_mean(&self, theta: f64) -> f64 {
        theta
    }
    fn mean_is_theta_free(&self) -> bool {
        false
    }
    fn predictive_cdf(&self, t: f64) -> Option<f64> {
        let sd = (self.noise_sd.powi(2) + self.prior_sd.powi(2)).sqrt();
        Some(normal_cdf((t - self.prior_mean) / sd))
    }
    fn registration_points(&self) -> Vec<f64> {
        let s = (self.noise_sd.powi(2) + self.prior_sd.powi(2)).sqrt();
        [-1.5, 0.0, 0.7, 2.0].iter().map(|z| self.prior_mean + z * s).collect()
    }
}

/// `X | θ ~ N(μ, 1/θ)` with a θ-free mean and `θ ~ Gamma(a, rate b)` on
/// the precision, so the variance is Gamma-mixed.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalGammaPrecision {
    pub mean: f64,
    pub a: f64,
    pub b: f64,
}

impl NormalGammaPrecision {
    pub fn new(mean: f64, a: f64, b: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::InvalidInput("normal-gamma mean must be finite".into()));
        }
        check_positive("normal-gamma shape a", a)?;
        check_positive("normal-gamma rate b", b)?;
        Ok(Self { mean, a, b })
    }
}

impl CoordinateFamily for NormalGammaPrecision {
    fn name(&self) -> String {
        format!("normal-gamma-precision(mu={}, a={}, b={})", self.mean, self.a, self.b)
    }
    fn measure(&self) -> BaseMeasure {
        BaseMeasure::Lebesgue
    }
    fn likelihood(&self, t: f64, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        (theta / (2.0 * PI)).sqrt() * (-0.5 * theta * (t - self.mean).powi(2)).exp()
    }
    fn prior_density(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            0.0
        } else {
            gamma_ln_density(theta, self.a, self.b).exp()
        }
    }
    fn prior_support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn prior_moments(&self) -> (f64, f64) {
        (self.a / self.b, self.a.sqrt() / self.b)
    }
    fn ln_predictive(&self, obs: &[f64]) -> f64 {
        let m = obs.len() as f64;
        let ss: f64 = obs.iter().map(|y| (y - self.mean).powi(2)).sum();
        -0.5 * m * (2.0 * PI).ln() + self.a * self.b.ln() + ln_gamma(self.a + m / 2.0)
            - ln_gamma(self.a)
            - (self.a + m / 2.0) * (self.b + ss / 2.0).ln()
    }
    fn sample_prior(&self, rng: &mut Rng) -> f64 {
        Gamma::new(self.a, 1.0 / self.b).expect("validated").sample(rng)
    }
    fn sample_posterior(&self, obs: f64, rng: &mut Rng) -> f64 {
        let rate = self.b + 0.5 * (obs - self.mean).powi(2);
        Gamma::new(self.a + 0.5, 1.0 / rate).expect("validated").sample(rng)
    }
    fn sample_likelihood(&self, theta: f64, rng: &mut Rng) -> f64 {
        Normal::new(self.mean, 1.0 / theta.sqrt()).expect("positive precision").sample(rng)
    }
    fn interval_probability(&self, lo: f64, hi: f64, theta: f64) -> f64 {
        let s = theta.sqrt();
        (normal_cdf((hi - self.mean) * s) - normal_cdf((lo - self.mean) * s)).max(0.0)
    }
    fn likelihood_mean(&self, _theta: f64) -> f64 {
        self.mean
    }
    fn mean_is_theta_free(&self) -> bool {
        true
    }
    fn predictive_cdf(&self, t: f64) -> Option<f64> {
        // Student t with 2a degrees of freedom and scale sqrt(b/a)
        let d = StudentsT::new(self.mean, (self.b / self.a).sqrt(), 2.0 * self.a).ok()?;
        Some(d.cdf(t))
    }
    fn registration_points(&self) -> Vec<f64> {
        [-2.0, -0.3, 0.0, 1.1].iter().map(|z| self.mean + z).collect()
    }
}

/// Relative tolerance of the registration gate.
pub const REGISTRATION_TOL: f64 = 1e-8;

/// Compares the closed-form predictive of single observations and of pairs
/// with one-dimensional quadrature of `Π f(obs_k, θ)` against the prior.
pub fn check_registration(family: &dyn CoordinateFamily) -> Result<()> {
    let pts = family.registration_points();
    let (lo, hi) = family.prior_support();
    let mut cases: Vec<Vec<f64>> = pts.iter().map(|&t| vec![t]).collect();
    for (i, &s) in pts.iter().enumerate() {
        for &t in &pts[i..] {
            cases.push(vec![s, t]);
        }
    }
    let (mu, sd) = family.prior_moments();
    let mut cuts = vec![lo];
    for k in [-16.0, -4.0, -1.0, 0.0, 1.0, 4.0, 16.0] {
        let c = mu + k * sd;
        if c > *cuts.last().unwrap() && c < hi {
            cuts.push(c);
        }
    }
    cuts.push(hi);
    for obs in cases {
        let closed = family.ln_predictive(&obs).exp();
        let integrand = |th: f64| obs.iter().map(|&t| family.likelihood(t, th)).product::<f64>() * family.prior_density(th);
        let mut numeric = 0.0;
        for w in cuts.windows(2) {
            numeric += integrate(integrand, w[0], w[1], 1e-11)?;
        }
        if !((closed - numeric).abs() <= REGISTRATION_TOL * numeric.abs().max(1e-300)) {
            return Err(Error::Registration(format!(
                "{}: closed-form predictive {closed:e} vs quadrature {numeric:e} at {obs:?}",
                family.name()
            )));
        }
    }
    Ok(())
}

/// A product of registered coordinate families.
#[derive(Clone, Debug)]
pub struct ConjugateFamily {
    coords: Vec<Arc<dyn CoordinateFamily>>,
}

/// Estimate with its Monte-Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// One line of [`ConjugateFamily::uncorrelated_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceRecord {
    pub coordinate: usize,
    pub covariance: Estimate,
    /// Whether the family's likelihood mean is θ-free, so that
    /// `cov(X_i, X̃_i) = 0` is implied.
    pub hypothesis_holds: bool,
    pub within_4se_of_zero: bool,
}

/// A closed product rectangle `Π [lo_i, hi_i]`.
pub type Rectangle = Vec<(f64, f64)>;

impl ConjugateFamily {
    /// Registers each coordinate, running the quadrature gate on every
    /// distinct family once.
    pub fn new(coords: Vec<Arc<dyn CoordinateFamily>>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("mixture needs p ≥ 1".into()));
        }
        let mut seen: Vec<String> = Vec::new();
        for c in &coords {
            let key = c.name();
            if !seen.contains(&key) {
                check_registration(c.as_ref())?;
                seen.push(key);
            }
        }
        Ok(Self { coords })
    }

    pub fn poisson_gamma(a: &[f64], b: &[f64]) -> Result<Self> {
        check_dim(a.len(), b.len())?;
        Self::new(
            a.iter()
                .zip(b)
                .map(|(&a, &b)| Ok(Arc::new(PoissonGamma::new(a, b)?) as Arc<dyn CoordinateFamily>))
                .collect::<Result<_>>()?,
        )
    }

    pub fn p(&self) -> usize {
        self.coords.len()
    }

    pub fn coordinates(&self) -> &[Arc<dyn CoordinateFamily>] {
        &self.coords
    }

    /// `q(y)` for `y ∈ R^{2p}`.
    pub fn knockoff_joint_density(&self, y: &[f64]) -> Result<f64> {
        check_dim(2 * self.p(), y.len())?;
        let p = self.p();
        Ok(self.coords.iter().enumerate().map(|(i, c)| c.ln_predictive(&[y[i], y[p + i]])).sum::<f64>().exp())
    }

    /// `h(x)`, the density of `X`.
    pub fn marginal_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.ln_marginal_density(x)?.exp())
    }

    pub fn ln_marginal_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.p(), x.len())?;
        Ok(self.coords.iter().zip(x).map(|(c, &t)| c.ln_predictive(&[t])).sum())
    }

    /// `q(x, x̃) / h(x)`.
    pub fn conditional_knockoff_density(&self, x: &[f64], xt: &[f64]) -> Result<f64> {
        check_dim(self.p(), x.len())?;
        check_dim(self.p(), xt.len())?;
        let lh = self.ln_marginal_density(x)?;
        if lh == f64::NEG_INFINITY {
            return Err(Error::DegenerateConditioning(format!("h(x) = 0 at {x:?}")));
        }
        let lq: f64 = self.coords.iter().enumerate().map(|(i, c)| c.ln_predictive(&[x[i], xt[i]])).sum();
        Ok((lq - lh).exp())
    }

    /// `q` as a [`Density2p`] over the families' base measures.
    pub fn joint_density(&self) -> Result<Density2p> {
        let fam = self.clone();
        Density2p::over(self.coords.iter().map(|c| c.measure()).collect(), move |y| {
            fam.knockoff_joint_density(y).unwrap_or(f64::NAN)
        })
    }

    /// `h_self(x) / h_other(x)`: how much better this prior explains `x`.
    pub fn bayes_factor(&self, other: &ConjugateFamily, x: &[f64]) -> Result<f64> {
        Ok((self.ln_marginal_density(x)? - other.ln_marginal_density(x)?).exp())
    }

    fn draw_knockoff(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        check_dim(self.p(), x.len())?;
        if self.ln_marginal_density(x)? == f64::NEG_INFINITY {
            return Err(Error::DegenerateConditioning(format!("h(x) = 0 at {x:?}")));
        }
        Ok(self
            .coords
            .iter()
            .zip(x)
            .map(|(c, &t)| {
                let theta = c.sample_posterior(t, rng);
                c.sample_likelihood(theta, rng)
            })
            .collect())
    }

    /// Draws `θ` from the posterior given `x`, then `x̃_i ~ Q_i(·, θ)`.
    pub fn sample_knockoff(&self, x: &[f64], seed: u64) -> Result<Vec<f64>> {
        self.draw_knockoff(x, &mut rng::from_seed(seed))
    }

    /// `∫Q(A,θ)Q(B,θ)γ(dθ) − ∫Q(A,θ)γ(dθ)·∫Q(B,θ)γ(dθ)` by Monte Carlo over
    /// `n` prior draws, i.e. `P(X∈A, X̃∈B) − P(X∈A)P(X̃∈B)`.
    pub fn dependence_gap(&self, a: &Rectangle, b: &Rectangle, n: usize, seed: u64) -> Result<Estimate> {
        check_dim(self.p(), a.len())?;
        check_dim(self.p(), b.len())?;
        if n < 2 {
            return Err(Error::InvalidInput("dependence gap needs n ≥ 2".into()));
        }
        let pairs: Vec<(f64, f64)> = (0..n.div_ceil(crate::sample::BLOCK_ROWS))
            .into_par_iter()
            .flat_map_iter(|blk| {
                let mut rng = rng::substream(seed, blk as u64);
                let rows = crate::sample::BLOCK_ROWS.min(n - blk * crate::sample::BLOCK_ROWS);
                (0..rows)
                    .map(|_| {
                        let mut qa = 1.0;
                        let mut qb = 1.0;
                        for (i, c) in self.coords.iter().enumerate() {
                            let th = c.sample_prior(&mut rng);
                            qa *= c.interval_probability(a[i].0, a[i].1, th);
                            qb *= c.interval_probability(b[i].0, b[i].1, th);
                        }
                        (qa, qb)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let (qa, qb): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (value, se) = covariance_se(&qa, &qb);
        Ok(Estimate { value, se })
    }

    /// Per-coordinate `cov(X_i, X̃_i)` from `n` joint draws.
    pub fn uncorrelated_check(&self, n: usize, seed: u64) -> Result<Vec<CovarianceRecord>> {
        let draws = self.sample_joint(n, seed)?;
        let p = self.p();
        Ok((0..p)
            .map(|i| {
                let (value, se) = covariance_se(&draws.column(i), &draws.column(p + i));
                CovarianceRecord {
                    coordinate: i + 1,
                    covariance: Estimate { value, se },
                    hypothesis_holds: self.coords[i].mean_is_theta_free(),
                    within_4se_of_zero: value.abs() <= 4.0 * se,
                }
            })
            .collect())
    }

    /// `E[X_i]` per coordinate, by Monte Carlo over the prior.
    pub fn prior_mean_estimate(&self, n: usize, seed: u64) -> Vec<Estimate> {
        let mut rng = rng::from_seed(seed);
        self.coords
            .iter()
            .map(|c| {
                let v: Vec<f64> = (0..n).map(|_| c.likelihood_mean(c.sample_prior(&mut rng))).collect();
                let (value, se) = mean_se(&v);
                Estimate { value, se }
            })
            .collect()
    }
}

impl KnockoffSampler for ConjugateFamily {
    fn p(&self) -> usize {
        self.coords.len()
    }

    fn sample_x(&self, rng: &mut Rng) -> Vec<f64> {
        self.coords
            .iter()
            .map(|c| {
                let th = c.sample_prior(rng);
                c.sample_likelihood(th, rng)
            })
            .collect()
    }

    fn knockoff(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.draw_knockoff(x, rng)
    }

    fn marginal_laws(&self) -> Vec<MarginalLaw> {
        self.coords
            .iter()
            .map(|c| {
                let c = Arc::clone(c);
                match c.measure() {
                    BaseMeasure::Counting => {
                        MarginalLaw::Discrete(Arc::new(move |k| c.ln_predictive(&[k as f64]).exp()))
                    }
                    BaseMeasure::Lebesgue => {
                        MarginalLaw::Continuous(Arc::new(move |t| c.predictive_cdf(t).unwrap_or(f64::NAN)))
                    }
                }
            })
            .collect()
    }
}

fn broadcast(name: &str, v: &[f64], p: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; p]),
        n if n == p => Ok(v.to_vec()),
        n => Err(Error::InvalidInput(format!("`{name}` has {n} entries, expected 1 or p = {p}"))),
    }
}

/// Serializable mixture description; hyperparameter arrays of length 1 are
/// broadcast to all `p` coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MixtureSpec {
    PoissonGamma { p: usize, a: Vec<f64>, b: Vec<f64> },
    NormalNormal { p: usize, prior_mean: Vec<f64>, prior_sd: Vec<f64>, noise_sd: Vec<f64> },
    NormalGammaPrecision { p: usize, mean: Vec<f64>, a: Vec<f64>, b: Vec<f64> },
}

impl MixtureSpec {
    pub fn build(&self) -> Result<ConjugateFamily> {
        let coords: Vec<Arc<dyn CoordinateFamily>> = match self {
            MixtureSpec::PoissonGamma { p, a, b } => {
                let (a, b) = (broadcast("a", a, *p)?, broadcast("b", b, *p)?);
                (0..*p).map(|i| Ok(Arc::new(PoissonGamma::new(a[i], b[i])?) as _)).collect::<Result<_>>()?
            }
            MixtureSpec::NormalNormal { p, prior_mean, prior_sd, noise_sd } => {
                let m = broadcast("prior_mean", prior_mean, *p)?;
                let t = broadcast("prior_sd", prior_sd, *p)?;
                let s = broadcast("noise_sd", noise_sd, *p)?;
                (0..*p).map(|i| Ok(Arc::new(NormalNormal::new(m[i], t[i], s[i])?) as _)).collect::<Result<_>>()?
            }
            MixtureSpec::NormalGammaPrecision { p, mean, a, b } => {
                let m = broadcast("mean", mean, *p)?;
                let (a, b) = (broadcast("a", a, *p)?, broadcast("b", b, *p)?);
                (0..*p)
                    .map(|i| Ok(Arc::new(NormalGammaPrecision::new(m[i], a[i], b[i])?) as _))
                    .collect::<Result<_>>()?
            }
        };
        ConjugateFamily::new(coords)
    }
}
