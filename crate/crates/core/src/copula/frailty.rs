//! Exact knockoff sampling for a shared Archimedean generator through the
//! frailty representation `U_i = ψ(E_i / V)`.

use super::{ArchimedeanGenerator, CopulaModel, Frailty};
use crate::error::{check_dim, Error, Result};
use crate::marginal::Marginal;
use crate::quadrature::integrate;
use crate::rng::{self, Rng};
use crate::sample::{KnockoffSampler, MarginalLaw};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// How the frailty is drawn from its conditional law given `U = u`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorMethod {
    /// Conjugate closed forms: Gamma (Clayton), logarithmic series (Frank),
    /// degenerate (independence).
    #[default]
    Exact,
    /// Inverse-CDF sampling on a log-spaced grid of the unnormalized
    /// posterior; needs a frailty density.
    Grid,
}

/// Points in the log-spaced posterior grid.
pub const GRID_POINTS: usize = 4096;

// Posterior given s = Σ ψ^{-1}(u_i) is ∝ v^p e^{-v s} against the frailty law.
fn sample_posterior(
    frailty: &Frailty,
    p: usize,
    s: f64,
    method: PosteriorMethod,
    rng: &mut Rng,
) -> Result<f64> {
    match (method, *frailty) {
        (PosteriorMethod::Exact, Frailty::Gamma { shape, rate }) => Ok(Gamma::new(shape + p as f64, 1.0 / (rate + s))
            .map_err(|e| Error::NumericIntegrity(format!("posterior gamma: {e}")))?
            .sample(rng)),
        (PosteriorMethod::Exact, Frailty::Degenerate) => Ok(1.0),
        (PosteriorMethod::Exact, Frailty::Logarithmic { a }) => logarithmic_posterior(a, p, s, rng),
        (PosteriorMethod::Grid, fr) if fr.density(1.0).is_some() => grid_posterior(&fr, p, s, rng),
        (_, fr) => Err(Error::UnsupportedGenerator(format!(
            "no {method:?} posterior sampler for frailty {fr:?}"
        ))),
    }
}

// P(V = m | u) ∝ a^m m^{p-1} e^{-m s}, m ≥ 1.
fn logarithmic_posterior(a: f64, p: usize, s: f64, rng: &mut Rng) -> Result<f64> {
    const MAX_TERMS: usize = 10_000_000;
    let rate = s - a.ln();
    let mode = ((p as f64 - 1.0) / rate).max(1.0);
    let logw = |m: f64| -m * rate + (p as f64 - 1.0) * m.ln();
    let top = logw(mode.floor().max(1.0)).max(logw(mode.ceil()));
    let mut weights = Vec::new();
    let mut m = 1usize;
    loop {
        let lw = logw(m as f64) - top;
        weights.push(lw.exp());
        if (m as f64 > mode && lw < -40.0) || m >= MAX_TERMS {
            break;
        }
        m += 1;
    }
    if m >= MAX_TERMS {
        return Err(Error::ResourceLimit("logarithmic posterior support too wide".into()));
    }
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        target -= w;
        if target < 0.0 {
            return Ok((i + 1) as f64);
        }
    }
    Ok(weights.len() as f64)
}

fn grid_posterior(frailty: &Frailty, p: usize, s: f64, rng: &mut Rng) -> Result<f64> {
    // log-density in log v: log f(v) + (p+1) log v − v s
    let logpost = |lv: f64| {
        let v = lv.exp();
        frailty.density(v).unwrap_or(0.0).ln() + (p as f64 + 1.0) * lv - v * s
    };
    let coarse: Vec<f64> = (0..=2000).map(|i| -30.0 + 60.0 * i as f64 / 2000.0).collect();
    let vals: Vec<f64> = coarse.iter().map(|&lv| logpost(lv)).collect();
    let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::NumericIntegrity("frailty posterior has no mass on the grid".into()));
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > top - 40.0).collect();
    let lo = coarse[keep[0].saturating_sub(1)];
    let hi = coarse[(keep[keep.len() - 1] + 1).min(coarse.len() - 1)];
    let step = (hi - lo) / GRID_POINTS as f64;
    let centres: Vec<f64> = (0..GRID_POINTS).map(|i| lo + (i as f64 + 0.5) * step).collect();
    let lw: Vec<f64> = centres.iter().map(|&c| logpost(c)).collect();
    let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut target = rng.random::<f64>() * total;
    let mut cell = GRID_POINTS - 1;
    for (i, wi) in w.iter().enumerate() {
        target -= wi;
        if target < 0.0 {
            cell = i;
            break;
        }
    }
    Ok((centres[cell] + (rng.random::<f64>() - 0.5) * step).exp())
}

fn knockoff_from_uniforms(
    g: &ArchimedeanGenerator,
    frailty: &Frailty,
    marginals: &[Marginal],
    x: &[f64],
    method: PosteriorMethod,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_dim(marginals.len(), x.len())?;
    let mut s = 0.0;
    for (i, (&xi, f)) in x.iter().zip(marginals).enumerate() {
        let u = f.cdf(xi);
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Boundary(format!("F_{}(x_{}) = {u}", i + 1, i + 1)));
        }
        s += g.psi_inv(u);
    }
    let v = sample_posterior(frailty, x.len(), s, method, rng)?;
    Ok(marginals
        .iter()
        .map(|f| {
            let e: f64 = Exp1.sample(rng);
            f.quantile(g.psi(e / v))
        })
        .collect())
}

/// Exact joint sampler of `(X, X̃)` with distribution function
/// `C*(F_1(x_1), …, F_p(x_{2p}))` for a shared generator `ψ`.
#[derive(Clone, Debug)]
pub struct FrailtyKnockoffs {
    generator: ArchimedeanGenerator,
    frailty: Frailty,
    marginals: Vec<Marginal>,
    method: PosteriorMethod,
}

impl FrailtyKnockoffs {
    pub fn new(model: &CopulaModel, method: PosteriorMethod) -> Result<Self> {
        let g = model.common_generator().ok_or_else(|| {
            Error::UnsupportedGenerator("C and every D_i must be Archimedean with one shared generator".into())
        })?;
        let frailty = g
            .frailty()
            .ok_or_else(|| Error::UnsupportedGenerator(format!("{} has no frailty sampler", g.name())))?;
        // fail early rather than on the first knockoff
        let mut probe = rng::from_seed(0);
        sample_posterior(&frailty, model.p(), 1.0, method, &mut probe)?;
        Ok(Self { generator: g.clone(), frailty, marginals: model.marginals().to_vec(), method })
    }

    pub fn generator(&self) -> &ArchimedeanGenerator {
        &self.generator
    }
}

impl KnockoffSampler for FrailtyKnockoffs {
    fn p(&self) -> usize {
        self.marginals.len()
    }

    fn sample_x(&self, rng: &mut Rng) -> Vec<f64> {
        let v = self.frailty.sample(rng);
        self.marginals
            .iter()
            .map(|f| {
                let e: f64 = Exp1.sample(rng);
                f.quantile(self.generator.psi(e / v))
            })
            .collect()
    }

    fn knockoff(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        knockoff_from_uniforms(&self.generator, &self.frailty, &self.marginals, x, self.method, rng)
    }

    fn marginal_laws(&self) -> Vec<MarginalLaw> {
        self.marginals
            .iter()
            .map(|m| {
                let m = m.clone();
                MarginalLaw::Continuous(Arc::new(move |t| m.cdf(t)))
            })
            .collect()
    }
}

/// One knockoff draw for `X = x` (length `p`) under a shared-generator
/// model, using the exact posterior.
pub fn sample_knockoff_frailty(model: &CopulaModel, x: &[f64], seed: u64) -> Result<Vec<f64>> {
    let sampler = FrailtyKnockoffs::new(model, PosteriorMethod::Exact)?;
    sampler.knockoff(x, &mut rng::from_seed(seed))
}

/// Kendall's τ of the bivariate Archimedean copula with generator `ψ`,
/// `τ = 1 + 4 ∫_0^1 φ(u)/φ'(u) du` with `φ = ψ^{-1}`, by adaptive
/// quadrature. Written as `φ(u)·ψ'(φ(u))` the integrand stays bounded.
pub fn kendall_tau_oracle(g: &ArchimedeanGenerator) -> Result<f64> {
    let integral = integrate(
        |u| {
            let t = g.psi_inv(u);
            if t.is_finite() {
                t * g.psi_prime(t)
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        1e-12,
    )?;
    Ok(1.0 + 4.0 * integral)
}
