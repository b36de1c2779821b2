//! The copula candidate `H(x) = C[D_1(F_1(x_1), F_1(x_{p+1})), …]` and the
//! machinery around it: validity checks, a finite-difference conditional
//! CDF oracle, and exact frailty sampling when every copula shares one
//! Archimedean generator.

mod checks;
mod frailty;
mod generator;

pub use checks::{
    check_generator_conditions, check_nested_condition, default_t_grid, smoothness_condition_check,
    CheckStatus, GeneratorReport, NestedReport, OrderRecord, SmoothnessReport,
};
pub use frailty::{
    kendall_tau_oracle, sample_knockoff_frailty, FrailtyKnockoffs, PosteriorMethod, GRID_POINTS,
};
pub use generator::{ArchimedeanGenerator, Frailty, GeneratorSpec};

use crate::error::{check_dim, Error, Result};
use crate::marginal::Marginal;
use crate::special::{bivariate_normal_cdf, normal_quantile};
use crate::swap::enumerate_swaps;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Serializable copula descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CopulaSpec {
    Independence,
    /// Lower Fréchet bound `W`; a copula only in dimension 2.
    Countermonotone,
    /// Upper Fréchet bound `M(u) = min u_i`.
    Comonotone,
    /// Bivariate Gaussian copula with correlation `rho`.
    Gaussian { rho: f64 },
    Archimedean { generator: GeneratorSpec },
}

type CopulaFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum Copula {
    Independence,
    Countermonotone,
    Comonotone,
    Gaussian(f64),
    Archimedean(ArchimedeanGenerator),
    /// An explicit function of fixed dimension, trusted as given.
    Explicit { name: String, dim: usize, f: Arc<CopulaFn> },
}

impl fmt::Debug for Copula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Copula::Independence => f.write_str("Independence"),
            Copula::Countermonotone => f.write_str("Countermonotone"),
            Copula::Comonotone => f.write_str("Comonotone"),
            Copula::Gaussian(r) => write!(f, "Gaussian({r})"),
            Copula::Archimedean(g) => write!(f, "Archimedean({})", g.name()),
            Copula::Explicit { name, dim, .. } => write!(f, "Explicit({name}, dim {dim})"),
        }
    }
}

impl Copula {
    pub fn from_spec(spec: &CopulaSpec) -> Result<Self> {
        Ok(match spec {
            CopulaSpec::Independence => Copula::Independence,
            CopulaSpec::Countermonotone => Copula::Countermonotone,
            CopulaSpec::Comonotone => Copula::Comonotone,
            CopulaSpec::Gaussian { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(Error::InvalidInput(format!("gaussian copula: |rho| must be < 1, got {rho}")));
                }
                Copula::Gaussian(*rho)
            }
            CopulaSpec::Archimedean { generator } => {
                Copula::Archimedean(ArchimedeanGenerator::from_spec(generator)?)
            }
        })
    }

    pub fn explicit<F>(name: &str, dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Copula::Explicit { name: name.into(), dim, f: Arc::new(f) }
    }

    /// Whether this descriptor defines a copula in dimension `d`.
    pub fn supports_dim(&self, d: usize) -> bool {
        match self {
            _ if d == 1 => true,
            Copula::Countermonotone | Copula::Gaussian(_) => d == 2,
            Copula::Explicit { dim, .. } => *dim == d,
            _ => d >= 1,
        }
    }

    /// `C(u)`. Any 1-copula is the identity.
    pub fn eval(&self, u: &[f64]) -> f64 {
        if u.len() == 1 {
            return u[0];
        }
        if u.iter().any(|&v| v <= 0.0) {
            return 0.0;
        }
        match self {
            Copula::Independence => u.iter().product(),
            Copula::Countermonotone => {
                (u.iter().sum::<f64>() - (u.len() as f64 - 1.0)).max(0.0)
            }
            Copula::Comonotone => u.iter().copied().fold(1.0, f64::min),
            Copula::Gaussian(rho) => {
                bivariate_normal_cdf(normal_quantile(u[0]), normal_quantile(u[1]), *rho)
            }
            Copula::Archimedean(g) => g.psi(u.iter().map(|&v| g.psi_inv(v)).sum()),
            Copula::Explicit { f, .. } => f(u),
        }
    }

    /// `Some(true)` when `C(u, v) = C(v, u)` is known to hold.
    pub fn is_symmetric(&self) -> Option<bool> {
        match self {
            Copula::Explicit { .. } => None,
            _ => Some(true),
        }
    }

    /// Closed-form density with respect to Lebesgue measure on `[0,1]^d`.
    pub fn density(&self, u: &[f64]) -> Option<f64> {
        let d = u.len();
        if d == 1 {
            return Some(1.0);
        }
        match self {
            Copula::Independence => Some(1.0),
            Copula::Gaussian(r) if d == 2 => {
                let (a, b) = (normal_quantile(u[0]), normal_quantile(u[1]));
                let s = 1.0 - r * r;
                Some((-(r * r * (a * a + b * b) - 2.0 * r * a * b) / (2.0 * s)).exp() / s.sqrt())
            }
            Copula::Archimedean(g) => {
                if let Some(th) = g.clayton_theta() {
                    let mut log = 0.0;
                    let mut s = 1.0 - d as f64;
                    for (k, &v) in u.iter().enumerate() {
                        log += (1.0 + k as f64 * th).ln() - (th + 1.0) * v.ln();
                        s += v.powf(-th);
                    }
                    Some((log + (-1.0 / th - d as f64) * s.ln()).exp())
                } else if g.spec() == Some(GeneratorSpec::Independence) {
                    Some(1.0)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// `∂C(u, v)/∂u` for a 2-copula that is differentiable in the interior.
    pub fn partial_first(&self, u: f64, v: f64) -> Option<f64> {
        match self {
            Copula::Independence => Some(v),
            Copula::Gaussian(r) => {
                let s = (1.0 - r * r).sqrt();
                Some(crate::special::normal_cdf(
                    (normal_quantile(v) - r * normal_quantile(u)) / s,
                ))
            }
            Copula::Archimedean(g) => {
                let a = g.psi_inv(u);
                Some(g.psi_prime(a + g.psi_inv(v)) / g.psi_prime(a))
            }
            _ => None,
        }
    }

    pub fn generator(&self) -> Option<&ArchimedeanGenerator> {
        match self {
            Copula::Archimedean(g) => Some(g),
            _ => None,
        }
    }
}

/// Serializable form of [`CopulaModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopulaModelSpec {
    pub p: usize,
    #[serde(rename = "C", alias = "c")]
    pub c: CopulaSpec,
    /// One 2-copula per coordinate; a single entry is broadcast to all.
    #[serde(rename = "D", alias = "d")]
    pub d: Vec<CopulaSpec>,
    /// One marginal per coordinate; empty means standard uniform.
    #[serde(default)]
    pub marginals: Vec<Marginal>,
}

/// `p`, the outer `p`-copula `C`, bivariate `D_i` and marginals `F_i`.
#[derive(Clone, Debug)]
pub struct CopulaModel {
    p: usize,
    c: Copula,
    d: Vec<Copula>,
    marginals: Vec<Marginal>,
}

impl CopulaModel {
    pub fn new(c: Copula, d: Vec<Copula>, marginals: Vec<Marginal>) -> Result<Self> {
        let p = marginals.len();
        if p == 0 {
            return Err(Error::InvalidInput("copula model needs p ≥ 1".into()));
        }
        check_dim(p, d.len())?;
        if !c.supports_dim(p) {
            return Err(Error::InvalidInput(format!("{c:?} is not a {p}-copula")));
        }
        for (i, di) in d.iter().enumerate() {
            if !di.supports_dim(2) {
                return Err(Error::InvalidInput(format!("D_{} = {di:?} is not a 2-copula", i + 1)));
            }
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { p, c, d, marginals })
    }

    /// Uniform marginals.
    pub fn uniform(c: Copula, d: Vec<Copula>) -> Result<Self> {
        let p = d.len();
        Self::new(c, d, vec![Marginal::standard_uniform(); p])
    }

    pub fn from_spec(spec: &CopulaModelSpec) -> Result<Self> {
        let p = spec.p;
        let d: Vec<Copula> = match spec.d.len() {
            1 => vec![Copula::from_spec(&spec.d[0])?; p],
            n if n == p => spec.d.iter().map(Copula::from_spec).collect::<Result<_>>()?,
            n => return Err(Error::InvalidInput(format!("D has {n} entries, expected 1 or p = {p}"))),
        };
        let marginals = match spec.marginals.len() {
            0 => vec![Marginal::standard_uniform(); p],
            1 => vec![spec.marginals[0].clone(); p],
            n if n == p => spec.marginals.clone(),
            n => return Err(Error::InvalidInput(format!("{n} marginals given, expected 0, 1 or p = {p}"))),
        };
        Self::new(Copula::from_spec(&spec.c)?, d, marginals)
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn c(&self) -> &Copula {
        &self.c
    }
    pub fn d(&self) -> &[Copula] {
        &self.d
    }
    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    /// The generator shared by `C` and every `D_i`, if there is one.
    pub fn common_generator(&self) -> Option<&ArchimedeanGenerator> {
        let g = self.c.generator()?;
        self.d.iter().all(|di| di.generator() == Some(g)).then_some(g)
    }

    /// `C*(u) = C[D_1(u_1, u_{p+1}), …, D_p(u_p, u_{2p})]` on `[0,1]^{2p}`.
    pub fn c_star(&self, u: &[f64]) -> f64 {
        let p = self.p;
        let w: Vec<f64> = (0..p).map(|i| self.d[i].eval(&[u[i], u[p + i]])).collect();
        self.c.eval(&w)
    }

    fn to_uniform(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(2 * self.p, x.len())?;
        x.iter()
            .enumerate()
            .map(|(k, &v)| {
                let u = self.marginals[k % self.p].cdf(v);
                if (0.0..=1.0).contains(&u) {
                    Ok(u)
                } else {
                    Err(Error::NumericIntegrity(format!("F_{}({v}) = {u} outside [0,1]", k % self.p + 1)))
                }
            })
            .collect()
    }

    /// `H(x)` for `x ∈ R^{2p}`.
    pub fn evaluate_h(&self, x: &[f64]) -> Result<f64> {
        Ok(self.c_star(&self.to_uniform(x)?))
    }

    /// `G(x) = 2^{-p} Σ_f H(f(x))`, the distribution function of the
    /// symmetrized law; differs from `H` only when some `D_i` is asymmetric.
    pub fn evaluate_symmetrized_h(&self, x: &[f64]) -> Result<f64> {
        let swaps = enumerate_swaps(self.p)?;
        let mut total = 0.0;
        for s in &swaps {
            total += self.evaluate_h(&s.apply(x)?)?;
        }
        Ok(total / swaps.len() as f64)
    }
}

/// Result of [`rectangle_volume_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RectangleReport {
    pub resolution: usize,
    pub cells: u64,
    pub min_volume: f64,
    /// `[lo, hi]` per axis of the cell attaining the minimum, in `[0,1]`.
    pub witness: Vec<[f64; 2]>,
    /// The same cell mapped through the marginal quantile functions.
    pub witness_x: Vec<[f64; 2]>,
    pub negative_cells: u64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Largest number of grid cells examined by [`rectangle_volume_check`].
pub const MAX_CELLS: u64 = 10_000_000;

/// Computes the `2p`-dimensional inclusion–exclusion volume of `C*` on every
/// cell of the regular grid with `resolution` steps per axis. `H` is a
/// distribution function only if no volume is below `-tol`; by Sklar's
/// theorem a uniform-scale check covers every choice of marginals.
pub fn rectangle_volume_check(model: &CopulaModel, resolution: usize, tol: f64) -> Result<RectangleReport> {
    let m = 2 * model.p;
    if resolution == 0 {
        return Err(Error::InvalidInput("grid resolution must be ≥ 1".into()));
    }
    let cells = (resolution as u64).checked_pow(m as u32).filter(|&c| c <= MAX_CELLS).ok_or_else(|| {
        Error::ResourceLimit(format!("resolution^{m} exceeds {MAX_CELLS} cells"))
    })?;
    let r1 = resolution + 1;
    let npts = r1.pow(m as u32);
    let h = 1.0 / resolution as f64;
    let decode = |mut idx: usize, base: usize| -> Vec<usize> {
        let mut out = vec![0; m];
        for slot in out.iter_mut() {
            *slot = idx % base;
            idx /= base;
        }
        out
    };
    let values: Vec<f64> = (0..npts)
        .into_par_iter()
        .map(|idx| {
            let u: Vec<f64> = decode(idx, r1).iter().map(|&k| (k as f64 * h).min(1.0)).collect();
            model.c_star(&u)
        })
        .collect();
    let strides: Vec<usize> = (0..m).map(|k| r1.pow(k as u32)).collect();
    let corner_offsets: Vec<(usize, f64)> = (0..1usize << m)
        .map(|bits| {
            let off = (0..m).filter(|k| bits >> k & 1 == 1).map(|k| strides[k]).sum();
            let sign = if (m - bits.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
            (off, sign)
        })
        .collect();

    const CHUNK: usize = 1 << 14;
    let ncells = cells as usize;
    let partial: Vec<(f64, usize, u64)> = (0..ncells.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut best = (f64::INFINITY, usize::MAX, 0u64);
            for cell in c * CHUNK..((c + 1) * CHUNK).min(ncells) {
                let base: usize = decode(cell, resolution).iter().zip(&strides).map(|(k, s)| k * s).sum();
                let vol: f64 = corner_offsets.iter().map(|&(o, s)| s * values[base + o]).sum();
                if vol < -tol {
                    best.2 += 1;
                }
                if vol < best.0 {
                    best = (vol, cell, best.2);
                }
            }
            best
        })
        .collect();
    let mut min_volume = f64::INFINITY;
    let mut arg = 0;
    let mut negative_cells = 0;
    for (v, cell, neg) in partial {
        negative_cells += neg;
        if v < min_volume {
            min_volume = v;
            arg = cell;
        }
    }
    let witness: Vec<[f64; 2]> =
        decode(arg, resolution).iter().map(|&k| [k as f64 * h, ((k + 1) as f64 * h).min(1.0)]).collect();
    let witness_x = witness
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let f = &model.marginals[k % model.p];
            [f.quantile(w[0]), f.quantile(w[1])]
        })
        .collect();
    Ok(RectangleReport {
        resolution,
        cells,
        min_volume,
        witness,
        witness_x,
        negative_cells,
        tolerance: tol,
        pass: min_volume >= -tol,
    })
}

/// Mixed partial `∂^p C*/∂u_1…∂u_p` by central differences in the first
/// block, holding the second block fixed.
fn mixed_partial_first_block(model: &CopulaModel, ua: &[f64], ub: &[f64], h: f64) -> f64 {
    let p = model.p;
    let mut total = 0.0;
    let mut u: Vec<f64> = ua.iter().chain(ub).copied().collect();
    for bits in 0..1usize << p {
        let mut sign = 1.0;
        for i in 0..p {
            if bits >> i & 1 == 1 {
                u[i] = ua[i] + h;
            } else {
                u[i] = ua[i] - h;
                sign = -sign;
            }
        }
        total += sign * model.c_star(&u);
    }
    total / (2.0 * h).powi(p as i32)
}

/// `P(X̃ ≤ x_{p+1..2p} | X = x_{1..p})`, as the ratio of the mixed partial
/// of `H` in the first block to the density of `X`, both by central finite
/// differences. Slow; intended as a reference for samplers. `p ≤ 3`.
pub fn conditional_cdf_oracle(model: &CopulaModel, x: &[f64]) -> Result<f64> {
    let p = model.p;
    if p > 3 {
        return Err(Error::InvalidInput(format!("conditional CDF oracle supports p ≤ 3, got {p}")));
    }
    check_dim(2 * p, x.len())?;
    let u = model.to_uniform(x)?;
    let (ua, ub) = u.split_at(p);
    let edge = ua.iter().fold(f64::INFINITY, |m, &v| m.min(v).min(1.0 - v));
    if edge <= 0.0 {
        return Err(Error::DegeneratePoint(format!("x_{{1..p}} = {:?} lies on the support boundary", &x[..p])));
    }
    let h = [1e-5f64, 1e-4, 1e-3][p - 1].min(edge / 2.0);
    let ones = vec![1.0; p];
    let den = mixed_partial_first_block(model, ua, &ones, h);
    let jac: f64 = (0..p).map(|i| model.marginals[i].pdf(x[i])).product();
    if !(den > 1e-12) || !(jac > 0.0) {
        return Err(Error::DegeneratePoint(format!("density of X at {:?} is {:e}", &x[..p], den * jac)));
    }
    let num = mixed_partial_first_block(model, ua, ub, h);
    Ok((num / den).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests;
