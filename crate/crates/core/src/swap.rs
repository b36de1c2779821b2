//! The knockoff swap group acting on `R^{2p}`.
//!
//! A [`SwapSet`] `S ⊆ {1..p}` names the permutation that exchanges
//! coordinate `i` with `p + i` for every `i ∈ S`. The `2^p` swap maps form
//! an abelian group under composition, with composition given by the
//! symmetric difference of the index sets. Everything in this module sums
//! explicitly over the whole group, so `p` is guarded (default `p <= 20`).

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Rng};
use crate::stats::mean_se;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Default upper bound on `p` for operations enumerating all `2^p` swaps.
pub const DEFAULT_MAX_P: usize = 20;

/// A subset `S ⊆ {1..p}`, stored as a membership bitmask (bit `i-1` for
/// index `i`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwapSet {
    p: usize,
    mask: u64,
}

impl SwapSet {
    /// Builds a swap set from 1-based member indices.
    pub fn new(p: usize, members: &[usize]) -> Result<Self> {
        if p == 0 || p > 64 {
            return Err(Error::InvalidInput(format!("dimension p = {p} outside 1..=64")));
        }
        let mut mask = 0u64;
        for &i in members {
            if i == 0 || i > p {
                return Err(Error::InvalidInput(format!("swap index {i} outside 1..={p}")));
            }
            mask |= 1 << (i - 1);
        }
        Ok(Self { p, mask })
    }

    pub fn empty(p: usize) -> Self {
        Self { p, mask: 0 }
    }

    pub fn full(p: usize) -> Self {
        Self { p, mask: if p >= 64 { u64::MAX } else { (1u64 << p) - 1 } }
    }

    pub fn singleton(p: usize, i: usize) -> Result<Self> {
        Self::new(p, &[i])
    }

    pub fn from_mask(p: usize, mask: u64) -> Result<Self> {
        if p < 64 && mask >> p != 0 {
            return Err(Error::InvalidInput(format!("mask {mask:#b} has bits beyond p = {p}")));
        }
        Ok(Self { p, mask })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn is_identity(&self) -> bool {
        self.mask == 0
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    /// Whether 1-based index `i` is swapped.
    pub fn contains(&self, i: usize) -> bool {
        i >= 1 && i <= self.p && self.mask >> (i - 1) & 1 == 1
    }

    /// 1-based member indices in increasing order.
    pub fn members(&self) -> Vec<usize> {
        (1..=self.p).filter(|&i| self.contains(i)).collect()
    }

    /// Composition `f_S ∘ f_T = f_{S △ T}`.
    pub fn compose(&self, other: &SwapSet) -> Result<SwapSet> {
        check_dim(self.p, other.p)?;
        Ok(SwapSet { p: self.p, mask: self.mask ^ other.mask })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = x.to_vec();
        self.apply_in_place(&mut y)?;
        Ok(y)
    }

    pub fn apply_in_place<T>(&self, x: &mut [T]) -> Result<()> {
        check_dim(2 * self.p, x.len())?;
        for i in 0..self.p {
            if self.mask >> i & 1 == 1 {
                x.swap(i, self.p + i);
            }
        }
        Ok(())
    }

    /// The `2p × 2p` permutation matrix `P_S` with `P_S x = f_S(x)`.
    pub fn permutation_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = 2 * self.p;
        let mut idx: Vec<usize> = (0..n).collect();
        self.apply_in_place(&mut idx).expect("length is 2p");
        nalgebra::DMatrix::from_fn(n, n, |r, c| if idx[r] == c { 1.0 } else { 0.0 })
    }
}

impl fmt::Display for SwapSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m: Vec<String> = self.members().iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", m.join(","))
    }
}

/// `f_S(x)`: swaps `x_i` with `x_{p+i}` for each `i ∈ S`.
pub fn apply_swap(x: &[f64], s: &SwapSet) -> Result<Vec<f64>> {
    s.apply(x)
}

/// All `2^p` swap sets in binary-counter order of the membership bitmask.
pub fn enumerate_swaps(p: usize) -> Result<Vec<SwapSet>> {
    enumerate_swaps_with_limit(p, DEFAULT_MAX_P)
}

pub fn enumerate_swaps_with_limit(p: usize, max_p: usize) -> Result<Vec<SwapSet>> {
    if p == 0 {
        return Err(Error::InvalidInput("p must be positive".into()));
    }
    if p > max_p || p >= 64 {
        return Err(Error::ResourceLimit(format!(
            "enumerating 2^{p} swaps exceeds the guard p <= {max_p}"
        )));
    }
    Ok((0..1u64 << p).map(|mask| SwapSet { p, mask }).collect())
}

/// Factor of a product dominating measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseMeasure {
    Lebesgue,
    /// Counting measure on a countable subset of the line.
    Counting,
}

type PointFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A density on `R^{2p}` with respect to a product measure `ν × ν`.
#[derive(Clone)]
pub struct Density2p {
    p: usize,
    measure: Vec<BaseMeasure>,
    f: Arc<PointFn>,
}

impl fmt::Debug for Density2p {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Density2p")
            .field("p", &self.p)
            .field("measure", &self.measure)
            .finish_non_exhaustive()
    }
}

impl Density2p {
    /// `measure` lists all `2p` factors; factor `p + i` must equal factor `i`.
    pub fn new<F>(p: usize, measure: Vec<BaseMeasure>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if p == 0 {
            return Err(Error::InvalidInput("p must be positive".into()));
        }
        check_dim(2 * p, measure.len())?;
        if (0..p).any(|i| measure[i] != measure[p + i]) {
            return Err(Error::InvalidInput(
                "dominating measure must be ν × ν: factor p+i must equal factor i".into(),
            ));
        }
        Ok(Self { p, measure, f: Arc::new(f) })
    }

    /// Density with respect to `ν × ν` where `ν` has the given `p` factors.
    pub fn over<F>(block: Vec<BaseMeasure>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let p = block.len();
        let measure = block.iter().chain(block.iter()).copied().collect();
        Self::new(p, measure, f)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn measure(&self) -> &[BaseMeasure] {
        &self.measure
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(2 * self.p, x.len())?;
        let v = (self.f)(x);
        if v.is_nan() || v < 0.0 || v.is_infinite() {
            return Err(Error::InvalidDensity { value: v, point: x.to_vec() });
        }
        Ok(v)
    }
}

/// Orbit average `q(x) = 2^{-p} Σ_{f ∈ F} g(f(x))`, an `F`-invariant
/// density of the symmetrized law.
pub fn symmetrize_density(g: &Density2p) -> Result<Density2p> {
    let swaps = enumerate_swaps(g.p)?;
    let inner = g.f.clone();
    let norm = 1.0 / swaps.len() as f64;
    let f = move |x: &[f64]| {
        let mut y = x.to_vec();
        let mut total = 0.0;
        for s in &swaps {
            y.copy_from_slice(x);
            s.apply_in_place(&mut y).expect("dimension checked by eval");
            total += inner(&y);
        }
        total * norm
    };
    Density2p::new(g.p, g.measure.clone(), f)
}

/// Outcome of [`orbit_normalization_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitReport {
    pub max_deviation: f64,
    /// Index into the supplied points of the worst deviation.
    pub worst_point: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks `2^{-p} Σ_f q(f(x)) = 1` at every point, which characterizes the
/// densities `q = dπ/dλ` whose symmetrization of `π` recovers `λ`.
pub fn orbit_normalization_check<Q>(q: Q, points: &[Vec<f64>], tol: f64) -> Result<OrbitReport>
where
    Q: Fn(&[f64]) -> f64,
{
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidInput("no points supplied".into()))?;
    if first.is_empty() || first.len() % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "points must have even positive length, got {}",
            first.len()
        )));
    }
    let swaps = enumerate_swaps(first.len() / 2)?;
    let mut worst = (0.0, 0);
    for (k, x) in points.iter().enumerate() {
        check_dim(first.len(), x.len())?;
        let mut total = 0.0;
        for s in &swaps {
            let y = s.apply(x)?;
            let v = q(&y);
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidDensity { value: v, point: y });
            }
            total += v;
        }
        let dev = (total / swaps.len() as f64 - 1.0).abs();
        if dev > worst.0 || dev.is_nan() {
            worst = (dev, k);
        }
    }
    Ok(OrbitReport {
        max_deviation: worst.0,
        worst_point: worst.1,
        tolerance: tol,
        pass: worst.0 <= tol,
    })
}

/// The tilted density `q(x) = 2^p φ(x) / Σ_{g ∈ F} φ(g(x))` for a strictly
/// positive `φ`. Its orbit average is identically one, so `q · λ` is a
/// probability whose symmetrization is `λ` for every `F`-invariant `λ`.
#[derive(Clone)]
pub struct TiltedDensity {
    p: usize,
    swaps: Vec<SwapSet>,
    phi: Arc<PointFn>,
}

pub fn tilt_density<F>(p: usize, phi: F) -> Result<TiltedDensity>
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    Ok(TiltedDensity { p, swaps: enumerate_swaps(p)?, phi: Arc::new(phi) })
}

impl TiltedDensity {
    pub fn p(&self) -> usize {
        self.p
    }

    fn phi_checked(&self, x: &[f64]) -> Result<f64> {
        let v = (self.phi)(x);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidInput(format!("tilt function must be strictly positive, got {v} at {x:?}")))
        }
    }

    /// Returns `(φ(x), Σ_g φ(g(x)))`.
    fn parts(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(2 * self.p, x.len())?;
        let own = self.phi_checked(x)?;
        let mut y = x.to_vec();
        let mut total = 0.0;
        for s in &self.swaps {
            y.copy_from_slice(x);
            s.apply_in_place(&mut y)?;
            total += self.phi_checked(&y)?;
        }
        Ok((own, total))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let (own, total) = self.parts(x)?;
        Ok(self.swaps.len() as f64 * own / total)
    }

    /// Draws from `π = q · λ` by rejection from a sampler of `λ`. The
    /// acceptance probability is `φ(y) / Σ_g φ(g(y)) = q(y) / 2^p`, so the
    /// expected number of proposals is `2^p`.
    pub fn sample_tilted<S>(&self, mut sample_lambda: S, rng: &mut Rng) -> Result<Vec<f64>>
    where
        S: FnMut(&mut Rng) -> Vec<f64>,
    {
        loop {
            let y = sample_lambda(rng);
            let (own, total) = self.parts(&y)?;
            if rng.random::<f64>() * total < own {
                return Ok(y);
            }
        }
    }
}

/// A named test function used by [`invariant_event_agreement`].
pub struct TestFunction<'a> {
    pub name: String,
    pub f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
}

impl<'a> TestFunction<'a> {
    pub fn new(name: impl Into<String>, f: &'a (dyn Fn(&[f64]) -> f64 + Sync)) -> Self {
        Self { name: name.into(), f }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AgreementRecord {
    pub name: String,
    pub mean_pi: f64,
    pub mean_lambda: f64,
    pub difference: f64,
    pub standard_error: f64,
    /// `|difference| > 4 · standard_error`.
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AgreementReport {
    pub records: Vec<AgreementRecord>,
    pub any_flagged: bool,
    pub n: usize,
    pub seed: u64,
}

/// Number of points used to spot-check that test functions are invariant.
pub const SYMMETRY_SPOT_CHECKS: usize = 64;

/// Monte-Carlo comparison of `E_π[g]` and `E_λ[g]` for swap-invariant
/// test functions `g`. When `π` symmetrizes to `λ`, the two laws agree on
/// the invariant σ-field and no function should be flagged.
pub fn invariant_event_agreement<A, B>(
    sampler_pi: A,
    sampler_lambda: B,
    test_functions: &[TestFunction<'_>],
    n: usize,
    seed: u64,
) -> Result<AgreementReport>
where
    A: Fn(&mut Rng) -> Vec<f64>,
    B: Fn(&mut Rng) -> Vec<f64>,
{
    if n < 2 {
        return Err(Error::InvalidInput("need at least two draws".into()));
    }
    let mut check_rng = rng::substream(seed, 2);
    let probes: Vec<Vec<f64>> = (0..SYMMETRY_SPOT_CHECKS)
        .map(|_| sampler_lambda(&mut check_rng))
        .collect();
    let dim = probes[0].len();
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::InvalidInput(format!("sampler dimension {dim} is not 2p")));
    }
    let swaps = enumerate_swaps(dim / 2)?;
    for tf in test_functions {
        for x in &probes {
            let base = (tf.f)(x);
            for s in &swaps {
                let v = (tf.f)(&s.apply(x)?);
                if !((v - base).abs() <= 1e-12 * base.abs().max(1.0)) {
                    return Err(Error::InvalidTestFunction(tf.name.clone()));
                }
            }
        }
    }

    let mut rng_pi = rng::substream(seed, 0);
    let mut rng_lambda = rng::substream(seed, 1);
    let draws_pi: Vec<Vec<f64>> = (0..n).map(|_| sampler_pi(&mut rng_pi)).collect();
    let draws_lambda: Vec<Vec<f64>> = (0..n).map(|_| sampler_lambda(&mut rng_lambda)).collect();

    let records: Vec<AgreementRecord> = test_functions
        .iter()
        .map(|tf| {
            let a: Vec<f64> = draws_pi.iter().map(|x| (tf.f)(x)).collect();
            let b: Vec<f64> = draws_lambda.iter().map(|x| (tf.f)(x)).collect();
            let (ma, sa) = mean_se(&a);
            let (mb, sb) = mean_se(&b);
            let se = (sa * sa + sb * sb).sqrt();
            let difference = ma - mb;
            AgreementRecord {
                name: tf.name.clone(),
                mean_pi: ma,
                mean_lambda: mb,
                difference,
                standard_error: se,
                flagged: difference.abs() > 4.0 * se,
            }
        })
        .collect();
    let any_flagged = records.iter().any(|r| r.flagged);
    Ok(AgreementReport { records, any_flagged, n, seed })
}
