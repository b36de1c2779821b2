//! Approximate knockoffs by discretization.
//!
//! `X^(n)_i = (⌊n X_i⌋ + U_i) / n` with `U_i` i.i.d. uniform replaces each
//! coordinate by a uniform point in its cell of width `1/n`. Given the cell
//! indices the coordinates are independent, so redrawing the uniforms is an
//! exact knockoff of `X^(n)`, and `X^(n) → X` in total variation.

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Rng};
use crate::sample::{KnockoffSampler, MarginalLaw};
use crate::mixture::Estimate;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Grid refinement `n ≥ 1`; cells are `[k/n, (k+1)/n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct DiscretizationLevel(u64);

impl DiscretizationLevel {
    pub fn new(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("discretization level must be ≥ 1".into()));
        }
        Ok(Self(n))
    }

    pub fn n(self) -> u64 {
        self.0
    }

    pub fn cell(self, x: f64) -> f64 {
        (self.0 as f64 * x).floor()
    }

    /// `(k + u)/n`, kept inside cell `k` despite rounding.
    pub fn point_in_cell(self, k: f64, u: f64) -> f64 {
        let n = self.0 as f64;
        let mut out = (k + u) / n;
        while (n * out).floor() > k {
            out = out.next_down();
        }
        while (n * out).floor() < k {
            out = out.next_up();
        }
        out
    }
}

impl TryFrom<u64> for DiscretizationLevel {
    type Error = Error;
    fn try_from(n: u64) -> Result<Self> {
        Self::new(n)
    }
}

impl From<DiscretizationLevel> for u64 {
    fn from(l: DiscretizationLevel) -> u64 {
        l.0
    }
}

/// `(⌊n x_i⌋ + u_i)/n` for given uniforms.
pub fn discretize_with(x: &[f64], level: DiscretizationLevel, u: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.len(), u.len())?;
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("cannot discretize non-finite value {v}")));
    }
    Ok(x.iter().zip(u).map(|(&xi, &ui)| level.point_in_cell(level.cell(xi), ui)).collect())
}

fn redraw(x: &[f64], level: DiscretizationLevel, rng: &mut Rng) -> Result<Vec<f64>> {
    let u: Vec<f64> = (0..x.len()).map(|_| rng.random::<f64>()).collect();
    discretize_with(x, level, &u)
}

/// `X^(n)` from `x` with uniforms drawn from `seed`.
pub fn discretize(x: &[f64], level: DiscretizationLevel, seed: u64) -> Result<Vec<f64>> {
    redraw(x, level, &mut rng::from_seed(seed))
}

/// Knockoff of a discretized point: the same cells with fresh uniforms.
/// Every coordinate satisfies `|x_i − x̃_i| < 1/n`.
pub fn knockoff_of_discretized(x: &[f64], level: DiscretizationLevel, seed: u64) -> Result<Vec<f64>> {
    // a different stream from `discretize` under the same seed
    redraw(x, level, &mut rng::substream(seed, 1))
}

/// Knockoffs for `X^(n)` where `X` follows a base model.
pub struct DiscretizedKnockoffs {
    base: Arc<dyn KnockoffSampler>,
    level: DiscretizationLevel,
}

impl DiscretizedKnockoffs {
    pub fn new(base: Arc<dyn KnockoffSampler>, level: DiscretizationLevel) -> Self {
        Self { base, level }
    }

    pub fn level(&self) -> DiscretizationLevel {
        self.level
    }
}

impl KnockoffSampler for DiscretizedKnockoffs {
    fn p(&self) -> usize {
        self.base.p()
    }

    fn sample_x(&self, rng: &mut Rng) -> Vec<f64> {
        let x = self.base.sample_x(rng);
        redraw(&x, self.level, rng).expect("base sampler produced a finite point")
    }

    fn knockoff(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        check_dim(self.p(), x.len())?;
        redraw(x, self.level, rng)
    }

    /// CDF of `X^(n)_i`: the base CDF at cell edges, linear within cells.
    fn marginal_laws(&self) -> Vec<MarginalLaw> {
        let n = self.level.n() as f64;
        self.base
            .marginal_laws()
            .into_iter()
            .map(|law| {
                // P(X < t) at cell edges
                let below: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match law {
                    MarginalLaw::Continuous(f) => f,
                    MarginalLaw::Discrete(pmf) => Arc::new(move |t: f64| {
                        if t <= 0.0 {
                            0.0
                        } else {
                            (0..t.ceil() as u64).map(|k| pmf(k)).sum()
                        }
                    }),
                };
                MarginalLaw::Continuous(Arc::new(move |t: f64| {
                    let k = (n * t).floor();
                    let lo = below(k / n);
                    let hi = below((k + 1.0) / n);
                    lo + (n * t - k) * (hi - lo)
                }))
            })
            .collect()
    }
}

/// Cap on histogram cells in [`empirical_tv`].
pub const MAX_TV_CELLS: u64 = 10_000_000;

/// Histogram grid on a bounding box. Points outside the box are counted in
/// the nearest edge cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bins: usize,
    pub bbox: Vec<(f64, f64)>,
}

impl Histogram {
    pub fn new(bins: usize, bbox: Vec<(f64, f64)>) -> Result<Self> {
        if bins == 0 || bbox.is_empty() {
            return Err(Error::InvalidInput("histogram needs ≥ 1 bin and ≥ 1 axis".into()));
        }
        let cells = (bins as f64).powi(bbox.len() as i32);
        if cells > MAX_TV_CELLS as f64 {
            return Err(Error::ResourceLimit(format!(
                "{bins}^{} = {cells:e} histogram cells exceeds {MAX_TV_CELLS}",
                bbox.len()
            )));
        }
        if bbox.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(Error::InvalidInput(format!("invalid bounding box {bbox:?}")));
        }
        Ok(Self { bins, bbox })
    }

    /// Smallest box containing every row of both sample sets.
    pub fn covering(bins: usize, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Self> {
        let p = a.first().or(b.first()).map_or(0, Vec::len);
        let mut bbox = vec![(f64::INFINITY, f64::NEG_INFINITY); p];
        for row in a.iter().chain(b) {
            check_dim(p, row.len())?;
            for (j, &v) in row.iter().enumerate() {
                bbox[j].0 = bbox[j].0.min(v);
                bbox[j].1 = bbox[j].1.max(v);
            }
        }
        Self::new(bins, bbox)
    }

    pub fn cell_index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for (&v, &(lo, hi)) in x.iter().zip(&self.bbox).rev() {
            let w = hi - lo;
            let j = if w > 0.0 { (((v - lo) / w) * self.bins as f64).floor() } else { 0.0 };
            idx = idx * self.bins + (j.max(0.0) as usize).min(self.bins - 1);
        }
        idx
    }

    fn counts<'a>(&self, rows: impl Iterator<Item = &'a [f64]>) -> Vec<u32> {
        let mut c = vec![0u32; self.bins.pow(self.bbox.len() as u32)];
        for r in rows {
            c[self.cell_index(r)] += 1;
        }
        c
    }
}

fn half_l1(ca: &[u32], na: usize, cb: &[u32], nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    0.5 * ca.iter().zip(cb).map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs()).sum::<f64>()
}

fn check_samples(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("empirical TV needs nonempty sample sets".into()));
    }
    check_dim(a[0].len(), b[0].len())
}

/// Half the L1 distance between the normalized histograms of two samples
/// on their common bounding box, `bins` per axis.
pub fn empirical_tv(a: &[Vec<f64>], b: &[Vec<f64>], bins: usize) -> Result<f64> {
    check_samples(a, b)?;
    let h = Histogram::covering(bins, a, b)?;
    empirical_tv_on(&h, a, b)
}

/// As [`empirical_tv`] on a given grid.
pub fn empirical_tv_on(h: &Histogram, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    check_samples(a, b)?;
    check_dim(h.bbox.len(), a[0].len())?;
    let ca = h.counts(a.iter().map(Vec::as_slice));
    let cb = h.counts(b.iter().map(Vec::as_slice));
    Ok(half_l1(&ca, a.len(), &cb, b.len()))
}

/// Histogram TV between paired samples `(a_k, b_k)` with a bootstrap
/// standard error from resampling pairs.
pub fn paired_tv_bootstrap(h: &Histogram, a: &[Vec<f64>], b: &[Vec<f64>], n_boot: usize, seed: u64) -> Result<Estimate> {
    check_samples(a, b)?;
    check_dim(a.len(), b.len())?;
    let value = empirical_tv_on(h, a, b)?;
    if n_boot < 2 {
        return Ok(Estimate { value, se: f64::NAN });
    }
    let ia: Vec<usize> = a.iter().map(|r| h.cell_index(r)).collect();
    let ib: Vec<usize> = b.iter().map(|r| h.cell_index(r)).collect();
    let cells = h.bins.pow(h.bbox.len() as u32);
    let n = a.len();
    let reps: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(seed, r as u64);
            let (mut ca, mut cb) = (vec![0u32; cells], vec![0u32; cells]);
            for _ in 0..n {
                let k = rng.random_range(0..n);
                ca[ia[k]] += 1;
                cb[ib[k]] += 1;
            }
            half_l1(&ca, n, &cb, n)
        })
        .collect();
    let (_, se) = crate::stats::mean_se(&reps);
    // mean_se returns the SE of the mean; the bootstrap SE is the spread
    Ok(Estimate { value, se: se * (n_boot as f64).sqrt() })
}

/// One row of the TV-versus-level table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvRow {
    pub n: u64,
    pub tv: f64,
    pub bootstrap_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvDecayReport {
    pub draws: usize,
    pub bins: usize,
    pub bbox: Vec<(f64, f64)>,
    pub rows: Vec<TvRow>,
    /// Each TV is at most the previous one plus twice the combined
    /// bootstrap SE.
    pub monotone_within_2se: bool,
}

/// TV between `X` and `X^(n)` computed from the same draws of `X`, for
/// each level. The bounding box defaults to the range of the `X` draws.
pub fn tv_decay(
    base: &dyn KnockoffSampler,
    levels: &[u64],
    draws: usize,
    bins: usize,
    bbox: Option<Vec<(f64, f64)>>,
    n_boot: usize,
    seed: u64,
) -> Result<TvDecayReport> {
    if draws == 0 || levels.is_empty() {
        return Err(Error::InvalidInput("tv-decay needs draws ≥ 1 and at least one level".into()));
    }
    let xs = crate::sample::sample_in_blocks(base.p(), draws, rng::derive_seed(seed, 0x7476), |rng| {
        let x = base.sample_x(rng);
        Ok((x.clone(), x))
    })?
    .x_block();
    let h = match bbox {
        Some(b) => Histogram::new(bins, b)?,
        None => Histogram::covering(bins, &xs, &[])?,
    };
    let mut rows = Vec::with_capacity(levels.len());
    for (li, &n) in levels.iter().enumerate() {
        let level = DiscretizationLevel::new(n)?;
        let level_seed = rng::derive_seed(seed, 0x1000 + li as u64);
        let disc: Vec<Vec<f64>> = xs
            .par_chunks(crate::sample::BLOCK_ROWS)
            .enumerate()
            .flat_map_iter(|(b, chunk)| {
                let mut rng = rng::substream(level_seed, b as u64);
                chunk.iter().map(move |x| redraw(x, level, &mut rng).expect("finite draws")).collect::<Vec<_>>()
            })
            .collect();
        let est = paired_tv_bootstrap(&h, &xs, &disc, n_boot, rng::derive_seed(level_seed, 0xB007))?;
        rows.push(TvRow { n, tv: est.value, bootstrap_se: est.se });
    }
    let monotone_within_2se =
        rows.windows(2).all(|w| w[1].tv <= w[0].tv + 2.0 * (w[0].bootstrap_se.powi(2) + w[1].bootstrap_se.powi(2)).sqrt());
    Ok(TvDecayReport { draws, bins, bbox: h.bbox.clone(), rows, monotone_within_2se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{GaussianKnockoffs, GaussianModel};

    fn std_normal(p: usize) -> GaussianKnockoffs {
        GaussianKnockoffs::new(GaussianModel::equicorrelated(nalgebra::DMatrix::identity(p, p)).unwrap()).unwrap()
    }

    fn lv(n: u64) -> DiscretizationLevel {
        DiscretizationLevel::new(n).unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        assert!((discretize_with(&[0.37], lv(10), &[0.5]).unwrap()[0] - 0.35).abs() < 1e-15);
        assert!((discretize_with(&[-0.23], lv(10), &[0.5]).unwrap()[0] + 0.25).abs() < 1e-15);
        assert!((discretize_with(&[0.37], lv(10), &[0.2]).unwrap()[0] - 0.32).abs() < 1e-15);
        assert!(DiscretizationLevel::new(0).is_err());
        assert!(discretize_with(&[f64::NAN], lv(3), &[0.5]).is_err());
    }

    #[test]
    fn point_in_cell_survives_rounding() {
        let l = lv(10);
        let top = 1.0f64.next_down();
        for k in [-7.0, 0.0, 2.0, 3.0, 1e6] {
            let v = l.point_in_cell(k, top);
            assert_eq!((10.0 * v).floor(), k);
            assert_eq!((10.0 * l.point_in_cell(k, 0.0)).floor(), k);
        }
    }

    #[test]
    fn cell_confinement_and_fine_levels() {
        for seed in 0..2000 {
            let x = [seed as f64 * 0.0137 - 13.0, (seed as f64).sin() * 5.0];
            for n in [1, 3, 10, 1_000_000] {
                let l = lv(n);
                let d = discretize(&x, l, seed).unwrap();
                let k = knockoff_of_discretized(&d, l, seed).unwrap();
                for i in 0..2 {
                    assert_eq!(l.cell(d[i]), l.cell(x[i]));
                    assert_eq!(l.cell(k[i]), l.cell(x[i]));
                    assert!((d[i] - k[i]).abs() < 1.0 / n as f64);
                }
            }
        }
        assert_ne!(discretize(&[0.5], lv(2), 4).unwrap(), knockoff_of_discretized(&[0.5], lv(2), 4).unwrap());
    }

    #[test]
    fn tv_trivial_cases() {
        let a: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 100.0, 0.5]).collect();
        assert_eq!(empirical_tv(&a, &a, 10).unwrap(), 0.0);
        let b: Vec<Vec<f64>> = a.iter().map(|r| vec![r[0] + 5.0, 0.5]).collect();
        assert!((empirical_tv(&a, &b, 10).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(empirical_tv(&a, &b, 4000), Err(Error::ResourceLimit(_))));
        assert!(empirical_tv(&a, &[], 4).is_err());
    }

    #[test]
    fn bootstrap_se_is_sensible() {
        let g = std_normal(2);
        let xs = crate::sample::sample_in_blocks(2, 5000, 3, |rng| {
            let x = g.sample_x(rng);
            Ok((x.clone(), x))
        })
        .unwrap()
        .x_block();
        let d: Vec<Vec<f64>> = xs.iter().enumerate().map(|(i, x)| discretize(x, lv(4), i as u64).unwrap()).collect();
        let h = Histogram::covering(20, &xs, &[]).unwrap();
        let e = paired_tv_bootstrap(&h, &xs, &d, 200, 1).unwrap();
        // binomial-scale SE of a proportion near e.value
        let scale = (e.value * (1.0 - e.value) / 5000.0).sqrt();
        assert!(e.se > 0.2 * scale && e.se < 5.0 * scale, "{e:?} vs {scale}");
    }

    #[test]
    fn discretized_marginal_cdf_is_piecewise_linear() {
        let base = Arc::new(std_normal(1));
        let dk = DiscretizedKnockoffs::new(base, lv(4));
        let MarginalLaw::Continuous(cdf) = &dk.marginal_laws()[0] else { panic!() };
        let phi = crate::special::normal_cdf;
        assert!((cdf(0.25) - phi(0.25)).abs() < 1e-15);
        assert!((cdf(0.375) - 0.5 * (phi(0.25) + phi(0.5))).abs() < 1e-15);
        let m = dk.sample_joint(20_000, 4).unwrap();
        for j in 0..2 {
            let d = crate::stats::ks_statistic(&m.column(j), |t| cdf(t));
            assert!(d < crate::special::ks_critical_value(20_000, 0.01), "{d}");
        }
    }

    #[test]
    fn discrete_base_marginal() {
        let f = crate::mixture::ConjugateFamily::poisson_gamma(&[1.0], &[1.0]).unwrap();
        let dk = DiscretizedKnockoffs::new(Arc::new(f), lv(1));
        let MarginalLaw::Continuous(cdf) = &dk.marginal_laws()[0] else { panic!() };
        // X^(1) = X + U with X geometric(1/2)
        assert!((cdf(1.0) - 0.5).abs() < 1e-15);
        assert!((cdf(1.5) - 0.625).abs() < 1e-15);
    }
}
