//! Verification that a sampler produces a genuine knockoff law.
//!
//! Statistical tests run on a [`JointSampleMatrix`]: an energy-distance
//! swap test, per-coordinate marginal tests for both blocks, and the
//! cross-covariance identity `cov(X_i, X̃_j) = cov(X_i, X_j)` for `i ≠ j`.
//! [`swap_test_exact_pmf`] checks swap invariance of a pmf exactly.

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Rng};
use crate::sample::{JointSampleMatrix, KnockoffSampler, MarginalLaw};
use crate::special::{ks_critical_value, ks_p_value};
use crate::stats::{chi_square_gof, covariance, jackknife_cov_difference, ks_statistic};
use crate::swap::{enumerate_swaps, SwapSet};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// One test outcome; the serialized form is the report schema.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestRecord {
    pub test: String,
    pub statistic: f64,
    /// Rejection threshold: a critical value, a significance level for
    /// `p_value`, or a tolerance.
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub pass: bool,
    pub seed: u64,
    pub n: usize,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub advisory: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub records: Vec<TestRecord>,
    /// True iff every non-advisory record passes.
    pub pass: bool,
}

impl DiagnosticsReport {
    pub fn new(records: Vec<TestRecord>) -> Self {
        let pass = records.iter().all(|r| r.pass || r.advisory);
        Self { records, pass }
    }

    pub fn extend(&mut self, more: impl IntoIterator<Item = TestRecord>) {
        self.records.extend(more);
        self.pass = self.records.iter().all(|r| r.pass || r.advisory);
    }
}

/// Options for [`swap_test_energy_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyOptions {
    pub n_permutations: usize,
    /// Only the first `max_rows` rows are used: the statistic needs all
    /// pairwise distances of the pooled sample.
    pub max_rows: usize,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        Self { n_permutations: 200, max_rows: 1000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyTest {
    pub statistic: f64,
    pub p_value: f64,
    pub rows_used: usize,
}

/// Minimum number of rows for the energy swap test.
pub const ENERGY_MIN_ROWS: usize = 100;

/// Energy swap test with default options; returns the permutation p-value.
pub fn swap_test_energy(samples: &JointSampleMatrix, s: &SwapSet, n_permutations: usize, seed: u64) -> Result<f64> {
    let opts = EnergyOptions { n_permutations, ..Default::default() };
    Ok(swap_test_energy_with(samples, s, opts, seed)?.p_value)
}

/// Splits the rows into halves, applies `f_S` to the second half, and runs
/// an energy-distance two-sample permutation test between the halves.
pub fn swap_test_energy_with(samples: &JointSampleMatrix, s: &SwapSet, opts: EnergyOptions, seed: u64) -> Result<EnergyTest> {
    check_dim(samples.p(), s.p())?;
    let rows = samples.nrows().min(opts.max_rows);
    if rows < ENERGY_MIN_ROWS {
        return Err(Error::InvalidInput(format!(
            "energy swap test needs at least {ENERGY_MIN_ROWS} rows, got {rows}"
        )));
    }
    if opts.n_permutations == 0 {
        return Err(Error::InvalidInput("n_permutations must be positive".into()));
    }
    let m = rows / 2;
    let n = 2 * m;
    let mut pooled: Vec<Vec<f64>> = (0..m).map(|i| samples.row(i).to_vec()).collect();
    for i in m..n {
        pooled.push(s.apply(samples.row(i))?);
    }
    // full pairwise distance matrix of the pooled sample
    let mut dist = vec![0.0; n * n];
    dist.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, d) in row.iter_mut().enumerate() {
            *d = pooled[i].iter().zip(&pooled[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        }
    });
    let row_sums: Vec<f64> = dist.chunks(n).map(|r| r.iter().sum()).collect();
    // E = 2 mean_AB − mean_AA − mean_BB, scaled by m/2, from the within-A
    // and within-B double sums.
    let stat = |labels: &[usize]| -> f64 {
        let (a, b) = labels.split_at(m);
        let within = |idx: &[usize]| {
            let mut s = 0.0;
            for &i in idx {
                let r = &dist[i * n..(i + 1) * n];
                s += idx.iter().map(|&j| r[j]).sum::<f64>();
            }
            s
        };
        let saa = within(a);
        let sbb = within(b);
        let sab = a.iter().map(|&i| row_sums[i]).sum::<f64>() - saa;
        let mf = m as f64;
        (mf / 2.0) * (2.0 * sab / (mf * mf) - saa / (mf * mf) - sbb / (mf * mf))
    };
    let identity: Vec<usize> = (0..n).collect();
    let observed = stat(&identity);
    let exceed: usize = (0..opts.n_permutations)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(seed, r as u64);
            let mut perm = identity.clone();
            perm.shuffle(&mut rng);
            usize::from(stat(&perm) >= observed)
        })
        .sum();
    Ok(EnergyTest {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + opts.n_permutations) as f64,
        rows_used: n,
    })
}

/// Maximum number of grid points in [`swap_test_exact_pmf`].
pub const MAX_PMF_POINTS: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactPmfReport {
    pub max_deviation: f64,
    /// Grid point and swap set (as 1-based members) attaining the maximum.
    pub witness: Option<(Vec<i64>, Vec<usize>)>,
    pub points: u64,
}

/// `max_{S, y} |pmf(y) − pmf(f_S(y))|` over the grid `Π values[i]` with the
/// same values for coordinates `i` and `p + i`.
pub fn swap_test_exact_pmf<F>(pmf: F, p: usize, values: &[std::ops::RangeInclusive<i64>]) -> Result<ExactPmfReport>
where
    F: Fn(&[i64]) -> f64 + Sync,
{
    check_dim(p, values.len())?;
    let swaps = enumerate_swaps(p)?;
    let widths: Vec<u64> = values.iter().chain(values).map(|r| (r.end() - r.start() + 1).max(0) as u64).collect();
    let points = widths.iter().try_fold(1u64, |acc, &w| acc.checked_mul(w)).unwrap_or(u64::MAX);
    if points > MAX_PMF_POINTS {
        return Err(Error::ResourceLimit(format!("{points} grid points exceeds {MAX_PMF_POINTS}")));
    }
    let starts: Vec<i64> = values.iter().chain(values).map(|r| *r.start()).collect();
    let best = (0..points)
        .into_par_iter()
        .map(|mut idx| {
            let y: Vec<i64> = widths
                .iter()
                .zip(&starts)
                .map(|(&w, &s)| {
                    let v = s + (idx % w) as i64;
                    idx /= w;
                    v
                })
                .collect();
            let base = pmf(&y);
            let mut worst = (0.0f64, 0u64);
            for s in swaps.iter().skip(1) {
                let mut z = y.clone();
                s.apply_in_place(&mut z).expect("dimension checked");
                let dev = (base - pmf(&z)).abs();
                if dev > worst.0 || dev.is_nan() {
                    worst = (if dev.is_nan() { f64::INFINITY } else { dev }, s.mask());
                }
            }
            (worst.0, worst.1, y)
        })
        // largest deviation, ties to the smallest point: independent of
        // how the range was split
        .reduce(
            || (0.0, 0, Vec::new()),
            |a, b| {
                let b_wins = b.0 > a.0 || (b.0 == a.0 && b.0 > 0.0 && b.2 < a.2);
                if b_wins { b } else { a }
            },
        );
    let witness = (best.0 > 0.0).then(|| (best.2, SwapSet::from_mask(p, best.1).expect("valid mask").members()));
    Ok(ExactPmfReport { max_deviation: best.0, witness, points })
}

/// Which block a marginal record refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    X,
    Knockoff,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalRecord {
    pub coordinate: usize,
    pub block: Block,
    /// `ks` or `chi-square`.
    pub method: &'static str,
    pub statistic: f64,
    /// KS critical value, or the χ² degrees of freedom.
    pub critical_value: f64,
    pub p_value: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalReport {
    /// Per-statistic significance level.
    pub alpha: f64,
    pub records: Vec<MarginalRecord>,
    pub pass: bool,
}

/// Largest count cell tested individually by the discrete χ² variant;
/// larger values are pooled into one tail cell.
pub const CHI_SQUARE_MAX_COUNT: u64 = 30;

/// Tests every column of both blocks against the reference marginal law
/// of `X_i`: KS for continuous laws, χ² on `{0..30}` plus a tail cell for
/// laws on the integers. Each statistic is tested at level `alpha`.
pub fn marginal_preservation_test(samples: &JointSampleMatrix, laws: &[MarginalLaw], alpha: f64) -> Result<MarginalReport> {
    let p = samples.p();
    check_dim(p, laws.len())?;
    if samples.nrows() == 0 {
        return Err(Error::InvalidInput("marginal test needs samples".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let n = samples.nrows();
    let mut records = Vec::with_capacity(2 * p);
    for (block, offset) in [(Block::X, 0), (Block::Knockoff, p)] {
        for (i, law) in laws.iter().enumerate() {
            let col = samples.column(offset + i);
            let rec = match law {
                MarginalLaw::Continuous(cdf) => {
                    let d = ks_statistic(&col, |t| cdf(t));
                    let crit = ks_critical_value(n, alpha);
                    MarginalRecord {
                        coordinate: i + 1,
                        block,
                        method: "ks",
                        statistic: d,
                        critical_value: crit,
                        p_value: ks_p_value(n, d),
                        pass: d <= crit,
                    }
                }
                MarginalLaw::Discrete(pmf) => {
                    let k = CHI_SQUARE_MAX_COUNT as usize;
                    let on_support = col.iter().all(|v| *v >= 0.0 && v.fract() == 0.0 && v.is_finite());
                    let mut counts = vec![0u64; k + 2];
                    for v in col.iter().filter(|_| on_support) {
                        counts[(*v as usize).min(k + 1)] += 1;
                    }
                    let mut probs: Vec<f64> = (0..=k as u64).map(|j| pmf(j)).collect();
                    probs.push((1.0 - probs.iter().sum::<f64>()).max(0.0));
                    let (stat, dof, pv) =
                        if on_support { chi_square_gof(&counts, &probs) } else { (f64::INFINITY, 0, 0.0) };
                    MarginalRecord {
                        coordinate: i + 1,
                        block,
                        method: "chi-square",
                        statistic: stat,
                        critical_value: dof as f64,
                        p_value: pv,
                        pass: pv >= alpha,
                    }
                }
            };
            records.push(rec);
        }
    }
    let pass = records.iter().all(|r| r.pass);
    Ok(MarginalReport { alpha, records, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossCovariance {
    pub i: usize,
    pub j: usize,
    pub cov_x_knockoff: f64,
    pub cov_x_x: f64,
    pub difference: f64,
    pub se: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagonalCovariance {
    pub i: usize,
    pub cov_x_knockoff: f64,
    pub var_x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub n: usize,
    pub off_diagonal: Vec<CrossCovariance>,
    /// `cov(X_i, X̃_i)` is not constrained by exchangeability; reported only.
    pub diagonal: Vec<DiagonalCovariance>,
    /// Worst `|difference| / se` over the off-diagonal pairs.
    pub max_z: f64,
    pub pass: bool,
}

/// Minimum number of rows for [`covariance_consistency`].
pub const COVARIANCE_MIN_ROWS: usize = 1000;

/// `|ĉov(X_i, X̃_j) − ĉov(X_i, X_j)| ≤ 4·SE` for all `i ≠ j`, with
/// delete-one jackknife standard errors.
pub fn covariance_consistency(samples: &JointSampleMatrix) -> Result<CovarianceReport> {
    let n = samples.nrows();
    if n < COVARIANCE_MIN_ROWS {
        return Err(Error::InvalidInput(format!(
            "covariance consistency needs at least {COVARIANCE_MIN_ROWS} rows, got {n}"
        )));
    }
    let p = samples.p();
    let cols: Vec<Vec<f64>> = (0..2 * p).map(|j| samples.column(j)).collect();
    let mut off = Vec::new();
    let mut max_z: f64 = 0.0;
    for i in 0..p {
        for j in (0..p).filter(|&j| j != i) {
            let (diff, se) = jackknife_cov_difference(&cols[i], &cols[p + j], &cols[j]);
            let z = if se > 0.0 { diff.abs() / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
            max_z = max_z.max(z);
            off.push(CrossCovariance {
                i: i + 1,
                j: j + 1,
                cov_x_knockoff: covariance(&cols[i], &cols[p + j]),
                cov_x_x: covariance(&cols[i], &cols[j]),
                difference: diff,
                se,
                pass: z <= 4.0,
            });
        }
    }
    let diagonal = (0..p)
        .map(|i| DiagonalCovariance {
            i: i + 1,
            cov_x_knockoff: covariance(&cols[i], &cols[p + i]),
            var_x: covariance(&cols[i], &cols[i]),
        })
        .collect();
    let pass = off.iter().all(|c| c.pass);
    Ok(CovarianceReport { n, off_diagonal: off, diagonal, max_z, pass })
}

/// Configuration of [`diagnose`].
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnoseOptions {
    /// Family-wise level of each test group.
    pub alpha: f64,
    pub energy: EnergyOptions,
    /// Swap sets for the energy test; `None` means every singleton.
    pub swap_sets: Option<Vec<SwapSet>>,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self { alpha: 0.05, energy: EnergyOptions::default(), swap_sets: None }
    }
}

/// Runs the energy swap tests, the marginal test and (with ≥ 1000 rows)
/// covariance consistency on `samples`. Each group is held at level
/// `alpha` by a Bonferroni split over its statistics.
pub fn diagnose_samples(
    samples: &JointSampleMatrix,
    laws: &[MarginalLaw],
    opts: &DiagnoseOptions,
    seed: u64,
) -> Result<DiagnosticsReport> {
    let p = samples.p();
    let n = samples.nrows();
    let sets = match &opts.swap_sets {
        Some(s) => s.clone(),
        None => (1..=p).map(|i| SwapSet::singleton(p, i)).collect::<Result<_>>()?,
    };
    let mut records = Vec::new();
    let level = opts.alpha / sets.len().max(1) as f64;
    for (k, s) in sets.iter().enumerate() {
        let sub = rng::derive_seed(seed, 0xE0 + k as u64);
        let t = swap_test_energy_with(samples, s, opts.energy, sub)?;
        records.push(TestRecord {
            test: format!("swap_test_energy S={:?}", s.members()),
            statistic: t.statistic,
            threshold: level,
            p_value: Some(t.p_value),
            pass: t.p_value >= level,
            seed: sub,
            n: t.rows_used,
            advisory: false,
        });
    }
    let level = opts.alpha / (2 * p) as f64;
    let m = marginal_preservation_test(samples, laws, level)?;
    for r in &m.records {
        records.push(TestRecord {
            test: format!(
                "marginal_preservation {} {}{}",
                r.method,
                if r.block == Block::X { "X" } else { "XK" },
                r.coordinate
            ),
            statistic: r.statistic,
            threshold: if r.method == "ks" { r.critical_value } else { level },
            p_value: Some(r.p_value),
            pass: r.pass,
            seed,
            n,
            advisory: false,
        });
    }
    if n >= COVARIANCE_MIN_ROWS && p >= 2 {
        let c = covariance_consistency(samples)?;
        records.push(TestRecord {
            test: "covariance_consistency max |z|".into(),
            statistic: c.max_z,
            threshold: 4.0,
            p_value: None,
            pass: c.pass,
            seed,
            n,
            advisory: false,
        });
    }
    Ok(DiagnosticsReport::new(records))
}

/// Draws `n` rows from `sampler` with `seed` and diagnoses them.
pub fn diagnose(sampler: &dyn KnockoffSampler, n: usize, opts: &DiagnoseOptions, seed: u64) -> Result<DiagnosticsReport> {
    let samples = sampler.sample_joint(n, seed)?;
    diagnose_samples(&samples, &sampler.marginal_laws(), opts, rng::derive_seed(seed, 0xD1A6))
}

/// Cellwise swap symmetry of sampled `(X, X̃)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSymmetryReport {
    pub cells: usize,
    /// Largest `|P̂(c) − P̂(f_S(c))| / SE` over cells and swaps.
    pub max_z: f64,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Bins every coordinate of both blocks by `edges[i]` (coordinate `i` and
/// `p+i` share edges; values outside fall into the end bins) and compares
/// cell frequencies with their swapped counterparts at `z_gate` standard
/// errors.
pub fn cell_symmetry_test(samples: &JointSampleMatrix, edges: &[Vec<f64>], z_gate: f64) -> Result<CellSymmetryReport> {
    let p = samples.p();
    check_dim(p, edges.len())?;
    let bins: Vec<usize> = edges.iter().map(|e| e.len() + 1).collect();
    let dims: Vec<usize> = bins.iter().chain(&bins).copied().collect();
    let cells = dims.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).unwrap_or(usize::MAX);
    if cells as u64 > MAX_PMF_POINTS {
        return Err(Error::ResourceLimit(format!("{cells} cells exceeds {MAX_PMF_POINTS}")));
    }
    let bin_of = |i: usize, v: f64| edges[i % p].partition_point(|&e| e <= v);
    let flat = |c: &[usize]| c.iter().zip(&dims).rev().fold(0, |acc, (&ci, &d)| acc * d + ci);
    let mut counts = vec![0u64; cells];
    for row in samples.rows() {
        let c: Vec<usize> = row.iter().enumerate().map(|(i, &v)| bin_of(i, v)).collect();
        counts[flat(&c)] += 1;
    }
    let n = samples.nrows() as f64;
    let swaps = enumerate_swaps(p)?;
    let (mut max_z, mut max_dev) = (0.0f64, 0.0f64);
    let mut idx = vec![0usize; 2 * p];
    for cell in 0..cells {
        let mut rem = cell;
        for (k, &d) in dims.iter().enumerate() {
            idx[k] = rem % d;
            rem /= d;
        }
        for s in swaps.iter().skip(1) {
            let mut other = idx.clone();
            s.apply_in_place(&mut other)?;
            let (a, b) = (counts[cell] as f64 / n, counts[flat(&other)] as f64 / n);
            let dev = (a - b).abs();
            // SE of a difference of two multinomial cell frequencies
            let se = ((a + b - dev * dev) / n).sqrt();
            max_dev = max_dev.max(dev);
            if dev > 0.0 {
                max_z = max_z.max(if se > 0.0 { dev / se } else { f64::INFINITY });
            }
        }
    }
    Ok(CellSymmetryReport { cells, max_z, max_deviation: max_dev, pass: max_z <= z_gate })
}

/// Deliberately valid or broken samplers built on a base model, for
/// calibration and power checks.
pub mod fixtures {
    use super::*;

    /// `X̃ = X`: trivially a knockoff.
    pub struct Trivial(pub Arc<dyn KnockoffSampler>);

    /// `X̃ = X + shift`: breaks both exchangeability and the marginals.
    pub struct Shifted {
        pub base: Arc<dyn KnockoffSampler>,
        pub shift: f64,
    }

    /// `X̃` an independent draw of `X`: marginals hold, cross-covariances fail.
    pub struct IndependentCopy(pub Arc<dyn KnockoffSampler>);

    impl KnockoffSampler for Trivial {
        fn p(&self) -> usize {
            self.0.p()
        }
        fn sample_x(&self, rng: &mut Rng) -> Vec<f64> {
            self.0.sample_x(rng)
        }
        fn knockoff(&self, x: &[f64], _rng: &mut Rng) -> Result<Vec<f64>> {
            check_dim(self.p(), x.len())?;
            Ok(x.to_vec())
        }
        fn marginal_laws(&self) -> Vec<MarginalLaw> {
            self.0.marginal_laws()
        }
    }

    impl KnockoffSampler for Shifted {
        fn p(&self) -> usize {
            self.base.p()
        }
        fn sample_x(&self, rng: &mut Rng) -> Vec<f64> {
            self.base.sample_x(rng)
        }
        fn knockoff(&self, x: &[f64], _rng: &mut Rng) -> Result<Vec<f64>> {
            check_dim(self.p(), x.len())?;
            Ok(x.iter().map(|v| v + self.shift).collect())
        }
        fn marginal_laws(&self) -> Vec<MarginalLaw> {
            self.base.marginal_laws()
        }
    }

    impl KnockoffSampler for IndependentCopy {
        fn p(&self) -> usize {
            self.0.p()
        }
        fn sample_x(&self, rng: &mut Rng) -> Vec<f64> {
            self.0.sample_x(rng)
        }
        fn knockoff(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
            check_dim(self.p(), x.len())?;
            Ok(self.0.sample_x(rng))
        }
        fn marginal_laws(&self) -> Vec<MarginalLaw> {
            self.0.marginal_laws()
        }
    }
}

#[cfg(test)]
mod tests;
