//! A minimal knockoff filter and an FDR simulation harness.
//!
//! `W_j = |corr(x_j, y)| − |corr(x̃_j, y)|` is antisymmetric under swapping
//! a column with its knockoff; the knockoff(+) threshold then selects
//! `{j : W_j ≥ τ}`.

use crate::error::{check_dim, Error, Result};
use crate::mixture::Estimate;
use crate::rng::{self, Rng};
use crate::sample::KnockoffSampler;
use crate::stats::mean_se;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// Centered column with unit sum of squares, or `None` if constant.
fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - m).collect();
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    // relative to the column's scale, so rounding noise counts as constant
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    (norm > 1e-12 * scale * (v.len() as f64).sqrt()).then(|| c.iter().map(|x| x / norm).collect())
}

/// Marginal-correlation difference statistics. `x` and `xt` are `n × p`
/// row-major; a constant column raises `DegenerateColumn` with its 1-based
/// index in `1..=2p` (knockoff columns come after the originals).
pub fn compute_w_statistics(x: &[Vec<f64>], xt: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    check_dim(n, x.len())?;
    check_dim(n, xt.len())?;
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 observations".into()));
    }
    let p = x[0].len();
    for r in x.iter().chain(xt) {
        check_dim(p, r.len())?;
    }
    let ys = standardize(y).ok_or_else(|| Error::InvalidInput("response has zero variance".into()))?;
    let corr = |rows: &[Vec<f64>], j: usize, label: usize| -> Result<f64> {
        let c = standardize(&column(rows, j)).ok_or(Error::DegenerateColumn(label))?;
        Ok(c.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>())
    };
    (0..p).map(|j| Ok(corr(x, j, j + 1)?.abs() - corr(xt, j, p + j + 1)?.abs())).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Selection {
    /// `+∞` when no threshold qualifies.
    pub tau: f64,
    /// Selected 1-based indices, ascending.
    pub selected: Vec<usize>,
}

/// Knockoff (`plus = false`) or knockoff+ (`plus = true`) threshold
/// `τ = min{t > 0, t ∈ |W| : (plus + #{W_j ≤ −t}) / max(1, #{W_j ≥ t}) ≤ q}`.
pub fn knockoff_threshold(w: &[f64], q: f64, plus: bool) -> Result<Selection> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("target FDR must lie in (0,1), got {q}")));
    }
    if w.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("W contains NaN".into()));
    }
    let offset = if plus { 1.0 } else { 0.0 };
    let mut ts: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&t| t > 0.0).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let tau = ts
        .into_iter()
        .find(|&t| {
            let neg = w.iter().filter(|&&v| v <= -t).count() as f64;
            let pos = w.iter().filter(|&&v| v >= t).count() as f64;
            (offset + neg) / pos.max(1.0) <= q
        })
        .unwrap_or(f64::INFINITY);
    let selected = (0..w.len()).filter(|&j| w[j] >= tau).map(|j| j + 1).collect();
    Ok(Selection { tau, selected })
}

/// Linear response `y = Xβ + ε`, `ε ~ N(0, noise_sd²)`, filtered at level `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionScenario {
    pub n_obs: usize,
    pub beta: Vec<f64>,
    pub noise_sd: f64,
    pub q: f64,
    #[serde(default = "default_plus")]
    pub plus: bool,
}

fn default_plus() -> bool {
    true
}

impl RegressionScenario {
    /// `k` nonnulls of amplitude `amplitude` with alternating signs, spread
    /// evenly over `p` coordinates.
    pub fn spread(p: usize, k: usize, amplitude: f64, n_obs: usize, noise_sd: f64, q: f64) -> Result<Self> {
        if k > p {
            return Err(Error::InvalidInput(format!("{k} nonnulls exceed p = {p}")));
        }
        let mut beta = vec![0.0; p];
        for m in 0..k {
            beta[m * p / k] = if m % 2 == 0 { amplitude } else { -amplitude };
        }
        let s = Self { n_obs, beta, noise_sd, q, plus: true };
        s.validate()?;
        Ok(s)
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// 1-based indices with `β_j ≠ 0`.
    pub fn nonnull_set(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.beta[j] != 0.0).map(|j| j + 1).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_empty() || self.n_obs < 3 {
            return Err(Error::InvalidInput("scenario needs p ≥ 1 and n_obs ≥ 3".into()));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidInput(format!("q must lie in (0,1), got {}", self.q)));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("noise_sd must be positive and beta finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub selected: usize,
    pub false_discoveries: usize,
    pub fdp: f64,
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FdrReport {
    pub n_reps: usize,
    pub q: f64,
    pub plus: bool,
    pub fdr: Estimate,
    pub power: Estimate,
    /// `fdr ≤ q + 3·SE`.
    pub pass: bool,
    pub replicates: Vec<ReplicateResult>,
}

impl FdrReport {
    /// Per-replicate table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,selected,false_discoveries,fdp,power\n");
        for r in &self.replicates {
            writeln!(out, "{},{},{},{},{}", r.replicate, r.selected, r.false_discoveries, r.fdp, r.power)
                .expect("writing to a String cannot fail");
        }
        out
    }
}

fn replicate(scenario: &RegressionScenario, sampler: &dyn KnockoffSampler, rng: &mut Rng) -> Result<Selection> {
    let n = scenario.n_obs;
    let mut x = Vec::with_capacity(n);
    let mut xt = Vec::with_capacity(n);
    for _ in 0..n {
        let row = sampler.sample_x(rng);
        xt.push(sampler.knockoff(&row, rng)?);
        x.push(row);
    }
    let noise = Normal::new(0.0, scenario.noise_sd).expect("validated noise sd");
    let y: Vec<f64> = x
        .iter()
        .map(|r: &Vec<f64>| r.iter().zip(&scenario.beta).map(|(a, b)| a * b).sum::<f64>() + noise.sample(rng))
        .collect();
    let w = compute_w_statistics(&x, &xt, &y)?;
    knockoff_threshold(&w, scenario.q, scenario.plus)
}

/// Runs `n_reps` independent replicates, each on its own substream, and
/// reports mean FDP and power with standard errors.
pub fn fdr_simulation(scenario: &RegressionScenario, sampler: &dyn KnockoffSampler, n_reps: usize, seed: u64) -> Result<FdrReport> {
    scenario.validate()?;
    check_dim(scenario.p(), sampler.p())?;
    if n_reps < 2 {
        return Err(Error::InvalidInput("fdr simulation needs at least 2 replicates".into()));
    }
    let nonnull = scenario.nonnull_set();
    let replicates: Vec<ReplicateResult> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let sel = replicate(scenario, sampler, &mut rng::substream(seed, r as u64))?;
            let false_discoveries = sel.selected.iter().filter(|j| !nonnull.contains(j)).count();
            let true_discoveries = sel.selected.len() - false_discoveries;
            Ok(ReplicateResult {
                replicate: r,
                selected: sel.selected.len(),
                false_discoveries,
                fdp: false_discoveries as f64 / sel.selected.len().max(1) as f64,
                power: if nonnull.is_empty() { 0.0 } else { true_discoveries as f64 / nonnull.len() as f64 },
            })
        })
        .collect::<Result<_>>()?;
    let (fdr, fdr_se) = mean_se(&replicates.iter().map(|r| r.fdp).collect::<Vec<_>>());
    let (power, power_se) = mean_se(&replicates.iter().map(|r| r.power).collect::<Vec<_>>());
    Ok(FdrReport {
        n_reps,
        q: scenario.q,
        plus: scenario.plus,
        fdr: Estimate { value: fdr, se: fdr_se },
        power: Estimate { value: power, se: power_se },
        pass: fdr <= scenario.q + 3.0 * fdr_se,
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{GaussianKnockoffs, GaussianModel};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    /// Brute-force threshold straight from the definition.
    fn oracle(w: &[f64], q: f64, plus: bool) -> f64 {
        let mut best = f64::INFINITY;
        for &t in w.iter().map(|v| v.abs()).collect::<Vec<_>>().iter() {
            if t <= 0.0 {
                continue;
            }
            let neg = w.iter().filter(|&&v| v <= -t).count();
            let pos = w.iter().filter(|&&v| v >= t).count().max(1);
            if (usize::from(plus) + neg) as f64 / pos as f64 <= q && t < best {
                best = t;
            }
        }
        best
    }

    #[test]
    fn threshold_examples() {
        let s = knockoff_threshold(&[-1.0, -2.0, -0.5], 0.2, true).unwrap();
        assert!(s.selected.is_empty() && s.tau.is_infinite());
        // t = 1.5: (1 + #{W ≤ −1.5} = 0) / #{W ≥ 1.5} = 3 → 1/3 ≤ 0.5
        let s = knockoff_threshold(&[3.0, 2.0, -1.0, -0.5, 1.5], 0.5, true).unwrap();
        assert_eq!(s.tau, 1.5);
        assert_eq!(s.selected, vec![1, 2, 5]);
        // t = 0.5 already gives (1 + 1)/3 ≤ 0.8
        let s = knockoff_threshold(&[3.0, 2.0, 1.5, -0.5], 0.8, true).unwrap();
        assert_eq!(s.tau, 0.5);
        assert_eq!(s.selected, vec![1, 2, 3]);
        // plain knockoff is less conservative: 0/3 at t = 1.5, while
        // knockoff+ never gets below 1/3
        let s = knockoff_threshold(&[3.0, 2.0, 1.5, -0.5], 0.3, false).unwrap();
        assert_eq!(s.tau, 1.5);
        assert_eq!(s.selected, vec![1, 2, 3]);
        assert!(knockoff_threshold(&[3.0, 2.0, 1.5, -0.5], 0.3, true).unwrap().selected.is_empty());
        assert!(knockoff_threshold(&[1.0], 1.0, true).is_err());
    }

    #[test]
    fn threshold_matches_oracle() {
        let mut rng = rng::from_seed(3);
        for _ in 0..500 {
            let n = rng.random_range(1..30);
            let w: Vec<f64> = (0..n).map(|_| (rng.random_range(-6i32..10) as f64) * 0.5).collect();
            let q = rng.random_range(0.05..0.95);
            let plus = rng.random_bool(0.5);
            assert_eq!(knockoff_threshold(&w, q, plus).unwrap().tau, oracle(&w, q, plus), "{w:?} {q}");
        }
    }

    fn gaussian(p: usize, rho: f64) -> GaussianKnockoffs {
        let sigma = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
        GaussianKnockoffs::new(GaussianModel::equicorrelated(sigma).unwrap()).unwrap()
    }

    #[test]
    fn w_is_antisymmetric_and_rejects_constant_columns() {
        let g = gaussian(4, 0.3);
        let m = g.sample_joint(100, 1).unwrap();
        let (x, xt) = (m.x_block(), m.xt_block());
        let y: Vec<f64> = x.iter().map(|r| r[0] + r[1]).collect();
        let w = compute_w_statistics(&x, &xt, &y).unwrap();
        // swap column 3 with its knockoff
        let (mut xs, mut xts) = (x.clone(), xt.clone());
        for (a, b) in xs.iter_mut().zip(xts.iter_mut()) {
            std::mem::swap(&mut a[2], &mut b[2]);
        }
        let ws = compute_w_statistics(&xs, &xts, &y).unwrap();
        for j in 0..4 {
            let want = if j == 2 { -w[j] } else { w[j] };
            assert_eq!(ws[j], want);
        }
        let mut xc = x.clone();
        xc.iter_mut().for_each(|r| r[1] = 2.0);
        assert_eq!(compute_w_statistics(&xc, &xt, &y), Err(Error::DegenerateColumn(2)));
        let mut xtc = xt.clone();
        xtc.iter_mut().for_each(|r| r[0] = -1.0);
        assert_eq!(compute_w_statistics(&x, &xtc, &y), Err(Error::DegenerateColumn(5)));
    }

    #[test]
    fn null_w_signs_balance_and_signal_is_positive() {
        let g = gaussian(10, 0.3);
        let mut positive = 0usize;
        let mut total = 0usize;
        let mut signal_positive = 0;
        let noise = Normal::new(0.0, 1.0).unwrap();
        for r in 0..200u64 {
            let m = g.sample_joint(200, r).unwrap();
            let (x, xt) = (m.x_block(), m.xt_block());
            let mut rng = rng::from_seed(1000 + r);
            let y: Vec<f64> = (0..200).map(|_| noise.sample(&mut rng)).collect();
            let w = compute_w_statistics(&x, &xt, &y).unwrap();
            positive += w.iter().filter(|&&v| v > 0.0).count();
            total += w.len();
            let y: Vec<f64> = x.iter().map(|row| 2.0 * row[0] + noise.sample(&mut rng)).collect();
            signal_positive += usize::from(compute_w_statistics(&x, &xt, &y).unwrap()[0] > 0.0);
        }
        // W_j within a replicate are dependent; 4·SE uses the binomial SE
        // inflated by sqrt(p) as a conservative bound
        let frac = positive as f64 / total as f64;
        let se = (0.25 / total as f64).sqrt() * (10f64).sqrt();
        assert!((frac - 0.5).abs() <= 4.0 * se, "{frac}");
        assert!(signal_positive >= 190, "{signal_positive}");
    }

    #[test]
    fn global_null_and_small_scenario() {
        let g = gaussian(20, 0.3);
        let null = RegressionScenario { n_obs: 150, beta: vec![0.0; 20], noise_sd: 1.0, q: 0.2, plus: true };
        let rep = fdr_simulation(&null, &g, 200, 5).unwrap();
        assert_eq!(rep.power.value, 0.0);
        assert!(rep.pass, "{:?}", rep.fdr);
        let s = RegressionScenario::spread(20, 5, 0.5, 150, 1.0, 0.2).unwrap();
        assert_eq!(s.nonnull_set(), vec![1, 5, 9, 13, 17]);
        let rep = fdr_simulation(&s, &g, 100, 6).unwrap();
        assert!(rep.pass && rep.power.value > 0.3, "{:?} {:?}", rep.fdr, rep.power);
        assert_eq!(rep, fdr_simulation(&s, &g, 100, 6).unwrap());
        assert!(rep.to_csv().lines().count() == 101);
        assert!(RegressionScenario::spread(3, 4, 1.0, 10, 1.0, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn threshold_commutes_with_permutations(
            w in prop::collection::vec(-5i32..6, 1..25),
            q in 0.05f64..0.95,
            plus: bool,
            seed: u64,
        ) {
            let w: Vec<f64> = w.into_iter().map(|v| v as f64 * 0.7).collect();
            let mut perm: Vec<usize> = (0..w.len()).collect();
            perm.shuffle(&mut rng::from_seed(seed));
            let wp: Vec<f64> = perm.iter().map(|&k| w[k]).collect();
            let a = knockoff_threshold(&w, q, plus).unwrap();
            let b = knockoff_threshold(&wp, q, plus).unwrap();
            prop_assert_eq!(a.tau, b.tau);
            let mut mapped: Vec<usize> = b.selected.iter().map(|&j| perm[j - 1] + 1).collect();
            mapped.sort();
            prop_assert_eq!(mapped, a.selected);
        }
    }
}
