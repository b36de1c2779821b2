//! Descriptive statistics used by the diagnostics and simulations.

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Sample covariance (divisor n - 1) and the standard error of the mean
/// of the centered products.
pub fn covariance_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let (m, se) = mean_se(&prods);
    (m * n / (n - 1.0), se)
}

pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    covariance_se(x, y).0
}

/// Delete-one jackknife of `cov(a, b) - cov(a, c)`. Returns the full-sample
/// difference and the jackknife standard error, computed in O(n).
pub fn jackknife_cov_difference(a: &[f64], b: &[f64], c: &[f64]) -> (f64, f64) {
    let n = a.len();
    let nf = n as f64;
    let center = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| x - m).collect::<Vec<_>>()
    };
    let (a, b, c) = (center(a), center(b), center(c));
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let sc: f64 = c.iter().sum();
    let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let sac: f64 = a.iter().zip(&c).map(|(x, y)| x * y).sum();
    let full = (sab - sa * sb / nf) / (nf - 1.0) - (sac - sa * sc / nf) / (nf - 1.0);
    let m = nf - 1.0;
    let loo: Vec<f64> = (0..n)
        .map(|k| {
            let (ra, rb, rc) = (sa - a[k], sb - b[k], sc - c[k]);
            let cab = (sab - a[k] * b[k] - ra * rb / m) / (m - 1.0);
            let cac = (sac - a[k] * c[k] - ra * rc / m) / (m - 1.0);
            cab - cac
        })
        .collect();
    let lm = mean(&loo);
    let ss: f64 = loo.iter().map(|v| (v - lm) * (v - lm)).sum();
    (full, ((nf - 1.0) / nf * ss).sqrt())
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Kendall's tau (tau-a) in O(n log n) by counting inversions (Knight).
/// Intended for continuous data without ties.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(y[i].total_cmp(&y[j])));
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let inversions = merge_count(&mut ys, &mut buf);
    let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
    1.0 - 2.0 * inversions as f64 / pairs
}

fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn chi_square_survival(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

/// Pearson goodness-of-fit of observed counts against expected
/// probabilities. Adjacent cells are pooled left to right until each
/// pooled expected count reaches 5. Returns (statistic, dof, p-value).
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> (f64, usize, f64) {
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        o += c as f64;
        e += p * nf;
        if e >= 5.0 {
            pooled.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => pooled.push((o, e)),
        }
    }
    let stat: f64 = pooled
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = pooled.len().saturating_sub(1);
    (stat, dof, chi_square_survival(stat, dof))
}
