//! Special functions: normal distribution helpers, the bivariate normal
//! CDF, log-gamma wrappers and the Kolmogorov distribution.

use libm::erfc;
use statrs::function::erf::erfc_inv;
pub use statrs::function::gamma::{gamma_ur, ln_gamma};
use std::f64::consts::{PI, SQRT_2};

const TWO_PI: f64 = 2.0 * PI;

pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / SQRT_2)
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / TWO_PI.sqrt()
}

pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        // erfc_inv alone is good to ~1e-9; two Halley steps on the accurate
        // erfc bring it to machine precision.
        let mut x = -SQRT_2 * erfc_inv(2.0 * p);
        for _ in 0..2 {
            let e = (normal_cdf(x) - p) / normal_pdf(x);
            if !e.is_finite() {
                break;
            }
            x -= e / (1.0 + 0.5 * x * e);
        }
        x
    }
}

pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

// Gauss-Legendre nodes (negative half) and weights for 6, 12 and 20 points.
#[allow(clippy::excessive_precision)]
const GL_W: [&[f64]; 3] = [
    &[0.1713244923791705, 0.3607615730481384, 0.4679139345726904],
    &[
        0.04717533638651177,
        0.1069393259953183,
        0.1600783285433464,
        0.2031674267230659,
        0.2334925365383547,
        0.2491470458134029,
    ],
    &[
        0.01761400713915212,
        0.04060142980038694,
        0.06267204833410906,
        0.08327674157670475,
        0.1019301198172404,
        0.1181945319615184,
        0.1316886384491766,
        0.1420961093183821,
        0.1491729864726037,
        0.1527533871307259,
    ],
];
#[allow(clippy::excessive_precision)]
const GL_X: [&[f64]; 3] = [
    &[-0.9324695142031522, -0.6612093864662647, -0.2386191860831970],
    &[
        -0.9815606342467191,
        -0.9041172563704750,
        -0.7699026741943050,
        -0.5873179542866171,
        -0.3678314989981802,
        -0.1252334085114692,
    ],
    &[
        -0.9931285991850949,
        -0.9639719272779138,
        -0.9122344282513259,
        -0.8391169718222188,
        -0.7463319064601508,
        -0.6360536807265150,
        -0.5108670019508271,
        -0.3737060887154196,
        -0.2277858511416451,
        -0.07652652113349733,
    ],
];

/// Upper orthant probability P(X > dh, Y > dk) for a standard bivariate
/// normal with correlation `r` (Genz's BVNU algorithm, ~1e-15 accuracy).
fn bvn_upper(dh: f64, dk: f64, r: f64) -> f64 {
    if dh == f64::INFINITY || dk == f64::INFINITY {
        return 0.0;
    }
    if dh == f64::NEG_INFINITY {
        return if dk == f64::NEG_INFINITY { 1.0 } else { normal_cdf(-dk) };
    }
    if dk == f64::NEG_INFINITY {
        return normal_cdf(-dh);
    }
    let ng = if r.abs() < 0.3 {
        0
    } else if r.abs() < 0.75 {
        1
    } else {
        2
    };
    let (w, x) = (GL_W[ng], GL_X[ng]);
    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for i in 0..w.len() {
            let sn = (asr * (x[i] + 1.0) / 2.0).sin();
            bvn += w[i] * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            let sn = (asr * (-x[i] + 1.0) / 2.0).sin();
            bvn += w[i] * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        return bvn * asr / (2.0 * TWO_PI) + normal_cdf(-h) * normal_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(bs / as_ + hk) / 2.0).exp()
            * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * TWO_PI.sqrt()
                * normal_cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for i in 0..w.len() {
            for xs in [(a * (x[i] + 1.0)).powi(2), (a * (-x[i] + 1.0)).powi(2)] {
                let rs = (1.0 - xs).sqrt();
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w[i]
                        * asr.exp()
                        * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn + normal_cdf(-h.max(k))
    } else {
        bvn = -bvn;
        if k > h {
            if h < 0.0 {
                bvn += normal_cdf(k) - normal_cdf(h);
            } else {
                bvn += normal_cdf(-h) - normal_cdf(-k);
            }
        }
        bvn
    }
}

/// Standard bivariate normal CDF P(X <= a, Y <= b) with correlation `r`.
/// Symmetric in (a, b) bit-for-bit.
pub fn bivariate_normal_cdf(a: f64, b: f64, r: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    bvn_upper(-lo, -hi, r).clamp(0.0, 1.0)
}

/// Survival function of the Kolmogorov distribution, P(K > lambda).
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-(m * m) * PI * PI / (8.0 * lambda * lambda)).exp();
        }
        1.0 - cdf * TWO_PI.sqrt() / lambda
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// One-sample KS critical value at level `alpha` (Stephens' small-sample
/// correction of the asymptotic Kolmogorov quantile).
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let sn = (n as f64).sqrt();
    lambda / (sn + 0.12 + 0.11 / sn)
}

/// p-value of a one-sample KS statistic `d` with `n` observations.
pub fn ks_p_value(n: usize, d: f64) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    // Plackett: dΦ2/dr equals the bivariate density, so integrate it in r.
    fn bvn_by_quadrature(a: f64, b: f64, r: f64) -> f64 {
        let dens = |t: f64| {
            let s = 1.0 - t * t;
            (-(a * a - 2.0 * t * a * b + b * b) / (2.0 * s)).exp() / (TWO_PI * s.sqrt())
        };
        normal_cdf(a) * normal_cdf(b) + integrate(dens, 0.0, r, 1e-14).unwrap()
    }

    #[test]
    fn bivariate_normal_matches_quadrature() {
        for &r in &[-0.95, -0.6, -0.2, 0.0, 0.1, 0.5, 0.8, 0.95, 0.99] {
            for &(a, b) in &[(0.0, 0.0), (-1.0, 0.5), (1.3, -0.7), (2.0, 2.5), (-2.5, -1.0)] {
                let got = bivariate_normal_cdf(a, b, r);
                let want = bvn_by_quadrature(a, b, r);
                assert!((got - want).abs() < 1e-12, "r={r} a={a} b={b}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn bivariate_normal_special_values() {
        assert!((bivariate_normal_cdf(0.0, 0.0, 0.0) - 0.25).abs() < 1e-15);
        // Sheppard: 1/4 + asin(r)/(2 pi)
        let r: f64 = 0.5;
        let want = 0.25 + r.asin() / TWO_PI;
        assert!((bivariate_normal_cdf(0.0, 0.0, r) - want).abs() < 1e-15);
        assert_eq!(bivariate_normal_cdf(f64::INFINITY, 0.3, 0.4), normal_cdf(0.3));
        assert_eq!(bivariate_normal_cdf(f64::NEG_INFINITY, 0.3, 0.4), 0.0);
        assert_eq!(bivariate_normal_cdf(0.7, -0.2, 0.4), bivariate_normal_cdf(-0.2, 0.7, 0.4));
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-14 * p.max(1e-2) / 1e-2);
        }
    }

    #[test]
    fn ks_critical_value_matches_table() {
        // asymptotic 1% point of the Kolmogorov distribution
        let c = ks_critical_value(1_000_000, 0.01) * 1000.0;
        assert!((c - 1.6276).abs() < 1e-3, "{c}");
        let c5 = ks_critical_value(1_000_000, 0.05) * 1000.0;
        assert!((c5 - 1.3581).abs() < 1e-3, "{c5}");
        assert!((kolmogorov_survival(0.9) - (1.0 - 0.6073)).abs() < 1e-3);
    }
}
