//! Sign conditions on generators: complete monotonicity up to a given
//! order, the nested-generator condition, and the density condition of
//! the smoothness theorem.

use super::{ArchimedeanGenerator, CopulaModel};
use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Finite differences at two step sizes disagreed in sign.
    Inconclusive,
}

impl CheckStatus {
    fn combine(self, other: CheckStatus) -> CheckStatus {
        use CheckStatus::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }

    pub fn passed(self) -> bool {
        self == CheckStatus::Pass
    }
}

/// Outcome for one derivative order over the whole grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderRecord {
    pub k: usize,
    pub status: CheckStatus,
    pub method: &'static str,
    /// Grid point with the smallest sign-adjusted value.
    pub worst_t: Option<f64>,
    /// `required_sign · f^{(k)}(worst_t)`; negative beyond noise means failure.
    pub worst_value: Option<f64>,
    /// Points where the estimate was indistinguishable from zero.
    pub zero_within_noise: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratorReport {
    pub generator: String,
    pub order: usize,
    pub t_grid: Vec<f64>,
    pub orders: Vec<OrderRecord>,
    pub status: CheckStatus,
}

/// Parameter-level outcome for a Clayton generator nested in a Clayton.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterRestriction {
    pub outer_theta: f64,
    pub inner_theta: f64,
    /// `inner_theta ≥ outer_theta`.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NestedReport {
    pub outer: String,
    pub inner: GeneratorReport,
    /// Signs of `(ψ^{-1}∘ψ_i)^{(k)}`.
    pub composition: Vec<OrderRecord>,
    pub parameter_restriction: Option<ParameterRestriction>,
    pub status: CheckStatus,
}

/// 41 log-spaced points on `[0.05, 20]`.
pub fn default_t_grid() -> Vec<f64> {
    let (lo, hi) = (0.05f64.ln(), 20f64.ln());
    (0..41).map(|i| (lo + (hi - lo) * i as f64 / 40.0).exp()).collect()
}

fn binomial(k: usize, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// Central difference of order `k` with step `h`, and a bound on its
/// floating-point noise.
fn central_difference(f: &dyn Fn(f64) -> f64, t: f64, k: usize, h: f64) -> (f64, f64) {
    let mut acc = 0.0;
    let mut mag = 0.0;
    for j in 0..=k {
        let c = binomial(k, j);
        let v = f(t + (k as f64 / 2.0 - j as f64) * h);
        acc += if j % 2 == 0 { c * v } else { -c * v };
        mag += c * v.abs();
    }
    let hk = h.powi(k as i32);
    (acc / hk, 8.0 * f64::EPSILON * mag / hk)
}

enum Estimate {
    /// Estimate of the derivative at `at` (which may sit right of the
    /// requested point when a wider stencil was needed).
    Value { at: f64, value: f64, noise: f64 },
    Inconsistent,
}

/// k-th derivative near `t` by Richardson-extrapolated central differences.
///
/// Steps `h_j = 2^j · t · min(1/2, 1/k)` are tried for `j = -8..8`; the
/// stencil must stay inside `(0, ∞)`, so for `j > 0` its centre moves to
/// `t/2 + k h_j / 2`. The step with the smallest noise-to-signal ratio wins.
/// Two step sizes that resolve opposite signs make the estimate
/// inconsistent.
fn derivative(f: &dyn Fn(f64) -> f64, t: f64, k: usize) -> Estimate {
    let h0 = t * (1.0 / k as f64).min(0.5);
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for j in -8..8 {
        let h = h0 * f64::powi(2.0, j);
        let at = if j <= 0 { t } else { 0.5 * t + 0.5 * k as f64 * h };
        let (d1, r1) = central_difference(f, at, k, h);
        let (d2, r2) = central_difference(f, at, k, h / 2.0);
        if d1.signum() != d2.signum() && d1.abs() > r1 && d2.abs() > r2 {
            return Estimate::Inconsistent;
        }
        let value = (4.0 * d2 - d1) / 3.0;
        let noise = r2 + (d2 - d1).abs();
        let ratio = noise / value.abs().max(f64::MIN_POSITIVE);
        if best.is_none_or(|b| ratio < b.0) {
            best = Some((ratio, at, value, noise));
        }
    }
    let (_, at, value, noise) = best.expect("at least one step");
    Estimate::Value { at, value, noise }
}

/// Checks `sign · f^{(k)}(t) ≥ 0` over the grid.
fn numeric_sign_check(f: &dyn Fn(f64) -> f64, k: usize, sign: f64, t_grid: &[f64]) -> OrderRecord {
    let mut status = CheckStatus::Pass;
    let mut worst: Option<(f64, f64)> = None;
    let mut zeros = 0;
    for &t in t_grid {
        match derivative(f, t, k) {
            Estimate::Inconsistent => status = status.combine(CheckStatus::Inconclusive),
            Estimate::Value { at, value, noise } => {
                let v = sign * value;
                if v.abs() <= noise {
                    zeros += 1;
                    continue;
                }
                if v < 0.0 {
                    status = CheckStatus::Fail;
                }
                if worst.is_none_or(|(_, w)| v < w) {
                    worst = Some((at, v));
                }
            }
        }
    }
    OrderRecord {
        k,
        status,
        method: "finite-difference",
        worst_t: worst.map(|w| w.0),
        worst_value: worst.map(|w| w.1),
        zero_within_noise: zeros,
    }
}

fn validate_grid(order: usize, t_grid: &[f64]) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidInput("order must be ≥ 1".into()));
    }
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput("t grid must be nonempty and positive".into()));
    }
    Ok(())
}

fn alternating(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `(−1)^k ψ^{(k)} ≥ 0` for `k = 1..=order` on `t_grid`. Closed-form signs
/// are used when the generator provides them.
pub fn check_generator_conditions(
    psi: &ArchimedeanGenerator,
    order: usize,
    t_grid: &[f64],
) -> Result<GeneratorReport> {
    validate_grid(order, t_grid)?;
    let f = |t: f64| psi.psi(t);
    let orders: Vec<OrderRecord> = (1..=order)
        .map(|k| match psi.derivative_sign(k) {
            Some(s) => OrderRecord {
                k,
                status: if s == alternating(k) { CheckStatus::Pass } else { CheckStatus::Fail },
                method: "closed-form",
                worst_t: None,
                worst_value: None,
                zero_within_noise: 0,
            },
            None => numeric_sign_check(&f, k, alternating(k), t_grid),
        })
        .collect();
    let status = orders.iter().fold(CheckStatus::Pass, |s, r| s.combine(r.status));
    Ok(GeneratorReport { generator: psi.name(), order, t_grid: t_grid.to_vec(), orders, status })
}

/// Both conditions for an inner generator `ψ_i` under an outer `ψ`:
/// `(−1)^k ψ_i^{(k)} ≥ 0` and `(−1)^{k−1} (ψ^{-1}∘ψ_i)^{(k)} ≥ 0` for
/// `k ≤ order`.
pub fn check_nested_condition(
    psi_outer: &ArchimedeanGenerator,
    psi_inner: &ArchimedeanGenerator,
    order: usize,
    t_grid: &[f64],
) -> Result<NestedReport> {
    let inner = check_generator_conditions(psi_inner, order, t_grid)?;
    let g = |t: f64| psi_outer.psi_inv(psi_inner.psi(t));
    let composition: Vec<OrderRecord> =
        (1..=order).map(|k| numeric_sign_check(&g, k, -alternating(k), t_grid)).collect();
    let status = composition.iter().fold(inner.status, |s, r| s.combine(r.status));
    let parameter_restriction = match (psi_outer.clayton_theta(), psi_inner.clayton_theta()) {
        (Some(outer_theta), Some(inner_theta)) => Some(ParameterRestriction {
            outer_theta,
            inner_theta,
            holds: inner_theta >= outer_theta,
        }),
        _ => None,
    };
    Ok(NestedReport { outer: psi_outer.name(), inner, composition, parameter_restriction, status })
}

/// Evaluation of the density condition of the smoothness theorem:
/// `∂^p/∂u_{2p}…∂u_{p+1} φ[D(u)] Π ∂_1 D_i(u_i, u_{p+i}) ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothnessReport {
    /// Whether closed-form densities/partials were available for the
    /// sufficient condition to be checked at all.
    pub covered: bool,
    pub reason: Option<String>,
    pub resolution: usize,
    pub min_value: f64,
    pub witness: Vec<f64>,
    pub pass: bool,
}

/// Checks the density condition at the cell centres of a regular grid
/// (`p ≤ 3`). The condition is sufficient, not necessary: a model may fail
/// here yet pass the rectangle-volume check.
pub fn smoothness_condition_check(model: &CopulaModel, resolution: usize) -> Result<SmoothnessReport> {
    let p = model.p();
    if p > 3 {
        return Err(Error::InvalidInput(format!("density condition check supports p ≤ 3, got {p}")));
    }
    let m = 2 * p;
    let npts = resolution
        .checked_pow(m as u32)
        .filter(|&n| n > 0 && n <= 1_000_000)
        .ok_or_else(|| Error::ResourceLimit(format!("resolution^{m} outside [1, 10^6]")))?;
    let uncovered = |reason: &str| SmoothnessReport {
        covered: false,
        reason: Some(reason.into()),
        resolution,
        min_value: f64::NAN,
        witness: vec![],
        pass: false,
    };
    let mid = vec![0.5; m];
    let w: Vec<f64> = (0..p).map(|i| model.d()[i].eval(&[mid[i], mid[p + i]])).collect();
    if model.c().density(&w).is_none() {
        return Ok(uncovered("C has no closed-form density"));
    }
    if model.d().iter().any(|d| d.partial_first(0.5, 0.5).is_none()) {
        return Ok(uncovered("some D_i is not differentiable in closed form"));
    }
    let g = |u: &[f64]| -> f64 {
        let w: Vec<f64> = (0..p).map(|i| model.d()[i].eval(&[u[i], u[p + i]])).collect();
        let jac: f64 =
            (0..p).map(|i| model.d()[i].partial_first(u[i], u[p + i]).unwrap_or(f64::NAN)).product();
        model.c().density(&w).unwrap_or(f64::NAN) * jac
    };
    let h = if p == 3 { 1e-2 } else { 1e-3 } / resolution as f64;
    let mut min_value = f64::INFINITY;
    let mut scale: f64 = 0.0;
    let mut witness = vec![];
    let mut u = vec![0.0; m];
    for idx in 0..npts {
        let mut rest = idx;
        for slot in u.iter_mut() {
            *slot = ((rest % resolution) as f64 + 0.5) / resolution as f64;
            rest /= resolution;
        }
        let mut acc = 0.0;
        let mut v = u.clone();
        for bits in 0..1usize << p {
            let mut sign = 1.0;
            for i in 0..p {
                if bits >> i & 1 == 1 {
                    v[p + i] = u[p + i] + h;
                } else {
                    v[p + i] = u[p + i] - h;
                    sign = -sign;
                }
            }
            let gv = g(&v);
            scale = scale.max(gv.abs());
            acc += sign * gv;
        }
        let val = acc / (2.0 * h).powi(p as i32);
        if !val.is_finite() {
            return Ok(uncovered("non-finite density evaluation"));
        }
        if val < min_value {
            min_value = val;
            witness = u.clone();
        }
    }
    let tol = 1e-6 * (1.0 + scale);
    Ok(SmoothnessReport {
        covered: true,
        reason: None,
        resolution,
        min_value,
        witness,
        pass: min_value >= -tol,
    })
}
