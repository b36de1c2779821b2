//! Archimedean generators and their frailty (Laplace-transform) laws.

use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Serializable description of a shipped generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Clayton { theta: f64 },
    Gumbel { theta: f64 },
    Frank { theta: f64 },
    Independence,
}

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Clayton(f64),
    Gumbel(f64),
    Frank(f64),
    Independence,
    Custom { name: String, psi: Scalar, psi_inv: Scalar },
}

/// A continuous, strictly decreasing `ψ: [0,∞) → (0,1]` with `ψ(0) = 1`,
/// together with its inverse and, when known, the law of a positive
/// frailty `V` with `E[e^{-tV}] = ψ(t)`.
#[derive(Clone)]
pub struct ArchimedeanGenerator {
    kind: Kind,
}

impl fmt::Debug for ArchimedeanGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ArchimedeanGenerator({})", self.name())
    }
}

impl PartialEq for ArchimedeanGenerator {
    /// Shipped generators compare by family and parameter; custom ones by
    /// identity of their closures.
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (Kind::Clayton(a), Kind::Clayton(b))
            | (Kind::Gumbel(a), Kind::Gumbel(b))
            | (Kind::Frank(a), Kind::Frank(b)) => a == b,
            (Kind::Independence, Kind::Independence) => true,
            (Kind::Custom { psi: a, .. }, Kind::Custom { psi: b, .. }) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// Law of the frailty variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Frailty {
    /// Gamma(shape, rate).
    Gamma { shape: f64, rate: f64 },
    /// Positive stable with `E[e^{-tV}] = exp(-t^alpha)`, `0 < alpha ≤ 1`.
    PositiveStable { alpha: f64 },
    /// Logarithmic series: `P(V = k) = a^k / (k·(-ln(1-a)))`, k ≥ 1.
    Logarithmic { a: f64 },
    /// V ≡ 1.
    Degenerate,
}

impl Frailty {
    pub fn laplace(&self, t: f64) -> f64 {
        match *self {
            Frailty::Gamma { shape, rate } => (1.0 + t / rate).powf(-shape),
            Frailty::PositiveStable { alpha } => (-t.powf(alpha)).exp(),
            Frailty::Logarithmic { a } => (-(-a * (-t).exp()).ln_1p()) / (-(-a).ln_1p()),
            Frailty::Degenerate => (-t).exp(),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            Frailty::Gamma { shape, rate } => {
                Gamma::new(shape, 1.0 / rate).expect("validated parameters").sample(rng)
            }
            Frailty::PositiveStable { alpha } => sample_positive_stable(alpha, rng),
            Frailty::Logarithmic { a } => sample_logarithmic(a, rng) as f64,
            Frailty::Degenerate => 1.0,
        }
    }

    /// Lebesgue density, where the law has one in closed form.
    pub fn density(&self, v: f64) -> Option<f64> {
        match *self {
            Frailty::Gamma { shape, rate } => Some(if v <= 0.0 {
                0.0
            } else {
                (shape * rate.ln() + (shape - 1.0) * v.ln()
                    - rate * v
                    - crate::special::ln_gamma(shape))
                .exp()
            }),
            _ => None,
        }
    }
}

// Kanter's representation.
fn sample_positive_stable(alpha: f64, rng: &mut Rng) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let u = std::f64::consts::PI * rng.random::<f64>();
    let e: f64 = Exp1.sample(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / e).powf((1.0 - alpha) / alpha);
    a * b
}

// Kemp's "LK" algorithm for the logarithmic series law.
fn sample_logarithmic(a: f64, rng: &mut Rng) -> u64 {
    let h = (-a).ln_1p();
    let v: f64 = rng.random();
    if v >= a {
        return 1;
    }
    let q = -(h * rng.random::<f64>()).exp_m1();
    if v <= q * q {
        let k = 1.0 + (v.ln() / q.ln()).floor();
        return if k.is_finite() && k >= 1.0 { k as u64 } else { 1 };
    }
    if v <= q {
        2
    } else {
        1
    }
}

fn check_theta(ok: bool, family: &str, theta: f64) -> Result<()> {
    if ok && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{family} generator: invalid theta {theta}")))
    }
}

impl ArchimedeanGenerator {
    /// ψ(t) = (1+t)^{-1/θ}, θ > 0.
    pub fn clayton(theta: f64) -> Result<Self> {
        check_theta(theta > 0.0, "clayton", theta)?;
        Ok(Self { kind: Kind::Clayton(theta) })
    }

    /// ψ(t) = exp(-t^{1/θ}), θ ≥ 1.
    pub fn gumbel(theta: f64) -> Result<Self> {
        check_theta(theta >= 1.0, "gumbel", theta)?;
        Ok(Self { kind: Kind::Gumbel(theta) })
    }

    /// ψ(t) = -ln(1 - (1-e^{-θ}) e^{-t}) / θ, θ > 0.
    pub fn frank(theta: f64) -> Result<Self> {
        check_theta(theta > 0.0, "frank", theta)?;
        Ok(Self { kind: Kind::Frank(theta) })
    }

    /// ψ(t) = e^{-t}.
    pub fn independence() -> Self {
        Self { kind: Kind::Independence }
    }

    /// A user-supplied generator. `psi` must map `[0,∞)` into `(0,1]`, with
    /// `ψ(0) = 1`, strictly decreasing, and `psi_inv` must invert it; both
    /// are spot-checked on a grid and rejected otherwise.
    pub fn custom<F, G>(name: &str, psi: F, psi_inv: G) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let g = Self {
            kind: Kind::Custom { name: name.to_string(), psi: Arc::new(psi), psi_inv: Arc::new(psi_inv) },
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_spec(spec: &GeneratorSpec) -> Result<Self> {
        match *spec {
            GeneratorSpec::Clayton { theta } => Self::clayton(theta),
            GeneratorSpec::Gumbel { theta } => Self::gumbel(theta),
            GeneratorSpec::Frank { theta } => Self::frank(theta),
            GeneratorSpec::Independence => Ok(Self::independence()),
        }
    }

    pub fn spec(&self) -> Option<GeneratorSpec> {
        Some(match self.kind {
            Kind::Clayton(theta) => GeneratorSpec::Clayton { theta },
            Kind::Gumbel(theta) => GeneratorSpec::Gumbel { theta },
            Kind::Frank(theta) => GeneratorSpec::Frank { theta },
            Kind::Independence => GeneratorSpec::Independence,
            Kind::Custom { .. } => return None,
        })
    }

    pub fn name(&self) -> String {
        match &self.kind {
            Kind::Clayton(t) => format!("clayton(theta={t})"),
            Kind::Gumbel(t) => format!("gumbel(theta={t})"),
            Kind::Frank(t) => format!("frank(theta={t})"),
            Kind::Independence => "independence".into(),
            Kind::Custom { name, .. } => name.clone(),
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self.kind {
            Kind::Clayton(t) | Kind::Gumbel(t) | Kind::Frank(t) => Some(t),
            _ => None,
        }
    }

    pub(crate) fn clayton_theta(&self) -> Option<f64> {
        match self.kind {
            Kind::Clayton(t) => Some(t),
            _ => None,
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Clayton(th) => (-t.ln_1p() / th).exp(),
            Kind::Gumbel(th) => (-t.powf(1.0 / th)).exp(),
            Kind::Frank(th) => {
                let c = -(-th).exp_m1();
                -(-c * (-t).exp()).ln_1p() / th
            }
            Kind::Independence => (-t).exp(),
            Kind::Custom { psi, .. } => psi(t),
        }
    }

    pub fn psi_inv(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Clayton(th) => (-th * u.ln()).exp_m1(),
            Kind::Gumbel(th) => (-u.ln()).powf(*th),
            Kind::Frank(th) => -((-th * u).exp_m1() / (-th).exp_m1()).ln(),
            Kind::Independence => -u.ln(),
            Kind::Custom { psi_inv, .. } => psi_inv(u),
        }
    }

    /// First derivative ψ'(t).
    pub fn psi_prime(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Clayton(th) => -(1.0 + t).powf(-1.0 / th - 1.0) / th,
            Kind::Gumbel(th) => -t.powf(1.0 / th - 1.0) * self.psi(t) / th,
            Kind::Frank(th) => {
                let ce = -(-th).exp_m1() * (-t).exp();
                -ce / ((1.0 - ce) * th)
            }
            Kind::Independence => -(-t).exp(),
            Kind::Custom { psi, .. } => {
                let h = 1e-5 * t.max(1e-3);
                let lo = (t - h).max(0.0);
                (psi(t + h) - psi(lo)) / (t + h - lo)
            }
        }
    }

    /// Sign of ψ^{(k)} on (0,∞), when known in closed form. All shipped
    /// generators except Gumbel are Laplace transforms with elementary
    /// derivatives of alternating sign.
    pub fn derivative_sign(&self, k: usize) -> Option<f64> {
        match self.kind {
            Kind::Clayton(_) | Kind::Frank(_) | Kind::Independence => {
                Some(if k % 2 == 0 { 1.0 } else { -1.0 })
            }
            _ => None,
        }
    }

    pub fn frailty(&self) -> Option<Frailty> {
        match self.kind {
            Kind::Clayton(th) => Some(Frailty::Gamma { shape: 1.0 / th, rate: 1.0 }),
            Kind::Gumbel(th) => Some(Frailty::PositiveStable { alpha: 1.0 / th }),
            Kind::Frank(th) => Some(Frailty::Logarithmic { a: -(-th).exp_m1() }),
            Kind::Independence => Some(Frailty::Degenerate),
            Kind::Custom { .. } => None,
        }
    }

    /// Grid checks: ψ(0) = 1, values in (0,1], strictly decreasing, and
    /// ψ(ψ^{-1}(u)) = u to 1e-12.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("generator {}: {msg}", self.name())));
        if (self.psi(0.0) - 1.0).abs() > 1e-12 {
            return bad(format!("psi(0) = {} != 1", self.psi(0.0)));
        }
        // Walk a log grid until ψ is numerically negligible; underflow past
        // that point is not a defect of the generator.
        let mut prev = 1.0;
        for k in 0..=240 {
            let t = 1e-4 * 10f64.powf(k as f64 / 30.0);
            let v = self.psi(t);
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("psi({t}) = {v} outside (0,1]"));
            }
            if v >= prev && prev < 1.0 {
                return bad(format!("psi not strictly decreasing near t = {t}"));
            }
            if v < 1e-12 {
                break;
            }
            prev = v;
        }
        for k in 1..1000 {
            let u = k as f64 / 1000.0;
            let back = self.psi(self.psi_inv(u));
            if !((back - u).abs() <= 1e-12) {
                return bad(format!("psi(psi_inv({u})) = {back}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn shipped() -> Vec<ArchimedeanGenerator> {
        vec![
            ArchimedeanGenerator::clayton(2.0).unwrap(),
            ArchimedeanGenerator::clayton(1e-3).unwrap(),
            ArchimedeanGenerator::gumbel(1.5).unwrap(),
            ArchimedeanGenerator::gumbel(1.0).unwrap(),
            ArchimedeanGenerator::frank(5.0).unwrap(),
            ArchimedeanGenerator::independence(),
        ]
    }

    #[test]
    fn shipped_generators_validate() {
        for g in shipped() {
            g.validate().unwrap();
            assert_eq!(ArchimedeanGenerator::from_spec(&g.spec().unwrap()).unwrap(), g);
        }
        assert!(ArchimedeanGenerator::clayton(0.0).is_err());
        assert!(ArchimedeanGenerator::gumbel(0.5).is_err());
    }

    #[test]
    fn piecewise_linear_psi_is_rejected() {
        let r = ArchimedeanGenerator::custom("hat", |t: f64| (1.0 - t).max(0.0), |u: f64| 1.0 - u);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        let ok = ArchimedeanGenerator::custom("exp2", |t: f64| (-2.0 * t).exp(), |u: f64| -u.ln() / 2.0);
        assert!(ok.is_ok());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for g in shipped() {
            for &t in &[0.05, 0.7, 3.0] {
                let h = 1e-6;
                let fd = (g.psi(t + h) - g.psi(t - h)) / (2.0 * h);
                assert!((g.psi_prime(t) - fd).abs() < 1e-7 * (1.0 + fd.abs()), "{g:?} {t}");
            }
        }
    }

    #[test]
    fn frailty_laplace_matches_psi() {
        for g in shipped() {
            let fr = g.frailty().unwrap();
            for &t in &[0.1, 1.0, 4.0] {
                assert!((fr.laplace(t) - g.psi(t)).abs() < 1e-12, "{g:?}");
            }
        }
    }

    #[test]
    fn frailty_monte_carlo_laplace_within_4se() {
        let n = 200_000;
        for (i, g) in shipped().into_iter().enumerate() {
            let fr = g.frailty().unwrap();
            let mut rng = from_seed(100 + i as u64);
            let vs: Vec<f64> = (0..n).map(|_| fr.sample(&mut rng)).collect();
            for &t in &[0.25, 1.0, 3.0] {
                let w: Vec<f64> = vs.iter().map(|v| (-t * v).exp()).collect();
                let (m, se) = crate::stats::mean_se(&w);
                let se = se.max(1e-12);
                assert!((m - g.psi(t)).abs() <= 4.0 * se, "{g:?} t={t}: {m} vs {}", g.psi(t));
            }
        }
    }
}
