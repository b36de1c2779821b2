//! Serializable model descriptions: a law for `X` together with the
//! knockoff construction used for it.

use crate::copula::{CopulaModel, CopulaModelSpec, FrailtyKnockoffs, PosteriorMethod};
use crate::diagnostics::fixtures::{IndependentCopy, Shifted, Trivial};
use crate::discretization::{DiscretizationLevel, DiscretizedKnockoffs};
use crate::error::{Error, Result};
use crate::gaussian::{assemble_joint, GaussianKnockoffs, GaussianModel};
use crate::linalg::from_rows;
use crate::mixture::MixtureSpec;
use crate::sample::KnockoffSampler;
use crate::symmetrized::SymmetrizedGaussian;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A covariance matrix, given explicitly or by a structured rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovarianceSpec {
    Matrix(Vec<Vec<f64>>),
    Structured(StructuredCovariance),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StructuredCovariance {
    /// `Σ_ij = ρ^{|i−j|}`.
    Ar1 { p: usize, rho: f64 },
    /// Unit diagonal, `ρ` off the diagonal.
    Equicorrelated { p: usize, rho: f64 },
}

impl CovarianceSpec {
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            CovarianceSpec::Matrix(rows) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidInput(format!("covariance must be a nonempty square matrix, got {n} rows")));
                }
                Ok(from_rows(rows))
            }
            CovarianceSpec::Structured(StructuredCovariance::Ar1 { p, rho }) => {
                Ok(DMatrix::from_fn(*p, *p, |i, j| rho.powi((i as i32 - j as i32).abs())))
            }
            CovarianceSpec::Structured(StructuredCovariance::Equicorrelated { p, rho }) => {
                Ok(DMatrix::from_fn(*p, *p, |i, j| if i == j { 1.0 } else { *rho }))
            }
        }
    }
}

/// Rule for the diagonal `D` of the Gaussian construction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiagonalSpec {
    #[default]
    #[serde(with = "equicorrelated_tag")]
    Equicorrelated,
    Explicit(Vec<f64>),
}

mod equicorrelated_tag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("equicorrelated")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "equicorrelated" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("unknown diagonal rule `{s}`")))
        }
    }
}

/// Tagged description of `L(X)` and its knockoff construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// `X ~ N(mean, Σ)` with the joint Gaussian construction.
    #[serde(rename_all = "snake_case")]
    Gaussian {
        sigma: CovarianceSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<Vec<f64>>,
        #[serde(default)]
        d: DiagonalSpec,
    },
    /// Copula model sampled through the shared frailty.
    Archimedean {
        copula: CopulaModelSpec,
        #[serde(default)]
        posterior: PosteriorMethod,
    },
    /// Conditionally independent conjugate mixture; the remaining fields
    /// are those of [`MixtureSpec`].
    ConjugateMixture(MixtureSpec),
    /// `X^(n)` of a base model, with cell-uniform knockoffs.
    Discretized { level: DiscretizationLevel, base: Box<ModelSpec> },
    /// Swap-group average of `N(mean, covariance)` on `R^{2p}`.
    SymmetrizedDensity { mean: Vec<f64>, covariance: Vec<Vec<f64>> },
    /// Fixture: `X̃ = X`.
    Trivial { base: Box<ModelSpec> },
    /// Fixture: `X̃ = X + shift` (not a knockoff).
    Shifted { base: Box<ModelSpec>, shift: f64 },
    /// Fixture: `X̃` an independent copy of `X` (not a knockoff).
    IndependentCopy { base: Box<ModelSpec> },
}

impl ModelSpec {
    /// Parses JSON; an unknown `type` or mixture `family` is reported as
    /// an unsupported model.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown variant") {
                Error::UnsupportedModel(msg)
            } else {
                Error::InvalidInput(msg)
            }
        })
    }

    pub fn build(&self) -> Result<Arc<dyn KnockoffSampler>> {
        Ok(match self {
            ModelSpec::Gaussian { sigma, mean, d } => {
                let sigma = sigma.matrix()?;
                let model = match d {
                    DiagonalSpec::Equicorrelated => GaussianModel::equicorrelated(sigma)?,
                    DiagonalSpec::Explicit(d) => assemble_joint(sigma, d.clone())?,
                };
                let model = match mean {
                    Some(m) => model.with_mean(m.clone())?,
                    None => model,
                };
                Arc::new(GaussianKnockoffs::new(model)?)
            }
            ModelSpec::Archimedean { copula, posterior } => {
                Arc::new(FrailtyKnockoffs::new(&CopulaModel::from_spec(copula)?, *posterior)?)
            }
            ModelSpec::ConjugateMixture(m) => Arc::new(m.build()?),
            ModelSpec::Discretized { level, base } => Arc::new(DiscretizedKnockoffs::new(base.build()?, *level)),
            ModelSpec::SymmetrizedDensity { mean, covariance } => {
                let n = covariance.len();
                if covariance.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidInput("covariance must be square".into()));
                }
                Arc::new(SymmetrizedGaussian::new(mean.clone(), from_rows(covariance))?)
            }
            ModelSpec::Trivial { base } => Arc::new(Trivial(base.build()?)),
            ModelSpec::Shifted { base, shift } => Arc::new(Shifted { base: base.build()?, shift: *shift }),
            ModelSpec::IndependentCopy { base } => Arc::new(IndependentCopy(base.build()?)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_variant() {
        let cases = [
            r#"{"type":"gaussian","sigma":[[1,0.5],[0.5,1]]}"#,
            r#"{"type":"gaussian","sigma":{"kind":"ar1","p":5,"rho":0.3},"d":[0.5,0.5,0.5,0.5,0.5],"mean":[0,0,0,0,1]}"#,
            r#"{"type":"gaussian","sigma":{"kind":"equicorrelated","p":3,"rho":0.2},"d":"equicorrelated"}"#,
            r#"{"type":"archimedean","copula":{"p":3,"C":{"type":"archimedean","generator":{"family":"clayton","theta":2}},"D":[{"type":"archimedean","generator":{"family":"clayton","theta":2}}]}}"#,
            r#"{"type":"conjugate-mixture","family":"poisson-gamma","p":2,"a":[1,2],"b":[1,1]}"#,
            r#"{"type":"discretized","level":8,"base":{"type":"gaussian","sigma":[[1]]}}"#,
            r#"{"type":"symmetrized-density","mean":[0,1],"covariance":[[1,0.2],[0.2,1]]}"#,
            r#"{"type":"trivial","base":{"type":"gaussian","sigma":[[1]]}}"#,
            r#"{"type":"shifted","shift":1,"base":{"type":"gaussian","sigma":[[1]]}}"#,
            r#"{"type":"independent-copy","base":{"type":"gaussian","sigma":[[1]]}}"#,
        ];
        for c in cases {
            let spec = ModelSpec::from_json(c).unwrap_or_else(|e| panic!("{c}: {e}"));
            let s = spec.build().unwrap_or_else(|e| panic!("{c}: {e}"));
            let m = s.sample_joint(10, 1).unwrap();
            assert_eq!(m.nrows(), 10);
            let back = ModelSpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn unknown_tags_are_unsupported_models() {
        for c in [
            r#"{"type":"vine","p":2}"#,
            r#"{"type":"conjugate-mixture","family":"beta-binomial","p":1}"#,
        ] {
            assert!(matches!(ModelSpec::from_json(c), Err(Error::UnsupportedModel(_))), "{c}");
        }
        assert!(matches!(ModelSpec::from_json(r#"{"type":"gaussian"}"#), Err(Error::InvalidInput(_))));
        assert!(matches!(
            ModelSpec::from_json(r#"{"type":"discretized","level":0,"base":{"type":"gaussian","sigma":[[1]]}}"#),
            Err(Error::InvalidInput(_))
        ));
        let gumbel = r#"{"type":"archimedean","copula":{"p":2,"C":{"type":"archimedean","generator":{"family":"gumbel","theta":2}},"D":[{"type":"archimedean","generator":{"family":"gumbel","theta":2}}]}}"#;
        assert!(matches!(ModelSpec::from_json(gumbel).unwrap().build(), Err(Error::UnsupportedGenerator(_))));
    }
}
