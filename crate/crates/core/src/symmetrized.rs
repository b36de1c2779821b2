//! Knockoffs from a symmetrized density: `g = N(μ, Γ)` on `R^{2p}`,
//! averaged over the swap group.
//!
//! The symmetrized law is the uniform mixture of the `2^p` Gaussians
//! `N(f_S μ, P_S Γ P_S)`. Given `X = x` the component has posterior weight
//! proportional to its first-block density at `x`, and within a component
//! `X̃ | X` is Gaussian, so conditional sampling is exact.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{min_eigenvalue, psd_sqrt, symmetrize};
use crate::rng::Rng;
use crate::sample::{KnockoffSampler, MarginalLaw};
use crate::special::normal_cdf;
use crate::swap::{enumerate_swaps_with_limit, symmetrize_density, BaseMeasure, Density2p, SwapSet};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::sync::Arc;

/// Largest `p` accepted: the mixture has `2^p` components.
pub const MAX_P: usize = 12;

#[derive(Clone, Debug)]
struct Component {
    mean_x: DVector<f64>,
    chol_x: Cholesky<f64, nalgebra::Dyn>,
    ln_det_x: f64,
    mean_xt: DVector<f64>,
    /// `Γ_21 Γ_11^{-1}` for this component.
    regress: DMatrix<f64>,
    cond_factor: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct SymmetrizedGaussian {
    p: usize,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    components: Vec<Component>,
}

fn block(m: &DMatrix<f64>, r: usize, c: usize, p: usize) -> DMatrix<f64> {
    m.view((r, c), (p, p)).into_owned()
}

impl SymmetrizedGaussian {
    /// `mean` has `2p` entries and `cov` is `2p × 2p` positive definite.
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || n % 2 != 0 {
            return Err(Error::InvalidInput(format!("mean must have 2p entries, got {n}")));
        }
        let p = n / 2;
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::InvalidInput(format!("covariance must be {n}x{n}")));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) || mean.iter().chain(cov.iter()).any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("covariance must be finite and symmetric".into()));
        }
        if Cholesky::new(cov.clone()).is_none() {
            return Err(Error::InvalidInput(format!(
                "covariance is not positive definite (minimum eigenvalue {:e})",
                min_eigenvalue(&cov)
            )));
        }
        let swaps = enumerate_swaps_with_limit(p, MAX_P)?;
        let components = swaps
            .iter()
            .map(|s| {
                let perm = s.permutation_matrix();
                let c = &perm * &cov * perm.transpose();
                let m = s.apply(&mean)?;
                let (a, b12, b22) = (block(&c, 0, 0, p), block(&c, p, 0, p), block(&c, p, p, p));
                let chol_x = Cholesky::new(a.clone()).expect("principal block of a PD matrix");
                let ln_det_x = 2.0 * chol_x.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                let regress = chol_x.solve(&b12.transpose()).transpose();
                let cond = symmetrize(&(&b22 - &regress * b12.transpose()));
                let cond_factor = psd_sqrt(&cond).ok_or(Error::NotPositiveSemidefinite {
                    min_eigenvalue: min_eigenvalue(&cond),
                    tolerance: 0.0,
                })?;
                Ok(Component {
                    mean_x: DVector::from_column_slice(&m[..p]),
                    chol_x,
                    ln_det_x,
                    mean_xt: DVector::from_column_slice(&m[p..]),
                    regress,
                    cond_factor,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { p, mean, cov, components })
    }

    /// `q = 2^{-p} Σ_S g∘f_S`, the density of the symmetrized law.
    pub fn density(&self) -> Result<Density2p> {
        let n = 2 * self.p;
        let chol = Cholesky::new(self.cov.clone()).expect("validated");
        let ln_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mean = DVector::from_column_slice(&self.mean);
        let g = Density2p::over(vec![BaseMeasure::Lebesgue; self.p], move |y| {
            let d = DVector::from_column_slice(y) - &mean;
            let quad = d.dot(&chol.solve(&d));
            (-0.5 * (quad + ln_det + n as f64 * (2.0 * PI).ln())).exp()
        })?;
        symmetrize_density(&g)
    }

    fn ln_weight(&self, c: &Component, x: &DVector<f64>) -> f64 {
        let d = x - &c.mean_x;
        -0.5 * (d.dot(&c.chol_x.solve(&d)) + c.ln_det_x)
    }
}

impl KnockoffSampler for SymmetrizedGaussian {
    fn p(&self) -> usize {
        self.p
    }

    fn sample_x(&self, rng: &mut Rng) -> Vec<f64> {
        let c = &self.components[rng.random_range(0..self.components.len())];
        let z = DVector::from_fn(self.p, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&c.mean_x + c.chol_x.l() * z).iter().copied().collect()
    }

    fn knockoff(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        check_dim(self.p, x.len())?;
        let xv = DVector::from_column_slice(x);
        let lw: Vec<f64> = self.components.iter().map(|c| self.ln_weight(c, &xv)).collect();
        let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::DegenerateConditioning(format!("zero density at {x:?}")));
        }
        let w: Vec<f64> = lw.iter().map(|l| (l - top).exp()).collect();
        let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
        let mut k = w.len() - 1;
        for (i, wi) in w.iter().enumerate() {
            if u < *wi {
                k = i;
                break;
            }
            u -= wi;
        }
        let c = &self.components[k];
        let z = DVector::from_fn(self.p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let out = &c.mean_xt + &c.regress * (&xv - &c.mean_x) + &c.cond_factor * z;
        Ok(out.iter().copied().collect())
    }

    /// `X_i` is `Y_i` or `Y_{p+i}` with probability 1/2 each.
    fn marginal_laws(&self) -> Vec<MarginalLaw> {
        let p = self.p;
        (0..p)
            .map(|i| {
                let (m1, s1) = (self.mean[i], self.cov[(i, i)].sqrt());
                let (m2, s2) = (self.mean[p + i], self.cov[(p + i, p + i)].sqrt());
                MarginalLaw::Continuous(Arc::new(move |t| {
                    0.5 * (normal_cdf((t - m1) / s1) + normal_cdf((t - m2) / s2))
                }))
            })
            .collect()
    }
}

/// The swap set attaining component `k`, in enumeration order.
pub fn component_swap(p: usize, k: usize) -> Result<SwapSet> {
    SwapSet::from_mask(p, k as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{covariance_consistency, marginal_preservation_test, swap_test_energy};
    use crate::quadrature::integrate;

    fn example() -> SymmetrizedGaussian {
        // asymmetric g: different means and a skewed cross-covariance
        let cov = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.3, 0.5, 0.0, //
            0.3, 2.0, 0.2, 0.4, //
            0.5, 0.2, 1.5, -0.3, //
            0.0, 0.4, -0.3, 1.0,
        ]);
        SymmetrizedGaussian::new(vec![0.5, -1.0, 0.0, 0.2], cov).unwrap()
    }

    #[test]
    fn conditional_sampler_matches_density_ratio() {
        // p = 1: compare E[X̃ | X = x] with ∫ t q(x, t) dt / ∫ q(x, t) dt
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
        let m = SymmetrizedGaussian::new(vec![1.0, -0.5], cov).unwrap();
        let q = m.density().unwrap();
        let x = 0.4;
        let den = integrate(|t| q.eval(&[x, t]).unwrap(), f64::NEG_INFINITY, f64::INFINITY, 1e-11).unwrap();
        let num = integrate(|t| t * q.eval(&[x, t]).unwrap(), f64::NEG_INFINITY, f64::INFINITY, 1e-11).unwrap();
        let mut rng = crate::rng::from_seed(3);
        let draws: Vec<f64> = (0..200_000).map(|_| m.knockoff(&[x], &mut rng).unwrap()[0]).collect();
        let (mean, se) = crate::stats::mean_se(&draws);
        assert!((mean - num / den).abs() <= 4.0 * se, "{mean} ± {se} vs {}", num / den);
    }

    #[test]
    fn density_is_swap_invariant_and_marginals_hold() {
        let m = example();
        let q = m.density().unwrap();
        let y = [0.3, -0.2, 1.1, 0.7];
        for s in crate::swap::enumerate_swaps(2).unwrap() {
            assert!((q.eval(&y).unwrap() - q.eval(&s.apply(&y).unwrap()).unwrap()).abs() < 1e-15);
        }
        let j = m.sample_joint(20_000, 4).unwrap();
        assert!(marginal_preservation_test(&j, &m.marginal_laws(), 0.01).unwrap().pass);
        assert!(covariance_consistency(&j).unwrap().pass);
        for i in 1..=2 {
            let s = SwapSet::singleton(2, i).unwrap();
            assert!(swap_test_energy(&j, &s, 200, i as u64).unwrap() > 0.001);
        }
        assert_eq!(component_swap(2, 3).unwrap().members(), vec![1, 2]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SymmetrizedGaussian::new(vec![0.0; 3], DMatrix::identity(3, 3)).is_err());
        assert!(SymmetrizedGaussian::new(vec![0.0; 2], DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(matches!(
            SymmetrizedGaussian::new(vec![0.0; 26], DMatrix::identity(26, 26)),
            Err(Error::ResourceLimit(_))
        ));
    }
}
