//! Fixtures shared by the benchmarks.

use knockoffs::copula::{ArchimedeanGenerator, Copula};
use knockoffs::{ConjugateFamily, CopulaModel, GaussianKnockoffs, GaussianModel};
use nalgebra::DMatrix;

/// `Σ_ij = ρ^{|i−j|}`.
pub fn ar1(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

pub fn gaussian(p: usize, rho: f64) -> GaussianKnockoffs {
    GaussianKnockoffs::new(GaussianModel::equicorrelated(ar1(p, rho)).expect("AR(1) is positive definite"))
        .expect("valid model")
}

/// Clayton `C` and `D_i` sharing one generator.
pub fn clayton(p: usize, theta: f64) -> CopulaModel {
    let c = Copula::Archimedean(ArchimedeanGenerator::clayton(theta).expect("theta > 0"));
    CopulaModel::uniform(c.clone(), vec![c; p]).expect("valid copula model")
}

pub fn poisson_gamma(p: usize) -> ConjugateFamily {
    ConjugateFamily::poisson_gamma(&vec![2.0; p], &vec![0.5; p]).expect("positive hyperparameters")
}
