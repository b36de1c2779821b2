//! Gaussian knockoffs: `(X, X̃) ~ N(0, G)` with
//! `G = [[Σ, Σ − D], [Σ − D, Σ]]` for a diagonal `D` keeping `G` PSD.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{correlation_from_covariance, min_eigenvalue, psd_sqrt, symmetrize};
use crate::rng::{self, Rng};
use crate::sample::{sample_in_blocks, JointSampleMatrix, KnockoffSampler, MarginalLaw};
use crate::special::normal_cdf;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

/// Relative tolerance of the PSD gate on `G`.
pub const PSD_TOLERANCE: f64 = 1e-8;

fn validate_sigma(sigma: &DMatrix<f64>) -> Result<()> {
    let p = sigma.nrows();
    if p == 0 || sigma.ncols() != p {
        return Err(Error::InvalidInput(format!(
            "covariance must be square and nonempty, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("covariance has non-finite entries".into()));
    }
    let scale = sigma.amax().max(1.0);
    if (sigma - sigma.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidInput("covariance is not symmetric".into()));
    }
    let lmin = min_eigenvalue(sigma);
    if lmin <= 0.0 || Cholesky::new(sigma.clone()).is_none() {
        return Err(Error::InvalidInput(format!(
            "covariance is not positive definite (minimum eigenvalue {lmin:e})"
        )));
    }
    Ok(())
}

/// Equicorrelated choice `d_j = min(Σ_jj, 2 λ_min(corr(Σ)) Σ_jj)`.
pub fn select_diag_equicorrelated(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    validate_sigma(sigma)?;
    let lmin = min_eigenvalue(&correlation_from_covariance(sigma));
    let s = (2.0 * lmin).min(1.0);
    Ok((0..sigma.nrows()).map(|j| s * sigma[(j, j)]).collect())
}

#[derive(Clone, Debug)]
pub struct GaussianModel {
    sigma: DMatrix<f64>,
    d: Vec<f64>,
    g: DMatrix<f64>,
    mean: Vec<f64>,
    min_eigenvalue: f64,
    /// `L` with `L Lᵀ = 2Σ − D`.
    sum_factor: DMatrix<f64>,
}

/// Assembles `G` and accepts it if its minimum eigenvalue is at least
/// `-1e-8 · max(1, trace(G) / 2p)`.
pub fn assemble_joint(sigma: DMatrix<f64>, d: Vec<f64>) -> Result<GaussianModel> {
    validate_sigma(&sigma)?;
    let p = sigma.nrows();
    check_dim(p, d.len())?;
    if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidInput(format!("diagonal entries must be nonnegative, got {bad}")));
    }
    let dm = DMatrix::from_diagonal(&DVector::from_column_slice(&d));
    let off = &sigma - &dm;
    let mut g = DMatrix::zeros(2 * p, 2 * p);
    g.view_mut((0, 0), (p, p)).copy_from(&sigma);
    g.view_mut((p, p), (p, p)).copy_from(&sigma);
    g.view_mut((0, p), (p, p)).copy_from(&off);
    g.view_mut((p, 0), (p, p)).copy_from(&off);

    let lmin = min_eigenvalue(&g);
    let tolerance = PSD_TOLERANCE * (g.trace() / (2 * p) as f64).max(1.0);
    if lmin < -tolerance {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: lmin, tolerance });
    }
    // In the basis ((x + x̃)/√2, (x − x̃)/√2) the joint covariance is
    // block-diagonal with blocks 2Σ − D and D.
    let sum_cov = &sigma * 2.0 - &dm;
    let sum_factor = psd_sqrt(&sum_cov).ok_or(Error::NotPositiveSemidefinite {
        min_eigenvalue: min_eigenvalue(&sum_cov),
        tolerance,
    })?;
    Ok(GaussianModel { sigma, d, g, mean: vec![0.0; p], min_eigenvalue: lmin, sum_factor })
}

impl GaussianModel {
    pub fn equicorrelated(sigma: DMatrix<f64>) -> Result<Self> {
        let d = select_diag_equicorrelated(&sigma)?;
        assemble_joint(sigma, d)
    }

    /// Shifts both blocks by `mean`.
    pub fn with_mean(mut self, mean: Vec<f64>) -> Result<Self> {
        check_dim(self.p(), mean.len())?;
        self.mean = mean;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// The assembled `2p × 2p` joint covariance `G`.
    pub fn joint_covariance(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    fn draw_joint(&self, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
        let p = self.p();
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = &self.sum_factor * z;
        let mut x = Vec::with_capacity(p);
        let mut xt = Vec::with_capacity(p);
        for j in 0..p {
            let v = self.d[j].sqrt() * rng.sample::<f64, _>(StandardNormal);
            x.push(self.mean[j] + (u[j] + v) * FRAC_1_SQRT_2);
            xt.push(self.mean[j] + (u[j] - v) * FRAC_1_SQRT_2);
        }
        (x, xt)
    }

    /// `n` i.i.d. draws from `N(mean, G)`.
    pub fn sample_joint(&self, n: usize, seed: u64) -> Result<JointSampleMatrix> {
        if n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        sample_in_blocks(self.p(), n, seed, |rng| Ok(self.draw_joint(rng)))
    }

    pub fn conditional(&self) -> Result<ConditionalGaussian> {
        ConditionalGaussian::new(self)
    }

    /// One draw of `X̃ | X = x`.
    pub fn conditional_knockoff(&self, x: &[f64], seed: u64) -> Result<Vec<f64>> {
        let cond = self.conditional()?;
        cond.sample(x, &mut rng::from_seed(seed))
    }
}

/// `X̃ | X = x ~ N(μ + (I − DΣ⁻¹)(x − μ), 2D − DΣ⁻¹D)`.
#[derive(Clone, Debug)]
pub struct ConditionalGaussian {
    shrink: DMatrix<f64>,
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    mean: Vec<f64>,
}

impl ConditionalGaussian {
    pub fn new(model: &GaussianModel) -> Result<Self> {
        let p = model.p();
        let chol = Cholesky::new(model.sigma.clone())
            .ok_or_else(|| Error::InvalidInput("singular covariance".into()))?;
        let inv = chol.inverse();
        let dm = DMatrix::from_diagonal(&DVector::from_column_slice(&model.d));
        let d_inv = &dm * &inv;
        let shrink = DMatrix::identity(p, p) - &d_inv;
        let covariance = symmetrize(&(&dm * 2.0 - &d_inv * &dm));
        let factor = psd_sqrt(&covariance).ok_or(Error::NotPositiveSemidefinite {
            min_eigenvalue: min_eigenvalue(&covariance),
            tolerance: PSD_TOLERANCE,
        })?;
        Ok(Self { shrink, covariance, factor, mean: model.mean.clone() })
    }

    pub fn mean_given(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.mean.len(), x.len())?;
        let c = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        let m = &self.shrink * c;
        Ok(m.iter().zip(&self.mean).map(|(a, b)| a + b).collect())
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn sample(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mut out = self.mean_given(x)?;
        let p = out.len();
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = &self.factor * z;
        for (o, e) in out.iter_mut().zip(noise.iter()) {
            *o += e;
        }
        Ok(out)
    }
}

/// Gaussian model paired with conditional knockoff sampling.
#[derive(Clone, Debug)]
pub struct GaussianKnockoffs {
    model: GaussianModel,
    cond: ConditionalGaussian,
    chol: DMatrix<f64>,
}

impl GaussianKnockoffs {
    pub fn new(model: GaussianModel) -> Result<Self> {
        let cond = model.conditional()?;
        let chol = Cholesky::new(model.sigma.clone())
            .ok_or_else(|| Error::InvalidInput("singular covariance".into()))?
            .unpack();
        Ok(Self { model, cond, chol })
    }

    pub fn model(&self) -> &GaussianModel {
        &self.model
    }
}

impl KnockoffSampler for GaussianKnockoffs {
    fn p(&self) -> usize {
        self.model.p()
    }

    fn sample_x(&self, rng: &mut Rng) -> Vec<f64> {
        let p = self.p();
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &self.chol * z;
        x.iter().zip(&self.model.mean).map(|(a, m)| a + m).collect()
    }

    fn knockoff(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.cond.sample(x, rng)
    }

    fn marginal_laws(&self) -> Vec<MarginalLaw> {
        (0..self.p())
            .map(|j| {
                let m = self.model.mean[j];
                let s = self.model.sigma[(j, j)].sqrt();
                MarginalLaw::Continuous(Arc::new(move |t| normal_cdf((t - m) / s)))
            })
            .collect()
    }

    fn sample_joint(&self, n: usize, seed: u64) -> Result<JointSampleMatrix> {
        self.model.sample_joint(n, seed)
    }
}
