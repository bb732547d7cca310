//! Ground-truth DAGs and Gaussian SEM samples for simulation studies.
//!
//! The true graph is strictly lower triangular: an edge `k -> j` may exist only
//! when `k > j`, so node `p - 1` is a root under the fixed node ordering.
//! Gaussian variates come from `rand_distr::StandardNormal`, a ziggurat
//! sampler, driven by the ChaCha8 stream in [`crate::seed`].

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::types::{support_dag, CoefMatrix, DataMatrix, PrecisionMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub p: usize,
    /// Bernoulli probability of each lower off-diagonal edge.
    pub rho: f64,
    pub coef: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(p: usize, rho: f64, seed: u64) -> Self {
        SynthConfig {
            p,
            rho,
            coef: 0.5,
            sigma: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::InvalidInput("p must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidInput(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma = {} must be positive", self.sigma)));
        }
        if !self.coef.is_finite() {
            return Err(Error::InvalidInput("edge coefficient must be finite".into()));
        }
        Ok(())
    }
}

/// Draws the true coefficient matrix. Entries are visited row by row over the
/// strict lower triangle and each one is set to `coef` with probability `rho`.
pub fn generate_true_dag(cfg: &SynthConfig) -> Result<CoefMatrix> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut a = DMatrix::zeros(cfg.p, cfg.p);
    for k in 1..cfg.p {
        for j in 0..k {
            if rng.random_bool(cfg.rho) {
                a[(k, j)] = cfg.coef;
            }
        }
    }
    CoefMatrix::new(a)
}

/// Draws `n` i.i.d. rows of `x = z (I - A₀)⁻¹` with `z ~ N(0, σ² I)`.
///
/// The noise matrix is filled row-major first; each row is then propagated
/// through the structural equations in topological order.
pub fn sample_data(a0: &CoefMatrix, sigma: f64, n: usize, seed: u64) -> Result<DataMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma = {sigma} must be positive")));
    }
    let p = a0.p();
    let support = support_dag(a0)?;
    let order = support.topological_order().ok_or(Error::Singular)?;
    let parents = support.parent_sets();

    let mut rng = rng_from_seed(seed);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = sigma * z;
        }
    }
    for i in 0..n {
        for &j in &order {
            let pushed: f64 = parents[j].iter().map(|&k| x[(i, k)] * a0.get(k, j)).sum();
            x[(i, j)] += pushed;
        }
    }
    DataMatrix::new(x)
}

/// `Ω₀ = (I - A₀)(I - A₀)ᵀ / σ²`.
pub fn true_precision(a0: &CoefMatrix, sigma: f64) -> Result<PrecisionMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma = {sigma} must be positive")));
    }
    precision_from(a0, sigma * sigma)
}

pub(crate) fn precision_from(a: &CoefMatrix, sigma2: f64) -> Result<PrecisionMatrix> {
    let b = a.i_minus();
    let omega = &b * b.transpose() / sigma2;
    // the product is symmetric in exact arithmetic; remove rounding asymmetry
    let omega = (&omega + omega.transpose()) * 0.5;
    PrecisionMatrix::new(omega)
}
