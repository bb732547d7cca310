//! Least-squares estimation of `A` under a fixed edge set.
//!
//! Column `j` of `Â` is the OLS regression of `x_j` on its parent columns,
//! computed from a thin QR factorization of `X_{pa_j}`. Entries outside the
//! parent set are never written, so they stay exactly zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{validate_dag, CoefMatrix, DataMatrix, Dag};

/// Relative threshold on the diagonal of `R` below which a parent block is
/// treated as singular.
pub const RANK_TOL: f64 = 1e-10;

/// Least-squares regression of a single node on a parent set.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    /// Coefficients aligned with the parent list passed to [`fit_node`].
    pub coefs: Vec<f64>,
    pub residual: DVector<f64>,
    pub rss: f64,
}

/// Regresses column `j` of `x` on the columns listed in `parents`.
pub fn fit_node(x: &DMatrix<f64>, j: usize, parents: &[usize]) -> Result<NodeFit> {
    let n = x.nrows();
    let y = x.column(j).into_owned();
    if parents.is_empty() {
        let rss = y.norm_squared();
        return Ok(NodeFit {
            coefs: Vec::new(),
            residual: y,
            rss,
        });
    }
    if parents.len() >= n {
        return Err(Error::TooManyParents {
            node: j,
            parents: parents.len(),
            samples: n,
        });
    }
    let design = x.select_columns(parents.iter());
    let qr = design.clone().qr();
    let r = qr.r();
    let diag = r.diagonal().map(f64::abs);
    let (lo, hi) = (diag.min(), diag.max());
    if !(hi > 0.0) || lo < RANK_TOL * hi {
        return Err(Error::RankDeficient { node: j });
    }
    let qty = qr.q().tr_mul(&y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { node: j })?;
    let residual = &y - &design * &beta;
    let rss = residual.norm_squared();
    Ok(NodeFit {
        coefs: beta.iter().copied().collect(),
        residual,
        rss,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub a_hat: CoefMatrix,
    /// `‖X - XÂ‖_F²`.
    pub rss: f64,
    pub node_rss: Vec<f64>,
    /// `X - XÂ`, kept for Gram matrix assembly.
    pub residuals: DMatrix<f64>,
    pub per_node_rank_ok: Vec<bool>,
}

/// Fits every node on its parents in `e`.
pub fn fit_edgeset(x: &DataMatrix, e: &Dag) -> Result<FitResult> {
    let p = x.p();
    if e.p() != p {
        return Err(Error::InvalidInput(format!(
            "edge set has {} nodes but data has {p} columns",
            e.p()
        )));
    }
    if !validate_dag(e) {
        return Err(Error::Cyclic);
    }
    let xv = x.values();
    let mut a = DMatrix::zeros(p, p);
    let mut residuals = DMatrix::zeros(x.n(), p);
    let mut node_rss = Vec::with_capacity(p);
    for (j, parents) in e.parent_sets().iter().enumerate() {
        let fit = fit_node(xv, j, parents)?;
        for (&k, &c) in parents.iter().zip(&fit.coefs) {
            a[(k, j)] = c;
        }
        residuals.set_column(j, &fit.residual);
        node_rss.push(fit.rss);
    }
    // a regression can return an exact zero coefficient, so the support may
    // be smaller than `e` but it is never larger
    let a_hat = CoefMatrix::from_raw(a)?;
    Ok(FitResult {
        a_hat,
        rss: node_rss.iter().sum(),
        node_rss,
        residuals,
        per_node_rank_ok: vec![true; p],
    })
}

/// Plug-in noise variance from the largest candidate,
/// `rss / ((n - k_max) p)`, with the squared Frobenius norm as the loss.
pub fn estimate_sigma2(x: &DataMatrix, largest: &FitResult, k_max: usize) -> Result<f64> {
    sigma2_from_rss(largest.rss, x.n(), x.p(), k_max)
}

pub(crate) fn sigma2_from_rss(rss: f64, n: usize, p: usize, k_max: usize) -> Result<f64> {
    if n <= k_max {
        return Err(Error::InsufficientSamples { n, k_max });
    }
    Ok(rss / ((n - k_max) as f64 * p as f64))
}

/// `‖X - XA‖_F²` for an arbitrary coefficient matrix.
pub fn residual_sum_of_squares(x: &DataMatrix, a: &CoefMatrix) -> f64 {
    let xv = x.values();
    (xv - xv * a.values()).norm_squared()
}

/// Gaussian log-likelihood
/// `-(np/2) log(2πσ²) - (n/2σ²) tr{(I - A)(I - A)ᵀ Σ̂}` with `Σ̂ = XᵀX/n`.
pub fn profile_loglik(x: &DataMatrix, a: &CoefMatrix, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidInput(format!("sigma2 = {sigma2} must be positive")));
    }
    let (n, p) = (x.n() as f64, x.p() as f64);
    let b = a.i_minus();
    let trace = (&b * b.transpose() * x.second_moment()).trace();
    Ok(-(n * p / 2.0) * (2.0 * std::f64::consts::PI * sigma2).ln() - n / (2.0 * sigma2) * trace)
}
