//! Evaluation metrics and the candidate taxonomy used in simulations.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::synth::precision_from;
use crate::types::{smallest_eigenvalue, support_dag, CandidateSet, CoefMatrix, DataMatrix, PrecisionMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub kl: f64,
    pub pe: f64,
    pub ee_a: f64,
    pub ee_omega: f64,
}

/// `KL(Ω̂, Ω₀) = tr(Ω₀⁻¹Ω̂) - log|Ω₀⁻¹Ω̂| - p`.
///
/// Evaluated through the whitened difference `D = L⁻¹(Ω̂ - Ω₀)L⁻ᵀ` with
/// `Ω₀ = LLᵀ`, as `Σ μ_i - ln(1 + μ_i)` over the eigenvalues of `D`. Each term
/// is nonnegative, and identical inputs give exactly zero.
pub fn kl_loss(omega_hat: &PrecisionMatrix, omega0: &PrecisionMatrix) -> Result<f64> {
    if omega_hat.p() != omega0.p() {
        return Err(Error::InvalidInput("precision matrices differ in size".into()));
    }
    let l = omega0
        .values()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite {
            min_eigenvalue: smallest_eigenvalue(omega0.values()),
        })?
        .l();
    if omega_hat.values().clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: smallest_eigenvalue(omega_hat.values()),
        });
    }
    let diff = omega_hat.values() - omega0.values();
    if diff.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let half = l.solve_lower_triangular(&diff).ok_or(Error::Singular)?;
    let whitened = l
        .solve_lower_triangular(&half.transpose())
        .ok_or(Error::Singular)?;
    let whitened = (&whitened + whitened.transpose()) * 0.5;
    let eig = SymmetricEigen::new(whitened);
    Ok(eig
        .eigenvalues
        .iter()
        .map(|&mu| (mu - mu.ln_1p()).max(0.0))
        .sum())
}

/// `‖X A₀ - X Â‖_F / (n p)`; the norm is not squared.
pub fn prediction_error(x: &DataMatrix, a0: &CoefMatrix, a_hat: &CoefMatrix) -> f64 {
    let diff = a0.values() - a_hat.values();
    (x.values() * diff).norm() / (x.n() * x.p()) as f64
}

/// `(‖A₀ - Â‖_F, ‖Ω₀ - Ω̂‖_F)`.
pub fn estimation_errors(
    a0: &CoefMatrix,
    a_hat: &CoefMatrix,
    omega0: &PrecisionMatrix,
    omega_hat: &PrecisionMatrix,
) -> (f64, f64) {
    (
        (a0.values() - a_hat.values()).norm(),
        (omega0.values() - omega_hat.values()).norm(),
    )
}

/// `Ω̂ = (I - Â)(I - Â)ᵀ / σ̂²`.
pub fn estimated_precision(a_hat: &CoefMatrix, sigma2_hat: f64) -> Result<PrecisionMatrix> {
    if !(sigma2_hat > 0.0 && sigma2_hat.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma2 = {sigma2_hat} must be positive")));
    }
    precision_from(a_hat, sigma2_hat)
}

/// All four metrics for one estimate.
pub fn evaluate(
    x: &DataMatrix,
    a0: &CoefMatrix,
    omega0: &PrecisionMatrix,
    a_hat: &CoefMatrix,
    sigma2_hat: f64,
) -> Result<MetricsRecord> {
    let omega_hat = estimated_precision(a_hat, sigma2_hat)?;
    let kl = kl_loss(&omega_hat, omega0)?;
    let (ee_a, ee_omega) = estimation_errors(a0, a_hat, omega0, &omega_hat);
    Ok(MetricsRecord {
        kl,
        pe: prediction_error(x, a0, a_hat),
        ee_a,
        ee_omega,
    })
}

/// Underfitted / smallest correct / overfitted split of a nested set.
/// Indices are 0-based positions in the candidate set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateTaxonomy {
    pub underfitted: Vec<usize>,
    pub smallest_correct: Option<usize>,
    pub overfitted: Vec<usize>,
}

impl CandidateTaxonomy {
    /// `(Σ w_U, w_smallest, Σ w_O)`.
    pub fn weight_sums(&self, w: &[f64]) -> (f64, f64, f64) {
        let sum = |idx: &[usize]| idx.iter().map(|&i| w[i]).sum::<f64>();
        (
            sum(&self.underfitted),
            self.smallest_correct.map_or(0.0, |i| w[i]),
            sum(&self.overfitted),
        )
    }
}

/// A candidate is correctly specified when its edge set contains every
/// edge of the truth.
pub fn classify_candidates(cs: &CandidateSet, a0: &CoefMatrix) -> Result<CandidateTaxonomy> {
    let truth = support_dag(a0)?;
    let m = cs.len();
    let first_correct = cs
        .models()
        .iter()
        .position(|c| truth.is_subset_of(&c.edges));
    Ok(match first_correct {
        Some(m0) => CandidateTaxonomy {
            underfitted: (0..m0).collect(),
            smallest_correct: Some(m0),
            overfitted: (m0 + 1..m).collect(),
        },
        None => CandidateTaxonomy {
            underfitted: (0..m).collect(),
            smallest_correct: None,
            overfitted: Vec::new(),
        },
    })
}

/// Expected log-likelihood loss of using `a` in place of `a0`,
/// `(n/2σ²) tr{(I - A)(I - A)ᵀ Σ₀} - np/2` with
/// `Σ₀ = σ²(I - A₀ᵀ)⁻¹(I - A₀)⁻¹`.
///
/// Experiment-only diagnostic. With `B = (I - A₀)⁻¹(A₀ - A)` the trace term
/// equals `σ²‖I + B‖_F²`, so the value is `(n/2)(2 tr B + ‖B‖_F²)`, which is
/// exactly zero when `a == a0`.
pub fn kl_divergence_model(a: &CoefMatrix, a0: &CoefMatrix, sigma: f64, n: usize) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("sigma = {sigma} must be positive")));
    }
    if a.p() != a0.p() {
        return Err(Error::InvalidInput("coefficient matrices differ in size".into()));
    }
    let lu = a0.i_minus().lu();
    let delta: DMatrix<f64> = a0.values() - a.values();
    let b = lu.solve(&delta).ok_or(Error::Singular)?;
    Ok(n as f64 / 2.0 * (2.0 * b.trace() + b.norm_squared()))
}
