//! Weight choice for the averaged estimator `Â(w) = Σ w_m Â^(m)`.
//!
//! Because the weights sum to one, the residual `X - XÂ(w)` is the weighted
//! sum of the candidate residuals and the criterion
//! `C(w) = ‖X - XÂ(w)‖_F² + λ wᵀk` is the quadratic `wᵀGw + λ wᵀk` with
//! `G_lm = tr(R_lᵀ R_m)`. It is minimized over the probability simplex.
//!
//! The solver alternates a Frank–Wolfe vertex selection with an exact
//! minimization over the face spanned by the current active vertices
//! (fully corrective). Face minimization works in an orthonormal basis of the
//! sum-zero subspace, takes a Newton step through the pseudo-inverse of the
//! reduced Hessian, and follows a descent ray when the reduced gradient has
//! a component in its null space. Weights that reach zero leave the face.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fit::sigma2_from_rss;
use crate::types::{CandidateSet, CoefMatrix, DataMatrix, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// `λ = ln n`.
    LogN,
    /// `λ = 2` with the penalty vector scaled by `σ̂²`.
    Mallows2,
    Fixed(f64),
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaRule::LogN => f.write_str("log_n"),
            LambdaRule::Mallows2 => f.write_str("mallows2"),
            LambdaRule::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for LambdaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "log_n" => Ok(LambdaRule::LogN),
            "mallows2" => Ok(LambdaRule::Mallows2),
            other => match other.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaRule::Fixed(v)),
                _ => Err(Error::InvalidInput(format!(
                    "lambda must be log_n, mallows2 or a nonnegative number, got {other:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingConfig {
    pub lambda_rule: LambdaRule,
    /// Bound on the scaled KKT residual and the Frank–Wolfe gap.
    pub qp_tolerance: f64,
    pub qp_max_iters: usize,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        AveragingConfig {
            lambda_rule: LambdaRule::LogN,
            qp_tolerance: 1e-10,
            qp_max_iters: 100_000,
        }
    }
}

impl AveragingConfig {
    pub fn with_lambda(lambda_rule: LambdaRule) -> Self {
        AveragingConfig {
            lambda_rule,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LambdaRule::Fixed(v) = self.lambda_rule {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("lambda = {v} must be >= 0")));
            }
        }
        if !(self.qp_tolerance > 0.0) {
            return Err(Error::InvalidInput("qp tolerance must be positive".into()));
        }
        Ok(())
    }
}

pub fn lambda_value(rule: LambdaRule, n: usize) -> f64 {
    match rule {
        LambdaRule::LogN => (n as f64).ln(),
        LambdaRule::Mallows2 => 2.0,
        LambdaRule::Fixed(v) => v,
    }
}

/// `G_lm = tr(R_lᵀ R_m)` with `R_m = X - XÂ^(m)`.
pub fn gram_matrix(x: &DataMatrix, cs: &CandidateSet) -> DMatrix<f64> {
    let xv = x.values();
    let residuals: Vec<DMatrix<f64>> = cs
        .models()
        .iter()
        .map(|c| xv - xv * c.coef.values())
        .collect();
    let m = residuals.len();
    let mut g = DMatrix::zeros(m, m);
    for l in 0..m {
        for r in l..m {
            let v = residuals[l].dot(&residuals[r]);
            g[(l, r)] = v;
            g[(r, l)] = v;
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    pub w: WeightVector,
    /// `wᵀGw + λ wᵀk` at the solution.
    pub objective: f64,
    /// Largest KKT violation divided by `max(1, max|2G| + max|λk|)`.
    pub kkt_residual: f64,
    pub gram: DMatrix<f64>,
    pub iterations: usize,
}

pub fn qp_objective(g: &DMatrix<f64>, linear: &[f64], w: &[f64]) -> f64 {
    let wv = DVector::from_column_slice(w);
    wv.dot(&(g * &wv)) + linear.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
}

fn qp_gradient(g: &DMatrix<f64>, linear: &[f64], w: &DVector<f64>) -> DVector<f64> {
    g * w * 2.0 + DVector::from_column_slice(linear)
}

/// Symmetrizes `g` and clips negative eigenvalues to zero.
fn make_psd(g: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.min() >= 0.0 {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    (&out + out.transpose()) * 0.5
}

/// Orthonormal basis of `{d : Σ d = 0}` in `R^s` (Helmert columns).
fn sum_zero_basis(s: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(s, s.saturating_sub(1));
    for t in 1..s {
        let norm = ((t * (t + 1)) as f64).sqrt();
        for i in 0..t {
            z[(i, t - 1)] = 1.0 / norm;
        }
        z[(t, t - 1)] = -(t as f64) / norm;
    }
    z
}

struct Qp<'a> {
    g: &'a DMatrix<f64>,
    linear: &'a [f64],
    scale: f64,
}

impl Qp<'_> {
    /// Minimizes over the face spanned by `active`; drops indices whose
    /// weights hit zero. Returns the number of inner steps.
    fn minimize_face(&self, w: &mut DVector<f64>, active: &mut Vec<usize>, budget: usize) -> usize {
        let mut steps = 0;
        let mut full_steps = 0;
        while steps < budget && active.len() > 1 {
            steps += 1;
            let s = active.len();
            let z = sum_zero_basis(s);
            let g_ss = DMatrix::from_fn(s, s, |a, b| 2.0 * self.g[(active[a], active[b])]);
            let grad = qp_gradient(self.g, self.linear, w);
            let grad_s = DVector::from_fn(s, |a, _| grad[active[a]]);
            let h = z.transpose() * &g_ss * &z;
            let h = (&h + h.transpose()) * 0.5;
            let r = z.transpose() * grad_s;

            let eig = SymmetricEigen::new(h);
            let lam_max = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
            let thr = 1e-12 * lam_max.max(f64::MIN_POSITIVE);
            let coords = eig.eigenvectors.transpose() * &r;
            let null_norm = (0..s - 1)
                .filter(|&i| eig.eigenvalues[i] <= thr)
                .map(|i| coords[i] * coords[i])
                .sum::<f64>()
                .sqrt();
            let newton = null_norm <= 1e-14 * self.scale;
            let mut y = DVector::zeros(s - 1);
            for i in 0..s - 1 {
                let v = eig.eigenvectors.column(i);
                let l = eig.eigenvalues[i];
                if newton && l > thr {
                    y.axpy(-coords[i] / l, &v, 1.0);
                } else if !newton && l <= thr {
                    y.axpy(-coords[i], &v, 1.0);
                }
            }
            let d = &z * y;
            if d.amax() <= 1e-15 {
                break;
            }

            let mut alpha_max = f64::INFINITY;
            let mut blocking = None;
            for a in 0..s {
                if d[a] < 0.0 {
                    let ratio = w[active[a]] / -d[a];
                    if ratio < alpha_max {
                        alpha_max = ratio;
                        blocking = Some(a);
                    }
                }
            }
            let alpha = if newton { alpha_max.min(1.0) } else { alpha_max };
            for a in 0..s {
                w[active[a]] += alpha * d[a];
            }
            if alpha < 1.0 || !newton {
                if let Some(b) = blocking {
                    w[active[b]] = 0.0;
                }
            }
            for &i in active.iter() {
                if w[i] < 0.0 {
                    w[i] = 0.0;
                }
            }
            active.retain(|&i| w[i] > 0.0);
            let total = w.sum();
            *w /= total;

            if newton && alpha >= 1.0 {
                full_steps += 1;
                // one refinement pass after the exact step
                if full_steps >= 2 {
                    break;
                }
            }
        }
        steps
    }

    fn kkt_residual(&self, w: &DVector<f64>) -> f64 {
        let grad = qp_gradient(self.g, self.linear, w);
        let mu: f64 = w.dot(&grad);
        let mut worst = (w.sum() - 1.0).abs();
        for i in 0..w.len() {
            worst = worst.max(-w[i]);
            worst = worst.max(mu - grad[i]);
            if w[i] > 0.0 {
                worst = worst.max((grad[i] - mu).abs());
            }
        }
        worst / self.scale
    }
}

/// Minimizes `wᵀGw + λ wᵀk` over the simplex.
///
/// `penalty` is the per-candidate complexity `k` (or `σ̂² k` in Mallows mode).
pub fn solve_weights(
    g: &DMatrix<f64>,
    penalty: &[f64],
    lambda: f64,
    cfg: &AveragingConfig,
) -> Result<WeightSolution> {
    cfg.validate()?;
    let m = penalty.len();
    if m == 0 || g.nrows() != m || g.ncols() != m {
        return Err(Error::InvalidInput(format!(
            "gram matrix is {}x{} but there are {m} penalties",
            g.nrows(),
            g.ncols()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda = {lambda} must be >= 0")));
    }
    if g.iter().chain(penalty).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite QP data".into()));
    }
    let gram = make_psd(g);
    let linear: Vec<f64> = penalty.iter().map(|k| lambda * k).collect();
    let scale = 1.0f64.max(2.0 * gram.amax() + linear.iter().fold(0.0f64, |a, b| a.max(b.abs())));
    let qp = Qp {
        g: &gram,
        linear: &linear,
        scale,
    };

    // start at the best vertex
    let start = (0..m)
        .map(|i| (i, gram[(i, i)] + linear[i]))
        .fold((0, f64::INFINITY), |best, (i, f)| if f < best.1 { (i, f) } else { best })
        .0;
    let mut w = DVector::zeros(m);
    w[start] = 1.0;
    let mut active = vec![start];

    let mut iterations = 0;
    while iterations < cfg.qp_max_iters {
        iterations += 1;
        iterations += qp.minimize_face(&mut w, &mut active, cfg.qp_max_iters - iterations);
        let grad = qp_gradient(&gram, &linear, &w);
        let mu = w.dot(&grad);
        let (best, g_best) = (0..m).fold((0, f64::INFINITY), |acc, i| {
            if grad[i] < acc.1 {
                (i, grad[i])
            } else {
                acc
            }
        });
        let gap = mu - g_best;
        if gap <= cfg.qp_tolerance * scale * 1e-2 {
            break;
        }
        if !active.contains(&best) {
            active.push(best);
            active.sort_unstable();
        } else if qp.kkt_residual(&w) <= cfg.qp_tolerance * 1e-2 {
            break;
        }
    }

    let kkt_residual = qp.kkt_residual(&w);
    if kkt_residual > cfg.qp_tolerance {
        return Err(Error::NotConverged {
            residual: kkt_residual,
            iterations,
        });
    }
    let weights = w.iter().copied().collect::<Vec<_>>();
    let objective = qp_objective(&gram, &linear, &weights);
    Ok(WeightSolution {
        w: WeightVector::new(weights)?,
        objective,
        kkt_residual,
        gram,
        iterations,
    })
}

/// `Â(w) = Σ w_m Â^(m)`.
pub fn average_estimator(cs: &CandidateSet, w: &WeightVector) -> Result<CoefMatrix> {
    if cs.len() != w.len() {
        return Err(Error::InvalidInput(format!(
            "{} candidates but {} weights",
            cs.len(),
            w.len()
        )));
    }
    let p = cs.largest().coef.p();
    let mut acc = DMatrix::zeros(p, p);
    for (c, &wm) in cs.models().iter().zip(w.as_slice()) {
        if wm != 0.0 {
            acc += c.coef.values() * wm;
        }
    }
    CoefMatrix::new(acc)
}

/// Everything produced by one weight fit.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragingResult {
    pub solution: WeightSolution,
    pub lambda: f64,
    /// Penalty vector handed to the solver: `k`, or `σ̂² k` in Mallows mode.
    pub penalty: Vec<f64>,
    /// Noise variance estimated in the largest candidate.
    pub sigma2_hat: f64,
    pub a_hat: CoefMatrix,
    /// `np log(2πσ̂²) + C(ŵ)/σ̂²`, for reporting only.
    pub penalized_nll: f64,
}

/// Gram matrix, λ, penalty, weights and the averaged estimator.
pub fn model_average(x: &DataMatrix, cs: &CandidateSet, cfg: &AveragingConfig) -> Result<AveragingResult> {
    cfg.validate()?;
    let gram = gram_matrix(x, cs);
    let m = cs.len();
    let k_max = cs.largest().k();
    let sigma2_hat = sigma2_from_rss(gram[(m - 1, m - 1)], x.n(), x.p(), k_max)?;
    let lambda = lambda_value(cfg.lambda_rule, x.n());
    let penalty: Vec<f64> = match cfg.lambda_rule {
        LambdaRule::Mallows2 => cs.k().iter().map(|&k| sigma2_hat * k as f64).collect(),
        _ => cs.k().iter().map(|&k| k as f64).collect(),
    };
    let solution = solve_weights(&gram, &penalty, lambda, cfg)?;
    let a_hat = average_estimator(cs, &solution.w)?;
    let np = (x.n() * x.p()) as f64;
    let penalized_nll =
        np * (2.0 * std::f64::consts::PI * sigma2_hat).ln() + solution.objective / sigma2_hat;
    Ok(AveragingResult {
        solution,
        lambda,
        penalty,
        sigma2_hat,
        a_hat,
        penalized_nll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Candidate, Dag};

    fn cfg() -> AveragingConfig {
        AveragingConfig::default()
    }

    #[test]
    fn singleton_simplex() {
        let sol = solve_weights(&DMatrix::from_element(1, 1, 3.0), &[2.0], 1.0, &cfg()).unwrap();
        assert_eq!(sol.w.as_slice(), &[1.0]);
        assert_eq!(sol.objective, 5.0);
    }

    #[test]
    fn diagonal_two_by_two() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let sol = solve_weights(&g, &[1.0, 2.0], 0.0, &cfg()).unwrap();
        assert!((sol.w.as_slice()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((sol.w.as_slice()[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(sol.kkt_residual <= 1e-10);
    }

    #[test]
    fn linear_objective_picks_smallest_penalty() {
        let g = DMatrix::zeros(3, 3);
        let sol = solve_weights(&g, &[1.0, 2.0, 3.0], 1.0, &cfg()).unwrap();
        assert_eq!(sol.w.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn duplicate_candidates_certify_kkt() {
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 2.0, 1.0, 2.0, 2.0, 1.0, 1.0, 1.0, 3.0]);
        let sol = solve_weights(&g, &[1.0, 1.0, 2.0], 0.1, &cfg()).unwrap();
        assert!(sol.kkt_residual <= 1e-10);
    }

    #[test]
    fn indefinite_input_is_clipped() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let sol = solve_weights(&g, &[0.0, 0.0], 0.0, &cfg()).unwrap();
        assert!(sol.kkt_residual <= 1e-10);
        // clipped to 1.5·11ᵀ, which is constant on the simplex
        assert!((sol.gram[(0, 1)] - 1.5).abs() < 1e-12);
        assert!((sol.objective - 1.5).abs() < 1e-12);
    }

    #[test]
    fn shape_and_lambda_errors() {
        let g = DMatrix::identity(2, 2);
        assert!(solve_weights(&g, &[1.0], 1.0, &cfg()).is_err());
        assert!(solve_weights(&g, &[1.0, 2.0], -1.0, &cfg()).is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 3.0, 0.2, 0.1, 0.2, 1.5]);
        let tight = AveragingConfig {
            qp_max_iters: 1,
            ..cfg()
        };
        assert!(matches!(
            solve_weights(&g, &[0.0; 3], 0.0, &tight),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn lambda_rules() {
        assert!((lambda_value(LambdaRule::LogN, 800) - 800f64.ln()).abs() < 1e-15);
        assert!((lambda_value(LambdaRule::LogN, 800) - 6.684611727667927).abs() < 1e-12);
        assert_eq!(lambda_value(LambdaRule::Fixed(0.0), 10), 0.0);
        assert_eq!(lambda_value(LambdaRule::Mallows2, 10), 2.0);
        assert_eq!("log_n".parse::<LambdaRule>().unwrap(), LambdaRule::LogN);
        assert_eq!("mallows2".parse::<LambdaRule>().unwrap(), LambdaRule::Mallows2);
        assert_eq!("1.5".parse::<LambdaRule>().unwrap(), LambdaRule::Fixed(1.5));
        assert!("-1".parse::<LambdaRule>().is_err());
        assert!("ridge".parse::<LambdaRule>().is_err());
    }

    fn toy_candidates() -> CandidateSet {
        let mk = |edges: &[(usize, usize)], vals: &[f64]| {
            let mut a = DMatrix::zeros(3, 3);
            for (&(k, j), &v) in edges.iter().zip(vals) {
                a[(k, j)] = v;
            }
            Candidate {
                edges: Dag::new(3, edges.iter().copied()).unwrap(),
                coef: CoefMatrix::new(a).unwrap(),
            }
        };
        CandidateSet::new(
            vec![mk(&[(0, 1)], &[0.4]), mk(&[(0, 1), (1, 2)], &[0.6, -0.2])],
            0,
        )
        .unwrap()
    }

    #[test]
    fn average_at_vertex_and_midpoint() {
        let cs = toy_candidates();
        let a = average_estimator(&cs, &WeightVector::vertex(2, 1)).unwrap();
        assert_eq!(a, cs.models()[1].coef);
        let a = average_estimator(&cs, &WeightVector::new(vec![0.5, 0.5]).unwrap()).unwrap();
        assert!((a.get(0, 1) - 0.5).abs() < 1e-15);
        assert!((a.get(1, 2) + 0.1).abs() < 1e-15);
        assert!(average_estimator(&cs, &WeightVector::vertex(3, 0)).is_err());
    }

    #[test]
    fn gram_diagonal_is_rss() {
        let cs = toy_candidates();
        let x = DataMatrix::new(DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64).sin())).unwrap();
        let g = gram_matrix(&x, &cs);
        for (m, c) in cs.models().iter().enumerate() {
            let rss = crate::fit::residual_sum_of_squares(&x, &c.coef);
            assert!((g[(m, m)] - rss).abs() < 1e-12);
        }
        assert_eq!(g[(0, 1)], g[(1, 0)]);
    }
}
