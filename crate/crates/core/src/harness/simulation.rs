//! Monte Carlo sweeps over `(p, ρ, n, rep)`.
//!
//! Seeds: the true graph of replication `r` depends on
//! `(base_seed, p, ρ, r)` only, so the same graph is reused across the `n`
//! grid; the sample and the train/validation split additionally depend on
//! `n`. Replications run in parallel and are sorted before they are returned.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::averaging::{model_average, AveragingConfig, AveragingResult, LambdaRule};
use crate::candidates::{build_candidates, Initializer, SearchConfig};
use crate::error::{Error, Result};
use crate::fit::{fit_edgeset, sigma2_from_rss};
use crate::metrics::{classify_candidates, evaluate, CandidateTaxonomy, MetricsRecord};
use crate::seed::derive_seed;
use crate::synth::{generate_true_dag, sample_data, true_precision, SynthConfig};
use crate::types::{support_dag, CandidateSet, CoefMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    DagMa,
    LargestCandidate,
    InitialGraph,
    OracleTrueGraph,
}

impl Method {
    pub const BASELINES: [Method; 3] = [
        Method::LargestCandidate,
        Method::InitialGraph,
        Method::OracleTrueGraph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DagMa => "dag_ma",
            Method::LargestCandidate => "largest_candidate",
            Method::InitialGraph => "initial_graph",
            Method::OracleTrueGraph => "oracle_true_graph",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::DagMa]
            .into_iter()
            .chain(Method::BASELINES)
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub p_list: Vec<usize>,
    pub rho_list: Vec<f64>,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub m_candidates: usize,
    pub lambda_rule: LambdaRule,
    pub base_seed: u64,
    pub baselines: Vec<Method>,
    pub output_dir: Option<PathBuf>,
    pub sigma: f64,
    pub coef: f64,
    /// Start the search from the true graph instead of the BIC initializer.
    pub plant_true: bool,
    /// Store wall-clock seconds in the records (makes output nondeterministic).
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            p_list: vec![10],
            rho_list: vec![0.2],
            n_list: vec![50, 100, 200, 400, 800],
            reps: 50,
            m_candidates: 11,
            lambda_rule: LambdaRule::LogN,
            base_seed: 2024,
            baselines: Method::BASELINES.to_vec(),
            output_dir: None,
            sigma: 1.0,
            coef: 0.5,
            plant_true: false,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidInput("reps must be at least 1".into()));
        }
        if self.p_list.is_empty() || self.rho_list.is_empty() || self.n_list.is_empty() {
            return Err(Error::InvalidInput("p, rho and n lists must be nonempty".into()));
        }
        if self.m_candidates < 1 {
            return Err(Error::InvalidInput("need at least one candidate".into()));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 4) {
            return Err(Error::InvalidInput(format!("n = {n} is too small to split")));
        }
        if self.baselines.contains(&Method::DagMa) {
            return Err(Error::InvalidInput("dag_ma is not a baseline".into()));
        }
        for &p in &self.p_list {
            SynthConfig {
                p,
                rho: 0.0,
                coef: self.coef,
                sigma: self.sigma,
                seed: 0,
            }
            .validate()?;
        }
        if let Some(&rho) = self.rho_list.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidInput(format!("rho = {rho} outside [0, 1]")));
        }
        AveragingConfig::with_lambda(self.lambda_rule).validate()
    }
}

/// `(Σ w_U, w_smallest_correct, Σ w_O)` for one averaged fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSummary {
    pub underfit: f64,
    pub smallest_correct: f64,
    pub overfit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub p: usize,
    pub rho: f64,
    pub n: usize,
    pub rep: usize,
    pub method: Method,
    pub metrics: MetricsRecord,
    /// Only present for [`Method::DagMa`].
    pub weights: Option<WeightSummary>,
    pub seconds: Option<f64>,
}

impl RunRecord {
    fn sort_key(&self) -> (usize, u64, usize, usize, Method) {
        (self.p, self.rho.to_bits(), self.n, self.rep, self.method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFailure {
    pub p: usize,
    pub rho: f64,
    pub n: usize,
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub records: Vec<RunRecord>,
    pub failures: Vec<ReplicationFailure>,
}

/// Everything computed for one `(p, ρ, n, rep)` cell.
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub a0: CoefMatrix,
    pub candidates: CandidateSet,
    pub averaging: AveragingResult,
    pub taxonomy: CandidateTaxonomy,
    pub records: Vec<RunRecord>,
    /// KL loss of each candidate used on its own, with its own `σ̂²`.
    pub candidate_metrics: Vec<MetricsRecord>,
}

pub fn replication_seeds(base: u64, p: usize, rho: f64, n: usize, rep: usize) -> (u64, u64, u64) {
    let graph = derive_seed(base, &[p as u64, rho.to_bits(), rep as u64]);
    let data = derive_seed(graph, &[n as u64, 1]);
    let split = derive_seed(graph, &[n as u64, 2]);
    (graph, data, split)
}

/// Runs the full pipeline for one replication.
pub fn run_replication(
    cfg: &ExperimentConfig,
    p: usize,
    rho: f64,
    n: usize,
    rep: usize,
) -> Result<ReplicationOutcome> {
    let start = Instant::now();
    let (graph_seed, data_seed, split_seed) = replication_seeds(cfg.base_seed, p, rho, n, rep);
    let synth = SynthConfig {
        p,
        rho,
        coef: cfg.coef,
        sigma: cfg.sigma,
        seed: graph_seed,
    };
    let a0 = generate_true_dag(&synth)?;
    let x = sample_data(&a0, cfg.sigma, n, data_seed)?;
    let omega0 = true_precision(&a0, cfg.sigma)?;
    let truth = support_dag(&a0)?;

    let mut search = SearchConfig::new(cfg.m_candidates, split_seed);
    if cfg.plant_true {
        search = search.with_initializer(Initializer::UserSupplied(truth.clone()));
    }
    let candidates = build_candidates(&x, &search)?;
    let averaging = model_average(&x, &candidates, &AveragingConfig::with_lambda(cfg.lambda_rule))?;
    let taxonomy = classify_candidates(&candidates, &a0)?;
    let gram = &averaging.solution.gram;

    let candidate_metrics = candidates
        .models()
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let s2 = sigma2_from_rss(gram[(m, m)], n, p, c.k())?;
            evaluate(&x, &a0, &omega0, &c.coef, s2)
        })
        .collect::<Result<Vec<_>>>()?;

    let seconds = cfg.record_timing.then(|| start.elapsed().as_secs_f64());
    let record = |method, metrics, weights| RunRecord {
        p,
        rho,
        n,
        rep,
        method,
        metrics,
        weights,
        seconds,
    };

    let (underfit, smallest_correct, overfit) = taxonomy.weight_sums(averaging.solution.w.as_slice());
    let mut records = vec![record(
        Method::DagMa,
        evaluate(&x, &a0, &omega0, &averaging.a_hat, averaging.sigma2_hat)?,
        Some(WeightSummary {
            underfit,
            smallest_correct,
            overfit,
        }),
    )];
    for &baseline in &cfg.baselines {
        let metrics = match baseline {
            Method::LargestCandidate => candidate_metrics[candidates.len() - 1],
            Method::InitialGraph => candidate_metrics[candidates.initial_index()],
            Method::OracleTrueGraph => {
                let fit = fit_edgeset(&x, &truth)?;
                let s2 = sigma2_from_rss(fit.rss, n, p, truth.len())?;
                evaluate(&x, &a0, &omega0, &fit.a_hat, s2)?
            }
            Method::DagMa => unreachable!("rejected by validate"),
        };
        records.push(record(baseline, metrics, None));
    }

    Ok(ReplicationOutcome {
        a0,
        candidates,
        averaging,
        taxonomy,
        records,
        candidate_metrics,
    })
}

/// `(p, ρ, n, rep)`.
pub type Cell = (usize, f64, usize, usize);

/// One grid cell with its outcome or error message.
pub type CellResult<T> = (Cell, std::result::Result<T, String>);

fn grid(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut jobs = Vec::new();
    for &p in &cfg.p_list {
        for &rho in &cfg.rho_list {
            for &n in &cfg.n_list {
                for rep in 0..cfg.reps {
                    jobs.push((p, rho, n, rep));
                }
            }
        }
    }
    jobs
}

/// Runs every cell of the grid and keeps whatever `keep` extracts.
pub fn sweep<T: Send>(
    cfg: &ExperimentConfig,
    keep: impl Fn(ReplicationOutcome) -> T + Sync,
) -> Result<Vec<CellResult<T>>> {
    cfg.validate()?;
    let jobs = grid(cfg);
    Ok(jobs
        .into_par_iter()
        .map(|(p, rho, n, rep)| {
            let out = run_replication(cfg, p, rho, n, rep)
                .map(&keep)
                .map_err(|e| e.to_string());
            ((p, rho, n, rep), out)
        })
        .collect())
}

fn collect(results: Vec<CellResult<Vec<RunRecord>>>) -> SweepResult {
    let mut out = SweepResult::default();
    for ((p, rho, n, rep), r) in results {
        match r {
            Ok(records) => out.records.extend(records),
            Err(error) => out.failures.push(ReplicationFailure {
                p,
                rho,
                n,
                rep,
                error,
            }),
        }
    }
    out.records.sort_by_key(RunRecord::sort_key);
    out.failures
        .sort_by_key(|f| (f.p, f.rho.to_bits(), f.n, f.rep));
    out
}

/// The simulation study: the averaged estimator plus the configured baselines
/// for every grid cell. Failed replications are reported, not fatal.
pub fn run_simulation(cfg: &ExperimentConfig) -> Result<SweepResult> {
    Ok(collect(sweep(cfg, |o| o.records)?))
}

/// Weight-consistency study: only the averaged estimator is recorded.
/// Set `plant_true` so the candidate set contains a correctly specified model.
pub fn run_weight_consistency(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let cfg = ExperimentConfig {
        baselines: Vec::new(),
        ..cfg.clone()
    };
    Ok(collect(sweep(&cfg, |o| o.records)?))
}
