//! Nested candidate generation by greedy forward/backward search.
//!
//! The data is split into training and validation halves. Starting from an
//! initial graph, the forward phase repeatedly adds the acyclicity-preserving
//! edge that maximizes the validation log-likelihood and the backward phase
//! repeatedly removes the edge whose removal maximizes it. Every resulting
//! edge set is then refit on the full sample.
//!
//! Changing one edge only changes one column of `Â`, so the search keeps
//! per-node training and validation residual sums and refits a single node
//! per proposal. [`validation_score`] is the from-scratch equivalent.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{fit_edgeset, fit_node};
use crate::seed::rng_from_seed;
use crate::types::{validate_dag, Candidate, CandidateSet, DataMatrix, Dag};

#[derive(Debug, Clone, PartialEq)]
pub enum Initializer {
    /// Use this graph verbatim as the centre candidate.
    UserSupplied(Dag),
    /// Equal-variance ordering plus BIC hill climbing on the training half.
    GreedyBic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub m_candidates: usize,
    pub split_seed: u64,
    pub initializer: Initializer,
    pub max_parents: Option<usize>,
}

impl SearchConfig {
    pub fn new(m_candidates: usize, split_seed: u64) -> Self {
        SearchConfig {
            m_candidates,
            split_seed,
            initializer: Initializer::GreedyBic,
            max_parents: None,
        }
    }

    pub fn with_initializer(mut self, initializer: Initializer) -> Self {
        self.initializer = initializer;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.m_candidates < 1 {
            return Err(Error::InvalidInput("need at least one candidate".into()));
        }
        if let Initializer::UserSupplied(d) = &self.initializer {
            if d.p() != p {
                return Err(Error::InvalidInput(format!(
                    "initial graph has {} nodes, data has {p}",
                    d.p()
                )));
            }
            if !validate_dag(d) {
                return Err(Error::Cyclic);
            }
        }
        Ok(())
    }

    /// 0-based position of the initial graph, `⌈M/2⌉ - 1`.
    pub fn center_index(&self) -> usize {
        self.m_candidates.div_ceil(2) - 1
    }

    pub fn forward_steps(&self) -> usize {
        (self.m_candidates - 1).div_ceil(2)
    }

    pub fn backward_steps(&self) -> usize {
        self.m_candidates.div_ceil(2) - 1
    }
}

/// Random disjoint split into halves of sizes `⌊n/2⌋` (training) and
/// `⌈n/2⌉` (validation). Rows keep their original relative order.
pub fn split_data(x: &DataMatrix, seed: u64) -> Result<(DataMatrix, DataMatrix)> {
    let n = x.n();
    if n < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 rows to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let (train, valid) = idx.split_at_mut(n / 2);
    train.sort_unstable();
    valid.sort_unstable();
    Ok((x.select_rows(train)?, x.select_rows(valid)?))
}

fn bic(rss: f64, n: usize, p: usize, edges: usize) -> f64 {
    let np = (n * p) as f64;
    np * (rss / np).ln() + (n as f64).ln() * edges as f64
}

fn within_cap(cap: Option<usize>, current: usize) -> bool {
    cap.is_none_or(|c| current < c)
}

/// The search's starting graph.
pub fn initial_graph(train: &DataMatrix, cfg: &SearchConfig) -> Result<Dag> {
    cfg.validate(train.p())?;
    match &cfg.initializer {
        Initializer::UserSupplied(d) => Ok(d.clone()),
        Initializer::GreedyBic => greedy_bic(train, cfg.max_parents),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Add(usize, usize),
    Remove(usize, usize),
    Reverse(usize, usize),
}

/// Hill climbing on the equal-variance BIC over single-edge additions,
/// removals and reversals, restricted to edges accepted by `allowed`.
/// Proposals that cannot be fitted are skipped; ties keep the first proposal
/// in the order additions, removals, reversals, each lexicographic.
fn hill_climb(
    train: &DataMatrix,
    max_parents: Option<usize>,
    start: Dag,
    allowed: &(dyn Fn(usize, usize) -> bool + Sync),
) -> Result<Dag> {
    let (n, p) = (train.n(), train.p());
    let xv = train.values();
    let mut dag = start;
    let mut parents = dag.parent_sets();
    let mut node_rss = (0..p)
        .map(|j| fit_node(xv, j, &parents[j]).map(|f| f.rss))
        .collect::<Result<Vec<_>>>()?;
    let mut current = bic(node_rss.iter().sum(), n, p, dag.len());
    let room = |pa: &[usize]| within_cap(max_parents, pa.len()) && pa.len() + 1 < n;

    loop {
        let total: f64 = node_rss.iter().sum();
        let mut proposals: Vec<Move> = all_pairs(p)
            .filter(|&(k, j)| allowed(k, j) && dag.can_add(k, j) && room(&parents[j]))
            .map(|(k, j)| Move::Add(k, j))
            .collect();
        proposals.extend(dag.edges().iter().map(|&(k, j)| Move::Remove(k, j)));
        proposals.extend(
            dag.edges()
                .iter()
                .filter(|&&(k, j)| allowed(j, k) && room(&parents[k]) && dag.without_edge(k, j).can_add(j, k))
                .map(|&(k, j)| Move::Reverse(k, j)),
        );

        type Update = ((usize, Vec<usize>, f64), Option<(usize, Vec<usize>, f64)>);
        let scored: Vec<Option<(f64, Update)>> = proposals
            .par_iter()
            .map(|&mv| {
                let refit = |j: usize, pa: Vec<usize>| fit_node(xv, j, &pa).ok().map(|f| (j, pa, f.rss));
                let without = |j: usize, k: usize| parents[j].iter().copied().filter(|&q| q != k).collect();
                let (first, second, edges) = match mv {
                    Move::Add(k, j) => (refit(j, insert_sorted(&parents[j], k))?, None, dag.len() + 1),
                    Move::Remove(k, j) => (refit(j, without(j, k))?, None, dag.len() - 1),
                    Move::Reverse(k, j) => (
                        refit(j, without(j, k))?,
                        Some(refit(k, insert_sorted(&parents[k], j))?),
                        dag.len(),
                    ),
                };
                let mut rss = total - node_rss[first.0] + first.2;
                if let Some(s) = &second {
                    rss += s.2 - node_rss[s.0];
                }
                Some((bic(rss, n, p, edges), (first, second)))
            })
            .collect();

        let mut best: Option<(Move, f64, &Update)> = None;
        for (&mv, s) in proposals.iter().zip(&scored) {
            if let Some((score, update)) = s {
                if score.is_finite() && best.is_none_or(|(_, b, _)| *score < b) {
                    best = Some((mv, *score, update));
                }
            }
        }
        match best {
            Some((mv, score, (first, second))) if score < current => {
                dag = match mv {
                    Move::Add(k, j) => dag.with_edge(k, j),
                    Move::Remove(k, j) => dag.without_edge(k, j),
                    Move::Reverse(k, j) => dag.without_edge(k, j).with_edge(j, k),
                };
                for (j, pa, rss) in std::iter::once(first).chain(second.as_ref()) {
                    parents[*j] = pa.clone();
                    node_rss[*j] = *rss;
                }
                current = score;
            }
            _ => return Ok(dag),
        }
    }
}

/// Causal order under equal noise variances: repeatedly take the node with
/// the smallest residual sum of squares given the nodes already ordered.
fn variance_order(train: &DataMatrix, max_parents: Option<usize>) -> Result<Vec<usize>> {
    let (n, p) = (train.n(), train.p());
    let xv = train.values();
    let mut order: Vec<usize> = Vec::with_capacity(p);
    let mut rest: Vec<usize> = (0..p).collect();
    while !rest.is_empty() {
        let mut given = order.clone();
        given.sort_unstable();
        // conditioning set capped so the regressions stay well posed
        let cap = max_parents.unwrap_or(usize::MAX).min(n.saturating_sub(2));
        if given.len() > cap {
            given.truncate(cap);
        }
        let rss: Vec<f64> = rest
            .par_iter()
            .map(|&j| fit_node(xv, j, &given).map_or(f64::INFINITY, |f| f.rss))
            .collect();
        let mut best = 0;
        for i in 1..rest.len() {
            if rss[i] < rss[best] {
                best = i;
            }
        }
        order.push(rest.remove(best));
    }
    Ok(order)
}

/// Order-restricted BIC search seeded by [`variance_order`], followed by an
/// unrestricted pass.
fn greedy_bic(train: &DataMatrix, max_parents: Option<usize>) -> Result<Dag> {
    let p = train.p();
    let order = variance_order(train, max_parents)?;
    let mut rank = vec![0; p];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r;
    }
    let ordered = hill_climb(train, max_parents, Dag::empty(p), &|k, j| rank[k] < rank[j])?;
    hill_climb(train, max_parents, ordered, &|_, _| true)
}

fn all_pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |k| (0..p).filter(move |&j| j != k).map(move |j| (k, j)))
}

fn insert_sorted(v: &[usize], x: usize) -> Vec<usize> {
    let mut out = v.to_vec();
    if let Err(pos) = out.binary_search(&x) {
        out.insert(pos, x);
    }
    out
}

/// First proposal (in lexicographic order) whose score strictly beats every
/// earlier one under `better`.
fn argbest<T: Copy>(
    proposals: &[(usize, usize)],
    scored: &[Option<(f64, T)>],
    better: impl Fn(f64, f64) -> bool,
) -> Option<((usize, usize), (f64, T))> {
    let mut best: Option<((usize, usize), (f64, T))> = None;
    for (&e, s) in proposals.iter().zip(scored) {
        if let Some((score, extra)) = *s {
            if score.is_nan() {
                continue;
            }
            if best.is_none_or(|(_, (b, _))| better(score, b)) {
                best = Some((e, (score, extra)));
            }
        }
    }
    best
}

fn validation_loglik(rss_train: f64, rss_valid: f64, n_train: usize, n_valid: usize, p: usize) -> f64 {
    let sigma2 = rss_train / (n_train * p) as f64;
    let nvp = (n_valid * p) as f64;
    -(nvp / 2.0) * (2.0 * std::f64::consts::PI * sigma2).ln() - rss_valid / (2.0 * sigma2)
}

/// Fits `e` on the training half and returns the Gaussian log-likelihood of
/// the validation half, with `σ̃² = rss_train / (n_t p)` and the validation
/// covariance taken as `X_vᵀX_v / n_v`. Higher is better.
pub fn validation_score(train: &DataMatrix, valid: &DataMatrix, e: &Dag) -> Result<f64> {
    let fit = fit_edgeset(train, e)?;
    let xv = valid.values();
    let rss_valid = (xv - xv * fit.a_hat.values()).norm_squared();
    Ok(validation_loglik(fit.rss, rss_valid, train.n(), valid.n(), train.p()))
}

/// Per-node sufficient state for incremental validation scoring.
struct SearchState<'a> {
    train: &'a DMatrix<f64>,
    valid: &'a DMatrix<f64>,
    dag: Dag,
    parents: Vec<Vec<usize>>,
    rss_train: Vec<f64>,
    rss_valid: Vec<f64>,
}

impl<'a> SearchState<'a> {
    fn new(train: &'a DataMatrix, valid: &'a DataMatrix, dag: Dag) -> Result<Self> {
        let parents = dag.parent_sets();
        let mut state = SearchState {
            train: train.values(),
            valid: valid.values(),
            dag,
            rss_train: vec![0.0; parents.len()],
            rss_valid: vec![0.0; parents.len()],
            parents,
        };
        for j in 0..state.parents.len() {
            let (t, v) = state.node_rss(j, &state.parents[j])?;
            state.rss_train[j] = t;
            state.rss_valid[j] = v;
        }
        Ok(state)
    }

    fn node_rss(&self, j: usize, parents: &[usize]) -> Result<(f64, f64)> {
        let fit = fit_node(self.train, j, parents)?;
        let mut resid = self.valid.column(j).into_owned();
        for (&k, &c) in parents.iter().zip(&fit.coefs) {
            resid.axpy(-c, &self.valid.column(k), 1.0);
        }
        Ok((fit.rss, resid.norm_squared()))
    }

    fn score_with(&self, j: usize, t: f64, v: f64) -> f64 {
        let total_t: f64 = self.rss_train.iter().sum::<f64>() - self.rss_train[j] + t;
        let total_v: f64 = self.rss_valid.iter().sum::<f64>() - self.rss_valid[j] + v;
        validation_loglik(total_t, total_v, self.train.nrows(), self.valid.nrows(), self.parents.len())
    }

    fn apply(&mut self, j: usize, parents: Vec<usize>, dag: Dag, (t, v): (f64, f64)) {
        self.parents[j] = parents;
        self.dag = dag;
        self.rss_train[j] = t;
        self.rss_valid[j] = v;
    }

    fn forward(&mut self, max_parents: Option<usize>) -> Option<()> {
        let n_train = self.train.nrows();
        let proposals: Vec<(usize, usize)> = all_pairs(self.parents.len())
            .filter(|&(k, j)| {
                self.dag.can_add(k, j)
                    && within_cap(max_parents, self.parents[j].len())
                    && self.parents[j].len() + 1 < n_train
            })
            .collect();
        let scored: Vec<Option<(f64, (f64, f64))>> = proposals
            .par_iter()
            .map(|&(k, j)| {
                let pa = insert_sorted(&self.parents[j], k);
                let rss = self.node_rss(j, &pa).ok()?;
                Some((self.score_with(j, rss.0, rss.1), rss))
            })
            .collect();
        let ((k, j), (_, rss)) = argbest(&proposals, &scored, |a, b| a > b)?;
        let pa = insert_sorted(&self.parents[j], k);
        let dag = self.dag.with_edge(k, j);
        self.apply(j, pa, dag, rss);
        Some(())
    }

    fn backward(&mut self) -> Option<()> {
        let proposals = self.dag.edges().to_vec();
        let scored: Vec<Option<(f64, (f64, f64))>> = proposals
            .par_iter()
            .map(|&(k, j)| {
                let pa: Vec<usize> = self.parents[j].iter().copied().filter(|&q| q != k).collect();
                let rss = self.node_rss(j, &pa).ok()?;
                Some((self.score_with(j, rss.0, rss.1), rss))
            })
            .collect();
        let ((k, j), (_, rss)) = argbest(&proposals, &scored, |a, b| a > b)?;
        let pa = self.parents[j].iter().copied().filter(|&q| q != k).collect();
        let dag = self.dag.without_edge(k, j);
        self.apply(j, pa, dag, rss);
        Some(())
    }
}

/// Nested edge sets `E^(1) ⊂ … ⊂ E^(M)` before the full-sample refit.
pub fn search_edge_sets(x: &DataMatrix, cfg: &SearchConfig) -> Result<Vec<Dag>> {
    cfg.validate(x.p())?;
    let (train, valid) = split_data(x, cfg.split_seed)?;
    let init = initial_graph(&train, cfg)?;
    let m = cfg.m_candidates;
    let center = cfg.center_index();

    let mut sets = vec![None; m];
    sets[center] = Some(init.clone());

    let mut state = SearchState::new(&train, &valid, init.clone())?;
    for i in 1..=cfg.forward_steps() {
        state.forward(cfg.max_parents).ok_or(Error::SearchExhausted {
            phase: "forward",
            built: i,
            requested: m,
        })?;
        sets[center + i] = Some(state.dag.clone());
    }

    let mut state = SearchState::new(&train, &valid, init)?;
    for i in 1..=cfg.backward_steps() {
        state.backward().ok_or(Error::SearchExhausted {
            phase: "backward",
            built: cfg.forward_steps() + i,
            requested: m,
        })?;
        sets[center - i] = Some(state.dag.clone());
    }

    Ok(sets.into_iter().map(|s| s.expect("every slot filled")).collect())
}

/// Runs the search and refits every candidate on the full sample.
pub fn build_candidates(x: &DataMatrix, cfg: &SearchConfig) -> Result<CandidateSet> {
    let sets = search_edge_sets(x, cfg)?;
    let models = sets
        .into_iter()
        .map(|edges| {
            let fit = fit_edgeset(x, &edges)?;
            Ok(Candidate {
                edges,
                coef: fit.a_hat,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CandidateSet::new(models, cfg.center_index())
}
