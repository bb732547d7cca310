//! Shared domain types: edge sets, coefficient and data matrices, nested
//! candidate sets, simplex weights and precision matrices.
//!
//! Nodes are 0-based everywhere in the library. An edge `(k, j)` points from
//! parent `k` to child `j` and corresponds to the matrix entry `A[(k, j)]`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance on `|Σ w - 1|` for a [`WeightVector`].
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Tolerance on `|Ω - Ωᵀ|` for a [`PrecisionMatrix`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Directed edge set over `p` nodes, stored as a sorted pair list.
///
/// Construction through [`Dag::new`] enforces every invariant. The unchecked
/// constructor exists so that graphs read from matrices or user input can be
/// inspected with [`validate_dag`] before use.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    p: usize,
    edges: Vec<(usize, usize)>,
}

impl Dag {
    pub fn empty(p: usize) -> Self {
        Dag {
            p,
            edges: Vec::new(),
        }
    }

    /// Builds a graph and rejects self-loops, duplicates, out-of-range
    /// indices and directed cycles.
    pub fn new(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let dag = Self::from_edges_unchecked(p, edges);
        if p == 0 {
            return Err(Error::InvalidInput("graph needs at least one node".into()));
        }
        if let Some(&(k, j)) = dag.edges.iter().find(|&&(k, j)| k >= p || j >= p) {
            return Err(Error::InvalidInput(format!(
                "edge ({k}, {j}) out of range for {p} nodes"
            )));
        }
        if let Some(&(k, _)) = dag.edges.iter().find(|&&(k, j)| k == j) {
            return Err(Error::InvalidInput(format!("self-loop at node {k}")));
        }
        if dag.edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate edge".into()));
        }
        if dag.topological_order().is_none() {
            return Err(Error::Cyclic);
        }
        Ok(dag)
    }

    /// Sorts the edges but performs no other validation.
    pub fn from_edges_unchecked(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut edges: Vec<_> = edges.into_iter().collect();
        edges.sort_unstable();
        Dag { p, edges }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, k: usize, j: usize) -> bool {
        self.edges.binary_search(&(k, j)).is_ok()
    }

    /// Parents of node `j` in increasing order.
    pub fn parents(&self, j: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, c)| c == j)
            .map(|&(k, _)| k)
            .collect()
    }

    /// Parent lists for every node.
    pub fn parent_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.p];
        for &(k, j) in &self.edges {
            if j < self.p {
                sets[j].push(k);
            }
        }
        sets
    }

    pub fn is_subset_of(&self, other: &Dag) -> bool {
        self.edges.iter().all(|&(k, j)| other.contains(k, j))
    }

    /// Kahn's algorithm, always releasing the smallest ready index first.
    /// Returns `None` when the edges contain a cycle or an out-of-range node.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let p = self.p;
        let mut indeg = vec![0usize; p];
        let mut children = vec![Vec::new(); p];
        for &(k, j) in &self.edges {
            if k >= p || j >= p {
                return None;
            }
            indeg[j] += 1;
            children[k].push(j);
        }
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..p).filter(|&v| indeg[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(p);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        (order.len() == p).then_some(order)
    }

    /// True if `to` can be reached from `from` along directed edges.
    pub fn has_path(&self, from: usize, to: usize) -> bool {
        let mut children = vec![Vec::new(); self.p];
        for &(k, j) in &self.edges {
            children[k].push(j);
        }
        let mut seen = vec![false; self.p];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(children[v].iter().copied().filter(|&c| !seen[c]));
        }
        false
    }

    /// Whether adding `k -> j` keeps the graph acyclic.
    pub fn can_add(&self, k: usize, j: usize) -> bool {
        k != j && !self.contains(k, j) && !self.has_path(j, k)
    }

    pub fn with_edge(&self, k: usize, j: usize) -> Dag {
        let mut edges = self.edges.clone();
        if let Err(pos) = edges.binary_search(&(k, j)) {
            edges.insert(pos, (k, j));
        }
        Dag { p: self.p, edges }
    }

    pub fn without_edge(&self, k: usize, j: usize) -> Dag {
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|&e| e != (k, j))
            .collect();
        Dag { p: self.p, edges }
    }
}

/// True iff the edge set has no self-loops, duplicates or out-of-range
/// indices and admits a topological order.
pub fn validate_dag(d: &Dag) -> bool {
    d.p >= 1
        && d.edges.iter().all(|&(k, j)| k != j && k < d.p && j < d.p)
        && d.edges.windows(2).all(|w| w[0] != w[1])
        && d.topological_order().is_some()
}

/// Weighted adjacency matrix `A`; `A[(k, j)]` is the coefficient of edge `k -> j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefMatrix {
    values: DMatrix<f64>,
}

impl CoefMatrix {
    pub fn zeros(p: usize) -> Self {
        CoefMatrix {
            values: DMatrix::zeros(p, p),
        }
    }

    /// Checked constructor: square, finite, zero diagonal, acyclic support.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let a = Self::from_raw(values)?;
        let support = support_dag(&a)?;
        if support.topological_order().is_none() {
            return Err(Error::Cyclic);
        }
        Ok(a)
    }

    /// Only checks shape and finiteness.
    pub fn from_raw(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() || values.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "coefficient matrix must be square and nonempty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("coefficient matrix has non-finite entries".into()));
        }
        Ok(CoefMatrix { values })
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[(k, j)]
    }

    /// `I - A`.
    pub fn i_minus(&self) -> DMatrix<f64> {
        DMatrix::identity(self.p(), self.p()) - &self.values
    }
}

/// Edge set of the nonzero pattern of `a`. Acyclicity is not checked here.
pub fn support_dag(a: &CoefMatrix) -> Result<Dag> {
    let p = a.p();
    if let Some(j) = (0..p).find(|&j| a.get(j, j) != 0.0) {
        return Err(Error::NonZeroDiagonal(j));
    }
    let edges = (0..p)
        .flat_map(|k| (0..p).map(move |j| (k, j)))
        .filter(|&(k, j)| a.get(k, j) != 0.0);
    Ok(Dag::from_edges_unchecked(p, edges))
}

/// `n x p` observation matrix, rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 1 {
            return Err(Error::InvalidInput(format!(
                "data matrix needs n >= 2 and p >= 1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("data matrix has non-finite entries".into()));
        }
        Ok(DataMatrix { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Rows in the given order. Callers keep at least two rows.
    pub fn select_rows(&self, rows: &[usize]) -> Result<DataMatrix> {
        DataMatrix::new(self.values.select_rows(rows.iter()))
    }

    /// `XᵀX / n`, the uncentered sample covariance.
    pub fn second_moment(&self) -> DMatrix<f64> {
        self.values.tr_mul(&self.values) / self.n() as f64
    }
}

/// One fitted member of a [`CandidateSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub edges: Dag,
    pub coef: CoefMatrix,
}

impl Candidate {
    pub fn k(&self) -> usize {
        self.edges.len()
    }
}

/// Strictly nested fitted candidate models, smallest first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    models: Vec<Candidate>,
    initial_index: usize,
}

impl CandidateSet {
    pub fn new(models: Vec<Candidate>, initial_index: usize) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidInput("candidate set is empty".into()));
        }
        if initial_index >= models.len() {
            return Err(Error::InvalidInput("initial index out of range".into()));
        }
        for (m, c) in models.iter().enumerate() {
            if !validate_dag(&c.edges) {
                return Err(Error::InvalidInput(format!("candidate {m} is not a valid DAG")));
            }
            let support = support_dag(&c.coef)?;
            if !support.is_subset_of(&c.edges) {
                return Err(Error::InvalidInput(format!(
                    "candidate {m} has coefficients outside its edge set"
                )));
            }
        }
        for (m, pair) in models.windows(2).enumerate() {
            if !(pair[0].edges.is_subset_of(&pair[1].edges) && pair[0].k() < pair[1].k()) {
                return Err(Error::InvalidInput(format!(
                    "candidates {m} and {} are not strictly nested",
                    m + 1
                )));
            }
        }
        Ok(CandidateSet {
            models,
            initial_index,
        })
    }

    pub fn models(&self) -> &[Candidate] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Edge counts `k_m`.
    pub fn k(&self) -> Vec<usize> {
        self.models.iter().map(Candidate::k).collect()
    }

    pub fn largest(&self) -> &Candidate {
        self.models.last().expect("nonempty by construction")
    }

    /// Position of the search's starting graph.
    pub fn initial_index(&self) -> usize {
        self.initial_index
    }
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
}

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidInput("weight vector is empty".into()));
        }
        if w.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidInput("weights must lie in [0, 1]".into()));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(WeightVector { w })
    }

    /// The vertex `e_index` of the simplex.
    pub fn vertex(len: usize, index: usize) -> Self {
        let mut w = vec![0.0; len];
        w[index] = 1.0;
        WeightVector { w }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Symmetric positive definite `p x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    values: DMatrix<f64>,
}

impl PrecisionMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() || values.nrows() == 0 {
            return Err(Error::InvalidInput("precision matrix must be square".into()));
        }
        let asym = (&values - values.transpose()).abs().max();
        if !(asym <= SYMMETRY_TOL) {
            return Err(Error::NotSymmetric(asym));
        }
        if values.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: smallest_eigenvalue(&values),
            });
        }
        Ok(PrecisionMatrix { values })
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

pub(crate) fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_examples() {
        assert!(validate_dag(&Dag::from_edges_unchecked(2, [(0, 1)])));
        assert!(!validate_dag(&Dag::from_edges_unchecked(2, [(0, 1), (1, 0)])));
        assert!(!validate_dag(&Dag::from_edges_unchecked(3, [(0, 1), (1, 2), (2, 0)])));
        assert!(!validate_dag(&Dag::from_edges_unchecked(2, [(1, 1)])));
        assert!(!validate_dag(&Dag::from_edges_unchecked(2, [(0, 1), (0, 1)])));
        assert!(!validate_dag(&Dag::from_edges_unchecked(2, [(0, 2)])));
    }

    #[test]
    fn checked_constructor_rejects_cycles() {
        assert!(matches!(Dag::new(2, [(0, 1), (1, 0)]), Err(Error::Cyclic)));
        assert!(Dag::new(3, [(2, 0), (1, 0), (2, 1)]).is_ok());
    }

    #[test]
    fn support_examples() {
        assert!(support_dag(&CoefMatrix::zeros(3)).unwrap().is_empty());

        let mut v = DMatrix::zeros(2, 2);
        v[(0, 1)] = 0.5;
        let d = support_dag(&CoefMatrix::from_raw(v).unwrap()).unwrap();
        assert_eq!(d.edges(), &[(0, 1)]);

        let mut v = DMatrix::zeros(3, 3);
        v[(0, 1)] = 0.5;
        v[(0, 2)] = 0.5;
        v[(1, 2)] = 0.5;
        let d = support_dag(&CoefMatrix::from_raw(v).unwrap()).unwrap();
        assert_eq!(d.len(), 3);
        assert!(validate_dag(&d));
    }

    #[test]
    fn support_rejects_diagonal() {
        let mut v = DMatrix::zeros(2, 2);
        v[(1, 1)] = 1.0;
        let a = CoefMatrix::from_raw(v).unwrap();
        assert!(matches!(support_dag(&a), Err(Error::NonZeroDiagonal(1))));
    }

    #[test]
    fn topological_order_is_deterministic() {
        let d = Dag::new(4, [(3, 0), (2, 0), (3, 1)]).unwrap();
        assert_eq!(d.topological_order().unwrap(), vec![2, 3, 0, 1]);
    }

    #[test]
    fn can_add_detects_cycles() {
        let d = Dag::new(3, [(0, 1), (1, 2)]).unwrap();
        assert!(!d.can_add(2, 0));
        assert!(!d.can_add(0, 1));
        assert!(!d.can_add(1, 1));
        assert!(d.can_add(0, 2));
    }

    #[test]
    fn weight_vector_checks() {
        assert!(WeightVector::new(vec![0.25, 0.75]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn precision_checks() {
        assert!(PrecisionMatrix::new(DMatrix::identity(3, 3)).is_ok());
        let err = PrecisionMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        match err {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = PrecisionMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]));
        assert!(matches!(err, Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn nesting_is_enforced() {
        let c = |edges: &[(usize, usize)]| Candidate {
            edges: Dag::new(3, edges.iter().copied()).unwrap(),
            coef: CoefMatrix::zeros(3),
        };
        assert!(CandidateSet::new(vec![c(&[]), c(&[(0, 1)]), c(&[(0, 1), (1, 2)])], 1).is_ok());
        assert!(CandidateSet::new(vec![c(&[(0, 1)]), c(&[(1, 2), (0, 2)])], 0).is_err());
        assert!(CandidateSet::new(vec![c(&[(0, 1)]), c(&[(0, 1)])], 0).is_err());
    }
}
