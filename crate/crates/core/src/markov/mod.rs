//! Finite discrete-time Markov chains: labelled state spaces, row-stochastic
//! transition matrices and their stationary distributions.
//!
//! Matrices are kept in compressed-row form. The chains built in this crate
//! are banded (a tandem with buffers `M1`, `M2` has `(M1+1)(M2+1)` states and
//! bandwidth `M2+2`), so the direct solver works in band storage and its memory
//! is `n * (lower + upper + 1)` doubles rather than `n^2`.

mod solve;

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;
use std::sync::Arc;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::error::{Error, Result};

pub use solve::{
    solve_steady_state, solve_steady_state_direct, solve_steady_state_evd,
    solve_steady_state_iterative, DIRECT_BAND_BUDGET, RESIDUAL_TOL, UNIT_EIGENVALUE_TOL,
};

/// Tolerance on `|row sum - 1|` accepted by [`TransitionMatrix`].
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance on `|sum(pi) - 1|` accepted by [`SteadyState`].
pub const NORMALIZATION_TOL: f64 = 1e-10;

pub trait StateLabel: Clone + Eq + Hash + Debug + Send + Sync + 'static {}
impl<T: Clone + Eq + Hash + Debug + Send + Sync + 'static> StateLabel for T {}

/// Bijection between state labels and row indices.
#[derive(Debug, Clone)]
pub struct StateSpace<L> {
    labels: Vec<L>,
    index: HashMap<L, usize>,
}

impl<L: StateLabel> StateSpace<L> {
    pub fn new(labels: Vec<L>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("state space must not be empty"));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate state label {label:?}")));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> &L {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    pub fn index_of(&self, label: &L) -> Option<usize> {
        self.index.get(label).copied()
    }
}

impl StateSpace<usize> {
    /// States `0..=max`.
    pub fn scalar(max: usize) -> Self {
        Self::new((0..=max).collect()).expect("distinct labels")
    }
}

impl StateSpace<(usize, usize)> {
    /// Level-major grid `(i, j)`, `0 <= i <= levels`, `0 <= j <= phases`.
    pub fn level_major(levels: usize, phases: usize) -> Self {
        let labels = (0..=levels)
            .flat_map(|i| (0..=phases).map(move |j| (i, j)))
            .collect();
        Self::new(labels).expect("distinct labels")
    }
}

/// Row-stochastic matrix over a labelled state space.
#[derive(Debug, Clone)]
pub struct TransitionMatrix<L> {
    space: Arc<StateSpace<L>>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl<L: StateLabel> TransitionMatrix<L> {
    /// Builds a matrix from per-row `(column, probability)` lists. Repeated
    /// columns within a row are summed and exact zeros are dropped.
    pub fn from_rows(space: impl Into<Arc<StateSpace<L>>>, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let space = space.into();
        let n = space.len();
        if rows.len() != n {
            return Err(Error::invalid(format!(
                "{} rows supplied for {} states",
                rows.len(),
                n
            )));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            let start = cols.len();
            for (c, v) in row {
                if c >= n {
                    return Err(Error::invalid(format!("column {c} out of range in row {i}")));
                }
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::NotStochastic(format!("entry ({i}, {c}) = {v}")));
                }
                if v == 0.0 {
                    continue;
                }
                if cols.len() > start && cols[cols.len() - 1] == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            let sum: f64 = vals[start..].iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic(format!(
                    "row {i} ({:?}) sums to {sum:.17}",
                    space.label(i)
                )));
            }
            if let Some(&v) = vals[start..].iter().find(|&&v| v > 1.0 + ROW_SUM_TOL) {
                return Err(Error::NotStochastic(format!("row {i} has entry {v} > 1")));
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            space,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn from_dense(space: impl Into<Arc<StateSpace<L>>>, dense: &[Vec<f64>]) -> Result<Self> {
        let rows = dense
            .iter()
            .map(|r| r.iter().copied().enumerate().collect())
            .collect();
        Self::from_rows(space, rows)
    }

    pub fn n_states(&self) -> usize {
        self.space.len()
    }

    pub fn space(&self) -> &Arc<StateSpace<L>> {
        &self.space
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzero entries of row `i` in increasing column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Entry by labels; zero when either label is unknown.
    pub fn get_by_label(&self, from: &L, to: &L) -> f64 {
        match (self.space.index_of(from), self.space.index_of(to)) {
            (Some(i), Some(j)) => self.get(i, j),
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n_states();
        let mut out = vec![vec![0.0; n]; n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    /// `(lower, upper)` bandwidths: largest `i - j` and `j - i` over nonzeros.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for i in 0..self.n_states() {
            for (j, _) in self.row(i) {
                if j < i {
                    lower = lower.max(i - j);
                } else {
                    upper = upper.max(j - i);
                }
            }
        }
        (lower, upper)
    }

    /// One transition step of a row vector: `pi * P`.
    pub fn step(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states()];
        for (i, &w) in pi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (j, v) in self.row(i) {
                out[j] += w * v;
            }
        }
        out
    }

    /// `||pi P - pi||_inf`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        self.step(pi)
            .iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Closed communicating classes (recurrent classes), each as sorted
    /// state indices.
    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        let n = self.n_states();
        let mut graph = DiGraph::<(), ()>::with_capacity(n, self.nnz());
        for _ in 0..n {
            graph.add_node(());
        }
        for i in 0..n {
            for (j, _) in self.row(i) {
                if i != j {
                    graph.add_edge(NodeIndex::new(i), NodeIndex::new(j), ());
                }
            }
        }
        let sccs = tarjan_scc(&graph);
        let mut component = vec![0usize; n];
        for (k, scc) in sccs.iter().enumerate() {
            for node in scc {
                component[node.index()] = k;
            }
        }
        let mut closed = vec![true; sccs.len()];
        for i in 0..n {
            for (j, _) in self.row(i) {
                if component[i] != component[j] {
                    closed[component[i]] = false;
                }
            }
        }
        let mut classes: Vec<Vec<usize>> = sccs
            .into_iter()
            .enumerate()
            .filter(|(k, _)| closed[*k])
            .map(|(_, scc)| {
                let mut v: Vec<usize> = scc.into_iter().map(|x| x.index()).collect();
                v.sort_unstable();
                v
            })
            .collect();
        classes.sort();
        classes
    }
}

/// Stationary distribution over a labelled state space.
#[derive(Debug, Clone)]
pub struct SteadyState<L> {
    space: Arc<StateSpace<L>>,
    probs: Vec<f64>,
}

impl<L: StateLabel> SteadyState<L> {
    pub fn new(space: impl Into<Arc<StateSpace<L>>>, probs: Vec<f64>) -> Result<Self> {
        let space = space.into();
        if probs.len() != space.len() {
            return Err(Error::invalid(format!(
                "{} probabilities for {} states",
                probs.len(),
                space.len()
            )));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, &p)| !p.is_finite() || p < -1e-12)
        {
            return Err(Error::invalid(format!("probability {p} at state {i}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!("probabilities sum to {sum}")));
        }
        Ok(Self { space, probs })
    }

    pub fn space(&self) -> &Arc<StateSpace<L>> {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob_of(&self, label: &L) -> f64 {
        self.space.index_of(label).map_or(0.0, |i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&L, f64)> + '_ {
        self.space.labels().iter().zip(self.probs.iter().copied())
    }

    pub fn marginal_probability(&self, predicate: impl Fn(&L) -> bool) -> f64 {
        marginal_probability(self, predicate)
    }

    /// `E[f(state)]`.
    pub fn expectation(&self, f: impl Fn(&L) -> f64) -> f64 {
        self.iter().map(|(l, p)| p * f(l)).sum()
    }
}

/// Total probability of the states whose label satisfies `predicate`.
pub fn marginal_probability<L: StateLabel>(ss: &SteadyState<L>, predicate: impl Fn(&L) -> bool) -> f64 {
    let total: f64 = ss.iter().filter(|(l, _)| predicate(l)).map(|(_, p)| p).sum();
    total.clamp(0.0, 1.0)
}

/// Total variation distance between two probability vectors of equal length.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "distributions over different supports");
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = TransitionMatrix::from_dense(StateSpace::scalar(1), &[vec![0.5, 0.4], vec![0.0, 1.0]]);
        assert!(matches!(err, Err(Error::NotStochastic(_))));
        let err = TransitionMatrix::from_dense(StateSpace::scalar(1), &[vec![1.5, -0.5], vec![0.0, 1.0]]);
        assert!(matches!(err, Err(Error::NotStochastic(_))));
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(StateSpace::new(vec![1usize, 2, 1]).is_err());
    }

    #[test]
    fn repeated_columns_are_merged() {
        let p = TransitionMatrix::from_rows(
            StateSpace::scalar(1),
            vec![vec![(1, 0.25), (1, 0.25), (0, 0.5)], vec![(1, 1.0)]],
        )
        .unwrap();
        assert_eq!(p.get(0, 1), 0.5);
        assert_eq!(p.nnz(), 3);
    }

    #[test]
    fn marginal_of_uniform() {
        let ss = SteadyState::new(StateSpace::scalar(3), vec![0.25; 4]).unwrap();
        assert_eq!(marginal_probability(&ss, |_| true), 1.0);
        assert_eq!(marginal_probability(&ss, |&s| s == 2), 0.25);
        assert_eq!(marginal_probability(&ss, |_| false), 0.0);
    }

    #[test]
    fn closed_classes_found() {
        // 0 -> 1 <-> 2, 3 absorbing
        let dense = vec![
            vec![0.0, 0.5, 0.0, 0.5],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ];
        let p = TransitionMatrix::from_dense(StateSpace::scalar(3), &dense).unwrap();
        assert_eq!(p.closed_classes(), vec![vec![1, 2], vec![3]]);
    }
}
