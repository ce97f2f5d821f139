use serde::{Deserialize, Serialize};

use crate::error::{check_prob, check_service, Error, Result};
use crate::markov::{StateSpace, SteadyState, TransitionMatrix};

/// Finite Geo/Geo/1 queue with late arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleQueueSpec {
    pub lambda: f64,
    pub mu: f64,
    pub m: usize,
}

impl SingleQueueSpec {
    pub fn validate(&self) -> Result<()> {
        check_prob("lambda", self.lambda)?;
        check_service("mu", self.mu)?;
        if self.m == 0 {
            return Err(Error::invalid("buffer size must be at least 1"));
        }
        Ok(())
    }
}

/// Tridiagonal kernel on `0..=m`.
pub fn build_single_queue_matrix(spec: &SingleQueueSpec) -> Result<TransitionMatrix<usize>> {
    spec.validate()?;
    let (l, mu, m) = (spec.lambda, spec.mu, spec.m);
    let (lb, mb) = (1.0 - l, 1.0 - mu);
    let mut rows = Vec::with_capacity(m + 1);
    rows.push(vec![(0, lb), (1, l)]);
    for i in 1..m {
        rows.push(vec![(i - 1, lb * mu), (i, l * mu + lb * mb), (i + 1, l * mb)]);
    }
    rows.push(vec![(m - 1, lb * mu), (m, lb * mb + l)]);
    TransitionMatrix::from_rows(StateSpace::scalar(m), rows)
}

/// Product-form solution of the balance equations,
/// `pi_i = lambda^i (1-mu)^(i-1) / ((1-lambda)^i mu^i) * pi_0`.
///
/// Evaluated in log space so heavily loaded queues with long buffers do not
/// overflow.
pub fn single_queue_closed_form(spec: &SingleQueueSpec) -> Result<SteadyState<usize>> {
    spec.validate()?;
    if spec.lambda >= 1.0 {
        return Err(Error::invalid("closed form needs lambda < 1"));
    }
    let (l, mu, m) = (spec.lambda, spec.mu, spec.m);
    let log_ratio = l.ln() - (1.0 - l).ln() - mu.ln();
    let log_mu_bar = (1.0 - mu).ln();
    let log_terms: Vec<f64> = (0..=m)
        .map(|i| match i {
            0 => 0.0,
            1 => log_ratio,
            _ => i as f64 * log_ratio + (i - 1) as f64 * log_mu_bar,
        })
        .collect();
    let peak = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<f64> = log_terms.iter().map(|&t| (t - peak).exp()).collect();
    let total: f64 = terms.iter().sum();
    let probs = terms.into_iter().map(|t| t / total).collect();
    SteadyState::new(StateSpace::scalar(m), probs)
}
