//! Single-server queue fed by two independent Bernoulli streams: at most two
//! arrivals and one departure per slot.

use serde::{Deserialize, Serialize};

use crate::error::{check_prob, check_service, Error, Result};
use crate::markov::{StateSpace, SteadyState, TransitionMatrix};

/// Buffer capacity of a queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Buffer {
    Finite(usize),
    Infinite,
}

impl Buffer {
    pub fn finite(self) -> Option<usize> {
        match self {
            Buffer::Finite(m) => Some(m),
            Buffer::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperposedQueueSpec {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub mu: f64,
    pub buffer: Buffer,
}

impl SuperposedQueueSpec {
    pub fn validate(&self) -> Result<()> {
        check_prob("lambda_a", self.lambda_a)?;
        check_prob("lambda_b", self.lambda_b)?;
        check_service("mu", self.mu)?;
        if self.buffer == Buffer::Finite(0) {
            return Err(Error::invalid("buffer size must be at least 1"));
        }
        Ok(())
    }

    pub fn arrival_rate(&self) -> f64 {
        self.lambda_a + self.lambda_b
    }

    pub fn rates(&self) -> SuperposedRates {
        SuperposedRates::new(self.lambda_a, self.lambda_b, self.mu)
    }
}

/// One-slot transition probabilities. `p0k`: `k` arrivals into an empty queue.
/// `b0..b3`: net change of `-1, 0, +1, +2` from a non-empty queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperposedRates {
    pub p00: f64,
    pub p01: f64,
    pub p02: f64,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl SuperposedRates {
    pub fn new(la: f64, lb: f64, mu: f64) -> Self {
        let (la_, lb_, mu_) = (1.0 - la, 1.0 - lb, 1.0 - mu);
        Self {
            p00: la_ * lb_,
            p01: la * lb_ + lb * la_,
            p02: la * lb,
            b0: la_ * lb_ * mu,
            b1: lb_ * la_ * mu_ + lb_ * la * mu + lb * la_ * mu,
            b2: la * lb_ * mu_ + la_ * lb * mu_ + la * lb * mu,
            b3: la * lb * mu_,
        }
    }

    /// Mean number of arrivals per slot (`-A'(1)` of the `a_i` transform).
    pub fn mean_arrivals(&self) -> f64 {
        self.p01 + 2.0 * self.p02
    }

    /// `sum_i i * b_i`, the mean of the shifted increment (`-B'(1)`).
    pub fn mean_shifted_increment(&self) -> f64 {
        self.b1 + 2.0 * self.b2 + 3.0 * self.b3
    }
}

/// Pentadiagonal-band kernel on `0..=m` (one below, two above the diagonal);
/// overflow beyond `m` collapses into the last column.
pub fn build_superposed_queue_matrix(spec: &SuperposedQueueSpec) -> Result<TransitionMatrix<usize>> {
    spec.validate()?;
    let m = spec
        .buffer
        .finite()
        .ok_or_else(|| Error::invalid("finite builder called with an infinite buffer"))?;
    let r = spec.rates();
    let mut rows = Vec::with_capacity(m + 1);
    rows.push(vec![(0, r.p00), (1.min(m), r.p01), (2.min(m), r.p02)]);
    for i in 1..=m {
        rows.push(vec![
            (i - 1, r.b0),
            (i, r.b1),
            ((i + 1).min(m), r.b2),
            ((i + 2).min(m), r.b3),
        ]);
    }
    TransitionMatrix::from_rows(StateSpace::scalar(m), rows)
}

/// Outcome of the infinite-buffer analysis.
#[derive(Debug, Clone)]
pub enum InfiniteQueueSolution {
    /// Distribution truncated where the remaining tail mass fell below
    /// [`TAIL_MASS_TOL`].
    Stable {
        steady: SteadyState<usize>,
        tail_mass: f64,
    },
    /// `lambda_a + lambda_b >= mu`.
    Unstable { arrival_rate: f64, service_rate: f64 },
}

impl InfiniteQueueSolution {
    pub fn is_stable(&self) -> bool {
        matches!(self, InfiniteQueueSolution::Stable { .. })
    }

    pub fn steady(&self) -> Option<&SteadyState<usize>> {
        match self {
            InfiniteQueueSolution::Stable { steady, .. } => Some(steady),
            InfiniteQueueSolution::Unstable { .. } => None,
        }
    }
}

pub const TAIL_MASS_TOL: f64 = 1e-10;
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Infinite-buffer solution: `pi_0 = (1 + B'(1)) / (1 + B'(1) - A'(1))` from
/// the z-transforms, then the tail by forward recursion of the equilibrium
/// equations
/// `pi_i = a_i pi_0 + b_0 pi_{i+1} + b_1 pi_i + b_2 pi_{i-1} + b_3 pi_{i-2}`
/// (terms with index below 1 omitted), stopping once the unassigned mass is
/// below [`TAIL_MASS_TOL`].
pub fn infinite_superposed_steady_state(spec: &SuperposedQueueSpec, state_cap: usize) -> Result<InfiniteQueueSolution> {
    let spec = SuperposedQueueSpec {
        buffer: Buffer::Infinite,
        ..*spec
    };
    spec.validate()?;
    let lambda = spec.arrival_rate();
    if lambda >= spec.mu {
        return Ok(InfiniteQueueSolution::Unstable {
            arrival_rate: lambda,
            service_rate: spec.mu,
        });
    }
    let r = spec.rates();
    // A'(1) = -sum i a_i, B'(1) = -sum i b_i
    let a_prime = -r.mean_arrivals();
    let b_prime = -r.mean_shifted_increment();
    let pi0 = (1.0 + b_prime) / (1.0 + b_prime - a_prime);
    let a = [r.p00, r.p01, r.p02];

    let mut pi = vec![pi0];
    let mut mass = pi0;
    while 1.0 - mass >= TAIL_MASS_TOL {
        let i = pi.len() - 1;
        if pi.len() >= state_cap {
            return Err(Error::Truncation {
                cap: state_cap,
                residual: 1.0 - mass,
                target: TAIL_MASS_TOL,
            });
        }
        let at = |k: isize| if k >= 1 { pi[k as usize] } else { 0.0 };
        let ii = i as isize;
        let arrivals = if i < 3 { a[i] * pi0 } else { 0.0 };
        let rhs = if i == 0 {
            (1.0 - r.p00) * pi0
        } else {
            (1.0 - r.b1) * pi[i] - arrivals - r.b2 * at(ii - 1) - r.b3 * at(ii - 2)
        };
        let next = (rhs / r.b0).max(0.0);
        if !next.is_finite() {
            return Err(Error::Solver {
                reason: format!("tail recursion diverged at state {}", i + 1),
                residual: 1.0 - mass,
            });
        }
        pi.push(next);
        mass += next;
        if next == 0.0 && i > 3 && pi[i] == 0.0 && pi[i - 1] == 0.0 {
            // recursion collapsed before reaching the target mass
            return Err(Error::Truncation {
                cap: pi.len(),
                residual: 1.0 - mass,
                target: TAIL_MASS_TOL,
            });
        }
    }
    let n = pi.len();
    let tail_mass = 1.0 - mass;
    pi.iter_mut().for_each(|p| *p /= mass);
    let steady = SteadyState::new(StateSpace::scalar(n - 1), pi)?;
    Ok(InfiniteQueueSolution::Stable { steady, tail_mass })
}
