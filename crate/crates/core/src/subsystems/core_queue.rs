//! Core server of the two-base-station system: four Bernoulli feeds into one
//! buffer served by two identical CPUs.

use serde::{Deserialize, Serialize};

use crate::error::{check_prob, check_service, Error, Result};
use crate::markov::{StateSpace, TransitionMatrix};

/// Maximum batch size entering the core in one slot.
pub const MAX_BATCH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreQueueSpec {
    pub lambdas: [f64; 4],
    /// Per-CPU service probability.
    pub mu: f64,
    pub n_cpus: usize,
    pub m: usize,
}

impl CoreQueueSpec {
    pub fn validate(&self) -> Result<()> {
        for (k, &l) in self.lambdas.iter().enumerate() {
            check_prob(&format!("lambdas[{k}]"), l)?;
        }
        check_service("mu", self.mu)?;
        if self.n_cpus != 2 {
            return Err(Error::invalid(format!(
                "core queue is implemented for 2 CPUs, got {}",
                self.n_cpus
            )));
        }
        if self.m < MAX_BATCH {
            return Err(Error::invalid(format!(
                "core buffer {} is smaller than the maximum batch {MAX_BATCH}",
                self.m
            )));
        }
        Ok(())
    }

    pub fn arrival_rate(&self) -> f64 {
        self.lambdas.iter().sum()
    }
}

/// `Pr{X = k}` for `X ~ Binomial(n_cpus, mu)`.
pub fn binomial_departure_pmf(n_cpus: usize, mu: f64, k: usize) -> Result<f64> {
    check_prob("mu", mu)?;
    if k > n_cpus {
        return Err(Error::invalid(format!("{k} departures from {n_cpus} CPUs")));
    }
    let mut coeff = 1.0;
    for t in 0..k {
        coeff = coeff * (n_cpus - t) as f64 / (t + 1) as f64;
    }
    Ok(coeff * mu.powi(k as i32) * (1.0 - mu).powi((n_cpus - k) as i32))
}

/// Distribution of the number of arrivals from four independent Bernoulli
/// feeds, built by successive convolution.
pub fn core_arrival_batch_pmf(lambdas: &[f64; 4]) -> [f64; 5] {
    let mut pmf = [0.0; 5];
    pmf[0] = 1.0;
    for (seen, &l) in lambdas.iter().enumerate() {
        for k in (0..=seen + 1).rev() {
            let stay = pmf[k] * (1.0 - l);
            let shift = if k > 0 { pmf[k - 1] * l } else { 0.0 };
            pmf[k] = stay + shift;
        }
    }
    pmf
}

/// Transition ingredients of the core chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreRates {
    /// `p0k`: probability of a batch of `k` arrivals.
    pub arrivals: [f64; 5],
    /// `Pr{X = k}`, `k = 0, 1, 2`.
    pub departures: [f64; 3],
    /// `p1k`, `k = 0..=5`: row of the one-task state.
    pub one_task: [f64; 6],
    /// `b0..b6`: `b_k` is the probability of a net change of `4 - k` from a
    /// state with both CPUs busy.
    pub band: [f64; 7],
}

impl CoreRates {
    pub fn new(spec: &CoreQueueSpec) -> Result<Self> {
        let arrivals = core_arrival_batch_pmf(&spec.lambdas);
        let mut departures = [0.0; 3];
        for (k, d) in departures.iter_mut().enumerate() {
            *d = binomial_departure_pmf(spec.n_cpus, spec.mu, k)?;
        }
        let none = departures[0];
        let some = 1.0 - none;
        let mut one_task = [0.0; 6];
        for (k, cell) in one_task.iter_mut().enumerate() {
            let stay = if k >= 1 { arrivals[k - 1] * none } else { 0.0 };
            let served = if k <= 4 { arrivals[k] * some } else { 0.0 };
            *cell = stay + served;
        }
        let mut band = [0.0; 7];
        for (a, &pa) in arrivals.iter().enumerate() {
            for (x, &px) in departures.iter().enumerate() {
                band[4 + x - a] += pa * px;
            }
        }
        Ok(Self {
            arrivals,
            departures,
            one_task,
            band,
        })
    }

    /// Probability of `x` departures from a state holding `occupancy` tasks.
    /// With one task the chain uses `Pr{X >= 1}` for a departure.
    pub fn departure_given(&self, occupancy: usize, x: usize) -> f64 {
        match (occupancy, x) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (1, 0) => self.departures[0],
            (1, 1) => 1.0 - self.departures[0],
            (1, _) => 0.0,
            (_, x) if x <= 2 => self.departures[x],
            _ => 0.0,
        }
    }
}

/// Banded kernel on `0..=m`, two below and four above the diagonal; rows in
/// the top four states fold overflow into column `m`.
pub fn build_core_queue_matrix(spec: &CoreQueueSpec) -> Result<TransitionMatrix<usize>> {
    spec.validate()?;
    let rates = CoreRates::new(spec)?;
    let m = spec.m;
    let mut rows = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let mut row = Vec::with_capacity(8);
        for (a, &pa) in rates.arrivals.iter().enumerate() {
            for x in 0..=i.min(2) {
                let px = rates.departure_given(i, x);
                if px > 0.0 {
                    row.push(((i - x + a).min(m), pa * px));
                }
            }
        }
        rows.push(row);
    }
    TransitionMatrix::from_rows(StateSpace::scalar(m), rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_values() {
        assert!((binomial_departure_pmf(2, 0.5, 1).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(binomial_departure_pmf(2, 1.0, 2).unwrap(), 1.0);
        assert!((binomial_departure_pmf(2, 0.3, 0).unwrap() - 0.49).abs() < 1e-15);
        assert!(binomial_departure_pmf(2, 0.3, 3).is_err());
    }

    #[test]
    fn batch_extremes() {
        assert_eq!(core_arrival_batch_pmf(&[0.0; 4]), [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(core_arrival_batch_pmf(&[1.0; 4]), [0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    fn spec(lambdas: [f64; 4], mu: f64, m: usize) -> CoreQueueSpec {
        CoreQueueSpec {
            lambdas,
            mu,
            n_cpus: 2,
            m,
        }
    }

    #[test]
    fn appendix_entries() {
        let s = spec([0.2, 0.3, 0.4, 0.5], 0.6, 10);
        let r = CoreRates::new(&s).unwrap();
        let [p00, p01, p02, p03, p04] = r.arrivals;
        let [x0, x1, x2] = r.departures;
        let x_ge1 = 1.0 - x0;
        let eps = 1e-15;
        assert!((r.one_task[0] - p00 * x_ge1).abs() < eps);
        assert!((r.one_task[1] - (p00 * x0 + p01 * x_ge1)).abs() < eps);
        assert!((r.one_task[3] - (p02 * x0 + p03 * x_ge1)).abs() < eps);
        assert!((r.one_task[5] - p04 * x0).abs() < eps);
        assert!((r.band[0] - p04 * x0).abs() < eps);
        assert!((r.band[2] - (p02 * x0 + p03 * x1 + p04 * x2)).abs() < eps);
        assert!((r.band[4] - (p00 * x0 + p01 * x1 + p02 * x2)).abs() < eps);
        assert!((r.band[6] - p00 * x2).abs() < eps);

        let p = build_core_queue_matrix(&s).unwrap();
        for k in 0..5 {
            assert!((p.get(0, k) - r.arrivals[k]).abs() < eps);
        }
        for k in 0..6 {
            assert!((p.get(1, k) - r.one_task[k]).abs() < eps);
        }
        for i in 2..=6 {
            for k in 0..7 {
                assert!((p.get(i, i - 2 + k) - r.band[6 - k]).abs() < eps);
            }
        }
        // folded last rows
        assert!((p.get(7, 10) - (r.band[0] + r.band[1])).abs() < eps);
        assert!((p.get(10, 10) - (r.band[0] + r.band[1] + r.band[2] + r.band[3] + r.band[4])).abs() < eps);
        assert!((p.get(10, 8) - r.band[6]).abs() < eps);
    }

    #[test]
    fn no_arrivals_is_pure_death() {
        let s = spec([0.0; 4], 0.4, 6);
        let p = build_core_queue_matrix(&s).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
        assert!((p.get(1, 0) - (1.0 - 0.36)).abs() < 1e-15);
        assert!((p.get(3, 1) - 0.16).abs() < 1e-15);
        assert!((p.get(3, 2) - 0.48).abs() < 1e-15);
        assert!((p.get(3, 3) - 0.36).abs() < 1e-15);
    }

    #[test]
    fn small_buffer_rejected() {
        assert!(build_core_queue_matrix(&spec([0.1; 4], 0.5, 3)).is_err());
        let mut s = spec([0.1; 4], 0.5, 8);
        s.n_cpus = 3;
        assert!(build_core_queue_matrix(&s).is_err());
    }
}
