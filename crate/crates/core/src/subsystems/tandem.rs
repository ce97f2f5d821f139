//! Two queues in tandem (processing queue feeding a transmission queue) as a
//! level-major QBD: level = length of the first queue, phase = length of the
//! second.

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{check_prob, check_service, Error, Result};
use crate::markov::{StateSpace, SteadyState, TransitionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TandemSpec {
    pub lambda: f64,
    pub mu_first: f64,
    pub mu_second: f64,
    pub m_first: usize,
    pub m_second: usize,
}

impl TandemSpec {
    pub fn validate(&self) -> Result<()> {
        check_prob("lambda", self.lambda)?;
        check_service("mu_first", self.mu_first)?;
        check_service("mu_second", self.mu_second)?;
        if self.m_first == 0 || self.m_second == 0 {
            return Err(Error::invalid("tandem buffer sizes must be at least 1"));
        }
        Ok(())
    }

    /// `(m_first + 1) * (m_second + 1)`.
    pub fn n_states(&self) -> usize {
        (self.m_first + 1) * (self.m_second + 1)
    }
}

type Block<T> = Vec<Vec<T>>;

/// Phase-transition kernels and the six QBD blocks, generic over the scalar so
/// the same recipe can be evaluated in exact rational arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct TandemBlocks<T> {
    /// Second queue with no arrival from the first.
    pub p1: Block<T>,
    /// Second queue receiving one task from the first.
    pub p2: Block<T>,
    pub b: Block<T>,
    pub c: Block<T>,
    pub e: Block<T>,
    pub a0: Block<T>,
    pub a1: Block<T>,
    pub a2: Block<T>,
}

fn zeros<T: Num + Clone>(n: usize) -> Block<T> {
    vec![vec![T::zero(); n]; n]
}

fn scale<T: Num + Clone>(k: &T, m: &Block<T>) -> Block<T> {
    m.iter()
        .map(|row| row.iter().map(|x| k.clone() * x.clone()).collect())
        .collect()
}

fn add<T: Num + Clone>(a: &Block<T>, b: &Block<T>) -> Block<T> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x.clone() + y.clone()).collect())
        .collect()
}

pub fn tandem_blocks<T: Num + Clone>(lambda: T, mu_first: T, mu_second: T, m_second: usize) -> TandemBlocks<T> {
    let n = m_second + 1;
    let one = T::one();
    let lam_bar = one.clone() - lambda.clone();
    let mu1_bar = one.clone() - mu_first.clone();
    let mu2_bar = one.clone() - mu_second.clone();

    let mut p1 = zeros::<T>(n);
    p1[0][0] = one.clone();
    for j in 1..n {
        p1[j][j - 1] = mu_second.clone();
        p1[j][j] = mu2_bar.clone();
    }

    let mut p2 = zeros::<T>(n);
    p2[0][1] = one.clone();
    for j in 1..m_second {
        p2[j][j] = mu_second.clone();
        p2[j][j + 1] = mu2_bar.clone();
    }
    // full second queue: either it serves one and accepts the newcomer, or
    // the newcomer is dropped
    p2[m_second][m_second] = one.clone();

    let b = scale(&lam_bar, &p1);
    let c = scale(&lambda, &p1);
    let e = scale(&(lam_bar.clone() * mu_first.clone()), &p2);
    let a0 = scale(&(lambda.clone() * mu1_bar.clone()), &p1);
    let a1 = add(
        &scale(&(lam_bar.clone() * mu1_bar), &p1),
        &scale(&(lambda * mu_first.clone()), &p2),
    );
    let a2 = scale(&(lam_bar * mu_first), &p2);
    TandemBlocks {
        p1,
        p2,
        b,
        c,
        e,
        a0,
        a1,
        a2,
    }
}

impl<T: Num + Clone> TandemBlocks<T> {
    /// Block at `(row_level, col_level)` of the full matrix for a first-queue
    /// buffer of `m_first`, or `None` where the matrix is zero.
    pub fn block(&self, m_first: usize, row_level: usize, col_level: usize) -> Option<Block<T>> {
        let i = row_level;
        let j = col_level;
        if i > m_first || j > m_first {
            return None;
        }
        let down = || if i == 1 { self.e.clone() } else { self.a2.clone() };
        match (i, j) {
            (0, 0) => Some(self.b.clone()),
            (0, 1) => Some(self.c.clone()),
            _ if i > 0 && j + 1 == i => Some(down()),
            _ if i > 0 && i == j && i == m_first => Some(add(&self.a0, &self.a1)),
            _ if i > 0 && i == j => Some(self.a1.clone()),
            _ if i > 0 && j == i + 1 => Some(self.a0.clone()),
            _ => None,
        }
    }
}

pub fn build_tandem_matrix(spec: &TandemSpec) -> Result<TransitionMatrix<(usize, usize)>> {
    spec.validate()?;
    let blocks = tandem_blocks(spec.lambda, spec.mu_first, spec.mu_second, spec.m_second);
    let width = spec.m_second + 1;
    let m1 = spec.m_first;
    let mut rows = vec![Vec::new(); spec.n_states()];
    for level in 0..=m1 {
        for col_level in level.saturating_sub(1)..=(level + 1).min(m1) {
            let Some(block) = blocks.block(m1, level, col_level) else {
                continue;
            };
            for (phase, block_row) in block.iter().enumerate() {
                let row = &mut rows[level * width + phase];
                for (col_phase, &v) in block_row.iter().enumerate() {
                    if v != 0.0 {
                        row.push((col_level * width + col_phase, v));
                    }
                }
            }
        }
    }
    TransitionMatrix::from_rows(StateSpace::level_major(m1, spec.m_second), rows)
}

/// Rate offered to the second queue, `Pr{first queue > 0} * mu_first`.
pub fn effective_arrival_rate(ss: &SteadyState<(usize, usize)>, mu_first: f64) -> f64 {
    ss.marginal_probability(|&(i, _)| i > 0) * mu_first
}

/// Rate leaving the second queue, `Pr{second queue > 0} * mu_second`; this is
/// what a tandem offers to whatever sits downstream of it.
pub fn output_rate(ss: &SteadyState<(usize, usize)>, mu_second: f64) -> f64 {
    ss.marginal_probability(|&(_, j)| j > 0) * mu_second
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_substituted_entries() {
        let spec = TandemSpec {
            lambda: 0.4,
            mu_first: 0.3,
            mu_second: 0.5,
            m_first: 2,
            m_second: 2,
        };
        let blocks = tandem_blocks(spec.lambda, spec.mu_first, spec.mu_second, 2);
        assert!((blocks.b[1][0] - 0.30).abs() < 1e-15);
        assert!((blocks.c[1][1] - 0.20).abs() < 1e-15);
        assert!((blocks.a2[1][2] - 0.09).abs() < 1e-15);

        let p = build_tandem_matrix(&spec).unwrap();
        assert!((p.get_by_label(&(0, 1), &(0, 0)) - 0.30).abs() < 1e-15);
        assert!((p.get_by_label(&(1, 1), &(2, 1)) - 0.4 * 0.7 * 0.5).abs() < 1e-15);
        assert!((p.get_by_label(&(2, 1), &(1, 2)) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn no_arrivals_drains() {
        let spec = TandemSpec {
            lambda: 0.0,
            mu_first: 0.6,
            mu_second: 0.4,
            m_first: 3,
            m_second: 2,
        };
        let blocks = tandem_blocks(0.0, 0.6, 0.4, 2);
        assert!(blocks.c.iter().flatten().all(|&x| x == 0.0));
        assert!(blocks.a0.iter().flatten().all(|&x| x == 0.0));
        let p = build_tandem_matrix(&spec).unwrap();
        assert_eq!(p.closed_classes(), vec![vec![0]]);
    }

    #[test]
    fn unit_buffers() {
        let spec = TandemSpec {
            lambda: 0.7,
            mu_first: 0.2,
            mu_second: 0.9,
            m_first: 1,
            m_second: 1,
        };
        let p = build_tandem_matrix(&spec).unwrap();
        assert_eq!(p.n_states(), 4);
        // full first queue, empty second: serve one and accept the arrival
        assert!((p.get_by_label(&(1, 0), &(1, 1)) - 0.7 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn invalid_spec_rejected() {
        let bad = TandemSpec {
            lambda: 1.2,
            mu_first: 0.5,
            mu_second: 0.5,
            m_first: 2,
            m_second: 2,
        };
        assert!(build_tandem_matrix(&bad).is_err());
        let bad = TandemSpec {
            lambda: 0.2,
            mu_first: 0.0,
            ..bad
        };
        assert!(build_tandem_matrix(&bad).is_err());
    }
}
