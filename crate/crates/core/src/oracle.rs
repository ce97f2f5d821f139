//! Exact Markov chain of the whole one-station network at small buffers.
//!
//! A state is the tuple of the six queue lengths, ordered lexicographically
//! with `Q1` most significant (the order [`crate::simulator::joint_index`]
//! uses). Each row enumerates every departure pattern of the busy queues, the
//! exogenous arrival and the routing draw, under the slot semantics of the
//! simulator.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::{QueueId, SystemConfig, Topology, CORE_QUEUE};
use crate::error::{Error, Result};
use crate::kpi::{station_branch_delay, system_delay_one_bs, KpiReport, QueueKpi, StationKpi};
use crate::markov::{StateSpace, SteadyState, TransitionMatrix};
use crate::simulator::joint_index;

/// Largest joint state space [`build_joint_chain`] will enumerate.
pub const JOINT_STATE_LIMIT: u128 = 200_000;

pub type JointState = [usize; 6];

/// The joint kernel plus per-state expectations of the one-slot flows.
#[derive(Debug, Clone)]
pub struct JointChain {
    pub matrix: TransitionMatrix<JointState>,
    pub buffers: [usize; 6],
    /// Expected tasks offered to each queue in a slot starting from each state.
    pub offered: Vec<[f64; 6]>,
    /// Expected tasks dropped at each queue.
    pub dropped: Vec<[f64; 6]>,
    /// Expected departures from each queue.
    pub departures: Vec<[f64; 6]>,
}

impl JointChain {
    pub fn radices(&self) -> Vec<usize> {
        self.buffers.iter().map(|m| m + 1).collect()
    }
}

fn joint_buffers(cfg: &SystemConfig) -> Result<[usize; 6]> {
    if cfg.topology() != Topology::OneBs {
        return Err(Error::invalid("the joint chain covers the one-station system only"));
    }
    let mut buffers = [0usize; 6];
    for (k, q) in cfg.queues().into_iter().enumerate() {
        buffers[k] = cfg
            .buffer(q)
            .finite()
            .ok_or_else(|| Error::invalid("the joint chain needs finite buffers"))?;
    }
    let states: u128 = buffers.iter().map(|&m| m as u128 + 1).product();
    if states > JOINT_STATE_LIMIT {
        return Err(Error::Guard {
            states,
            limit: JOINT_STATE_LIMIT,
        });
    }
    Ok(buffers)
}

struct RowOut {
    row: Vec<(usize, f64)>,
    offered: [f64; 6],
    dropped: [f64; 6],
    departures: [f64; 6],
}

// Queue index (0-based, Q1..Q6) receiving a departure from queue k.
const NEXT: [Option<usize>; 6] = [Some(1), Some(5), Some(3), Some(4), Some(5), None];

fn build_row(state: &JointState, buffers: &[usize; 6], radices: &[usize], p: f64, alpha: f64, mu: &[f64; 6]) -> RowOut {
    let mut out = RowOut {
        row: Vec::new(),
        offered: [0.0; 6],
        dropped: [0.0; 6],
        departures: [0.0; 6],
    };
    let busy: Vec<usize> = (0..6).filter(|&k| state[k] > 0).collect();
    let outcomes = [(None, 1.0 - p), (Some(0usize), p * alpha), (Some(2usize), p * (1.0 - alpha))];
    for pattern in 0u32..(1 << busy.len()) {
        let mut pd = 1.0;
        let mut departs = [false; 6];
        for (bit, &k) in busy.iter().enumerate() {
            if pattern >> bit & 1 == 1 {
                departs[k] = true;
                pd *= mu[k];
            } else {
                pd *= 1.0 - mu[k];
            }
        }
        if pd == 0.0 {
            continue;
        }
        for &(arrival, pa) in &outcomes {
            let prob = pd * pa;
            if prob == 0.0 {
                continue;
            }
            let mut next = *state;
            let mut offered = [0usize; 6];
            for k in 0..6 {
                if departs[k] {
                    next[k] -= 1;
                    out.departures[k] += prob;
                    if let Some(d) = NEXT[k] {
                        offered[d] += 1;
                    }
                }
            }
            if let Some(d) = arrival {
                offered[d] += 1;
            }
            for k in 0..6 {
                let room = buffers[k] - next[k];
                let accepted = offered[k].min(room);
                next[k] += accepted;
                out.offered[k] += prob * offered[k] as f64;
                out.dropped[k] += prob * (offered[k] - accepted) as f64;
            }
            out.row.push((joint_index(&next, radices), prob));
        }
    }
    out
}

/// Builds the exact one-slot kernel of the one-station network.
pub fn build_joint_chain(cfg: &SystemConfig) -> Result<JointChain> {
    let buffers = joint_buffers(cfg)?;
    cfg.validate()?;
    let radices: Vec<usize> = buffers.iter().map(|m| m + 1).collect();
    let labels: Vec<JointState> = (0..radices.iter().product::<usize>())
        .map(|mut idx| {
            let mut s = [0usize; 6];
            for k in (0..6).rev() {
                s[k] = idx % radices[k];
                idx /= radices[k];
            }
            s
        })
        .collect();
    let st = &cfg.stations[0];
    let mu: [f64; 6] = std::array::from_fn(|k| cfg.mu(QueueId(k as u8 + 1)));
    let rows: Vec<RowOut> = labels
        .par_iter()
        .map(|s| build_row(s, &buffers, &radices, st.p, st.alpha, &mu))
        .collect();
    let mut matrix_rows = Vec::with_capacity(rows.len());
    let mut offered = Vec::with_capacity(rows.len());
    let mut dropped = Vec::with_capacity(rows.len());
    let mut departures = Vec::with_capacity(rows.len());
    for r in rows {
        matrix_rows.push(r.row);
        offered.push(r.offered);
        dropped.push(r.dropped);
        departures.push(r.departures);
    }
    let matrix = TransitionMatrix::from_rows(StateSpace::new(labels)?, matrix_rows)?;
    Ok(JointChain {
        matrix,
        buffers,
        offered,
        dropped,
        departures,
    })
}

/// Applies the report definitions to the exact joint steady state. Drop
/// rates are expected dropped tasks per slot; delays use [`crate::kpi::delay`].
pub fn exact_kpis(ss: &SteadyState<JointState>, chain: &JointChain, cfg: &SystemConfig) -> KpiReport {
    let probs = ss.probs();
    let expect = |v: &[[f64; 6]], k: usize| probs.iter().zip(v).map(|(pi, row)| pi * row[k]).sum::<f64>();
    let mut per_queue = BTreeMap::new();
    let mut delays = [None; 6];
    for k in 0..6 {
        let q = QueueId(k as u8 + 1);
        let arrival = expect(&chain.offered, k);
        let drop = expect(&chain.dropped, k);
        let mean = ss.expectation(|s| s[k] as f64);
        let kpi = QueueKpi::from_parts(arrival, drop, mean, cfg.mu(q));
        delays[k] = kpi.delay;
        per_queue.insert(q, kpi);
    }
    let alpha = cfg.stations[0].alpha;
    let throughput = per_queue[&CORE_QUEUE].throughput;
    let system_delay = system_delay_one_bs(alpha, delays);
    let mut report = KpiReport::new(Topology::OneBs, per_queue, throughput, system_delay);
    let branch = station_branch_delay(alpha, [delays[0], delays[1], delays[2], delays[3], delays[4]]);
    report.stations = vec![StationKpi {
        branch_delay: branch,
        delay: system_delay,
        throughput,
    }];
    report
}

/// Exact mean sojourn `Q / T` of a queue, without the extra service term of
/// [`crate::kpi::delay`].
pub fn exact_sojourn(kpi: &QueueKpi) -> Option<f64> {
    (kpi.throughput > 0.0).then(|| kpi.mean_length / kpi.throughput)
}

/// Marginal of queues `a` and `b` (0-based) in level-major order over
/// `(q_a, q_b)`, the layout of a tandem subsystem's steady state.
pub fn pair_marginal(ss: &SteadyState<JointState>, buffers: &[usize; 6], a: usize, b: usize) -> Vec<f64> {
    let width = buffers[b] + 1;
    let mut out = vec![0.0; (buffers[a] + 1) * width];
    for (s, pi) in ss.iter() {
        out[s[a] * width + s[b]] += pi;
    }
    out
}

/// Marginal distribution of one queue.
pub fn queue_marginal(ss: &SteadyState<JointState>, buffers: &[usize; 6], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; buffers[k] + 1];
    for (s, pi) in ss.iter() {
        out[s[k]] += pi;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::solve_steady_state;

    fn small(p: f64, alpha: f64, mu: [f64; 6], m: usize) -> SystemConfig {
        SystemConfig::one_bs(p, alpha, mu, [m; 6])
    }

    #[test]
    fn rows_are_stochastic_and_sized() {
        let cfg = small(0.8, 0.5, [0.5, 0.5, 0.5, 0.5, 0.5, 0.9], 2);
        let chain = build_joint_chain(&cfg).unwrap();
        assert_eq!(chain.matrix.n_states(), 729);
        for i in 0..chain.matrix.n_states() {
            let s: f64 = chain.matrix.row(i).map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_traffic_drains_to_zero() {
        let cfg = small(0.0, 0.5, [0.5; 6], 1);
        let chain = build_joint_chain(&cfg).unwrap();
        let ss = solve_steady_state(&chain.matrix).unwrap();
        assert!((ss.prob_of(&[0; 6]) - 1.0).abs() < 1e-12);
        let r = exact_kpis(&ss, &chain, &cfg);
        assert_eq!(r.system_throughput, 0.0);
        assert_eq!(r.system_drop_rate, 0.0);
    }

    #[test]
    fn flow_balance_and_bound() {
        let cfg = small(0.8, 0.3, [0.6, 0.4, 0.5, 0.7, 0.5, 0.9], 2);
        let chain = build_joint_chain(&cfg).unwrap();
        let ss = solve_steady_state(&chain.matrix).unwrap();
        let r = exact_kpis(&ss, &chain, &cfg);
        assert!(r.system_throughput <= 0.8);
        for k in 0..6 {
            let dep: f64 = ss.probs().iter().zip(&chain.departures).map(|(pi, d)| pi * d[k]).sum();
            let kpi = r.queue(QueueId(k as u8 + 1)).unwrap();
            assert!((dep - kpi.throughput).abs() < 1e-10, "Q{}: {dep} vs {}", k + 1, kpi.throughput);
        }
        let total_offered = 0.8;
        let lost_or_out = r.system_throughput + r.system_drop_rate;
        assert!((lost_or_out - total_offered).abs() < 1e-10);
    }

    #[test]
    fn deterministic_conveyor() {
        let cfg = small(1.0, 1.0, [1.0; 6], 1);
        let chain = build_joint_chain(&cfg).unwrap();
        let ss = solve_steady_state(&chain.matrix).unwrap();
        let r = exact_kpis(&ss, &chain, &cfg);
        assert!((r.system_throughput - 1.0).abs() < 1e-12);
        assert!(r.system_drop_rate.abs() < 1e-12);
    }

    #[test]
    fn guard_and_topology() {
        let cfg = small(0.8, 0.5, [0.5; 6], 10);
        assert!(matches!(build_joint_chain(&cfg), Err(Error::Guard { .. })));
        let mut cfg = small(0.8, 0.5, [0.5; 6], 2);
        cfg.core.buffer = crate::subsystems::Buffer::Infinite;
        assert!(build_joint_chain(&cfg).is_err());
    }
}
