//! Drop rates, mean lengths, throughput and delay derived from solved chains.

use std::collections::BTreeMap;

use crate::config::{QueueId, Topology};
use crate::markov::SteadyState;
use crate::subsystems::core_queue::CoreRates;
use crate::subsystems::tandem::effective_arrival_rate;
use crate::subsystems::{CoreQueueSpec, SingleQueueSpec, SuperposedQueueSpec, TandemSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueKpi {
    pub arrival_rate: f64,
    pub drop_rate: f64,
    pub mean_length: f64,
    pub throughput: f64,
    /// Mean per-task delay in slots; `None` when the queue carries no traffic.
    pub delay: Option<f64>,
}

impl QueueKpi {
    /// Assembles a queue's figures from its arrival rate, drop rate and mean
    /// length.
    pub fn from_parts(arrival_rate: f64, drop_rate: f64, mean_length: f64, mu: f64) -> Self {
        let throughput = throughput(arrival_rate, drop_rate);
        QueueKpi {
            arrival_rate,
            drop_rate,
            mean_length,
            throughput,
            delay: delay(mean_length, throughput, mu),
        }
    }
}

/// Figures for the traffic entering one base station.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StationKpi {
    /// Routing-weighted delay across the two edge branches.
    pub branch_delay: Option<f64>,
    /// `branch_delay` plus the core delay.
    pub delay: Option<f64>,
    /// Share of the core output that originated at this station.
    pub throughput: f64,
}

/// Condition of the core queue in a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoreStatus {
    Finite,
    /// Infinite buffer, stable; tail mass below the truncation point.
    Stable { tail_mass: f64 },
    /// Infinite buffer with arrival rate not below the service rate.
    Unstable { arrival_rate: f64, service_rate: f64 },
}

/// Steady state of one decomposed subsystem.
#[derive(Debug, Clone)]
pub enum SubsystemSteadyState {
    Tandem(SteadyState<(usize, usize)>),
    Scalar(SteadyState<usize>),
}

#[derive(Debug, Clone)]
pub struct SubsystemRecord {
    pub name: String,
    pub queues: Vec<QueueId>,
    pub steady: SubsystemSteadyState,
}

#[derive(Debug, Clone)]
pub struct KpiReport {
    pub topology: Topology,
    pub per_queue: BTreeMap<QueueId, QueueKpi>,
    pub system_drop_rate: f64,
    pub system_mean_tasks: f64,
    pub system_delay: Option<f64>,
    pub system_throughput: f64,
    pub stations: Vec<StationKpi>,
    pub core: CoreStatus,
    pub subsystems: Vec<SubsystemRecord>,
}

impl KpiReport {
    /// Fills in the system drop rate and mean task count as sums over queues.
    pub fn new(
        topology: Topology,
        per_queue: BTreeMap<QueueId, QueueKpi>,
        system_throughput: f64,
        system_delay: Option<f64>,
    ) -> Self {
        let system_drop_rate = per_queue.values().map(|k| k.drop_rate).sum();
        let system_mean_tasks = per_queue.values().map(|k| k.mean_length).sum();
        KpiReport {
            topology,
            per_queue,
            system_drop_rate,
            system_mean_tasks,
            system_delay,
            system_throughput,
            stations: Vec::new(),
            core: CoreStatus::Finite,
            subsystems: Vec::new(),
        }
    }

    pub fn queue(&self, q: QueueId) -> Option<&QueueKpi> {
        self.per_queue.get(&q)
    }

    pub fn subsystem(&self, name: &str) -> Option<&SubsystemRecord> {
        self.subsystems.iter().find(|s| s.name == name)
    }
}

/// Drop probabilities of the two tandem queues per slot:
/// `lambda (1-mu1) Pr{first full}` and
/// `lambda2 (1-mu2) Pr{first busy, second full}` with `lambda2` the
/// effective arrival rate of the second queue.
pub fn tandem_drop_rates(ss: &SteadyState<(usize, usize)>, spec: &TandemSpec) -> (f64, f64) {
    let first_full = ss.marginal_probability(|&(i, _)| i == spec.m_first);
    let first = spec.lambda * (1.0 - spec.mu_first) * first_full;
    let lambda2 = effective_arrival_rate(ss, spec.mu_first);
    let second_full = ss.marginal_probability(|&(i, j)| i >= 1 && j == spec.m_second);
    let second = lambda2 * (1.0 - spec.mu_second) * second_full;
    (first, second)
}

pub fn single_queue_drop_rate(ss: &SteadyState<usize>, spec: &SingleQueueSpec) -> f64 {
    spec.lambda * (1.0 - spec.mu) * ss.prob_of(&spec.m)
}

fn top(ss: &SteadyState<usize>, m: usize, below: usize) -> f64 {
    m.checked_sub(below).map_or(0.0, |s| ss.prob_of(&s))
}

/// Drop rate of the finite two-feed queue in its closed form
/// `p02 (1-mu) pi_{M-1} + (p01 + 2 p02)(1-mu) pi_M`.
///
/// This leaves out the slot where two tasks reach a full queue while one
/// departs; [`superposed_expected_drops`] counts it.
pub fn superposed_drop_rate_finite(ss: &SteadyState<usize>, spec: &SuperposedQueueSpec) -> f64 {
    let Some(m) = spec.buffer.finite() else {
        return 0.0;
    };
    let r = spec.rates();
    let mu_bar = 1.0 - spec.mu;
    r.p02 * mu_bar * top(ss, m, 1) + (r.p01 + 2.0 * r.p02) * top(ss, m, 0) * mu_bar
}

/// Expected tasks dropped per slot by the finite two-feed queue.
pub fn superposed_expected_drops(ss: &SteadyState<usize>, spec: &SuperposedQueueSpec) -> f64 {
    let Some(m) = spec.buffer.finite() else {
        return 0.0;
    };
    let r = spec.rates();
    let arrivals = [r.p00, r.p01, r.p02];
    let mut total = 0.0;
    for (i, pi) in ss.iter() {
        if i + 2 <= m {
            continue;
        }
        for (a, &pa) in arrivals.iter().enumerate() {
            let departures = if *i == 0 {
                [(0usize, 1.0), (1, 0.0)]
            } else {
                [(0, 1.0 - spec.mu), (1, spec.mu)]
            };
            for (x, px) in departures {
                if px == 0.0 {
                    continue;
                }
                let excess = (i - x + a).saturating_sub(m);
                total += pi * pa * px * excess as f64;
            }
        }
    }
    total
}

/// Expected tasks dropped per slot by the two-CPU core, summed over the four
/// states within one batch of the top. Each overflow count is weighted by its
/// arrival and departure combination as in the closed-form expansion, which
/// for the state two below the top reads
/// `p03 q^2 + 2 p04 * 2 mu q + p04 mu^2` with `q = 1 - mu`.
pub fn core_drop_rate(ss: &SteadyState<usize>, spec: &CoreQueueSpec) -> f64 {
    let Ok(r) = CoreRates::new(spec) else {
        return f64::NAN;
    };
    let [_, p01, p02, p03, p04] = r.arrivals;
    let m = spec.m;
    let mu = spec.mu;
    let q = 1.0 - mu;
    let at_top = p01 * q * q
        + 2.0 * p02 * q * q
        + p02 * 2.0 * mu * q
        + 3.0 * p03 * q * q
        + 2.0 * p03 * 2.0 * mu * q
        + p03 * mu * mu
        + 4.0 * p04 * q * q
        + 3.0 * p04 * 2.0 * q * mu
        + 2.0 * p04 * mu * mu;
    let one_below = p02 * q * q
        + 2.0 * p03 * q * q
        + p03 * 2.0 * q * mu
        + 3.0 * p04 * q * q
        + 2.0 * p04 * 2.0 * q * mu
        + p04 * mu * mu;
    let two_below = p03 * q * q + 2.0 * p04 * 2.0 * q * mu + p04 * mu * mu;
    let three_below = p04 * q * q;
    at_top * top(ss, m, 0) + one_below * top(ss, m, 1) + two_below * top(ss, m, 2) + three_below * top(ss, m, 3)
}

/// Expected tasks dropped per slot by the two-CPU core, enumerating every
/// batch and departure count against the chain's own departure law.
pub fn core_expected_drops(ss: &SteadyState<usize>, spec: &CoreQueueSpec) -> f64 {
    let Ok(r) = CoreRates::new(spec) else {
        return f64::NAN;
    };
    let m = spec.m;
    let mut total = 0.0;
    for (i, pi) in ss.iter() {
        if i + 4 <= m {
            continue;
        }
        for (a, &pa) in r.arrivals.iter().enumerate() {
            for x in 0..=(*i).min(2) {
                let px = r.departure_given(*i, x);
                let excess = (i - x + a).saturating_sub(m);
                total += pi * pa * px * excess as f64;
            }
        }
    }
    total
}

pub fn mean_queue_length(ss: &SteadyState<usize>) -> f64 {
    ss.expectation(|&i| i as f64)
}

/// Mean lengths of the first and second tandem queue.
pub fn tandem_mean_lengths(ss: &SteadyState<(usize, usize)>) -> (f64, f64) {
    (ss.expectation(|&(i, _)| i as f64), ss.expectation(|&(_, j)| j as f64))
}

pub fn throughput(arrival_rate: f64, drop_rate: f64) -> f64 {
    arrival_rate - drop_rate
}

/// Little's law sojourn plus one mean service time, `Q/T + 1/mu`.
/// `None` when the queue carries no traffic.
pub fn delay(mean_length: f64, throughput: f64, mu: f64) -> Option<f64> {
    if throughput > 0.0 && mu > 0.0 {
        Some(mean_length / throughput + 1.0 / mu)
    } else {
        None
    }
}

fn branch_sum(delays: &[Option<f64>]) -> Option<f64> {
    delays.iter().copied().sum()
}

/// Routing-weighted delay over the two edge branches of one station,
/// `alpha (D1 + D2) + (1 - alpha)(D3 + D4 + D5)`. A branch whose delays are
/// undefined carries no traffic and is left out with a warning.
pub fn station_branch_delay(alpha: f64, local: [Option<f64>; 5]) -> Option<f64> {
    let primary = branch_sum(&local[..2]);
    let secondary = branch_sum(&local[2..]);
    match (primary, secondary) {
        (Some(a), Some(b)) => Some(alpha * a + (1.0 - alpha) * b),
        (Some(a), None) => {
            log::warn!("secondary branch carries no traffic; left out of the delay (alpha = {alpha})");
            Some(alpha * a)
        }
        (None, Some(b)) => {
            log::warn!("primary branch carries no traffic; left out of the delay (alpha = {alpha})");
            Some((1.0 - alpha) * b)
        }
        (None, None) => None,
    }
}

/// `alpha (D1 + D2) + (1 - alpha)(D3 + D4 + D5) + D6` for the one-station
/// system, with `delays` indexed `Q1..Q6`.
pub fn system_delay_one_bs(alpha: f64, delays: [Option<f64>; 6]) -> Option<f64> {
    let [d1, d2, d3, d4, d5, d6] = delays;
    Some(station_branch_delay(alpha, [d1, d2, d3, d4, d5])? + d6?)
}

/// `p1 A1 + p2 A2 + D6` with the station weights used as given.
pub fn system_delay_two_bs(p1: f64, p2: f64, a1: Option<f64>, a2: Option<f64>, d6: Option<f64>) -> Option<f64> {
    let d6 = d6?;
    let mut total = d6;
    for (w, a) in [(p1, a1), (p2, a2)] {
        match a {
            Some(a) => total += w * a,
            None if w == 0.0 => {}
            None => {
                log::warn!("station with weight {w} carries no traffic; left out of the delay");
            }
        }
    }
    Some(total)
}

/// As [`system_delay_two_bs`] with the station weights scaled to sum to 1.
pub fn system_delay_two_bs_normalized(
    p1: f64,
    p2: f64,
    a1: Option<f64>,
    a2: Option<f64>,
    d6: Option<f64>,
) -> Option<f64> {
    let total = p1 + p2;
    if total <= 0.0 {
        return None;
    }
    system_delay_two_bs(p1 / total, p2 / total, a1, a2, d6)
}

/// `Pr{Q > threshold}`.
pub fn congestion_violation(ss: &SteadyState<usize>, threshold: i64) -> f64 {
    ss.marginal_probability(|&i| i as i64 > threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{solve_steady_state_direct, StateSpace};
    use crate::subsystems::{
        build_core_queue_matrix, build_single_queue_matrix, build_superposed_queue_matrix, build_tandem_matrix,
        single_queue_closed_form, Buffer,
    };

    fn solved_single(lambda: f64, mu: f64, m: usize) -> (SingleQueueSpec, SteadyState<usize>) {
        let spec = SingleQueueSpec { lambda, mu, m };
        let ss = solve_steady_state_direct(&build_single_queue_matrix(&spec).unwrap()).unwrap();
        (spec, ss)
    }

    #[test]
    fn tandem_drop_edge_cases() {
        let spec = TandemSpec {
            lambda: 0.0,
            mu_first: 0.4,
            mu_second: 0.4,
            m_first: 3,
            m_second: 3,
        };
        let ss = solve_steady_state_direct(&build_tandem_matrix(&spec).unwrap()).unwrap();
        assert_eq!(tandem_drop_rates(&ss, &spec), (0.0, 0.0));

        let spec = TandemSpec {
            lambda: 0.9,
            mu_first: 1.0,
            mu_second: 0.3,
            m_first: 3,
            m_second: 3,
        };
        let ss = solve_steady_state_direct(&build_tandem_matrix(&spec).unwrap()).unwrap();
        let (first, second) = tandem_drop_rates(&ss, &spec);
        assert_eq!(first, 0.0);
        assert!(second > 0.0 && second <= effective_arrival_rate(&ss, 1.0));
    }

    #[test]
    fn single_queue_drop() {
        let (spec, ss) = solved_single(0.0, 0.5, 5);
        assert_eq!(single_queue_drop_rate(&ss, &spec), 0.0);
        let (spec, ss) = solved_single(0.3, 0.6, 200);
        assert!(single_queue_drop_rate(&ss, &spec) < 1e-9);

        let spec = SingleQueueSpec {
            lambda: 0.5,
            mu: 0.5,
            m: 5,
        };
        let closed = single_queue_closed_form(&spec).unwrap();
        let expected = 0.5 * 0.5 * closed.probs()[5];
        let ss = solve_steady_state_direct(&build_single_queue_matrix(&spec).unwrap()).unwrap();
        assert!((single_queue_drop_rate(&ss, &spec) - expected).abs() < 1e-12);
    }

    #[test]
    fn superposed_drop_edge_cases() {
        for (la, lb, mu) in [(0.0, 0.0, 0.5), (0.4, 0.3, 1.0)] {
            let spec = SuperposedQueueSpec {
                lambda_a: la,
                lambda_b: lb,
                mu,
                buffer: Buffer::Finite(4),
            };
            let ss = solve_steady_state_direct(&build_superposed_queue_matrix(&spec).unwrap()).unwrap();
            assert_eq!(superposed_drop_rate_finite(&ss, &spec), 0.0);
        }
    }

    #[test]
    fn superposed_forms_differ_by_missing_term() {
        let spec = SuperposedQueueSpec {
            lambda_a: 0.4,
            lambda_b: 0.4,
            mu: 0.5,
            buffer: Buffer::Finite(5),
        };
        let ss = solve_steady_state_direct(&build_superposed_queue_matrix(&spec).unwrap()).unwrap();
        let r = spec.rates();
        let gap = superposed_expected_drops(&ss, &spec) - superposed_drop_rate_finite(&ss, &spec);
        assert!((gap - r.p02 * spec.mu * ss.probs()[5]).abs() < 1e-15);
    }

    #[test]
    fn core_drop_edge_cases() {
        let spec = CoreQueueSpec {
            lambdas: [0.0; 4],
            mu: 0.5,
            n_cpus: 2,
            m: 8,
        };
        let ss = solve_steady_state_direct(&build_core_queue_matrix(&spec).unwrap()).unwrap();
        assert_eq!(core_drop_rate(&ss, &spec), 0.0);

        // no mass on the top four states
        let spec = CoreQueueSpec {
            lambdas: [0.3; 4],
            ..spec
        };
        let mut probs = vec![0.0; 9];
        probs[2] = 0.5;
        probs[4] = 0.5;
        let ss = SteadyState::new(StateSpace::scalar(8), probs).unwrap();
        assert_eq!(core_drop_rate(&ss, &spec), 0.0);
        assert_eq!(core_expected_drops(&ss, &spec), 0.0);
    }

    #[test]
    fn core_forms_agree_away_from_two_below_top() {
        let spec = CoreQueueSpec {
            lambdas: [0.4; 4],
            mu: 0.5,
            n_cpus: 2,
            m: 12,
        };
        let mut probs = vec![0.0; 13];
        probs[9] = 0.25;
        probs[11] = 0.25;
        probs[12] = 0.5;
        let ss = SteadyState::new(StateSpace::scalar(12), probs).unwrap();
        assert!((core_drop_rate(&ss, &spec) - core_expected_drops(&ss, &spec)).abs() < 1e-15);
    }

    #[test]
    fn mean_length_corners() {
        let ss = SteadyState::new(StateSpace::scalar(3), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(mean_queue_length(&ss), 0.0);
        let ss = SteadyState::new(StateSpace::scalar(3), vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(mean_queue_length(&ss), 3.0);
    }

    #[test]
    fn tandem_mean_lengths_reordered_sum() {
        let spec = TandemSpec {
            lambda: 0.45,
            mu_first: 0.5,
            mu_second: 0.6,
            m_first: 4,
            m_second: 5,
        };
        let ss = solve_steady_state_direct(&build_tandem_matrix(&spec).unwrap()).unwrap();
        let (q1, q2) = tandem_mean_lengths(&ss);
        // phase-major summation
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for j in (0..=5).rev() {
            for i in (0..=4).rev() {
                let p = ss.prob_of(&(i, j));
                s1 += p * i as f64;
                s2 += p * j as f64;
            }
        }
        assert!((q1 - s1).abs() < 1e-13);
        assert!((q2 - s2).abs() < 1e-13);
    }

    #[test]
    fn throughput_and_delay_arithmetic() {
        assert!((throughput(0.3, 0.05) - 0.25).abs() < 1e-15);
        assert_eq!(throughput(0.4, 0.0), 0.4);
        assert_eq!(delay(2.0, 0.4, 0.5), Some(7.0));
        assert_eq!(delay(0.0, 0.3, 0.5), Some(2.0));
        assert_eq!(delay(1.0, 0.0, 0.5), None);
    }

    #[test]
    fn one_bs_delay_corners() {
        let d = [Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0), Some(6.0)];
        assert_eq!(system_delay_one_bs(1.0, d), Some(9.0));
        assert_eq!(system_delay_one_bs(0.0, d), Some(18.0));
        let idle = [Some(1.0), Some(2.0), None, None, None, Some(6.0)];
        assert_eq!(system_delay_one_bs(1.0, idle), Some(9.0));
        assert_eq!(system_delay_one_bs(0.5, [None; 6]), None);

        // relabeling the branches with alpha -> 1 - alpha
        let sym = [Some(2.0), Some(3.0), Some(2.0), Some(3.0), Some(0.0), Some(1.0)];
        let a = system_delay_one_bs(0.3, sym).unwrap();
        let b = system_delay_one_bs(0.7, sym).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn two_bs_delay_corners() {
        assert_eq!(system_delay_two_bs(1.0, 0.0, Some(4.0), Some(9.0), Some(2.0)), Some(6.0));
        assert_eq!(system_delay_two_bs(0.5, 0.5, Some(4.0), Some(4.0), Some(2.0)), Some(6.0));
        let raw = system_delay_two_bs(0.6, 0.6, Some(4.0), Some(4.0), Some(2.0)).unwrap();
        assert!((raw - 6.8).abs() < 1e-12);
        assert_eq!(
            system_delay_two_bs_normalized(0.6, 0.6, Some(4.0), Some(4.0), Some(2.0)),
            Some(6.0)
        );
    }

    #[test]
    fn congestion_corners() {
        let (_, ss) = solved_single(0.4, 0.5, 6);
        assert_eq!(congestion_violation(&ss, 6), 0.0);
        assert_eq!(congestion_violation(&ss, 10), 0.0);
        assert!((congestion_violation(&ss, -1) - 1.0).abs() < 1e-12);
        assert!((congestion_violation(&ss, 5) - ss.probs()[6]).abs() < 1e-15);
        let mut prev = 1.0;
        for c in -1..=6 {
            let v = congestion_violation(&ss, c);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }
}
