//! Slot-by-slot simulation of the coupled network, without decomposition.
//!
//! Each slot has two phases. First every queue attempts departures from the
//! state it held at the start of the slot, one Bernoulli draw per busy server.
//! Then, at the end of the slot, exogenous arrivals and the tasks that departed
//! in the first phase are offered to their destinations: exogenous arrivals
//! first, then departures in ascending order of the queue they left. A task
//! offered to a full queue is dropped. Occupancy is sampled after arrivals.
//!
//! Random streams are [`RNG_ALGORITHM`] generators built with
//! `seed_from_u64(seed)` and separated with `set_stream((kind << 32) | index)`,
//! where `kind` is one of the `STREAM_*` constants.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{QueueId, SystemConfig, Topology};
use crate::error::{Error, Result};
use crate::kpi::{CoreStatus, KpiReport, QueueKpi, StationKpi};
use crate::subsystems::{CoreQueueSpec, SuperposedQueueSpec};

pub const RNG_ALGORITHM: &str = "ChaCha8";
/// Service stream; index is the queue number (0 for an isolated queue).
pub const STREAM_SERVICE: u64 = 1;
/// Arrival stream; index is the 0-based station, or the feed of an isolated queue.
pub const STREAM_SOURCE: u64 = 2;
/// Routing stream; index is the 0-based station.
pub const STREAM_ROUTER: u64 = 3;

pub const DEFAULT_SLOTS: u64 = 1_000_000;
pub const DEFAULT_BATCHES: usize = 20;
/// Largest joint histogram the simulator will record.
pub const JOINT_HISTOGRAM_LIMIT: usize = 200_000;

/// Warmup used when none is given: 1% of the run.
pub fn default_warmup(n_slots: u64) -> u64 {
    n_slots / 100
}

pub fn stream_rng(seed: u64, kind: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 32) | index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceModel {
    /// A task reaches the station in each slot with probability `p`.
    #[default]
    IndependentBernoulli,
    /// The device retransmits its current task until it is received and only
    /// then starts the next one. Arrivals are the same Bernoulli process; the
    /// retransmission wait is charged to the task's sojourn.
    StopAndWait,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub system: SystemConfig,
    pub n_slots: u64,
    pub warmup_slots: u64,
    pub seed: u64,
    pub source_model: SourceModel,
    pub track_sojourn: bool,
    /// Record the joint occupancy of all queues (finite buffers only).
    pub joint_histogram: bool,
    /// Number of batches behind the batch-means standard errors.
    pub batches: usize,
}

impl SimConfig {
    pub fn new(system: SystemConfig, n_slots: u64, seed: u64) -> Self {
        SimConfig {
            system,
            n_slots,
            warmup_slots: default_warmup(n_slots),
            seed,
            source_model: SourceModel::default(),
            track_sojourn: true,
            joint_histogram: false,
            batches: DEFAULT_BATCHES,
        }
    }

    pub fn with_warmup(mut self, warmup_slots: u64) -> Self {
        self.warmup_slots = warmup_slots;
        self
    }

    pub fn measured_slots(&self) -> u64 {
        self.n_slots.saturating_sub(self.warmup_slots)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.n_slots == 0 {
            return Err(Error::invalid("n_slots must be positive"));
        }
        if self.warmup_slots >= self.n_slots {
            return Err(Error::invalid(format!(
                "warmup ({}) must be shorter than the run ({})",
                self.warmup_slots, self.n_slots
            )));
        }
        if self.batches < 2 || self.batches as u64 > self.measured_slots() {
            return Err(Error::invalid(format!(
                "batches must lie in [2, {}], got {}",
                self.measured_slots(),
                self.batches
            )));
        }
        if self.joint_histogram {
            joint_radices(&self.system)?;
        }
        Ok(())
    }
}

/// Point estimate with its batch-means standard error. The error is NaN when
/// fewer than two batches define the quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `|value - target| <= k * std_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub queue: QueueId,
    pub offered: u64,
    pub accepted: u64,
    /// Slots in which at least one task was dropped here.
    pub drop_events: u64,
    pub dropped_tasks: u64,
    pub departures: u64,
    pub arrival_rate: Estimate,
    pub drop_event_rate: Estimate,
    /// Dropped tasks per slot.
    pub drop_rate: Estimate,
    pub throughput: Estimate,
    pub mean_length: Estimate,
    /// Fraction of slots that started with a task in service.
    pub busy_fraction: f64,
    /// Mean slots between entering and leaving this queue.
    pub mean_sojourn: Option<Estimate>,
    /// `occupancy[k]` counts the slots that ended with `k` tasks queued.
    pub occupancy: Vec<u64>,
}

impl QueueStats {
    pub fn occupancy_distribution(&self) -> Vec<f64> {
        normalize(&self.occupancy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationStats {
    pub generated: u64,
    pub delivered: u64,
    pub throughput: Estimate,
    pub mean_sojourn: Option<Estimate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemStats {
    /// Tasks leaving the core per slot.
    pub throughput: Estimate,
    /// Dropped tasks per slot over all queues.
    pub drop_rate: Estimate,
    pub mean_tasks: Estimate,
    /// Mean slots from generation to leaving the core.
    pub mean_sojourn: Option<Estimate>,
}

/// Task counts. `generated = delivered + dropped + in_system`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_system: u64,
}

impl Counts {
    pub fn is_conserved(&self) -> bool {
        self.generated == self.delivered + self.dropped + self.in_system
    }
}

/// Joint occupancy counts in lexicographic order over the queues, first queue
/// most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub radices: Vec<usize>,
    pub counts: Vec<u64>,
}

impl JointHistogram {
    pub fn distribution(&self) -> Vec<f64> {
        normalize(&self.counts)
    }
}

/// Lexicographic index of `occupancy` under `radices`.
pub fn joint_index(occupancy: &[usize], radices: &[usize]) -> usize {
    occupancy.iter().zip(radices).fold(0, |acc, (&q, &r)| acc * r + q)
}

fn joint_radices(system: &SystemConfig) -> Result<Vec<usize>> {
    let mut radices = Vec::new();
    let mut total: u128 = 1;
    for q in system.queues() {
        let m = system
            .buffer(q)
            .finite()
            .ok_or_else(|| Error::invalid("a joint histogram needs finite buffers"))?;
        radices.push(m + 1);
        total *= (m + 1) as u128;
    }
    if total > JOINT_HISTOGRAM_LIMIT as u128 {
        return Err(Error::Guard {
            states: total,
            limit: JOINT_HISTOGRAM_LIMIT as u128,
        });
    }
    Ok(radices)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub seed: u64,
    pub rng: String,
    pub n_slots: u64,
    pub warmup_slots: u64,
    pub source_model: SourceModel,
    pub topology: Topology,
    pub per_queue: Vec<QueueStats>,
    pub stations: Vec<StationStats>,
    pub system: SystemStats,
    /// Counts over the measured window; `in_system` is the end-of-run content.
    pub window: Counts,
    /// Counts over the whole run including warmup.
    pub counts: Counts,
    pub joint: Option<JointHistogram>,
}

impl SimResult {
    pub fn queue(&self, q: QueueId) -> Option<&QueueStats> {
        self.per_queue.iter().find(|s| s.queue == q)
    }

    pub fn measured_slots(&self) -> u64 {
        self.n_slots - self.warmup_slots
    }

    /// Empirical figures in report form. Per-queue and system delays are
    /// measured sojourn times.
    pub fn to_kpi_report(&self) -> KpiReport {
        let per_queue = self
            .per_queue
            .iter()
            .map(|s| {
                (
                    s.queue,
                    QueueKpi {
                        arrival_rate: s.arrival_rate.value,
                        drop_rate: s.drop_rate.value,
                        mean_length: s.mean_length.value,
                        throughput: s.throughput.value,
                        delay: s.mean_sojourn.map(|e| e.value),
                    },
                )
            })
            .collect();
        let mut report = KpiReport::new(
            self.topology,
            per_queue,
            self.system.throughput.value,
            self.system.mean_sojourn.map(|e| e.value),
        );
        report.stations = self
            .stations
            .iter()
            .map(|s| StationKpi {
                branch_delay: None,
                delay: s.mean_sojourn.map(|e| e.value),
                throughput: s.throughput.value,
            })
            .collect();
        report.core = CoreStatus::Finite;
        report
    }
}

fn normalize(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

#[derive(Debug, Clone, Copy)]
struct Task {
    born: u64,
    entered: u64,
    station: usize,
}

#[derive(Debug, Clone, Default)]
struct QueueAcc {
    offered: u64,
    accepted: u64,
    drop_events: u64,
    dropped: u64,
    departures: u64,
    occupancy_sum: u64,
    busy_slots: u64,
    sojourn_sum: u64,
    sojourn_n: u64,
}

#[derive(Debug, Clone, Default)]
struct StationAcc {
    generated: u64,
    delivered: u64,
    sojourn_sum: u64,
}

#[derive(Debug, Clone, Default)]
struct Acc {
    slots: u64,
    queues: Vec<QueueAcc>,
    stations: Vec<StationAcc>,
}

impl Acc {
    fn new(nq: usize, ns: usize) -> Self {
        Acc {
            slots: 0,
            queues: vec![QueueAcc::default(); nq],
            stations: vec![StationAcc::default(); ns],
        }
    }

    fn add(&mut self, other: &Acc) {
        self.slots += other.slots;
        for (a, b) in self.queues.iter_mut().zip(&other.queues) {
            a.offered += b.offered;
            a.accepted += b.accepted;
            a.drop_events += b.drop_events;
            a.dropped += b.dropped;
            a.departures += b.departures;
            a.occupancy_sum += b.occupancy_sum;
            a.busy_slots += b.busy_slots;
            a.sojourn_sum += b.sojourn_sum;
            a.sojourn_n += b.sojourn_n;
        }
        for (a, b) in self.stations.iter_mut().zip(&other.stations) {
            a.generated += b.generated;
            a.delivered += b.delivered;
            a.sojourn_sum += b.sojourn_sum;
        }
    }

    fn delivered(&self) -> u64 {
        self.stations.iter().map(|s| s.delivered).sum()
    }

    fn dropped(&self) -> u64 {
        self.queues.iter().map(|q| q.dropped).sum()
    }
}

/// Ratio estimate over the pooled batches with a batch-means standard error.
/// Batches where `f` is undefined are skipped; `None` if no batch is defined.
fn estimate(total: &Acc, batches: &[Acc], f: impl Fn(&Acc) -> Option<f64>) -> Option<Estimate> {
    let value = f(total)?;
    let values: Vec<f64> = batches.iter().filter_map(&f).collect();
    let n = values.len() as f64;
    let std_error = if values.len() < 2 {
        f64::NAN
    } else {
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Some(Estimate { value, std_error })
}

fn rate(total: &Acc, batches: &[Acc], f: impl Fn(&Acc) -> u64) -> Estimate {
    estimate(total, batches, |a| Some(f(a) as f64 / a.slots as f64)).expect("measured window is non-empty")
}

fn ratio(total: &Acc, batches: &[Acc], num: impl Fn(&Acc) -> u64, den: impl Fn(&Acc) -> u64) -> Option<Estimate> {
    estimate(total, batches, |a| {
        let d = den(a);
        (d > 0).then(|| num(a) as f64 / d as f64)
    })
}

struct Queue {
    tasks: VecDeque<Task>,
    cap: Option<usize>,
    mu: f64,
    servers: usize,
    dest: Option<usize>,
    rng: ChaCha8Rng,
}

/// Runs the coupled network for `cfg.n_slots` slots.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let system = &cfg.system;
    let ids = system.queues();
    let nq = ids.len();
    let ns = system.stations.len();
    let position = |q: QueueId| ids.iter().position(|&x| x == q).expect("queue of this topology");

    let mut queues: Vec<Queue> = ids
        .iter()
        .map(|&q| Queue {
            tasks: VecDeque::new(),
            cap: system.buffer(q).finite(),
            mu: system.mu(q),
            servers: if q.is_core() { system.core.n_cpus } else { 1 },
            dest: q.downstream().map(position),
            rng: stream_rng(cfg.seed, STREAM_SERVICE, q.0 as u64),
        })
        .collect();
    let entry: Vec<[usize; 2]> = (0..ns)
        .map(|s| [position(QueueId::local(s, 1)), position(QueueId::local(s, 3))])
        .collect();
    let mut source_rng: Vec<ChaCha8Rng> = (0..ns).map(|s| stream_rng(cfg.seed, STREAM_SOURCE, s as u64)).collect();
    let mut router_rng: Vec<ChaCha8Rng> = (0..ns).map(|s| stream_rng(cfg.seed, STREAM_ROUTER, s as u64)).collect();
    let mut next_born = vec![0u64; ns];

    let radices = if cfg.joint_histogram {
        Some(joint_radices(system)?)
    } else {
        None
    };
    let mut joint_counts = radices.as_ref().map(|r| vec![0u64; r.iter().product()]);
    let mut occupancy: Vec<Vec<u64>> = queues.iter().map(|q| vec![0; q.cap.map_or(1, |m| m + 1)]).collect();

    let measured = cfg.measured_slots();
    let n_batches = cfg.batches as u64;
    let mut batches = vec![Acc::new(nq, ns); cfg.batches];
    let mut whole = Counts::default();
    let mut moving: Vec<(usize, Task)> = Vec::new();
    let mut arrivals: Vec<(usize, Task)> = Vec::new();
    let mut dropped_now = vec![false; nq];
    let mut lengths = vec![0usize; nq];
    let mut scratch = Acc::new(nq, ns);

    for t in 0..cfg.n_slots {
        let in_window = t >= cfg.warmup_slots;
        // Counters for slots before the window go to a scratch accumulator.
        let acc = if in_window {
            &mut batches[((t - cfg.warmup_slots) * n_batches / measured) as usize]
        } else {
            &mut scratch
        };
        acc.slots += 1;

        moving.clear();
        for (k, q) in queues.iter_mut().enumerate() {
            let busy = q.tasks.len().min(q.servers);
            if busy > 0 {
                acc.queues[k].busy_slots += 1;
            }
            let mut done = 0;
            for _ in 0..busy {
                if q.rng.random::<f64>() < q.mu {
                    done += 1;
                }
            }
            for _ in 0..done {
                let task = q.tasks.pop_front().expect("busy server holds a task");
                moving.push((k, task));
            }
        }

        arrivals.clear();
        for s in 0..ns {
            let st = &system.stations[s];
            if source_rng[s].random::<f64>() < st.p {
                let born = match cfg.source_model {
                    SourceModel::IndependentBernoulli => t,
                    SourceModel::StopAndWait => next_born[s],
                };
                next_born[s] = t + 1;
                let branch = if router_rng[s].random::<f64>() < st.alpha { 0 } else { 1 };
                whole.generated += 1;
                acc.stations[s].generated += 1;
                arrivals.push((
                    entry[s][branch],
                    Task {
                        born,
                        entered: t,
                        station: s,
                    },
                ));
            }
        }
        for &(src, task) in &moving {
            let qa = &mut acc.queues[src];
            qa.departures += 1;
            qa.sojourn_sum += t - task.entered;
            qa.sojourn_n += 1;
            match queues[src].dest {
                Some(d) => arrivals.push((d, task)),
                None => {
                    whole.delivered += 1;
                    let sa = &mut acc.stations[task.station];
                    sa.delivered += 1;
                    sa.sojourn_sum += t - task.born;
                }
            }
        }

        dropped_now.iter_mut().for_each(|d| *d = false);
        for &(d, task) in &arrivals {
            let q = &mut queues[d];
            let qa = &mut acc.queues[d];
            qa.offered += 1;
            if q.cap.is_none_or(|m| q.tasks.len() < m) {
                qa.accepted += 1;
                q.tasks.push_back(Task { entered: t, ..task });
            } else {
                qa.dropped += 1;
                whole.dropped += 1;
                dropped_now[d] = true;
            }
        }

        for (k, q) in queues.iter().enumerate() {
            let len = q.tasks.len();
            lengths[k] = len;
            let qa = &mut acc.queues[k];
            qa.occupancy_sum += len as u64;
            if dropped_now[k] {
                qa.drop_events += 1;
            }
            if in_window {
                let hist = &mut occupancy[k];
                if len >= hist.len() {
                    hist.resize(len + 1, 0);
                }
                hist[len] += 1;
            }
        }
        if in_window {
            if let (Some(r), Some(counts)) = (&radices, joint_counts.as_mut()) {
                counts[joint_index(&lengths, r)] += 1;
            }
        }
    }

    whole.in_system = queues.iter().map(|q| q.tasks.len() as u64).sum();
    debug_assert!(whole.is_conserved());

    let mut total = Acc::new(nq, ns);
    for b in &batches {
        total.add(b);
    }
    let track = cfg.track_sojourn;

    let per_queue = ids
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let a = &total.queues[k];
            QueueStats {
                queue: q,
                offered: a.offered,
                accepted: a.accepted,
                drop_events: a.drop_events,
                dropped_tasks: a.dropped,
                departures: a.departures,
                arrival_rate: rate(&total, &batches, |b| b.queues[k].offered),
                drop_event_rate: rate(&total, &batches, |b| b.queues[k].drop_events),
                drop_rate: rate(&total, &batches, |b| b.queues[k].dropped),
                throughput: rate(&total, &batches, |b| b.queues[k].departures),
                mean_length: rate(&total, &batches, |b| b.queues[k].occupancy_sum),
                busy_fraction: a.busy_slots as f64 / total.slots as f64,
                mean_sojourn: if track {
                    ratio(&total, &batches, |b| b.queues[k].sojourn_sum, |b| b.queues[k].sojourn_n)
                } else {
                    None
                },
                occupancy: occupancy[k].clone(),
            }
        })
        .collect();

    let stations = (0..ns)
        .map(|s| StationStats {
            generated: total.stations[s].generated,
            delivered: total.stations[s].delivered,
            throughput: rate(&total, &batches, |b| b.stations[s].delivered),
            mean_sojourn: if track {
                ratio(&total, &batches, |b| b.stations[s].sojourn_sum, |b| b.stations[s].delivered)
            } else {
                None
            },
        })
        .collect();

    let system_stats = SystemStats {
        throughput: rate(&total, &batches, Acc::delivered),
        drop_rate: rate(&total, &batches, Acc::dropped),
        mean_tasks: rate(&total, &batches, |b| b.queues.iter().map(|q| q.occupancy_sum).sum()),
        mean_sojourn: if track {
            ratio(
                &total,
                &batches,
                |b| b.stations.iter().map(|s| s.sojourn_sum).sum(),
                Acc::delivered,
            )
        } else {
            None
        },
    };

    let window = Counts {
        generated: total.stations.iter().map(|s| s.generated).sum(),
        delivered: total.delivered(),
        dropped: total.dropped(),
        in_system: whole.in_system,
    };

    Ok(SimResult {
        seed: cfg.seed,
        rng: RNG_ALGORITHM.to_string(),
        n_slots: cfg.n_slots,
        warmup_slots: cfg.warmup_slots,
        source_model: cfg.source_model,
        topology: system.topology(),
        per_queue,
        stations,
        system: system_stats,
        window,
        counts: whole,
        joint: radices.zip(joint_counts).map(|(radices, counts)| JointHistogram { radices, counts }),
    })
}

/// A single queue driven by independent Bernoulli feeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IsolatedQueue {
    Superposed(SuperposedQueueSpec),
    Core(CoreQueueSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolatedQueueResult {
    pub seed: u64,
    pub n_slots: u64,
    pub warmup_slots: u64,
    pub occupancy: Vec<u64>,
    pub arrival_rate: f64,
    pub drop_event_rate: f64,
    /// Dropped tasks per slot.
    pub drop_rate: f64,
    pub throughput: f64,
    pub mean_length: f64,
}

impl IsolatedQueueResult {
    pub fn occupancy_distribution(&self) -> Vec<f64> {
        normalize(&self.occupancy)
    }
}

/// Simulates one queue on its own with the same slot semantics as
/// [`simulate`] and the default warmup.
pub fn simulate_isolated_queue(queue: &IsolatedQueue, n_slots: u64, seed: u64) -> Result<IsolatedQueueResult> {
    let (feeds, mu, servers, cap): (Vec<f64>, f64, usize, Option<usize>) = match queue {
        IsolatedQueue::Superposed(s) => {
            s.validate()?;
            (vec![s.lambda_a, s.lambda_b], s.mu, 1, s.buffer.finite())
        }
        IsolatedQueue::Core(c) => {
            c.validate()?;
            (c.lambdas.to_vec(), c.mu, c.n_cpus, Some(c.m))
        }
    };
    if n_slots == 0 {
        return Err(Error::invalid("n_slots must be positive"));
    }
    let warmup = default_warmup(n_slots);
    let mut service = stream_rng(seed, STREAM_SERVICE, 0);
    let mut sources: Vec<ChaCha8Rng> = (0..feeds.len())
        .map(|f| stream_rng(seed, STREAM_SOURCE, f as u64))
        .collect();
    let mut occupancy = vec![0u64; cap.map_or(1, |m| m + 1)];
    let (mut offered, mut drop_events, mut dropped, mut departures, mut length_sum) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let mut len = 0usize;
    for t in 0..n_slots {
        let busy = len.min(servers);
        let mut done = 0;
        for _ in 0..busy {
            if service.random::<f64>() < mu {
                done += 1;
            }
        }
        len -= done;
        let mut arrived = 0u64;
        for (rng, &lambda) in sources.iter_mut().zip(&feeds) {
            if rng.random::<f64>() < lambda {
                arrived += 1;
            }
        }
        let room = cap.map_or(u64::MAX, |m| (m - len) as u64);
        let accepted = arrived.min(room);
        len += accepted as usize;
        if t >= warmup {
            offered += arrived;
            departures += done as u64;
            dropped += arrived - accepted;
            if arrived > accepted {
                drop_events += 1;
            }
            length_sum += len as u64;
            if len >= occupancy.len() {
                occupancy.resize(len + 1, 0);
            }
            occupancy[len] += 1;
        }
    }
    let slots = (n_slots - warmup) as f64;
    Ok(IsolatedQueueResult {
        seed,
        n_slots,
        warmup_slots: warmup,
        occupancy,
        arrival_rate: offered as f64 / slots,
        drop_event_rate: drop_events as f64 / slots,
        drop_rate: dropped as f64 / slots,
        throughput: departures as f64 / slots,
        mean_length: length_sum as f64 / slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{solve_steady_state, total_variation};
    use crate::subsystems::{build_superposed_queue_matrix, Buffer};

    fn symmetric(alpha: f64) -> SystemConfig {
        SystemConfig::one_bs(0.8, alpha, [0.5, 0.5, 0.5, 0.5, 0.5, 1.0], [10, 10, 10, 10, 10, 100])
    }

    #[test]
    fn no_traffic_generates_nothing() {
        let mut sys = symmetric(0.5);
        sys.stations[0].p = 0.0;
        let r = simulate(&SimConfig::new(sys, 10_000, 3)).unwrap();
        assert_eq!(r.counts, Counts::default());
        assert_eq!(r.system.throughput.value, 0.0);
        assert!(r.system.mean_sojourn.is_none());
    }

    #[test]
    fn deterministic_conveyor() {
        let sys = SystemConfig::one_bs(1.0, 1.0, [1.0; 6], [1, 1, 1, 1, 1, 1]);
        let r = simulate(&SimConfig::new(sys, 10_000, 1)).unwrap();
        assert_eq!(r.counts.dropped, 0);
        assert_eq!(r.system.throughput.value, 1.0);
        // One slot in each of Q1, Q2 and Q6.
        assert_eq!(r.system.mean_sojourn.unwrap().value, 3.0);
    }

    #[test]
    fn conservation_and_flow_identities() {
        let r = simulate(&SimConfig::new(symmetric(0.7), 50_000, 11)).unwrap();
        assert!(r.counts.is_conserved());
        let q = |n| r.queue(QueueId(n)).unwrap();
        assert_eq!(q(1).departures, q(2).offered);
        assert_eq!(q(3).departures, q(4).offered);
        assert_eq!(q(4).departures, q(5).offered);
        assert_eq!(q(2).departures + q(5).departures, q(6).offered);
        assert_eq!(q(6).departures, r.window.delivered);
        for s in &r.per_queue {
            assert_eq!(s.offered, s.accepted + s.dropped_tasks);
            assert!(s.drop_events <= s.dropped_tasks);
            assert!(s.occupancy.len() <= 101);
        }
    }

    #[test]
    fn same_seed_same_result() {
        let cfg = SimConfig::new(symmetric(0.4), 20_000, 42);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = SimConfig { seed: 43, ..cfg.clone() };
        assert_ne!(simulate(&cfg).unwrap(), simulate(&other).unwrap());
    }

    #[test]
    fn stop_and_wait_adds_retransmission_wait() {
        let sys = SystemConfig::one_bs(0.5, 1.0, [1.0; 6], [5; 6]);
        let mut cfg = SimConfig::new(sys, 200_000, 5);
        let plain = simulate(&cfg).unwrap();
        cfg.source_model = SourceModel::StopAndWait;
        let saw = simulate(&cfg).unwrap();
        let extra = saw.system.mean_sojourn.unwrap().value - plain.system.mean_sojourn.unwrap().value;
        // Geometric wait with mean (1 - p) / p = 1.
        assert!((extra - 1.0).abs() < 0.02, "{extra}");
    }

    #[test]
    fn two_cpu_core_departures_bounded() {
        let st = crate::config::StationParams {
            p: 0.9,
            alpha: 0.5,
            mu: [0.9; 5],
            buffers: [5; 5],
        };
        let sys = SystemConfig::two_bs(st, st, 0.3, 6);
        let r = simulate(&SimConfig::new(sys, 20_000, 9)).unwrap();
        assert!(r.counts.is_conserved());
        assert!(r.queue(QueueId(6)).unwrap().throughput.value <= 0.6 + 1e-12);
        assert_eq!(r.per_queue.len(), 11);
    }

    #[test]
    fn joint_histogram_guard() {
        let mut cfg = SimConfig::new(symmetric(0.5), 1000, 1);
        cfg.joint_histogram = true;
        assert!(matches!(cfg.validate(), Err(Error::Guard { .. })));
        let small = SystemConfig::one_bs(0.8, 0.5, [0.5; 6], [2; 6]);
        let mut cfg = SimConfig::new(small, 1000, 1);
        cfg.joint_histogram = true;
        let r = simulate(&cfg).unwrap();
        let j = r.joint.as_ref().unwrap();
        assert_eq!(j.counts.len(), 729);
        assert_eq!(j.counts.iter().sum::<u64>(), r.measured_slots());
    }

    #[test]
    fn isolated_idle_queue() {
        let spec = SuperposedQueueSpec {
            lambda_a: 0.0,
            lambda_b: 0.0,
            mu: 0.5,
            buffer: Buffer::Finite(4),
        };
        let r = simulate_isolated_queue(&IsolatedQueue::Superposed(spec), 1000, 1).unwrap();
        assert_eq!(r.occupancy_distribution()[0], 1.0);
    }

    #[test]
    fn isolated_superposed_matches_chain() {
        let spec = SuperposedQueueSpec {
            lambda_a: 0.2,
            lambda_b: 0.3,
            mu: 0.8,
            buffer: Buffer::Finite(4),
        };
        let ss = solve_steady_state(&build_superposed_queue_matrix(&spec).unwrap()).unwrap();
        let r = simulate_isolated_queue(&IsolatedQueue::Superposed(spec), 1_000_000, 7).unwrap();
        let tv = total_variation(ss.probs(), &r.occupancy_distribution());
        assert!(tv < 5e-3, "{tv}");
    }

    #[test]
    fn validation() {
        let cfg = SimConfig::new(symmetric(0.5), 100, 1).with_warmup(100);
        assert!(cfg.validate().is_err());
        let cfg = SimConfig::new(symmetric(0.5), 0, 1);
        assert!(cfg.validate().is_err());
    }
}
