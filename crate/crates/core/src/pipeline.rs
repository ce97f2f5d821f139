//! End-to-end analytic evaluation: solves the decomposed subsystems in
//! dependency order and assembles a [`KpiReport`].

use std::collections::BTreeMap;

use crate::config::{QueueId, StationParams, SystemConfig, Topology, CORE_QUEUE};
use crate::error::{Error, Result};
use crate::kpi::{
    core_drop_rate, mean_queue_length, single_queue_drop_rate, station_branch_delay, superposed_drop_rate_finite,
    system_delay_two_bs, tandem_drop_rates, tandem_mean_lengths, CoreStatus, KpiReport, QueueKpi, StationKpi,
    SubsystemRecord, SubsystemSteadyState,
};
use crate::markov::{solve_steady_state, SteadyState};
use crate::subsystems::tandem::{effective_arrival_rate, output_rate};
use crate::subsystems::{
    build_core_queue_matrix, build_single_queue_matrix, build_superposed_queue_matrix, build_tandem_matrix,
    infinite_superposed_steady_state, Buffer, CoreQueueSpec, InfiniteQueueSolution, SingleQueueSpec,
    SuperposedQueueSpec, TandemSpec, DEFAULT_STATE_CAP,
};

/// Solved edge side of one station.
#[derive(Debug, Clone)]
pub struct StationSolution {
    pub station: usize,
    pub primary: TandemSpec,
    pub secondary: TandemSpec,
    pub uplink: SingleQueueSpec,
    pub kpis: [QueueKpi; 5],
    /// Rates offered to the core by the primary and secondary uplinks.
    pub core_feeds: [f64; 2],
    pub records: Vec<SubsystemRecord>,
}

impl StationSolution {
    pub fn queue(&self, local: u8) -> QueueId {
        QueueId::local(self.station, local)
    }

    pub fn offered_to_core(&self) -> f64 {
        self.core_feeds.iter().sum()
    }
}

fn tandem_name(a: QueueId, b: QueueId) -> String {
    format!("{a}+{b}")
}

fn solve_tandem(spec: &TandemSpec, name: &str) -> Result<SteadyState<(usize, usize)>> {
    build_tandem_matrix(spec)
        .and_then(|p| solve_steady_state(&p))
        .map_err(|e| e.in_subsystem(name))
}

/// Solves the two tandems and the secondary uplink of one station.
pub fn solve_station(station: usize, params: &StationParams) -> Result<StationSolution> {
    let q = |k| QueueId::local(station, k);
    let primary = TandemSpec {
        lambda: params.p * params.alpha,
        mu_first: params.mu[0],
        mu_second: params.mu[1],
        m_first: params.buffers[0],
        m_second: params.buffers[1],
    };
    let secondary = TandemSpec {
        lambda: params.p * (1.0 - params.alpha),
        mu_first: params.mu[2],
        mu_second: params.mu[3],
        m_first: params.buffers[2],
        m_second: params.buffers[3],
    };
    let primary_name = tandem_name(q(1), q(2));
    let secondary_name = tandem_name(q(3), q(4));
    let (ss_primary, ss_secondary) = rayon::join(
        || solve_tandem(&primary, &primary_name),
        || solve_tandem(&secondary, &secondary_name),
    );
    let (ss_primary, ss_secondary) = (ss_primary?, ss_secondary?);

    let uplink = SingleQueueSpec {
        lambda: output_rate(&ss_secondary, secondary.mu_second),
        mu: params.mu[4],
        m: params.buffers[4],
    };
    let uplink_name = q(5).to_string();
    let ss_uplink = build_single_queue_matrix(&uplink)
        .and_then(|p| solve_steady_state(&p))
        .map_err(|e| e.in_subsystem(&uplink_name))?;

    let (d1, d2) = tandem_drop_rates(&ss_primary, &primary);
    let (l1, l2) = tandem_mean_lengths(&ss_primary);
    let (d3, d4) = tandem_drop_rates(&ss_secondary, &secondary);
    let (l3, l4) = tandem_mean_lengths(&ss_secondary);
    let kpis = [
        QueueKpi::from_parts(primary.lambda, d1, l1, primary.mu_first),
        QueueKpi::from_parts(
            effective_arrival_rate(&ss_primary, primary.mu_first),
            d2,
            l2,
            primary.mu_second,
        ),
        QueueKpi::from_parts(secondary.lambda, d3, l3, secondary.mu_first),
        QueueKpi::from_parts(
            effective_arrival_rate(&ss_secondary, secondary.mu_first),
            d4,
            l4,
            secondary.mu_second,
        ),
        QueueKpi::from_parts(
            uplink.lambda,
            single_queue_drop_rate(&ss_uplink, &uplink),
            mean_queue_length(&ss_uplink),
            uplink.mu,
        ),
    ];
    let core_feeds = [
        output_rate(&ss_primary, primary.mu_second),
        ss_uplink.marginal_probability(|&i| i > 0) * uplink.mu,
    ];
    let records = vec![
        SubsystemRecord {
            name: primary_name,
            queues: vec![q(1), q(2)],
            steady: SubsystemSteadyState::Tandem(ss_primary),
        },
        SubsystemRecord {
            name: secondary_name,
            queues: vec![q(3), q(4)],
            steady: SubsystemSteadyState::Tandem(ss_secondary),
        },
        SubsystemRecord {
            name: uplink_name,
            queues: vec![q(5)],
            steady: SubsystemSteadyState::Scalar(ss_uplink),
        },
    ];
    Ok(StationSolution {
        station,
        primary,
        secondary,
        uplink,
        kpis,
        core_feeds,
        records,
    })
}

fn station_delays(sol: &StationSolution) -> [Option<f64>; 5] {
    sol.kpis.map(|k| k.delay)
}

/// Analytic report for the one-station system.
pub fn analyze_one_bs(cfg: &SystemConfig) -> Result<KpiReport> {
    cfg.validate()?;
    if cfg.topology() != Topology::OneBs {
        return Err(Error::invalid("analyze_one_bs needs a one-station configuration"));
    }
    let station = solve_station(0, &cfg.stations[0])?;
    analyze_one_bs_core(cfg, station)
}

/// Finishes a one-station report from an already solved edge side. Only the
/// core queue is solved here.
pub fn analyze_one_bs_core(cfg: &SystemConfig, station: StationSolution) -> Result<KpiReport> {
    let core_name = CORE_QUEUE.to_string();
    let spec = SuperposedQueueSpec {
        lambda_a: station.core_feeds[0],
        lambda_b: station.core_feeds[1],
        mu: cfg.core.mu,
        buffer: cfg.core.buffer,
    };
    let lambda6 = spec.arrival_rate();
    let (core_kpi, status, core_ss) = match spec.buffer {
        Buffer::Finite(_) => {
            let ss = build_superposed_queue_matrix(&spec)
                .and_then(|p| solve_steady_state(&p))
                .map_err(|e| e.in_subsystem(&core_name))?;
            let kpi = QueueKpi::from_parts(
                lambda6,
                superposed_drop_rate_finite(&ss, &spec),
                mean_queue_length(&ss),
                spec.mu,
            );
            (kpi, CoreStatus::Finite, Some(ss))
        }
        Buffer::Infinite => {
            match infinite_superposed_steady_state(&spec, DEFAULT_STATE_CAP).map_err(|e| e.in_subsystem(&core_name))? {
                InfiniteQueueSolution::Stable { steady, tail_mass } => {
                    let kpi = QueueKpi::from_parts(lambda6, 0.0, mean_queue_length(&steady), spec.mu);
                    (kpi, CoreStatus::Stable { tail_mass }, Some(steady))
                }
                InfiniteQueueSolution::Unstable {
                    arrival_rate,
                    service_rate,
                } => {
                    log::warn!("core queue is unstable: arrival rate {arrival_rate} >= service rate {service_rate}");
                    let kpi = QueueKpi {
                        arrival_rate,
                        drop_rate: 0.0,
                        mean_length: f64::INFINITY,
                        throughput: arrival_rate,
                        delay: None,
                    };
                    (
                        kpi,
                        CoreStatus::Unstable {
                            arrival_rate,
                            service_rate,
                        },
                        None,
                    )
                }
            }
        }
    };

    let mut per_queue = BTreeMap::new();
    for (k, kpi) in station.kpis.iter().enumerate() {
        per_queue.insert(station.queue(k as u8 + 1), *kpi);
    }
    per_queue.insert(CORE_QUEUE, core_kpi);

    let alpha = cfg.stations[0].alpha;
    let branch = station_branch_delay(alpha, station_delays(&station));
    let total = match (branch, core_kpi.delay) {
        (Some(b), Some(d6)) => Some(b + d6),
        _ => None,
    };
    let mut report = KpiReport::new(Topology::OneBs, per_queue, core_kpi.throughput, total);
    report.stations = vec![StationKpi {
        branch_delay: branch,
        delay: total,
        throughput: core_kpi.throughput,
    }];
    report.core = status;
    report.subsystems = station.records;
    if let Some(ss) = core_ss {
        report.subsystems.push(SubsystemRecord {
            name: core_name,
            queues: vec![CORE_QUEUE],
            steady: SubsystemSteadyState::Scalar(ss),
        });
    }
    Ok(report)
}

/// Analytic report for the two-station system with a two-CPU core.
pub fn analyze_two_bs(cfg: &SystemConfig) -> Result<KpiReport> {
    cfg.validate()?;
    if cfg.topology() != Topology::TwoBs {
        return Err(Error::invalid("analyze_two_bs needs a two-station configuration"));
    }
    let (first, second) = rayon::join(
        || solve_station(0, &cfg.stations[0]),
        || solve_station(1, &cfg.stations[1]),
    );
    let (first, second) = (first?, second?);

    let m = cfg
        .core
        .buffer
        .finite()
        .ok_or_else(|| Error::invalid("two-station core needs a finite buffer"))?;
    let spec = CoreQueueSpec {
        lambdas: [
            first.core_feeds[0],
            first.core_feeds[1],
            second.core_feeds[0],
            second.core_feeds[1],
        ],
        mu: cfg.core.mu,
        n_cpus: cfg.core.n_cpus,
        m,
    };
    let core_name = CORE_QUEUE.to_string();
    let ss = build_core_queue_matrix(&spec)
        .and_then(|p| solve_steady_state(&p))
        .map_err(|e| e.in_subsystem(&core_name))?;
    let lambda6 = spec.arrival_rate();
    let core_kpi = QueueKpi::from_parts(lambda6, core_drop_rate(&ss, &spec), mean_queue_length(&ss), spec.mu);

    let mut per_queue = BTreeMap::new();
    for sol in [&first, &second] {
        for (k, kpi) in sol.kpis.iter().enumerate() {
            per_queue.insert(sol.queue(k as u8 + 1), *kpi);
        }
    }
    per_queue.insert(CORE_QUEUE, core_kpi);

    let stations: Vec<StationKpi> = [(&first, 0), (&second, 1)]
        .into_iter()
        .map(|(sol, s)| {
            let branch = station_branch_delay(cfg.stations[s].alpha, station_delays(sol));
            let delay = match (branch, core_kpi.delay) {
                (Some(b), Some(d6)) => Some(b + d6),
                _ => None,
            };
            let share = if lambda6 > 0.0 {
                sol.offered_to_core() / lambda6
            } else {
                0.0
            };
            StationKpi {
                branch_delay: branch,
                delay,
                throughput: core_kpi.throughput * share,
            }
        })
        .collect();
    let system_delay = system_delay_two_bs(
        cfg.stations[0].p,
        cfg.stations[1].p,
        stations[0].branch_delay,
        stations[1].branch_delay,
        core_kpi.delay,
    );
    let mut report = KpiReport::new(Topology::TwoBs, per_queue, core_kpi.throughput, system_delay);
    report.stations = stations;
    report.subsystems = first.records.into_iter().chain(second.records).collect();
    report.subsystems.push(SubsystemRecord {
        name: core_name,
        queues: vec![CORE_QUEUE],
        steady: SubsystemSteadyState::Scalar(ss),
    });
    Ok(report)
}

/// Dispatches on the configured topology.
pub fn analyze(cfg: &SystemConfig) -> Result<KpiReport> {
    match cfg.topology() {
        Topology::OneBs => analyze_one_bs(cfg),
        Topology::TwoBs => analyze_two_bs(cfg),
    }
}
