//! Parameter sweeps, exhaustive routing search and performance regions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{QueueId, SystemConfig};
use crate::error::{Error, Result};
use crate::kpi::KpiReport;
use crate::pipeline::analyze;
use crate::simulator::{simulate, SimConfig};

/// Default routing grid: 0 to 1 in steps of 0.05.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 * 0.05).collect()
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Routing probability of every station.
    Alpha,
    /// Routing probability of one station (0-based).
    AlphaOf(usize),
    /// Arrival probability of every station.
    P,
    P1,
    P2,
    Mu(QueueId),
    Buffer(QueueId),
}

impl Axis {
    pub fn apply(&self, cfg: &mut SystemConfig, value: f64) -> Result<()> {
        match *self {
            Axis::Alpha => cfg.stations.iter_mut().for_each(|s| s.alpha = value),
            Axis::AlphaOf(s) => cfg.station_mut(s)?.alpha = value,
            Axis::P => cfg.stations.iter_mut().for_each(|s| s.p = value),
            Axis::P1 => cfg.station_mut(0)?.p = value,
            Axis::P2 => cfg.station_mut(1)?.p = value,
            Axis::Mu(q) => cfg.set_mu(q, value)?,
            Axis::Buffer(q) => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::invalid(format!("buffer size must be a positive integer, got {value}")));
                }
                cfg.set_buffer(q, value as usize)?
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        match self {
            Axis::Alpha => "alpha".into(),
            Axis::AlphaOf(s) => format!("alpha{}", s + 1),
            Axis::P => "p".into(),
            Axis::P1 => "p1".into(),
            Axis::P2 => "p2".into(),
            Axis::Mu(q) => format!("mu{}", q.0),
            Axis::Buffer(q) => format!("m{}", q.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Throughput,
    Delay,
    DropRate,
}

impl Objective {
    /// Value of the objective in `report`; `None` when undefined.
    pub fn value(&self, report: &KpiReport) -> Option<f64> {
        match self {
            Objective::Throughput => Some(report.system_throughput),
            Objective::Delay => report.system_delay,
            Objective::DropRate => Some(report.system_drop_rate),
        }
    }

    pub fn maximize(&self) -> bool {
        matches!(self, Objective::Throughput)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    Analytic,
    Simulation { seed: u64, n_slots: u64, warmup: u64 },
}

impl Evaluator {
    pub fn evaluate(&self, cfg: &SystemConfig) -> Result<KpiReport> {
        match *self {
            Evaluator::Analytic => analyze(cfg),
            Evaluator::Simulation { seed, n_slots, warmup } => {
                let sim = SimConfig::new(cfg.clone(), n_slots, seed).with_warmup(warmup);
                Ok(simulate(&sim)?.to_kpi_report())
            }
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Evaluator::Analytic => None,
            Evaluator::Simulation { seed, .. } => Some(*seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: SystemConfig,
    pub axis: Axis,
    pub grid: Vec<f64>,
    pub objective: Objective,
    pub evaluator: Evaluator,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("sweep grid is empty"));
        }
        for &v in &self.grid {
            let mut cfg = self.base.clone();
            self.axis.apply(&mut cfg, v)?;
            cfg.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub report: Result<KpiReport>,
}

/// Evaluates every grid value in parallel; results keep grid order and a
/// failing point does not stop the others.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    Ok(spec
        .grid
        .par_iter()
        .map(|&value| {
            let mut cfg = spec.base.clone();
            let report = spec.axis.apply(&mut cfg, value).and_then(|_| spec.evaluator.evaluate(&cfg));
            if let Err(e) = &report {
                log::warn!("{} = {value}: {e}", spec.axis.name());
            }
            SweepPoint { value, report }
        })
        .collect())
}

/// Grid argmax (throughput) or argmin (delay, drop rate) over routing values.
/// Ties go to the smallest value; points with an undefined objective are
/// skipped.
pub fn find_optimal_alpha(
    cfg: &SystemConfig,
    axis: Axis,
    objective: Objective,
    grid: &[f64],
    evaluator: Evaluator,
) -> Result<(f64, KpiReport)> {
    if !matches!(axis, Axis::Alpha | Axis::AlphaOf(_)) {
        return Err(Error::invalid("routing search needs an alpha axis"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spec = SweepSpec {
        base: cfg.clone(),
        axis,
        grid: sorted,
        objective,
        evaluator,
    };
    let mut best: Option<(f64, f64, KpiReport)> = None;
    for point in run_sweep(&spec)? {
        let Ok(report) = point.report else { continue };
        let Some(v) = objective.value(&report) else { continue };
        let better = match &best {
            None => true,
            Some((_, b, _)) if objective.maximize() => v > *b,
            Some((_, b, _)) => v < *b,
        };
        if better {
            best = Some((point.value, v, report));
        }
    }
    best.map(|(a, _, r)| (a, r))
        .ok_or_else(|| Error::invalid("every grid point failed or had an undefined objective"))
}

/// One point of a performance region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub mu: f64,
    pub m: usize,
    pub throughput: f64,
    pub delay: f64,
    pub drop_rate: f64,
}

#[derive(Debug)]
pub struct RegionEntry {
    pub mu: f64,
    pub m: usize,
    pub point: Result<RegionPoint>,
}

/// Sets `mu3 = mu4 = mu5 = mu` and `M1..M5 = m` on the first station.
pub fn region_config(template: &SystemConfig, mu: f64, m: usize) -> Result<SystemConfig> {
    let mut cfg = template.clone();
    let st = cfg.station_mut(0)?;
    st.mu[2] = mu;
    st.mu[3] = mu;
    st.mu[4] = mu;
    st.buffers = [m; 5];
    Ok(cfg)
}

/// Analytic evaluation over the cross product of `mu_grid` and `m_grid`, in
/// row-major order (`mu` outer).
pub fn performance_region(mu_grid: &[f64], m_grid: &[usize], template: &SystemConfig) -> Vec<RegionEntry> {
    let cells: Vec<(f64, usize)> = mu_grid
        .iter()
        .flat_map(|&mu| m_grid.iter().map(move |&m| (mu, m)))
        .collect();
    cells
        .par_iter()
        .map(|&(mu, m)| {
            let point = region_config(template, mu, m).and_then(|cfg| analyze(&cfg)).and_then(|r| {
                let delay = r
                    .system_delay
                    .ok_or_else(|| Error::invalid("delay undefined: the system carries no traffic"))?;
                Ok(RegionPoint {
                    mu,
                    m,
                    throughput: r.system_throughput,
                    delay,
                    drop_rate: r.system_drop_rate,
                })
            });
            RegionEntry { mu, m, point }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric(alpha: f64) -> SystemConfig {
        SystemConfig::one_bs(0.8, alpha, [0.5, 0.5, 0.5, 0.5, 0.5, 1.0], [10, 10, 10, 10, 10, 100])
    }

    #[test]
    fn idle_sweep_gives_zero_reports() {
        let mut base = symmetric(0.5);
        base.stations[0].p = 0.0;
        let spec = SweepSpec {
            base,
            axis: Axis::Alpha,
            grid: vec![0.0, 1.0],
            objective: Objective::Throughput,
            evaluator: Evaluator::Analytic,
        };
        let pts = run_sweep(&spec).unwrap();
        assert_eq!(pts.len(), 2);
        for p in pts {
            let r = p.report.unwrap();
            assert_eq!(r.system_throughput, 0.0);
            assert_eq!(r.system_drop_rate, 0.0);
        }
    }

    #[test]
    fn order_preserved_and_deterministic() {
        let grid = vec![0.9, 0.1, 0.5, 0.3];
        let spec = SweepSpec {
            base: symmetric(0.5),
            axis: Axis::Alpha,
            grid: grid.clone(),
            objective: Objective::Throughput,
            evaluator: Evaluator::Analytic,
        };
        let a = run_sweep(&spec).unwrap();
        let mut rev = spec.clone();
        rev.grid.reverse();
        let b = run_sweep(&rev).unwrap();
        assert_eq!(a.iter().map(|p| p.value).collect::<Vec<_>>(), grid);
        for (x, y) in a.iter().zip(b.iter().rev()) {
            let (x, y) = (x.report.as_ref().unwrap(), y.report.as_ref().unwrap());
            assert_eq!(x.system_throughput.to_bits(), y.system_throughput.to_bits());
        }
    }

    #[test]
    fn invalid_grid_rejected() {
        let spec = SweepSpec {
            base: symmetric(0.5),
            axis: Axis::Buffer(QueueId(1)),
            grid: vec![2.5],
            objective: Objective::Delay,
            evaluator: Evaluator::Analytic,
        };
        assert!(run_sweep(&spec).is_err());
        let empty = SweepSpec { grid: vec![], ..spec };
        assert!(run_sweep(&empty).is_err());
    }

    #[test]
    fn ties_go_to_smallest_alpha() {
        let mut cfg = symmetric(0.5);
        cfg.stations[0].p = 0.0;
        let (a, _) = find_optimal_alpha(&cfg, Axis::Alpha, Objective::DropRate, &[0.6, 0.2, 0.4], Evaluator::Analytic).unwrap();
        assert_eq!(a, 0.2);
    }

    #[test]
    fn faster_first_server_attracts_traffic() {
        let cfg = SystemConfig::one_bs(0.8, 0.5, [0.9, 0.5, 0.1, 0.5, 0.5, 0.95], [10, 10, 10, 10, 10, 100]);
        let (a, _) = find_optimal_alpha(&cfg, Axis::Alpha, Objective::Throughput, &default_alpha_grid(), Evaluator::Analytic).unwrap();
        assert!(a > 0.5, "{a}");
    }

    #[test]
    fn single_region_cell_matches_analysis() {
        let template = symmetric(0.5);
        let pts = performance_region(&[0.5], &[10], &template);
        assert_eq!(pts.len(), 1);
        let r = analyze(&template).unwrap();
        let p = pts[0].point.as_ref().unwrap();
        assert_eq!(p.throughput, r.system_throughput);
        assert_eq!(p.delay, r.system_delay.unwrap());
    }
}
