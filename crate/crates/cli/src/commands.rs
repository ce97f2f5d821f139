use std::path::Path;
use std::time::Instant;

use chainq::config::{QueueId, SystemConfig};
use chainq::kpi::{KpiReport, SubsystemSteadyState};
use chainq::markov::{solve_steady_state, total_variation};
use chainq::oracle::{build_joint_chain, exact_kpis, exact_sojourn};
use chainq::pipeline::analyze;
use chainq::simulator::{simulate, Estimate, SimConfig, SimResult, SourceModel};
use chainq::sweep::{performance_region, run_sweep, Evaluator, SweepSpec};
use serde_json::json;

use crate::output::{fmt_f64, fmt_opt, OutputDir, RunManifest};
use crate::CliError;

pub const KPI_HEADER: [&str; 6] = ["queue", "arrival_rate", "drop_rate", "mean_length", "throughput", "delay"];

pub struct Context<'a> {
    pub subcommand: &'a str,
    pub config_path: &'a Path,
    pub config_text: String,
    pub system: SystemConfig,
    pub started: Instant,
}

impl Context<'_> {
    fn manifest(&self, seeds: Vec<u64>, parameters: serde_json::Value) -> Result<RunManifest, CliError> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: self.subcommand.into(),
            config_path: self.config_path.display().to_string(),
            config_text: self.config_text.clone(),
            config: serde_json::to_value(&self.system)?,
            seeds,
            parameters,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: Vec::new(),
        })
    }
}

/// One row per queue plus a final `system` row.
pub fn kpi_rows(report: &KpiReport) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = report
        .per_queue
        .iter()
        .map(|(q, k)| {
            vec![
                q.to_string(),
                fmt_f64(k.arrival_rate),
                fmt_f64(k.drop_rate),
                fmt_f64(k.mean_length),
                fmt_f64(k.throughput),
                fmt_opt(k.delay),
            ]
        })
        .collect();
    let offered: f64 = report
        .per_queue
        .iter()
        .filter(|(q, _)| matches!(q.station(), Some((_, 1 | 3))))
        .map(|(_, k)| k.arrival_rate)
        .sum();
    rows.push(vec![
        "system".into(),
        fmt_f64(offered),
        fmt_f64(report.system_drop_rate),
        fmt_f64(report.system_mean_tasks),
        fmt_f64(report.system_throughput),
        fmt_opt(report.system_delay),
    ]);
    rows
}

fn sidecar_name(name: &str) -> String {
    let slug: String = name
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("steady_{slug}.csv")
}

pub fn analyze_cmd(ctx: &Context, out: &Path, steady_state: bool) -> Result<(), CliError> {
    let report = analyze(&ctx.system)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_csv("kpis.csv", &KPI_HEADER, &kpi_rows(&report))?;
    if steady_state {
        for rec in &report.subsystems {
            match &rec.steady {
                SubsystemSteadyState::Tandem(ss) => {
                    let rows = ss
                        .iter()
                        .map(|(&(i, j), p)| vec![i.to_string(), j.to_string(), fmt_f64(p)])
                        .collect::<Vec<_>>();
                    dir.write_csv(&sidecar_name(&rec.name), &["first", "second", "probability"], &rows)?;
                }
                SubsystemSteadyState::Scalar(ss) => {
                    let rows = ss
                        .iter()
                        .map(|(&i, p)| vec![i.to_string(), fmt_f64(p)])
                        .collect::<Vec<_>>();
                    dir.write_csv(&sidecar_name(&rec.name), &["length", "probability"], &rows)?;
                }
            }
        }
    }
    dir.finish(ctx.manifest(vec![], json!({ "steady_state": steady_state }))?)?;
    Ok(())
}

pub struct SimArgs {
    pub seed: u64,
    pub slots: u64,
    pub warmup: Option<u64>,
    pub source_model: SourceModel,
}

impl SimArgs {
    fn config(&self, system: &SystemConfig) -> SimConfig {
        let mut cfg = SimConfig::new(system.clone(), self.slots, self.seed);
        if let Some(w) = self.warmup {
            cfg.warmup_slots = w;
        }
        cfg.source_model = self.source_model;
        cfg
    }
}

fn est(e: Estimate) -> [String; 2] {
    [fmt_f64(e.value), fmt_f64(e.std_error)]
}

fn est_opt(e: Option<Estimate>) -> [String; 2] {
    e.map(est).unwrap_or_default()
}

pub const SIM_HEADER: [&str; 12] = [
    "queue",
    "arrival_rate",
    "drop_rate",
    "drop_rate_se",
    "drop_event_rate",
    "mean_length",
    "mean_length_se",
    "throughput",
    "throughput_se",
    "mean_sojourn",
    "mean_sojourn_se",
    "busy_fraction",
];

pub fn sim_rows(r: &SimResult) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = r
        .per_queue
        .iter()
        .map(|s| {
            let mut row = vec![s.queue.to_string(), fmt_f64(s.arrival_rate.value)];
            row.extend(est(s.drop_rate));
            row.push(fmt_f64(s.drop_event_rate.value));
            row.extend(est(s.mean_length));
            row.extend(est(s.throughput));
            row.extend(est_opt(s.mean_sojourn));
            row.push(fmt_f64(s.busy_fraction));
            row
        })
        .collect();
    let slots = r.measured_slots() as f64;
    let mut row = vec!["system".into(), fmt_f64(r.window.generated as f64 / slots)];
    row.extend(est(r.system.drop_rate));
    row.push(String::new());
    row.extend(est(r.system.mean_tasks));
    row.extend(est(r.system.throughput));
    row.extend(est_opt(r.system.mean_sojourn));
    row.push(String::new());
    rows.push(row);
    rows
}

pub fn simulate_cmd(ctx: &Context, out: &Path, args: &SimArgs) -> Result<(), CliError> {
    let cfg = args.config(&ctx.system);
    let r = simulate(&cfg)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_csv("simulation.csv", &SIM_HEADER, &sim_rows(&r))?;
    let counts = [("window", r.window), ("run", r.counts)]
        .iter()
        .map(|(scope, c)| {
            vec![
                scope.to_string(),
                c.generated.to_string(),
                c.delivered.to_string(),
                c.dropped.to_string(),
                c.in_system.to_string(),
            ]
        })
        .collect::<Vec<_>>();
    dir.write_csv("counts.csv", &["scope", "generated", "delivered", "dropped", "in_system"], &counts)?;
    let params = json!({
        "slots": cfg.n_slots,
        "warmup": cfg.warmup_slots,
        "warmup_policy": if args.warmup.is_some() { "given" } else { "default: 1% of slots" },
        "batches": cfg.batches,
        "source_model": cfg.source_model,
        "rng": r.rng,
    });
    dir.finish(ctx.manifest(vec![args.seed], params)?)?;
    Ok(())
}

pub const SWEEP_HEADER: [&str; 10] = [
    "axis",
    "value",
    "throughput",
    "delay",
    "drop_rate",
    "objective",
    "evaluator",
    "seed",
    "optimal",
    "error",
];

fn evaluator_name(e: &Evaluator) -> &'static str {
    match e {
        Evaluator::Analytic => "analytic",
        Evaluator::Simulation { .. } => "sim",
    }
}

pub fn sweep_rows(spec: &SweepSpec) -> Result<(Vec<Vec<String>>, Option<f64>), CliError> {
    let points = run_sweep(spec)?;
    let mut best: Option<(f64, f64)> = None;
    for p in &points {
        if let Some(v) = p.report.as_ref().ok().and_then(|r| spec.objective.value(r)) {
            let better = match best {
                None => true,
                Some((_, b)) if spec.objective.maximize() => v > b,
                Some((_, b)) => v < b,
            };
            if better {
                best = Some((p.value, v));
            }
        }
    }
    let seed = spec.evaluator.seed().map(|s| s.to_string()).unwrap_or_default();
    let rows = points
        .iter()
        .map(|p| {
            let mut row = vec![spec.axis.name(), fmt_f64(p.value)];
            match &p.report {
                Ok(r) => row.extend([
                    fmt_f64(r.system_throughput),
                    fmt_opt(r.system_delay),
                    fmt_f64(r.system_drop_rate),
                ]),
                Err(_) => row.extend([String::new(), String::new(), String::new()]),
            }
            row.push(format!("{:?}", spec.objective).to_lowercase());
            row.push(evaluator_name(&spec.evaluator).into());
            row.push(seed.clone());
            row.push((best.map(|b| b.0) == Some(p.value)).to_string());
            row.push(p.report.as_ref().err().map(|e| e.to_string()).unwrap_or_default());
            row
        })
        .collect();
    Ok((rows, best.map(|b| b.0)))
}

pub fn sweep_cmd(ctx: &Context, out: &Path, spec: &SweepSpec) -> Result<(), CliError> {
    let (rows, best) = sweep_rows(spec)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_csv("sweep.csv", &SWEEP_HEADER, &rows)?;
    let seeds = spec.evaluator.seed().into_iter().collect();
    let params = json!({
        "axis": spec.axis.name(),
        "grid": spec.grid,
        "objective": spec.objective,
        "evaluator": spec.evaluator,
        "optimum": best,
        "tie_break": "smallest value",
    });
    dir.finish(ctx.manifest(seeds, params)?)?;
    Ok(())
}

pub const REGION_HEADER: [&str; 8] = ["mu", "m", "throughput", "delay", "drop_rate", "evaluator", "seed", "error"];

pub fn region_cmd(ctx: &Context, out: &Path, mu_grid: &[f64], m_grid: &[usize]) -> Result<(), CliError> {
    let entries = performance_region(mu_grid, m_grid, &ctx.system);
    let rows = entries
        .iter()
        .map(|e| {
            let mut row = vec![fmt_f64(e.mu), e.m.to_string()];
            match &e.point {
                Ok(p) => row.extend([fmt_f64(p.throughput), fmt_f64(p.delay), fmt_f64(p.drop_rate)]),
                Err(_) => row.extend([String::new(), String::new(), String::new()]),
            }
            row.extend(["analytic".to_string(), String::new()]);
            row.push(e.point.as_ref().err().map(|e| e.to_string()).unwrap_or_default());
            row
        })
        .collect::<Vec<_>>();
    let mut dir = OutputDir::create(out)?;
    dir.write_csv("region.csv", &REGION_HEADER, &rows)?;
    dir.finish(ctx.manifest(vec![], json!({ "mu_grid": mu_grid, "m_grid": m_grid }))?)?;
    Ok(())
}

/// Simulation estimates must lie within this many standard errors of the
/// exact value.
pub const SIM_SE_GATE: f64 = 3.0;
pub const JOINT_TV_GATE: f64 = 5e-3;
pub const THROUGHPUT_REL_GATE: f64 = 0.05;
pub const LENGTH_REL_GATE: f64 = 0.10;

pub const VALIDATE_HEADER: [&str; 10] = [
    "scope",
    "metric",
    "oracle",
    "simulation",
    "simulation_se",
    "analytic",
    "sim_error_in_se",
    "analytic_rel_error",
    "tolerance",
    "status",
];

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b).abs() / b.abs()
    }
}

struct Line {
    scope: String,
    metric: &'static str,
    oracle: Option<f64>,
    sim: Option<Estimate>,
    analytic: Option<f64>,
    /// Relative tolerance of the analytic value against the oracle, if gated.
    analytic_gate: Option<f64>,
}

impl Line {
    fn row(&self) -> Vec<String> {
        let sim_z = match (self.oracle, self.sim) {
            (Some(o), Some(s)) if s.std_error > 0.0 => Some((s.value - o).abs() / s.std_error),
            (Some(o), Some(s)) => Some(if s.value == o { 0.0 } else { f64::INFINITY }),
            _ => None,
        };
        // Without an oracle the analytic figure is compared with the simulation.
        let reference = self.oracle.or(self.sim.map(|s| s.value));
        let a_rel = match (self.analytic, reference) {
            (Some(a), Some(r)) => Some(rel(a, r)),
            _ => None,
        };
        let mut tol = Vec::new();
        let mut ok = true;
        let mut gated = false;
        if self.oracle.is_some() && self.sim.is_some() {
            tol.push(format!("sim<={SIM_SE_GATE}se"));
            ok &= sim_z.is_some_and(|z| z <= SIM_SE_GATE);
            gated = true;
        }
        if let (Some(g), true) = (self.analytic_gate, self.oracle.is_some()) {
            tol.push(format!("analytic<={}%", g * 100.0));
            ok &= a_rel.is_some_and(|r| r <= g);
            gated = true;
        }
        vec![
            self.scope.clone(),
            self.metric.into(),
            self.oracle.map(fmt_f64).unwrap_or_else(|| "skipped".into()),
            self.sim.map(|s| fmt_f64(s.value)).unwrap_or_default(),
            self.sim.map(|s| fmt_f64(s.std_error)).unwrap_or_default(),
            fmt_opt(self.analytic),
            fmt_opt(sim_z),
            fmt_opt(a_rel),
            tol.join(";"),
            if !gated {
                "reported".into()
            } else if ok {
                "pass".into()
            } else {
                "fail".into()
            },
        ]
    }
}

pub fn validate_cmd(ctx: &Context, out: &Path, buffers: Option<usize>, args: &SimArgs) -> Result<(), CliError> {
    let mut system = ctx.system.clone();
    if let Some(m) = buffers {
        for q in system.queues() {
            system.set_buffer(q, m)?;
        }
        system.validate()?;
    }
    let analytic = analyze(&system)?;
    let oracle = match build_joint_chain(&system) {
        Ok(chain) => {
            let ss = solve_steady_state(&chain.matrix)?;
            Some((exact_kpis(&ss, &chain, &system), ss))
        }
        Err(e @ chainq::Error::Guard { .. }) => {
            log::warn!("oracle skipped: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mut sim_cfg = args.config(&system);
    sim_cfg.joint_histogram = oracle.is_some();
    let sim = simulate(&sim_cfg)?;

    let mut lines = Vec::new();
    for q in system.queues() {
        let a = analytic.queue(q).copied();
        let o = oracle.as_ref().and_then(|(r, _)| r.queue(q).copied());
        let s = sim.queue(q).expect("simulated queue");
        let scope = q.to_string();
        lines.push(Line {
            scope: scope.clone(),
            metric: "throughput",
            oracle: o.map(|k| k.throughput),
            sim: Some(s.throughput),
            analytic: a.map(|k| k.throughput),
            analytic_gate: Some(THROUGHPUT_REL_GATE),
        });
        lines.push(Line {
            scope: scope.clone(),
            metric: "drop_rate",
            oracle: o.map(|k| k.drop_rate),
            sim: Some(s.drop_rate),
            analytic: a.map(|k| k.drop_rate),
            analytic_gate: None,
        });
        lines.push(Line {
            scope: scope.clone(),
            metric: "mean_length",
            oracle: o.map(|k| k.mean_length),
            sim: Some(s.mean_length),
            analytic: a.map(|k| k.mean_length),
            analytic_gate: Some(LENGTH_REL_GATE),
        });
        lines.push(Line {
            scope,
            metric: "sojourn",
            oracle: o.as_ref().and_then(exact_sojourn),
            sim: s.mean_sojourn,
            analytic: a.as_ref().and_then(exact_sojourn),
            analytic_gate: None,
        });
    }
    let o_sys = oracle.as_ref().map(|(r, _)| r);
    lines.push(Line {
        scope: "system".into(),
        metric: "throughput",
        oracle: o_sys.map(|r| r.system_throughput),
        sim: Some(sim.system.throughput),
        analytic: Some(analytic.system_throughput),
        analytic_gate: Some(THROUGHPUT_REL_GATE),
    });
    lines.push(Line {
        scope: "system".into(),
        metric: "drop_rate",
        oracle: o_sys.map(|r| r.system_drop_rate),
        sim: Some(sim.system.drop_rate),
        analytic: Some(analytic.system_drop_rate),
        analytic_gate: None,
    });
    lines.push(Line {
        scope: "system".into(),
        metric: "mean_tasks",
        oracle: o_sys.map(|r| r.system_mean_tasks),
        sim: Some(sim.system.mean_tasks),
        analytic: Some(analytic.system_mean_tasks),
        analytic_gate: None,
    });
    let mut rows: Vec<Vec<String>> = lines.iter().map(Line::row).collect();
    if let (Some((_, ss)), Some(joint)) = (&oracle, &sim.joint) {
        let tv = total_variation(ss.probs(), &joint.distribution());
        rows.push(vec![
            "joint".into(),
            "occupancy_tv".into(),
            "0".into(),
            fmt_f64(tv),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            format!("<={}", fmt_f64(JOINT_TV_GATE)),
            if tv <= JOINT_TV_GATE { "pass" } else { "fail" }.into(),
        ]);
    }
    let mut dir = OutputDir::create(out)?;
    dir.write_csv("validation.csv", &VALIDATE_HEADER, &rows)?;
    let params = json!({
        "buffers": buffers,
        "slots": sim_cfg.n_slots,
        "warmup": sim_cfg.warmup_slots,
        "oracle": if oracle.is_some() { "exact joint chain" } else { "skipped: state-space guard" },
    });
    dir.finish(ctx.manifest(vec![args.seed], params)?)?;
    Ok(())
}

/// Queue named on the command line as `Qn` or `n`.
pub fn parse_queue(s: &str) -> Option<QueueId> {
    s.trim_start_matches(['Q', 'q']).parse().ok().map(QueueId)
}
