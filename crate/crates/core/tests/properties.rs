use chainq::config::SystemConfig;
use chainq::oracle::{build_joint_chain, exact_kpis};
use chainq::markov::solve_steady_state;
use chainq::pipeline::analyze;
use chainq::simulator::{simulate, SimConfig};
use chainq::sweep::{
    default_alpha_grid, find_optimal_alpha, performance_region, run_sweep, Axis, Evaluator, Objective, SweepSpec,
};
use proptest::prelude::*;

fn symmetric() -> SystemConfig {
    SystemConfig::one_bs(0.8, 0.5, [0.5, 0.5, 0.5, 0.5, 0.5, 1.0], [10, 10, 10, 10, 10, 100])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn analytic_sweep_is_permutation_invariant(grid in proptest::collection::vec(0.0..=1.0f64, 1..8), seed in any::<u64>()) {
        let mut shuffled = grid.clone();
        // deterministic shuffle driven by the generated seed
        let n = shuffled.len();
        for i in (1..n).rev() {
            let j = (seed.rotate_left(i as u32) % (i as u64 + 1)) as usize;
            shuffled.swap(i, j);
        }
        let spec = |g: Vec<f64>| SweepSpec {
            base: symmetric(),
            axis: Axis::Alpha,
            grid: g,
            objective: Objective::Throughput,
            evaluator: Evaluator::Analytic,
        };
        let a = run_sweep(&spec(grid)).unwrap();
        let b = run_sweep(&spec(shuffled)).unwrap();
        for pa in &a {
            let pb = b.iter().find(|p| p.value == pa.value).unwrap();
            let (ra, rb) = (pa.report.as_ref().unwrap(), pb.report.as_ref().unwrap());
            prop_assert_eq!(ra.system_throughput, rb.system_throughput);
            prop_assert_eq!(ra.system_delay, rb.system_delay);
            prop_assert_eq!(ra.system_drop_rate, rb.system_drop_rate);
        }
    }
}

#[test]
fn throughput_optimum_never_decreases_as_services_speed_up() {
    let base = [0.2, 0.2, 0.6, 0.6, 0.6, 1.0];
    let grids: [Vec<f64>; 3] = [
        (0..=5).map(|k| k as f64 * 0.2).collect(),
        (0..=10).map(|k| k as f64 * 0.1).collect(),
        default_alpha_grid(),
    ];
    for grid in &grids {
        let mut last = f64::NEG_INFINITY;
        for s in [0.0, 0.25, 0.5, 0.75] {
            let mu = base.map(|m: f64| m + s * (1.0 - m));
            let cfg = SystemConfig::one_bs(0.8, 0.5, mu, [10, 10, 10, 10, 10, 100]);
            let (a, _) = find_optimal_alpha(&cfg, Axis::Alpha, Objective::Throughput, grid, Evaluator::Analytic).unwrap();
            assert!(a >= last, "grid {grid:?}: scale {s} gives {a} < {last}");
            last = a;
        }
    }
}

#[test]
fn faster_first_chain_takes_most_traffic() {
    let cfg = SystemConfig::one_bs(0.8, 0.5, [0.9, 0.5, 0.1, 0.5, 0.5, 1.0], [10, 10, 10, 10, 10, 100]);
    let (a, _) =
        find_optimal_alpha(&cfg, Axis::Alpha, Objective::Throughput, &default_alpha_grid(), Evaluator::Analytic).unwrap();
    assert!(a > 0.5, "{a}");
}

#[test]
fn region_trends() {
    // at a small service rate the buffer size moves throughput less than one
    // small step of the service rate does
    let ms = [5, 10, 20, 40];
    let region = performance_region(&[0.1, 0.2], &ms, &symmetric());
    let t = |mu: f64| -> Vec<f64> {
        region
            .iter()
            .filter(|e| e.mu == mu)
            .map(|e| e.point.as_ref().unwrap().throughput)
            .collect()
    };
    let (slow, faster) = (t(0.1), t(0.2));
    let spread = slow.iter().copied().fold(f64::NEG_INFINITY, f64::max) - slow.iter().copied().fold(f64::INFINITY, f64::min);
    let step = slow.iter().zip(&faster).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
    assert!(spread < step, "spread {spread} step {step}");

    let mus = [0.2, 0.4, 0.6, 0.8];
    let fixed_m = performance_region(&mus, &[10], &symmetric());
    let t: Vec<f64> = fixed_m.iter().map(|e| e.point.as_ref().unwrap().throughput).collect();
    assert!(t.windows(2).all(|w| w[1] > w[0]), "{t:?}");
}

#[test]
fn oracle_simulator_and_decomposition_agree_without_traffic() {
    let cfg = SystemConfig::one_bs(0.0, 0.5, [0.5, 0.5, 0.5, 0.5, 0.5, 0.9], [2; 6]);
    let chain = build_joint_chain(&cfg).unwrap();
    let exact = exact_kpis(&solve_steady_state(&chain.matrix).unwrap(), &chain, &cfg);
    let analytic = analyze(&cfg).unwrap();
    let sim = simulate(&SimConfig::new(cfg.clone(), 10_000, 3)).unwrap();
    for q in cfg.queues() {
        assert_eq!(exact.queue(q).unwrap().throughput, 0.0);
        assert_eq!(analytic.queue(q).unwrap().throughput, 0.0);
        assert_eq!(sim.queue(q).unwrap().throughput.value, 0.0);
    }
}

#[test]
fn oracle_and_decomposition_agree_with_certain_service() {
    // certain service and a single branch: the core sees one Bernoulli feed.
    // With both branches in use the two core feeds share routing draws one
    // slot apart, which the decomposition does not capture.
    let cfg = SystemConfig::one_bs(0.8, 1.0, [1.0; 6], [2; 6]);
    let chain = build_joint_chain(&cfg).unwrap();
    let exact = exact_kpis(&solve_steady_state(&chain.matrix).unwrap(), &chain, &cfg);
    let analytic = analyze(&cfg).unwrap();
    let sim = simulate(&SimConfig::new(cfg.clone(), 200_000, 4)).unwrap();
    for q in cfg.queues() {
        let (e, a, s) = (exact.queue(q).unwrap(), analytic.queue(q).unwrap(), sim.queue(q).unwrap());
        assert!((e.throughput - a.throughput).abs() < 1e-12, "{q}");
        assert!((e.mean_length - a.mean_length).abs() < 1e-12, "{q}");
        assert_eq!(e.drop_rate, 0.0);
        assert_eq!(s.drop_rate.value, 0.0);
        assert!(s.throughput.within(e.throughput, 4.0), "{q}");
    }
    assert!((exact.system_throughput - 0.8).abs() < 1e-12);
}
