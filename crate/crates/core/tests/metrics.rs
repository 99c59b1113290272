mod common;

use ccb_core::benchmark::{benchmark_policy, StationaryPolicy};
use ccb_core::controller::{
    run, ControllerConfig, CostShift, PotentialSpec, ResolvedConfig, RoundRecord, RunTrace,
};
use ccb_core::envs::{ContextSchedule, FeasibilityTag, NoiseLaw, ProblemInstance};
use ccb_core::lyapunov::{Potential, TuningCase};
use ccb_core::metrics::{compute_metrics, prop1_diagnostic, PROP1_MIN_SEEDS};
use ccb_core::oracle::ErrorLedger;
use ccb_core::Table;
use rand::SeedableRng;

fn one_context(f: Vec<f64>, g: Vec<f64>, budget: f64) -> ProblemInstance {
    let k = f.len();
    ProblemInstance {
        name: "single context".into(),
        num_contexts: 1,
        num_arms: k,
        null_arm: None,
        f_star: Table::from_rows(vec![f]).unwrap(),
        g_star: vec![Table::from_rows(vec![g]).unwrap()],
        reward_law: NoiseLaw::Noiseless,
        cost_laws: vec![NoiseLaw::Noiseless],
        schedule: ContextSchedule::Iid { probs: vec![1.0] },
        budget,
        tag: FeasibilityTag::InExpectation,
    }
}

fn record(round: usize, action: usize, reward: f64, cost: f64, queue: f64) -> RoundRecord {
    RoundRecord {
        round,
        context: 0,
        action,
        reward,
        costs: vec![cost],
        queue: vec![queue],
        gamma: 1.0,
        normalizer: 1.0,
        z: 1.0,
        phi_prime: vec![0.0],
        surrogate: vec![0.0; 2],
        probs: vec![0.5; 2],
        f_hat: vec![0.0; 2],
        g_hat: vec![vec![0.0; 2]],
        saturated: false,
        frozen: false,
        guess: None,
    }
}

fn trace(records: Vec<RoundRecord>) -> RunTrace {
    RunTrace {
        final_queue: records.last().map_or(vec![0.0], |r| r.queue.clone()),
        records,
        config: ResolvedConfig {
            potential: Potential::Quadratic { v: 1.0 },
            oracle_error: 1.0,
            cost_shift: 0.0,
        },
        reward_ledger: ErrorLedger::default(),
        cost_ledgers: vec![ErrorLedger::default()],
        stop_round: None,
        budgets: None,
        ensemble: None,
    }
}

#[test]
fn playing_the_benchmark_has_zero_regret() {
    let inst = one_context(vec![0.7, 0.2], vec![0.0, 0.0], 0.0);
    let pol = StationaryPolicy::point_masses(&[0], 2);
    let t = trace((1..=20).map(|r| record(r, 0, 0.7, 0.0, 0.0)).collect());
    let m = compute_metrics(&t, &pol, FeasibilityTag::InExpectation, &inst).unwrap();
    assert!(m.pseudo_regret.iter().all(|&r| r == 0.0));
    assert!(m.realized_regret.iter().all(|&r| r == 0.0));
}

#[test]
fn regret_accumulates_benchmark_value() {
    let inst = one_context(vec![0.0, 0.5], vec![0.0, 0.0], 0.0);
    let pol = StationaryPolicy::point_masses(&[1], 2);
    let t = trace((1..=100).map(|r| record(r, 0, 0.0, 0.0, 0.0)).collect());
    let m = compute_metrics(&t, &pol, FeasibilityTag::InExpectation, &inst).unwrap();
    assert!((m.final_regret() - 50.0).abs() < 1e-9);
    assert_eq!(m.len(), 100);
}

#[test]
fn ccv_follows_the_benchmark_kind() {
    let inst = one_context(vec![0.0, 0.5], vec![0.0, 1.0], 30.0);
    let pol = StationaryPolicy::point_masses(&[0], 2);
    let t = trace((1..=37).map(|r| record(r, 1, 0.5, 1.0, r as f64)).collect());
    let lt = compute_metrics(&t, &pol, FeasibilityTag::LongTerm, &inst).unwrap();
    assert_eq!(lt.final_ccv(), 7.0);
    assert_eq!(lt.cumulative_cost[0].last().copied(), Some(37.0));
    let rw = compute_metrics(&t, &pol, FeasibilityTag::InExpectation, &inst).unwrap();
    assert_eq!(rw.final_ccv(), 37.0);
    assert_eq!(rw.queue[0], (1..=37).map(|r| r as f64).collect::<Vec<_>>());
}

#[test]
fn missing_policy_row_is_rejected() {
    let inst = one_context(vec![0.0, 0.5], vec![0.0, 1.0], 0.0);
    let pol = StationaryPolicy { rows: vec![] };
    let t = trace(vec![record(1, 0, 0.0, 0.0, 0.0)]);
    assert!(compute_metrics(&t, &pol, FeasibilityTag::InExpectation, &inst).is_err());
}

fn knapsack_config() -> ControllerConfig {
    ControllerConfig {
        potential: PotentialSpec::Auto {
            case: TuningCase::InExpectation,
        },
        oracle_error: 2.0,
        cost_shift: CostShift::None,
    }
}

#[test]
fn nonnegative_costs_ccv_equals_final_queue_and_metrics_are_pure() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(4);
    let inst = common::random_knapsack(&mut rng, 3, 4, 10.0);
    let bench = benchmark_policy(&inst, FeasibilityTag::InExpectation, 500).unwrap();
    let learners = common::class_learners(&inst, 3, &mut rng);
    let t = run(&inst, &knapsack_config(), learners, 500, 9).unwrap();
    let a = compute_metrics(&t, &bench.policy, FeasibilityTag::InExpectation, &inst).unwrap();
    let b = compute_metrics(&t, &bench.policy, FeasibilityTag::InExpectation, &inst).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.final_ccv(), t.final_queue[0]);
}

#[test]
fn drift_diagnostic_on_zero_cost_instance() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let mut inst = common::random_knapsack(&mut rng, 2, 3, 0.0);
    inst.g_star[0] = Table::constant(2, 3, 0.0).unwrap();
    let bench = benchmark_policy(&inst, FeasibilityTag::InExpectation, 300).unwrap();
    let cfg = knapsack_config();
    let traces: Vec<RunTrace> = (0..PROP1_MIN_SEEDS as u64)
        .map(|s| run(&inst, &cfg, common::class_learners(&inst, 3, &mut rng), 300, s).unwrap())
        .collect();
    assert!(traces.iter().all(|t| t.records.iter().all(|r| r.queue[0] == 0.0)));
    let pot = traces[0].config.potential;
    let u = traces[0].config.oracle_error;
    let rep = prop1_diagnostic(&traces, &bench.policy, FeasibilityTag::InExpectation, &inst, &pot, u).unwrap();
    assert_eq!((rep.lhs[0], rep.rhs[0]), (0.0, 0.0));
    assert!(rep.holds_within(3.0));
    let k = inst.num_arms as f64;
    for t in 1..rep.rhs.len() {
        assert!(rep.rhs[t] >= 4.0 * (k * u * t as f64).sqrt() - 1e-9);
        assert!(rep.slack[t] > 0.0);
    }

    let few = &traces[..PROP1_MIN_SEEDS - 1];
    assert!(prop1_diagnostic(few, &bench.policy, FeasibilityTag::InExpectation, &inst, &pot, u).is_err());
    assert!(prop1_diagnostic(&traces, &bench.policy, FeasibilityTag::AlmostSure, &inst, &pot, u).is_err());
}
