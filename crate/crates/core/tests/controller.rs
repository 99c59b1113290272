mod common;

use ccb_core::controller::{
    ensemble_run, hard_stop_run, run, run_with_source, AdaptiveContexts, BudgetScaling,
    ControllerConfig, CostShift, EnsembleConfig, PotentialSpec, RoundRecord,
};
use ccb_core::envs::{ContextSchedule, FeasibilityTag, NoiseLaw, ProblemInstance};
use ccb_core::igw::{igw_solve, LossVector};
use ccb_core::lyapunov::Potential;
use ccb_core::{rng_for, RngStream, Table};
use rand::{Rng, SeedableRng};

fn fixed(potential: Potential, u: f64) -> ControllerConfig {
    ControllerConfig {
        potential: PotentialSpec::Fixed { potential },
        oracle_error: u,
        cost_shift: CostShift::None,
    }
}

fn scripted_instance() -> ProblemInstance {
    ProblemInstance {
        name: "scripted three rounds".into(),
        num_contexts: 2,
        num_arms: 3,
        null_arm: None,
        f_star: Table::from_rows(vec![vec![0.6, 0.2, -0.4], vec![-0.2, 0.8, 0.1]]).unwrap(),
        g_star: vec![Table::from_rows(vec![vec![0.7, -0.3, 0.0], vec![0.5, 0.9, -0.6]]).unwrap()],
        reward_law: NoiseLaw::Rademacher,
        cost_laws: vec![NoiseLaw::Rademacher],
        schedule: ContextSchedule::Scripted { sequence: vec![0, 1, 0] },
        budget: 0.0,
        tag: FeasibilityTag::InExpectation,
    }
}

/// Independent re-simulation: plain bisection for the IGW normalizer,
/// inverse-CDF sampling and two-point draws on the same random streams.
fn hand_simulation(inst: &ProblemInstance, v: f64, u: f64, seed: u64) -> Vec<(usize, usize, f64, f64, f64, f64)> {
    let mut act = rng_for(seed, RngStream::Actions);
    let mut out = rng_for(seed, RngStream::Outcomes);
    let k = inst.num_arms as f64;
    let (mut q, mut z_sum) = (0.0f64, 0.0);
    let mut rows = vec![];
    for (t, &x) in [0usize, 1, 0].iter().enumerate() {
        let d = 2.0 * q / v;
        let l: Vec<f64> = (0..3).map(|a| inst.f_star.get(x, a) - d * inst.g_star[0].get(x, a)).collect();
        let z = (d * d).max(1.0);
        z_sum += z;
        let gamma = (k / u * z_sum).sqrt() / (2.0 * z);
        let best = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gaps: Vec<f64> = l.iter().map(|li| best - li).collect();
        let mass = |lam: f64| gaps.iter().map(|g| 1.0 / (lam + 2.0 * gamma * g)).sum::<f64>();
        let (mut lo, mut hi) = (1.0, k);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lam = 0.5 * (lo + hi);
        let p: Vec<f64> = gaps.iter().map(|g| 1.0 / (lam + 2.0 * gamma * g)).collect();
        let uu: f64 = act.gen();
        let mut acc = 0.0;
        let mut a = 2;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if uu < acc {
                a = i;
                break;
            }
        }
        let r = if out.gen::<f64>() < 0.5 * (1.0 + inst.f_star.get(x, a)) { 1.0 } else { -1.0 };
        let c = if out.gen::<f64>() < 0.5 * (1.0 + inst.g_star[0].get(x, a)) { 1.0 } else { -1.0 };
        q = (q + c).max(0.0);
        rows.push((t + 1, a, r, c, q, gamma));
    }
    rows
}

#[test]
fn golden_three_round_trace() {
    let inst = scripted_instance();
    inst.validate().unwrap();
    let seed = 20240611;
    let trace = run(&inst, &fixed(Potential::Quadratic { v: 2.0 }, 1.0), common::pinned_learners(&inst), 3, seed).unwrap();
    let expected = hand_simulation(&inst, 2.0, 1.0, seed);
    assert_eq!(trace.records.len(), 3);
    for (rec, (t, a, r, c, q, gamma)) in trace.records.iter().zip(&expected) {
        assert_eq!(rec.round, *t);
        assert_eq!(rec.action, *a);
        assert_eq!(rec.reward, *r);
        assert_eq!(rec.costs, vec![*c]);
        assert!((rec.queue[0] - q).abs() < 1e-15);
        assert!((rec.gamma - gamma).abs() < 1e-12);
    }
    // the first round always sees an empty queue
    assert_eq!(trace.records[0].phi_prime, vec![0.0]);
    assert_eq!(trace.records[0].gamma, 0.5 * 3f64.sqrt());

    if std::env::var_os("CCB_BLESS").is_some() {
        let rows: Vec<_> = trace
            .records
            .iter()
            .map(|r| {
                serde_json::json!({
                    "context": r.context, "action": r.action, "reward": r.reward,
                    "cost": r.costs[0], "queue": r.queue[0], "gamma": r.gamma,
                    "normalizer": r.normalizer,
                })
            })
            .collect();
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden_trace.json");
        std::fs::write(path, serde_json::to_string_pretty(&rows).unwrap() + "\n").unwrap();
        return;
    }
    let golden: Vec<serde_json::Value> =
        serde_json::from_str(include_str!("data/golden_trace.json")).unwrap();
    assert_eq!(golden.len(), 3);
    for (rec, g) in trace.records.iter().zip(&golden) {
        assert_eq!(rec.context as u64, g["context"].as_u64().unwrap());
        assert_eq!(rec.action as u64, g["action"].as_u64().unwrap());
        assert_eq!(rec.reward, g["reward"].as_f64().unwrap());
        assert_eq!(rec.costs[0], g["cost"].as_f64().unwrap());
        assert!((rec.queue[0] - g["queue"].as_f64().unwrap()).abs() < 1e-12);
        assert!((rec.gamma - g["gamma"].as_f64().unwrap()).abs() < 1e-12);
        assert!((rec.normalizer - g["normalizer"].as_f64().unwrap()).abs() < 1e-9);
    }
}

fn zero_cost_instance() -> ProblemInstance {
    ProblemInstance {
        name: "zero cost".into(),
        num_contexts: 1,
        num_arms: 2,
        null_arm: None,
        f_star: Table::from_rows(vec![vec![1.0, 0.0]]).unwrap(),
        g_star: vec![Table::constant(1, 2, 0.0).unwrap()],
        reward_law: NoiseLaw::Noiseless,
        cost_laws: vec![NoiseLaw::Noiseless],
        schedule: ContextSchedule::Iid { probs: vec![1.0] },
        budget: 0.0,
        tag: FeasibilityTag::InExpectation,
    }
}

fn assert_reduces_to_unconstrained(records: &[RoundRecord]) {
    for r in records {
        let neg: Vec<f64> = r.f_hat.iter().map(|v| -v).collect();
        let d = igw_solve(&LossVector::new(neg).unwrap(), r.gamma).unwrap();
        assert_eq!(d.probs(), r.probs.as_slice());
    }
}

#[test]
fn zero_costs_reduce_to_unconstrained_igw() {
    let inst = zero_cost_instance();
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let trace = run(&inst, &fixed(Potential::Quadratic { v: 3.0 }, 1.0), common::class_learners(&inst, 4, &mut rng), 300, 1).unwrap();
    assert!(trace.records.iter().all(|r| r.queue == vec![0.0] && r.phi_prime == vec![0.0]));
    assert_reduces_to_unconstrained(&trace.records);
}

#[test]
fn zero_multiplier_ignores_cost_estimates() {
    // every cost is -1, so the queue never leaves zero
    let mut inst = zero_cost_instance();
    inst.g_star = vec![Table::constant(1, 2, -1.0).unwrap()];
    let trace = run(&inst, &fixed(Potential::Quadratic { v: 1.0 }, 2.0), common::pinned_learners(&inst), 50, 3).unwrap();
    assert_reduces_to_unconstrained(&trace.records);
}

#[test]
fn empty_horizon_and_determinism() {
    let inst = scripted_instance();
    let cfg = fixed(Potential::Exponential { rate: 0.3 }, 1.0);
    let t = run(&inst, &cfg, common::pinned_learners(&inst), 0, 9).unwrap();
    assert!(t.is_empty());
    let mut inst = inst;
    inst.schedule = ContextSchedule::Iid { probs: vec![0.3, 0.7] };
    let a = run(&inst, &cfg, common::pinned_learners(&inst), 500, 9).unwrap();
    let b = run(&inst, &cfg, common::pinned_learners(&inst), 500, 9).unwrap();
    assert_eq!(a, b);
    let c = run(&inst, &cfg, common::pinned_learners(&inst), 500, 10).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn knapsack_queue_equals_cost_sum() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(77);
    let inst = common::random_knapsack(&mut rng, 4, 5, 100.0);
    let cfg = ControllerConfig {
        potential: PotentialSpec::Auto { case: ccb_core::lyapunov::TuningCase::Knapsack },
        oracle_error: 8f64.ln(),
        cost_shift: CostShift::None,
    };
    let trace = run(&inst, &cfg, common::class_learners(&inst, 7, &mut rng), 1000, 4).unwrap();
    let total: f64 = trace.records.iter().map(|r| r.costs[0]).sum();
    assert_eq!(trace.final_queue[0], total);
    assert!(trace.reward_ledger.rounds == 1000 && trace.cost_ledgers[0].truth_rounds == 1000);
}

#[test]
fn full_budget_shift_keeps_queue_empty() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(2);
    let mut inst = common::random_knapsack(&mut rng, 3, 3, 400.0);
    inst.cost_laws = vec![NoiseLaw::Rademacher];
    let cfg = ControllerConfig {
        potential: PotentialSpec::Auto { case: ccb_core::lyapunov::TuningCase::LinearConstraints },
        oracle_error: 1.0,
        cost_shift: CostShift::BudgetPerRound,
    };
    let trace = run(&inst, &cfg, common::pinned_learners(&inst), 400, 8).unwrap();
    assert_eq!(trace.config.cost_shift, 1.0);
    assert!(trace.records.iter().all(|r| r.queue[0] == 0.0));
    // oracles saw the unshifted costs
    assert!(trace.records.iter().any(|r| r.costs[0] == 1.0));

    inst.budget = 401.0;
    assert!(run(&inst, &cfg, common::pinned_learners(&inst), 400, 8).is_err());
}

#[test]
fn hard_stop_examples() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(31);
    let inst = common::random_knapsack(&mut rng, 3, 4, 300.0);
    let cfg = fixed(Potential::Quadratic { v: 20.0 }, 1.0);
    let learners = common::class_learners(&inst, 3, &mut rng);
    // a budget equal to the horizon never binds
    let plain = run(&inst, &cfg, learners.clone(), 300, 5).unwrap();
    let stopped = hard_stop_run(&inst, &cfg, learners.clone(), 300, 300.0, BudgetScaling::Multiplicative { c: 1.0 }, 5).unwrap();
    assert_eq!(stopped.stop_round, None);
    assert_eq!(plain.records, stopped.records);

    let tight = hard_stop_run(&inst, &cfg, learners.clone(), 300, 10.0, BudgetScaling::Additive { a: 2.0 }, 5).unwrap();
    let spent: f64 = tight.records.iter().map(|r| r.costs[0]).sum();
    assert!(spent <= 10.0 + 1.0);
    if let Some(s) = tight.stop_round {
        assert!(tight.records[s - 1..].iter().all(|r| r.frozen && r.action == 0 && r.reward == 0.0));
        assert!(tight.records[..s - 1].iter().all(|r| !r.frozen));
        assert_eq!(tight.reward_ledger.rounds, s - 1);
    }
    assert_eq!(tight.budgets, Some((10.0, 8.0)));

    assert!(hard_stop_run(&inst, &cfg, learners.clone(), 300, 10.0, BudgetScaling::Additive { a: 10.0 }, 5).is_err());
    let mut no_null = inst.clone();
    no_null.null_arm = None;
    assert!(hard_stop_run(&no_null, &cfg, learners, 300, 10.0, BudgetScaling::Additive { a: 1.0 }, 5).is_err());
}

#[test]
fn adaptive_source_sees_history() {
    let inst = scripted_instance();
    let cfg = fixed(Potential::Quadratic { v: 2.0 }, 1.0);
    // adversary shows context 1 whenever arm 0 was just played
    let mut src = AdaptiveContexts(|t: usize, h: &[RoundRecord]| {
        if t > 40 {
            None
        } else {
            Some(h.last().map_or(0, |r| usize::from(r.action == 0)))
        }
    });
    let trace = run_with_source(&inst, &cfg, common::pinned_learners(&inst), 100, 1, &mut src).unwrap();
    assert_eq!(trace.len(), 40);
    for w in trace.records.windows(2) {
        assert_eq!(w[1].context, usize::from(w[0].action == 0));
    }
}

#[test]
fn ensemble_layout_and_degenerate_master() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(12);
    let inst = common::random_knapsack(&mut rng, 2, 3, 50.0);
    let cfg = fixed(Potential::Quadratic { v: 10.0 }, 1.0);
    let learners = common::class_learners(&inst, 3, &mut rng);
    let e = ensemble_run(&inst, &cfg, &EnsembleConfig { guesses: None, epoch_len: None }, learners.clone(), 100, 3).unwrap();
    let s = e.ensemble.as_ref().unwrap();
    assert_eq!(s.guesses.len(), 8);
    assert_eq!(s.epoch_len, 10);
    assert_eq!(s.epochs.len(), 10);
    assert!(s.epochs.iter().all(|ep| (0.0..=1.0).contains(&ep.loss)));
    assert_eq!(e.records.len(), 100);

    // one guess and one epoch: identical to a plain run
    let one = EnsembleConfig { guesses: Some(vec![4.0]), epoch_len: Some(100) };
    let e = ensemble_run(&inst, &cfg, &one, learners.clone(), 100, 3).unwrap();
    let mut plain_cfg = cfg;
    plain_cfg.oracle_error = 4.0;
    let p = run(&inst, &plain_cfg, learners.clone(), 100, 3).unwrap();
    for (a, b) in e.records.iter().zip(&p.records) {
        let mut a = a.clone();
        a.guess = None;
        assert_eq!(&a, b);
    }
    // with resets the first epoch still matches
    let short = EnsembleConfig { guesses: Some(vec![4.0]), epoch_len: Some(25) };
    let e = ensemble_run(&inst, &cfg, &short, learners, 100, 3).unwrap();
    assert_eq!(e.records[..25].iter().map(|r| r.action).collect::<Vec<_>>(),
        p.records[..25].iter().map(|r| r.action).collect::<Vec<_>>());
    assert_eq!(e.records[25].phi_prime, vec![0.0]);
}

fn rigged_instance() -> ProblemInstance {
    let mut f = vec![-1.0; 8];
    f[0] = 0.0;
    ProblemInstance {
        name: "rigged".into(),
        num_contexts: 1,
        num_arms: 8,
        null_arm: None,
        f_star: Table::from_rows(vec![f]).unwrap(),
        g_star: vec![Table::constant(1, 8, 0.0).unwrap()],
        reward_law: NoiseLaw::Rademacher,
        cost_laws: vec![NoiseLaw::Bernoulli],
        schedule: ContextSchedule::Iid { probs: vec![1.0] },
        budget: 0.0,
        tag: FeasibilityTag::InExpectation,
    }
}

#[test]
fn master_prefers_the_better_guess() {
    let inst = rigged_instance();
    let cfg = fixed(Potential::Quadratic { v: 1.0 }, 1.0);
    let ens = EnsembleConfig { guesses: Some(vec![1e-4, 1e6]), epoch_len: Some(20) };
    let mut picks = 0usize;
    let mut total = 0usize;
    let mut better_loss = 0.0;
    let mut worse_loss = 0.0;
    for seed in 0..50 {
        let tr = ensemble_run(&inst, &cfg, &ens, common::pinned_learners(&inst), 400, seed).unwrap();
        for ep in &tr.ensemble.unwrap().epochs {
            total += 1;
            if ep.guess == 0 {
                picks += 1;
                better_loss += ep.loss;
            } else {
                worse_loss += ep.loss;
            }
        }
    }
    assert_eq!(total, 50 * 20);
    let freq = picks as f64 / total as f64;
    assert!(better_loss / (picks as f64) < worse_loss / ((total - picks) as f64));
    assert!(freq >= 0.7, "selection frequency {freq}");
}
