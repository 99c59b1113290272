#![allow(dead_code)]

use ccb_core::controller::Learners;
use ccb_core::envs::{ContextSchedule, FeasibilityTag, NoiseLaw, ProblemInstance};
use ccb_core::oracle::{AnyOracle, FiniteClassOracle, TrackedOracle, DEFAULT_ETA};
use ccb_core::Table;
use rand::Rng;

/// Oracles whose class is the ground truth alone, so predictions equal the means.
pub fn pinned_learners(inst: &ProblemInstance) -> Learners {
    let pin = |t: &Table| {
        TrackedOracle::new(AnyOracle::Finite(
            FiniteClassOracle::new(vec![t.clone()], DEFAULT_ETA).unwrap(),
        ))
    };
    Learners::new(pin(&inst.f_star), inst.g_star.iter().map(pin).collect())
}

/// Truth plus `extra` random tables per target.
pub fn class_learners<R: Rng>(inst: &ProblemInstance, extra: usize, rng: &mut R) -> Learners {
    let mut class = |t: &Table, lo: f64| {
        let mut hs = vec![t.clone()];
        for _ in 0..extra {
            hs.push(random_table(rng, t.num_contexts(), t.num_arms(), lo, 1.0));
        }
        TrackedOracle::new(AnyOracle::Finite(FiniteClassOracle::new(hs, DEFAULT_ETA).unwrap()))
    };
    let reward = class(&inst.f_star, -1.0);
    let costs = inst
        .g_star
        .iter()
        .zip(&inst.cost_laws)
        .map(|(g, law)| class(g, if *law == NoiseLaw::Bernoulli { 0.0 } else { -1.0 }))
        .collect();
    Learners::new(reward, costs)
}

pub fn random_table<R: Rng>(rng: &mut R, x: usize, k: usize, lo: f64, hi: f64) -> Table {
    Table::from_rows(
        (0..x)
            .map(|_| (0..k).map(|_| rng.gen_range(lo..=hi)).collect())
            .collect(),
    )
    .unwrap()
}

/// Random knapsack-style instance: arm 0 is NULL, costs are Bernoulli.
pub fn random_knapsack<R: Rng>(rng: &mut R, x: usize, k: usize, budget: f64) -> ProblemInstance {
    let mut f = random_table(rng, x, k, -1.0, 1.0);
    let mut g = random_table(rng, x, k, 0.0, 1.0);
    for c in 0..x {
        f.set(c, 0, 0.0).unwrap();
        g.set(c, 0, 0.0).unwrap();
    }
    ProblemInstance {
        name: "random knapsack".into(),
        num_contexts: x,
        num_arms: k,
        null_arm: Some(0),
        f_star: f,
        g_star: vec![g],
        reward_law: NoiseLaw::Rademacher,
        cost_laws: vec![NoiseLaw::Bernoulli],
        schedule: ContextSchedule::Iid {
            probs: vec![1.0 / x as f64; x],
        },
        budget,
        tag: FeasibilityTag::LongTerm,
    }
}
