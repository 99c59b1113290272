mod common;

use ccb_core::benchmark::{
    allocation_ratio, equalized_allocation, harmonic, long_term_lp, per_context_optimum,
    quadratic_root_bound,
};
use ccb_core::controller::{run, ControllerConfig, CostShift, PotentialSpec};
use ccb_core::igw::{igw_solve, lemma1_gap, LossVector, NORMALIZER_RANGE_SLACK};
use ccb_core::lyapunov::{Potential, QueueState};
use proptest::prelude::*;
use rand::SeedableRng;

fn losses(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    k.prop_flat_map(|k| proptest::collection::vec(-1.0f64..=1.0, k))
}

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, k).prop_map(|w| {
        let s: f64 = w.iter().sum::<f64>() + 1e-12;
        let mut p: Vec<f64> = w.iter().map(|x| (x + 1e-12 / w.len() as f64) / s).collect();
        let tot: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= tot);
        p
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn igw_normalizes_and_normalizer_in_range(v in losses(2..=32), gamma in 0.01f64..1000.0) {
        let k = v.len();
        let d = igw_solve(&LossVector::new(v.clone()).unwrap(), gamma).unwrap();
        let s: f64 = d.probs().iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-9);
        prop_assert!(d.normalizer() >= 1.0 - NORMALIZER_RANGE_SLACK);
        prop_assert!(d.normalizer() <= k as f64 + NORMALIZER_RANGE_SLACK);
        prop_assert!(d.probs().iter().all(|&p| p > 0.0 && p <= 1.0));
    }

    #[test]
    fn igw_probability_decreases_with_gap(v in losses(2..=16), gamma in 0.0f64..100.0) {
        let d = igw_solve(&LossVector::new(v.clone()).unwrap(), gamma).unwrap();
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let pmax = d.probs().iter().copied().fold(0.0, f64::max);
        for a in 0..v.len() {
            if v[a] == min {
                prop_assert_eq!(d.probs()[a], pmax);
            }
            for b in 0..v.len() {
                if v[a] < v[b] {
                    prop_assert!(d.probs()[a] >= d.probs()[b]);
                }
            }
        }
        if gamma == 0.0 {
            prop_assert!(d.probs().iter().all(|&p| p == 1.0 / v.len() as f64));
        }
    }

    #[test]
    fn igw_concentrates_for_large_gamma(v in losses(2..=8), gamma in 10.0f64..1e4) {
        let lv = LossVector::new(v.clone()).unwrap();
        let g = lv.greedy_arm();
        let mut gaps: Vec<f64> = v.iter().map(|x| x - v[g]).filter(|&x| x > 0.0).collect();
        prop_assume!(gaps.len() == v.len() - 1);
        gaps.sort_by(f64::total_cmp);
        let d = igw_solve(&lv, gamma).unwrap();
        let bound = 1.0 - v.len() as f64 / (2.0 * gamma * gaps[0]);
        prop_assert!(d.probs()[g] >= bound - 1e-12);
    }

    #[test]
    fn lemma1_holds((v, vh, mu) in (2usize..=32).prop_flat_map(|k| (
        proptest::collection::vec(-1.0f64..=1.0, k),
        proptest::collection::vec(-1.0f64..=1.0, k),
        simplex(k),
    )), gamma in 0.01f64..1000.0) {
        let (lhs, rhs) = lemma1_gap(&LossVector::new(vh).unwrap(), &v, &mu, gamma).unwrap();
        prop_assert!(lhs <= rhs + 1e-8, "lhs {} rhs {}", lhs, rhs);
    }

    #[test]
    fn queue_is_max_of_suffix_sums(costs in proptest::collection::vec(-1.0f64..=1.0, 0..300)) {
        let mut q = QueueState::new(1);
        for &c in &costs {
            let before = q.values()[0];
            q.update(&[c]).unwrap();
            prop_assert!(q.values()[0] >= 0.0);
            prop_assert!(q.values()[0] >= before + c);
        }
        let mut best: f64 = 0.0;
        for a in 0..=costs.len() {
            best = best.max(costs[a..].iter().sum::<f64>());
        }
        prop_assert!((q.values()[0] - best).abs() <= 1e-12);
    }

    #[test]
    fn nonnegative_costs_accumulate_exactly(costs in proptest::collection::vec(0.0f64..=1.0, 0..300)) {
        let mut q = QueueState::new(1);
        let mut prev = 0.0;
        for &c in &costs {
            q.update(&[c]).unwrap();
            prop_assert!(q.values()[0] >= prev);
            prev = q.values()[0];
        }
        let s: f64 = costs.iter().sum();
        prop_assert!((q.values()[0] - s).abs() <= 1e-9);
    }

    #[test]
    fn potentials_are_convex_and_increasing(v in 0.01f64..100.0, rate in 0.001f64..2.0, x in 0.0f64..100.0) {
        for p in [Potential::Quadratic { v }, Potential::Exponential { rate }] {
            prop_assert!(p.derivative(x) >= 0.0);
            prop_assert!(p.second_derivative(x + 0.5) >= p.second_derivative(x));
            prop_assert!(p.value(x) >= p.value(0.0));
        }
    }

    #[test]
    fn per_context_optimum_matches_grid(
        f in proptest::collection::vec(-1.0f64..=1.0, 3),
        g in proptest::collection::vec(-1.0f64..=1.0, 3),
    ) {
        prop_assume!(g.iter().any(|&x| x <= 0.0));
        let (pi, value) = per_context_optimum(&f, &g).unwrap();
        let cons: f64 = pi.iter().zip(&g).map(|(p, c)| p * c).sum();
        prop_assert!(cons <= 1e-12);
        let step = 1e-2;
        let n = 100;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let p = [i as f64 * step, j as f64 * step, (n - i - j) as f64 * step];
                let c: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
                if c <= 0.0 {
                    best = best.max(p.iter().zip(&f).map(|(a, b)| a * b).sum());
                }
            }
        }
        prop_assert!(value >= best - 1e-9);
    }

    #[test]
    fn lp_duality_and_dominance(seed in any::<u64>(), x in 1usize..5, k in 2usize..5, frac in 0.0f64..1.2) {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let inst = common::random_knapsack(&mut rng, x, k, 0.0);
        let counts: Vec<f64> = (0..x).map(|_| rand::Rng::gen_range(&mut rng, 0.0..20.0)).collect();
        let budget = frac * counts.iter().sum::<f64>() * 0.5;
        let lp = long_term_lp(&inst, &counts, budget).unwrap();
        prop_assert!(lp.duality_gap() <= 1e-6, "gap {}", lp.duality_gap());
        prop_assert!(lp.slackness_residual() <= 1e-6);
        prop_assert!(lp.consumption <= budget + 1e-9);
        if budget > 0.0 {
            prop_assert!(lp.lambda_star <= lp.value / budget + 1e-9);
        }
        let dual = lp.dual_value();
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..x).map(|_| {
                let w: Vec<f64> = (0..k).map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|v| v / s).collect()
            }).collect();
            let pol = ccb_core::benchmark::StationaryPolicy { rows };
            let cons = pol.total(&inst.g_star[0], &counts);
            if cons <= budget {
                prop_assert!(pol.total(&inst.f_star, &counts) <= dual + 1e-9);
            }
        }
    }

    #[test]
    fn lemma3_bound(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let (x, bound) = quadratic_root_bound(a, b);
        prop_assert!(x <= bound + 1e-12);
    }

    #[test]
    fn equalized_ratio_is_harmonic(l in 1usize..200) {
        let (alpha, ratio) = equalized_allocation(l).unwrap();
        prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!((ratio - harmonic(l)).abs() <= 1e-12);
        prop_assert!((allocation_ratio(&alpha) - ratio).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn runs_are_deterministic_and_keep_invariants(seed in any::<u64>(), t in 0usize..200) {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let inst = common::random_knapsack(&mut rng, 3, 4, 20.0);
        let cfg = ControllerConfig {
            potential: PotentialSpec::Fixed { potential: Potential::Quadratic { v: 5.0 } },
            oracle_error: 1.0,
            cost_shift: CostShift::None,
        };
        let learners = common::class_learners(&inst, 3, &mut rng);
        let a = run(&inst, &cfg, learners.clone(), t, seed).unwrap();
        let b = run(&inst, &cfg, learners, t, seed).unwrap();
        prop_assert_eq!(&a.records, &b.records);
        prop_assert_eq!(a.records.len(), t);
        let mut z_sum = 0.0;
        let mut max_d2: f64 = 0.0;
        let mut q_prev = 0.0;
        let mut total = 0.0;
        for (i, r) in a.records.iter().enumerate() {
            // the exploration scale reads the queue before the round
            prop_assert!((r.phi_prime[0] - 2.0 * q_prev / 5.0).abs() < 1e-12);
            max_d2 = max_d2.max(r.phi_prime[0] * r.phi_prime[0]);
            z_sum += r.z;
            let tt = (i + 1) as f64;
            prop_assert!(z_sum >= tt - 1e-9 && z_sum <= tt * (1.0 + max_d2) + 1e-9);
            prop_assert!(r.gamma > 0.0);
            q_prev = r.queue[0];
            total += r.costs[0];
        }
        // non-negative costs: the queue is the plain sum
        prop_assert!((a.final_queue[0] - total).abs() < 1e-9);
    }
}
