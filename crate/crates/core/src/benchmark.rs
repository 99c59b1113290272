//! Offline benchmark policies.
//!
//! Round-wise benchmarks are solved context by context: a linear objective
//! over the simplex under one linear constraint has an optimal vertex
//! supported on at most two arms. The long-term budget LP is solved through
//! its Lagrangian dual, which decomposes per context for a fixed multiplier.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::envs::{FeasibilityTag, ProblemInstance};
use crate::{ContextId, Error, Result, Table};

/// Context-indexed randomized policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    pub rows: Vec<Vec<f64>>,
}

impl StationaryPolicy {
    pub fn point_masses(arms: &[usize], num_arms: usize) -> Self {
        let rows = arms
            .iter()
            .map(|&a| {
                let mut r = vec![0.0; num_arms];
                r[a] = 1.0;
                r
            })
            .collect();
        Self { rows }
    }

    pub fn num_contexts(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self, num_contexts: usize, num_arms: usize) -> Result<()> {
        if self.rows.len() != num_contexts {
            return Err(Error::DimensionMismatch {
                what: "policy rows",
                expected: num_contexts,
                found: self.rows.len(),
            });
        }
        self.rows
            .iter()
            .try_for_each(|r| crate::igw::validate_simplex(r, num_arms))
    }

    pub fn row(&self, context: ContextId) -> Result<&[f64]> {
        self.rows
            .get(context)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                what: "policy context",
                index: context,
                len: self.rows.len(),
            })
    }

    /// `sum_a pi(a | x) table(x, a)`.
    pub fn expected(&self, table: &Table, context: ContextId) -> f64 {
        dot(&self.rows[context], table.row(context))
    }

    /// `sum_x N(x) sum_a pi(a | x) table(x, a)`.
    pub fn total(&self, table: &Table, counts: &[f64]) -> f64 {
        counts
            .iter()
            .enumerate()
            .map(|(x, n)| n * self.expected(table, x))
            .sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximize `<f, pi>` over the simplex subject to `<g, pi> <= 0`.
pub fn per_context_optimum(f_row: &[f64], g_row: &[f64]) -> Result<(Vec<f64>, f64)> {
    per_context_optimum_with_threshold(f_row, g_row, 0.0)
}

/// Maximize `<f, pi>` over the simplex subject to `<g, pi> <= threshold`, by
/// enumerating feasible single arms and two-arm mixtures that meet the
/// constraint with equality. Ties keep the earliest candidate, single arms
/// before mixtures.
pub fn per_context_optimum_with_threshold(
    f_row: &[f64],
    g_row: &[f64],
    threshold: f64,
) -> Result<(Vec<f64>, f64)> {
    let k = f_row.len();
    if g_row.len() != k {
        return Err(Error::DimensionMismatch {
            what: "cost row",
            expected: k,
            found: g_row.len(),
        });
    }
    if f_row.iter().chain(g_row).any(|v| !v.is_finite()) || !threshold.is_finite() {
        return Err(Error::NonFinite("benchmark row"));
    }
    // (value, a, b, weight on a)
    let mut best: Option<(f64, usize, usize, f64)> = None;
    let mut consider = |value: f64, a: usize, b: usize, w: f64| {
        if best.map_or(true, |(v, ..)| value > v) {
            best = Some((value, a, b, w));
        }
    };
    for a in 0..k {
        if g_row[a] <= threshold {
            consider(f_row[a], a, a, 1.0);
        }
    }
    for a in 0..k {
        if g_row[a] >= threshold {
            continue;
        }
        for b in 0..k {
            if g_row[b] <= threshold {
                continue;
            }
            let w = (g_row[b] - threshold) / (g_row[b] - g_row[a]);
            consider(w * f_row[a] + (1.0 - w) * f_row[b], a, b, w);
        }
    }
    let (value, a, b, w) = best.ok_or_else(|| {
        Error::Infeasible(format!("no arm or mixture with expected cost <= {threshold}"))
    })?;
    let mut pi = vec![0.0; k];
    pi[a] += w;
    pi[b] += 1.0 - w;
    Ok((pi, value))
}

/// Solution of the long-term budget LP and its dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    /// Optimal total expected reward `nu*`.
    pub value: f64,
    pub policy: StationaryPolicy,
    /// Multiplier on the budget constraint.
    pub lambda_star: f64,
    /// Per-context dual variables.
    pub mu: Vec<f64>,
    /// Total expected consumption of `policy`.
    pub consumption: f64,
    pub budget: f64,
}

impl LpSolution {
    /// `lambda* B + sum_x mu_x`.
    pub fn dual_value(&self) -> f64 {
        self.lambda_star * self.budget + self.mu.iter().sum::<f64>()
    }

    pub fn duality_gap(&self) -> f64 {
        (self.dual_value() - self.value).abs()
    }

    /// `|lambda* (B - consumption)|`.
    pub fn slackness_residual(&self) -> f64 {
        (self.lambda_star * (self.budget - self.consumption)).abs()
    }
}

struct Choice {
    arms: Vec<usize>,
    reward: f64,
    consumption: f64,
}

fn lagrangian_choice(f: &Table, g: &Table, counts: &[f64], lambda: f64) -> Choice {
    let mut arms = Vec::with_capacity(counts.len());
    let (mut reward, mut consumption) = (0.0, 0.0);
    for (x, &n) in counts.iter().enumerate() {
        let mut best = 0;
        for a in 1..f.num_arms() {
            let sa = f.get(x, a) - lambda * g.get(x, a);
            let sb = f.get(x, best) - lambda * g.get(x, best);
            if sa > sb || (sa == sb && g.get(x, a) < g.get(x, best)) {
                best = a;
            }
        }
        arms.push(best);
        reward += n * f.get(x, best);
        consumption += n * g.get(x, best);
    }
    Choice {
        arms,
        reward,
        consumption,
    }
}

fn single_resource(instance: &ProblemInstance) -> Result<&Table> {
    if instance.g_star.len() != 1 {
        return Err(Error::Unsupported(format!(
            "benchmark solvers handle one cost resource, instance has {}",
            instance.g_star.len()
        )));
    }
    Ok(&instance.g_star[0])
}

/// Solve `max sum_x N(x) <f(x), pi(x)>` subject to
/// `sum_x N(x) <g(x), pi(x)> <= budget`.
///
/// Bisects the multiplier until the per-context greedy choices on both sides
/// of the critical value are found, mixes them to spend the budget exactly
/// and reads the multiplier off the breakpoint.
pub fn long_term_lp(instance: &ProblemInstance, counts: &[f64], budget: f64) -> Result<LpSolution> {
    let g = single_resource(instance)?;
    let f = &instance.f_star;
    if instance.null_arm.is_none() {
        return Err(Error::MissingNullArm);
    }
    if counts.len() != instance.num_contexts {
        return Err(Error::DimensionMismatch {
            what: "context counts",
            expected: instance.num_contexts,
            found: counts.len(),
        });
    }
    if counts.iter().any(|&n| !(n >= 0.0) || !n.is_finite()) {
        return Err(Error::InvalidParameter {
            what: "context count",
            requirement: "finite and non-negative",
            value: counts.iter().copied().find(|&n| !(n >= 0.0) || !n.is_finite()).unwrap_or(f64::NAN),
        });
    }
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::InvalidParameter {
            what: "budget",
            requirement: "finite and non-negative",
            value: budget,
        });
    }
    let num_arms = instance.num_arms;
    let dual = |lambda: f64| -> Vec<f64> {
        counts
            .iter()
            .enumerate()
            .map(|(x, &n)| {
                let m = (0..num_arms)
                    .map(|a| f.get(x, a) - lambda * g.get(x, a))
                    .fold(f64::NEG_INFINITY, f64::max);
                n * m.max(0.0)
            })
            .collect()
    };

    let at_zero = lagrangian_choice(f, g, counts, 0.0);
    if at_zero.consumption <= budget {
        return Ok(LpSolution {
            value: at_zero.reward,
            policy: StationaryPolicy::point_masses(&at_zero.arms, num_arms),
            lambda_star: 0.0,
            mu: dual(0.0),
            consumption: at_zero.consumption,
            budget,
        });
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut upper = lagrangian_choice(f, g, counts, hi);
    while upper.consumption > budget {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Infeasible("budget cannot be met even by the NULL arm".into()));
        }
        upper = lagrangian_choice(f, g, counts, hi);
    }
    let mut lower = lagrangian_choice(f, g, counts, lo);
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let c = lagrangian_choice(f, g, counts, mid);
        if c.consumption > budget {
            lo = mid;
            lower = c;
        } else {
            hi = mid;
            upper = c;
        }
    }

    let lambda_star = (0..counts.len())
        .find(|&x| lower.arms[x] != upper.arms[x] && counts[x] > 0.0)
        .and_then(|x| {
            let (a, b) = (lower.arms[x], upper.arms[x]);
            let dg = g.get(x, a) - g.get(x, b);
            (dg != 0.0).then(|| (f.get(x, a) - f.get(x, b)) / dg)
        })
        .unwrap_or(0.5 * (lo + hi))
        .max(0.0);

    let theta = (budget - upper.consumption) / (lower.consumption - upper.consumption);
    let rows = (0..counts.len())
        .map(|x| {
            let mut r = vec![0.0; num_arms];
            r[lower.arms[x]] += theta;
            r[upper.arms[x]] += 1.0 - theta;
            r
        })
        .collect();
    Ok(LpSolution {
        value: theta * lower.reward + (1.0 - theta) * upper.reward,
        policy: StationaryPolicy { rows },
        lambda_star,
        mu: dual(lambda_star),
        consumption: theta * lower.consumption + (1.0 - theta) * upper.consumption,
        budget,
    })
}

/// How the budget was reduced before solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    Multiplicative,
    Additive,
}

/// Upper bound on `OPT(budget)` from the LP solved at `reduced_budget`:
/// `(B / B') nu*(B')` or `nu*(B') + lambda* (B - B')`.
pub fn budget_scaling_bound(
    lp_at_reduced: &LpSolution,
    budget: f64,
    reduced_budget: f64,
    mode: ScalingMode,
) -> Result<f64> {
    if !(reduced_budget > 0.0) {
        return Err(Error::InvalidParameter {
            what: "reduced budget",
            requirement: "positive",
            value: reduced_budget,
        });
    }
    if !(budget >= reduced_budget) {
        return Err(Error::InvalidParameter {
            what: "budget",
            requirement: "at least the reduced budget",
            value: budget,
        });
    }
    Ok(match mode {
        ScalingMode::Multiplicative => budget / reduced_budget * lp_at_reduced.value,
        ScalingMode::Additive => {
            lp_at_reduced.value + lp_at_reduced.lambda_star * (budget - reduced_budget)
        }
    })
}

/// `H(L) = sum_{l=1}^{L} 1/l`.
pub fn harmonic(l: usize) -> f64 {
    (1..=l).map(|i| 1.0 / i as f64).sum()
}

/// Budget shares `alpha_l = (1/l) / H(L)` that make the ratio to the
/// clairvoyant optimum identical for every drop phase, and that ratio `H(L)`.
pub fn equalized_allocation(phases: usize) -> Result<(Vec<f64>, f64)> {
    if phases < 1 {
        return Err(Error::InvalidParameter {
            what: "number of phases",
            requirement: "at least 1",
            value: 0.0,
        });
    }
    let h = harmonic(phases);
    let alpha = (1..=phases).map(|l| 1.0 / (l as f64 * h)).collect();
    Ok((alpha, h))
}

/// Worst case over `tau` of `tau / sum_{l <= tau} l alpha_l`: the competitive
/// ratio of spending share `alpha_l` of the budget in phase `l`.
pub fn allocation_ratio(alpha: &[f64]) -> f64 {
    let mut earned = 0.0;
    let mut worst: f64 = 0.0;
    for (i, a) in alpha.iter().enumerate() {
        let tau = (i + 1) as f64;
        earned += tau * a;
        worst = worst.max(if earned > 0.0 { tau / earned } else { f64::INFINITY });
    }
    worst
}

/// Context counts used for long-term benchmarks: expected counts for i.i.d.
/// schedules, exact counts for scripted and phased ones.
pub fn benchmark_counts(instance: &ProblemInstance, horizon: usize) -> Result<Vec<f64>> {
    instance.schedule.expected_counts(instance.num_contexts, horizon)
}

/// A benchmark policy and, for long-term budgets, its LP certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub kind: FeasibilityTag,
    /// Total expected reward under the context counts used.
    pub value: f64,
    pub counts: Vec<f64>,
    pub policy: StationaryPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp: Option<LpSolution>,
}

/// Benchmark policy of the given kind. Long-term budgets use `counts`; the
/// round-wise kinds ignore it except for reporting the value.
pub fn benchmark_policy_with_counts(
    instance: &ProblemInstance,
    kind: FeasibilityTag,
    counts: &[f64],
) -> Result<BenchmarkReport> {
    let f = &instance.f_star;
    let (policy, lp) = match kind {
        FeasibilityTag::InExpectation | FeasibilityTag::Slater { .. } => {
            let g = single_resource(instance)?;
            let threshold = match kind {
                FeasibilityTag::Slater { epsilon } => -epsilon,
                _ => 0.0,
            };
            let rows = (0..instance.num_contexts)
                .map(|x| {
                    per_context_optimum_with_threshold(f.row(x), g.row(x), threshold)
                        .map(|(pi, _)| pi)
                        .map_err(|_| {
                            Error::Infeasible(format!(
                                "{kind:?} benchmark: context {x} has no policy with expected cost <= {threshold}"
                            ))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            (StationaryPolicy { rows }, None)
        }
        FeasibilityTag::AlmostSure => {
            let arms = (0..instance.num_contexts)
                .map(|x| {
                    let safe = instance.surely_safe_arms(x);
                    safe.iter()
                        .copied()
                        .reduce(|b, a| if f.get(x, a) > f.get(x, b) { a } else { b })
                        .ok_or_else(|| {
                            Error::Infeasible(format!(
                                "almost-sure benchmark: context {x} has no surely safe arm"
                            ))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            (StationaryPolicy::point_masses(&arms, instance.num_arms), None)
        }
        FeasibilityTag::LongTerm => {
            let lp = long_term_lp(instance, counts, instance.budget)?;
            (lp.policy.clone(), Some(lp))
        }
    };
    Ok(BenchmarkReport {
        kind,
        value: policy.total(f, counts),
        counts: counts.to_vec(),
        policy,
        lp,
    })
}

/// [`benchmark_policy_with_counts`] with [`benchmark_counts`] over `horizon`.
pub fn benchmark_policy(
    instance: &ProblemInstance,
    kind: FeasibilityTag,
    horizon: usize,
) -> Result<BenchmarkReport> {
    let counts = benchmark_counts(instance, horizon)?;
    benchmark_policy_with_counts(instance, kind, &counts)
}

/// Positive root of `x^2 = a x + b` and the bound `a + sqrt(b)` on it.
pub fn quadratic_root_bound(a: f64, b: f64) -> (f64, f64) {
    let root = 0.5 * (a + libm::sqrt(a * a + 4.0 * b));
    (root, a + libm::sqrt(b))
}
