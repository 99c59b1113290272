//! Problem instances and their outcome laws.
//!
//! An instance fixes finite context and arm sets, ground-truth mean tables
//! for the reward and every cost resource, a two-point (or noiseless)
//! realization law per channel, a context schedule and a budget. Realized
//! outcomes have exactly the tabled means, so any oracle class containing the
//! tables is well specified.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{ContextId, Error, Result, SimRng, Table};

/// Realization law of one outcome channel given its mean `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    /// `+1` with probability `(1 + m) / 2`, else `-1`.
    #[default]
    Rademacher,
    /// `1` with probability `m`, else `0`. Requires `m` in `[0, 1]`.
    Bernoulli,
    /// Always exactly `m`.
    Noiseless,
}

impl NoiseLaw {
    pub fn draw<R: Rng + ?Sized>(self, mean: f64, rng: &mut R) -> f64 {
        match self {
            NoiseLaw::Rademacher => {
                if rng.gen::<f64>() < 0.5 * (1.0 + mean) {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseLaw::Bernoulli => {
                if rng.gen::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseLaw::Noiseless => mean,
        }
    }

    /// Whether every draw with mean `m` is `<= 0`.
    pub fn surely_nonpositive(self, mean: f64) -> bool {
        match self {
            NoiseLaw::Rademacher => mean <= -1.0,
            NoiseLaw::Bernoulli => mean <= 0.0,
            NoiseLaw::Noiseless => mean <= 0.0,
        }
    }

    fn admits(self, mean: f64) -> bool {
        match self {
            NoiseLaw::Bernoulli => (0.0..=1.0).contains(&mean),
            _ => (-1.0..=1.0).contains(&mean),
        }
    }
}

/// Benchmark class an instance is built for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibilityTag {
    InExpectation,
    Slater { epsilon: f64 },
    AlmostSure,
    LongTerm,
}

/// How contexts arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextSchedule {
    /// i.i.d. draws from `probs`.
    Iid { probs: Vec<f64> },
    /// A fixed sequence (an oblivious adversary). Must cover the horizon.
    Scripted { sequence: Vec<ContextId> },
    /// `contexts[l]` for every round of phase `l` (phases of `block_len`
    /// rounds); the last phase extends to the end of the horizon.
    Phased {
        block_len: usize,
        contexts: Vec<ContextId>,
    },
}

impl ContextSchedule {
    fn validate(&self, num_contexts: usize) -> Result<()> {
        let check = |x: ContextId| {
            if x >= num_contexts {
                Err(Error::IndexOutOfRange {
                    what: "scheduled context",
                    index: x,
                    len: num_contexts,
                })
            } else {
                Ok(())
            }
        };
        match self {
            ContextSchedule::Iid { probs } => {
                if probs.len() != num_contexts {
                    return Err(Error::DimensionMismatch {
                        what: "context distribution",
                        expected: num_contexts,
                        found: probs.len(),
                    });
                }
                crate::igw::validate_simplex(probs, num_contexts)
            }
            ContextSchedule::Scripted { sequence } => sequence.iter().try_for_each(|&x| check(x)),
            ContextSchedule::Phased {
                block_len,
                contexts,
            } => {
                if *block_len == 0 || contexts.is_empty() {
                    return Err(Error::InvalidInstance(
                        "phased schedule needs a positive block length and at least one phase"
                            .into(),
                    ));
                }
                contexts.iter().try_for_each(|&x| check(x))
            }
        }
    }

    /// The first `horizon` contexts. `rng` is only consumed by i.i.d. schedules.
    pub fn materialize(&self, horizon: usize, rng: &mut SimRng) -> Result<Vec<ContextId>> {
        match self {
            ContextSchedule::Iid { probs } => Ok((0..horizon)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for (x, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            return x;
                        }
                    }
                    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
                })
                .collect()),
            ContextSchedule::Scripted { sequence } => {
                if sequence.len() < horizon {
                    return Err(Error::InvalidInstance(format!(
                        "scripted schedule has {} rounds, horizon is {horizon}",
                        sequence.len()
                    )));
                }
                Ok(sequence[..horizon].to_vec())
            }
            ContextSchedule::Phased {
                block_len,
                contexts,
            } => Ok((0..horizon)
                .map(|t| contexts[(t / block_len).min(contexts.len() - 1)])
                .collect()),
        }
    }

    /// Expected number of visits to each context over `horizon` rounds.
    /// Exact counts for scripted and phased schedules.
    pub fn expected_counts(&self, num_contexts: usize, horizon: usize) -> Result<Vec<f64>> {
        match self {
            ContextSchedule::Iid { probs } => Ok(probs.iter().map(|p| p * horizon as f64).collect()),
            _ => {
                let mut dummy = crate::rng_for(0, crate::RngStream::Contexts);
                Ok(empirical_counts(
                    &self.materialize(horizon, &mut dummy)?,
                    num_contexts,
                ))
            }
        }
    }
}

/// `N(x) = #{t : x_t = x}`.
pub fn empirical_counts(contexts: &[ContextId], num_contexts: usize) -> Vec<f64> {
    let mut n = alloc::vec![0.0; num_contexts];
    for &x in contexts {
        n[x] += 1.0;
    }
    n
}

/// Realized outcome of one pull.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub reward: f64,
    pub costs: Vec<f64>,
}

/// Ground truth, outcome laws, context schedule and budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    #[serde(default)]
    pub name: String,
    pub num_contexts: usize,
    pub num_arms: usize,
    /// Arm with zero reward and zero cost, realized exactly.
    #[serde(default)]
    pub null_arm: Option<usize>,
    pub f_star: Table,
    /// One table per cost resource.
    pub g_star: Vec<Table>,
    #[serde(default)]
    pub reward_law: NoiseLaw,
    pub cost_laws: Vec<NoiseLaw>,
    pub schedule: ContextSchedule,
    #[serde(default)]
    pub budget: f64,
    pub tag: FeasibilityTag,
}

impl ProblemInstance {
    pub fn validate(&self) -> Result<()> {
        if self.num_arms < 2 {
            return Err(Error::TooFewArms(self.num_arms));
        }
        if self.g_star.is_empty() {
            return Err(Error::InvalidInstance("at least one cost resource required".into()));
        }
        if self.cost_laws.len() != self.g_star.len() {
            return Err(Error::DimensionMismatch {
                what: "cost laws",
                expected: self.g_star.len(),
                found: self.cost_laws.len(),
            });
        }
        for t in core::iter::once(&self.f_star).chain(&self.g_star) {
            if t.num_contexts() != self.num_contexts || t.num_arms() != self.num_arms {
                return Err(Error::InvalidInstance(format!(
                    "table is {}x{}, instance is {}x{}",
                    t.num_contexts(),
                    t.num_arms(),
                    self.num_contexts,
                    self.num_arms
                )));
            }
        }
        if !(self.budget >= 0.0) || !self.budget.is_finite() {
            return Err(Error::InvalidParameter {
                what: "budget",
                requirement: "finite and non-negative",
                value: self.budget,
            });
        }
        for x in 0..self.num_contexts {
            for a in 0..self.num_arms {
                if !self.reward_law.admits(self.f_star.get(x, a)) {
                    return Err(Error::InvalidInstance(format!(
                        "reward mean {} at ({x}, {a}) not admitted by {:?}",
                        self.f_star.get(x, a),
                        self.reward_law
                    )));
                }
                for (g, law) in self.g_star.iter().zip(&self.cost_laws) {
                    if !law.admits(g.get(x, a)) {
                        return Err(Error::InvalidInstance(format!(
                            "cost mean {} at ({x}, {a}) not admitted by {law:?}",
                            g.get(x, a)
                        )));
                    }
                }
            }
        }
        if let Some(null) = self.null_arm {
            if null >= self.num_arms {
                return Err(Error::IndexOutOfRange {
                    what: "NULL arm",
                    index: null,
                    len: self.num_arms,
                });
            }
            for x in 0..self.num_contexts {
                if self.f_star.get(x, null) != 0.0 || self.g_star.iter().any(|g| g.get(x, null) != 0.0) {
                    return Err(Error::InvalidInstance(format!(
                        "NULL arm has non-zero mean in context {x}"
                    )));
                }
            }
        }
        self.schedule.validate(self.num_contexts)?;
        match self.tag {
            FeasibilityTag::AlmostSure => {
                for x in 0..self.num_contexts {
                    if self.surely_safe_arms(x).is_empty() {
                        return Err(Error::InvalidInstance(format!(
                            "almost-sure instance has no surely safe arm in context {x}"
                        )));
                    }
                }
            }
            FeasibilityTag::Slater { epsilon } => {
                if !(epsilon > 0.0 && epsilon < 1.0) {
                    return Err(Error::InvalidParameter {
                        what: "Slater epsilon",
                        requirement: "in (0, 1)",
                        value: epsilon,
                    });
                }
                for x in 0..self.num_contexts {
                    if self.slater_certificate_arm(x, epsilon).is_none() {
                        return Err(Error::InvalidInstance(format!(
                            "no arm with cost <= -{epsilon} in context {x}"
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn num_resources(&self) -> usize {
        self.g_star.len()
    }

    /// True when every cost channel can only produce values in `[0, 1]`.
    pub fn has_nonnegative_costs(&self) -> bool {
        self.g_star.iter().zip(&self.cost_laws).all(|(g, law)| match law {
            NoiseLaw::Bernoulli => true,
            NoiseLaw::Noiseless => (0..self.num_contexts)
                .all(|x| (0..self.num_arms).all(|a| g.get(x, a) >= 0.0)),
            NoiseLaw::Rademacher => false,
        })
    }

    /// Arms whose realized cost is `<= 0` on every draw, for every resource.
    pub fn surely_safe_arms(&self, context: ContextId) -> Vec<usize> {
        (0..self.num_arms)
            .filter(|&a| {
                Some(a) == self.null_arm
                    || self
                        .g_star
                        .iter()
                        .zip(&self.cost_laws)
                        .all(|(g, law)| law.surely_nonpositive(g.get(context, a)))
            })
            .collect()
    }

    /// Lowest-cost arm with mean cost `<= -epsilon` on every resource.
    pub fn slater_certificate_arm(&self, context: ContextId, epsilon: f64) -> Option<usize> {
        (0..self.num_arms)
            .filter(|&a| self.g_star.iter().all(|g| g.get(context, a) <= -epsilon))
            .min_by(|&a, &b| {
                self.g_star[0]
                    .get(context, a)
                    .total_cmp(&self.g_star[0].get(context, b))
            })
    }

    /// Draw the reward and every cost for one pull.
    pub fn realize<R: Rng + ?Sized>(&self, context: ContextId, arm: usize, rng: &mut R) -> Outcome {
        if Some(arm) == self.null_arm {
            return Outcome {
                reward: 0.0,
                costs: alloc::vec![0.0; self.g_star.len()],
            };
        }
        let reward = self.reward_law.draw(self.f_star.get(context, arm), rng);
        let costs = self
            .g_star
            .iter()
            .zip(&self.cost_laws)
            .map(|(g, law)| law.draw(g.get(context, arm), rng))
            .collect();
        Outcome { reward, costs }
    }

    pub fn check_indices(&self, context: ContextId, arm: usize) -> Result<()> {
        self.f_star.check_context(context)?;
        if arm >= self.num_arms {
            return Err(Error::IndexOutOfRange {
                what: "arm",
                index: arm,
                len: self.num_arms,
            });
        }
        Ok(())
    }
}

/// `realize` with index checks.
pub fn realize<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    context: ContextId,
    arm: usize,
    rng: &mut R,
) -> Result<Outcome> {
    instance.check_indices(context, arm)?;
    Ok(instance.realize(context, arm, rng))
}

/// Number of phases `L = floor(T / B)` of the lower-bound construction.
pub fn lower_bound_phases(horizon: usize, budget: f64) -> Result<usize> {
    if !(budget >= 1.0) || !budget.is_finite() {
        return Err(Error::InvalidParameter {
            what: "budget",
            requirement: "finite and at least 1",
            value: budget,
        });
    }
    if budget > horizon as f64 {
        return Err(Error::InvalidParameter {
            what: "budget",
            requirement: "at most the horizon",
            value: budget,
        });
    }
    Ok(libm::floor(horizon as f64 / budget) as usize)
}

/// Reward table `f_tau` of the lower-bound family: the risky arm (index 1)
/// pays `l * eps` in phase `l <= tau` and nothing afterwards; the safe arm
/// (index 0) pays nothing.
pub fn lower_bound_reward_table(horizon: usize, budget: f64, tau: usize) -> Result<Table> {
    let phases = lower_bound_phases(horizon, budget)?;
    if tau < 1 || tau > phases {
        return Err(Error::InvalidParameter {
            what: "tau",
            requirement: "in 1..=floor(T / B)",
            value: tau as f64,
        });
    }
    let eps = budget / horizon as f64;
    let rows = (1..=phases)
        .map(|l| {
            let risky = if l <= tau { (l as f64 * eps).min(1.0) } else { 0.0 };
            alloc::vec![0.0, risky]
        })
        .collect();
    Table::from_rows(rows)
}

/// The lower-bound instance: `L = floor(T / B)` phases of `B` rounds, context
/// `x_l` shown only in phase `l`, a safe NULL arm and a risky arm with
/// deterministic unit cost whose reward climbs as `l * B / T` up to phase
/// `tau` and then drops to zero.
pub fn make_lower_bound_instance(horizon: usize, budget: f64, tau: usize) -> Result<ProblemInstance> {
    let f_star = lower_bound_reward_table(horizon, budget, tau)?;
    let phases = f_star.num_contexts();
    let g_star = Table::from_rows((0..phases).map(|_| alloc::vec![0.0, 1.0]).collect())?;
    let inst = ProblemInstance {
        name: format!("lower-bound T={horizon} B={budget} tau={tau}"),
        num_contexts: phases,
        num_arms: 2,
        null_arm: Some(0),
        f_star,
        g_star: alloc::vec![g_star],
        reward_law: NoiseLaw::Bernoulli,
        cost_laws: alloc::vec![NoiseLaw::Bernoulli],
        schedule: ContextSchedule::Phased {
            block_len: libm::floor(budget) as usize,
            contexts: (0..phases).collect(),
        },
        budget,
        tag: FeasibilityTag::LongTerm,
    };
    inst.validate()?;
    Ok(inst)
}

/// Every reward table of the lower-bound family, `tau = 1..=L`.
pub fn lower_bound_reward_class(horizon: usize, budget: f64) -> Result<Vec<Table>> {
    let phases = lower_bound_phases(horizon, budget)?;
    (1..=phases)
        .map(|tau| lower_bound_reward_table(horizon, budget, tau))
        .collect()
}

/// Make `base` satisfy Slater's condition with slack `epsilon`.
///
/// Contexts that already have an arm with mean cost `<= -epsilon` keep it as
/// their certificate. Otherwise the non-NULL arm of minimum cost is planted
/// with cost exactly `-epsilon` on every resource; this needs cost laws that
/// admit negative means. Returns the instance and the per-context
/// certificate arm.
pub fn make_slater_instance(
    base: &ProblemInstance,
    epsilon: f64,
) -> Result<(ProblemInstance, Vec<usize>)> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter {
            what: "Slater epsilon",
            requirement: "in (0, 1)",
            value: epsilon,
        });
    }
    let mut inst = base.clone();
    let mut certificate = Vec::with_capacity(inst.num_contexts);
    for x in 0..inst.num_contexts {
        if let Some(a) = inst.slater_certificate_arm(x, epsilon) {
            certificate.push(a);
            continue;
        }
        if inst.cost_laws.iter().any(|l| !l.admits(-epsilon)) {
            return Err(Error::Infeasible(format!(
                "no plantable arm in context {x}: cost laws cannot produce negative means"
            )));
        }
        let planted = (0..inst.num_arms)
            .filter(|&a| Some(a) != inst.null_arm)
            .min_by(|&a, &b| inst.g_star[0].get(x, a).total_cmp(&inst.g_star[0].get(x, b)))
            .ok_or_else(|| Error::Infeasible(format!("no plantable arm in context {x}")))?;
        for g in &mut inst.g_star {
            g.set(x, planted, -epsilon)?;
        }
        certificate.push(planted);
    }
    inst.tag = FeasibilityTag::Slater { epsilon };
    inst.validate()?;
    Ok((inst, certificate))
}
