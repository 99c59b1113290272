//! The controller round loop and its two wrappers.
//!
//! Each round: predict rewards and costs for the current context, weight the
//! cost estimates by `phi'(Q(t-1))`, pick the exploration scale from the
//! running sum of `z_tau`, sample from the IGW distribution over the negated
//! surrogate, feed the realized outcome back to the oracles and push the
//! (optionally shifted) cost into the virtual queue.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::ProblemInstance;
use crate::igw::{igw_solve, LossVector};
use crate::lyapunov::{auto_parameter, Potential, QueueState, TuningCase};
use crate::oracle::{ErrorLedger, TrackedOracle};
use crate::{rng_for, ContextId, Error, Result, RngStream, SimRng};

/// How the potential is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// Tuned from `K`, `T`, `U_T` and the budget.
    Auto { case: TuningCase },
    Fixed { potential: Potential },
}

/// Whether costs are shifted by `B/T` before entering the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostShift {
    #[default]
    None,
    /// Queue the reduced cost `g - B/T`, turning a long-term budget into a
    /// round-wise constraint. Requires `B <= T`.
    BudgetPerRound,
}

/// Controller settings before they are bound to a horizon and budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub potential: PotentialSpec,
    /// The error bound `U_T` used by the exploration schedule and tuning.
    pub oracle_error: f64,
    #[serde(default)]
    pub cost_shift: CostShift,
}

/// Settings bound to a horizon and budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub potential: Potential,
    pub oracle_error: f64,
    pub cost_shift: f64,
}

impl ControllerConfig {
    pub fn resolve(&self, num_arms: usize, horizon: usize, budget: f64) -> Result<ResolvedConfig> {
        self.resolve_with_error(num_arms, horizon, budget, self.oracle_error)
    }

    /// As [`ControllerConfig::resolve`] with `U_T` overridden.
    pub fn resolve_with_error(
        &self,
        num_arms: usize,
        horizon: usize,
        budget: f64,
        oracle_error: f64,
    ) -> Result<ResolvedConfig> {
        if !(oracle_error > 0.0) || !oracle_error.is_finite() {
            return Err(Error::InvalidParameter {
                what: "oracle error bound",
                requirement: "finite and positive",
                value: oracle_error,
            });
        }
        let potential = match self.potential {
            PotentialSpec::Auto { case } => {
                auto_parameter(case, num_arms, horizon.max(1), oracle_error, budget)?
            }
            PotentialSpec::Fixed { potential } => potential,
        };
        potential.validate()?;
        let cost_shift = match self.cost_shift {
            CostShift::None => 0.0,
            CostShift::BudgetPerRound => {
                if horizon == 0 {
                    0.0
                } else if !(budget >= 0.0 && budget <= horizon as f64) {
                    return Err(Error::InvalidParameter {
                        what: "budget",
                        requirement: "in [0, T] when costs are shifted by B/T",
                        value: budget,
                    });
                } else {
                    budget / horizon as f64
                }
            }
        };
        Ok(ResolvedConfig {
            potential,
            oracle_error,
            cost_shift,
        })
    }
}

/// One reward oracle and one oracle per cost resource.
#[derive(Debug, Clone)]
pub struct Learners {
    pub reward: TrackedOracle,
    pub costs: Vec<TrackedOracle>,
}

impl Learners {
    pub fn new(reward: TrackedOracle, costs: Vec<TrackedOracle>) -> Self {
        Self { reward, costs }
    }

    pub fn ledgers(&self) -> (ErrorLedger, Vec<ErrorLedger>) {
        (
            self.reward.ledger.clone(),
            self.costs.iter().map(|c| c.ledger.clone()).collect(),
        )
    }
}

/// Surrogate reward `f_hat - sum_i phi'_i g_hat_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReward {
    pub values: Vec<f64>,
    pub phi_prime: Vec<f64>,
}

/// Build the surrogate reward. `g_hat[i]` holds the per-arm estimates of
/// resource `i`.
pub fn surrogate(f_hat: &[f64], g_hat: &[Vec<f64>], phi_prime: &[f64]) -> Result<SurrogateReward> {
    if g_hat.len() != phi_prime.len() {
        return Err(Error::DimensionMismatch {
            what: "resource count",
            expected: phi_prime.len(),
            found: g_hat.len(),
        });
    }
    let mut values = f_hat.to_vec();
    for (g, &w) in g_hat.iter().zip(phi_prime) {
        if g.len() != f_hat.len() {
            return Err(Error::DimensionMismatch {
                what: "cost estimates",
                expected: f_hat.len(),
                found: g.len(),
            });
        }
        for (v, gi) in values.iter_mut().zip(g) {
            *v -= w * gi;
        }
    }
    Ok(SurrogateReward {
        values,
        phi_prime: phi_prime.to_vec(),
    })
}

/// Queue, potential and exploration bookkeeping of one controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub queue: QueueState,
    pub config: ResolvedConfig,
    pub z_sum: f64,
    pub num_arms: usize,
}

impl ControllerState {
    pub fn new(config: ResolvedConfig, num_arms: usize, resources: usize) -> Result<Self> {
        if num_arms < 2 {
            return Err(Error::TooFewArms(num_arms));
        }
        config.potential.validate()?;
        Ok(Self {
            queue: QueueState::new(resources),
            config,
            z_sum: 0.0,
            num_arms,
        })
    }

    pub fn round(&self) -> usize {
        self.queue.round()
    }

    /// `phi'(Q_i)` at the current queue, and whether any value saturated.
    pub fn phi_prime(&self) -> (Vec<f64>, bool) {
        let mut saturated = false;
        let d = self
            .queue
            .values()
            .iter()
            .map(|&q| {
                let v = self.config.potential.eval_unchecked(q);
                saturated |= v.saturated;
                v.first
            })
            .collect();
        (d, saturated)
    }

    /// Clear the queue and the exploration sum.
    pub fn reset(&mut self) {
        self.queue = QueueState::new(self.queue.resources());
        self.z_sum = 0.0;
    }
}

/// `gamma_t` for the coming round and the updated `sum z_tau`, with
/// `z_t = max(1, sum_i phi'(Q_i(t-1))^2)`.
pub fn gamma_schedule(state: &ControllerState) -> (f64, f64) {
    let (d, _) = state.phi_prime();
    gamma_from_phi_prime(&d, state.z_sum, state.num_arms, state.config.oracle_error)
}

fn gamma_from_phi_prime(phi_prime: &[f64], z_sum: f64, num_arms: usize, oracle_error: f64) -> (f64, f64) {
    let z = phi_prime.iter().map(|d| d * d).sum::<f64>().max(1.0);
    let z_sum = z_sum + z;
    let gamma = libm::sqrt(num_arms as f64 / oracle_error * z_sum) / (2.0 * z);
    (gamma, z_sum)
}

/// Everything that happened in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub context: ContextId,
    pub action: usize,
    pub reward: f64,
    /// Realized costs, unshifted.
    pub costs: Vec<f64>,
    /// Queue after the round.
    pub queue: Vec<f64>,
    pub gamma: f64,
    pub normalizer: f64,
    pub z: f64,
    pub phi_prime: Vec<f64>,
    pub surrogate: Vec<f64>,
    pub probs: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub g_hat: Vec<Vec<f64>>,
    /// The potential's exponent hit its cap this round.
    pub saturated: bool,
    /// Round played by the NULL arm after a hard stop.
    pub frozen: bool,
    /// Index of the active guess in an ensemble run.
    pub guess: Option<usize>,
}

/// Random streams of one run.
#[derive(Debug, Clone)]
pub struct RunRngs {
    pub actions: SimRng,
    pub outcomes: SimRng,
}

impl RunRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            actions: rng_for(seed, RngStream::Actions),
            outcomes: rng_for(seed, RngStream::Outcomes),
        }
    }
}

/// Play one round in `context`.
pub fn step(
    state: &mut ControllerState,
    learners: &mut Learners,
    instance: &ProblemInstance,
    context: ContextId,
    rngs: &mut RunRngs,
) -> Result<RoundRecord> {
    instance.f_star.check_context(context)?;
    let resources = state.queue.resources();
    if learners.costs.len() != resources || instance.num_resources() != resources {
        return Err(Error::DimensionMismatch {
            what: "cost resources",
            expected: resources,
            found: learners.costs.len().min(instance.num_resources()),
        });
    }
    let f_hat = learners.reward.predict(context)?;
    let g_hat = learners
        .costs
        .iter()
        .map(|c| c.predict(context))
        .collect::<Result<Vec<_>>>()?;
    let (phi_prime, saturated) = state.phi_prime();
    let sur = surrogate(&f_hat, &g_hat, &phi_prime)?;
    let z = phi_prime.iter().map(|d| d * d).sum::<f64>().max(1.0);
    let (gamma, z_sum) =
        gamma_from_phi_prime(&phi_prime, state.z_sum, state.num_arms, state.config.oracle_error);
    state.z_sum = z_sum;

    let losses = LossVector::new(sur.values.iter().map(|v| -v).collect())?;
    let dist = igw_solve(&losses, gamma)?;
    let action = dist.sample(&mut rngs.actions);
    let outcome = instance.realize(context, action, &mut rngs.outcomes);

    learners.reward.observe(
        context,
        action,
        outcome.reward,
        Some(instance.f_star.get(context, action)),
    )?;
    for (i, oracle) in learners.costs.iter_mut().enumerate() {
        oracle.observe(
            context,
            action,
            outcome.costs[i],
            Some(instance.g_star[i].get(context, action)),
        )?;
    }
    let shift = state.config.cost_shift;
    let shifted: Vec<f64> = outcome.costs.iter().map(|c| c - shift).collect();
    state.queue.update_in_range(&shifted, -1.0 - shift, 1.0)?;

    Ok(RoundRecord {
        round: state.round(),
        context,
        action,
        reward: outcome.reward,
        costs: outcome.costs,
        queue: state.queue.values().to_vec(),
        gamma,
        normalizer: dist.normalizer(),
        z,
        phi_prime,
        surrogate: sur.values,
        probs: dist.probs().to_vec(),
        f_hat,
        g_hat,
        saturated,
        frozen: false,
        guess: None,
    })
}

/// Source of contexts, consulted once per round with the history so far.
/// Returning `None` ends the run.
pub trait ContextSource {
    fn next_context(&mut self, round: usize, history: &[RoundRecord]) -> Option<ContextId>;
}

/// A precomputed (oblivious) context sequence.
#[derive(Debug, Clone)]
pub struct ScheduledContexts(pub Vec<ContextId>);

impl ContextSource for ScheduledContexts {
    fn next_context(&mut self, round: usize, _history: &[RoundRecord]) -> Option<ContextId> {
        self.0.get(round - 1).copied()
    }
}

/// Adaptive adversary given by a closure over the round index and history.
pub struct AdaptiveContexts<F>(pub F);

impl<F: FnMut(usize, &[RoundRecord]) -> Option<ContextId>> ContextSource for AdaptiveContexts<F> {
    fn next_context(&mut self, round: usize, history: &[RoundRecord]) -> Option<ContextId> {
        (self.0)(round, history)
    }
}

/// Per-epoch record of an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub guess: usize,
    pub start_round: usize,
    pub rounds: usize,
    /// Loss fed to the master, in `[0, 1]`.
    pub loss: f64,
    /// Master's probabilities when the guess was drawn.
    pub probs: Vec<f64>,
}

/// Ensemble bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub guesses: Vec<f64>,
    pub epoch_len: usize,
    pub learning_rate: f64,
    pub epochs: Vec<EpochRecord>,
}

/// Output of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<RoundRecord>,
    pub config: ResolvedConfig,
    pub final_queue: Vec<f64>,
    pub reward_ledger: ErrorLedger,
    pub cost_ledgers: Vec<ErrorLedger>,
    /// First NULL round after a hard stop.
    pub stop_round: Option<usize>,
    /// Budget the wrapper enforced and the reduced one the controller used.
    pub budgets: Option<(f64, f64)>,
    pub ensemble: Option<EnsembleSummary>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn any_saturated(&self) -> bool {
        self.records.iter().any(|r| r.saturated)
    }

    pub fn total_cost(&self, resource: usize) -> f64 {
        self.records.iter().map(|r| r.costs[resource]).sum()
    }
}

fn check_learners(instance: &ProblemInstance, learners: &Learners) -> Result<()> {
    if learners.costs.len() != instance.num_resources() {
        return Err(Error::DimensionMismatch {
            what: "cost oracles",
            expected: instance.num_resources(),
            found: learners.costs.len(),
        });
    }
    for o in core::iter::once(&learners.reward).chain(&learners.costs) {
        use crate::oracle::RegressionOracle;
        if o.oracle.num_arms() != instance.num_arms {
            return Err(Error::DimensionMismatch {
                what: "oracle arms",
                expected: instance.num_arms,
                found: o.oracle.num_arms(),
            });
        }
    }
    Ok(())
}

fn scheduled(instance: &ProblemInstance, horizon: usize, seed: u64) -> Result<ScheduledContexts> {
    let mut rng = rng_for(seed, RngStream::Contexts);
    Ok(ScheduledContexts(instance.schedule.materialize(horizon, &mut rng)?))
}

/// Run the controller for `horizon` rounds on the instance's own schedule,
/// tuning against `instance.budget`.
pub fn run(
    instance: &ProblemInstance,
    config: &ControllerConfig,
    learners: Learners,
    horizon: usize,
    seed: u64,
) -> Result<RunTrace> {
    let mut source = scheduled(instance, horizon, seed)?;
    run_with_source(instance, config, learners, horizon, seed, &mut source)
}

/// [`run`] with an explicit context source.
pub fn run_with_source(
    instance: &ProblemInstance,
    config: &ControllerConfig,
    mut learners: Learners,
    horizon: usize,
    seed: u64,
    source: &mut dyn ContextSource,
) -> Result<RunTrace> {
    check_learners(instance, &learners)?;
    let resolved = config.resolve(instance.num_arms, horizon, instance.budget)?;
    let mut state = ControllerState::new(resolved, instance.num_arms, instance.num_resources())?;
    let mut rngs = RunRngs::new(seed);
    let mut records = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let Some(x) = source.next_context(t, &records) else {
            break;
        };
        records.push(step(&mut state, &mut learners, instance, x, &mut rngs)?);
    }
    let (reward_ledger, cost_ledgers) = learners.ledgers();
    Ok(RunTrace {
        records,
        config: resolved,
        final_queue: state.queue.values().to_vec(),
        reward_ledger,
        cost_ledgers,
        stop_round: None,
        budgets: None,
        ensemble: None,
    })
}

/// How the hard-stopping wrapper shrinks the budget handed to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BudgetScaling {
    /// `B' = B / (c ln T)`.
    Multiplicative { c: f64 },
    /// `B' = B - A`.
    Additive { a: f64 },
}

impl BudgetScaling {
    pub fn reduced_budget(&self, budget: f64, horizon: usize) -> Result<f64> {
        let reduced = match *self {
            BudgetScaling::Multiplicative { c } => {
                if !(c > 0.0) {
                    return Err(Error::InvalidParameter {
                        what: "multiplicative scaling constant",
                        requirement: "positive",
                        value: c,
                    });
                }
                budget / (c * libm::log(horizon as f64))
            }
            BudgetScaling::Additive { a } => budget - a,
        };
        if !(reduced > 0.0) || !reduced.is_finite() {
            return Err(Error::InvalidParameter {
                what: "reduced budget",
                requirement: "finite and positive (scaling leaves no budget, or ln T = 0)",
                value: reduced,
            });
        }
        Ok(reduced)
    }
}

fn frozen_record(t: usize, context: ContextId, null: usize, state: &ControllerState, k: usize) -> RoundRecord {
    let m = state.queue.resources();
    let mut probs = vec![0.0; k];
    probs[null] = 1.0;
    RoundRecord {
        round: t,
        context,
        action: null,
        reward: 0.0,
        costs: vec![0.0; m],
        queue: state.queue.values().to_vec(),
        gamma: 0.0,
        normalizer: 0.0,
        z: 0.0,
        phi_prime: vec![0.0; m],
        surrogate: vec![0.0; k],
        probs,
        f_hat: vec![0.0; k],
        g_hat: vec![vec![0.0; k]; m],
        saturated: false,
        frozen: true,
        guess: None,
    }
}

/// Run the controller against the reduced budget `B'` and stop for good
/// (NULL arm, no learning) once one more unit of cost could push any
/// resource's realized total above `budget`.
pub fn hard_stop_run(
    instance: &ProblemInstance,
    config: &ControllerConfig,
    mut learners: Learners,
    horizon: usize,
    budget: f64,
    scaling: BudgetScaling,
    seed: u64,
) -> Result<RunTrace> {
    let null = instance.null_arm.ok_or(Error::MissingNullArm)?;
    check_learners(instance, &learners)?;
    let reduced = scaling.reduced_budget(budget, horizon)?;
    let resolved = config.resolve(instance.num_arms, horizon, reduced)?;
    let mut state = ControllerState::new(resolved, instance.num_arms, instance.num_resources())?;
    let mut rngs = RunRngs::new(seed);
    let contexts = scheduled(instance, horizon, seed)?.0;
    let mut spent = vec![0.0; instance.num_resources()];
    let mut stop_round = None;
    let mut records = Vec::with_capacity(horizon);
    for (i, &x) in contexts.iter().enumerate() {
        let t = i + 1;
        if stop_round.is_none() && spent.iter().any(|s| s + 1.0 > budget) {
            stop_round = Some(t);
        }
        if stop_round.is_some() {
            records.push(frozen_record(t, x, null, &state, instance.num_arms));
            continue;
        }
        let rec = step(&mut state, &mut learners, instance, x, &mut rngs)?;
        for (s, c) in spent.iter_mut().zip(&rec.costs) {
            *s += c;
        }
        records.push(rec);
    }
    let (reward_ledger, cost_ledgers) = learners.ledgers();
    Ok(RunTrace {
        records,
        config: resolved,
        final_queue: state.queue.values().to_vec(),
        reward_ledger,
        cost_ledgers,
        stop_round,
        budgets: Some((budget, reduced)),
        ensemble: None,
    })
}

/// Guesses `2^0, ..., 2^ceil(log2 T)` for the unknown error bound.
pub fn default_guesses(horizon: usize) -> Vec<f64> {
    let top = ceil_log2(horizon);
    (0..=top).map(|j| libm::ldexp(1.0, j as i32)).collect()
}

fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// `ceil(sqrt(T))`.
pub fn default_epoch_len(horizon: usize) -> usize {
    let mut e = libm::sqrt(horizon as f64) as usize;
    while e * e < horizon {
        e += 1;
    }
    while e > 1 && (e - 1) * (e - 1) >= horizon {
        e -= 1;
    }
    e.max(1)
}

/// Settings of the unknown-error ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Candidate error bounds; defaults to [`default_guesses`].
    #[serde(default)]
    pub guesses: Option<Vec<f64>>,
    /// Defaults to [`default_epoch_len`].
    #[serde(default)]
    pub epoch_len: Option<usize>,
}

/// EXP3 learning rate `sqrt(2 ln N / (n N))` for `N` arms over `n` epochs.
pub fn exp3_learning_rate(num_guesses: usize, epochs: usize) -> f64 {
    if num_guesses < 2 || epochs == 0 {
        return 0.0;
    }
    let n = num_guesses as f64;
    libm::sqrt(2.0 * libm::log(n) / (epochs as f64 * n))
}

fn softmax(log_w: &[f64]) -> Vec<f64> {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| libm::exp(l - m)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Run with an EXP3 master over copies of the controller that differ in
/// their guess for `U_T`.
///
/// Time is cut into epochs; at the start of each the master draws a copy,
/// whose queue and exploration sum are reset, and that copy plays the whole
/// epoch. The oracles are shared and keep learning across epochs. The master
/// then sees the epoch's summed `-L_hat(x_t, a_t)` divided by
/// `rounds * (1 + max phi')` and clipped to `[0, 1]`, with `max phi'` the
/// largest total `phi'` observed so far.
pub fn ensemble_run(
    instance: &ProblemInstance,
    config: &ControllerConfig,
    ensemble: &EnsembleConfig,
    mut learners: Learners,
    horizon: usize,
    seed: u64,
) -> Result<RunTrace> {
    check_learners(instance, &learners)?;
    let guesses = ensemble.guesses.clone().unwrap_or_else(|| default_guesses(horizon));
    if guesses.is_empty() {
        return Err(Error::InvalidParameter {
            what: "number of guesses",
            requirement: "at least 1",
            value: 0.0,
        });
    }
    let epoch_len = ensemble.epoch_len.unwrap_or_else(|| default_epoch_len(horizon));
    if epoch_len == 0 {
        return Err(Error::InvalidParameter {
            what: "epoch length",
            requirement: "at least 1",
            value: 0.0,
        });
    }
    let configs = guesses
        .iter()
        .map(|&u| config.resolve_with_error(instance.num_arms, horizon, instance.budget, u))
        .collect::<Result<Vec<_>>>()?;
    let epochs = horizon.div_ceil(epoch_len);
    let eta = exp3_learning_rate(guesses.len(), epochs);

    let contexts = scheduled(instance, horizon, seed)?.0;
    let mut rngs = RunRngs::new(seed);
    let mut master_rng = rng_for(seed, RngStream::Master);
    let mut log_w = vec![0.0; guesses.len()];
    let mut phi_max: f64 = 0.0;
    let mut records = Vec::with_capacity(horizon);
    let mut epoch_log = Vec::with_capacity(epochs);
    let mut state = ControllerState::new(configs[0], instance.num_arms, instance.num_resources())?;

    for (e, chunk) in contexts.chunks(epoch_len).enumerate() {
        let probs = softmax(&log_w);
        let j = draw_index(&probs, &mut master_rng);
        state = ControllerState {
            queue: QueueState::new(instance.num_resources()),
            config: configs[j],
            z_sum: 0.0,
            num_arms: instance.num_arms,
        };
        let mut total = 0.0;
        for (i, &x) in chunk.iter().enumerate() {
            let mut rec = step(&mut state, &mut learners, instance, x, &mut rngs)?;
            rec.round = e * epoch_len + i + 1;
            rec.guess = Some(j);
            phi_max = phi_max.max(rec.phi_prime.iter().sum());
            total -= rec.surrogate[rec.action];
            records.push(rec);
        }
        let loss = (total / (chunk.len() as f64 * (1.0 + phi_max))).clamp(0.0, 1.0);
        log_w[j] -= eta * loss / probs[j];
        epoch_log.push(EpochRecord {
            guess: j,
            start_round: e * epoch_len + 1,
            rounds: chunk.len(),
            loss,
            probs,
        });
    }
    let (reward_ledger, cost_ledgers) = learners.ledgers();
    Ok(RunTrace {
        records,
        config: state.config,
        final_queue: state.queue.values().to_vec(),
        reward_ledger,
        cost_ledgers,
        stop_round: None,
        budgets: None,
        ensemble: Some(EnsembleSummary {
            guesses,
            epoch_len,
            learning_rate: eta,
            epochs: epoch_log,
        }),
    })
}
