//! Drift-plus-regret diagnostic and competitive-ratio experiments.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ccb_core::benchmark::{harmonic, long_term_lp, benchmark_counts};
use ccb_core::controller::{hard_stop_run, BudgetScaling, ControllerConfig, CostShift, Learners, PotentialSpec};
use ccb_core::envs::{lower_bound_phases, lower_bound_reward_class, make_lower_bound_instance, FeasibilityTag, ProblemInstance};
use ccb_core::lyapunov::TuningCase;
use ccb_core::metrics::{mean_se, prop1_from_series, prop1_series, Prop1Report};
use ccb_core::oracle::{AnyOracle, FiniteClassOracle, TrackedOracle, DEFAULT_ETA};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ModeSpec};
use crate::io;
use crate::runner::{horizon_setup, output_dir, run_one, RunOptions};
use crate::setup::resolve_instance;

/// Run the config's seeds at every horizon and estimate both sides of the
/// drift-plus-regret inequality. Writes `prop1_T<horizon>.csv` per horizon.
pub fn diagnose_prop1(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    opts: &RunOptions,
) -> Result<Vec<(usize, Prop1Report)>> {
    if cfg.benchmark != FeasibilityTag::InExpectation {
        bail!("config field `benchmark`: the diagnostic needs the in_expectation benchmark");
    }
    if cfg.mode != ModeSpec::Plain {
        bail!("config field `mode`: the diagnostic needs plain runs");
    }
    let base = resolve_instance(&cfg.instance, base_dir)?;
    let seeds = cfg.seeds.seeds(opts.seed_base);
    let dir = (!opts.dry_run).then(|| output_dir(cfg, opts));
    let mut out = Vec::new();
    for &h in &cfg.horizons {
        let setup = horizon_setup(cfg, &base, h)?;
        let series = seeds
            .par_iter()
            .map(|&seed| -> Result<(Vec<f64>, Vec<f64>)> {
                let trace = run_one(cfg, &setup, seed)
                    .with_context(|| format!("run at horizon {h} seed {seed}"))?;
                Ok(prop1_series(
                    &trace,
                    &setup.benchmark.policy,
                    &setup.instance,
                    &trace.config.potential,
                    trace.config.oracle_error,
                )?)
            })
            .collect::<Result<Vec<_>>>()?;
        let report = prop1_from_series(&series)?;
        if let Some(dir) = &dir {
            io::write_prop1(&dir.join(format!("prop1_T{h}.csv")), &report)?;
        }
        out.push((h, report));
    }
    Ok(out)
}

/// Smallest `slack / SE` over rounds with a positive standard error, and
/// the round where it occurs.
pub fn worst_standardized_slack(report: &Prop1Report) -> Option<(usize, f64)> {
    report
        .slack
        .iter()
        .zip(&report.slack_se)
        .enumerate()
        .filter(|(_, (_, &se))| se > 0.0)
        .map(|(t, (&s, &se))| (t, s / se))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Lower end of the ratio denominator.
pub const RATIO_FLOOR: f64 = 1e-9;

/// One row of a competitive-ratio table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub tau: usize,
    pub opt: f64,
    pub alg: f64,
    pub alg_se: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioTable {
    pub horizon: usize,
    pub budget: f64,
    pub phases: usize,
    pub rows: Vec<RatioRow>,
    pub worst_ratio: f64,
    pub worst_tau: usize,
    /// `H(L)`, the ratio every budget-respecting policy must reach on some `tau`.
    pub harmonic_floor: f64,
}

impl RatioTable {
    fn from_rows(horizon: usize, budget: f64, phases: usize, rows: Vec<RatioRow>) -> Self {
        let (worst_tau, worst_ratio) = rows
            .iter()
            .map(|r| (r.tau, r.ratio))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        RatioTable {
            horizon,
            budget,
            phases,
            rows,
            worst_ratio,
            worst_tau,
            harmonic_floor: harmonic(phases),
        }
    }
}

/// Settings of the hard-stopped controller in the competitive-ratio runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSettings {
    pub scaling: BudgetScaling,
    pub potential: PotentialSpec,
    pub seeds: u64,
    pub seed_base: u64,
}

impl Default for RatioSettings {
    fn default() -> Self {
        RatioSettings {
            scaling: BudgetScaling::Multiplicative { c: 1.0 },
            potential: PotentialSpec::Auto {
                case: TuningCase::Knapsack,
            },
            seeds: 20,
            seed_base: 0,
        }
    }
}

/// `OPT(tau)` of the lower-bound instance: the long-term LP value.
pub fn lower_bound_opt(inst: &ProblemInstance, horizon: usize) -> Result<f64> {
    let counts = benchmark_counts(inst, horizon)?;
    Ok(long_term_lp(inst, &counts, inst.budget)?.value)
}

/// Reward oracle over the whole lower-bound family, cost oracle pinned to
/// the (known) unit cost of the risky arm.
pub fn lower_bound_learners(inst: &ProblemInstance, horizon: usize) -> Result<Learners> {
    let class = lower_bound_reward_class(horizon, inst.budget)?;
    let reward = TrackedOracle::new(AnyOracle::Finite(FiniteClassOracle::new(class, DEFAULT_ETA)?));
    let cost = TrackedOracle::new(AnyOracle::Finite(FiniteClassOracle::new(
        vec![inst.g_star[0].clone()],
        DEFAULT_ETA,
    )?));
    Ok(Learners::new(reward, vec![cost]))
}

/// For every `tau`, `OPT(tau)` against the mean expected reward of the
/// hard-stopped controller over seeds.
pub fn competitive_ratio_experiment(horizon: usize, budget: f64, settings: &RatioSettings) -> Result<RatioTable> {
    let phases = lower_bound_phases(horizon, budget)?;
    let oracle_error = (phases.max(2) as f64).ln();
    let controller = ControllerConfig {
        potential: settings.potential,
        oracle_error,
        cost_shift: CostShift::None,
    };
    let rows = (1..=phases)
        .into_par_iter()
        .map(|tau| -> Result<RatioRow> {
            let inst = make_lower_bound_instance(horizon, budget, tau)?;
            let opt = lower_bound_opt(&inst, horizon)?;
            let rewards = (0..settings.seeds)
                .map(|s| -> Result<f64> {
                    let learners = lower_bound_learners(&inst, horizon)?;
                    let trace = hard_stop_run(
                        &inst,
                        &controller,
                        learners,
                        horizon,
                        budget,
                        settings.scaling,
                        settings.seed_base + s,
                    )?;
                    Ok(trace
                        .records
                        .iter()
                        .map(|r| inst.f_star.get(r.context, r.action))
                        .sum())
                })
                .collect::<Result<Vec<_>>>()?;
            let (alg, alg_se) = mean_se(&rewards);
            Ok(RatioRow {
                tau,
                opt,
                alg,
                alg_se,
                ratio: opt / alg.max(RATIO_FLOOR),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RatioTable::from_rows(horizon, budget, phases, rows))
}

/// Ratio table of an open-loop plan spending `alpha[l] * B` on the risky
/// arm in phase `l`, evaluated in expectation on every instance of the family.
pub fn open_loop_ratio(horizon: usize, budget: f64, alpha: &[f64]) -> Result<RatioTable> {
    let phases = lower_bound_phases(horizon, budget)?;
    if alpha.len() != phases {
        bail!("allocation has {} entries, the instance has {phases} phases", alpha.len());
    }
    let rows = (1..=phases)
        .map(|tau| -> Result<RatioRow> {
            let inst = make_lower_bound_instance(horizon, budget, tau)?;
            let opt = lower_bound_opt(&inst, horizon)?;
            let alg: f64 = alpha
                .iter()
                .enumerate()
                .map(|(l, a)| a * budget * inst.f_star.get(l, 1))
                .sum();
            Ok(RatioRow {
                tau,
                opt,
                alg,
                alg_se: 0.0,
                ratio: opt / alg.max(RATIO_FLOOR),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RatioTable::from_rows(horizon, budget, phases, rows))
}

pub fn write_ratio_table(path: &Path, table: &RatioTable) -> Result<()> {
    let mut w = io::csv_writer(path, io::RATIO_SCHEMA)?;
    w.write_record(["tau", "opt", "alg", "alg_se", "ratio"])?;
    for r in &table.rows {
        w.write_record([
            r.tau.to_string(),
            io::num(r.opt),
            io::num(r.alg),
            io::num(r.alg_se),
            io::num(r.ratio),
        ])?;
    }
    w.write_record(["worst", "", "", "", &io::num(table.worst_ratio)])?;
    w.write_record(["harmonic_floor", "", "", "", &io::num(table.harmonic_floor)])?;
    w.flush()?;
    Ok(())
}

/// Default directory for lower-bound outputs.
pub fn lowerbound_dir(horizon: usize, budget: f64) -> PathBuf {
    io::output_root().join(format!("lowerbound_T{horizon}_B{budget}"))
}
