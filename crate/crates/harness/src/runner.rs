//! Runs a config over its (horizon, seed) grid and aggregates the results.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ccb_core::benchmark::{benchmark_policy, BenchmarkReport};
use ccb_core::controller::{ensemble_run, hard_stop_run, run, RunTrace};
use ccb_core::envs::ProblemInstance;
use ccb_core::metrics::{compute_metrics, mean_se, rate_fit, MetricSeries};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ModeSpec};
use crate::io::{self, AggregateRow, RateRow};
use crate::setup::{build_learners, default_oracle_error, instance_for_horizon, resolve_instance};

/// Metrics with a fitted growth rate when the config has enough horizons.
pub const RATE_METRICS: [&str; 3] = ["pseudo_regret", "realized_regret", "ccv"];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Added to every configured seed.
    pub seed_base: u64,
    /// Overrides the config's output directory (still under the output root
    /// when relative).
    pub out_dir: Option<PathBuf>,
    /// Forces per-run trace files on.
    pub traces: bool,
    /// Skip all file output.
    pub dry_run: bool,
}

/// Final metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub horizon: usize,
    pub seed: u64,
    /// `(name, value)` pairs in a fixed order.
    pub values: Vec<(&'static str, f64)>,
    pub saturated: bool,
}

impl CellResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub cells: Vec<CellResult>,
    pub aggregate: Vec<AggregateRow>,
    pub rates: Vec<RateRow>,
    pub benchmarks: Vec<(usize, BenchmarkReport)>,
    /// Where files went, if anywhere.
    pub dir: Option<PathBuf>,
}

impl ExperimentOutput {
    pub fn rate(&self, metric: &str) -> Option<&RateRow> {
        self.rates.iter().find(|r| r.metric == metric)
    }
}

/// Everything needed to run one horizon.
pub struct HorizonSetup {
    pub horizon: usize,
    pub instance: ProblemInstance,
    pub benchmark: BenchmarkReport,
    pub oracle_error: f64,
}

pub fn horizon_setup(cfg: &ExperimentConfig, base: &ProblemInstance, horizon: usize) -> Result<HorizonSetup> {
    let instance = instance_for_horizon(base, cfg.budget, horizon);
    instance
        .validate()
        .with_context(|| format!("instance at horizon {horizon}"))?;
    let benchmark = benchmark_policy(&instance, cfg.benchmark, horizon)
        .with_context(|| format!("benchmark at horizon {horizon}"))?;
    let oracle_error = cfg
        .controller
        .oracle_error
        .unwrap_or_else(|| default_oracle_error(&cfg.oracle, horizon));
    Ok(HorizonSetup {
        horizon,
        instance,
        benchmark,
        oracle_error,
    })
}

/// Run one seed at one horizon under the config's mode.
pub fn run_one(cfg: &ExperimentConfig, setup: &HorizonSetup, seed: u64) -> Result<RunTrace> {
    let inst = &setup.instance;
    let learners = build_learners(&cfg.oracle, inst)?;
    let controller = cfg.controller.with_error(setup.oracle_error);
    let t = setup.horizon;
    let trace = match &cfg.mode {
        ModeSpec::Plain => run(inst, &controller, learners, t, seed)?,
        ModeSpec::HardStop { scaling } => {
            hard_stop_run(inst, &controller, learners, t, inst.budget, *scaling, seed)?
        }
        ModeSpec::Ensemble { ensemble } => ensemble_run(inst, &controller, ensemble, learners, t, seed)?,
    };
    Ok(trace)
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

/// Final metrics of a run.
pub fn cell_values(
    cfg: &ExperimentConfig,
    setup: &HorizonSetup,
    trace: &RunTrace,
    metrics: &MetricSeries,
) -> Vec<(&'static str, f64)> {
    let inst = &setup.instance;
    let last = |v: &Vec<f64>| v.last().copied().unwrap_or(0.0);
    let mut out = vec![
        ("pseudo_regret", metrics.final_regret()),
        ("realized_regret", metrics.final_realized_regret()),
        ("ccv", if metrics.ccv.is_empty() { 0.0 } else { metrics.final_ccv() }),
        ("cost", max_of(metrics.cumulative_cost.iter().map(last)).max(0.0)),
        ("queue", max_of(metrics.queue.iter().map(last)).max(0.0)),
        ("reward_error", trace.reward_ledger.vs_truth),
        (
            "cost_error",
            max_of(trace.cost_ledgers.iter().map(|l| l.vs_truth)).max(0.0),
        ),
    ];
    if let ModeSpec::HardStop { .. } = cfg.mode {
        let t = setup.horizon;
        let stop = trace.stop_round.unwrap_or(t + 1);
        let overspend = max_of((0..inst.num_resources()).map(|i| trace.total_cost(i) - inst.budget));
        out.push(("stop_round", stop as f64));
        out.push(("active_fraction", (stop - 1) as f64 / t.max(1) as f64));
        out.push(("overspend", overspend));
    }
    if let Some(e) = &trace.ensemble {
        out.push(("epochs", e.epochs.len() as f64));
    }
    out
}

pub fn trace_file_name(horizon: usize, seed: u64) -> String {
    format!("trace_T{horizon}_seed{seed}.csv")
}

/// Output directory of a config under the current output root.
pub fn output_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    let dir = opts.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
    io::output_root().join(dir)
}

/// Aggregate rows (one per horizon and metric) and rate fits. Cells are
/// keyed by (horizon, seed), so their order does not matter.
pub fn aggregate(horizons: &[usize], cells: &[CellResult], fit: bool) -> (Vec<AggregateRow>, Vec<RateRow>) {
    let names: Vec<&'static str> = cells
        .first()
        .map(|c| c.values.iter().map(|(n, _)| *n).collect())
        .unwrap_or_default();
    let mut rows = Vec::new();
    let mut rates = Vec::new();
    for name in &names {
        let stats: Vec<(f64, f64, usize)> = horizons
            .iter()
            .map(|&h| {
                let mut keyed: Vec<(u64, f64)> = cells
                    .iter()
                    .filter(|c| c.horizon == h)
                    .filter_map(|c| c.get(name).map(|v| (c.seed, v)))
                    .collect();
                keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
                let vals: Vec<f64> = keyed.into_iter().map(|(_, v)| v).collect();
                let (m, se) = mean_se(&vals);
                (m, se, vals.len())
            })
            .collect();
        let mut slope = None;
        if fit && RATE_METRICS.contains(name) {
            let hs: Vec<f64> = horizons.iter().map(|&h| h as f64).collect();
            let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
            if let Ok(f) = rate_fit(&hs, &means) {
                slope = Some(f.slope);
                rates.push(RateRow {
                    metric: name.to_string(),
                    slope: f.slope,
                    intercept: f.intercept,
                    r_squared: f.r_squared,
                    points: hs.len() - f.dropped.len(),
                    dropped: f.dropped.len(),
                });
            }
        }
        for (&h, &(mean, se, n)) in horizons.iter().zip(&stats) {
            rows.push(AggregateRow {
                horizon: h,
                metric: name.to_string(),
                mean,
                se,
                n,
                slope,
            });
        }
    }
    (rows, rates)
}

/// Run every (horizon, seed) cell, in parallel, and write the outputs.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path, opts: &RunOptions) -> Result<ExperimentOutput> {
    let base = resolve_instance(&cfg.instance, base_dir)?;
    let seeds = cfg.seeds.seeds(opts.seed_base);
    let dir = (!opts.dry_run).then(|| output_dir(cfg, opts));
    let traces = cfg.output.traces || opts.traces;
    let setups = cfg
        .horizons
        .iter()
        .map(|&h| horizon_setup(cfg, &base, h))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..setups.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, seed)| -> Result<(CellResult, Option<(RunTrace, MetricSeries)>)> {
            let setup = &setups[i];
            let trace = run_one(cfg, setup, seed)
                .with_context(|| format!("run at horizon {} seed {seed}", setup.horizon))?;
            let metrics = compute_metrics(&trace, &setup.benchmark.policy, cfg.benchmark, &setup.instance)?;
            let cell = CellResult {
                horizon: setup.horizon,
                seed,
                values: cell_values(cfg, setup, &trace, &metrics),
                saturated: trace.any_saturated(),
            };
            let keep = (dir.is_some() && traces).then_some((trace, metrics));
            Ok((cell, keep))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::with_capacity(results.len());
    for (cell, kept) in results {
        if let (Some(dir), Some((trace, metrics))) = (&dir, kept) {
            let path = dir.join("traces").join(trace_file_name(cell.horizon, cell.seed));
            io::write_trace(&path, &trace, &metrics)?;
        }
        cells.push(cell);
    }
    let (rows, rates) = aggregate(&cfg.horizons, &cells, cfg.supports_rate_fit());
    let benchmarks: Vec<(usize, BenchmarkReport)> =
        setups.into_iter().map(|s| (s.horizon, s.benchmark)).collect();
    if let Some(dir) = &dir {
        io::write_aggregate(&dir.join("aggregate.csv"), &rows)?;
        write_cells(&dir.join("cells.csv"), &cells)?;
        if cfg.supports_rate_fit() {
            io::write_rates(&dir.join("rates.csv"), &rates)?;
        }
        let bench: Vec<BenchmarkEntry> = benchmarks
            .iter()
            .map(|(h, b)| BenchmarkEntry { horizon: *h, report: b })
            .collect();
        io::write_json(&dir.join("benchmark.json"), &bench)?;
    }
    Ok(ExperimentOutput {
        cells,
        aggregate: rows,
        rates,
        benchmarks,
        dir,
    })
}

#[derive(Serialize)]
struct BenchmarkEntry<'a> {
    horizon: usize,
    #[serde(flatten)]
    report: &'a BenchmarkReport,
}

pub const CELLS_SCHEMA: &str = "ccb-cells-v1";

fn write_cells(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = io::csv_writer(path, CELLS_SCHEMA)?;
    let mut header = vec!["horizon".to_string(), "seed".to_string(), "saturated".to_string()];
    if let Some(c) = cells.first() {
        header.extend(c.values.iter().map(|(n, _)| n.to_string()));
    }
    w.write_record(&header)?;
    for c in cells {
        let mut row = vec![c.horizon.to_string(), c.seed.to_string(), u8::from(c.saturated).to_string()];
        row.extend(c.values.iter().map(|(_, v)| io::num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
