use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use ccb_core::benchmark::{benchmark_counts, benchmark_policy, equalized_allocation};
use ccb_core::controller::BudgetScaling;
use ccb_core::envs::{make_lower_bound_instance, make_slater_instance, FeasibilityTag};
use ccb_core::metrics::rate_fit;
use ccb_harness::config::ExperimentConfig;
use ccb_harness::experiments::{
    competitive_ratio_experiment, lowerbound_dir, open_loop_ratio, worst_standardized_slack,
    write_ratio_table, RatioSettings, RatioTable,
};
use ccb_harness::io::{self, read_aggregate};
use ccb_harness::runner::{run_experiment, RunOptions};
use ccb_harness::setup::load_instance;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "ccb",
    version,
    about = "Constrained contextual bandit experiments",
    after_help = "Outputs are written under $CCB_OUTPUT_ROOT (default `out`)."
)]
struct Cli {
    /// Offset added to every seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_base: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    InExpectation,
    Slater,
    AlmostSure,
    LongTerm,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write traces, aggregates and benchmarks.
    Simulate {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one trace CSV per run.
        #[arg(long)]
        traces: bool,
    },
    /// Solve the benchmark of an instance file and print it as JSON.
    Bench {
        instance: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Slack for the Slater benchmark.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Horizon used for context counts.
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Competitive ratios on the phased lower-bound family.
    Lowerbound {
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long = "B")]
        budget: f64,
        /// Also run the hard-stopped controller on every tau.
        #[arg(long)]
        tau_sweep: bool,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Multiplicative budget scaling constant of the hard stop.
        #[arg(long, default_value_t = 1.0)]
        scaling_c: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo check of the drift-plus-regret inequality.
    DiagnoseProp1 {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refit growth rates of every metric in an aggregate CSV.
    Ratefit { aggregate: PathBuf },
    /// Write a lower-bound instance file.
    GenLowerbound {
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long = "B")]
        budget: f64,
        #[arg(long)]
        tau: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Plant a Slater certificate in an instance file.
    GenSlater {
        instance: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, out, traces } => {
            let (cfg, base) = ExperimentConfig::load(&config)?;
            let opts = RunOptions {
                seed_base: cli.seed_base,
                out_dir: out,
                traces,
                dry_run: false,
            };
            let res = run_experiment(&cfg, &base, &opts)?;
            for r in res.aggregate.iter().filter(|r| {
                matches!(r.metric.as_str(), "pseudo_regret" | "ccv")
            }) {
                println!(
                    "T={:<8} {:<14} mean={:<14.6} se={:.6}",
                    r.horizon, r.metric, r.mean, r.se
                );
            }
            for r in &res.rates {
                println!("slope {:<16} {:.4} (r2 {:.3}, dropped {})", r.metric, r.slope, r.r_squared, r.dropped);
            }
            if let Some(dir) = res.dir {
                println!("wrote {}", dir.display());
            }
        }
        Command::Bench {
            instance,
            kind,
            epsilon,
            horizon,
            out,
        } => {
            let inst = load_instance(&instance)?;
            let kind = match kind {
                Kind::InExpectation => FeasibilityTag::InExpectation,
                Kind::Slater => FeasibilityTag::Slater { epsilon },
                Kind::AlmostSure => FeasibilityTag::AlmostSure,
                Kind::LongTerm => FeasibilityTag::LongTerm,
            };
            let report = benchmark_policy(&inst, kind, horizon)
                .with_context(|| format!("benchmark of {}", instance.display()))?;
            match out {
                Some(p) => io::write_json(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Lowerbound {
            horizon,
            budget,
            tau_sweep,
            seeds,
            scaling_c,
            out,
        } => {
            let dir = out.map_or_else(|| lowerbound_dir(horizon, budget), |d| io::output_root().join(d));
            let phases = ccb_core::envs::lower_bound_phases(horizon, budget)?;
            let (alpha, _) = equalized_allocation(phases)?;
            let eq = open_loop_ratio(horizon, budget, &alpha)?;
            print_table("equalized allocation", &eq);
            write_ratio_table(&dir.join("equalized.csv"), &eq)?;
            if tau_sweep {
                let settings = RatioSettings {
                    scaling: BudgetScaling::Multiplicative { c: scaling_c },
                    seeds,
                    seed_base: cli.seed_base,
                    ..RatioSettings::default()
                };
                let table = competitive_ratio_experiment(horizon, budget, &settings)?;
                print_table("hard-stopped controller", &table);
                write_ratio_table(&dir.join("hard_stop.csv"), &table)?;
            }
            println!("wrote {}", dir.display());
        }
        Command::DiagnoseProp1 { config, out } => {
            let (cfg, base) = ExperimentConfig::load(&config)?;
            let opts = RunOptions {
                seed_base: cli.seed_base,
                out_dir: out,
                ..RunOptions::default()
            };
            for (h, report) in ccb_harness::experiments::diagnose_prop1(&cfg, &base, &opts)? {
                let worst = worst_standardized_slack(&report);
                println!(
                    "T={h} seeds={} holds_within_3se={} worst slack/se={}",
                    report.seeds,
                    report.holds_within(3.0),
                    worst.map_or("n/a".into(), |(t, z)| format!("{z:.3} at t={t}")),
                );
            }
        }
        Command::Ratefit { aggregate } => {
            let rows = read_aggregate(&aggregate)?;
            let mut by_metric: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
            for r in &rows {
                by_metric
                    .entry(r.metric.as_str())
                    .or_default()
                    .push((r.horizon as f64, r.mean));
            }
            for (metric, pts) in by_metric {
                let (h, m): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                match rate_fit(&h, &m) {
                    Ok(f) => println!(
                        "{metric:<16} slope {:.4} intercept {:.4} r2 {:.4} dropped {:?}",
                        f.slope, f.intercept, f.r_squared, f.dropped
                    ),
                    Err(e) => println!("{metric:<16} no fit: {e}"),
                }
            }
        }
        Command::GenLowerbound {
            horizon,
            budget,
            tau,
            output,
        } => {
            let inst = make_lower_bound_instance(horizon, budget, tau)?;
            io::write_json(&output, &inst)?;
            let counts = benchmark_counts(&inst, horizon)?;
            println!("wrote {} ({} phases, {} rounds)", output.display(), inst.num_contexts, counts.iter().sum::<f64>());
        }
        Command::GenSlater {
            instance,
            epsilon,
            output,
        } => {
            let base = load_instance(&instance)?;
            let (inst, cert) = make_slater_instance(&base, epsilon)?;
            io::write_json(&output, &inst)?;
            println!("wrote {} (certificate arms {cert:?})", output.display());
        }
    }
    Ok(())
}

fn print_table(title: &str, t: &RatioTable) {
    println!("{title}: T={} B={} L={}", t.horizon, t.budget, t.phases);
    println!("{:>5} {:>12} {:>12} {:>10}", "tau", "opt", "alg", "ratio");
    for r in &t.rows {
        println!("{:>5} {:>12.4} {:>12.4} {:>10.4}", r.tau, r.opt, r.alg, r.ratio);
    }
    println!("worst ratio {:.6} at tau={}", t.worst_ratio, t.worst_tau);
    println!("H(L) floor  {:.7}", t.harmonic_floor);
}
