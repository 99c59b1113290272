//! CSV and JSON outputs. Every CSV starts with a `# schema <id>` line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ccb_core::controller::RunTrace;
use ccb_core::metrics::{MetricSeries, Prop1Report};
use serde::Serialize;

pub const TRACE_SCHEMA: &str = "ccb-trace-v1";
pub const AGGREGATE_SCHEMA: &str = "ccb-aggregate-v1";
pub const RATES_SCHEMA: &str = "ccb-rates-v1";
pub const PROP1_SCHEMA: &str = "ccb-prop1-v1";
pub const RATIO_SCHEMA: &str = "ccb-ratio-v1";

/// Environment variable naming the directory outputs are written under
/// (default `out`).
pub const OUTPUT_ROOT_ENV: &str = "CCB_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating directory {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Open a CSV writer whose first line is the schema id.
pub fn csv_writer(path: &Path, schema: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = create(path)?;
    writeln!(w, "# schema {schema}").with_context(|| format!("writing {}", path.display()))?;
    Ok(csv::Writer::from_writer(w))
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .with_context(|| format!("writing {}", path.display()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &RunTrace, metrics: &MetricSeries) -> Result<()> {
    let mut w = csv_writer(path, TRACE_SCHEMA)?;
    let m = metrics.ccv.len();
    let mut header = vec!["round", "context", "action", "reward"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for i in 0..m {
        header.push(format!("cost_{i}"));
    }
    for i in 0..m {
        header.push(format!("queue_{i}"));
    }
    header.extend(["gamma", "normalizer", "z", "frozen", "guess", "pseudo_regret"].map(String::from));
    for i in 0..m {
        header.push(format!("ccv_{i}"));
    }
    w.write_record(&header)?;
    for (t, r) in trace.records.iter().enumerate() {
        let mut row = vec![
            r.round.to_string(),
            r.context.to_string(),
            r.action.to_string(),
            num(r.reward),
        ];
        row.extend(r.costs.iter().map(|&c| num(c)));
        row.extend(r.queue.iter().map(|&q| num(q)));
        row.push(num(r.gamma));
        row.push(num(r.normalizer));
        row.push(num(r.z));
        row.push(u8::from(r.frozen).to_string());
        row.push(r.guess.map(|g| g.to_string()).unwrap_or_default());
        row.push(num(metrics.pseudo_regret[t]));
        row.extend(metrics.ccv.iter().map(|c| num(c[t])));
        w.write_record(&row)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// One row of the aggregate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct AggregateRow {
    pub horizon: usize,
    pub metric: String,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    /// Growth exponent of `mean` across horizons, when it could be fitted.
    pub slope: Option<f64>,
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv_writer(path, AGGREGATE_SCHEMA)?;
    w.write_record(["horizon", "metric", "mean", "se", "n", "slope"])?;
    for r in rows {
        w.write_record([
            r.horizon.to_string(),
            r.metric.clone(),
            num(r.mean),
            num(r.se),
            r.n.to_string(),
            r.slope.map(num).unwrap_or_default(),
        ])?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().next().unwrap_or_default();
    if first.trim() != format!("# schema {AGGREGATE_SCHEMA}") {
        bail!("{}: expected schema line `# schema {AGGREGATE_SCHEMA}`, found `{first}`", path.display());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: AggregateRow = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

/// One fitted growth rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub metric: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub dropped: usize,
}

pub fn write_rates(path: &Path, rows: &[RateRow]) -> Result<()> {
    let mut w = csv_writer(path, RATES_SCHEMA)?;
    w.write_record(["metric", "slope", "intercept", "r_squared", "points", "dropped"])?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            num(r.slope),
            num(r.intercept),
            num(r.r_squared),
            r.points.to_string(),
            r.dropped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_prop1(path: &Path, report: &Prop1Report) -> Result<()> {
    let mut w = csv_writer(path, PROP1_SCHEMA)?;
    w.write_record(["t", "lhs", "rhs", "slack", "slack_se"])?;
    for t in 0..report.slack.len() {
        w.write_record([
            t.to_string(),
            num(report.lhs[t]),
            num(report.rhs[t]),
            num(report.slack[t]),
            num(report.slack_se[t]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
