//! Regret and constraint-violation series, the drift-plus-regret diagnostic
//! and log-log growth-rate fits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::benchmark::StationaryPolicy;
use crate::controller::RunTrace;
use crate::envs::{FeasibilityTag, ProblemInstance};
use crate::lyapunov::Potential;
use crate::{Error, Result};

/// Cumulative per-round metrics of one run. Index `t - 1` holds the value
/// after round `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    /// `sum_tau <f*(x_tau), pi(x_tau)> - f*(x_tau, a_tau)`.
    pub pseudo_regret: Vec<f64>,
    /// Benchmark expected reward minus realized reward.
    pub realized_regret: Vec<f64>,
    /// `[resource][t]` raw cumulative realized cost.
    pub cumulative_cost: Vec<Vec<f64>>,
    /// `[resource][t]` cumulative cost minus the budget for long-term kinds.
    pub ccv: Vec<Vec<f64>>,
    /// `[resource][t]` virtual queue after each round.
    pub queue: Vec<Vec<f64>>,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.pseudo_regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pseudo_regret.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.pseudo_regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_realized_regret(&self) -> f64 {
        self.realized_regret.last().copied().unwrap_or(0.0)
    }

    /// Largest final CCV over resources.
    pub fn final_ccv(&self) -> f64 {
        self.ccv
            .iter()
            .map(|c| c.last().copied().unwrap_or(0.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Regret against `benchmark` and CCV under the accounting of `kind`.
pub fn compute_metrics(
    trace: &RunTrace,
    benchmark: &StationaryPolicy,
    kind: FeasibilityTag,
    instance: &ProblemInstance,
) -> Result<MetricSeries> {
    let m = instance.num_resources();
    let offset = match kind {
        FeasibilityTag::LongTerm => instance.budget,
        _ => 0.0,
    };
    let t_len = trace.records.len();
    let mut pseudo = Vec::with_capacity(t_len);
    let mut realized = Vec::with_capacity(t_len);
    let mut cost = vec![Vec::with_capacity(t_len); m];
    let mut ccv = vec![Vec::with_capacity(t_len); m];
    let mut queue = vec![Vec::with_capacity(t_len); m];
    let (mut r, mut rr) = (0.0, 0.0);
    let mut c = vec![0.0; m];
    for rec in &trace.records {
        let row = benchmark.row(rec.context).map_err(|_| {
            Error::InvalidInstance(format!("benchmark policy has no row for context {}", rec.context))
        })?;
        let bench: f64 = row
            .iter()
            .zip(instance.f_star.row(rec.context))
            .map(|(p, f)| p * f)
            .sum();
        r += bench - instance.f_star.get(rec.context, rec.action);
        rr += bench - rec.reward;
        pseudo.push(r);
        realized.push(rr);
        for i in 0..m {
            c[i] += rec.costs[i];
            cost[i].push(c[i]);
            ccv[i].push(c[i] - offset);
            queue[i].push(rec.queue[i]);
        }
    }
    Ok(MetricSeries {
        pseudo_regret: pseudo,
        realized_regret: realized,
        cumulative_cost: cost,
        ccv,
        queue,
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var / n as f64))
}

/// Seed-averaged sides of the drift-plus-regret inequality. Index `t` holds
/// round `t`, with index 0 the empty prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub seeds: usize,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub slack: Vec<f64>,
    pub slack_se: Vec<f64>,
}

impl Prop1Report {
    /// Whether every round satisfies `slack >= -k SE`.
    pub fn holds_within(&self, k: f64) -> bool {
        self.slack
            .iter()
            .zip(&self.slack_se)
            .all(|(s, se)| *s >= -k * se)
    }
}

/// Minimum number of seeds for [`prop1_diagnostic`].
pub const PROP1_MIN_SEEDS: usize = 30;

/// Per-round sides of the drift-plus-regret inequality for one run, index
/// `t` holding round `t` (index 0 is the empty prefix):
/// `lhs(t) = Phi(Q(t)) - Phi(0) + Regret_t` and
/// `rhs(t) = 4 sqrt(K U t) + sum_{tau=1..t} Phi''(Q(tau))
///           + 4 sqrt(K U) sqrt(sum_{tau=0..t-1} Phi'(Q(tau))^2)`,
/// with potentials summed over resources.
pub fn prop1_series(
    trace: &RunTrace,
    benchmark: &StationaryPolicy,
    instance: &ProblemInstance,
    potential: &Potential,
    oracle_error: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let metrics = compute_metrics(trace, benchmark, FeasibilityTag::InExpectation, instance)?;
    let k = instance.num_arms as f64;
    let m = instance.num_resources() as f64;
    let phi0 = potential.value(0.0) * m;
    let root_ku = libm::sqrt(k * oracle_error);
    let d0 = potential.derivative(0.0);
    let mut lhs = Vec::with_capacity(trace.records.len() + 1);
    let mut rhs = Vec::with_capacity(trace.records.len() + 1);
    lhs.push(0.0);
    rhs.push(0.0);
    let mut second_sum = 0.0;
    let mut first_sq = d0 * d0 * m;
    for (i, rec) in trace.records.iter().enumerate() {
        let t = (i + 1) as f64;
        let mut phi = 0.0;
        let mut d1_sq = 0.0;
        for &q in &rec.queue {
            let v = potential.eval_unchecked(q);
            phi += v.value;
            second_sum += v.second;
            d1_sq += v.first * v.first;
        }
        lhs.push(phi - phi0 + metrics.pseudo_regret[i]);
        rhs.push(4.0 * libm::sqrt(k * oracle_error * t) + second_sum + 4.0 * root_ku * libm::sqrt(first_sq));
        first_sq += d1_sq;
    }
    Ok((lhs, rhs))
}

/// Seed means of both sides and of their difference, with its standard error.
pub fn prop1_from_series(series: &[(Vec<f64>, Vec<f64>)]) -> Result<Prop1Report> {
    if series.len() < PROP1_MIN_SEEDS {
        return Err(Error::InvalidParameter {
            what: "number of seeds",
            requirement: "at least 30",
            value: series.len() as f64,
        });
    }
    let len = series[0].0.len();
    if series.iter().any(|(l, r)| l.len() != len || r.len() != len) {
        return Err(Error::InvalidInstance("runs have different lengths".into()));
    }
    let mut report = Prop1Report {
        seeds: series.len(),
        lhs: Vec::with_capacity(len),
        rhs: Vec::with_capacity(len),
        slack: Vec::with_capacity(len),
        slack_se: Vec::with_capacity(len),
    };
    let mut buf = vec![0.0; series.len()];
    for t in 0..len {
        for (b, (l, r)) in buf.iter_mut().zip(series) {
            *b = r[t] - l[t];
        }
        let (slack, se) = mean_se(&buf);
        let n = series.len() as f64;
        report.lhs.push(series.iter().map(|(l, _)| l[t]).sum::<f64>() / n);
        report.rhs.push(series.iter().map(|(_, r)| r[t]).sum::<f64>() / n);
        report.slack.push(slack);
        report.slack_se.push(se);
    }
    Ok(report)
}

/// Monte Carlo estimate of both sides over independent runs. Requires the
/// in-expectation benchmark and at least [`PROP1_MIN_SEEDS`] runs.
pub fn prop1_diagnostic(
    traces: &[RunTrace],
    benchmark: &StationaryPolicy,
    kind: FeasibilityTag,
    instance: &ProblemInstance,
    potential: &Potential,
    oracle_error: f64,
) -> Result<Prop1Report> {
    if kind != FeasibilityTag::InExpectation {
        return Err(Error::Unsupported(format!(
            "the diagnostic is stated for the in-expectation benchmark, got {kind:?}"
        )));
    }
    if traces.len() < PROP1_MIN_SEEDS {
        return Err(Error::InvalidParameter {
            what: "number of seeds",
            requirement: "at least 30",
            value: traces.len() as f64,
        });
    }
    let series = traces
        .iter()
        .map(|t| prop1_series(t, benchmark, instance, potential, oracle_error))
        .collect::<Result<Vec<_>>>()?;
    prop1_from_series(&series)
}

/// Least-squares line through `(ln T, ln metric)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Indices of points dropped because the metric was not positive.
    pub dropped: Vec<usize>,
}

/// Positive metrics below this are raised to it before taking logs.
pub const RATE_FIT_FLOOR: f64 = 1e-9;

/// Fit the growth exponent of `metric` against `horizons`. Non-positive
/// metrics are dropped and reported; at least two points must remain.
pub fn rate_fit(horizons: &[f64], metric: &[f64]) -> Result<RateFit> {
    if horizons.len() != metric.len() {
        return Err(Error::DimensionMismatch {
            what: "metric values",
            expected: horizons.len(),
            found: metric.len(),
        });
    }
    let mut dropped = Vec::new();
    let mut pts = Vec::new();
    for (i, (&h, &v)) in horizons.iter().zip(metric).enumerate() {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter {
                what: "horizon",
                requirement: "finite and positive",
                value: h,
            });
        }
        if !(v > 0.0) || !v.is_finite() {
            dropped.push(i);
            continue;
        }
        pts.push((libm::log(h), libm::log(v.max(RATE_FIT_FLOOR))));
    }
    if pts.len() < 2 {
        return Err(Error::InvalidParameter {
            what: "usable rate-fit points",
            requirement: "at least 2 positive metrics",
            value: pts.len() as f64,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            what: "distinct horizons",
            requirement: "at least 2",
            value: 1.0,
        });
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        dropped,
    })
}
