//! Online regression oracles.
//!
//! Two learners are provided behind [`RegressionOracle`]:
//!
//! - [`FiniteClassOracle`]: exponential weights over an explicit list of
//!   `(context, arm)` tables, predicting the weight-averaged table value.
//!   With squared loss on `[-1, 1]` and `eta = 1/8` its cumulative squared
//!   error exceeds the best table's by at most `8 ln N`.
//! - [`LinearOracle`]: online ridge regression (or the Vovk-Azoury-Warmuth
//!   forecaster) over a fixed feature table, predictions clipped to `[-1, 1]`.
//!
//! [`TrackedOracle`] pairs a learner with an [`ErrorLedger`] that records the
//! squared error of the prediction issued *before* each update, both against
//! the realized value and (when the caller knows it) against the true mean.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{ContextId, Error, Result, Table};

/// Exp-concavity constant of squared loss on `[-1, 1]`.
pub const DEFAULT_ETA: f64 = 1.0 / 8.0;
pub const DEFAULT_RIDGE: f64 = 1.0;

pub trait RegressionOracle {
    fn num_arms(&self) -> usize;

    /// Estimate for one `(context, arm)` pair, in `[-1, 1]`.
    fn predict_arm(&self, context: ContextId, arm: usize) -> Result<f64>;

    /// Per-arm estimates for `context`, each in `[-1, 1]`.
    fn predict(&self, context: ContextId) -> Result<Vec<f64>> {
        (0..self.num_arms())
            .map(|a| self.predict_arm(context, a))
            .collect()
    }

    /// Feed back a realized value for the played arm.
    fn update(&mut self, context: ContextId, arm: usize, value: f64) -> Result<()>;
}

fn check_value(value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite("realized value"));
    }
    if !(-1.0..=1.0).contains(&value) {
        return Err(Error::OutOfRange {
            what: "realized value",
            value,
            lo: -1.0,
            hi: 1.0,
        });
    }
    Ok(())
}

fn check_arm(arm: usize, k: usize) -> Result<()> {
    if arm >= k {
        return Err(Error::IndexOutOfRange {
            what: "arm",
            index: arm,
            len: k,
        });
    }
    Ok(())
}

/// Exponential weights over a finite hypothesis class.
#[derive(Debug, Clone)]
pub struct FiniteClassOracle {
    hypotheses: Vec<Table>,
    log_weights: Vec<f64>,
    eta: f64,
    // normalized weights, refreshed after each update
    weights: Vec<f64>,
}

impl FiniteClassOracle {
    pub fn new(hypotheses: Vec<Table>, eta: f64) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::InvalidParameter {
                what: "hypothesis count",
                requirement: "at least 1",
                value: 0.0,
            });
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParameter {
                what: "eta",
                requirement: "finite and positive",
                value: eta,
            });
        }
        let (nx, k) = (hypotheses[0].num_contexts(), hypotheses[0].num_arms());
        for h in &hypotheses {
            if h.num_contexts() != nx || h.num_arms() != k {
                return Err(Error::DimensionMismatch {
                    what: "hypothesis table",
                    expected: nx * k,
                    found: h.num_contexts() * h.num_arms(),
                });
            }
        }
        let n = hypotheses.len();
        Ok(Self {
            hypotheses,
            log_weights: alloc::vec![0.0; n],
            eta,
            weights: alloc::vec![1.0 / n as f64; n],
        })
    }

    pub fn hypotheses(&self) -> &[Table] {
        &self.hypotheses
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Normalized weights (a probability vector).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn renormalize(&mut self) {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        // keep log weights anchored at 0 so they never drift to -inf
        for lw in &mut self.log_weights {
            *lw -= max;
        }
        let mut total = 0.0;
        for (w, lw) in self.weights.iter_mut().zip(&self.log_weights) {
            *w = libm::exp(*lw);
            total += *w;
        }
        for w in &mut self.weights {
            *w /= total;
        }
    }
}

impl RegressionOracle for FiniteClassOracle {
    fn num_arms(&self) -> usize {
        self.hypotheses[0].num_arms()
    }

    fn predict_arm(&self, context: ContextId, arm: usize) -> Result<f64> {
        self.hypotheses[0].check_context(context)?;
        check_arm(arm, self.num_arms())?;
        let p: f64 = self
            .hypotheses
            .iter()
            .zip(&self.weights)
            .map(|(h, w)| w * h.get(context, arm))
            .sum();
        Ok(p.clamp(-1.0, 1.0))
    }

    fn update(&mut self, context: ContextId, arm: usize, value: f64) -> Result<()> {
        check_value(value)?;
        self.hypotheses[0].check_context(context)?;
        check_arm(arm, self.num_arms())?;
        for (lw, h) in self.log_weights.iter_mut().zip(&self.hypotheses) {
            let e = h.get(context, arm) - value;
            *lw -= self.eta * e * e;
        }
        self.renormalize();
        Ok(())
    }
}

/// Which linear forecaster to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearRule {
    /// Ridge regression on past data: `phi^T (reg I + sum phi phi^T)^{-1} sum y phi`.
    #[default]
    Ridge,
    /// Vovk-Azoury-Warmuth: the Gram matrix also includes the query feature.
    VovkAzouryWarmuth,
}

/// Features indexed `[context][arm] -> R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub dim: usize,
    /// `features[context][arm]` has length `dim`.
    pub features: Vec<Vec<Vec<f64>>>,
}

impl FeatureTable {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter {
                what: "feature dimension",
                requirement: "at least 1",
                value: 0.0,
            });
        }
        if self.features.is_empty() || self.features[0].is_empty() {
            return Err(Error::InvalidInstance("empty feature table".into()));
        }
        let k = self.features[0].len();
        for row in &self.features {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "feature row",
                    expected: k,
                    found: row.len(),
                });
            }
            for phi in row {
                if phi.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        what: "feature vector",
                        expected: self.dim,
                        found: phi.len(),
                    });
                }
                if phi.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("feature vector"));
                }
            }
        }
        Ok(())
    }

    pub fn num_contexts(&self) -> usize {
        self.features.len()
    }

    pub fn num_arms(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn get(&self, context: ContextId, arm: usize) -> Result<&[f64]> {
        let row = self.features.get(context).ok_or(Error::IndexOutOfRange {
            what: "context",
            index: context,
            len: self.features.len(),
        })?;
        row.get(arm).map(Vec::as_slice).ok_or(Error::IndexOutOfRange {
            what: "arm",
            index: arm,
            len: row.len(),
        })
    }
}

/// Online linear regression with rank-one Sherman-Morrison updates.
#[derive(Debug, Clone)]
pub struct LinearOracle {
    features: FeatureTable,
    rule: LinearRule,
    regularizer: f64,
    gram: Vec<f64>,
    gram_inv: Vec<f64>,
    target: Vec<f64>,
}

impl LinearOracle {
    pub fn new(features: FeatureTable, regularizer: f64, rule: LinearRule) -> Result<Self> {
        features.validate()?;
        if !(regularizer > 0.0) || !regularizer.is_finite() {
            return Err(Error::InvalidParameter {
                what: "ridge regularizer",
                requirement: "finite and positive",
                value: regularizer,
            });
        }
        let d = features.dim;
        let mut gram = alloc::vec![0.0; d * d];
        let mut gram_inv = alloc::vec![0.0; d * d];
        for i in 0..d {
            gram[i * d + i] = regularizer;
            gram_inv[i * d + i] = 1.0 / regularizer;
        }
        Ok(Self {
            features,
            rule,
            regularizer,
            gram,
            gram_inv,
            target: alloc::vec![0.0; d],
        })
    }

    pub fn dim(&self) -> usize {
        self.features.dim
    }

    pub fn regularizer(&self) -> f64 {
        self.regularizer
    }

    pub fn rule(&self) -> LinearRule {
        self.rule
    }

    /// `reg I + sum phi phi^T`, row-major.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    /// Current coefficient vector `gram^{-1} * sum y phi`.
    pub fn coefficients(&self) -> Vec<f64> {
        mat_vec(&self.gram_inv, &self.target)
    }
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d)
        .map(|i| (0..d).map(|j| m[i * d + j] * v[j]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl RegressionOracle for LinearOracle {
    fn num_arms(&self) -> usize {
        self.features.num_arms()
    }

    fn predict_arm(&self, context: ContextId, arm: usize) -> Result<f64> {
        let phi = self.features.get(context, arm)?;
        let a_inv_phi = mat_vec(&self.gram_inv, phi);
        let raw = dot(&a_inv_phi, &self.target);
        let raw = match self.rule {
            LinearRule::Ridge => raw,
            LinearRule::VovkAzouryWarmuth => raw / (1.0 + dot(phi, &a_inv_phi)),
        };
        Ok(raw.clamp(-1.0, 1.0))
    }

    fn update(&mut self, context: ContextId, arm: usize, value: f64) -> Result<()> {
        check_value(value)?;
        let phi = self.features.get(context, arm)?.to_vec();
        let d = phi.len();
        let u = mat_vec(&self.gram_inv, &phi);
        let denom = 1.0 + dot(&phi, &u);
        for i in 0..d {
            for j in 0..d {
                self.gram_inv[i * d + j] -= u[i] * u[j] / denom;
                self.gram[i * d + j] += phi[i] * phi[j];
            }
            self.target[i] += value * phi[i];
        }
        Ok(())
    }
}

/// Either oracle kind, so oracle sets can be cloned and reset.
#[derive(Debug, Clone)]
pub enum AnyOracle {
    Finite(FiniteClassOracle),
    Linear(LinearOracle),
}

impl RegressionOracle for AnyOracle {
    fn num_arms(&self) -> usize {
        match self {
            AnyOracle::Finite(o) => o.num_arms(),
            AnyOracle::Linear(o) => o.num_arms(),
        }
    }

    fn predict_arm(&self, context: ContextId, arm: usize) -> Result<f64> {
        match self {
            AnyOracle::Finite(o) => o.predict_arm(context, arm),
            AnyOracle::Linear(o) => o.predict_arm(context, arm),
        }
    }

    fn predict(&self, context: ContextId) -> Result<Vec<f64>> {
        match self {
            AnyOracle::Finite(o) => o.predict(context),
            AnyOracle::Linear(o) => o.predict(context),
        }
    }

    fn update(&mut self, context: ContextId, arm: usize, value: f64) -> Result<()> {
        match self {
            AnyOracle::Finite(o) => o.update(context, arm, value),
            AnyOracle::Linear(o) => o.update(context, arm, value),
        }
    }
}

/// One ledger row: the prediction issued before the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub context: ContextId,
    pub arm: usize,
    pub prediction: f64,
    pub realized: f64,
    pub truth: Option<f64>,
}

/// Cumulative squared prediction error of one oracle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorLedger {
    /// `sum (prediction - realized)^2`, the observable proxy.
    pub vs_realized: f64,
    /// `sum (prediction - true mean)^2` over rounds where the mean was supplied.
    pub vs_truth: f64,
    pub rounds: usize,
    pub truth_rounds: usize,
    pub history: Option<Vec<LedgerEntry>>,
}

impl ErrorLedger {
    pub fn with_history() -> Self {
        Self {
            history: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn record(&mut self, entry: LedgerEntry) {
        let e = entry.prediction - entry.realized;
        self.vs_realized += e * e;
        self.rounds += 1;
        if let Some(t) = entry.truth {
            let e = entry.prediction - t;
            self.vs_truth += e * e;
            self.truth_rounds += 1;
        }
        if let Some(h) = &mut self.history {
            h.push(entry);
        }
    }
}

/// An oracle plus its error ledger.
#[derive(Debug, Clone)]
pub struct TrackedOracle {
    pub oracle: AnyOracle,
    pub ledger: ErrorLedger,
}

impl TrackedOracle {
    pub fn new(oracle: AnyOracle) -> Self {
        Self {
            oracle,
            ledger: ErrorLedger::default(),
        }
    }

    pub fn with_history(oracle: AnyOracle) -> Self {
        Self {
            oracle,
            ledger: ErrorLedger::with_history(),
        }
    }

    pub fn predict(&self, context: ContextId) -> Result<Vec<f64>> {
        self.oracle.predict(context)
    }

    /// Record the pre-update prediction in the ledger, then update.
    pub fn observe(
        &mut self,
        context: ContextId,
        arm: usize,
        value: f64,
        truth: Option<f64>,
    ) -> Result<()> {
        check_value(value)?;
        let prediction = self.oracle.predict_arm(context, arm)?;
        self.oracle.update(context, arm, value)?;
        self.ledger.record(LedgerEntry {
            context,
            arm,
            prediction,
            realized: value,
            truth,
        });
        Ok(())
    }
}

/// Cumulative squared error of the trace minus the comparator's.
pub fn oracle_regret(trace: &[(f64, f64)], best_in_class_sq_error: f64) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let own: f64 = trace.iter().map(|(p, y)| (p - y) * (p - y)).sum();
    own - best_in_class_sq_error
}

/// Smallest cumulative squared error of any single table on the observed
/// `(context, arm, value)` stream.
pub fn best_hypothesis_sq_error(hypotheses: &[Table], stream: &[(ContextId, usize, f64)]) -> f64 {
    hypotheses
        .iter()
        .map(|h| {
            stream
                .iter()
                .map(|&(x, a, y)| {
                    let e = h.get(x, a) - y;
                    e * e
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Cumulative squared error of the best fixed (unclipped) linear predictor
/// in hindsight, from the normal equations.
pub fn best_linear_sq_error(
    features: &FeatureTable,
    stream: &[(ContextId, usize, f64)],
) -> Result<f64> {
    let d = features.dim;
    let mut gram = alloc::vec![0.0; d * d];
    let mut rhs = alloc::vec![0.0; d];
    for &(x, a, y) in stream {
        let phi = features.get(x, a)?;
        for i in 0..d {
            for j in 0..d {
                gram[i * d + j] += phi[i] * phi[j];
            }
            rhs[i] += y * phi[i];
        }
    }
    // tiny jitter keeps rank-deficient designs solvable
    for i in 0..d {
        gram[i * d + i] += 1e-12;
    }
    let theta = solve_dense(gram, rhs, d)?;
    let mut loss = 0.0;
    for &(x, a, y) in stream {
        let e = dot(features.get(x, a)?, &theta) - y;
        loss += e * e;
    }
    Ok(loss)
}

/// Gaussian elimination with partial pivoting on a row-major `d x d` system.
pub(crate) fn solve_dense(mut m: Vec<f64>, mut b: Vec<f64>, d: usize) -> Result<Vec<f64>> {
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| m[i * d + col].abs().total_cmp(&m[j * d + col].abs()))
            .unwrap_or(col);
        if m[pivot * d + col].abs() < 1e-300 {
            return Err(Error::Infeasible("singular linear system".into()));
        }
        if pivot != col {
            for j in 0..d {
                m.swap(col * d + j, pivot * d + j);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..d {
            let f = m[row * d + col] / m[col * d + col];
            for j in col..d {
                m[row * d + j] -= f * m[col * d + j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = alloc::vec![0.0; d];
    for row in (0..d).rev() {
        let s: f64 = (row + 1..d).map(|j| m[row * d + j] * x[j]).sum();
        x[row] = (b[row] - s) / m[row * d + row];
    }
    Ok(x)
}
