//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ccb_core::controller::{BudgetScaling, ControllerConfig, CostShift, EnsembleConfig, PotentialSpec};
use ccb_core::envs::{FeasibilityTag, ProblemInstance};
use ccb_core::oracle::{FeatureTable, LinearRule};
use ccb_core::Table;
use serde::{Deserialize, Serialize};

/// Where the problem instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InstanceRef {
    /// Path to an instance JSON file, relative to the config file.
    File { path: PathBuf },
    Inline { instance: Box<ProblemInstance> },
    /// The two-arm phased family with a reward drop after phase `tau`.
    LowerBound { horizon: usize, budget: f64, tau: usize },
}

/// Per-target hypothesis tables of a finite class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTables {
    pub reward: Vec<Table>,
    /// One list per cost resource.
    pub costs: Vec<Vec<Table>>,
}

/// Online regression oracles for every target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleSpec {
    /// Exponential weights over a finite class. Either explicit `tables`, or
    /// the ground truth plus `size - 1` random tables drawn from `class_seed`.
    Finite {
        #[serde(default)]
        size: Option<usize>,
        #[serde(default)]
        class_seed: u64,
        #[serde(default)]
        tables: Option<ClassTables>,
        #[serde(default)]
        eta: Option<f64>,
    },
    /// Online ridge (or forward) regression on fixed features.
    Linear {
        features: FeatureTable,
        #[serde(default)]
        regularizer: Option<f64>,
        #[serde(default)]
        rule: LinearRule,
    },
}

/// Budget assigned to each horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BudgetRule {
    /// Whatever the instance declares.
    Instance,
    Fixed { value: f64 },
    /// `scale * sqrt(T)`.
    SqrtT { scale: f64 },
    /// `fraction * T`.
    FractionOfT { fraction: f64 },
}

impl Default for BudgetRule {
    fn default() -> Self {
        BudgetRule::Instance
    }
}

impl BudgetRule {
    pub fn budget(&self, instance_budget: f64, horizon: usize) -> f64 {
        match *self {
            BudgetRule::Instance => instance_budget,
            BudgetRule::Fixed { value } => value,
            BudgetRule::SqrtT { scale } => scale * (horizon as f64).sqrt(),
            BudgetRule::FractionOfT { fraction } => fraction * horizon as f64,
        }
    }
}

/// Which loop drives each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeSpec {
    Plain,
    HardStop { scaling: BudgetScaling },
    Ensemble {
        #[serde(flatten)]
        ensemble: EnsembleConfig,
    },
}

impl Default for ModeSpec {
    fn default() -> Self {
        ModeSpec::Plain
    }
}

/// Seeds: an explicit list or `count` consecutive seeds from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range {
        count: u64,
        #[serde(default)]
        start: u64,
    },
}

impl SeedSpec {
    pub fn seeds(&self, base: u64) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.iter().map(|s| s + base).collect(),
            SeedSpec::Range { count, start } => (0..*count).map(|i| base + start + i).collect(),
        }
    }
}

/// Controller part of the config. `oracle_error` defaults to the class's
/// own bound: `ln max(|F|, |G|)` for finite classes, `d ln T` for linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub potential: PotentialSpec,
    #[serde(default)]
    pub oracle_error: Option<f64>,
    #[serde(default)]
    pub cost_shift: CostShift,
}

impl ControllerSpec {
    pub fn with_error(&self, oracle_error: f64) -> ControllerConfig {
        ControllerConfig {
            potential: self.potential,
            oracle_error,
            cost_shift: self.cost_shift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Output directory, relative to the output root.
    pub dir: PathBuf,
    /// Write one CSV per (horizon, seed) run.
    #[serde(default)]
    pub traces: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub instance: InstanceRef,
    pub oracle: OracleSpec,
    pub controller: ControllerSpec,
    pub benchmark: FeasibilityTag,
    pub horizons: Vec<usize>,
    pub seeds: SeedSpec,
    #[serde(default)]
    pub budget: BudgetRule,
    #[serde(default)]
    pub mode: ModeSpec,
    pub output: OutputSpec,
    #[serde(default)]
    pub description: Option<String>,
}

impl ExperimentConfig {
    /// Parse a config, reporting the JSON path of any schema violation.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow::anyhow!("config field `{}`: {}", e.path(), e.inner()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            bail!("config field `horizons`: at least one horizon required");
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            bail!("config field `horizons`: must be strictly ascending");
        }
        if self.seeds.seeds(0).is_empty() {
            bail!("config field `seeds`: at least one seed required");
        }
        if let Some(u) = self.controller.oracle_error {
            if !(u > 0.0) || !u.is_finite() {
                bail!("config field `controller.oracle_error`: must be finite and positive");
            }
        }
        Ok(())
    }

    /// At least four horizons are needed to fit a growth rate.
    pub fn supports_rate_fit(&self) -> bool {
        self.horizons.len() >= 4
    }
}
