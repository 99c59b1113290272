//! Turning a config into instances and oracles.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ccb_core::controller::Learners;
use ccb_core::envs::{make_lower_bound_instance, NoiseLaw, ProblemInstance};
use ccb_core::oracle::{
    AnyOracle, FiniteClassOracle, LinearOracle, TrackedOracle, DEFAULT_ETA, DEFAULT_RIDGE,
};
use ccb_core::Table;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{BudgetRule, ClassTables, InstanceRef, OracleSpec};

/// Hypotheses per target when a finite class gives no size.
pub const DEFAULT_CLASS_SIZE: usize = 8;

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading instance {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let inst: ProblemInstance = serde_path_to_error::deserialize(de)
        .map_err(|e| anyhow::anyhow!("instance field `{}`: {}", e.path(), e.inner()))
        .with_context(|| format!("in {}", path.display()))?;
    inst.validate()
        .with_context(|| format!("invalid instance {}", path.display()))?;
    Ok(inst)
}

pub fn resolve_instance(r: &InstanceRef, base_dir: &Path) -> Result<ProblemInstance> {
    let inst = match r {
        InstanceRef::File { path } => load_instance(&base_dir.join(path))?,
        InstanceRef::Inline { instance } => {
            instance.validate().context("invalid inline instance")?;
            (**instance).clone()
        }
        InstanceRef::LowerBound {
            horizon,
            budget,
            tau,
        } => make_lower_bound_instance(*horizon, *budget, *tau)?,
    };
    Ok(inst)
}

/// The instance with its budget set for `horizon`.
pub fn instance_for_horizon(base: &ProblemInstance, rule: BudgetRule, horizon: usize) -> ProblemInstance {
    let mut inst = base.clone();
    inst.budget = rule.budget(base.budget, horizon);
    inst
}

fn random_table<R: Rng>(rng: &mut R, like: &Table, lo: f64) -> Table {
    let rows = (0..like.num_contexts())
        .map(|_| (0..like.num_arms()).map(|_| rng.gen_range(lo..=1.0)).collect())
        .collect();
    Table::from_rows(rows).expect("entries drawn in [-1, 1]")
}

fn lower_end(law: NoiseLaw) -> f64 {
    match law {
        NoiseLaw::Bernoulli => 0.0,
        _ => -1.0,
    }
}

/// Ground truth first, then `size - 1` random tables for every target.
pub fn generated_class(inst: &ProblemInstance, size: usize, class_seed: u64) -> ClassTables {
    let mut rng = ChaCha8Rng::seed_from_u64(class_seed);
    let mut class = |truth: &Table, law: NoiseLaw| {
        let mut hs = vec![truth.clone()];
        for _ in 1..size.max(1) {
            hs.push(random_table(&mut rng, truth, lower_end(law)));
        }
        hs
    };
    let reward = class(&inst.f_star, inst.reward_law);
    let costs = inst
        .g_star
        .iter()
        .zip(&inst.cost_laws)
        .map(|(g, &law)| class(g, law))
        .collect();
    ClassTables { reward, costs }
}

fn finite(tables: Vec<Table>, eta: f64) -> Result<TrackedOracle> {
    Ok(TrackedOracle::new(AnyOracle::Finite(FiniteClassOracle::new(tables, eta)?)))
}

pub fn build_learners(spec: &OracleSpec, inst: &ProblemInstance) -> Result<Learners> {
    match spec {
        OracleSpec::Finite {
            size,
            class_seed,
            tables,
            eta,
        } => {
            let eta = eta.unwrap_or(DEFAULT_ETA);
            let tables = match tables {
                Some(t) => t.clone(),
                None => generated_class(inst, size.unwrap_or(DEFAULT_CLASS_SIZE), *class_seed),
            };
            if tables.costs.len() != inst.num_resources() {
                bail!(
                    "oracle class has {} cost targets, instance has {} resources",
                    tables.costs.len(),
                    inst.num_resources()
                );
            }
            let reward = finite(tables.reward, eta)?;
            let costs = tables
                .costs
                .into_iter()
                .map(|t| finite(t, eta))
                .collect::<Result<Vec<_>>>()?;
            Ok(Learners::new(reward, costs))
        }
        OracleSpec::Linear {
            features,
            regularizer,
            rule,
        } => {
            let make = || -> Result<TrackedOracle> {
                Ok(TrackedOracle::new(AnyOracle::Linear(LinearOracle::new(
                    features.clone(),
                    regularizer.unwrap_or(DEFAULT_RIDGE),
                    *rule,
                )?)))
            };
            let reward = make()?;
            let costs = (0..inst.num_resources()).map(|_| make()).collect::<Result<Vec<_>>>()?;
            Ok(Learners::new(reward, costs))
        }
    }
}

/// The error bound a class guarantees: `ln max(|F|, |G|)` for finite
/// classes (at least `ln 2`), `d ln T` for linear ones.
pub fn default_oracle_error(spec: &OracleSpec, horizon: usize) -> f64 {
    match spec {
        OracleSpec::Finite { size, tables, .. } => {
            let n = match tables {
                Some(t) => t
                    .costs
                    .iter()
                    .map(Vec::len)
                    .chain(std::iter::once(t.reward.len()))
                    .max()
                    .unwrap_or(1),
                None => size.unwrap_or(DEFAULT_CLASS_SIZE),
            };
            (n.max(2) as f64).ln()
        }
        OracleSpec::Linear { features, .. } => features.dim as f64 * (horizon.max(3) as f64).ln(),
    }
}
