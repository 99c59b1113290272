use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{ContextId, Error, Result};

/// Dense `(context, arm) -> value` table with values in `[-1, 1]`.
///
/// Serialized as a nested array indexed `[context][arm]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Table {
    num_contexts: usize,
    num_arms: usize,
    values: Vec<f64>,
}

impl Table {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_contexts = rows.len();
        if num_contexts == 0 {
            return Err(Error::InvalidInstance("table has no contexts".into()));
        }
        let num_arms = rows[0].len();
        let mut values = Vec::with_capacity(num_contexts * num_arms);
        for row in &rows {
            if row.len() != num_arms {
                return Err(Error::DimensionMismatch {
                    what: "table row",
                    expected: num_arms,
                    found: row.len(),
                });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::NonFinite("table"));
                }
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange {
                        what: "table entry",
                        value: v,
                        lo: -1.0,
                        hi: 1.0,
                    });
                }
                values.push(v);
            }
        }
        Ok(Self {
            num_contexts,
            num_arms,
            values,
        })
    }

    pub fn constant(num_contexts: usize, num_arms: usize, value: f64) -> Result<Self> {
        Self::from_rows(alloc::vec![alloc::vec![value; num_arms]; num_contexts])
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    #[inline]
    pub fn get(&self, context: ContextId, arm: usize) -> f64 {
        self.values[context * self.num_arms + arm]
    }

    pub fn set(&mut self, context: ContextId, arm: usize, value: f64) -> Result<()> {
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange {
                what: "table entry",
                value,
                lo: -1.0,
                hi: 1.0,
            });
        }
        self.values[context * self.num_arms + arm] = value;
        Ok(())
    }

    #[inline]
    pub fn row(&self, context: ContextId) -> &[f64] {
        &self.values[context * self.num_arms..(context + 1) * self.num_arms]
    }

    pub fn check_context(&self, context: ContextId) -> Result<()> {
        if context >= self.num_contexts {
            return Err(Error::IndexOutOfRange {
                what: "context",
                index: context,
                len: self.num_contexts,
            });
        }
        Ok(())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_contexts).map(|x| self.row(x).to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Table {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<Table> for Vec<Vec<f64>> {
    fn from(t: Table) -> Self {
        t.to_rows()
    }
}
