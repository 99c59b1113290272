//! Lyapunov potentials and virtual queues.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Cap on the exponent `rate * x` of the exponential potential.
pub const EXP_EXPONENT_CAP: f64 = 500.0;

/// Convex, non-decreasing potential on `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// `x^2 / v`
    Quadratic { v: f64 },
    /// `exp(rate * x)`
    Exponential { rate: f64 },
}

/// `(phi, phi', phi'')` at a point, with a flag when the exponential saturated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValues {
    pub value: f64,
    pub first: f64,
    pub second: f64,
    pub saturated: bool,
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        let (what, p) = match *self {
            Potential::Quadratic { v } => ("quadratic scale V", v),
            Potential::Exponential { rate } => ("exponential rate", rate),
        };
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidParameter {
                what,
                requirement: "finite and positive",
                value: p,
            });
        }
        Ok(())
    }

    /// Evaluate the potential and its first two derivatives at `x >= 0`.
    pub fn eval(&self, x: f64) -> Result<PhiValues> {
        if !(x >= 0.0) {
            return Err(Error::InvalidParameter {
                what: "potential argument",
                requirement: "non-negative",
                value: x,
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> PhiValues {
        match *self {
            Potential::Quadratic { v } => PhiValues {
                value: x * x / v,
                first: 2.0 * x / v,
                second: 2.0 / v,
                saturated: false,
            },
            Potential::Exponential { rate } => {
                let mut exponent = rate * x;
                let saturated = exponent > EXP_EXPONENT_CAP;
                if saturated {
                    exponent = EXP_EXPONENT_CAP;
                }
                let e = libm::exp(exponent);
                PhiValues {
                    value: e,
                    first: rate * e,
                    second: rate * rate * e,
                    saturated,
                }
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval_unchecked(x).value
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.eval_unchecked(x).first
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.eval_unchecked(x).second
    }
}

/// Evaluate `(phi, phi', phi'')`.
pub fn phi_eval(potential: &Potential, x: f64) -> Result<(f64, f64, f64)> {
    let v = potential.eval(x)?;
    Ok((v.value, v.first, v.second))
}

/// Which case of the main guarantee the potential is tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningCase {
    /// Round-wise feasible in expectation (also Slater and non-negative regret):
    /// quadratic with `V = sqrt(K T U)`.
    InExpectation,
    /// Almost-surely feasible: exponential with `rate = 1 / (8 sqrt(K U T))`.
    AlmostSure,
    /// Knapsack (non-negative costs, long-term budget):
    /// exponential with `rate = 1 / (8 sqrt(K U T) + 2 B)`.
    Knapsack,
    /// Signed costs, i.i.d. contexts, long-term budget with the `B/T` cost
    /// shift: quadratic with `V = sqrt(K T U)`.
    LinearConstraints,
}

/// Potential parameters for a given tuning case.
pub fn auto_parameter(
    case: TuningCase,
    num_arms: usize,
    horizon: usize,
    oracle_error: f64,
    budget: f64,
) -> Result<Potential> {
    if num_arms < 2 {
        return Err(Error::TooFewArms(num_arms));
    }
    if horizon < 1 {
        return Err(Error::InvalidParameter {
            what: "horizon",
            requirement: "at least 1",
            value: horizon as f64,
        });
    }
    if !(oracle_error > 0.0) || !oracle_error.is_finite() {
        return Err(Error::InvalidParameter {
            what: "oracle error bound",
            requirement: "finite and positive",
            value: oracle_error,
        });
    }
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::InvalidParameter {
            what: "budget",
            requirement: "finite and non-negative",
            value: budget,
        });
    }
    let root = libm::sqrt(num_arms as f64 * horizon as f64 * oracle_error);
    Ok(match case {
        TuningCase::InExpectation | TuningCase::LinearConstraints => Potential::Quadratic { v: root },
        TuningCase::AlmostSure => Potential::Exponential {
            rate: 1.0 / (8.0 * root),
        },
        TuningCase::Knapsack => Potential::Exponential {
            rate: 1.0 / (8.0 * root + 2.0 * budget),
        },
    })
}

/// Virtual queues, one per resource, following `Q <- max(0, Q + c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    q: Vec<f64>,
    round: usize,
}

impl QueueState {
    pub fn new(resources: usize) -> Self {
        Self {
            q: alloc::vec![0.0; resources],
            round: 0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn resources(&self) -> usize {
        self.q.len()
    }

    /// Apply one round of costs, each required to lie in `[-1, 1]`.
    pub fn update(&mut self, costs: &[f64]) -> Result<()> {
        self.update_in_range(costs, -1.0, 1.0)
    }

    /// Apply one round of costs, each required to lie in `[lo, hi]`.
    pub fn update_in_range(&mut self, costs: &[f64], lo: f64, hi: f64) -> Result<()> {
        if costs.len() != self.q.len() {
            return Err(Error::DimensionMismatch {
                what: "cost vector",
                expected: self.q.len(),
                found: costs.len(),
            });
        }
        for &c in costs {
            if !c.is_finite() {
                return Err(Error::NonFinite("cost"));
            }
            if c < lo || c > hi {
                return Err(Error::OutOfRange {
                    what: "cost",
                    value: c,
                    lo,
                    hi,
                });
            }
        }
        for (q, c) in self.q.iter_mut().zip(costs) {
            *q = (*q + c).max(0.0);
        }
        self.round += 1;
        Ok(())
    }
}

/// Functional form of [`QueueState::update`].
pub fn queue_update(state: &QueueState, realized_costs: &[f64]) -> Result<QueueState> {
    let mut next = state.clone();
    next.update(realized_costs)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn phi_examples() {
        assert_eq!(phi_eval(&Potential::Quadratic { v: 4.0 }, 2.0).unwrap(), (1.0, 1.0, 0.5));
        assert_eq!(
            phi_eval(&Potential::Exponential { rate: 0.5 }, 0.0).unwrap(),
            (1.0, 0.5, 0.25)
        );
        let (p, d1, d2) = phi_eval(&Potential::Exponential { rate: 0.1 }, 10.0).unwrap();
        // e via its Taylor series
        let mut e = 0.0;
        let mut term = 1.0;
        for n in 1..30 {
            e += term;
            term /= n as f64;
        }
        assert!((p - e).abs() < 1e-12);
        assert!((d1 - 0.1 * e).abs() < 1e-12);
        assert!((d2 - 0.01 * e).abs() < 1e-12);
        assert!((p - 2.718_281_8).abs() < 1e-7);
        assert!(phi_eval(&Potential::Quadratic { v: 1.0 }, -0.1).is_err());
    }

    #[test]
    fn exponential_saturates() {
        let v = Potential::Exponential { rate: 1.0 }.eval(1000.0).unwrap();
        assert!(v.saturated);
        assert!(v.value.is_finite());
        assert!(!Potential::Exponential { rate: 1.0 }.eval(400.0).unwrap().saturated);
    }

    #[test]
    fn finite_difference_derivatives() {
        let h = 1e-5;
        for pot in [Potential::Quadratic { v: 3.0 }, Potential::Exponential { rate: 0.7 }] {
            for i in 1..40 {
                let x = i as f64 * 0.25;
                let fd1 = (pot.value(x + h) - pot.value(x - h)) / (2.0 * h);
                let fd2 = (pot.derivative(x + h) - pot.derivative(x - h)) / (2.0 * h);
                let scale = pot.value(x).max(1.0);
                assert!((fd1 - pot.derivative(x)).abs() <= 1e-6 * scale, "{pot:?} at {x}");
                assert!((fd2 - pot.second_derivative(x)).abs() <= 1e-6 * scale);
                assert!(pot.derivative(x) >= 0.0);
                assert!(pot.second_derivative(x + 0.25) >= pot.second_derivative(x));
            }
        }
    }

    #[test]
    fn auto_parameter_examples() {
        assert_eq!(
            auto_parameter(TuningCase::InExpectation, 4, 10_000, 1.0, 0.0).unwrap(),
            Potential::Quadratic { v: 200.0 }
        );
        match auto_parameter(TuningCase::AlmostSure, 4, 10_000, 1.0, 0.0).unwrap() {
            Potential::Exponential { rate } => assert!((rate - 0.000_625).abs() < 1e-15),
            p => panic!("{p:?}"),
        }
        match auto_parameter(TuningCase::Knapsack, 4, 10_000, 1.0, 100.0).unwrap() {
            Potential::Exponential { rate } => assert!((rate - 1.0 / 1800.0).abs() < 1e-15),
            p => panic!("{p:?}"),
        }
        assert!(auto_parameter(TuningCase::Knapsack, 1, 10, 1.0, 1.0).is_err());
        assert!(auto_parameter(TuningCase::Knapsack, 2, 10, 0.0, 1.0).is_err());
    }

    #[test]
    fn queue_recursion_examples() {
        let mut q = QueueState::new(1);
        let mut path = vec![];
        for c in [0.5, -0.3, 0.2] {
            q = queue_update(&q, &[c]).unwrap();
            path.push(q.values()[0]);
        }
        assert!((path[0] - 0.5).abs() < 1e-15);
        assert!((path[1] - 0.2).abs() < 1e-15);
        assert!((path[2] - 0.4).abs() < 1e-15);
        assert_eq!(q.round(), 3);

        let mut z = QueueState::new(1);
        for i in 0..100 {
            z.update(&[-(i as f64 % 7.0) / 7.0]).unwrap();
            assert_eq!(z.values()[0], 0.0);
        }
        assert!(z.update(&[1.5]).is_err());
        assert!(z.update(&[0.1, 0.1]).is_err());
        assert!(z.update_in_range(&[-1.75], -2.0, 1.0).is_ok());
    }
}
