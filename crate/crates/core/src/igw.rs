//! Inverse Gap Weighting.
//!
//! Given a loss vector `v` and a scale `gamma >= 0`, the IGW distribution puts
//! mass `1 / (lambda + 2 * gamma * (v[a] - min v))` on arm `a`, with the
//! normalizer `lambda` in `[1, K]` chosen so the masses sum to one. The
//! normalizer is found by bisection on the strictly decreasing map
//! `lambda -> sum_a 1 / (lambda + 2 * gamma * gap_a)`.

use alloc::vec::Vec;

use rand::Rng;

use crate::{Error, Result};

/// Residual tolerance on `sum_a p(a) - 1` for the normalizer bisection.
pub const NORMALIZER_TOL: f64 = 1e-12;
/// Iteration cap for the normalizer bisection.
pub const MAX_BISECTION_ITERS: usize = 200;
/// Slack accepted around the `[1, K]` normalizer range after bisection.
pub const NORMALIZER_RANGE_SLACK: f64 = 1e-9;

/// Per-arm losses (smaller is better). At least two finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewArms(values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loss vector"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Lowest index attaining the minimum loss.
    pub fn greedy_arm(&self) -> usize {
        let mut best = 0;
        for (a, &v) in self.0.iter().enumerate().skip(1) {
            if v < self.0[best] {
                best = a;
            }
        }
        best
    }

    pub fn min(&self) -> f64 {
        self.0[self.greedy_arm()]
    }
}

/// A solved IGW distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct IgwDistribution {
    probs: Vec<f64>,
    normalizer: f64,
    gamma: f64,
    greedy: usize,
}

impl IgwDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The solved `lambda`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Lowest-index minimizer of the loss vector the distribution was built from.
    pub fn greedy_arm(&self) -> usize {
        self.greedy
    }

    pub fn num_arms(&self) -> usize {
        self.probs.len()
    }

    /// Draw an arm. See [`igw_sample`].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        igw_sample(self, rng)
    }
}

fn mass_sum(lambda: f64, scaled_gaps: &[f64]) -> f64 {
    scaled_gaps.iter().map(|g| 1.0 / (lambda + g)).sum()
}

/// Solve for the IGW distribution of `losses` at scale `gamma`.
pub fn igw_solve(losses: &LossVector, gamma: f64) -> Result<IgwDistribution> {
    if !gamma.is_finite() {
        return Err(Error::NonFinite("gamma"));
    }
    if gamma < 0.0 {
        return Err(Error::InvalidParameter {
            what: "gamma",
            requirement: "non-negative",
            value: gamma,
        });
    }
    let k = losses.len();
    let kf = k as f64;
    let greedy = losses.greedy_arm();
    if gamma == 0.0 {
        return Ok(IgwDistribution {
            probs: alloc::vec![1.0 / kf; k],
            normalizer: kf,
            gamma,
            greedy,
        });
    }

    let min = losses.min();
    let scaled_gaps: Vec<f64> = losses
        .as_slice()
        .iter()
        .map(|&v| 2.0 * gamma * (v - min))
        .collect();
    if scaled_gaps.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("scaled loss gaps"));
    }

    // mass_sum(1) >= 1 (the greedy arm alone contributes 1) and
    // mass_sum(K) <= 1 (every term is at most 1/K).
    let (mut lo, mut hi) = (1.0_f64, kf);
    let lambda = if (mass_sum(hi, &scaled_gaps) - 1.0).abs() <= NORMALIZER_TOL {
        hi
    } else if (mass_sum(lo, &scaled_gaps) - 1.0).abs() <= NORMALIZER_TOL {
        lo
    } else {
        assert!(
            mass_sum(lo, &scaled_gaps) > 1.0 && mass_sum(hi, &scaled_gaps) < 1.0,
            "IGW normalizer not bracketed by [1, K]"
        );
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..MAX_BISECTION_ITERS {
            mid = 0.5 * (lo + hi);
            let residual = mass_sum(mid, &scaled_gaps) - 1.0;
            if residual.abs() <= NORMALIZER_TOL || hi - lo <= f64::EPSILON * hi {
                break;
            }
            if residual > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        mid
    };

    let probs = scaled_gaps.iter().map(|g| 1.0 / (lambda + g)).collect();
    Ok(IgwDistribution {
        probs,
        normalizer: lambda,
        gamma,
        greedy,
    })
}

/// Sample an arm index by inverting the cumulative distribution.
pub fn igw_sample<R: Rng + ?Sized>(dist: &IgwDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (a, &p) in dist.probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = a;
        }
        acc += p;
        if u < acc {
            return a;
        }
    }
    // Only reachable when rounding leaves the total slightly below `u`.
    last_positive
}

/// Check that `mu` is a probability vector of length `k`.
pub fn validate_simplex(mu: &[f64], k: usize) -> Result<()> {
    if mu.len() != k {
        return Err(Error::DimensionMismatch {
            what: "distribution",
            expected: k,
            found: mu.len(),
        });
    }
    let sum: f64 = mu.iter().sum();
    let min = mu.iter().copied().fold(f64::INFINITY, f64::min);
    if !sum.is_finite() || min < -1e-12 || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSimplex { sum, min });
    }
    Ok(())
}

/// Both sides of the IGW regret inequality
/// `<v, p> - <v, mu> <= K / (2 gamma) + gamma * E_{a~p} (v(a) - v_hat(a))^2`
/// where `p = IGW_gamma(v_hat)`. Returns `(lhs, rhs)`.
pub fn lemma1_gap(
    losses_hat: &LossVector,
    losses_true: &[f64],
    comparator: &[f64],
    gamma: f64,
) -> Result<(f64, f64)> {
    let k = losses_hat.len();
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter {
            what: "gamma",
            requirement: "positive",
            value: gamma,
        });
    }
    if losses_true.len() != k {
        return Err(Error::DimensionMismatch {
            what: "true loss vector",
            expected: k,
            found: losses_true.len(),
        });
    }
    if losses_true.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("true loss vector"));
    }
    validate_simplex(comparator, k)?;
    let p = igw_solve(losses_hat, gamma)?;
    let probs = p.probs();
    let dot = |w: &[f64]| -> f64 { losses_true.iter().zip(w).map(|(v, w)| v * w).sum() };
    let lhs = dot(probs) - dot(comparator);
    let est_err: f64 = probs
        .iter()
        .zip(losses_true.iter().zip(losses_hat.as_slice()))
        .map(|(p, (v, vh))| p * (v - vh) * (v - vh))
        .sum();
    let rhs = k as f64 / (2.0 * gamma) + gamma * est_err;
    Ok((lhs, rhs))
}
