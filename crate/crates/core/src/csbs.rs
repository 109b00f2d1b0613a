//! Circularly symmetric binary sources.
//!
//! The `N`-variable source draws a fair bit `W` and passes it through `N`
//! independent binary symmetric channels with crossover `a1`. Every pair is
//! then a doubly symmetric binary source with crossover `a0 = 2 a1 (1 - a1)`.
//! Cell probabilities depend only on Hamming weight, so entropies are sums
//! over `N + 1` weight classes rather than `2^N` cells.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{binary_entropy, DistError, JointPmf, MAX_CELLS};
use crate::wyner::AuxModel;

/// Largest `N` for which the `2^N`-cell cross-check runs.
pub const MAX_DIRECT_VARS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CsbsError {
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("need at least 2 variables, got {0}")]
    TooFewVariables(usize),
    #[error("2^{0} cells exceed the tensor cap")]
    TensorTooLarge(usize),
    #[error(transparent)]
    Dist(#[from] DistError),
}

pub type Result<T> = std::result::Result<T, CsbsError>;

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(CsbsError::OutOfRange {
            name,
            value,
            lo,
            hi,
        })
    }
}

fn check_vars(n: usize) -> Result<()> {
    if n < 2 {
        Err(CsbsError::TooFewVariables(n))
    } else {
        Ok(())
    }
}

/// BSC crossover that produces pairwise crossover `a0`.
pub fn a1_of_a0(a0: f64) -> Result<f64> {
    check_range("a0", a0, 0.0, 0.5)?;
    Ok(0.5 - 0.5 * (1.0 - 2.0 * a0).sqrt())
}

/// Pairwise crossover of two outputs of BSC(`a1`) sharing an input.
pub fn a0_of_a1(a1: f64) -> Result<f64> {
    check_range("a1", a1, 0.0, 0.5)?;
    Ok(2.0 * a1 * (1.0 - a1))
}

/// Uniform binary pair that disagrees with probability `a0`.
pub fn dsbs_joint(a0: f64) -> Result<JointPmf> {
    check_range("a0", a0, 0.0, 0.5)?;
    let same = (1.0 - a0) / 2.0;
    let diff = a0 / 2.0;
    Ok(JointPmf::from_sizes(
        vec![2, 2],
        vec![same, diff, diff, same],
    )?)
}

/// Three binary variables with `1/2 - 3 a0 / 4` on each constant word and
/// `a0 / 4` on the other six.
pub fn csbs3_joint(a0: f64) -> Result<JointPmf> {
    check_range("a0", a0, 0.0, 0.5)?;
    let mut probs = vec![a0 / 4.0; 8];
    probs[0] = 0.5 - 0.75 * a0;
    probs[7] = 0.5 - 0.75 * a0;
    Ok(JointPmf::from_sizes(vec![2, 2, 2], probs)?)
}

/// Natural log of `(1-a)^(n-k) a^k`, with `0 ln 0 = 0`.
fn ln_branch(n: usize, k: usize, a: f64) -> f64 {
    let term = |count: usize, p: f64| {
        if count == 0 {
            0.0
        } else {
            count as f64 * p.ln()
        }
    };
    term(n - k, 1.0 - a) + term(k, a)
}

fn log_add(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// One weight class of the mixture.
struct WeightClass {
    /// `ln binom(n, k)`.
    ln_count: f64,
    /// `ln P_k` for a single word of weight `k`.
    ln_prob: f64,
    /// `P(W = 0 | weight k)`.
    posterior: f64,
}

fn weight_classes(n: usize, a1: f64) -> Vec<WeightClass> {
    let mut ln_count = 0.0;
    (0..=n)
        .map(|k| {
            if k > 0 {
                ln_count += ((n - k + 1) as f64).ln() - (k as f64).ln();
            }
            let from_zero = ln_branch(n, k, a1);
            let from_one = ln_branch(n, n - k, a1);
            let ln_prob = -LN_2 + log_add(from_zero, from_one);
            let posterior = if from_zero == f64::NEG_INFINITY {
                0.0
            } else {
                1.0 / (1.0 + (from_one - from_zero).exp())
            };
            WeightClass {
                ln_count,
                ln_prob,
                posterior,
            }
        })
        .collect()
}

/// Probability of one word of Hamming weight `k`, for `k = 0..=n`.
pub fn weight_class_probs(n: usize, a1: f64) -> Result<Vec<f64>> {
    check_vars(n)?;
    check_range("a1", a1, 0.0, 0.5)?;
    Ok(weight_classes(n, a1)
        .iter()
        .map(|c| c.ln_prob.exp())
        .collect())
}

/// The `N`-variable tensor and the fair-bit, BSC(`a1`) model generating it.
pub fn bsc_mixture_joint(n: usize, a1: f64) -> Result<(JointPmf, AuxModel)> {
    check_vars(n)?;
    check_range("a1", a1, 0.0, 0.5)?;
    if n >= usize::BITS as usize || (1usize << n) > MAX_CELLS {
        return Err(CsbsError::TensorTooLarge(n));
    }
    let by_weight = weight_class_probs(n, a1)?;
    let probs = (0..1usize << n)
        .map(|cell| by_weight[cell.count_ones() as usize])
        .collect();
    let pmf = JointPmf::from_sizes(vec![2; n], probs)?;
    let row = |w: usize| {
        if w == 0 {
            vec![1.0 - a1, a1]
        } else {
            vec![a1, 1.0 - a1]
        }
    };
    let channel = vec![row(0), row(1)];
    let aux =
        AuxModel::new(vec![0.5, 0.5], vec![channel; n]).expect("crossover rows are stochastic");
    Ok((pmf, aux))
}

/// `H(X_1, ..., X_N)` of the mixture from the weight-class sum.
pub fn mixture_entropy(n: usize, a1: f64) -> Result<f64> {
    check_vars(n)?;
    check_range("a1", a1, 0.0, 0.5)?;
    let nats: f64 = weight_classes(n, a1)
        .iter()
        .filter(|c| c.ln_prob > f64::NEG_INFINITY)
        .map(|c| -(c.ln_count + c.ln_prob).exp() * c.ln_prob)
        .sum();
    Ok(nats / LN_2)
}

/// The same entropy summed over all `2^N` cells; a cross-check for small `N`.
pub fn mixture_entropy_by_cells(n: usize, a1: f64) -> Result<f64> {
    if n > MAX_DIRECT_VARS {
        return Err(CsbsError::TensorTooLarge(n));
    }
    let (pmf, _) = bsc_mixture_joint(n, a1)?;
    Ok(pmf.total_entropy())
}

/// Common information of the `N`-variable mixture, `H(X) - N h(a1)`,
/// clamped at zero against rounding.
pub fn c_closed_form(n: usize, a1: f64) -> Result<f64> {
    let h = mixture_entropy(n, a1)?;
    if a1 == 0.5 {
        // Mutually independent fair bits.
        return Ok(0.0);
    }
    Ok((h - n as f64 * binary_entropy(a1)?).max(0.0))
}

/// Residual uncertainty about the common bit and the bracket it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteBracket {
    /// `H(W | X_1, ..., X_N)`.
    pub gap: f64,
    /// `1 - gap`, a lower bound on the common information.
    pub lower: f64,
    pub upper: f64,
}

/// Exact `H(W | X_1, ..., X_N)` for the mixture, which falls to 0 as `N`
/// grows and pins the common information between `1 - gap` and 1.
pub fn asymptote_gap(n: usize, a1: f64) -> Result<AsymptoteBracket> {
    check_vars(n)?;
    if !(a1.is_finite() && (0.0..0.5).contains(&a1)) {
        return Err(CsbsError::OutOfRange {
            name: "a1",
            value: a1,
            lo: 0.0,
            hi: 0.5,
        });
    }
    let gap: f64 = weight_classes(n, a1)
        .iter()
        .filter(|c| c.ln_prob > f64::NEG_INFINITY)
        .map(|c| {
            let mass = (c.ln_count + c.ln_prob).exp();
            mass * binary_entropy(c.posterior.clamp(0.0, 1.0)).expect("clamped")
        })
        .sum();
    let gap = gap.clamp(0.0, 1.0);
    Ok(AsymptoteBracket {
        gap,
        lower: 1.0 - gap,
        upper: 1.0,
    })
}
