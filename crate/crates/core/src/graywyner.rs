//! Rate tuples of the lossless Gray-Wyner network.
//!
//! An auxiliary `W` yields the corner `(I(X;W), H(X_1|W), ..., H(X_N|W))`;
//! every rate tuple dominating some corner is achievable. Without a
//! witness nothing is claimed, since deciding membership would need a
//! global search over `W`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{kl_of, DistError, JointPmf};
use crate::wyner::{AuxModel, TestChannel, Witness, WynerError};

/// Largest `D(P||Q)` at which an auxiliary model still describes `P`.
pub const COMPATIBILITY_TOL: f64 = 1e-6;

/// Slack below zero still accepted when comparing rates.
pub const DOMINANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrayWynerError {
    #[error("auxiliary model is {gap:.3e} bits from the source law")]
    IncompatibleAux { gap: f64 },
    #[error("witness alphabets {found:?} differ from the source {expected:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("rate {0} is negative or not finite")]
    InvalidRate(f64),
    #[error("rate tuple has {found} private rates for {expected} variables")]
    RateCount { expected: usize, found: usize },
    #[error(transparent)]
    Wyner(#[from] WynerError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

pub type Result<T> = std::result::Result<T, GrayWynerError>;

/// Common rate `r0` and private rates `r[i]`, in bits per source symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTuple {
    pub r0: f64,
    pub r: Vec<f64>,
}

impl RateTuple {
    pub fn new(r0: f64, r: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = std::iter::once(&r0)
            .chain(&r)
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            return Err(GrayWynerError::InvalidRate(bad));
        }
        Ok(Self { r0, r })
    }

    pub fn sum(&self) -> f64 {
        self.r0 + self.r.iter().sum::<f64>()
    }

    /// `self - other`, coordinatewise with the common rate first.
    pub fn slack_over(&self, other: &RateTuple) -> Vec<f64> {
        std::iter::once(self.r0 - other.r0)
            .chain(self.r.iter().zip(&other.r).map(|(a, b)| a - b))
            .collect()
    }
}

/// `|W|` bound under which the rate region loses nothing.
pub fn region_cardinality_cap(sizes: &[usize]) -> usize {
    sizes.iter().product::<usize>() + 2
}

/// `|W|` bound used for `Gamma`.
pub fn gamma_cardinality_cap(sizes: &[usize]) -> usize {
    sizes.iter().product()
}

/// Gap `D(P||Q)` between the source and the law an auxiliary model induces.
pub fn aux_gap(pmf: &JointPmf, aux: &AuxModel) -> Result<f64> {
    if aux.sizes() != pmf.sizes() {
        return Err(GrayWynerError::ShapeMismatch {
            expected: pmf.sizes().to_vec(),
            found: aux.sizes(),
        });
    }
    Ok(kl_of(pmf.probs(), aux.induced().probs()))
}

/// The corner point a witness attains. Test channels are evaluated on
/// `P(x) p(w|x)`; auxiliary models on their own law, after checking it is
/// within [`COMPATIBILITY_TOL`] of `pmf`.
pub fn corner_point(pmf: &JointPmf, witness: &Witness) -> Result<RateTuple> {
    let coupling = match witness {
        Witness::Aux(aux) => {
            let gap = aux_gap(pmf, aux)?;
            if gap > COMPATIBILITY_TOL {
                return Err(GrayWynerError::IncompatibleAux { gap });
            }
            aux.coupling()
        }
        Witness::Channel(t) => {
            if t.rows().len() != pmf.probs().len() {
                return Err(GrayWynerError::ShapeMismatch {
                    expected: vec![pmf.probs().len()],
                    found: vec![t.rows().len()],
                });
            }
            t.coupling(pmf)?
        }
    };
    RateTuple::new(
        coupling.mutual_information().max(0.0),
        coupling
            .conditional_entropies()
            .into_iter()
            .map(|h| h.max(0.0))
            .collect(),
    )
}

/// A target shown achievable by one witness's corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCertificate {
    pub point: RateTuple,
    pub corner: RateTuple,
    pub witness_index: usize,
    pub witness: Witness,
    /// `point - corner`, common rate first.
    pub slack: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Membership {
    Certified(RegionCertificate),
    /// No listed witness dominates the target; this is not a proof of
    /// infeasibility.
    Unknown {
        witnesses_checked: usize,
    },
}

impl Membership {
    pub fn is_certified(&self) -> bool {
        matches!(self, Membership::Certified(_))
    }
}

/// Certifies `target` with the first witness whose corner it dominates
/// within [`DOMINANCE_TOL`]. Witnesses that do not fit `pmf` are skipped.
pub fn certify_achievable(pmf: &JointPmf, target: &RateTuple, witnesses: &[Witness]) -> Membership {
    if target.r.len() == pmf.n_vars() {
        for (witness_index, witness) in witnesses.iter().enumerate() {
            let Ok(corner) = corner_point(pmf, witness) else {
                continue;
            };
            let slack = target.slack_over(&corner);
            if slack.iter().all(|&s| s >= -DOMINANCE_TOL) {
                return Membership::Certified(RegionCertificate {
                    point: target.clone(),
                    corner,
                    witness_index,
                    witness: witness.clone(),
                    slack,
                });
            }
        }
    }
    Membership::Unknown {
        witnesses_checked: witnesses.len(),
    }
}

/// Total rate in excess of the joint entropy.
pub fn sum_rate_slack(pmf: &JointPmf, point: &RateTuple) -> f64 {
    point.sum() - pmf.total_entropy()
}

/// Smallest common rate among witness corners whose sum-rate slack is at
/// most `eps`, with the index of the witness attaining it.
pub fn min_common_rate(
    pmf: &JointPmf,
    witnesses: &[Witness],
    eps: f64,
) -> Option<(usize, RateTuple)> {
    witnesses
        .iter()
        .enumerate()
        .filter_map(|(i, w)| corner_point(pmf, w).ok().map(|c| (i, c)))
        .filter(|(_, c)| sum_rate_slack(pmf, c) <= eps)
        .min_by(|(ia, a), (ib, b)| a.r0.total_cmp(&b.r0).then(ia.cmp(ib)))
}

/// `W` that ignores the sources.
pub fn constant_witness(pmf: &JointPmf) -> Witness {
    let rows = vec![vec![1.0]; pmf.probs().len()];
    Witness::Channel(TestChannel::new(rows).expect("unit rows"))
}

/// `W` equal to the whole source: one value per cell.
pub fn full_witness(pmf: &JointPmf) -> Witness {
    let cells = pmf.probs().len();
    let rows = (0..cells)
        .map(|c| {
            let mut row = vec![0.0; cells];
            row[c] = 1.0;
            row
        })
        .collect();
    Witness::Channel(TestChannel::new(rows).expect("unit rows"))
}
