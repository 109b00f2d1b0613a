//! Gács–Körner common randomness through the maximal common part, and the
//! `K <= I <= C` ordering report.
//!
//! The common part is read off the support graph: nodes are `(axis, symbol)`
//! pairs with positive marginal mass, and every support cell links all of its
//! coordinates together. Each connected component is one value of the common
//! function.

use serde::{Deserialize, Serialize};

use crate::dist::{entropy_of, increment, JointPmf};

/// Slack allowed on `K <= C`.
pub const K_TOL: f64 = 1e-6;

/// Labeling of every variable's symbols by common-part component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonPart {
    /// `labels[i][x]` is the component of symbol `x` of variable `i`, or
    /// `None` when that symbol has zero marginal probability.
    pub labels: Vec<Vec<Option<usize>>>,
    pub component_probs: Vec<f64>,
}

impl CommonPart {
    pub fn n_components(&self) -> usize {
        self.component_probs.len()
    }

    pub fn entropy(&self) -> f64 {
        // A connected support carries no common part, whatever the rounding
        // in its total mass.
        if self.n_components() <= 1 {
            return 0.0;
        }
        entropy_of(&self.component_probs)
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Maximal common part. Component ids are assigned in order of first
/// appearance when scanning support cells in row-major order.
pub fn common_part(pmf: &JointPmf) -> CommonPart {
    let sizes = pmf.sizes();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let n_nodes: usize = sizes.iter().sum();
    let mut sets = DisjointSets::new(n_nodes);

    let mut idx = vec![0usize; sizes.len()];
    for &p in pmf.probs() {
        if p > 0.0 {
            let first = offsets[0] + idx[0];
            for (axis, &x) in idx.iter().enumerate().skip(1) {
                sets.union(first, offsets[axis] + x);
            }
        }
        increment(&mut idx, sizes);
    }

    let mut component_of_root = vec![usize::MAX; n_nodes];
    let mut component_probs = Vec::new();
    idx.iter_mut().for_each(|x| *x = 0);
    for &p in pmf.probs() {
        if p > 0.0 {
            let root = sets.find(offsets[0] + idx[0]);
            if component_of_root[root] == usize::MAX {
                component_of_root[root] = component_probs.len();
                component_probs.push(0.0);
            }
            component_probs[component_of_root[root]] += p;
        }
        increment(&mut idx, sizes);
    }

    let marginals = pmf.marginals();
    let labels = marginals
        .iter()
        .enumerate()
        .map(|(axis, m)| {
            m.iter()
                .enumerate()
                .map(|(x, &mass)| {
                    (mass > 0.0).then(|| component_of_root[sets.find(offsets[axis] + x)])
                })
                .collect()
        })
        .collect();

    CommonPart {
        labels,
        component_probs,
    }
}

/// `K(X_1, ..., X_N)` as the entropy of the maximal common part.
pub fn gk_common_randomness(pmf: &JointPmf) -> f64 {
    common_part(pmf).entropy()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInformation {
    pub i: usize,
    pub j: usize,
    pub mutual_information: f64,
}

/// The three classical measures side by side, with violation flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureOrdering {
    pub k: f64,
    pub pairwise: Vec<PairInformation>,
    pub i_min_pair: f64,
    pub i_max_pair: f64,
    pub c_estimate: f64,
    /// `K > C + K_TOL`.
    pub k_exceeds_c: bool,
    /// `K > min_pair I + K_TOL`; cannot happen for exact inputs.
    pub k_exceeds_i: bool,
    /// For two variables `I > C + i_tol`; for more, the largest pairwise
    /// `I` against `C`, which holds through monotonicity of `C`.
    pub i_exceeds_c: bool,
}

impl MeasureOrdering {
    pub fn is_ordered(&self) -> bool {
        !(self.k_exceeds_c || self.k_exceeds_i || self.i_exceeds_c)
    }
}

/// Pairwise mutual informations in lexicographic pair order.
pub fn pairwise_information(pmf: &JointPmf) -> Vec<PairInformation> {
    let n = pmf.n_vars();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mi = pmf.mutual_information(&[i], &[j]).expect("distinct axes");
            out.push(PairInformation {
                i,
                j,
                mutual_information: mi,
            });
        }
    }
    out
}

/// Compares `K`, the pairwise informations and an externally computed `C`.
/// `i_tol` is the slack granted to `I <= C`, usually the optimizer's
/// cross-check tolerance.
pub fn measure_ordering(pmf: &JointPmf, c_estimate: f64, i_tol: f64) -> MeasureOrdering {
    let k = gk_common_randomness(pmf);
    let pairwise = pairwise_information(pmf);
    let (i_min_pair, i_max_pair) = if pairwise.is_empty() {
        // A single variable shares everything with itself.
        let h = pmf.total_entropy();
        (h, h)
    } else {
        pairwise
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.mutual_information), hi.max(p.mutual_information))
            })
    };
    MeasureOrdering {
        k,
        i_min_pair,
        i_max_pair,
        c_estimate,
        k_exceeds_c: k > c_estimate + K_TOL,
        k_exceeds_i: k > i_min_pair + K_TOL,
        i_exceeds_c: i_max_pair > c_estimate + i_tol,
        pairwise,
    }
}
