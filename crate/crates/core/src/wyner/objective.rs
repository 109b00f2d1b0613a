//! The two penalized objectives, in bits.
//!
//! * Test-channel form: parameters `p(w|x)` on the support of `P`, one
//!   simplex per support cell. The marginal constraint holds exactly; the
//!   objective is `I(X;W) + lambda * T(X|W)`.
//! * Joint form: parameters `q(x, w)` on one simplex over all cells times
//!   `W`. Conditional entropy is maximized with hinge penalties on
//!   `D(P||Q) - delta1` and `T - delta2`.

use std::f64::consts::LN_2;

use super::descent::Objective;
use crate::dist::{neg_xlogx, JointPmf};

const FLOOR: f64 = 1e-300;

#[inline]
fn log2_ratio(num: f64, den: f64) -> f64 {
    (num.max(FLOOR) / den.max(FLOOR)).log2()
}

/// Symbol bookkeeping shared by both objectives.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub n_vars: usize,
    pub n_symbols: usize,
    /// Offset of each variable's block of symbols.
    pub offsets: Vec<usize>,
}

impl Layout {
    pub fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in sizes {
            offsets.push(acc);
            acc += s;
        }
        Self {
            n_vars: sizes.len(),
            n_symbols: acc,
            offsets,
        }
    }

    /// Global symbol ids (`offset + x_i`) of every listed cell.
    pub fn coords(&self, pmf: &JointPmf, cells: &[usize]) -> Vec<usize> {
        let spec = pmf.spec();
        let mut out = Vec::with_capacity(cells.len() * self.n_vars);
        for &c in cells {
            out.extend(
                spec.unravel(c)
                    .iter()
                    .zip(&self.offsets)
                    .map(|(&x, &o)| o + x),
            );
        }
        out
    }
}

/// Conditional entropies of a joint `r(cell, w)` given `W`.
pub(crate) struct Breakdown {
    /// `H(X|W)`.
    pub joint: f64,
    /// `sum_i H(X_i|W)`.
    pub singles: f64,
}

/// Shared accumulation: fills `pw`, `m`, `lm` and returns the breakdown.
fn accumulate(
    r: &[f64],
    coords: &[usize],
    n_vars: usize,
    k: usize,
    pw: &mut [f64],
    m: &mut [f64],
    lm: &mut [f64],
) -> Breakdown {
    pw.iter_mut().for_each(|v| *v = 0.0);
    m.iter_mut().for_each(|v| *v = 0.0);
    for (row, cs) in r.chunks_exact(k).zip(coords.chunks_exact(n_vars)) {
        for (acc, &v) in pw.iter_mut().zip(row) {
            *acc += v;
        }
        for &sym in cs {
            for (acc, &v) in m[sym * k..(sym + 1) * k].iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    let mut joint = 0.0;
    for row in r.chunks_exact(k) {
        for (&v, &p) in row.iter().zip(pw.iter()) {
            if v > 0.0 {
                joint -= v * (v / p).log2();
            }
        }
    }
    let mut singles = 0.0;
    for (mrow, lrow) in m.chunks_exact(k).zip(lm.chunks_exact_mut(k)) {
        for ((&v, l), &p) in mrow.iter().zip(lrow.iter_mut()).zip(pw.iter()) {
            *l = log2_ratio(v, p);
            if v > 0.0 {
                singles -= v * *l;
            }
        }
    }
    Breakdown { joint, singles }
}

/// `I(X;W) + lambda * T(X|W)` over `p(w|x)` on the support of `P`.
pub(crate) struct TestChannelObjective {
    probs: Vec<f64>,
    coords: Vec<usize>,
    n_vars: usize,
    k: usize,
    h_source: f64,
    r: Vec<f64>,
    pw: Vec<f64>,
    m: Vec<f64>,
    lm: Vec<f64>,
}

impl TestChannelObjective {
    /// `support` lists the cells of `pmf` with positive mass.
    pub fn new(pmf: &JointPmf, support: &[usize], k: usize) -> Self {
        let layout = Layout::new(pmf.sizes());
        let probs: Vec<f64> = support.iter().map(|&c| pmf.probs()[c]).collect();
        Self {
            coords: layout.coords(pmf, support),
            n_vars: layout.n_vars,
            k,
            h_source: probs.iter().map(|&p| neg_xlogx(p)).sum(),
            r: vec![0.0; probs.len() * k],
            pw: vec![0.0; k],
            m: vec![0.0; layout.n_symbols * k],
            lm: vec![0.0; layout.n_symbols * k],
            probs,
        }
    }

    fn fill(&mut self, x: &[f64]) -> Breakdown {
        for ((rrow, xrow), &p) in self
            .r
            .chunks_exact_mut(self.k)
            .zip(x.chunks_exact(self.k))
            .zip(&self.probs)
        {
            for (r, &v) in rrow.iter_mut().zip(xrow) {
                *r = p * v;
            }
        }
        accumulate(
            &self.r,
            &self.coords,
            self.n_vars,
            self.k,
            &mut self.pw,
            &mut self.m,
            &mut self.lm,
        )
    }

    /// `(I(X;W), T(X|W))` at `x`.
    pub fn terms(&mut self, x: &[f64]) -> (f64, f64) {
        let b = self.fill(x);
        (self.h_source - b.joint, b.singles - b.joint)
    }
}

impl Objective for TestChannelObjective {
    fn block_len(&self) -> usize {
        self.k
    }

    fn evaluate(&mut self, x: &[f64], lambda: f64, grad: &mut [f64]) -> f64 {
        let b = self.fill(x);
        let k = self.k;
        for ((g, rrow), cs) in grad
            .chunks_exact_mut(k)
            .zip(self.r.chunks_exact(k))
            .zip(self.coords.chunks_exact(self.n_vars))
        {
            for (w, (gw, &r)) in g.iter_mut().zip(rrow).enumerate() {
                let singles: f64 = cs.iter().map(|&sym| self.lm[sym * k + w]).sum();
                *gw = (1.0 + lambda) * log2_ratio(r, self.pw[w]) - lambda * singles;
            }
        }
        let info = self.h_source - b.joint;
        let t = b.singles - b.joint;
        info + lambda * t
    }
}

/// Negated `H(X^|W) - mu * max(0, D - delta1) - mu * max(0, T - delta2)`
/// over the joint `q(x, w)`.
pub(crate) struct GammaObjective {
    target: Vec<f64>,
    coords: Vec<usize>,
    n_vars: usize,
    k: usize,
    delta1: f64,
    delta2: f64,
    pw: Vec<f64>,
    q: Vec<f64>,
    m: Vec<f64>,
    lm: Vec<f64>,
}

/// Terms of the joint form at a point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GammaTerms {
    pub cond_entropy: f64,
    pub divergence: f64,
    pub multi_info: f64,
}

impl GammaObjective {
    /// `cells` lists the cells `X^` may occupy; mass elsewhere is fixed at 0.
    pub fn new(pmf: &JointPmf, cells: &[usize], k: usize, delta1: f64, delta2: f64) -> Self {
        let layout = Layout::new(pmf.sizes());
        Self {
            target: cells.iter().map(|&c| pmf.probs()[c]).collect(),
            coords: layout.coords(pmf, cells),
            n_vars: layout.n_vars,
            k,
            delta1,
            delta2,
            pw: vec![0.0; k],
            q: vec![0.0; cells.len()],
            m: vec![0.0; layout.n_symbols * k],
            lm: vec![0.0; layout.n_symbols * k],
        }
    }

    fn fill(&mut self, x: &[f64]) -> GammaTerms {
        let b = accumulate(
            x,
            &self.coords,
            self.n_vars,
            self.k,
            &mut self.pw,
            &mut self.m,
            &mut self.lm,
        );
        let mut divergence = 0.0;
        for ((q, row), &p) in self
            .q
            .iter_mut()
            .zip(x.chunks_exact(self.k))
            .zip(&self.target)
        {
            *q = row.iter().sum();
            if p > 0.0 {
                divergence += p * log2_ratio(p, *q);
            }
        }
        GammaTerms {
            cond_entropy: b.joint,
            divergence: divergence.max(0.0),
            multi_info: b.singles - b.joint,
        }
    }

    pub fn terms(&mut self, x: &[f64]) -> GammaTerms {
        self.fill(x)
    }
}

impl Objective for GammaObjective {
    fn block_len(&self) -> usize {
        self.q.len() * self.k
    }

    fn evaluate(&mut self, x: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        let t = self.fill(x);
        let d_active = t.divergence > self.delta1;
        let t_active = t.multi_info > self.delta2;
        let k = self.k;
        for (((g, row), cs), (&p, &q)) in grad
            .chunks_exact_mut(k)
            .zip(x.chunks_exact(k))
            .zip(self.coords.chunks_exact(self.n_vars))
            .zip(self.target.iter().zip(&self.q))
        {
            let d_grad = if d_active && p > 0.0 {
                -mu * p / (q.max(FLOOR) * LN_2)
            } else {
                0.0
            };
            for (w, (gw, &r)) in g.iter_mut().zip(row).enumerate() {
                let own = log2_ratio(r, self.pw[w]);
                let mut v = own + d_grad;
                if t_active {
                    let singles: f64 = cs.iter().map(|&sym| self.lm[sym * k + w]).sum();
                    v += mu * (own - singles);
                }
                *gw = v;
            }
        }
        -t.cond_entropy
            + mu * (t.divergence - self.delta1).max(0.0)
            + mu * (t.multi_info - self.delta2).max(0.0)
    }
}
