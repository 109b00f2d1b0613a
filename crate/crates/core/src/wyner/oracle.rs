//! Exhaustive reference for tiny problems.
//!
//! Enumerates a coarse grid over auxiliary models `(p(w), q_i(.|w))`, keeps
//! the best candidates of `I(X^;W) + mu D(P||Q)` and refines each by a
//! shrinking coordinate pattern search. Only points with `D <= 1e-6` count.
//! Shares no code with the descent routes.

use crate::dist::{entropy_of, kl_of, JointPmf};

use super::{Result, WynerError};

pub const MAX_PARAMETERS: usize = 8;
const MAX_GRID_POINTS: u128 = 20_000_000;
const PENALTY: f64 = 1e5;
const FEASIBLE_GAP: f64 = 1e-6;
const KEEP: usize = 24;
const FINEST_STEP: f64 = 1e-9;

/// Free coordinates of an auxiliary model: `|W| - 1` for the prior and
/// `|X_i| - 1` for each channel row. Each group's last entry is implied.
struct Parameterization {
    sizes: Vec<usize>,
    k: usize,
}

impl Parameterization {
    fn groups(&self) -> Vec<usize> {
        let mut g = vec![self.k];
        for &s in &self.sizes {
            g.extend(std::iter::repeat_n(s, self.k));
        }
        g
    }

    fn count(&self) -> usize {
        self.groups().iter().map(|g| g - 1).sum()
    }

    /// Expands free coordinates into full stochastic groups, or `None` if a
    /// group leaves the simplex.
    fn expand(&self, theta: &[f64]) -> Option<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        let mut it = theta.iter();
        for g in self.groups() {
            let mut row: Vec<f64> = it.by_ref().take(g - 1).copied().collect();
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return None;
            }
            let rest = 1.0 - row.iter().sum::<f64>();
            if rest < -1e-12 {
                return None;
            }
            row.push(rest.max(0.0));
            out.push(row);
        }
        Some(out)
    }
}

struct Evaluation {
    info: f64,
    gap: f64,
}

fn evaluate(target: &JointPmf, param: &Parameterization, theta: &[f64]) -> Option<Evaluation> {
    let groups = param.expand(theta)?;
    let k = param.k;
    let prior = &groups[0];
    let spec = target.spec();
    let mut q = vec![0.0; spec.cells()];
    let mut cond = 0.0;
    for w in 0..k {
        let rows: Vec<&Vec<f64>> = (0..param.sizes.len())
            .map(|i| &groups[1 + i * k + w])
            .collect();
        cond += prior[w] * rows.iter().map(|r| entropy_of(r)).sum::<f64>();
        for (c, qc) in q.iter_mut().enumerate() {
            let idx = spec.unravel(c);
            *qc += idx
                .iter()
                .zip(&rows)
                .fold(prior[w], |acc, (&x, r)| acc * r[x]);
        }
    }
    Some(Evaluation {
        info: entropy_of(&q) - cond,
        gap: kl_of(target.probs(), &q),
    })
}

fn score(e: &Evaluation) -> f64 {
    e.info + PENALTY * e.gap
}

/// Smallest `I(X^;W)` over auxiliary models with `|W| = w_size` that
/// reproduce `pmf` up to `D <= 1e-6`. `resolution` is the coarse grid step.
pub fn brute_force_oracle(pmf: &JointPmf, w_size: usize, resolution: f64) -> Result<f64> {
    if w_size == 0 {
        return Err(WynerError::InvalidConfig(
            "w_size must be at least 1".into(),
        ));
    }
    if !(0.01..=0.5).contains(&resolution) {
        return Err(WynerError::InvalidConfig(
            "grid resolution must lie in [0.01, 0.5]".into(),
        ));
    }
    let param = Parameterization {
        sizes: pmf.sizes().to_vec(),
        k: w_size,
    };
    let dims = param.count();
    if dims > MAX_PARAMETERS {
        return Err(WynerError::TooManyParameters {
            count: dims,
            max: MAX_PARAMETERS,
        });
    }
    if dims == 0 {
        // Single-symbol alphabets and |W| = 1: the only model is the point mass.
        return evaluate(pmf, &param, &[])
            .filter(|e| e.gap <= FEASIBLE_GAP)
            .map(|e| e.info.max(0.0))
            .ok_or_else(|| WynerError::InvalidModel("no feasible model".into()));
    }
    let per_axis = (1.0 / resolution).round() as usize + 1;
    let points = (per_axis as u128).pow(dims as u32);
    if points > MAX_GRID_POINTS {
        return Err(WynerError::GridTooLarge(points));
    }

    // Coarse grid, keeping the best few by penalized score.
    let mut best: Vec<(f64, Vec<f64>)> = Vec::with_capacity(KEEP + 1);
    let mut counter = vec![0usize; dims];
    let mut theta = vec![0.0; dims];
    for _ in 0..points {
        for (t, &c) in theta.iter_mut().zip(&counter) {
            *t = (c as f64 * resolution).min(1.0);
        }
        if let Some(e) = evaluate(pmf, &param, &theta) {
            let s = score(&e);
            if best.len() < KEEP || s < best[best.len() - 1].0 {
                let pos = best.partition_point(|(b, _)| *b <= s);
                best.insert(pos, (s, theta.clone()));
                best.truncate(KEEP);
            }
        }
        for c in counter.iter_mut() {
            *c += 1;
            if *c < per_axis {
                break;
            }
            *c = 0;
        }
    }

    // Pattern search from each survivor.
    let mut answer = f64::INFINITY;
    for (_, start) in best {
        let mut theta = start;
        let mut current = evaluate(pmf, &param, &theta).expect("grid point is valid");
        let mut step = resolution / 2.0;
        while step > FINEST_STEP {
            let mut improved = false;
            for d in 0..dims {
                for dir in [1.0, -1.0] {
                    let mut trial = theta.clone();
                    trial[d] += dir * step;
                    if let Some(e) = evaluate(pmf, &param, &trial) {
                        if score(&e) < score(&current) {
                            theta = trial;
                            current = e;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        if current.gap <= FEASIBLE_GAP {
            answer = answer.min(current.info);
        }
    }
    if answer.is_finite() {
        Ok(answer.max(0.0))
    } else {
        Err(WynerError::InvalidModel(
            "no grid candidate refined to a feasible model".into(),
        ))
    }
}
