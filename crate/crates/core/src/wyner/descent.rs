//! Exponentiated-gradient (entropic mirror descent) on a product of simplices.
//!
//! Parameters live in a flat vector split into equal-length blocks; each
//! block is a probability vector. Updates are multiplicative, so entries stay
//! positive and no projection is needed.

use serde::{Deserialize, Serialize};

/// Step-size control for the multiplicative updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    /// Step at the start of a stage, divided by `1 + penalty`.
    pub initial: f64,
    /// Factor applied after an accepted step.
    pub grow: f64,
    /// Factor applied after a rejected step.
    pub shrink: f64,
    /// Backtrack until the objective does not increase. Without it every
    /// step is taken and the objective may oscillate.
    pub line_search: bool,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            initial: 1.0,
            grow: 1.25,
            shrink: 0.5,
            line_search: true,
        }
    }
}

/// A smooth objective over a product of simplices, minimized.
pub(crate) trait Objective {
    fn block_len(&self) -> usize;

    /// Objective at `x` for penalty weight `weight`, writing the gradient.
    fn evaluate(&mut self, x: &[f64], weight: f64, grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct StageLimits {
    pub max_iters: usize,
    pub tol: f64,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub penalty: f64,
    pub iterations: usize,
    pub objective: f64,
    /// Iteration cap reached while the objective kept moving up and down.
    pub oscillating: bool,
}

const MIN_STEP: f64 = 1e-18;
const SETTLED_MOVE: f64 = 1e-3;

/// Runs one penalty stage from `x`, leaving the final iterate in `x`.
pub(crate) fn run_stage<O: Objective>(
    obj: &mut O,
    x: &mut Vec<f64>,
    weight: f64,
    rule: &StepRule,
    limits: StageLimits,
) -> StageTrace {
    let n = x.len();
    let block = obj.block_len();
    let mut grad = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut cand_grad = vec![0.0; n];
    let mut value = obj.evaluate(x, weight, &mut grad);
    let mut step = rule.initial / (1.0 + weight);
    let mut history = Vec::with_capacity(limits.window + 1);
    history.push(value);
    let mut iterations = 0;

    while iterations < limits.max_iters {
        iterations += 1;
        let accepted = loop {
            multiplicative_step(x, &grad, step, block, &mut cand);
            let cand_value = obj.evaluate(&cand, weight, &mut cand_grad);
            if !rule.line_search || cand_value <= value {
                break Some(cand_value);
            }
            step *= rule.shrink;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some(cand_value) = accepted else {
            // No descent direction left at machine precision.
            break;
        };
        let moved = x
            .iter()
            .zip(&cand)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(x, &mut cand);
        std::mem::swap(&mut grad, &mut cand_grad);
        value = cand_value;
        step *= rule.grow;

        history.push(value);
        if history.len() > limits.window {
            let recent = &history[history.len() - 1 - limits.window..];
            let old = recent[0];
            // A cycle can revisit equal values, so also require a monotone
            // window and a short last move.
            let monotone = recent.windows(2).all(|w| w[1] <= w[0]);
            if monotone && old - value < limits.tol && moved < SETTLED_MOVE {
                return StageTrace {
                    penalty: weight,
                    iterations,
                    objective: value,
                    oscillating: false,
                };
            }
            if history.len() > 4 * limits.window {
                history.drain(..history.len() - limits.window - 1);
            }
        }
    }

    let oscillating = iterations >= limits.max_iters && is_oscillating(&history, limits.window);
    StageTrace {
        penalty: weight,
        iterations,
        objective: value,
        oscillating,
    }
}

/// Flags a tail where the objective changes direction on at least a quarter
/// of the steps.
fn is_oscillating(history: &[f64], window: usize) -> bool {
    let tail = &history[history.len().saturating_sub(window + 1)..];
    if tail.len() < 3 {
        return false;
    }
    let flips = tail
        .windows(3)
        .filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0)
        .count();
    let flat = tail.windows(2).all(|w| w[0] == w[1]);
    flat || flips * 4 >= tail.len() - 2
}

fn multiplicative_step(x: &[f64], grad: &[f64], step: f64, block: usize, out: &mut [f64]) {
    for ((xs, gs), os) in x
        .chunks_exact(block)
        .zip(grad.chunks_exact(block))
        .zip(out.chunks_exact_mut(block))
    {
        let g_min = xs
            .iter()
            .zip(gs)
            .filter(|(&xi, _)| xi > 0.0)
            .map(|(_, &g)| g)
            .fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for ((&xi, &g), o) in xs.iter().zip(gs).zip(os.iter_mut()) {
            *o = if xi > 0.0 {
                xi * (-step * (g - g_min)).exp()
            } else {
                0.0
            };
            total += *o;
        }
        os.iter_mut().for_each(|o| *o /= total);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Linear objective on one simplex: the minimizer is the vertex with
    /// the smallest cost.
    struct Linear(Vec<f64>);

    impl Objective for Linear {
        fn block_len(&self) -> usize {
            self.0.len()
        }
        fn evaluate(&mut self, x: &[f64], _w: f64, grad: &mut [f64]) -> f64 {
            grad.copy_from_slice(&self.0);
            x.iter().zip(&self.0).map(|(a, b)| a * b).sum()
        }
    }

    /// Squared distance to a target inside the simplex.
    struct Quadratic(Vec<f64>);

    impl Objective for Quadratic {
        fn block_len(&self) -> usize {
            self.0.len()
        }
        fn evaluate(&mut self, x: &[f64], w: f64, grad: &mut [f64]) -> f64 {
            let mut v = 0.0;
            for ((g, &xi), &t) in grad.iter_mut().zip(x).zip(&self.0) {
                *g = 2.0 * w * (xi - t);
                v += w * (xi - t).powi(2);
            }
            v
        }
    }

    const LIMITS: StageLimits = StageLimits {
        max_iters: 20_000,
        tol: 1e-14,
        window: 50,
    };

    #[test]
    fn finds_vertex_of_linear_cost() {
        let mut obj = Linear(vec![0.3, 0.1, 0.7]);
        let mut x = vec![1.0 / 3.0; 3];
        let trace = run_stage(&mut obj, &mut x, 0.0, &StepRule::default(), LIMITS);
        assert!(x[1] > 0.999, "{x:?}");
        assert!((trace.objective - 0.1).abs() < 1e-3);
        assert!(!trace.oscillating);
    }

    #[test]
    fn blocks_stay_normalized() {
        let mut obj = Quadratic(vec![0.2, 0.8, 0.5, 0.5]);
        obj.0 = vec![0.2, 0.8, 0.5, 0.5];
        struct TwoBlocks(Quadratic);
        impl Objective for TwoBlocks {
            fn block_len(&self) -> usize {
                2
            }
            fn evaluate(&mut self, x: &[f64], w: f64, g: &mut [f64]) -> f64 {
                self.0.evaluate(x, w, g)
            }
        }
        let mut obj = TwoBlocks(obj);
        let mut x = vec![0.9, 0.1, 0.1, 0.9];
        run_stage(&mut obj, &mut x, 1.0, &StepRule::default(), LIMITS);
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[2] + x[3] - 1.0).abs() < 1e-12);
        assert!((x[0] - 0.2).abs() < 1e-5 && (x[2] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn fixed_large_steps_oscillate() {
        let mut obj = Quadratic(vec![0.5, 0.5]);
        let mut x = vec![0.9, 0.1];
        let rule = StepRule {
            initial: 400.0,
            grow: 1.0,
            shrink: 0.5,
            line_search: false,
        };
        let limits = StageLimits {
            max_iters: 500,
            ..LIMITS
        };
        let trace = run_stage(&mut obj, &mut x, 1.0, &rule, limits);
        assert_eq!(trace.iterations, 500);
        assert!(trace.oscillating);
    }
}
