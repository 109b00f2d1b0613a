//! Wyner common information `C(X_1, ..., X_N)` and the functional
//! `Gamma(delta1, delta2)`.
//!
//! Two parameterizations are optimized independently and compared:
//!
//! * [`wyner_upper_via_test_channel`] couples `W` to the exact source law
//!   through `p(w|x)` and penalizes conditional dependence `T(X|W)`;
//! * [`gamma`] searches joint laws of `(X^, W)` and penalizes both the
//!   distance `D(P||Q)` and `T`; then `C = H(X) - Gamma(0, 0)`.
//!
//! Both run a penalty continuation with warm starts from many seeded
//! restarts. [`wyner_ci`] runs both and refuses to answer when they disagree.

pub mod descent;
mod objective;
pub mod oracle;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{kl_of, AlphabetSpec, Coupling, DistError, JointPmf};
use crate::seed::stream_rng;
use descent::{run_stage, Objective, StageLimits};
pub use descent::{StageTrace, StepRule};
use objective::{GammaObjective, TestChannelObjective};

/// Default agreement required between the two parameterizations, in bits.
pub const DEFAULT_CROSS_TOL: f64 = 5e-3;

/// Row-sum tolerance for stochastic vectors and matrices.
const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WynerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("no restart converged: all {restarts} hit the iteration cap while oscillating")]
    NonConvergence { restarts: usize },
    #[error("estimates disagree: test channel {upper:.6} bits vs H - Gamma(0,0) {gamma:.6} bits")]
    InconsistentEstimates { upper: f64, gamma: f64 },
    #[error("brute force needs {count} parameters, at most {max} allowed")]
    TooManyParameters { count: usize, max: usize },
    #[error("grid of {0} points is too large")]
    GridTooLarge(u128),
    #[error(transparent)]
    Dist(#[from] DistError),
}

pub type Result<T> = std::result::Result<T, WynerError>;

fn check_stochastic(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(WynerError::InvalidModel(format!("{what} is empty")));
    }
    if v.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(WynerError::InvalidModel(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(WynerError::InvalidModel(format!("{what} sums to {s}")));
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawAux {
    w_prior: Vec<f64>,
    channels: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<RawAux> for AuxModel {
    type Error = WynerError;
    fn try_from(raw: RawAux) -> Result<Self> {
        Self::new(raw.w_prior, raw.channels)
    }
}

/// Prior `p(w)` and memoryless channels `q_i(x_i | w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAux")]
pub struct AuxModel {
    w_prior: Vec<f64>,
    /// `channels[i][w]` is the row `q_i(. | w)`.
    channels: Vec<Vec<Vec<f64>>>,
}

impl AuxModel {
    pub fn new(w_prior: Vec<f64>, channels: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        check_stochastic(&w_prior, "w_prior")?;
        if channels.is_empty() {
            return Err(WynerError::InvalidModel("no channels".into()));
        }
        for (i, ch) in channels.iter().enumerate() {
            if ch.len() != w_prior.len() {
                return Err(WynerError::InvalidModel(format!(
                    "channel {i} has {} rows, expected {}",
                    ch.len(),
                    w_prior.len()
                )));
            }
            let width = ch[0].len();
            for (w, row) in ch.iter().enumerate() {
                if row.len() != width {
                    return Err(WynerError::InvalidModel(format!("channel {i} is ragged")));
                }
                check_stochastic(row, &format!("channel {i} row {w}"))?;
            }
        }
        let sizes: Vec<usize> = channels.iter().map(|c| c[0].len()).collect();
        AlphabetSpec::new(sizes)?;
        Ok(Self { w_prior, channels })
    }

    pub fn w_prior(&self) -> &[f64] {
        &self.w_prior
    }

    pub fn channels(&self) -> &[Vec<Vec<f64>>] {
        &self.channels
    }

    pub fn w_size(&self) -> usize {
        self.w_prior.len()
    }

    pub fn n_vars(&self) -> usize {
        self.channels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.channels.iter().map(|c| c[0].len()).collect()
    }

    /// Joint law of `(X^_1, ..., X^_N, W)` generated by the model.
    pub fn coupling(&self) -> Coupling {
        let spec = AlphabetSpec::new(self.sizes()).expect("checked at construction");
        let k = self.w_size();
        let mut probs = Vec::with_capacity(spec.cells() * k);
        for c in 0..spec.cells() {
            let idx = spec.unravel(c);
            for w in 0..k {
                let p = idx
                    .iter()
                    .zip(&self.channels)
                    .fold(self.w_prior[w], |acc, (&x, ch)| acc * ch[w][x]);
                probs.push(p);
            }
        }
        let mut sizes = self.sizes();
        sizes.push(k);
        // Products of normalized factors: renormalize away rounding only.
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        Coupling::new(JointPmf::from_sizes(sizes, probs).expect("normalized")).expect("has W axis")
    }

    /// Induced source law `Q(x) = sum_w p(w) prod_i q_i(x_i|w)`.
    pub fn induced(&self) -> JointPmf {
        self.coupling().source()
    }

    /// `p(w)` and the single-variable conditionals of an arbitrary coupling.
    /// Values of `W` with no mass get uniform rows.
    pub fn from_coupling(c: &Coupling) -> Self {
        let pmf = c.pmf();
        let n = c.n_sources();
        let w_axis = c.w_axis();
        let w_prior = c.w_marginal();
        let channels = (0..n)
            .map(|i| {
                let joint = pmf.marginalize(&[w_axis, i]).expect("valid axes");
                let size = pmf.sizes()[i];
                joint
                    .probs()
                    .chunks_exact(size)
                    .zip(&w_prior)
                    .map(|(row, &pw)| {
                        if pw > 0.0 {
                            let s: f64 = row.iter().sum();
                            row.iter().map(|v| v / s).collect()
                        } else {
                            vec![1.0 / size as f64; size]
                        }
                    })
                    .collect()
            })
            .collect();
        Self { w_prior, channels }
    }

    /// Inserts constant channels for the axes removed by [`JointPmf::squeeze`].
    fn unsqueeze(self, kept: &[usize], original_vars: usize) -> Self {
        if kept.len() == original_vars {
            return self;
        }
        let k = self.w_size();
        let mut channels = vec![vec![vec![1.0]; k]; original_vars];
        for (ch, &axis) in self.channels.into_iter().zip(kept) {
            channels[axis] = ch;
        }
        Self {
            w_prior: self.w_prior,
            channels,
        }
    }
}

#[derive(Deserialize)]
struct RawChannel {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<RawChannel> for TestChannel {
    type Error = WynerError;
    fn try_from(raw: RawChannel) -> Result<Self> {
        Self::new(raw.rows)
    }
}

/// Stochastic map from source cells to `W`, one row per cell of `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannel")]
pub struct TestChannel {
    rows: Vec<Vec<f64>>,
}

impl TestChannel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        for (c, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(WynerError::InvalidModel("test channel is ragged".into()));
            }
            check_stochastic(row, &format!("test channel row {c}"))?;
        }
        if rows.is_empty() {
            return Err(WynerError::InvalidModel("test channel has no rows".into()));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn w_size(&self) -> usize {
        self.rows[0].len()
    }

    pub fn coupling(&self, pmf: &JointPmf) -> Result<Coupling> {
        Ok(Coupling::from_channel(pmf, &self.rows)?)
    }

    /// Posterior `p(w|x)` of an auxiliary model. Cells the model cannot
    /// produce get the prior as their row.
    pub fn from_aux(aux: &AuxModel, pmf: &JointPmf) -> Result<Self> {
        if aux.sizes() != pmf.sizes() {
            return Err(WynerError::InvalidModel(
                "auxiliary model alphabets differ from the source".into(),
            ));
        }
        let coupling = aux.coupling();
        let k = aux.w_size();
        let rows = coupling
            .pmf()
            .probs()
            .chunks_exact(k)
            .map(|row| {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter().map(|v| v / s).collect()
                } else {
                    aux.w_prior().to_vec()
                }
            })
            .collect();
        Ok(Self { rows })
    }
}

/// Whichever parameterization produced a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Aux(AuxModel),
    Channel(TestChannel),
}

impl Witness {
    /// Joint of the sources and `W`: the model's own law for an auxiliary
    /// model, `P(x) p(w|x)` for a test channel.
    pub fn coupling(&self, pmf: &JointPmf) -> Result<Coupling> {
        match self {
            Witness::Aux(a) => Ok(a.coupling()),
            Witness::Channel(t) => t.coupling(pmf),
        }
    }

    pub fn w_size(&self) -> usize {
        match self {
            Witness::Aux(a) => a.w_size(),
            Witness::Channel(t) => t.w_size(),
        }
    }
}

/// What a result certifies, given its residuals are within `certify_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// Feasible test channel: the value bounds `C` from above.
    Upper,
    /// Feasible joint law: the value bounds `Gamma` from below.
    Lower,
    /// Residuals too large for either claim.
    Uncertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    /// Alphabet size of `W`; `None` picks the product of the source alphabets.
    pub w_size: Option<usize>,
    pub restarts: usize,
    /// Iteration cap per penalty stage.
    pub max_iters: usize,
    pub penalty_schedule: Vec<f64>,
    pub step_rule: StepRule,
    pub seed: u64,
    /// A stage stops once the objective moves less than this over `window`
    /// iterations.
    pub tol: f64,
    pub window: usize,
    /// Weight of a fresh random point mixed into the warm start of every
    /// stage after the first.
    pub jitter: f64,
    /// Residual bound for certifying a result.
    pub certify_tol: f64,
    pub cross_tol: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            w_size: None,
            restarts: 16,
            max_iters: 20_000,
            penalty_schedule: vec![16.0, 64.0, 256.0, 1024.0, 4096.0],
            step_rule: StepRule::default(),
            seed: 0,
            tol: 1e-9,
            window: 50,
            jitter: 0.05,
            certify_tol: 1e-6,
            cross_tol: DEFAULT_CROSS_TOL,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(WynerError::InvalidConfig(m.into()));
        if self.w_size == Some(0) {
            return bad("w_size must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if self.max_iters == 0 || self.window == 0 {
            return bad("max_iters and window must be positive");
        }
        if self.penalty_schedule.is_empty()
            || self
                .penalty_schedule
                .iter()
                .any(|&l| !(l.is_finite() && l > 0.0))
            || self.penalty_schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("penalty schedule must be positive and strictly increasing");
        }
        let s = &self.step_rule;
        if !(s.initial > 0.0 && s.grow >= 1.0 && s.shrink > 0.0 && s.shrink < 1.0) {
            return bad("step rule needs initial > 0, grow >= 1, 0 < shrink < 1");
        }
        if !(self.tol > 0.0 && self.certify_tol >= 0.0 && self.cross_tol >= 0.0) {
            return bad("tolerances must be nonnegative and tol positive");
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad("jitter must lie in [0, 1)");
        }
        Ok(())
    }

    fn limits(&self) -> StageLimits {
        StageLimits {
            max_iters: self.max_iters,
            tol: self.tol,
            window: self.window,
        }
    }

    fn resolve_w_size(&self, pmf: &JointPmf) -> usize {
        self.w_size.unwrap_or_else(|| pmf.spec().cells())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub stages: Vec<StageTrace>,
}

impl RestartTrace {
    pub fn final_objective(&self) -> f64 {
        self.stages.last().map_or(f64::INFINITY, |s| s.objective)
    }

    fn oscillating(&self) -> bool {
        self.stages.last().is_some_and(|s| s.oscillating)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    /// `I(X;W)` for the test-channel form, `H(X^|W)` for the joint form.
    pub value: f64,
    pub model: Witness,
    /// Optimizer state as a joint law over the original variables and `W`.
    pub coupling: Coupling,
    /// Residual `T(X|W)`.
    pub ci_violation: f64,
    /// Residual `D(P||Q)`.
    pub marginal_gap: f64,
    pub trace: Vec<RestartTrace>,
    pub best_restart: usize,
    pub certificate: Certificate,
}

/// Picks the lowest final objective; ties go to the lowest restart index.
fn select_best<T>(runs: &[(T, RestartTrace)]) -> Result<usize> {
    runs.iter()
        .enumerate()
        .filter(|(_, (_, t))| !t.oscillating())
        .min_by(|(ia, (_, a)), (ib, (_, b))| {
            a.final_objective()
                .total_cmp(&b.final_objective())
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .ok_or(WynerError::NonConvergence {
            restarts: runs.len(),
        })
}

fn dirichlet_row<R: Rng>(rng: &mut R, out: &mut [f64]) {
    let mut s = 0.0;
    for v in out.iter_mut() {
        *v = -(1.0 - rng.gen::<f64>()).ln();
        s += *v;
    }
    out.iter_mut().for_each(|v| *v /= s);
}

fn mix_in<R: Rng>(rng: &mut R, x: &mut [f64], block: usize, weight: f64) {
    let mut fresh = vec![0.0; block];
    for chunk in x.chunks_exact_mut(block) {
        dirichlet_row(rng, &mut fresh);
        for (v, &f) in chunk.iter_mut().zip(&fresh) {
            *v = (1.0 - weight) * *v + weight * f;
        }
    }
}

/// Runs the penalty schedule from `x`. A supplied initial point skips the
/// continuation and resumes at the final penalty.
fn continuation<O: Objective, R: Rng>(
    obj: &mut O,
    x: &mut Vec<f64>,
    cfg: &OptConfig,
    rng: &mut R,
    warm: bool,
) -> Vec<StageTrace> {
    let schedule: &[f64] = if warm {
        &cfg.penalty_schedule[cfg.penalty_schedule.len() - 1..]
    } else {
        &cfg.penalty_schedule
    };
    let block = obj.block_len();
    schedule
        .iter()
        .enumerate()
        .map(|(stage, &weight)| {
            if stage > 0 && cfg.jitter > 0.0 {
                mix_in(rng, x, block, cfg.jitter);
            }
            run_stage(obj, x, weight, &cfg.step_rule, cfg.limits())
        })
        .collect()
}

/// Squeezes constant axes and resolves `W`'s size.
fn prepare(pmf: &JointPmf, cfg: &OptConfig) -> Result<(JointPmf, Vec<usize>, usize)> {
    cfg.validate()?;
    let (reduced, kept) = pmf.squeeze();
    let k = cfg.resolve_w_size(&reduced);
    Ok((reduced, kept, k))
}

fn restore_coupling(c: &Coupling, original: &JointPmf) -> Coupling {
    if c.n_sources() == original.n_vars() {
        return c.clone();
    }
    // Size-one axes do not change row-major offsets.
    let mut sizes = original.sizes().to_vec();
    sizes.push(c.w_size());
    Coupling::new(JointPmf::from_sizes(sizes, c.pmf().probs().to_vec()).expect("same cell count"))
        .expect("has W axis")
}

/// Minimizes `I(X;W) + lambda T(X|W)` over test channels, continuing in
/// `lambda` along the configured schedule.
pub fn wyner_upper_via_test_channel(pmf: &JointPmf, cfg: &OptConfig) -> Result<OptResult> {
    upper_impl(pmf, cfg, None)
}

/// As [`wyner_upper_via_test_channel`], with restart 0 resuming from `init`
/// at the final penalty.
pub fn wyner_upper_with_init(pmf: &JointPmf, cfg: &OptConfig, init: &Witness) -> Result<OptResult> {
    upper_impl(pmf, cfg, Some(init))
}

fn upper_impl(pmf: &JointPmf, cfg: &OptConfig, init: Option<&Witness>) -> Result<OptResult> {
    let (reduced, _, k) = prepare(pmf, cfg)?;
    let support: Vec<usize> = (0..reduced.probs().len())
        .filter(|&c| reduced.probs()[c] > 0.0)
        .collect();

    let init_x = match init {
        None => None,
        Some(w) => {
            if w.w_size() != k {
                return Err(WynerError::InvalidConfig(format!(
                    "initial model has |W| = {}, expected {k}",
                    w.w_size()
                )));
            }
            let channel = match w {
                Witness::Channel(t) => t.clone(),
                Witness::Aux(a) => TestChannel::from_aux(a, pmf)?,
            };
            if channel.rows.len() != pmf.probs().len() {
                return Err(WynerError::InvalidModel("test channel row count".into()));
            }
            Some(
                support
                    .iter()
                    .flat_map(|&c| channel.rows[c].iter().copied())
                    .collect::<Vec<f64>>(),
            )
        }
    };

    let runs: Vec<(Vec<f64>, RestartTrace)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = stream_rng(cfg.seed, restart as u64);
            let mut obj = TestChannelObjective::new(&reduced, &support, k);
            let (mut x, warm) = match (&init_x, restart) {
                (Some(x0), 0) => (x0.clone(), true),
                _ => {
                    let mut x = vec![0.0; support.len() * k];
                    x.chunks_exact_mut(k)
                        .for_each(|row| dirichlet_row(&mut rng, row));
                    (x, false)
                }
            };
            let stages = continuation(&mut obj, &mut x, cfg, &mut rng, warm);
            (x, RestartTrace { restart, stages })
        })
        .collect();

    let best = select_best(&runs)?;
    let x = &runs[best].0;
    let mut obj = TestChannelObjective::new(&reduced, &support, k);
    let (info, t) = obj.terms(x);

    // Rows for zero-mass cells are irrelevant; give them W's marginal.
    let mut pw = vec![0.0; k];
    for (row, &c) in x.chunks_exact(k).zip(&support) {
        for (acc, &v) in pw.iter_mut().zip(row) {
            *acc += reduced.probs()[c] * v;
        }
    }
    let mut rows = vec![pw; reduced.probs().len()];
    for (row, &c) in x.chunks_exact(k).zip(&support) {
        rows[c] = row.to_vec();
    }
    let channel = TestChannel::new(rows)?;
    let coupling = channel.coupling(pmf)?;
    let ci_violation = t.max(0.0);
    let certificate = if ci_violation <= cfg.certify_tol {
        Certificate::Upper
    } else {
        Certificate::Uncertified
    };
    Ok(OptResult {
        value: info.max(0.0),
        model: Witness::Channel(channel),
        coupling,
        ci_violation,
        marginal_gap: 0.0,
        trace: runs.into_iter().map(|(_, t)| t).collect(),
        best_restart: best,
        certificate,
    })
}

/// `Gamma(delta1, delta2)`: maximizes `H(X^|W)` over joint laws of
/// `(X^, W)` with `D(P||Q) <= delta1` and `T(X^|W) <= delta2` enforced by
/// hinge penalties along the configured schedule.
pub fn gamma(pmf: &JointPmf, delta1: f64, delta2: f64, cfg: &OptConfig) -> Result<OptResult> {
    gamma_impl(pmf, delta1, delta2, cfg, None)
}

/// As [`gamma`], with restart 0 resuming from `init` at the final penalty.
pub fn gamma_with_init(
    pmf: &JointPmf,
    delta1: f64,
    delta2: f64,
    cfg: &OptConfig,
    init: &Witness,
) -> Result<OptResult> {
    gamma_impl(pmf, delta1, delta2, cfg, Some(init))
}

fn gamma_impl(
    pmf: &JointPmf,
    delta1: f64,
    delta2: f64,
    cfg: &OptConfig,
    init: Option<&Witness>,
) -> Result<OptResult> {
    if !(delta1 >= 0.0 && delta2 >= 0.0 && delta1.is_finite() && delta2.is_finite()) {
        return Err(WynerError::InvalidConfig(
            "delta1 and delta2 must be finite and nonnegative".into(),
        ));
    }
    let (reduced, kept, k) = prepare(pmf, cfg)?;
    let n_cells = reduced.probs().len();
    // With no divergence budget Q must equal P, so X^ stays on P's support.
    let cells: Vec<usize> = (0..n_cells)
        .filter(|&c| delta1 > 0.0 || reduced.probs()[c] > 0.0)
        .collect();

    let init_x = match init {
        None => None,
        Some(w) => {
            if w.w_size() != k {
                return Err(WynerError::InvalidConfig(format!(
                    "initial model has |W| = {}, expected {k}",
                    w.w_size()
                )));
            }
            let c = w.coupling(pmf)?;
            if c.pmf().probs().len() != n_cells * k {
                return Err(WynerError::InvalidModel("initial model shape".into()));
            }
            let full = c.pmf().probs();
            let mut x: Vec<f64> = cells
                .iter()
                .flat_map(|&cell| full[cell * k..(cell + 1) * k].iter().copied())
                .collect();
            let s: f64 = x.iter().sum();
            if s <= 0.0 {
                return Err(WynerError::InvalidModel(
                    "initial model misses the support".into(),
                ));
            }
            x.iter_mut().for_each(|v| *v /= s);
            Some(x)
        }
    };

    let runs: Vec<(Vec<f64>, RestartTrace)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = stream_rng(cfg.seed, restart as u64);
            let mut obj = GammaObjective::new(&reduced, &cells, k, delta1, delta2);
            let (mut x, warm) = match (&init_x, restart) {
                (Some(x0), 0) => (x0.clone(), true),
                _ => (random_joint(&reduced, &cells, k, &mut rng), false),
            };
            let stages = continuation(&mut obj, &mut x, cfg, &mut rng, warm);
            (x, RestartTrace { restart, stages })
        })
        .collect();

    let best = select_best(&runs)?;
    let x = &runs[best].0;
    let mut obj = GammaObjective::new(&reduced, &cells, k, delta1, delta2);
    let terms = obj.terms(x);

    let mut sizes = reduced.sizes().to_vec();
    sizes.push(k);
    let s: f64 = x.iter().sum();
    let mut probs = vec![0.0; n_cells * k];
    for (row, &cell) in x.chunks_exact(k).zip(&cells) {
        for (dst, &v) in probs[cell * k..(cell + 1) * k].iter_mut().zip(row) {
            *dst = v / s;
        }
    }
    let reduced_coupling = Coupling::new(JointPmf::from_sizes(sizes, probs)?)?;
    let coupling = restore_coupling(&reduced_coupling, pmf);
    let model = AuxModel::from_coupling(&reduced_coupling).unsqueeze(&kept, pmf.n_vars());
    let q = coupling.source();
    let marginal_gap = kl_of(pmf.probs(), q.probs());
    let ci_violation = terms.multi_info.max(0.0);
    let feasible =
        marginal_gap <= delta1 + cfg.certify_tol && ci_violation <= delta2 + cfg.certify_tol;
    Ok(OptResult {
        value: terms.cond_entropy,
        model: Witness::Aux(model),
        coupling,
        ci_violation,
        marginal_gap,
        trace: runs.into_iter().map(|(_, t)| t).collect(),
        best_restart: best,
        certificate: if feasible {
            Certificate::Lower
        } else {
            Certificate::Uncertified
        },
    })
}

/// Random start near `P(x) u(w|x)`, with a little mass spread everywhere so
/// the joint form can also move off the support of `P`.
fn random_joint<R: Rng>(pmf: &JointPmf, cells: &[usize], k: usize, rng: &mut R) -> Vec<f64> {
    const SPREAD: f64 = 0.1;
    let mut x = vec![0.0; cells.len() * k];
    let mut spread = vec![0.0; cells.len() * k];
    dirichlet_row(rng, &mut spread);
    let probs = cells.iter().map(|&c| pmf.probs()[c]);
    for ((row, p), srow) in x.chunks_exact_mut(k).zip(probs).zip(spread.chunks_exact(k)) {
        dirichlet_row(rng, row);
        for (v, &s) in row.iter_mut().zip(srow) {
            *v = (1.0 - SPREAD) * p * *v + SPREAD * s;
        }
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    TestChannel,
    Gamma,
}

/// Both estimates of `C` with the cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WynerEstimate {
    pub value: f64,
    pub chosen: Route,
    /// `I(X;W)` from the test-channel form.
    pub upper_value: f64,
    /// `H(X) - Gamma(0, 0)` from the joint form.
    pub gamma_value: f64,
    pub disagreement: f64,
    pub test_channel: OptResult,
    pub gamma: OptResult,
}

impl WynerEstimate {
    pub fn chosen_result(&self) -> &OptResult {
        match self.chosen {
            Route::TestChannel => &self.test_channel,
            Route::Gamma => &self.gamma,
        }
    }
}

/// `C(X_1, ..., X_N)` from both parameterizations. Fails with
/// [`WynerError::InconsistentEstimates`] when they differ by more than
/// `cfg.cross_tol`.
pub fn wyner_ci(pmf: &JointPmf, cfg: &OptConfig) -> Result<WynerEstimate> {
    let upper = wyner_upper_via_test_channel(pmf, cfg)?;
    let joint = gamma(pmf, 0.0, 0.0, cfg)?;
    let h = pmf.total_entropy();
    let gamma_value = (h - joint.value).max(0.0);
    let disagreement = (upper.value - gamma_value).abs();
    if disagreement > cfg.cross_tol {
        return Err(WynerError::InconsistentEstimates {
            upper: upper.value,
            gamma: gamma_value,
        });
    }
    let certified = |r: &OptResult| r.certificate != Certificate::Uncertified;
    let residual = |r: &OptResult| r.ci_violation + r.marginal_gap;
    let chosen = match (certified(&upper), certified(&joint)) {
        (true, false) => Route::TestChannel,
        (false, true) => Route::Gamma,
        _ if residual(&joint) < residual(&upper) => Route::Gamma,
        _ => Route::TestChannel,
    };
    let value = match chosen {
        Route::TestChannel => upper.value,
        Route::Gamma => gamma_value,
    };
    Ok(WynerEstimate {
        value,
        chosen,
        upper_value: upper.value,
        gamma_value,
        disagreement,
        test_channel: upper,
        gamma: joint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_bad_schedules() {
        let mut cfg = OptConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.penalty_schedule = vec![4.0, 4.0];
        assert!(cfg.validate().is_err());
        cfg = OptConfig {
            restarts: 0,
            ..OptConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg = OptConfig {
            w_size: Some(0),
            ..OptConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn aux_model_checks_rows() {
        assert!(AuxModel::new(vec![0.5, 0.5], vec![vec![vec![1.0, 0.0], vec![0.2, 0.8]]]).is_ok());
        assert!(AuxModel::new(vec![0.5, 0.6], vec![vec![vec![1.0, 0.0], vec![0.2, 0.8]]]).is_err());
        assert!(AuxModel::new(vec![1.0], vec![vec![vec![0.9, 0.0]]]).is_err());
    }

    #[test]
    fn deserializing_validates() {
        let bad = r#"{"w_prior":[0.7,0.7],"channels":[[[1.0],[1.0]]]}"#;
        assert!(serde_json::from_str::<AuxModel>(bad).is_err());
        let good =
            AuxModel::new(vec![0.25, 0.75], vec![vec![vec![0.5, 0.5], vec![1.0, 0.0]]]).unwrap();
        let text = serde_json::to_string(&good).unwrap();
        assert_eq!(serde_json::from_str::<AuxModel>(&text).unwrap(), good);
    }

    #[test]
    fn ties_go_to_the_lowest_restart() {
        let trace = |v: f64| RestartTrace {
            restart: 0,
            stages: vec![StageTrace {
                penalty: 1.0,
                iterations: 10,
                objective: v,
                oscillating: false,
            }],
        };
        let runs = vec![((), trace(0.5)), ((), trace(0.25)), ((), trace(0.25))];
        assert_eq!(select_best(&runs).unwrap(), 1);
    }
}
