//! Block-length simulations behind the two operational readings of common
//! information.
//!
//! * [`generator_sim`]: a random codebook of `M` sequences drives memoryless
//!   channels; the normalized divergence between the source law and the
//!   synthesized law is computed exactly or estimated by sampling.
//! * [`gw_codec_sim`]: the Gray-Wyner scheme with a random covering
//!   codebook, hashed bins and typicality decoders, with error events
//!   counted separately.
//!
//! Every trial draws from its own seeded stream, so reports do not depend on
//! how trials are scheduled.

use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistError, JointPmf};
use crate::graywyner::{aux_gap, RateTuple, COMPATIBILITY_TOL};
use crate::seed::{derive_seed, stream_rng};
use crate::wyner::{AuxModel, TestChannel, WynerError};

/// Largest number of source blocks enumerated exactly.
pub const MAX_EXACT_BLOCKS: u128 = 1 << 20;
/// Largest codebook.
pub const MAX_CODEBOOK: u128 = 1 << 16;
/// Largest `M * samples * n` for Monte Carlo estimates.
pub const MAX_SAMPLED_WORK: u128 = 1 << 34;
/// Largest single-variable block alphabet a decoder scans.
pub const MAX_DECODER_SCAN: u128 = 1 << 20;
/// Bin counts saturate here; collisions are negligible well before.
const MAX_BINS: u64 = 1 << 62;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("budget exceeded: {what} needs {needed:.0}, cap is {cap}")]
    BudgetExceeded {
        what: &'static str,
        needed: f64,
        cap: u128,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model is {gap:.3e} bits from the source law")]
    IncompatibleModel { gap: f64 },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Wyner(#[from] WynerError),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Serializes infinite divergences as the string `"inf"`.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Finite(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("not a number: {t}"))),
            },
        }
    }
}

fn budget(what: &'static str, needed: f64, cap: u128) -> Result<()> {
    if needed.is_finite() && needed <= cap as f64 {
        Ok(())
    } else {
        Err(SimError::BudgetExceeded { what, needed, cap })
    }
}

/// `ceil(2^(n * rate))` as a float, so huge sizes can be reported.
pub fn codebook_size(n: usize, rate: f64) -> f64 {
    (n as f64 * rate).exp2().ceil()
}

/// `M` sequences of length `n` over `W`, drawn i.i.d. from a prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    entries: Vec<Vec<usize>>,
    gen_seed: u64,
}

impl Codebook {
    pub fn generate(prior: &[f64], n: usize, m: usize, gen_seed: u64) -> Result<Self> {
        let mut rng = stream_rng(gen_seed, 0);
        Self::draw(prior, n, m, gen_seed, &mut rng)
    }

    fn draw(
        prior: &[f64],
        n: usize,
        m: usize,
        gen_seed: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(SimError::InvalidConfig(
                "codebook needs M >= 1 and n >= 1".into(),
            ));
        }
        let dist = WeightedIndex::new(prior)
            .map_err(|e| SimError::InvalidConfig(format!("prior: {e}")))?;
        let entries = (0..m)
            .map(|_| (0..n).map(|_| dist.sample(rng)).collect())
            .collect();
        Ok(Self { entries, gen_seed })
    }

    pub fn entries(&self) -> &[Vec<usize>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn gen_seed(&self) -> u64 {
        self.gen_seed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSimConfig {
    /// Law to be synthesized.
    pub source: JointPmf,
    pub model: AuxModel,
    pub n: usize,
    /// Codebook rate in bits per symbol; `M = ceil(2^(n * rate))`.
    pub rate: f64,
    pub codebook_trials: usize,
    pub estimator: Estimator,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenTrial {
    pub trial: usize,
    pub gen_seed: u64,
    /// `D_n` in bits per symbol; `"inf"` when the synthesized law misses
    /// part of the source support.
    #[serde(with = "extended_float")]
    pub divergence: f64,
    /// Standard error of a sampled estimate.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub config: GenSimConfig,
    pub codebook_size: usize,
    pub trials: Vec<GenTrial>,
    #[serde(with = "extended_float")]
    pub min: f64,
    #[serde(with = "extended_float")]
    pub mean: f64,
    #[serde(with = "extended_float")]
    pub max: f64,
    pub wall_time_s: f64,
}

/// Per-letter table `L[w][cell] = prod_i q_i(x_i | w)`.
fn letter_table(model: &AuxModel, source: &JointPmf) -> Vec<Vec<f64>> {
    let spec = source.spec();
    (0..model.w_size())
        .map(|w| {
            (0..spec.cells())
                .map(|c| {
                    spec.unravel(c)
                        .iter()
                        .zip(model.channels())
                        .map(|(&x, ch)| ch[w][x])
                        .product()
                })
                .collect()
        })
        .collect()
}

fn check_gen(cfg: &GenSimConfig) -> Result<usize> {
    if cfg.model.sizes() != cfg.source.sizes() {
        return Err(SimError::InvalidConfig(
            "model alphabets differ from the source".into(),
        ));
    }
    if cfg.n == 0 || cfg.codebook_trials == 0 {
        return Err(SimError::InvalidConfig(
            "n and codebook_trials must be positive".into(),
        ));
    }
    if !(cfg.rate.is_finite() && cfg.rate >= 0.0) {
        return Err(SimError::InvalidConfig(
            "rate must be finite and nonnegative".into(),
        ));
    }
    let m = codebook_size(cfg.n, cfg.rate);
    budget("codebook size M", m, MAX_CODEBOOK)?;
    match cfg.estimator {
        Estimator::Exact => {
            let blocks = (cfg.source.probs().len() as f64).powi(cfg.n as i32);
            budget("source blocks |cells|^n", blocks, MAX_EXACT_BLOCKS)?;
        }
        Estimator::MonteCarlo { samples } => {
            if samples < 2 {
                return Err(SimError::InvalidConfig(
                    "Monte Carlo needs at least 2 samples".into(),
                ));
            }
            let work = m * samples as f64 * cfg.n as f64;
            budget("sampled work M * samples * n", work, MAX_SAMPLED_WORK)?;
        }
    }
    Ok(m as usize)
}

/// Exact `D(P^n || Q^n) / n` by depth-first enumeration of source blocks,
/// carrying prefix products for every codeword.
fn exact_divergence(source: &[f64], table: &[Vec<f64>], book: &Codebook, n: usize) -> f64 {
    struct Walk<'a> {
        source: &'a [f64],
        table: &'a [Vec<f64>],
        book: &'a Codebook,
        n: usize,
        total: f64,
        missed: bool,
    }

    impl Walk<'_> {
        fn visit(&mut self, depth: usize, p: f64, prefix: &[f64]) {
            if depth == self.n {
                let q = prefix.iter().sum::<f64>() / prefix.len() as f64;
                if q > 0.0 {
                    self.total += p * (p / q).log2();
                } else {
                    self.missed = true;
                }
                return;
            }
            let mut next = vec![0.0; prefix.len()];
            for (cell, &pc) in self.source.iter().enumerate() {
                if pc == 0.0 || self.missed {
                    continue;
                }
                for ((nx, &pre), word) in next.iter_mut().zip(prefix).zip(self.book.entries()) {
                    *nx = pre * self.table[word[depth]][cell];
                }
                self.visit(depth + 1, p * pc, &next);
            }
        }
    }

    let mut walk = Walk {
        source,
        table,
        book,
        n,
        total: 0.0,
        missed: false,
    };
    walk.visit(0, 1.0, &vec![1.0; book.len()]);
    if walk.missed {
        f64::INFINITY
    } else {
        (walk.total / n as f64).max(0.0)
    }
}

/// Sampled estimate of `D_n` and its standard error.
fn sampled_divergence(
    source: &[f64],
    table: &[Vec<f64>],
    book: &Codebook,
    n: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let dist = WeightedIndex::new(source).expect("source is a distribution");
    let ln_table: Vec<Vec<f64>> = table
        .iter()
        .map(|row| row.iter().map(|v| v.ln()).collect())
        .collect();
    let ln_m = (book.len() as f64).ln();
    let mut values = Vec::with_capacity(samples);
    let mut block = vec![0usize; n];
    let mut logs = vec![0.0; book.len()];
    for _ in 0..samples {
        block.iter_mut().for_each(|c| *c = dist.sample(rng));
        let ln_p: f64 = block.iter().map(|&c| source[c].ln()).sum();
        for (l, word) in logs.iter_mut().zip(book.entries()) {
            *l = block.iter().zip(word).map(|(&c, &w)| ln_table[w][c]).sum();
        }
        let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ln_q = if hi == f64::NEG_INFINITY {
            hi
        } else {
            hi + logs.iter().map(|l| (l - hi).exp()).sum::<f64>().ln() - ln_m
        };
        values.push((ln_p - ln_q) / std::f64::consts::LN_2 / n as f64);
    }
    let mean = values.iter().sum::<f64>() / samples as f64;
    if !mean.is_finite() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
    (mean, (var / samples as f64).sqrt())
}

fn summarize(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, f64) {
    let count = values.clone().count() as f64;
    let min = values.clone().fold(f64::INFINITY, f64::min);
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.sum::<f64>() / count;
    (min, mean, max)
}

/// Distribution synthesis from a rate-limited common codebook. Reports
/// `D_n` for each sampled codebook and the min, mean and max over them.
pub fn generator_sim(cfg: &GenSimConfig) -> Result<GenReport> {
    let started = Instant::now();
    let m = check_gen(cfg)?;
    let table = letter_table(&cfg.model, &cfg.source);
    let source = cfg.source.probs();
    let trials: Vec<GenTrial> = (0..cfg.codebook_trials)
        .into_par_iter()
        .map(|trial| -> Result<GenTrial> {
            let gen_seed = derive_seed(cfg.seed, trial as u64);
            let mut rng = stream_rng(gen_seed, 0);
            let book = Codebook::draw(cfg.model.w_prior(), cfg.n, m, gen_seed, &mut rng)?;
            let (divergence, std_error) = match cfg.estimator {
                Estimator::Exact => (exact_divergence(source, &table, &book, cfg.n), None),
                Estimator::MonteCarlo { samples } => {
                    let (d, se) =
                        sampled_divergence(source, &table, &book, cfg.n, samples, &mut rng);
                    (d, Some(se))
                }
            };
            Ok(GenTrial {
                trial,
                gen_seed,
                divergence,
                std_error,
            })
        })
        .collect::<Result<_>>()?;
    let (min, mean, max) = summarize(trials.iter().map(|t| t.divergence));
    Ok(GenReport {
        config: cfg.clone(),
        codebook_size: m,
        trials,
        min,
        mean,
        max,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecSimConfig {
    pub pmf: JointPmf,
    pub witness: AuxModel,
    pub n: usize,
    pub rates: RateTuple,
    /// Largest allowed gap between an empirical frequency and its
    /// probability.
    pub typicality_eps: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecTrial {
    pub trial: usize,
    /// Codeword index sent on the common link.
    pub common_index: usize,
    /// No codeword was jointly typical with the source block.
    pub e1: bool,
    /// Some decoder's source block is atypical with the sent codeword.
    pub e2: bool,
    /// Some decoder found another typical sequence in its bin.
    pub e3: bool,
    /// Some decoder output the wrong block.
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecReport {
    pub config: CodecSimConfig,
    pub codebook_size: usize,
    pub bins: Vec<u64>,
    pub trials: Vec<CodecTrial>,
    pub e1_count: usize,
    pub e2_count: usize,
    pub e3_count: usize,
    pub errors: usize,
    pub error_rate: f64,
    pub wall_time_s: f64,
}

/// Strong typicality with an L-infinity test on a joint type: every
/// frequency within `eps` of its probability, and no visits to
/// zero-probability cells.
struct TypicalityTest<'a> {
    probs: &'a [f64],
    eps: f64,
    counts: Vec<u32>,
}

impl<'a> TypicalityTest<'a> {
    fn new(probs: &'a [f64], eps: f64) -> Self {
        Self {
            probs,
            eps,
            counts: vec![0; probs.len()],
        }
    }

    fn check(&mut self, cells: impl Iterator<Item = usize>, n: usize) -> bool {
        self.counts.iter_mut().for_each(|c| *c = 0);
        for c in cells {
            if self.probs[c] == 0.0 {
                return false;
            }
            self.counts[c] += 1;
        }
        let n = n as f64;
        self.counts
            .iter()
            .zip(self.probs)
            .all(|(&k, &p)| (k as f64 / n - p).abs() <= self.eps)
    }
}

/// `((a x + b) mod p) mod bins` with the Mersenne prime `p = 2^61 - 1`.
#[derive(Debug, Clone, Copy)]
struct UniversalHash {
    a: u64,
    b: u64,
    bins: u64,
}

const HASH_PRIME: u64 = (1 << 61) - 1;

impl UniversalHash {
    fn draw(rng: &mut ChaCha8Rng, bins: u64) -> Self {
        Self {
            a: rng.gen_range(1..HASH_PRIME),
            b: rng.gen_range(0..HASH_PRIME),
            bins,
        }
    }

    fn bin(&self, x: u64) -> u64 {
        let v = (self.a as u128 * x as u128 + self.b as u128) % HASH_PRIME as u128;
        (v % self.bins as u128) as u64
    }
}

fn block_index(block: &[usize], size: usize) -> u64 {
    block
        .iter()
        .fold(0u64, |acc, &x| acc * size as u64 + x as u64)
}

fn unpack_block(mut index: u64, size: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = (index % size as u64) as usize;
        index /= size as u64;
    }
}

/// Fixed quantities shared by every trial.
struct CodecSetup {
    n_vars: usize,
    sizes: Vec<usize>,
    k: usize,
    m0: usize,
    bins: Vec<u64>,
    /// `P(x, w)` flattened as `cell * k + w`.
    joint: Vec<f64>,
    /// `P(x_i, w)` flattened as `x_i * k + w`.
    pair_joints: Vec<Vec<f64>>,
}

fn codec_setup(cfg: &CodecSimConfig) -> Result<CodecSetup> {
    let n_vars = cfg.pmf.n_vars();
    if cfg.n == 0 || cfg.trials == 0 {
        return Err(SimError::InvalidConfig(
            "n and trials must be positive".into(),
        ));
    }
    if !(cfg.typicality_eps > 0.0 && cfg.typicality_eps.is_finite()) {
        return Err(SimError::InvalidConfig(
            "typicality_eps must be positive".into(),
        ));
    }
    if cfg.rates.r.len() != n_vars {
        return Err(SimError::InvalidConfig(format!(
            "{} private rates for {n_vars} variables",
            cfg.rates.r.len()
        )));
    }
    let gap =
        aux_gap(&cfg.pmf, &cfg.witness).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    if gap > COMPATIBILITY_TOL {
        return Err(SimError::IncompatibleModel { gap });
    }
    let m0 = codebook_size(cfg.n, cfg.rates.r0);
    budget("common codebook size", m0, MAX_CODEBOOK)?;
    let sizes = cfg.pmf.sizes().to_vec();
    let mut bins = Vec::with_capacity(n_vars);
    for (&s, &r) in sizes.iter().zip(&cfg.rates.r) {
        let scan = (s as f64).powi(cfg.n as i32);
        budget("decoder scan |X_i|^n", scan, MAX_DECODER_SCAN)?;
        // Hashing is not injective, so bins beyond the sequence count still
        // cut collisions; only the integer range limits them.
        bins.push(codebook_size(cfg.n, r).min(MAX_BINS as f64) as u64);
    }
    let k = cfg.witness.w_size();
    // Typicality is judged against P(x) p(w|x) so the source part is exact.
    let channel = TestChannel::from_aux(&cfg.witness, &cfg.pmf)?;
    let coupling = channel.coupling(&cfg.pmf)?;
    let joint = coupling.pmf().probs().to_vec();
    let w_axis = coupling.w_axis();
    let pair_joints = (0..n_vars)
        .map(|i| {
            coupling
                .pmf()
                .marginalize(&[i, w_axis])
                .map(|m| m.probs().to_vec())
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(CodecSetup {
        n_vars,
        sizes,
        k,
        m0: m0 as usize,
        bins,
        joint,
        pair_joints,
    })
}

fn codec_trial(cfg: &CodecSimConfig, setup: &CodecSetup, trial: usize) -> Result<CodecTrial> {
    let n = cfg.n;
    let k = setup.k;
    let mut rng = stream_rng(cfg.seed, trial as u64);
    let source = WeightedIndex::new(cfg.pmf.probs()).expect("valid source");
    let cells: Vec<usize> = (0..n).map(|_| source.sample(&mut rng)).collect();
    let book = Codebook::draw(cfg.witness.w_prior(), n, setup.m0, cfg.seed, &mut rng)?;
    let hashes: Vec<UniversalHash> = setup
        .bins
        .iter()
        .map(|&b| UniversalHash::draw(&mut rng, b))
        .collect();

    let spec = cfg.pmf.spec();
    let coords: Vec<Vec<usize>> = cells.iter().map(|&c| spec.unravel(c)).collect();
    let truths: Vec<Vec<usize>> = (0..setup.n_vars)
        .map(|i| coords.iter().map(|c| c[i]).collect())
        .collect();
    let mut pair_tests: Vec<TypicalityTest> = setup
        .pair_joints
        .iter()
        .map(|p| TypicalityTest::new(p, cfg.typicality_eps))
        .collect();

    // Encoder: first codeword typical with the whole block and with every
    // single-variable block, so a decoder never rejects what was accepted.
    let mut joint_test = TypicalityTest::new(&setup.joint, cfg.typicality_eps);
    let found = book.entries().iter().position(|word| {
        joint_test.check(cells.iter().zip(word).map(|(&c, &w)| c * k + w), n)
            && truths
                .iter()
                .zip(pair_tests.iter_mut())
                .all(|(truth, test)| {
                    test.check(truth.iter().zip(word).map(|(&x, &w)| x * k + w), n)
                })
    });
    let e1 = found.is_none();
    let common_index = found.unwrap_or(0);
    let word = &book.entries()[common_index];

    let (mut e2, mut e3, mut error) = (false, false, false);
    let mut candidate = vec![0usize; n];
    for (i, (truth, test)) in truths.iter().zip(pair_tests.iter_mut()).enumerate() {
        let size = setup.sizes[i];
        let hash = hashes[i];
        let target_bin = hash.bin(block_index(truth, size));
        let truth_typical = test.check(truth.iter().zip(word).map(|(&x, &w)| x * k + w), n);
        e2 |= !truth_typical;

        // Decoder: scan the bin for sequences typical with the codeword.
        let mut typical_in_bin = 0usize;
        let mut impostor = false;
        let total = (size as u64).pow(n as u32);
        for index in 0..total {
            if hash.bin(index) != target_bin {
                continue;
            }
            unpack_block(index, size, &mut candidate);
            if test.check(candidate.iter().zip(word).map(|(&x, &w)| x * k + w), n) {
                typical_in_bin += 1;
                if candidate != *truth {
                    impostor = true;
                }
            }
        }
        e3 |= impostor;
        let decoded_correctly = truth_typical && typical_in_bin == 1;
        error |= !decoded_correctly;
    }
    Ok(CodecTrial {
        trial,
        common_index,
        e1,
        e2,
        e3,
        error,
    })
}

/// Random-coding Gray-Wyner codec: covering codebook at rate `r0`, binning
/// at rates `r[i]`, and typicality decoding, repeated over independent
/// trials.
pub fn gw_codec_sim(cfg: &CodecSimConfig) -> Result<CodecReport> {
    let started = Instant::now();
    let setup = codec_setup(cfg)?;
    let trials: Vec<CodecTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| codec_trial(cfg, &setup, t))
        .collect::<Result<_>>()?;
    let count = |f: fn(&CodecTrial) -> bool| trials.iter().filter(|t| f(t)).count();
    let errors = count(|t| t.error);
    Ok(CodecReport {
        config: cfg.clone(),
        codebook_size: setup.m0,
        bins: setup.bins.clone(),
        e1_count: count(|t| t.e1),
        e2_count: count(|t| t.e2),
        e3_count: count(|t| t.e3),
        errors,
        error_rate: errors as f64 / cfg.trials as f64,
        wall_time_s: started.elapsed().as_secs_f64(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csbs::{a1_of_a0, bsc_mixture_joint};
    use crate::dist::kl_of;
    use proptest::prelude::*;

    /// `W` constant, channels equal to the marginals: exact for products.
    fn constant_model(p: &JointPmf) -> AuxModel {
        AuxModel::new(
            vec![1.0],
            p.marginals().into_iter().map(|m| vec![m]).collect(),
        )
        .unwrap()
    }

    fn gen_cfg(source: JointPmf, model: AuxModel, n: usize, rate: f64) -> GenSimConfig {
        GenSimConfig {
            source,
            model,
            n,
            rate,
            codebook_trials: 4,
            estimator: Estimator::Exact,
            seed: 11,
        }
    }

    #[test]
    fn product_source_needs_no_rate() {
        let p = JointPmf::product(&[vec![0.3, 0.7], vec![0.1, 0.5, 0.4]]).unwrap();
        let model = constant_model(&p);
        let r = generator_sim(&gen_cfg(p, model, 3, 0.0)).unwrap();
        assert_eq!(r.codebook_size, 1);
        assert!(r.max.abs() < 1e-12, "{}", r.max);
    }

    #[test]
    fn single_letter_divergence_matches_direct_sum() {
        // n = 1: Q(x) = (1/M) sum_m prod_i q_i(x_i | w_m), checked cell by cell.
        let a1 = 0.2;
        let (p, aux) = bsc_mixture_joint(2, a1).unwrap();
        let cfg = GenSimConfig {
            rate: 1.5,
            n: 1,
            ..gen_cfg(p.clone(), aux.clone(), 1, 0.0)
        };
        let r = generator_sim(&cfg).unwrap();
        for t in &r.trials {
            let book = Codebook::generate(aux.w_prior(), 1, 3, t.gen_seed).unwrap();
            let q: Vec<f64> = (0..4)
                .map(|c| {
                    let (x1, x2) = (c / 2, c % 2);
                    book.entries()
                        .iter()
                        .map(|w| aux.channels()[0][w[0]][x1] * aux.channels()[1][w[0]][x2])
                        .sum::<f64>()
                        / 3.0
                })
                .collect();
            assert!((t.divergence - kl_of(p.probs(), &q)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_mixture_at_rate_one_misses_blocks() {
        // Copies of W: Q is supported on the codebook, and an i.i.d. codebook
        // of 2^n words almost never covers all 2^n blocks.
        let (p, aux) = bsc_mixture_joint(2, 0.0).unwrap();
        let mut cfg = gen_cfg(p, aux, 6, 1.0);
        cfg.codebook_trials = 8;
        let r = generator_sim(&cfg).unwrap();
        assert!(r.trials.iter().all(|t| t.divergence == f64::INFINITY));
        // At twice the rate the codebook covers and D_n shrinks with n.
        let mins: Vec<f64> = (4..=7)
            .map(|n| {
                cfg.n = n;
                cfg.rate = 2.0;
                generator_sim(&cfg).unwrap().min
            })
            .collect();
        assert!(mins.windows(2).all(|w| w[1] < w[0]), "{mins:?}");
        assert!(mins[3] < 0.05);
    }

    #[test]
    fn budgets_are_enforced() {
        let p = JointPmf::uniform(vec![2, 2]).unwrap();
        let model = constant_model(&p);
        let err = generator_sim(&gen_cfg(p.clone(), model.clone(), 11, 0.0)).unwrap_err();
        assert!(matches!(err, SimError::BudgetExceeded { .. }), "{err}");
        let err = generator_sim(&gen_cfg(p, model, 2, 9.0)).unwrap_err();
        assert!(matches!(err, SimError::BudgetExceeded { .. }), "{err}");
    }

    #[test]
    fn monte_carlo_error_shrinks_like_root_samples() {
        let a1 = a1_of_a0(0.25).unwrap();
        let (p, aux) = bsc_mixture_joint(2, a1).unwrap();
        let mut cfg = gen_cfg(p, aux, 8, 0.5);
        cfg.codebook_trials = 1;
        let mut se = |samples| {
            cfg.estimator = Estimator::MonteCarlo { samples };
            generator_sim(&cfg).unwrap().trials[0].std_error.unwrap()
        };
        let ratio = se(4000) / se(8000);
        assert!((ratio - 2f64.sqrt()).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let a1 = a1_of_a0(0.25).unwrap();
        let (p, aux) = bsc_mixture_joint(2, a1).unwrap();
        let mut cfg = gen_cfg(p, aux, 5, 0.6);
        cfg.codebook_trials = 2;
        let exact = generator_sim(&cfg).unwrap();
        cfg.estimator = Estimator::MonteCarlo { samples: 20000 };
        let sampled = generator_sim(&cfg).unwrap();
        for (e, s) in exact.trials.iter().zip(&sampled.trials) {
            let se = s.std_error.unwrap();
            assert!(
                (e.divergence - s.divergence).abs() < 5.0 * se,
                "{} vs {} ({se})",
                e.divergence,
                s.divergence
            );
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let (p, aux) = bsc_mixture_joint(2, 0.1).unwrap();
        let cfg = gen_cfg(p, aux, 4, 0.7);
        let mut a = generator_sim(&cfg).unwrap();
        let mut b = generator_sim(&cfg).unwrap();
        a.wall_time_s = 0.0;
        b.wall_time_s = 0.0;
        assert_eq!(a, b);
    }

    #[test]
    fn infinite_divergence_serializes() {
        let t = GenTrial {
            trial: 0,
            gen_seed: 1,
            divergence: f64::INFINITY,
            std_error: None,
        };
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"inf\""));
        let back: GenTrial = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn typicality_rules() {
        let probs = [0.5, 0.5, 0.0];
        let mut t = TypicalityTest::new(&probs, 0.1);
        assert!(t.check([0, 1, 0, 1].into_iter(), 4));
        assert!(!t.check([0, 0, 0, 1].into_iter(), 4));
        // A single visit to a zero-probability cell breaks typicality.
        let mut loose = TypicalityTest::new(&probs, 0.9);
        assert!(!loose.check([0, 1, 2, 1].into_iter(), 4));
    }

    #[test]
    fn block_index_round_trip() {
        let mut out = [0usize; 4];
        for idx in 0..81u64 {
            unpack_block(idx, 3, &mut out);
            assert_eq!(block_index(&out, 3), idx);
        }
    }

    fn dsbs_codec(n: usize, r0: f64, margin: f64, trials: usize) -> CodecSimConfig {
        let a1 = a1_of_a0(0.25).unwrap();
        let (p, aux) = bsc_mixture_joint(2, a1).unwrap();
        let h1 = crate::dist::binary_entropy(a1).unwrap();
        CodecSimConfig {
            pmf: p,
            witness: aux,
            n,
            rates: RateTuple::new(r0, vec![h1 + margin, h1 + margin]).unwrap(),
            typicality_eps: 0.1,
            trials,
            seed: 5,
        }
    }

    #[test]
    fn generous_rates_decode() {
        // A full extra bit on every link: no bin collisions and a codebook
        // far larger than covering needs.
        let a1 = a1_of_a0(0.25).unwrap();
        let (p, aux) = bsc_mixture_joint(2, a1).unwrap();
        let info = crate::csbs::c_closed_form(2, a1).unwrap();
        let cfg = CodecSimConfig {
            rates: RateTuple::new(info + 1.0, vec![2.0, 2.0]).unwrap(),
            typicality_eps: 0.3,
            trials: 200,
            n: 8,
            pmf: p,
            witness: aux,
            seed: 3,
        };
        let r = gw_codec_sim(&cfg).unwrap();
        assert!(
            r.error_rate < 0.2,
            "{} {} {} {}",
            r.error_rate,
            r.e1_count,
            r.e2_count,
            r.e3_count
        );
        assert_eq!(r.bins, vec![1 << 16, 1 << 16]);
    }

    #[test]
    fn starved_common_link_fails_to_cover() {
        let r = gw_codec_sim(&dsbs_codec(10, 0.0, 0.15, 200)).unwrap();
        assert_eq!(r.codebook_size, 1);
        assert!(r.e1_count as f64 >= 0.9 * 200.0, "{}", r.e1_count);
    }

    #[test]
    fn wide_typicality_trades_atypicality_for_collisions() {
        let runs: Vec<CodecReport> = [0.1, 0.2, 0.4, 1.0]
            .iter()
            .map(|&eps| {
                let mut cfg = dsbs_codec(8, 0.9, 0.15, 300);
                cfg.typicality_eps = eps;
                gw_codec_sim(&cfg).unwrap()
            })
            .collect();
        let e2: Vec<usize> = runs.iter().map(|r| r.e2_count).collect();
        let e3: Vec<usize> = runs.iter().map(|r| r.e3_count).collect();
        assert!(e2.windows(2).all(|w| w[1] <= w[0]), "{e2:?}");
        assert!(e3.windows(2).all(|w| w[1] >= w[0]), "{e3:?}");
        // Everything is typical: only bin collisions remain.
        assert_eq!(e2[3], 0);
        assert_eq!(e3[3], 300);
    }

    #[test]
    fn codec_is_reproducible() {
        let cfg = dsbs_codec(6, 0.8, 0.15, 50);
        let mut a = gw_codec_sim(&cfg).unwrap();
        let mut b = gw_codec_sim(&cfg).unwrap();
        a.wall_time_s = 0.0;
        b.wall_time_s = 0.0;
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn exact_divergence_nonnegative_and_zero_only_at_match(
            seed in any::<u64>(),
            n in 1usize..4,
            rate in 0.0f64..1.5,
        ) {
            let (p, aux) = bsc_mixture_joint(2, 0.2).unwrap();
            let mut cfg = gen_cfg(p.clone(), aux.clone(), n, rate);
            cfg.seed = seed;
            cfg.codebook_trials = 2;
            let r = generator_sim(&cfg).unwrap();
            let table = letter_table(&aux, &p);
            for t in &r.trials {
                prop_assert!(t.divergence >= -1e-9);
                // Rebuild Q^n for this codebook and compare with P^n.
                let book = Codebook::generate(aux.w_prior(), n, r.codebook_size, t.gen_seed).unwrap();
                let blocks = 4usize.pow(n as u32);
                let mut max_gap: f64 = 0.0;
                let mut cell_block = vec![0usize; n];
                for b in 0..blocks {
                    unpack_block(b as u64, 4, &mut cell_block);
                    let pn: f64 = cell_block.iter().map(|&c| p.probs()[c]).product();
                    let qn: f64 = book.entries().iter().map(|w| {
                        cell_block.iter().zip(w).map(|(&c, &wi)| table[wi][c]).product::<f64>()
                    }).sum::<f64>() / book.len() as f64;
                    max_gap = max_gap.max((pn - qn).abs());
                }
                if max_gap < 1e-12 {
                    prop_assert!(t.divergence < 1e-9);
                } else {
                    prop_assert!(t.divergence > 0.0);
                }
            }
        }
    }
}
