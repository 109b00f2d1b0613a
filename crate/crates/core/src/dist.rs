//! Finite-alphabet probability tensors and the entropy functionals built on them.
//!
//! A [`JointPmf`] stores `P(x_1, ..., x_N)` as a flat row-major vector with the
//! last variable's index running fastest. Axes are addressed by zero-based
//! indices; every index-set argument is a slice of distinct axis numbers.
//!
//! All logarithms are base 2. `0 log 0` is taken as 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of cells a tensor may have.
pub const MAX_CELLS: usize = 1 << 24;

/// Tolerance on the total mass of an input distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("negative mass {value} at cell {index}")]
    NegativeMass { index: usize, value: f64 },
    #[error("non-finite mass at cell {index}")]
    NonFinite { index: usize },
    #[error("distribution not normalized: sum = {0}")]
    NotNormalized(f64),
    #[error("shape mismatch: expected {expected} cells, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("alphabet sizes must be positive and at least one variable is required")]
    EmptyAlphabet,
    #[error("tensor of {0} cells exceeds the cap of {MAX_CELLS}")]
    TensorTooLarge(u128),
    #[error("index set must be nonempty")]
    EmptyKeepSet,
    #[error("axis {axis} out of range for {n_vars} variables")]
    AxisOutOfRange { axis: usize, n_vars: usize },
    #[error("axis {0} appears more than once")]
    DuplicateAxis(usize),
    #[error("index sets overlap on axis {0}")]
    OverlappingSets(usize),
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("{0} names given for {1} variables")]
    NameCount(usize, usize),
}

pub type Result<T> = std::result::Result<T, DistError>;

/// Alphabet sizes `(|X_1|, ..., |X_N|)` plus optional variable labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphabetSpec {
    sizes: Vec<usize>,
    names: Option<Vec<String>>,
}

impl AlphabetSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(DistError::EmptyAlphabet);
        }
        let cells: u128 = sizes.iter().map(|&s| s as u128).product();
        if cells > MAX_CELLS as u128 {
            return Err(DistError::TensorTooLarge(cells));
        }
        Ok(Self { sizes, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.sizes.len() {
            return Err(DistError::NameCount(names.len(), self.sizes.len()));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn n_vars(&self) -> usize {
        self.sizes.len()
    }

    pub fn cells(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Row-major strides, last axis contiguous.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.sizes.len()];
        for i in (0..self.sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.sizes[i + 1];
        }
        strides
    }

    /// Multi-index of a flat cell index.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.sizes.len()];
        for (slot, &size) in idx.iter_mut().zip(&self.sizes).rev() {
            *slot = flat % size;
            flat /= size;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&i, &size)| acc * size + i)
    }

    fn check_axes(&self, axes: &[usize]) -> Result<()> {
        if axes.is_empty() {
            return Err(DistError::EmptyKeepSet);
        }
        let n = self.n_vars();
        let mut seen = vec![false; n];
        for &a in axes {
            if a >= n {
                return Err(DistError::AxisOutOfRange { axis: a, n_vars: n });
            }
            if seen[a] {
                return Err(DistError::DuplicateAxis(a));
            }
            seen[a] = true;
        }
        Ok(())
    }
}

/// Checks nonnegativity, finiteness, length and normalization of a flat tensor.
pub fn validate(spec: &AlphabetSpec, probs: &[f64]) -> Result<()> {
    let expected = spec.cells();
    if probs.len() != expected {
        return Err(DistError::ShapeMismatch {
            expected,
            got: probs.len(),
        });
    }
    for (index, &value) in probs.iter().enumerate() {
        if !value.is_finite() {
            return Err(DistError::NonFinite { index });
        }
        if value < 0.0 {
            return Err(DistError::NegativeMass { index, value });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(DistError::NotNormalized(sum));
    }
    Ok(())
}

/// Joint distribution of N finite-alphabet variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    spec: AlphabetSpec,
    probs: Vec<f64>,
}

impl JointPmf {
    /// Validates and wraps a flat tensor. No renormalization is performed.
    pub fn new(spec: AlphabetSpec, probs: Vec<f64>) -> Result<Self> {
        validate(&spec, &probs)?;
        Ok(Self { spec, probs })
    }

    pub fn from_sizes(sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        Self::new(AlphabetSpec::new(sizes)?, probs)
    }

    pub fn uniform(sizes: Vec<usize>) -> Result<Self> {
        let spec = AlphabetSpec::new(sizes)?;
        let n = spec.cells();
        Ok(Self {
            spec,
            probs: vec![1.0 / n as f64; n],
        })
    }

    /// Product of independent marginals, the first marginal varying slowest.
    pub fn product(marginals: &[Vec<f64>]) -> Result<Self> {
        let sizes: Vec<usize> = marginals.iter().map(Vec::len).collect();
        for m in marginals {
            validate(&AlphabetSpec::new(vec![m.len()])?, m)?;
        }
        let spec = AlphabetSpec::new(sizes)?;
        let probs = (0..spec.cells())
            .map(|c| {
                spec.unravel(c)
                    .iter()
                    .zip(marginals)
                    .map(|(&x, m)| m[x])
                    .product()
            })
            .collect();
        Self::new(spec, probs)
    }

    pub fn spec(&self) -> &AlphabetSpec {
        &self.spec
    }

    pub fn sizes(&self) -> &[usize] {
        self.spec.sizes()
    }

    pub fn n_vars(&self) -> usize {
        self.spec.n_vars()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, idx: &[usize]) -> f64 {
        self.probs[self.spec.ravel(idx)]
    }

    /// Distribution of the variables in `keep`, with axes in the order given.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointPmf> {
        self.spec.check_axes(keep)?;
        let sizes: Vec<usize> = keep.iter().map(|&a| self.spec.sizes[a]).collect();
        let out_spec = AlphabetSpec {
            names: self
                .spec
                .names
                .as_ref()
                .map(|n| keep.iter().map(|&a| n[a].clone()).collect()),
            ..AlphabetSpec::new(sizes)?
        };
        let out_strides = out_spec.strides();
        let mut out = vec![0.0; out_spec.cells()];
        let mut idx = vec![0usize; self.n_vars()];
        for &p in &self.probs {
            let target: usize = keep
                .iter()
                .zip(&out_strides)
                .map(|(&a, &s)| idx[a] * s)
                .sum();
            out[target] += p;
            increment(&mut idx, &self.spec.sizes);
        }
        Ok(JointPmf {
            spec: out_spec,
            probs: out,
        })
    }

    /// Joint entropy of the variables in `subset`, in bits.
    pub fn entropy(&self, subset: &[usize]) -> Result<f64> {
        Ok(entropy_of(self.marginalize(subset)?.probs()))
    }

    /// Entropy of the whole tensor.
    pub fn total_entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }

    /// `H(X_A | X_B)`. An empty `b` gives the plain entropy of `a`.
    pub fn conditional_entropy(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        check_disjoint(a, b)?;
        if b.is_empty() {
            return self.entropy(a);
        }
        let union: Vec<usize> = a.iter().chain(b).copied().collect();
        Ok(self.entropy(&union)? - self.entropy(b)?)
    }

    pub fn mutual_information(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        if b.is_empty() {
            return Err(DistError::EmptyKeepSet);
        }
        check_disjoint(a, b)?;
        let union: Vec<usize> = a.iter().chain(b).copied().collect();
        Ok(self.entropy(a)? + self.entropy(b)? - self.entropy(&union)?)
    }

    /// `sum_i H(X_i) - H(X_1..X_N)`.
    pub fn multi_information(&self) -> f64 {
        let singles: f64 = (0..self.n_vars())
            .map(|i| self.entropy(&[i]).expect("axis in range"))
            .sum();
        singles - self.total_entropy()
    }

    /// Single-variable marginals, one vector per axis.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        (0..self.n_vars())
            .map(|i| self.marginalize(&[i]).expect("axis in range").probs)
            .collect()
    }

    /// Drops axes whose alphabet has a single symbol. Returns the reduced
    /// tensor and the original indices of the axes kept. If every axis is
    /// constant the result is a one-cell tensor over a single axis.
    pub fn squeeze(&self) -> (JointPmf, Vec<usize>) {
        let kept: Vec<usize> = (0..self.n_vars())
            .filter(|&i| self.spec.sizes[i] > 1)
            .collect();
        if kept.len() == self.n_vars() {
            return (self.clone(), kept);
        }
        if kept.is_empty() {
            return (self.marginalize(&[0]).expect("axis 0 exists"), vec![0]);
        }
        (self.marginalize(&kept).expect("axes in range"), kept)
    }
}

fn check_disjoint(a: &[usize], b: &[usize]) -> Result<()> {
    if a.is_empty() {
        return Err(DistError::EmptyKeepSet);
    }
    if let Some(&axis) = a.iter().find(|x| b.contains(x)) {
        return Err(DistError::OverlappingSets(axis));
    }
    Ok(())
}

/// Odometer increment of a row-major multi-index.
pub(crate) fn increment(idx: &mut [usize], sizes: &[usize]) {
    for (slot, &size) in idx.iter_mut().zip(sizes).rev() {
        *slot += 1;
        if *slot < size {
            return;
        }
        *slot = 0;
    }
}

/// `-p log2 p` with the `0 log 0 = 0` convention.
#[inline]
pub fn neg_xlogx(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy of a probability vector, in bits.
pub fn entropy_of(probs: &[f64]) -> f64 {
    probs.iter().map(|&p| neg_xlogx(p)).sum()
}

/// `D(P || Q)` in bits. Returns `+inf` when `P` puts mass where `Q` has none.
pub fn kl_divergence(p: &JointPmf, q: &JointPmf) -> Result<f64> {
    if p.sizes() != q.sizes() {
        return Err(DistError::ShapeMismatch {
            expected: p.spec.cells(),
            got: q.spec.cells(),
        });
    }
    Ok(kl_of(p.probs(), q.probs()))
}

/// Divergence of raw vectors of equal length.
pub fn kl_of(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            d += a * (a / b).log2();
        }
    }
    d.max(0.0)
}

/// `h(p) = -p log p - (1-p) log (1-p)`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DistError::OutOfRange(p));
    }
    Ok(neg_xlogx(p) + neg_xlogx(1.0 - p))
}

/// Joint law of `(X_1, ..., X_N, W)` with the auxiliary variable on the last axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pmf: JointPmf,
}

impl Coupling {
    /// Wraps a tensor whose last axis is the auxiliary variable. Needs at
    /// least one source axis besides `W`.
    pub fn new(pmf: JointPmf) -> Result<Self> {
        if pmf.n_vars() < 2 {
            return Err(DistError::EmptyKeepSet);
        }
        Ok(Self { pmf })
    }

    /// Builds `P(x) p(w|x)` from a source law and a row-stochastic matrix
    /// with one row per source cell.
    pub fn from_channel(source: &JointPmf, rows: &[Vec<f64>]) -> Result<Self> {
        let cells = source.spec.cells();
        if rows.len() != cells || rows.is_empty() {
            return Err(DistError::ShapeMismatch {
                expected: cells,
                got: rows.len(),
            });
        }
        let w = rows[0].len();
        let mut probs = Vec::with_capacity(cells * w);
        for (row, &p) in rows.iter().zip(source.probs()) {
            if row.len() != w {
                return Err(DistError::ShapeMismatch {
                    expected: w,
                    got: row.len(),
                });
            }
            probs.extend(row.iter().map(|&q| p * q));
        }
        let mut sizes = source.sizes().to_vec();
        sizes.push(w);
        Self::new(JointPmf::from_sizes(sizes, probs)?)
    }

    pub fn pmf(&self) -> &JointPmf {
        &self.pmf
    }

    pub fn n_sources(&self) -> usize {
        self.pmf.n_vars() - 1
    }

    pub fn w_size(&self) -> usize {
        *self.pmf.sizes().last().expect("coupling has a W axis")
    }

    pub fn w_axis(&self) -> usize {
        self.n_sources()
    }

    /// Marginal law of the sources.
    pub fn source(&self) -> JointPmf {
        let axes: Vec<usize> = (0..self.n_sources()).collect();
        self.pmf.marginalize(&axes).expect("source axes in range")
    }

    pub fn w_marginal(&self) -> Vec<f64> {
        self.pmf
            .marginalize(&[self.w_axis()])
            .expect("W axis in range")
            .probs
    }

    /// `I(X_1..X_N ; W)`.
    pub fn mutual_information(&self) -> f64 {
        let axes: Vec<usize> = (0..self.n_sources()).collect();
        self.pmf
            .mutual_information(&axes, &[self.w_axis()])
            .expect("valid axes")
    }

    /// `H(X_i | W)` for each source axis.
    pub fn conditional_entropies(&self) -> Vec<f64> {
        let w = self.w_axis();
        (0..self.n_sources())
            .map(|i| {
                self.pmf
                    .conditional_entropy(&[i], &[w])
                    .expect("valid axes")
            })
            .collect()
    }

    /// `H(X_1..X_N | W)`.
    pub fn joint_conditional_entropy(&self) -> f64 {
        let axes: Vec<usize> = (0..self.n_sources()).collect();
        self.pmf
            .conditional_entropy(&axes, &[self.w_axis()])
            .expect("valid axes")
    }
}

/// `T(X|W) = sum_i H(X_i|W) - H(X_1..X_N|W)`.
pub fn conditional_multi_information(c: &Coupling) -> f64 {
    c.conditional_entropies().iter().sum::<f64>() - c.joint_conditional_entropy()
}
