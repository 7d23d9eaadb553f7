//! Finite-alphabet distributions, stochastic matrices and information
//! measures. Everything is reported in bits.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

/// Tolerance on total probability mass.
pub const PMF_TOL: f64 = 1e-9;
/// Masses at or below this are treated as exact zeros inside log terms.
pub const ZERO_MASS: f64 = 1e-12;
/// Negative information values down to `-MI_SLACK` are rounding noise.
pub const MI_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbError {
    #[error("invalid distribution: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("internal consistency violation: {0}")]
    Consistency(String),
}

fn validate_mass(probs: &mut [f64], what: &str) -> Result<(), ProbError> {
    if probs.is_empty() {
        return Err(ProbError::Invalid(format!("{what}: empty alphabet")));
    }
    let mut total = 0.0;
    for p in probs.iter_mut() {
        if !p.is_finite() {
            return Err(ProbError::Invalid(format!("{what}: non-finite entry")));
        }
        if *p < 0.0 {
            if *p < -ZERO_MASS {
                return Err(ProbError::Invalid(format!("{what}: negative entry {p}")));
            }
            *p = 0.0;
        }
        total += *p;
    }
    if (total - 1.0).abs() > PMF_TOL {
        return Err(ProbError::Invalid(format!("{what}: total mass {total} is not 1")));
    }
    Ok(())
}

/// `-sum p log2 p` over a mass vector, with `0 log 0 = 0`.
pub fn entropy_of_masses(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > ZERO_MASS)
        .map(|&p| -p * p.log2())
        .sum()
}

fn clamp_info(value: f64, what: &str) -> Result<f64, ProbError> {
    if value < -MI_SLACK {
        return Err(ProbError::Consistency(format!("{what} = {value} < 0")));
    }
    Ok(value.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinitePmf {
    probs: Vec<f64>,
}

impl FinitePmf {
    pub fn new(mut probs: Vec<f64>) -> Result<Self, ProbError> {
        validate_mass(&mut probs, "pmf")?;
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform pmf over an empty alphabet");
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn point(n: usize, at: usize) -> Self {
        assert!(at < n, "point mass outside the alphabet");
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    /// `lambda * a + (1 - lambda) * b`.
    pub fn mix(lambda: f64, a: &Self, b: &Self) -> Result<Self, ProbError> {
        if a.alphabet_size() != b.alphabet_size() {
            return Err(ProbError::Dimension("mixing pmfs of different sizes".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(ProbError::Invalid(format!("mixing weight {lambda}")));
        }
        let probs = a
            .probs
            .iter()
            .zip(&b.probs)
            .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
            .collect();
        Self::new(probs)
    }
}

pub fn entropy(p: &FinitePmf) -> f64 {
    entropy_of_masses(&p.probs)
}

/// Dense joint table, row-major with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointPmf {
    dims: Vec<usize>,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(dims: Vec<usize>, mut probs: Vec<f64>) -> Result<Self, ProbError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(ProbError::Dimension(format!("bad axis sizes {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != probs.len() {
            return Err(ProbError::Dimension(format!(
                "table has {} entries, axes {dims:?} need {len}",
                probs.len()
            )));
        }
        validate_mass(&mut probs, "joint pmf")?;
        Ok(Self { dims, probs })
    }

    pub fn from_pmf(p: &FinitePmf) -> Self {
        Self { dims: vec![p.alphabet_size()], probs: p.probs.clone() }
    }

    /// Joint of an input and the output of `channel` driven by it.
    pub fn from_input_and_channel(
        input: &FinitePmf,
        channel: &StochasticMatrix,
    ) -> Result<Self, ProbError> {
        if input.alphabet_size() != channel.rows() {
            return Err(ProbError::Dimension(format!(
                "input size {} vs channel rows {}",
                input.alphabet_size(),
                channel.rows()
            )));
        }
        let mut probs = Vec::with_capacity(channel.rows() * channel.cols());
        for (x, &px) in input.probs.iter().enumerate() {
            probs.extend(channel.row(x).iter().map(|w| px * w));
        }
        Self::new(vec![channel.rows(), channel.cols()], probs)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn axis_count(&self) -> usize {
        self.dims.len()
    }

    /// Marginal over `axes`, laid out in the order given.
    pub fn marginal(&self, axes: &[usize]) -> Result<JointPmf, ProbError> {
        let mut seen = vec![false; self.dims.len()];
        for &a in axes {
            if a >= self.dims.len() || seen[a] {
                return Err(ProbError::Dimension(format!("bad marginal axes {axes:?}")));
            }
            seen[a] = true;
        }
        if axes.is_empty() {
            return Err(ProbError::Dimension("marginal over no axes".into()));
        }
        let out_dims: Vec<usize> = axes.iter().map(|&a| self.dims[a]).collect();
        let mut strides = vec![0usize; self.dims.len()];
        let mut s = 1;
        for (k, &a) in axes.iter().enumerate().rev() {
            strides[a] = s;
            s *= out_dims[k];
        }
        let probs = accumulate(&self.dims, &self.probs, &strides, s);
        Ok(JointPmf { dims: out_dims, probs })
    }

    /// Entropy of the marginal over `axes` (bits).
    pub fn entropy_of(&self, axes: &[usize]) -> Result<f64, ProbError> {
        if axes.is_empty() {
            return Ok(0.0);
        }
        Ok(entropy_of_masses(self.marginal(axes)?.probs()))
    }

    pub fn to_pmf(&self) -> Result<FinitePmf, ProbError> {
        if self.dims.len() != 1 {
            return Err(ProbError::Dimension("table has more than one axis".into()));
        }
        Ok(FinitePmf { probs: self.probs.clone() })
    }
}

/// Sums `probs` into a table of `out_len` cells, where source cell with
/// multi-index `i` lands at `sum_k i_k * strides[k]`.
fn accumulate(dims: &[usize], probs: &[f64], strides: &[usize], out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_len];
    let mut idx = vec![0usize; dims.len()];
    let mut offset = 0usize;
    let last = dims.len() - 1;
    for &p in probs {
        out[offset] += p;
        let mut k = last;
        loop {
            idx[k] += 1;
            offset += strides[k];
            if idx[k] < dims[k] {
                break;
            }
            offset -= strides[k] * dims[k];
            idx[k] = 0;
            if k == 0 {
                break;
            }
            k -= 1;
        }
    }
    out
}

/// Memoised marginal entropies of one joint table, keyed by axis bitmask.
///
/// Every information quantity of a bound evaluation is read off the same
/// table through this cache.
pub struct EntropyCache<'a> {
    joint: &'a JointPmf,
    cache: HashMap<u64, f64>,
}

impl<'a> EntropyCache<'a> {
    pub fn new(joint: &'a JointPmf) -> Self {
        assert!(joint.axis_count() <= 64);
        Self { joint, cache: HashMap::new() }
    }

    pub fn mask(axes: &[usize]) -> u64 {
        axes.iter().fold(0u64, |m, &a| m | (1u64 << a))
    }

    pub fn h(&mut self, mask: u64) -> f64 {
        if mask == 0 {
            return 0.0;
        }
        if let Some(&v) = self.cache.get(&mask) {
            return v;
        }
        let axes: Vec<usize> = (0..self.joint.axis_count())
            .filter(|a| mask & (1u64 << a) != 0)
            .collect();
        let v = self
            .joint
            .entropy_of(&axes)
            .expect("axes derived from the table itself");
        self.cache.insert(mask, v);
        v
    }

    /// `I(A;B|C)` for axis sets given as masks.
    pub fn cmi(&mut self, a: u64, b: u64, c: u64) -> Result<f64, ProbError> {
        let v = self.h(a | c) + self.h(b | c) - self.h(a | b | c) - self.h(c);
        clamp_info(v, "conditional mutual information")
    }

    pub fn mi(&mut self, a: u64, b: u64) -> Result<f64, ProbError> {
        self.cmi(a, b, 0)
    }
}

/// `I(A;B)` of a two-axis joint.
pub fn mutual_information(joint: &JointPmf) -> Result<f64, ProbError> {
    if joint.axis_count() != 2 {
        return Err(ProbError::Dimension(format!(
            "mutual information needs 2 axes, got {}",
            joint.axis_count()
        )));
    }
    let v = joint.entropy_of(&[0])? + joint.entropy_of(&[1])? - entropy_of_masses(&joint.probs);
    clamp_info(v, "mutual information")
}

/// `I(A;B|C)` of a three-axis joint over (A, B, C).
pub fn conditional_mi(joint: &JointPmf) -> Result<f64, ProbError> {
    if joint.axis_count() != 3 {
        return Err(ProbError::Dimension(format!(
            "conditional mutual information needs 3 axes, got {}",
            joint.axis_count()
        )));
    }
    let v = joint.entropy_of(&[0, 2])? + joint.entropy_of(&[1, 2])?
        - entropy_of_masses(&joint.probs)
        - joint.entropy_of(&[2])?;
    clamp_info(v, "conditional mutual information")
}

/// Row-stochastic transition matrix `p(out | in)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochasticMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: usize, cols: usize, mut entries: Vec<f64>) -> Result<Self, ProbError> {
        if rows == 0 || cols == 0 {
            return Err(ProbError::Dimension("matrix with an empty side".into()));
        }
        if entries.len() != rows * cols {
            return Err(ProbError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        for (r, row) in entries.chunks_mut(cols).enumerate() {
            validate_mass(row, &format!("row {r}"))?;
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ProbError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(ProbError::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, entries }
    }

    /// Deterministic map `in -> f[in]`.
    pub fn deterministic(f: &[usize], cols: usize) -> Result<Self, ProbError> {
        let mut entries = vec![0.0; f.len() * cols];
        for (i, &j) in f.iter().enumerate() {
            if j >= cols {
                return Err(ProbError::Dimension(format!("image {j} outside {cols} outputs")));
            }
            entries[i * cols + j] = 1.0;
        }
        Self::new(f.len(), cols, entries)
    }

    /// Binary erasure channel `{0,1} -> {0,E,1}`.
    pub fn bec(erasure: f64) -> Result<Self, ProbError> {
        Self::new(2, 3, vec![1.0 - erasure, erasure, 0.0, 0.0, erasure, 1.0 - erasure])
    }

    /// Further erasure of an already erasure-coded letter: `{0,E,1} -> {0,E,1}`,
    /// keeping `E` and erasing each bit with probability `erasure`.
    pub fn erasure_lift(erasure: f64) -> Result<Self, ProbError> {
        Self::new(
            3,
            3,
            vec![
                1.0 - erasure,
                erasure,
                0.0,
                0.0,
                1.0,
                0.0,
                0.0,
                erasure,
                1.0 - erasure,
            ],
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// True when every entry is 0 or 1 within `ZERO_MASS`.
    pub fn is_deterministic(&self) -> bool {
        self.entries
            .iter()
            .all(|&p| p <= ZERO_MASS || (1.0 - p).abs() <= ZERO_MASS)
    }
}

/// Matrix product: first `first`, then `second`.
pub fn compose_channels(
    first: &StochasticMatrix,
    second: &StochasticMatrix,
) -> Result<StochasticMatrix, ProbError> {
    if first.cols != second.rows {
        return Err(ProbError::Dimension(format!(
            "cannot feed {} outputs into a channel with {} inputs",
            first.cols, second.rows
        )));
    }
    let mut entries = vec![0.0; first.rows * second.cols];
    for i in 0..first.rows {
        for k in 0..first.cols {
            let a = first.get(i, k);
            if a == 0.0 {
                continue;
            }
            for j in 0..second.cols {
                entries[i * second.cols + j] += a * second.get(k, j);
            }
        }
    }
    StochasticMatrix::new(first.rows, second.cols, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn entropy_examples() {
        assert!(close(entropy(&FinitePmf::new(vec![0.5, 0.5]).unwrap()), 1.0, 1e-12));
        assert!(close(entropy(&FinitePmf::new(vec![1.0, 0.0]).unwrap()), 0.0, 1e-12));
        let h = entropy(&FinitePmf::new(vec![0.25, 0.5, 0.25]).unwrap());
        let split = entropy(&FinitePmf::uniform(2)) + 0.5 * entropy(&FinitePmf::uniform(2));
        assert!(close(h, 1.5, 1e-12) && close(h, split, 1e-12));
    }

    #[test]
    fn rejects_bad_pmfs() {
        assert!(FinitePmf::new(vec![0.6, 0.6]).is_err());
        assert!(FinitePmf::new(vec![1.1, -0.1]).is_err());
        assert!(FinitePmf::new(vec![]).is_err());
        assert!(FinitePmf::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let indep = JointPmf::new(vec![2, 2], vec![0.25; 4]).unwrap();
        assert!(close(mutual_information(&indep).unwrap(), 0.0, 1e-12));
        let copy = JointPmf::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(close(mutual_information(&copy).unwrap(), 1.0, 1e-12));
        let bec = JointPmf::from_input_and_channel(
            &FinitePmf::uniform(2),
            &StochasticMatrix::bec(0.5).unwrap(),
        )
        .unwrap();
        assert!(close(mutual_information(&bec).unwrap(), 0.5, 1e-12));
        assert!(matches!(
            mutual_information(&JointPmf::new(vec![2, 2, 1], vec![0.25; 4]).unwrap()),
            Err(ProbError::Dimension(_))
        ));
    }

    #[test]
    fn conditional_mi_with_constant_condition() {
        let j = JointPmf::new(vec![2, 2, 1], vec![0.4, 0.1, 0.2, 0.3]).unwrap();
        let pair = j.marginal(&[0, 1]).unwrap();
        assert!(close(
            conditional_mi(&j).unwrap(),
            mutual_information(&pair).unwrap(),
            1e-12
        ));
    }

    #[test]
    fn conditional_independence_gives_zero() {
        // A and B independent given C with different laws per c.
        let mut probs = vec![0.0; 8];
        let pc = [0.3, 0.7];
        let pa = [[0.2, 0.8], [0.6, 0.4]];
        let pb = [[0.5, 0.5], [0.9, 0.1]];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    probs[a * 4 + b * 2 + c] = pc[c] * pa[c][a] * pb[c][b];
                }
            }
        }
        let j = JointPmf::new(vec![2, 2, 2], probs).unwrap();
        assert!(close(conditional_mi(&j).unwrap(), 0.0, 1e-12));
    }

    #[test]
    fn marginal_respects_axis_order() {
        let j = JointPmf::new(vec![2, 3], vec![0.1, 0.2, 0.0, 0.3, 0.15, 0.25]).unwrap();
        let t = j.marginal(&[1, 0]).unwrap();
        assert_eq!(t.dims(), &[3, 2]);
        assert!(close(t.probs()[1], 0.3, 1e-15));
        assert!(close(t.probs()[4], 0.0, 1e-15));
        assert!(j.marginal(&[0, 0]).is_err());
    }

    #[test]
    fn compose_examples() {
        let m = StochasticMatrix::bec(0.3).unwrap();
        let id = StochasticMatrix::identity(2);
        assert_eq!(compose_channels(&id, &m).unwrap(), m);
        let chain = compose_channels(
            &StochasticMatrix::bec(0.5).unwrap(),
            &StochasticMatrix::erasure_lift(2.0 / 3.0).unwrap(),
        )
        .unwrap();
        let target = StochasticMatrix::bec(5.0 / 6.0).unwrap();
        for (a, b) in chain.entries().iter().zip(target.entries()) {
            assert!(close(*a, *b, 1e-12));
        }
        let (a, b) = (0.2, 0.35);
        let lifted = compose_channels(
            &StochasticMatrix::bec(a).unwrap(),
            &StochasticMatrix::erasure_lift(b).unwrap(),
        )
        .unwrap();
        assert!(close(lifted.get(0, 1), 1.0 - (1.0 - a) * (1.0 - b), 1e-12));
        assert!(compose_channels(&m, &m).is_err());
    }

    #[test]
    fn entropy_cache_matches_direct_computation() {
        let j = JointPmf::new(vec![2, 2, 2], vec![0.1, 0.05, 0.2, 0.15, 0.05, 0.1, 0.25, 0.1])
            .unwrap();
        let mut cache = EntropyCache::new(&j);
        let direct = conditional_mi(&j).unwrap();
        let cached = cache.cmi(1, 2, 4).unwrap();
        assert!(close(direct, cached, 1e-12));
    }
}
