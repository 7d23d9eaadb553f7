//! Monte Carlo simulation of two-level superposition coding with
//! strong-typicality decoding, including indirect decoding of the common
//! message through satellite codewords.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{AuxChain, BoundError};
use crate::channel::BroadcastChannel3;
use crate::prob::{JointPmf, ProbError, ZERO_MASS};
use crate::sampling::rng_for;

/// Largest `n * R` accepted for any single rate.
pub const MAX_LOG_COUNT: f64 = 40.0;
/// Cap on stored codeword symbols (one byte each).
pub const MAX_CODEBOOK_SYMBOLS: usize = 1 << 27;
/// Draws per codeword before the closest-to-typical draw is accepted.
pub const MAX_REJECTIONS: usize = 1000;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid code specification: {0}")]
    Invalid(String),
    #[error("codeword count 2^{0:.1} exceeds the 2^{MAX_LOG_COUNT} limit")]
    Overflow(f64),
    #[error("codebook needs {0} symbols, above the {MAX_CODEBOOK_SYMBOLS} cap")]
    Memory(usize),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// Default typicality slack for blocklength `n`.
pub fn default_epsilon(n: usize) -> f64 {
    if n <= 300 {
        0.15
    } else {
        0.1
    }
}

#[derive(Debug, Clone)]
pub struct CodeSpec {
    pub channel: BroadcastChannel3,
    pub aux: AuxChain,
    pub r0: f64,
    pub s1: f64,
    pub s2: f64,
    pub n: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl CodeSpec {
    pub fn new(
        channel: BroadcastChannel3,
        aux: AuxChain,
        rates: [f64; 3],
        n: usize,
        epsilon: Option<f64>,
        seed: u64,
    ) -> Result<Self, SimError> {
        let spec = Self {
            channel,
            aux,
            r0: rates[0],
            s1: rates[1],
            s2: rates[2],
            n,
            epsilon: epsilon.unwrap_or_else(|| default_epsilon(n)),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !self.channel.is_multilevel() {
            return Err(SimError::Invalid("channel must be multilevel".into()));
        }
        if self.aux.sizes()[2] != self.channel.input_size() {
            return Err(SimError::Invalid("auxiliary input alphabet does not match the channel".into()));
        }
        if self.n == 0 {
            return Err(SimError::Invalid("blocklength must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(SimError::Invalid(format!("epsilon {} not in (0, 0.5)", self.epsilon)));
        }
        for r in [self.r0, self.s1, self.s2] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(SimError::Invalid(format!("rate {r}")));
            }
            let e = self.n as f64 * r;
            if e > MAX_LOG_COUNT {
                return Err(SimError::Overflow(e));
            }
        }
        let [m0, m1, m2] = self.counts();
        let symbols = (m0 + m0 * m1 + m0 * m1 * m2).saturating_mul(self.n);
        if symbols > MAX_CODEBOOK_SYMBOLS {
            return Err(SimError::Memory(symbols));
        }
        if self.aux.sizes().iter().chain(self.channel.output_sizes().iter()).any(|&s| s > 256) {
            return Err(SimError::Invalid("alphabets above 256 letters".into()));
        }
        Ok(())
    }

    /// `ceil(2^{nR})` for `(R0, S1, S2)`.
    pub fn counts(&self) -> [usize; 3] {
        [self.r0, self.s1, self.s2].map(|r| (self.n as f64 * r).exp2().ceil() as usize)
    }
}

/// Strong-typicality test against a fixed joint law: every cell's
/// empirical frequency within `eps * p` of `p`, and no mass on cells with
/// `p = 0`.
#[derive(Debug, Clone)]
pub struct TypicalityTest {
    strides: Vec<usize>,
    probs: Vec<f64>,
    eps: f64,
}

impl TypicalityTest {
    pub fn new(joint: &JointPmf, eps: f64) -> Self {
        let dims = joint.dims();
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        Self { strides, probs: joint.probs().to_vec(), eps }
    }

    fn counts(&self, seqs: &[&[u8]], buf: &mut Vec<u32>) {
        buf.clear();
        buf.resize(self.probs.len(), 0);
        let n = seqs[0].len();
        for i in 0..n {
            let mut idx = 0;
            for (s, st) in seqs.iter().zip(&self.strides) {
                idx += s[i] as usize * st;
            }
            buf[idx] += 1;
        }
    }

    /// Largest violation of the typicality condition (nonpositive iff
    /// typical).
    pub fn excess(&self, seqs: &[&[u8]], buf: &mut Vec<u32>) -> f64 {
        self.counts(seqs, buf);
        let n = seqs[0].len() as f64;
        let mut worst = f64::NEG_INFINITY;
        for (&c, &p) in buf.iter().zip(&self.probs) {
            let f = c as f64 / n;
            let e = if p <= ZERO_MASS {
                if c > 0 {
                    return f64::INFINITY;
                }
                f64::NEG_INFINITY
            } else {
                (f - p).abs() - self.eps * p
            };
            worst = worst.max(e);
        }
        worst
    }

    pub fn is_typical(&self, seqs: &[&[u8]], buf: &mut Vec<u32>) -> bool {
        self.excess(seqs, buf) <= 0.0
    }
}

fn cdf(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = row
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(l) = out.last_mut() {
        *l = f64::INFINITY;
    }
    out
}

fn draw<R: Rng + ?Sized>(rng: &mut R, cdf: &[f64]) -> u8 {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as u8
}

/// Codewords stored contiguously: `u1[m0]`, `u2[m0][s1]`, `x[m0][s1][s2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub n: usize,
    pub counts: [usize; 3],
    u1: Vec<u8>,
    u2: Vec<u8>,
    x: Vec<u8>,
    /// Words accepted without passing the typicality test.
    pub rejection_failures: usize,
}

impl Codebook {
    pub fn u1_word(&self, m0: usize) -> &[u8] {
        &self.u1[m0 * self.n..(m0 + 1) * self.n]
    }

    pub fn u2_word(&self, m0: usize, s1: usize) -> &[u8] {
        let i = m0 * self.counts[1] + s1;
        &self.u2[i * self.n..(i + 1) * self.n]
    }

    pub fn x_word(&self, m0: usize, s1: usize, s2: usize) -> &[u8] {
        let i = (m0 * self.counts[1] + s1) * self.counts[2] + s2;
        &self.x[i * self.n..(i + 1) * self.n]
    }

    /// The satellite codebook alone, as seen by an indirect decoder.
    pub fn u2_words(&self) -> SatelliteWords<'_> {
        SatelliteWords { words: &self.u2, per_cloud: self.counts[1], n: self.n }
    }
}

/// `U2` codewords keyed by `(m0, s1)`.
#[derive(Debug, Clone, Copy)]
pub struct SatelliteWords<'a> {
    words: &'a [u8],
    per_cloud: usize,
    n: usize,
}

impl SatelliteWords<'_> {
    pub fn clouds(&self) -> usize {
        self.words.len() / (self.n * self.per_cloud)
    }

    pub fn word(&self, m0: usize, s1: usize) -> &[u8] {
        let i = m0 * self.per_cloud + s1;
        &self.words[i * self.n..(i + 1) * self.n]
    }
}

/// Draws a word letter by letter from `rows[parent[i]]` until it is
/// jointly typical with its parent (or `MAX_REJECTIONS` is exhausted).
fn typical_word<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    parent: Option<&[u8]>,
    cdfs: &[Vec<f64>],
    test: &TypicalityTest,
    buf: &mut Vec<u32>,
) -> (Vec<u8>, bool) {
    let mut best = (f64::INFINITY, Vec::new());
    for _ in 0..MAX_REJECTIONS {
        let w: Vec<u8> = (0..n).map(|i| draw(rng, &cdfs[parent.map_or(0, |p| p[i] as usize)])).collect();
        let e = match parent {
            Some(p) => test.excess(&[p, &w], buf),
            None => test.excess(&[&w], buf),
        };
        if e <= 0.0 {
            return (w, true);
        }
        if e < best.0 || best.1.is_empty() {
            best = (e, w);
        }
    }
    (best.1, false)
}

fn rows_cdf(rows: usize, f: impl Fn(usize) -> Vec<f64>) -> Vec<Vec<f64>> {
    (0..rows).map(|r| cdf(&f(r))).collect()
}

pub fn generate_codebook(spec: &CodeSpec) -> Result<Codebook, SimError> {
    spec.validate()?;
    let n = spec.n;
    let counts = spec.counts();
    let [a, b, _] = spec.aux.sizes();
    let joint = spec.aux.joint_with(&spec.channel)?;
    let t1 = TypicalityTest::new(&joint.marginal(&[0])?, spec.epsilon);
    let t12 = TypicalityTest::new(&joint.marginal(&[0, 1])?, spec.epsilon);
    let t2x = TypicalityTest::new(&joint.marginal(&[1, 2])?, spec.epsilon);
    let c1 = vec![cdf(spec.aux.p_u1.probs())];
    let c2 = rows_cdf(a, |r| spec.aux.p_u2_given_u1.row(r).to_vec());
    let cx = rows_cdf(b, |r| spec.aux.p_x_given_u2.row(r).to_vec());
    let mut rng = rng_for(spec.seed, 0);
    let mut buf = Vec::new();
    let mut failures = 0;
    let (mut u1, mut u2, mut x) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..counts[0] {
        let (w1, ok) = typical_word(&mut rng, n, None, &c1, &t1, &mut buf);
        failures += usize::from(!ok);
        for _ in 0..counts[1] {
            let (w2, ok) = typical_word(&mut rng, n, Some(&w1), &c2, &t12, &mut buf);
            failures += usize::from(!ok);
            for _ in 0..counts[2] {
                let (wx, ok) = typical_word(&mut rng, n, Some(&w2), &cx, &t2x, &mut buf);
                failures += usize::from(!ok);
                x.extend(wx);
            }
            u2.extend(w2);
        }
        u1.extend(w1);
    }
    Ok(Codebook { n, counts, u1, u2, x, rejection_failures: failures })
}

/// Indirect decoding: every `(m0, s1)` whose satellite word is jointly
/// typical with `y2`. The common message is decoded iff all hits share
/// one `m0`.
pub fn indirect_hits(words: SatelliteWords<'_>, y2: &[u8], test: &TypicalityTest) -> Vec<(usize, usize)> {
    let mut buf = Vec::new();
    let mut hits = Vec::new();
    for m0 in 0..words.clouds() {
        for s1 in 0..words.per_cloud {
            if test.is_typical(&[words.word(m0, s1), y2], &mut buf) {
                hits.push((m0, s1));
            }
        }
    }
    hits
}

fn unique_m0(hits: &[(usize, usize)]) -> Option<usize> {
    let first = hits.first()?.0;
    hits.iter().all(|h| h.0 == first).then_some(first)
}

fn unique(mut it: impl Iterator<Item = usize>) -> Option<usize> {
    let first = it.next()?;
    it.next().is_none().then_some(first)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct TrialOutcome {
    y1: bool,
    y2: bool,
    y3: bool,
    false_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub n: usize,
    pub epsilon: f64,
    pub rates: [f64; 3],
    pub codeword_counts: [usize; 3],
    pub trials: usize,
    pub errors_y1: usize,
    pub errors_y2: usize,
    pub errors_y3: usize,
    /// Trials where any receiver erred.
    pub errors: usize,
    pub p_e: f64,
    pub ci95: [f64; 2],
    /// Mean number of jointly typical satellite words from wrong clouds
    /// at the indirect decoder.
    pub mean_false_pairs_y2: f64,
    pub rejection_failures: usize,
}

/// Wilson score interval.
pub fn wilson_interval(k: usize, n: usize) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let d = 1.0 + Z95 * Z95 / n;
    let centre = (p + Z95 * Z95 / (2.0 * n)) / d;
    let half = Z95 * (p * (1.0 - p) / n + Z95 * Z95 / (4.0 * n * n)).sqrt() / d;
    [(centre - half).max(0.0), (centre + half).min(1.0)]
}

pub fn simulate(spec: &CodeSpec, trials: usize) -> Result<SimResult, SimError> {
    let book = generate_codebook(spec)?;
    simulate_with(spec, &book, trials)
}

pub fn simulate_with(spec: &CodeSpec, book: &Codebook, trials: usize) -> Result<SimResult, SimError> {
    spec.validate()?;
    if book.counts != spec.counts() || book.n != spec.n {
        return Err(SimError::Invalid("codebook does not match the specification".into()));
    }
    let n = spec.n;
    let [m0s, m1s, m2s] = book.counts;
    let joint = spec.aux.joint_with(&spec.channel)?;
    let eps = spec.epsilon;
    // Axes of the joint: u1, u2, x, y1, y2, y3.
    let t13 = TypicalityTest::new(&joint.marginal(&[0, 5])?, eps);
    let t11 = TypicalityTest::new(&joint.marginal(&[0, 3])?, eps);
    let t121 = TypicalityTest::new(&joint.marginal(&[0, 1, 3])?, eps);
    let t12x1 = TypicalityTest::new(&joint.marginal(&[0, 1, 2, 3])?, eps);
    let t22 = TypicalityTest::new(&joint.marginal(&[1, 4])?, eps);
    let [_, o2, o3] = spec.channel.output_sizes();
    let ch_cdf: Vec<Vec<f64>> = (0..spec.channel.input_size()).map(|x| cdf(spec.channel.row(x))).collect();

    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(spec.seed, 1 + t as u64);
            let (m0, s1, s2) = (rng.random_range(0..m0s), rng.random_range(0..m1s), rng.random_range(0..m2s));
            let xw = book.x_word(m0, s1, s2);
            let (mut y1, mut y2, mut y3) = (vec![0u8; n], vec![0u8; n], vec![0u8; n]);
            for i in 0..n {
                let y = draw(&mut rng, &ch_cdf[xw[i] as usize]) as usize;
                y1[i] = (y / (o2 * o3)) as u8;
                y2[i] = (y / o3 % o2) as u8;
                y3[i] = (y % o3) as u8;
            }
            let mut buf = Vec::new();

            let d3 = unique((0..m0s).filter(|&m| t13.is_typical(&[book.u1_word(m), &y3], &mut buf)));

            let d1 = unique((0..m0s).filter(|&m| t11.is_typical(&[book.u1_word(m), &y1], &mut buf))).and_then(|a| {
                let u1w = book.u1_word(a);
                let b = unique((0..m1s).filter(|&s| t121.is_typical(&[u1w, book.u2_word(a, s), &y1], &mut buf)))?;
                let u2w = book.u2_word(a, b);
                let c = unique(
                    (0..m2s).filter(|&s| t12x1.is_typical(&[u1w, u2w, book.x_word(a, b, s), &y1], &mut buf)),
                )?;
                Some((a, b, c))
            });

            let hits = indirect_hits(book.u2_words(), &y2, &t22);
            let d2 = unique_m0(&hits);
            TrialOutcome {
                y1: d1 != Some((m0, s1, s2)),
                y2: d2 != Some(m0),
                y3: d3 != Some(m0),
                false_pairs: hits.iter().filter(|h| h.0 != m0).count(),
            }
        })
        .collect();

    let count = |f: fn(&TrialOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
    let errors = count(|o| o.y1 || o.y2 || o.y3);
    let false_pairs: usize = outcomes.iter().map(|o| o.false_pairs).sum();
    Ok(SimResult {
        n,
        epsilon: eps,
        rates: [spec.r0, spec.s1, spec.s2],
        codeword_counts: book.counts,
        trials,
        errors_y1: count(|o| o.y1),
        errors_y2: count(|o| o.y2),
        errors_y3: count(|o| o.y3),
        errors,
        p_e: if trials == 0 { 0.0 } else { errors as f64 / trials as f64 },
        ci95: wilson_interval(errors, trials),
        mean_false_pairs_y2: if trials == 0 { 0.0 } else { false_pairs as f64 / trials as f64 },
        rejection_failures: book.rejection_failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinOccupancy {
    pub bins: usize,
    pub filled: usize,
    pub fraction: f64,
}

/// Product-bin occupancy of Marton-style binning: `2^{nT2}` words drawn
/// typical for `p(u2)` and `2^{nT3}` for `p(u3)`, split round-robin into
/// `2^{nS2}` and `2^{nS3}` bins; a product bin is filled when it holds a
/// pair jointly typical for `p(u2,u3)`.
pub fn marton_bin_occupancy(
    p_u2u3: &JointPmf,
    n: usize,
    t: [f64; 2],
    s: [f64; 2],
    eps: f64,
    seed: u64,
) -> Result<BinOccupancy, SimError> {
    if p_u2u3.axis_count() != 2 || s[0] > t[0] || s[1] > t[1] || t.iter().chain(&s).any(|r| !(*r >= 0.0)) {
        return Err(SimError::Invalid("binning needs a 2-axis law and 0 <= S <= T".into()));
    }
    if n as f64 * (t[0] + t[1]) > 24.0 {
        return Err(SimError::Overflow(n as f64 * (t[0] + t[1])));
    }
    let count = |r: f64| (n as f64 * r).exp2().ceil() as usize;
    let (w2, w3, b2, b3) = (count(t[0]), count(t[1]), count(s[0]), count(s[1]));
    let mut rng = rng_for(seed, 0);
    let mut buf = Vec::new();
    let mut words = |axis: usize, k: usize| -> Result<Vec<Vec<u8>>, SimError> {
        let m = p_u2u3.marginal(&[axis])?;
        let test = TypicalityTest::new(&m, eps);
        let c = vec![cdf(m.probs())];
        Ok((0..k).map(|_| typical_word(&mut rng, n, None, &c, &test, &mut buf).0).collect())
    };
    let u2 = words(0, w2)?;
    let u3 = words(1, w3)?;
    let joint = TypicalityTest::new(p_u2u3, eps);
    let mut filled = vec![false; b2 * b3];
    let mut buf = Vec::new();
    for (i, a) in u2.iter().enumerate() {
        for (j, b) in u3.iter().enumerate() {
            let cell = (i % b2) * b3 + j % b3;
            if !filled[cell] && joint.is_typical(&[a, b], &mut buf) {
                filled[cell] = true;
            }
        }
    }
    let k = filled.iter().filter(|f| **f).count();
    Ok(BinOccupancy { bins: b2 * b3, filled: k, fraction: k as f64 / (b2 * b3) as f64 })
}
