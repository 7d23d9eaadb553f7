//! Rate-region formulas instantiated at fixed auxiliary distributions, and
//! the search over auxiliaries that turns them into regions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::BroadcastChannel3;
use crate::prob::{EntropyCache, FinitePmf, JointPmf, ProbError, StochasticMatrix, ZERO_MASS};
use crate::region::{
    FrontierAccumulator, GeometryError, LinearRateInequality, PreparedSystem,
    RateConstraintSystem, RegionApprox,
};
use crate::sampling;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} is only defined for multilevel channels")]
    Structure(&'static str),
    #[error("unknown bound id `{0}`")]
    UnknownBound(String),
    #[error("cardinality cap exceeded: {0}")]
    Caps(String),
    #[error("invalid search configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundId {
    Km3,
    Bzt,
    Thm1,
    Prop5,
    Prop6,
    Thm2,
    Cor1,
}

/// Shape of the auxiliary distribution a bound is a union over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxShape {
    /// One auxiliary `U`, stored as a chain with `U2 = U1`.
    Single,
    Chain,
    Triple,
}

impl BoundId {
    pub const ALL: [BoundId; 7] = [
        BoundId::Km3,
        BoundId::Bzt,
        BoundId::Thm1,
        BoundId::Prop5,
        BoundId::Prop6,
        BoundId::Thm2,
        BoundId::Cor1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundId::Km3 => "km3",
            BoundId::Bzt => "bzt",
            BoundId::Thm1 => "thm1",
            BoundId::Prop5 => "prop5",
            BoundId::Prop6 => "prop6",
            BoundId::Thm2 => "thm2",
            BoundId::Cor1 => "cor1",
        }
    }

    pub fn dim(self) -> usize {
        if self == BoundId::Thm2 {
            3
        } else {
            2
        }
    }

    pub fn shape(self) -> AuxShape {
        match self {
            BoundId::Km3 | BoundId::Bzt | BoundId::Cor1 => AuxShape::Single,
            BoundId::Thm1 => AuxShape::Chain,
            BoundId::Prop5 | BoundId::Prop6 | BoundId::Thm2 => AuxShape::Triple,
        }
    }

    pub fn requires_multilevel(self) -> bool {
        matches!(self, BoundId::Bzt | BoundId::Thm1)
    }
}

impl fmt::Display for BoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundId {
    type Err = BoundError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BoundId::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| BoundError::UnknownBound(s.to_string()))
    }
}

/// `p(u1) p(u2|u1) p(x|u2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxChain {
    pub p_u1: FinitePmf,
    pub p_u2_given_u1: StochasticMatrix,
    pub p_x_given_u2: StochasticMatrix,
}

impl AuxChain {
    pub fn new(
        p_u1: FinitePmf,
        p_u2_given_u1: StochasticMatrix,
        p_x_given_u2: StochasticMatrix,
    ) -> Result<Self, BoundError> {
        if p_u2_given_u1.rows() != p_u1.alphabet_size() || p_x_given_u2.rows() != p_u2_given_u1.cols()
        {
            return Err(BoundError::Dimension(format!(
                "|U1|={}, p(u2|u1) is {}x{}, p(x|u2) is {}x{}",
                p_u1.alphabet_size(),
                p_u2_given_u1.rows(),
                p_u2_given_u1.cols(),
                p_x_given_u2.rows(),
                p_x_given_u2.cols()
            )));
        }
        Ok(Self { p_u1, p_u2_given_u1, p_x_given_u2 })
    }

    /// A single auxiliary `U` (read as `U1`, with `U2 = U1`).
    pub fn single(p_u: FinitePmf, p_x_given_u: StochasticMatrix) -> Result<Self, BoundError> {
        let n = p_u.alphabet_size();
        Self::new(p_u, StochasticMatrix::identity(n), p_x_given_u)
    }

    /// Factors a Markov joint `p(u1,u2,x)` (row-major, `x` fastest).
    pub fn from_joint(dims: [usize; 3], probs: &[f64]) -> Result<Self, BoundError> {
        let [a, b, c] = dims;
        if probs.len() != a * b * c {
            return Err(BoundError::Dimension("joint table size".into()));
        }
        let mut p_u1 = vec![0.0; a];
        let mut p_u1u2 = vec![0.0; a * b];
        let mut p_u2x = vec![0.0; b * c];
        for u1 in 0..a {
            for u2 in 0..b {
                for x in 0..c {
                    let p = probs[(u1 * b + u2) * c + x];
                    p_u1[u1] += p;
                    p_u1u2[u1 * b + u2] += p;
                    p_u2x[u2 * c + x] += p;
                }
            }
        }
        let m12 = conditional_rows(&p_u1u2, a, b);
        let mx = conditional_rows(&p_u2x, b, c);
        Self::new(FinitePmf::new(p_u1)?, StochasticMatrix::new(a, b, m12)?, StochasticMatrix::new(b, c, mx)?)
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.p_u1.alphabet_size(), self.p_u2_given_u1.cols(), self.p_x_given_u2.cols()]
    }

    /// `p(u1,u2,x)`, `x` fastest.
    pub fn joint_aux(&self) -> Vec<f64> {
        let [a, b, c] = self.sizes();
        let mut out = vec![0.0; a * b * c];
        for u1 in 0..a {
            let p1 = self.p_u1.probs()[u1];
            for u2 in 0..b {
                let p12 = p1 * self.p_u2_given_u1.get(u1, u2);
                for x in 0..c {
                    out[(u1 * b + u2) * c + x] = p12 * self.p_x_given_u2.get(u2, x);
                }
            }
        }
        out
    }

    pub fn input_pmf(&self) -> FinitePmf {
        let c = self.sizes()[2];
        let mut px = vec![0.0; c];
        for (i, p) in self.joint_aux().iter().enumerate() {
            px[i % c] += p;
        }
        FinitePmf::new(px).expect("marginal of a valid joint")
    }

    /// Full joint over `(u1, u2, x, y1, y2, y3)`.
    pub fn joint_with(&self, ch: &BroadcastChannel3) -> Result<JointPmf, BoundError> {
        let [a, b, c] = self.sizes();
        if c != ch.input_size() {
            return Err(BoundError::Dimension(format!(
                "auxiliary input alphabet {c} vs channel input {}",
                ch.input_size()
            )));
        }
        let [n1, n2, n3] = ch.output_sizes();
        let aux = self.joint_aux();
        let mut dims = vec![a, b, c];
        dims.extend([n1, n2, n3]);
        Ok(JointPmf::new(dims, attach_channel(&aux, c, ch))?)
    }

    /// The same chain with zero-mass auxiliary letters removed.
    pub fn compressed(&self) -> Result<Self, BoundError> {
        let [a, b, c] = self.sizes();
        let (dims, probs) = compress_axes(&[a, b, c], &self.joint_aux(), 2);
        Self::from_joint([dims[0], dims[1], dims[2]], &probs)
    }
}

/// `p(u1) p(v2,v3|u1) p(x|u1,v2,v3)` with `U2 = (U1,V2)` and `U3 = (U1,V3)`,
/// so both `U1 -> U2 -> (U3,X)` and `U1 -> U3 -> (U2,X)` hold by
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxTriple {
    pub p_u1: FinitePmf,
    pub v_sizes: [usize; 2],
    /// Rows `u1`, columns `v2 * |V3| + v3`.
    pub p_v2v3_given_u1: StochasticMatrix,
    /// Rows `(u1 * |V2| + v2) * |V3| + v3`.
    pub p_x_given_u1v2v3: StochasticMatrix,
}

impl AuxTriple {
    pub fn new(
        p_u1: FinitePmf,
        v_sizes: [usize; 2],
        p_v2v3_given_u1: StochasticMatrix,
        p_x_given_u1v2v3: StochasticMatrix,
    ) -> Result<Self, BoundError> {
        let a = p_u1.alphabet_size();
        let v = v_sizes[0] * v_sizes[1];
        if p_v2v3_given_u1.rows() != a || p_v2v3_given_u1.cols() != v || p_x_given_u1v2v3.rows() != a * v
        {
            return Err(BoundError::Dimension(format!(
                "|U1|={a}, |V2|x|V3|={v_sizes:?}, tables {}x{} and {}x{}",
                p_v2v3_given_u1.rows(),
                p_v2v3_given_u1.cols(),
                p_x_given_u1v2v3.rows(),
                p_x_given_u1v2v3.cols()
            )));
        }
        Ok(Self { p_u1, v_sizes, p_v2v3_given_u1, p_x_given_u1v2v3 })
    }

    /// Factors an arbitrary joint `p(u1,v2,v3,x)` (`x` fastest).
    pub fn from_joint(dims: [usize; 4], probs: &[f64]) -> Result<Self, BoundError> {
        let [a, b, c, d] = dims;
        if probs.len() != a * b * c * d {
            return Err(BoundError::Dimension("joint table size".into()));
        }
        let v = b * c;
        let mut p_u1 = vec![0.0; a];
        let mut p_uv = vec![0.0; a * v];
        for i in 0..a * v {
            let s: f64 = probs[i * d..(i + 1) * d].iter().sum();
            p_uv[i] = s;
            p_u1[i / v] += s;
        }
        let mv = conditional_rows(&p_uv, a, v);
        let mx = conditional_rows(probs, a * v, d);
        Self::new(
            FinitePmf::new(p_u1)?,
            [b, c],
            StochasticMatrix::new(a, v, mv)?,
            StochasticMatrix::new(a * v, d, mx)?,
        )
    }

    /// `U2 = (U1, chain U2)` and `U3 = U1`.
    pub fn from_chain_u3_eq_u1(chain: &AuxChain) -> Result<Self, BoundError> {
        let [a, b, c] = chain.sizes();
        Self::from_joint([a, b, 1, c], &chain.joint_aux())
    }

    /// Every auxiliary constant.
    pub fn constant(p_x: &FinitePmf) -> Self {
        Self::from_joint([1, 1, 1, p_x.alphabet_size()], p_x.probs()).expect("valid pmf")
    }

    pub fn sizes(&self) -> [usize; 4] {
        [self.p_u1.alphabet_size(), self.v_sizes[0], self.v_sizes[1], self.p_x_given_u1v2v3.cols()]
    }

    /// `p(u1,v2,v3,x)`, `x` fastest.
    pub fn joint_aux(&self) -> Vec<f64> {
        let [a, b, c, d] = self.sizes();
        let v = b * c;
        let mut out = vec![0.0; a * v * d];
        for u1 in 0..a {
            let p1 = self.p_u1.probs()[u1];
            for vv in 0..v {
                let pv = p1 * self.p_v2v3_given_u1.get(u1, vv);
                let row = u1 * v + vv;
                for x in 0..d {
                    out[row * d + x] = pv * self.p_x_given_u1v2v3.get(row, x);
                }
            }
        }
        out
    }

    pub fn input_pmf(&self) -> FinitePmf {
        let d = self.sizes()[3];
        let mut px = vec![0.0; d];
        for (i, p) in self.joint_aux().iter().enumerate() {
            px[i % d] += p;
        }
        FinitePmf::new(px).expect("marginal of a valid joint")
    }

    /// Full joint over `(u1, v2, v3, x, y1, y2, y3)`.
    pub fn joint_with(&self, ch: &BroadcastChannel3) -> Result<JointPmf, BoundError> {
        let [a, b, c, d] = self.sizes();
        if d != ch.input_size() {
            return Err(BoundError::Dimension(format!(
                "auxiliary input alphabet {d} vs channel input {}",
                ch.input_size()
            )));
        }
        let [n1, n2, n3] = ch.output_sizes();
        Ok(JointPmf::new(vec![a, b, c, d, n1, n2, n3], attach_channel(&self.joint_aux(), d, ch))?)
    }

    /// The chain `U1 -> U2 = (U1,V2) -> X`.
    pub fn induced_chain(&self) -> Result<AuxChain, BoundError> {
        let [a, b, c, d] = self.sizes();
        let j = self.joint_aux();
        let mut out = vec![0.0; a * (a * b) * d];
        for u1 in 0..a {
            for v2 in 0..b {
                for v3 in 0..c {
                    for x in 0..d {
                        let u2 = u1 * b + v2;
                        out[(u1 * a * b + u2) * d + x] += j[((u1 * b + v2) * c + v3) * d + x];
                    }
                }
            }
        }
        AuxChain::from_joint([a, a * b, d], &out)?.compressed()
    }

    pub fn compressed(&self) -> Result<Self, BoundError> {
        let s = self.sizes();
        let (dims, probs) = compress_axes(&s, &self.joint_aux(), 3);
        Self::from_joint([dims[0], dims[1], dims[2], dims[3]], &probs)
    }
}

/// Normalises each row of a nonnegative table; zero rows become uniform.
fn conditional_rows(table: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &table[r * cols..(r + 1) * cols];
        let s: f64 = row.iter().sum();
        for c in 0..cols {
            out[r * cols + c] = if s > 0.0 { row[c] / s } else { 1.0 / cols as f64 };
        }
    }
    out
}

/// Drops zero-mass letters on the first `axes` axes of a joint table.
fn compress_axes(dims: &[usize], probs: &[f64], axes: usize) -> (Vec<usize>, Vec<f64>) {
    let strides: Vec<usize> = (0..dims.len()).map(|i| dims[i + 1..].iter().product()).collect();
    let mut keep: Vec<Vec<usize>> = Vec::new();
    for ax in 0..dims.len() {
        if ax >= axes {
            keep.push((0..dims[ax]).collect());
            continue;
        }
        let mut mass = vec![0.0; dims[ax]];
        for (i, p) in probs.iter().enumerate() {
            mass[(i / strides[ax]) % dims[ax]] += p;
        }
        let k: Vec<usize> = (0..dims[ax]).filter(|&l| mass[l] > ZERO_MASS).collect();
        keep.push(if k.is_empty() { vec![0] } else { k });
    }
    let new_dims: Vec<usize> = keep.iter().map(|k| k.len()).collect();
    let total: usize = new_dims.iter().product();
    let mut out = vec![0.0; total];
    let mut idx = vec![0usize; dims.len()];
    for slot in out.iter_mut() {
        let src: usize = idx.iter().enumerate().map(|(ax, &i)| keep[ax][i] * strides[ax]).sum();
        *slot = probs[src];
        for ax in (0..dims.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < new_dims[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= s);
    (new_dims, out)
}

/// Multiplies `p(aux..., x)` (x fastest, alphabet `nx`) by the channel law.
fn attach_channel(aux: &[f64], nx: usize, ch: &BroadcastChannel3) -> Vec<f64> {
    let out: usize = ch.output_sizes().iter().product();
    let mut probs = vec![0.0; aux.len() * out];
    for (i, &p) in aux.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let row = ch.row(i % nx);
        let dst = &mut probs[i * out..(i + 1) * out];
        for (d, w) in dst.iter_mut().zip(row) {
            *d = p * w;
        }
    }
    probs
}

/// Information quantities of an `AuxChain` on a channel, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainInfo {
    pub u1_y1: f64,
    pub u1_y2: f64,
    pub u1_y3: f64,
    pub u2_y2: f64,
    pub x_y1: f64,
    pub x_y2: f64,
    pub x_y1_given_u1: f64,
    pub x_y1_given_u2: f64,
    pub x_y2_given_u1: f64,
}

impl ChainInfo {
    pub fn compute(chain: &AuxChain, ch: &BroadcastChannel3) -> Result<Self, BoundError> {
        let joint = chain.joint_with(ch)?;
        let mut c = EntropyCache::new(&joint);
        let m = EntropyCache::mask;
        let (u1, u2, x, y1, y2, y3) = (m(&[0]), m(&[1]), m(&[2]), m(&[3]), m(&[4]), m(&[5]));
        Ok(Self {
            u1_y1: c.mi(u1, y1)?,
            u1_y2: c.mi(u1, y2)?,
            u1_y3: c.mi(u1, y3)?,
            u2_y2: c.mi(u2, y2)?,
            x_y1: c.mi(x, y1)?,
            x_y2: c.mi(x, y2)?,
            x_y1_given_u1: c.cmi(x, y1, u1)?,
            x_y1_given_u2: c.cmi(x, y1, u2)?,
            x_y2_given_u1: c.cmi(x, y2, u1)?,
        })
    }
}

/// Information quantities of an `AuxTriple` on a channel, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripleInfo {
    pub u1_y1: f64,
    pub u1_y3: f64,
    pub u2_y2: f64,
    pub u3_y3: f64,
    pub u2_u3_given_u1: f64,
    pub x_y1: f64,
    pub x_y2: f64,
    pub x_y1_given_u1: f64,
    pub x_y1_given_u2: f64,
    pub x_y1_given_u3: f64,
    pub x_y1_given_u2u3: f64,
    pub x_y2_given_u3: f64,
    pub u2_y2_given_u1: f64,
    pub u2_y1_given_u1: f64,
    pub u3_y1_given_u1: f64,
    pub u2_u3_given_y1u1: f64,
}

impl TripleInfo {
    pub fn compute(t: &AuxTriple, ch: &BroadcastChannel3) -> Result<Self, BoundError> {
        let joint = t.joint_with(ch)?;
        let mut c = EntropyCache::new(&joint);
        let m = EntropyCache::mask;
        let u1 = m(&[0]);
        let u2 = m(&[0, 1]);
        let u3 = m(&[0, 2]);
        let (x, y1, y2, y3) = (m(&[3]), m(&[4]), m(&[5]), m(&[6]));
        // U2 and U3 share U1, so conditioning on U1 only touches V2, V3.
        let (v2, v3) = (m(&[1]), m(&[2]));
        Ok(Self {
            u1_y1: c.mi(u1, y1)?,
            u1_y3: c.mi(u1, y3)?,
            u2_y2: c.mi(u2, y2)?,
            u3_y3: c.mi(u3, y3)?,
            u2_u3_given_u1: c.cmi(v2, v3, u1)?,
            x_y1: c.mi(x, y1)?,
            x_y2: c.mi(x, y2)?,
            x_y1_given_u1: c.cmi(x, y1, u1)?,
            x_y1_given_u2: c.cmi(x, y1, u2)?,
            x_y1_given_u3: c.cmi(x, y1, u3)?,
            x_y1_given_u2u3: c.cmi(x, y1, u2 | u3)?,
            x_y2_given_u3: c.cmi(x, y2, u3)?,
            u2_y2_given_u1: c.cmi(v2, y2, u1)?,
            u2_y1_given_u1: c.cmi(v2, y1, u1)?,
            u3_y1_given_u1: c.cmi(v3, y1, u1)?,
            u2_u3_given_y1u1: c.cmi(v2, v3, y1 | u1)?,
        })
    }

    /// Value of a named information symbol as used by symbolic systems.
    pub fn symbol(&self, name: &str) -> Option<f64> {
        Some(match name {
            "I(U2;Y2)" => self.u2_y2,
            "I(U3;Y3)" => self.u3_y3,
            "I(U2;U3|U1)" => self.u2_u3_given_u1,
            "I(X;Y1)" => self.x_y1,
            "I(X;Y1|U1)" => self.x_y1_given_u1,
            "I(X;Y1|U2)" => self.x_y1_given_u2,
            "I(X;Y1|U3)" => self.x_y1_given_u3,
            "I(X;Y1|U2,U3)" => self.x_y1_given_u2u3,
            "I(U2;Y2|U1)" => self.u2_y2_given_u1,
            _ => return None,
        })
    }
}

fn system(dim: usize, rows: &[(&[i64], f64)]) -> RateConstraintSystem {
    let rows = rows
        .iter()
        .map(|(c, b)| LinearRateInequality::new(c.to_vec(), b.max(0.0)).expect("fixed row shape"))
        .collect();
    RateConstraintSystem::new(dim, rows).expect("fixed row shape")
}

fn require_multilevel(ch: &BroadcastChannel3, what: &'static str) -> Result<(), BoundError> {
    if ch.is_multilevel() {
        Ok(())
    } else {
        Err(BoundError::Structure(what))
    }
}

/// Single-auxiliary superposition region with every receiver decoding `U`;
/// receiver 1 is dropped from the common-rate minimum on multilevel channels.
pub fn eval_km3(aux: &AuxChain, ch: &BroadcastChannel3) -> Result<RateConstraintSystem, BoundError> {
    let i = ChainInfo::compute(aux, ch)?;
    let mut rows: Vec<(&[i64], f64)> = vec![(&[1, 0], i.u1_y2), (&[1, 0], i.u1_y3)];
    if !ch.is_multilevel() {
        rows.push((&[1, 0], i.u1_y1));
    }
    rows.push((&[0, 1], i.x_y1_given_u1));
    Ok(system(2, &rows))
}

pub fn eval_bzt(aux: &AuxChain, ch: &BroadcastChannel3) -> Result<RateConstraintSystem, BoundError> {
    require_multilevel(ch, "the BZT region")?;
    let i = ChainInfo::compute(aux, ch)?;
    Ok(system(2, &[(&[1, 0], i.u1_y2), (&[1, 0], i.u1_y3), (&[0, 1], i.x_y1_given_u1)]))
}

pub fn eval_theorem1(
    aux: &AuxChain,
    ch: &BroadcastChannel3,
) -> Result<RateConstraintSystem, BoundError> {
    require_multilevel(ch, "the multilevel capacity region")?;
    let i = ChainInfo::compute(aux, ch)?;
    Ok(system(
        2,
        &[
            (&[1, 0], i.u1_y3),
            (&[1, 0], i.u2_y2),
            (&[1, 1], i.u1_y3 + i.x_y1_given_u1),
            (&[1, 1], i.u2_y2 + i.x_y1_given_u2),
        ],
    ))
}

/// Inner bound with only receiver 2 decoding indirectly (`U3 = U1`).
pub fn eval_setu3u1(
    aux: &AuxChain,
    ch: &BroadcastChannel3,
) -> Result<RateConstraintSystem, BoundError> {
    let i = ChainInfo::compute(aux, ch)?;
    Ok(system(
        2,
        &[
            (&[1, 0], i.u2_y2),
            (&[1, 0], i.u1_y3),
            (&[0, 1], i.x_y1_given_u1),
            (&[1, 1], i.x_y1),
            (&[1, 1], i.u2_y2 + i.x_y1_given_u2),
            (&[1, 1], i.u1_y3 + i.x_y1_given_u1),
        ],
    ))
}

/// Rows of the two-indirect-decoder inner bound, unclamped.
pub fn prop5_rows(i: &TripleInfo) -> Vec<([i64; 2], f64)> {
    let pen = i.u2_u3_given_u1;
    vec![
        ([1, 0], i.u2_y2),
        ([1, 0], i.u3_y3),
        ([2, 0], i.u2_y2 + i.u3_y3 - pen),
        ([0, 1], i.x_y1_given_u2 + i.x_y1_given_u3),
        ([0, 1], i.x_y1_given_u1),
        ([1, 1], i.x_y1),
        ([1, 1], i.u2_y2 + i.x_y1_given_u2),
        ([1, 1], i.u3_y3 + i.x_y1_given_u3),
        ([2, 1], i.u2_y2 + i.u3_y3 + i.x_y1_given_u2u3 - pen),
        ([2, 2], i.u2_y2 + i.x_y1_given_u2 + i.u3_y3 + i.x_y1_given_u3 - pen),
    ]
}

pub fn eval_prop5_inner(
    aux: &AuxTriple,
    ch: &BroadcastChannel3,
) -> Result<RateConstraintSystem, BoundError> {
    let i = TripleInfo::compute(aux, ch)?;
    let rows = prop5_rows(&i);
    Ok(system(2, &rows.iter().map(|(c, b)| (&c[..], *b)).collect::<Vec<_>>()))
}

pub fn eval_prop6_outer(
    aux: &AuxTriple,
    ch: &BroadcastChannel3,
) -> Result<RateConstraintSystem, BoundError> {
    let i = TripleInfo::compute(aux, ch)?;
    Ok(system(
        2,
        &[
            (&[1, 0], i.u1_y1),
            (&[1, 0], i.u2_y2 - i.u2_y1_given_u1),
            (&[1, 0], i.u3_y3 - i.u3_y1_given_u1),
            (&[0, 1], i.x_y1_given_u1),
        ],
    ))
}

/// True when neither difference bound of the outer bound needed clamping.
pub fn prop6_unclamped(i: &TripleInfo) -> bool {
    i.u2_y2 - i.u2_y1_given_u1 >= 0.0 && i.u3_y3 - i.u3_y1_given_u1 >= 0.0
}

/// Rows of the three-message inner bound over `(R0, R1, R2)`, unclamped.
pub fn thm2_rows(i: &TripleInfo) -> Vec<([i64; 3], f64)> {
    let pen = i.u2_u3_given_u1;
    vec![
        ([1, 0, 0], i.u3_y3),
        ([0, 1, 0], i.u2_y2_given_u1),
        ([0, 1, 0], i.x_y1_given_u3),
        ([0, 0, 1], i.x_y1_given_u2),
        ([1, 1, 0], i.u2_y2),
        ([1, 1, 0], i.u2_y2_given_u1 + i.u3_y3 - pen),
        ([2, 1, 0], i.u2_y2 + i.u3_y3 - pen),
        ([1, 0, 1], i.u3_y3 + i.x_y1_given_u2u3),
        ([0, 1, 1], i.x_y1_given_u1),
        ([1, 1, 1], i.x_y1),
        ([1, 1, 1], i.u3_y3 + i.x_y1_given_u3),
        ([1, 1, 1], i.u2_y2_given_u1 + i.u3_y3 + i.x_y1_given_u2u3 - pen),
        ([2, 1, 1], i.u2_y2 + i.u3_y3 + i.x_y1_given_u2u3 - pen),
        ([1, 2, 1], i.u2_y2_given_u1 + i.u3_y3 + i.x_y1_given_u3 - pen),
        ([2, 2, 1], i.u2_y2 + i.u3_y3 + i.x_y1_given_u3 - pen),
    ]
}

pub fn eval_thm2_inner(
    aux: &AuxTriple,
    ch: &BroadcastChannel3,
) -> Result<RateConstraintSystem, BoundError> {
    let i = TripleInfo::compute(aux, ch)?;
    let rows = thm2_rows(&i);
    Ok(system(3, &rows.iter().map(|(c, b)| (&c[..], *b)).collect::<Vec<_>>()))
}

/// Two-message region with receivers 1 and 2 decoding the private message.
pub fn eval_cor1(aux: &AuxChain, ch: &BroadcastChannel3) -> Result<RateConstraintSystem, BoundError> {
    let i = ChainInfo::compute(aux, ch)?;
    Ok(system(
        2,
        &[
            (&[1, 0], i.u1_y3),
            (&[0, 1], i.x_y2_given_u1),
            (&[0, 1], i.x_y1_given_u1),
            (&[1, 1], i.x_y2),
            (&[1, 1], i.x_y1),
        ],
    ))
}

/// Relaxation of the `R2 = 0` slice of the three-message bound, with the
/// chain's `U1` playing `U3`.
pub fn eval_redu2deg(
    aux: &AuxChain,
    ch: &BroadcastChannel3,
) -> Result<RateConstraintSystem, BoundError> {
    let i = ChainInfo::compute(aux, ch)?;
    Ok(system(
        2,
        &[
            (&[1, 0], i.u1_y3),
            (&[1, 1], i.u1_y3 + i.x_y2_given_u1),
            (&[1, 1], i.u1_y3 + i.x_y1_given_u1),
            (&[1, 1], i.x_y2),
            (&[1, 1], i.x_y1),
        ],
    ))
}

/// Outer bound for deterministic channels at input `p(x)`.
pub fn deterministic_outer(
    p_x: &FinitePmf,
    ch: &BroadcastChannel3,
) -> Result<RateConstraintSystem, BoundError> {
    let h: Vec<f64> = (1..=3)
        .map(|k| {
            let joint = JointPmf::from_input_and_channel(p_x, &ch.receiver(k))?;
            joint.entropy_of(&[1])
        })
        .collect::<Result<_, ProbError>>()?;
    Ok(system(
        2,
        &[(&[1, 0], h[0]), (&[1, 0], h[1]), (&[1, 0], h[2]), (&[1, 1], h[0]), (&[1, 1], h[1])],
    ))
}

/// A candidate auxiliary distribution of either shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Aux {
    Chain(AuxChain),
    Triple(AuxTriple),
}

/// Search settings; every field has a default so partial JSON configs work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Number of levels on [0,1] for structured erasure probabilities.
    pub grid_levels: usize,
    pub random_restarts: usize,
    pub refine_iters: usize,
    pub seed: u64,
    /// Per-auxiliary alphabet caps overriding the defaults:
    /// `[U]`, `[U1, U2]` or `[U1, V2, V3]` by bound shape.
    pub cardinality_caps: Option<Vec<usize>>,
    /// Use the full cardinality bounds instead of capping at 8 letters.
    pub full_caps: bool,
    /// Restrict triples to `U3 = U1`.
    pub tie_u3_to_u1: bool,
    /// Number of weights whose best candidate is refined.
    pub refine_weights: usize,
    /// Perturbations tried per refinement round.
    pub refine_trials: usize,
    pub dirichlet_alpha: f64,
    /// Upper limit on structured triple candidates.
    pub max_triple_grid: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_levels: 11,
            random_restarts: 64,
            refine_iters: 3,
            seed: 0,
            cardinality_caps: None,
            full_caps: false,
            tie_u3_to_u1: false,
            refine_weights: 19,
            refine_trials: 8,
            dirichlet_alpha: 0.5,
            max_triple_grid: 3000,
        }
    }
}

const DESK_CAP: usize = 8;

impl SearchConfig {
    pub fn validate(&self) -> Result<(), BoundError> {
        if self.grid_levels < 2 {
            return Err(BoundError::Config("grid_levels must be at least 2".into()));
        }
        if !(self.dirichlet_alpha > 0.0) {
            return Err(BoundError::Config("dirichlet_alpha must be positive".into()));
        }
        if self.refine_iters > 0 && (self.refine_weights == 0 || self.refine_trials == 0) {
            return Err(BoundError::Config("refinement needs weights and trials".into()));
        }
        if let Some(c) = &self.cardinality_caps {
            if c.contains(&0) {
                return Err(BoundError::Config("cardinality caps must be positive".into()));
            }
        }
        Ok(())
    }

    /// Alphabet caps for a bound on an input alphabet of size `nx`.
    pub fn caps(&self, bound: BoundId, nx: usize) -> Result<Vec<usize>, BoundError> {
        let limits: Vec<usize> = match (bound.shape(), self.tie_u3_to_u1) {
            (AuxShape::Single, _) => vec![nx + 4],
            (AuxShape::Chain, _) | (AuxShape::Triple, true) => vec![nx + 4, nx * nx + 5 * nx + 4],
            (AuxShape::Triple, false) => vec![nx + 6, nx + 1, nx + 1],
        };
        match &self.cardinality_caps {
            Some(c) => {
                if c.len() != limits.len() {
                    return Err(BoundError::Caps(format!(
                        "{} expects {} caps, got {}",
                        bound,
                        limits.len(),
                        c.len()
                    )));
                }
                for (k, (&mine, &limit)) in c.iter().zip(&limits).enumerate() {
                    if mine > limit {
                        return Err(BoundError::Caps(format!(
                            "auxiliary {k} of {bound}: {mine} exceeds the bound {limit}"
                        )));
                    }
                }
                Ok(c.clone())
            }
            None if self.full_caps => Ok(limits),
            None => Ok(limits.into_iter().map(|c| c.min(DESK_CAP)).collect()),
        }
    }
}

/// All set partitions of `0..n` as block labels (restricted growth strings).
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for b in 0..=max + 1 {
            prefix.push(b);
            rec(prefix, max.max(b), n, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut prefix = vec![0];
    rec(&mut prefix, 0, n, &mut out);
    out
}

/// Partitions used by the structured grid: all of them for small inputs,
/// otherwise the trivial ones and single-letter splits.
fn grid_partitions(n: usize) -> Vec<Vec<usize>> {
    if n <= 5 {
        return set_partitions(n);
    }
    let mut out = vec![vec![0; n], (0..n).collect()];
    for i in 0..n {
        out.push((0..n).map(|x| usize::from(x == i)).collect());
    }
    out
}

/// Conditional `p(v|x)` revealing `x` with probability `1-e` and otherwise
/// only its block label under `partition`.
pub fn partial_erasure(partition: &[usize], e: f64) -> StochasticMatrix {
    let n = partition.len();
    let blocks = partition.iter().max().map_or(0, |m| m + 1);
    let cols = n + blocks;
    let mut m = vec![0.0; n * cols];
    for x in 0..n {
        m[x * cols + x] += 1.0 - e;
        m[x * cols + n + partition[x]] += e;
    }
    StochasticMatrix::new(n, cols, m).expect("rows sum to one")
}

/// Input pmfs of the structured grid.
fn grid_inputs(n: usize) -> Vec<FinitePmf> {
    let uniform_on = |set: &[usize]| {
        let mut p = vec![0.0; n];
        set.iter().for_each(|&x| p[x] = 1.0 / set.len() as f64);
        FinitePmf::new(p).expect("uniform on a subset")
    };
    if n <= 5 {
        (1..(1usize << n))
            .rev()
            .map(|mask| uniform_on(&(0..n).filter(|x| mask >> x & 1 == 1).collect::<Vec<_>>()))
            .collect()
    } else {
        let mut out: Vec<FinitePmf> = (1..=n).rev().map(|k| uniform_on(&(0..k).collect::<Vec<_>>())).collect();
        out.extend((1..n).map(|x| FinitePmf::point(n, x)));
        out
    }
}

/// Conditional maps `p(v|x)` of the structured grid: constant, identity and
/// partial erasures with erasure probability on the grid.
fn grid_maps(n: usize, levels: usize) -> Vec<StochasticMatrix> {
    let mut out = vec![StochasticMatrix::deterministic(&vec![0; n], 1).expect("constant"), StochasticMatrix::identity(n)];
    for p in grid_partitions(n) {
        let blocks = p.iter().max().map_or(0, |m| m + 1);
        if blocks == n {
            continue;
        }
        for k in 1..levels {
            let e = k as f64 / (levels - 1) as f64;
            if blocks == 1 && k == levels - 1 {
                continue;
            }
            if k == levels - 1 {
                out.push(StochasticMatrix::deterministic(&p, blocks).expect("block labels"));
            } else {
                out.push(partial_erasure(&p, e));
            }
        }
    }
    out
}

fn chain_from_maps(
    p_x: &FinitePmf,
    u2_given_x: &StochasticMatrix,
    u1_given_u2: &StochasticMatrix,
) -> Result<AuxChain, BoundError> {
    let n = p_x.alphabet_size();
    let (b, a) = (u2_given_x.cols(), u1_given_u2.cols());
    let mut j = vec![0.0; a * b * n];
    for x in 0..n {
        for u2 in 0..b {
            let p = p_x.probs()[x] * u2_given_x.get(x, u2);
            if p == 0.0 {
                continue;
            }
            for u1 in 0..a {
                j[(u1 * b + u2) * n + x] += p * u1_given_u2.get(u2, u1);
            }
        }
    }
    let (d, j) = compress_axes(&[a, b, n], &j, 2);
    AuxChain::from_joint([d[0], d[1], d[2]], &j)
}

/// Deterministic coarsenings of a partial-erasure output onto coarser
/// partitions, including the map onto the same partition.
fn coarsenings(partition: &[usize], n: usize) -> Vec<StochasticMatrix> {
    let blocks = partition.iter().max().map_or(0, |m| m + 1);
    let cols = n + blocks;
    let mut out = Vec::new();
    for q in grid_partitions(blocks) {
        let qb = q.iter().max().map_or(0, |m| m + 1);
        if qb <= 1 {
            continue;
        }
        let f: Vec<usize> = (0..cols).map(|v| if v < n { q[partition[v]] } else { q[v - n] }).collect();
        out.push(StochasticMatrix::deterministic(&f, qb).expect("labels in range"));
    }
    out
}

fn structured_candidates(
    bound: BoundId,
    nx: usize,
    caps: &[usize],
    cfg: &SearchConfig,
) -> Result<Vec<Aux>, BoundError> {
    let inputs = grid_inputs(nx);
    let maps = grid_maps(nx, cfg.grid_levels);
    let constant = StochasticMatrix::deterministic(&vec![0; nx], 1).expect("constant");
    let fits = |c: &AuxChain, k: usize| c.sizes()[..k].iter().zip(caps).all(|(s, cap)| s <= cap);
    let mut out = Vec::new();
    match (bound.shape(), cfg.tie_u3_to_u1) {
        (AuxShape::Single, _) => {
            for p_x in &inputs {
                for m in &maps {
                    let c = chain_from_maps(p_x, m, &StochasticMatrix::identity(m.cols()))?;
                    if fits(&c, 1) {
                        out.push(Aux::Chain(c));
                    }
                }
            }
        }
        (AuxShape::Chain, _) | (AuxShape::Triple, true) => {
            let mut pairs: Vec<(StochasticMatrix, StochasticMatrix)> = Vec::new();
            // U2 = X with U1 any structured map of X.
            for m in &maps {
                pairs.push((StochasticMatrix::identity(nx), m.clone()));
            }
            // U2 a structured map of X with U1 constant, U1 = U2, or a coarsening.
            for p in grid_partitions(nx) {
                let blocks = p.iter().max().map_or(0, |m| m + 1);
                if blocks == nx {
                    continue;
                }
                for k in 1..cfg.grid_levels {
                    let e = k as f64 / (cfg.grid_levels - 1) as f64;
                    let u2 = partial_erasure(&p, e);
                    let cols = u2.cols();
                    pairs.push((u2.clone(), StochasticMatrix::deterministic(&vec![0; cols], 1).expect("constant")));
                    pairs.push((u2.clone(), StochasticMatrix::identity(cols)));
                    for c in coarsenings(&p, nx) {
                        pairs.push((u2.clone(), c));
                    }
                }
            }
            pairs.push((constant.clone(), StochasticMatrix::identity(1)));
            for p_x in &inputs {
                for (u2, u1) in &pairs {
                    let c = chain_from_maps(p_x, u2, u1)?;
                    if fits(&c, 2) {
                        out.push(if bound.shape() == AuxShape::Triple {
                            Aux::Triple(AuxTriple::from_chain_u3_eq_u1(&c)?)
                        } else {
                            Aux::Chain(c)
                        });
                    }
                }
            }
        }
        (AuxShape::Triple, false) => {
            let coarse: Vec<StochasticMatrix> = grid_maps(nx, cfg.grid_levels.min(3));
            let mut all = Vec::new();
            for p_x in &inputs {
                for m1 in &coarse {
                    for m2 in &coarse {
                        for m3 in &coarse {
                            all.push((p_x, m1, m2, m3));
                        }
                    }
                }
            }
            // Deterministic thinning keeps the grid at desk scale.
            let stride = all.len().div_ceil(cfg.max_triple_grid.max(1)).max(1);
            for (p_x, m1, m2, m3) in all.into_iter().step_by(stride) {
                let t = triple_from_maps(p_x, m1, m2, m3)?;
                let s = t.sizes();
                if s[0] <= caps[0] && s[1] <= caps[1] && s[2] <= caps[2] {
                    out.push(Aux::Triple(t));
                }
            }
        }
    }
    Ok(out)
}

/// `U1, V2, V3` drawn independently given `X`.
fn triple_from_maps(
    p_x: &FinitePmf,
    m1: &StochasticMatrix,
    m2: &StochasticMatrix,
    m3: &StochasticMatrix,
) -> Result<AuxTriple, BoundError> {
    let n = p_x.alphabet_size();
    let (a, b, c) = (m1.cols(), m2.cols(), m3.cols());
    let mut j = vec![0.0; a * b * c * n];
    for x in 0..n {
        let px = p_x.probs()[x];
        if px == 0.0 {
            continue;
        }
        for u in 0..a {
            for v in 0..b {
                for w in 0..c {
                    j[((u * b + v) * c + w) * n + x] = px * m1.get(x, u) * m2.get(x, v) * m3.get(x, w);
                }
            }
        }
    }
    let (d, j) = compress_axes(&[a, b, c, n], &j, 3);
    AuxTriple::from_joint([d[0], d[1], d[2], d[3]], &j)
}

fn random_candidate<R: Rng + ?Sized>(
    rng: &mut R,
    bound: BoundId,
    nx: usize,
    caps: &[usize],
    cfg: &SearchConfig,
) -> Result<Aux, BoundError> {
    let alpha = cfg.dirichlet_alpha;
    let chain = |rng: &mut R, a: usize, b: usize| {
        AuxChain::new(
            sampling::random_pmf(rng, a, alpha),
            sampling::random_matrix(rng, a, b, alpha),
            sampling::random_matrix(rng, b, nx, alpha),
        )
    };
    Ok(match (bound.shape(), cfg.tie_u3_to_u1) {
        (AuxShape::Single, _) => {
            let a = rng.random_range(1..=caps[0]);
            Aux::Chain(AuxChain::single(
                sampling::random_pmf(rng, a, alpha),
                sampling::random_matrix(rng, a, nx, alpha),
            )?)
        }
        (AuxShape::Chain, _) => {
            let (a, b) = (rng.random_range(1..=caps[0]), rng.random_range(1..=caps[1]));
            Aux::Chain(chain(rng, a, b)?)
        }
        (AuxShape::Triple, true) => {
            let (a, b) = (rng.random_range(1..=caps[0]), rng.random_range(1..=caps[1]));
            Aux::Triple(AuxTriple::from_chain_u3_eq_u1(&chain(rng, a, b)?)?)
        }
        (AuxShape::Triple, false) => {
            let s = [
                rng.random_range(1..=caps[0]),
                rng.random_range(1..=caps[1]),
                rng.random_range(1..=caps[2]),
                nx,
            ];
            let j = sampling::random_masses(rng, s.iter().product(), alpha);
            Aux::Triple(AuxTriple::from_joint(s, &j)?)
        }
    })
}

/// Multiplies every nonzero entry by `exp(step * N(0,1))` and renormalises.
fn perturb_masses<R: Rng + ?Sized>(rng: &mut R, v: &[f64], cols: usize, step: f64) -> Vec<f64> {
    let mut out: Vec<f64> = v
        .iter()
        .map(|&p| {
            let g: f64 = StandardNormal.sample(rng);
            p * (step * g).exp()
        })
        .collect();
    for row in out.chunks_mut(cols) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|p| *p /= s);
        } else {
            row.iter_mut().for_each(|p| *p = 1.0 / cols as f64);
        }
    }
    out
}

fn perturb<R: Rng + ?Sized>(rng: &mut R, aux: &Aux, step: f64) -> Result<Aux, BoundError> {
    Ok(match aux {
        Aux::Chain(c) => {
            let [a, b, n] = c.sizes();
            let single = c.p_u2_given_u1 == StochasticMatrix::identity(a);
            let p1 = perturb_masses(rng, c.p_u1.probs(), a, step);
            let m12 = if single {
                c.p_u2_given_u1.entries().to_vec()
            } else {
                perturb_masses(rng, c.p_u2_given_u1.entries(), b, step)
            };
            let mx = perturb_masses(rng, c.p_x_given_u2.entries(), n, step);
            Aux::Chain(AuxChain::new(
                FinitePmf::new(p1)?,
                StochasticMatrix::new(a, b, m12)?,
                StochasticMatrix::new(b, n, mx)?,
            )?)
        }
        Aux::Triple(t) => {
            let s = t.sizes();
            let j = perturb_masses(rng, &t.joint_aux(), s.iter().product(), step);
            Aux::Triple(AuxTriple::from_joint(s, &j)?)
        }
    })
}

/// Instantiates `bound` at one candidate.
pub fn evaluate(
    bound: BoundId,
    aux: &Aux,
    ch: &BroadcastChannel3,
) -> Result<RateConstraintSystem, BoundError> {
    match (bound, aux) {
        (BoundId::Km3, Aux::Chain(c)) => eval_km3(c, ch),
        (BoundId::Bzt, Aux::Chain(c)) => eval_bzt(c, ch),
        (BoundId::Cor1, Aux::Chain(c)) => eval_cor1(c, ch),
        (BoundId::Thm1, Aux::Chain(c)) => eval_theorem1(c, ch),
        (BoundId::Prop5, Aux::Triple(t)) => eval_prop5_inner(t, ch),
        (BoundId::Prop6, Aux::Triple(t)) => eval_prop6_outer(t, ch),
        (BoundId::Thm2, Aux::Triple(t)) => eval_thm2_inner(t, ch),
        _ => Err(BoundError::Dimension(format!("{bound} evaluated on the wrong auxiliary shape"))),
    }
}

const CHUNK: usize = 32;

/// Per-chunk frontier plus the best candidate at each refinement weight.
fn sweep(
    bound: BoundId,
    pool: &[Aux],
    offset: usize,
    ch: &BroadcastChannel3,
    weights: &[(String, Vec<f64>)],
    refine_at: &[usize],
) -> Result<(FrontierAccumulator, Vec<Option<(f64, usize)>>), BoundError> {
    let parts: Vec<Result<(FrontierAccumulator, Vec<Option<(f64, usize)>>), BoundError>> = pool
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = FrontierAccumulator::new(bound.dim(), weights)?;
            let mut best: Vec<Option<(f64, usize)>> = vec![None; refine_at.len()];
            for (k, aux) in chunk.iter().enumerate() {
                let sys = PreparedSystem::new(&evaluate(bound, aux, ch)?)?;
                acc.offer_prepared(&sys)?;
                for (r, &wi) in refine_at.iter().enumerate() {
                    let (v, _) = sys.maximize(&weights[wi].1)?;
                    if best[r].is_none_or(|(bv, _)| v > bv) {
                        best[r] = Some((v, offset + ci * CHUNK + k));
                    }
                }
            }
            Ok((acc, best))
        })
        .collect();
    let mut acc = FrontierAccumulator::new(bound.dim(), weights)?;
    let mut best: Vec<Option<(f64, usize)>> = vec![None; refine_at.len()];
    for part in parts {
        let (a, b) = part?;
        acc = acc.merge(a);
        for (slot, cand) in best.iter_mut().zip(b) {
            if let Some((v, i)) = cand {
                if slot.is_none_or(|(bv, _)| v > bv) {
                    *slot = Some((v, i));
                }
            }
        }
    }
    Ok((acc, best))
}

/// Inner approximation of the union of `bound` over auxiliary distributions:
/// structured grid, seeded random restarts, then local refinement of the
/// best candidates at a spread of weights.
pub fn optimize_region(
    bound: BoundId,
    ch: &BroadcastChannel3,
    cfg: &SearchConfig,
    weights: &[(String, Vec<f64>)],
) -> Result<RegionApprox, BoundError> {
    cfg.validate()?;
    if bound.requires_multilevel() && !ch.is_multilevel() {
        return Err(BoundError::Structure(bound.as_str()));
    }
    if weights.is_empty() {
        return Err(BoundError::Config("no weights".into()));
    }
    let nx = ch.input_size();
    let caps = cfg.caps(bound, nx)?;
    let mut pool = structured_candidates(bound, nx, &caps, cfg)?;
    let randoms: Vec<Aux> = (0..cfg.random_restarts)
        .into_par_iter()
        .map(|i| random_candidate(&mut sampling::rng_for(cfg.seed, i as u64), bound, nx, &caps, cfg))
        .collect::<Result<_, _>>()?;
    pool.extend(randoms);

    let refine_at: Vec<usize> = if cfg.refine_iters == 0 {
        Vec::new()
    } else {
        let k = cfg.refine_weights.min(weights.len());
        let mut v: Vec<usize> = (0..k)
            .map(|i| if k == 1 { 0 } else { i * (weights.len() - 1) / (k - 1) })
            .collect();
        v.dedup();
        v
    };
    let (mut acc, best) = sweep(bound, &pool, 0, ch, weights, &refine_at)?;

    let refined: Vec<Vec<Aux>> = refine_at
        .par_iter()
        .enumerate()
        .map(|(r, &wi)| {
            let Some((mut best_v, idx)) = best[r] else { return Ok(Vec::new()) };
            let mut cur = pool[idx].clone();
            let w = &weights[wi].1;
            let mut rng = sampling::rng_for(cfg.seed ^ 0x5eed_0f7e_f1e5, (cfg.random_restarts + r) as u64);
            let mut step = 0.5;
            let mut kept = Vec::new();
            for _ in 0..cfg.refine_iters {
                let mut improved = false;
                for _ in 0..cfg.refine_trials {
                    let cand = perturb(&mut rng, &cur, step)?;
                    let (v, _) = PreparedSystem::new(&evaluate(bound, &cand, ch)?)?.maximize(w)?;
                    if v > best_v + 1e-12 {
                        best_v = v;
                        cur = cand.clone();
                        improved = true;
                        kept.push(cand);
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            Ok(kept)
        })
        .collect::<Result<_, BoundError>>()?;
    let extra: Vec<Aux> = refined.into_iter().flatten().collect();
    if !extra.is_empty() {
        let (a, _) = sweep(bound, &extra, pool.len(), ch, weights, &[])?;
        acc = acc.merge(a);
    }
    Ok(acc.finish()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::make_bec_example;
    use crate::prob::FinitePmf;
    use crate::region::{max_weighted_rate, polytope_contains, RateVector};

    fn noiseless_binary() -> BroadcastChannel3 {
        let id = StochasticMatrix::identity(2);
        let p12 = StochasticMatrix::deterministic(&[0, 3], 4).unwrap();
        BroadcastChannel3::build_multilevel(&p12, 2, &id).unwrap()
    }

    #[test]
    fn bound_ids_round_trip() {
        for b in BoundId::ALL {
            assert_eq!(b.as_str().parse::<BoundId>().unwrap(), b);
        }
        assert!(matches!("prop7".parse::<BoundId>(), Err(BoundError::UnknownBound(_))));
    }

    #[test]
    fn km3_constant_and_identity_aux() {
        let ch = noiseless_binary();
        let constant = AuxChain::single(FinitePmf::uniform(1), StochasticMatrix::new(1, 2, vec![0.5, 0.5]).unwrap()).unwrap();
        let s = eval_km3(&constant, &ch).unwrap();
        let (v, _) = max_weighted_rate(&s, &[0.0, 1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let (v, _) = max_weighted_rate(&s, &[1.0, 0.0]).unwrap();
        assert!(v.abs() < 1e-12);
        let ident = AuxChain::single(FinitePmf::uniform(2), StochasticMatrix::identity(2)).unwrap();
        let s = eval_km3(&ident, &ch).unwrap();
        let (v, _) = max_weighted_rate(&s, &[1.0, 0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let (v, _) = max_weighted_rate(&s, &[0.0, 1.0]).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn multilevel_only_bounds_reject_general_channels() {
        let mut rng = sampling::rng_for(5, 0);
        let ch = sampling::random_channel(&mut rng, 2, [2, 2, 2], 1.0);
        if !ch.is_multilevel() {
            let c = AuxChain::single(FinitePmf::uniform(2), StochasticMatrix::identity(2)).unwrap();
            assert!(matches!(eval_theorem1(&c, &ch), Err(BoundError::Structure(_))));
            assert!(matches!(eval_bzt(&c, &ch), Err(BoundError::Structure(_))));
        }
    }

    #[test]
    fn capacity_with_constant_u1_has_no_common_rate() {
        let ch = noiseless_binary();
        let c = AuxChain::new(
            FinitePmf::uniform(1),
            StochasticMatrix::new(1, 2, vec![0.5, 0.5]).unwrap(),
            StochasticMatrix::identity(2),
        )
        .unwrap();
        let s = eval_theorem1(&c, &ch).unwrap();
        let (v, _) = max_weighted_rate(&s, &[1.0, 0.0]).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn constant_triple_bounds() {
        let ch = make_bec_example();
        let t = AuxTriple::constant(&FinitePmf::uniform(4));
        let ixy1 = 1.5;
        let p5 = eval_prop5_inner(&t, &ch).unwrap();
        assert!(max_weighted_rate(&p5, &[1.0, 0.0]).unwrap().0.abs() < 1e-12);
        assert!((max_weighted_rate(&p5, &[0.0, 1.0]).unwrap().0 - ixy1).abs() < 1e-9);
        let p6 = eval_prop6_outer(&t, &ch).unwrap();
        assert!(max_weighted_rate(&p6, &[1.0, 0.0]).unwrap().0.abs() < 1e-12);
        let t2 = eval_thm2_inner(&t, &ch).unwrap();
        assert!(max_weighted_rate(&t2, &[1.0, 0.0, 0.0]).unwrap().0.abs() < 1e-12);
        assert!(max_weighted_rate(&t2, &[0.0, 1.0, 0.0]).unwrap().0.abs() < 1e-12);
        assert!((max_weighted_rate(&t2, &[0.0, 0.0, 1.0]).unwrap().0 - ixy1).abs() < 1e-9);
    }

    #[test]
    fn triple_markov_structure_holds() {
        let mut rng = sampling::rng_for(11, 0);
        let ch = sampling::random_channel(&mut rng, 3, [2, 2, 2], 1.0);
        for _ in 0..20 {
            let j = sampling::random_masses(&mut rng, 2 * 2 * 3 * 3, 0.7);
            let t = AuxTriple::from_joint([2, 2, 3, 3], &j).unwrap();
            let joint = t.joint_with(&ch).unwrap();
            let mut c = EntropyCache::new(&joint);
            let m = EntropyCache::mask;
            let u1 = m(&[0]);
            let u2 = m(&[0, 1]);
            let u3 = m(&[0, 2]);
            let x = m(&[3]);
            assert!(c.cmi(u3 | x, u1, u2).unwrap() < 1e-9);
            assert!(c.cmi(u2 | x, u1, u3).unwrap() < 1e-9);
            let back: Vec<f64> = t.joint_aux();
            assert!(back.iter().zip(&j).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn partitions_are_counted_by_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52];
        for (n, b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(n).len(), *b);
        }
    }

    #[test]
    fn caps_follow_shape_and_limits() {
        let cfg = SearchConfig::default();
        assert_eq!(cfg.caps(BoundId::Thm1, 4).unwrap(), vec![8, 8]);
        assert_eq!(cfg.caps(BoundId::Prop6, 2).unwrap(), vec![8, 3, 3]);
        let full = SearchConfig { full_caps: true, ..SearchConfig::default() };
        assert_eq!(full.caps(BoundId::Thm1, 4).unwrap(), vec![8, 40]);
        let over = SearchConfig { cardinality_caps: Some(vec![9, 2]), ..SearchConfig::default() };
        assert!(matches!(over.caps(BoundId::Thm1, 4), Err(BoundError::Caps(_))));
    }

    #[test]
    fn noiseless_thm1_search_reaches_log_alphabet() {
        let ch = noiseless_binary();
        let cfg = SearchConfig { random_restarts: 8, ..SearchConfig::default() };
        let w = crate::region::weights_2d(91);
        let r = optimize_region(BoundId::Thm1, &ch, &cfg, &w).unwrap();
        assert!((r.supports[45] - 0.5f64.sqrt()).abs() < 1e-6);
        r.check_invariants(1e-6).unwrap();
        assert!(polytope_contains(
            &eval_theorem1(&AuxChain::single(FinitePmf::uniform(2), StochasticMatrix::identity(2)).unwrap(), &ch).unwrap(),
            &RateVector::new(vec![1.0, 0.0]).unwrap()
        )
        .unwrap());
    }
}
