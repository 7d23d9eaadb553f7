//! Closed-form regions of the binary-erasure product example and of its
//! Gaussian counterpart.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{AuxChain, BoundError};
use crate::region::{
    GeometryError, HullAccumulator, LinearRateInequality, RateConstraintSystem, RegionApprox,
};

/// Default parameter step of the BEC sweeps.
pub const BEC_GRID_STEP: f64 = 0.005;
/// Vertices closer than this to the chord of their neighbours are dropped.
pub const VERTEX_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ClosedFormError {
    #[error("parameter out of range: {0}")]
    Range(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

fn unit(name: &str, v: f64) -> Result<(), ClosedFormError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ClosedFormError::Range(format!("{name}={v} not in [0,1]")))
    }
}

fn rows(dim: usize, rows: &[(&[i64], f64)]) -> RateConstraintSystem {
    let rows = rows
        .iter()
        .map(|(c, b)| LinearRateInequality::new(c.to_vec(), *b).expect("fixed row shape"))
        .collect();
    RateConstraintSystem::new(dim, rows).expect("fixed row shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BecParamsBzt {
    pub p: f64,
    pub q: f64,
}

impl BecParamsBzt {
    pub fn new(p: f64, q: f64) -> Result<Self, ClosedFormError> {
        unit("p", p)?;
        unit("q", q)?;
        Ok(Self { p, q })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BecParamsCap {
    pub r: f64,
    pub s: f64,
    pub t: f64,
}

impl BecParamsCap {
    pub fn new(r: f64, s: f64, t: f64) -> Result<Self, ClosedFormError> {
        unit("r", r)?;
        unit("s", s)?;
        unit("t", t)?;
        if r > t {
            return Err(ClosedFormError::Range(format!("r={r} exceeds t={t}")));
        }
        Ok(Self { r, s, t })
    }
}

pub fn bec_bzt_system(bp: &BecParamsBzt) -> RateConstraintSystem {
    let BecParamsBzt { p, q } = *bp;
    rows(2, &[(&[1, 0], p / 6.0 + q / 2.0), (&[1, 0], p), (&[0, 1], (1.0 - p) / 2.0 + 1.0 - q)])
}

pub fn bec_capacity_system(cp: &BecParamsCap) -> RateConstraintSystem {
    let BecParamsCap { r, s, t } = *cp;
    let common = r / 6.0 + s / 2.0;
    rows(
        2,
        &[
            (&[1, 0], common),
            (&[1, 0], t),
            (&[1, 1], common + (1.0 - r) / 2.0 + 1.0 - s),
            (&[1, 1], t + (1.0 - t) / 2.0 + 1.0 - s),
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BecKind {
    Bzt,
    Capacity,
}

impl FromStr for BecKind {
    type Err = ClosedFormError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bzt" => Ok(BecKind::Bzt),
            "capacity" => Ok(BecKind::Capacity),
            other => Err(ClosedFormError::Range(format!("unknown BEC region kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frontier {
    pub region: RegionApprox,
    pub vertices: Vec<[f64; 2]>,
}

/// Vertices of `{0 <= R0 <= a0, 0 <= R1 <= a1, R0 + R1 <= s}` when every
/// row of `sys` has that shape.
fn box_sum_vertices(sys: &RateConstraintSystem) -> Option<[[f64; 2]; 4]> {
    let (mut a0, mut a1, mut s) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for row in sys.rows() {
        let b = row.bound.max(0.0);
        match row.coeffs[..] {
            [1, 0] => a0 = a0.min(b),
            [0, 1] => a1 = a1.min(b),
            [1, 1] => s = s.min(b),
            _ => return None,
        }
    }
    let top = a1.min(s);
    let right = a0.min(s);
    if !top.is_finite() || !right.is_finite() {
        return None;
    }
    Some([[0.0, top], [a0.min(s - top), top], [right, a1.min(s - right)], [right, 0.0]])
}

fn offer(acc: &mut HullAccumulator, sys: &RateConstraintSystem) -> Result<(), ClosedFormError> {
    match box_sum_vertices(sys) {
        Some(v) => acc.offer_points(&v),
        None => acc.offer(sys)?,
    }
    Ok(())
}

/// Union of the parametric BEC polytopes over a grid with spacing
/// `grid_step` on every parameter.
pub fn bec_frontier(
    kind: BecKind,
    grid_step: f64,
    weights: &[(String, Vec<f64>)],
) -> Result<Frontier, ClosedFormError> {
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(ClosedFormError::Range(format!("grid step {grid_step} not in (0, 0.1]")));
    }
    let n = (1.0 / grid_step).round() as usize;
    let v = |k: usize| k as f64 / n as f64;
    let mut acc = HullAccumulator::new();
    match kind {
        BecKind::Bzt => {
            for i in 0..=n {
                for j in 0..=n {
                    offer(&mut acc, &bec_bzt_system(&BecParamsBzt { p: v(i), q: v(j) }))?;
                }
            }
        }
        BecKind::Capacity => {
            for t in 0..=n {
                for r in 0..=t {
                    for s in 0..=n {
                        offer(&mut acc, &bec_capacity_system(&BecParamsCap { r: v(r), s: v(s), t: v(t) }))?;
                    }
                }
            }
        }
    }
    let region = acc.finish(weights)?;
    let vertices = region.vertices_2d(VERTEX_TOL);
    Ok(Frontier { region, vertices })
}

/// Erasure-style auxiliary on a binary input: the input itself with
/// probability `keep`, otherwise the erasure letter (index 1).
fn erasure_row(x: usize, keep: f64) -> [f64; 3] {
    let mut r = [0.0; 3];
    r[1] = 1.0 - keep;
    r[if x == 0 { 0 } else { 2 }] += keep;
    r
}

/// The single auxiliary `U = (V1, V2)` attaining the BEC BZT boundary:
/// `V1` reveals `X1` with probability `p`, `V2` reveals `X2` with
/// probability `q`, inputs uniform.
pub fn bec_bzt_aux(bp: &BecParamsBzt) -> Result<AuxChain, ClosedFormError> {
    let mut j = vec![0.0; 9 * 9 * 4];
    for x1 in 0..2 {
        for x2 in 0..2 {
            let x = x1 * 2 + x2;
            let (a, b) = (erasure_row(x1, bp.p), erasure_row(x2, bp.q));
            for v1 in 0..3 {
                for v2 in 0..3 {
                    let u = v1 * 3 + v2;
                    j[(u * 9 + u) * 4 + x] += 0.25 * a[v1] * b[v2];
                }
            }
        }
    }
    Ok(AuxChain::from_joint([9, 9, 4], &j)?.compressed()?)
}

/// Auxiliaries attaining the BEC capacity boundary: `U2 = (A', B)` and
/// `U1 = (A, B)` where `A'` reveals `X1` with probability `t`, `A` reveals
/// `A'` with probability `r/t`, and `B` reveals `X2` with probability `s`.
pub fn bec_capacity_aux(cp: &BecParamsCap) -> Result<AuxChain, ClosedFormError> {
    let keep_a = if cp.t > 0.0 { cp.r / cp.t } else { 0.0 };
    let mut j = vec![0.0; 9 * 9 * 4];
    for x1 in 0..2 {
        for x2 in 0..2 {
            let x = x1 * 2 + x2;
            let (ap, b) = (erasure_row(x1, cp.t), erasure_row(x2, cp.s));
            for a2 in 0..3 {
                // A is A' passed through a further erasure.
                let a1 = if a2 == 1 { [0.0, 1.0, 0.0] } else { erasure_row(a2 / 2, keep_a) };
                for a in 0..3 {
                    for bb in 0..3 {
                        let (u1, u2) = (a * 3 + bb, a2 * 3 + bb);
                        j[(u1 * 9 + u2) * 4 + x] += 0.25 * ap[a2] * a1[a] * b[bb];
                    }
                }
            }
        }
    }
    Ok(AuxChain::from_joint([9, 9, 4], &j)?.compressed()?)
}

/// `(1/2) log2(1 + x)`.
pub fn gaussian_capacity_fn(x: f64) -> Result<f64, ClosedFormError> {
    if !(x >= 0.0) {
        return Err(ClosedFormError::Range(format!("C({x}) with negative argument")));
    }
    Ok(0.5 * (1.0 + x).log2())
}

fn cap(x: f64) -> f64 {
    0.5 * (1.0 + x.max(0.0)).log2()
}

/// Power fractions of the two Gaussian signalling schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GaussianFractions {
    Bzt { alpha: f64, beta: f64 },
    Inner { a1: f64, a2: f64, b1: f64, b2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub power: f64,
    pub noise: [f64; 5],
    /// Power on the first branch; the second gets `power - p1`.
    pub p1: f64,
    pub fractions: GaussianFractions,
}

/// Total power 1, noise powers `(0.4, 0.1, 0.1, 0.5, 0.1)`.
pub const GAUSSIAN_EXAMPLE: (f64, [f64; 5]) = (1.0, [0.4, 0.1, 0.1, 0.5, 0.1]);

impl GaussianParams {
    pub fn validate(&self) -> Result<(), ClosedFormError> {
        if !(self.power > 0.0) {
            return Err(ClosedFormError::Range(format!("power {}", self.power)));
        }
        if self.noise.iter().any(|n| !(*n > 0.0)) {
            return Err(ClosedFormError::Range(format!("noise powers {:?}", self.noise)));
        }
        if !(0.0..=self.power).contains(&self.p1) {
            return Err(ClosedFormError::Range(format!("split P1={} outside [0,P]", self.p1)));
        }
        match self.fractions {
            GaussianFractions::Bzt { alpha, beta } => {
                unit("alpha", alpha)?;
                unit("beta", beta)
            }
            GaussianFractions::Inner { a1, a2, b1, b2 } => {
                for (n, v) in [("a1", a1), ("a2", a2), ("b1", b1), ("b2", b2)] {
                    unit(n, v)?;
                }
                // Grid sums like 0.3 + 0.7 may round just above 1.
                for (n, v) in [("a1+b1", a1 + b1), ("a2+b2", a2 + b2)] {
                    if v > 1.0 + 1e-12 {
                        return Err(ClosedFormError::Range(format!("{n}={v} exceeds 1")));
                    }
                }
                Ok(())
            }
        }
    }
}

pub fn gaussian_bzt_system(gp: &GaussianParams) -> Result<RateConstraintSystem, ClosedFormError> {
    gp.validate()?;
    let GaussianFractions::Bzt { alpha, beta } = gp.fractions else {
        return Err(ClosedFormError::Range("BZT system needs alpha and beta".into()));
    };
    let [n1, n2, n3, n4, n5] = gp.noise;
    let (p1, p2) = (gp.p1, gp.power - gp.p1);
    Ok(rows(
        2,
        &[
            (
                &[1, 0],
                cap(alpha * p1 / ((1.0 - alpha) * p1 + n1 + n2 + n3))
                    + cap(beta * p2 / ((1.0 - beta) * p2 + n4 + n5)),
            ),
            (&[1, 0], cap(alpha * p1 / ((1.0 - alpha) * p1 + n1))),
            (&[0, 1], cap((1.0 - alpha) * p1 / (n1 + n2)) + cap((1.0 - beta) * p2 / n4)),
        ],
    ))
}

pub fn gaussian_inner_system(gp: &GaussianParams) -> Result<RateConstraintSystem, ClosedFormError> {
    gp.validate()?;
    let GaussianFractions::Inner { a1, a2, b1, b2 } = gp.fractions else {
        return Err(ClosedFormError::Range("inner system needs a1, a2, b1, b2".into()));
    };
    let [n1, n2, n3, n4, n5] = gp.noise;
    let (p1, p2) = (gp.p1, gp.power - gp.p1);
    let cloud = cap(a1 * p1 / ((1.0 - a1) * p1 + n1 + n2 + n3)) + cap(a2 * p2 / ((1.0 - a2) * p2 + n4 + n5));
    let y2 = cap((a1 + b1) * p1 / ((1.0 - a1 - b1) * p1 + n1));
    Ok(rows(
        2,
        &[
            (&[1, 0], cloud),
            (&[1, 0], y2),
            (&[1, 1], cap((1.0 - a1) * p1 / (n1 + n2)) + cap((1.0 - a2) * p2 / n4) + cloud),
            (&[1, 1], cap((1.0 - a1 - b1) * p1 / (n1 + n2)) + cap((1.0 - a2 - b2) * p2 / n4) + y2),
        ],
    ))
}

/// Which Gaussian scheme a sweep covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianKind {
    Bzt,
    Inner,
}

impl FromStr for GaussianKind {
    type Err = ClosedFormError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bzt" => Ok(GaussianKind::Bzt),
            "inner" => Ok(GaussianKind::Inner),
            other => Err(ClosedFormError::Range(format!("unknown Gaussian region kind `{other}`"))),
        }
    }
}

/// Default grid resolution per kind; the inner scheme has five parameters.
pub fn gaussian_default_steps(kind: GaussianKind) -> usize {
    match kind {
        GaussianKind::Bzt => 100,
        GaussianKind::Inner => 20,
    }
}

/// Union of the Gaussian polytopes over a grid with `steps` intervals on
/// the power split and on every power fraction.
pub fn gaussian_frontier(
    kind: GaussianKind,
    power: f64,
    noise: [f64; 5],
    steps: usize,
    weights: &[(String, Vec<f64>)],
) -> Result<Frontier, ClosedFormError> {
    if !(1..=1000).contains(&steps) {
        return Err(ClosedFormError::Range(format!("grid steps {steps} not in 1..=1000")));
    }
    let v = |k: usize| k as f64 / steps as f64;
    let mut acc = HullAccumulator::new();
    for i in 0..=steps {
        let p1 = power * v(i);
        match kind {
            GaussianKind::Bzt => {
                for a in 0..=steps {
                    for b in 0..=steps {
                        let fractions = GaussianFractions::Bzt { alpha: v(a), beta: v(b) };
                        offer(&mut acc, &gaussian_bzt_system(&GaussianParams { power, noise, p1, fractions })?)?;
                    }
                }
            }
            GaussianKind::Inner => {
                for a1 in 0..=steps {
                    for b1 in 0..=steps - a1 {
                        for a2 in 0..=steps {
                            for b2 in 0..=steps - a2 {
                                let fractions =
                                    GaussianFractions::Inner { a1: v(a1), a2: v(a2), b1: v(b1), b2: v(b2) };
                                let gp = GaussianParams { power, noise, p1, fractions };
                                offer(&mut acc, &gaussian_inner_system(&gp)?)?;
                            }
                        }
                    }
                }
            }
        }
    }
    let region = acc.finish(weights)?;
    let vertices = region.vertices_2d(VERTEX_TOL);
    Ok(Frontier { region, vertices })
}

/// Largest `R0` with `(R0, r1)` in the polytope, or `None` if `r1` is out
/// of reach.
pub fn max_r0_at_r1(sys: &RateConstraintSystem, r1: f64) -> Option<f64> {
    let mut best = f64::INFINITY;
    for row in sys.rows() {
        let (c0, c1) = (row.coeffs[0] as f64, row.coeffs[1] as f64);
        let slack = row.bound - c1 * r1;
        if c0 > 0.0 {
            best = best.min(slack / c0);
        } else if slack < -1e-12 {
            return None;
        }
    }
    (best >= -1e-12 && best.is_finite()).then_some(best.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianOptimum {
    pub r0: f64,
    pub p1: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Golden-section refinement of a scan maximum of `f` on `[lo, hi]`.
fn maximize_1d(lo: f64, hi: f64, scan: usize, tol: f64, f: &dyn Fn(f64) -> f64) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let h = (hi - lo) / scan as f64;
    let (mut bx, mut bv) = (lo, f(lo));
    for k in 1..=scan {
        let x = lo + h * k as f64;
        let v = f(x);
        if v > bv {
            bx = x;
            bv = v;
        }
    }
    let (mut a, mut b) = ((bx - h).max(lo), (bx + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let (x, v) = if fc >= fd { (c, fc) } else { (d, fd) };
    if v >= bv {
        (x, v)
    } else {
        (bx, bv)
    }
}

/// Maximum common rate of the Gaussian BZT region at private rate `r1`,
/// over the power split and both power fractions.
pub fn gaussian_bzt_max_r0(power: f64, noise: [f64; 5], r1: f64) -> Result<GaussianOptimum, ClosedFormError> {
    if !(power > 0.0) || noise.iter().any(|n| !(*n > 0.0)) || !(r1 >= 0.0) {
        return Err(ClosedFormError::Range("Gaussian example parameters".into()));
    }
    let [n1, n2, n3, n4, n5] = noise;
    const TOL: f64 = 1e-9;
    // For fixed (P1, alpha) the common rate grows with beta, so beta is the
    // largest value keeping the private-rate row at r1.
    let beta_for = |p1: f64, alpha: f64| -> Option<f64> {
        let p2 = power - p1;
        let need = r1 - cap((1.0 - alpha) * p1 / (n1 + n2));
        if need <= 0.0 {
            return Some(1.0);
        }
        if p2 <= 0.0 {
            return None;
        }
        let bbar = n4 * (2f64.powf(2.0 * need) - 1.0) / p2;
        (bbar <= 1.0 + 1e-15).then(|| (1.0 - bbar).max(0.0))
    };
    let r0_of = |p1: f64, alpha: f64| -> f64 {
        let Some(beta) = beta_for(p1, alpha) else { return f64::NEG_INFINITY };
        let p2 = power - p1;
        let a = cap(alpha * p1 / ((1.0 - alpha) * p1 + n1 + n2 + n3)) + cap(beta * p2 / ((1.0 - beta) * p2 + n4 + n5));
        a.min(cap(alpha * p1 / ((1.0 - alpha) * p1 + n1)))
    };
    let inner = |p1: f64| -> (f64, f64) {
        if beta_for(p1, 0.0).is_none() {
            return (0.0, f64::NEG_INFINITY);
        }
        // Feasible alphas form an interval [0, amax].
        let (mut lo, mut hi) = (0.0, 1.0);
        if beta_for(p1, 1.0).is_some() {
            lo = 1.0;
        } else {
            while hi - lo > 1e-13 {
                let m = 0.5 * (lo + hi);
                if beta_for(p1, m).is_some() {
                    lo = m
                } else {
                    hi = m
                }
            }
        }
        maximize_1d(0.0, lo, 400, TOL, &|a| r0_of(p1, a))
    };
    let (p1, r0) = maximize_1d(0.0, power, 400, TOL, &|p| inner(p).1);
    if !r0.is_finite() {
        return Err(ClosedFormError::Range(format!("private rate {r1} is not reachable")));
    }
    let (alpha, _) = inner(p1);
    let beta = beta_for(p1, alpha).unwrap_or(0.0);
    Ok(GaussianOptimum { r0, p1, alpha, beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{eval_bzt, eval_theorem1, ChainInfo};
    use crate::channel::make_bec_example;
    use crate::region::{max_weighted_rate, polytope_contains, weights_2d, RateVector, DEFAULT_ANGLES};

    #[test]
    fn bzt_system_examples() {
        let s = bec_bzt_system(&BecParamsBzt::new(0.0, 0.0).unwrap());
        assert_eq!(s.rows()[0].bound, 0.0);
        assert_eq!(s.rows()[2].bound, 1.5);
        let s = bec_bzt_system(&BecParamsBzt::new(1.0, 1.0).unwrap());
        assert!((s.rows()[0].bound - 2.0 / 3.0).abs() < 1e-15 && s.rows()[2].bound == 0.0);
        let s = bec_bzt_system(&BecParamsBzt::new(0.6, 0.8).unwrap());
        let (r0, _) = max_weighted_rate(&s, &[1.0, 0.0]).unwrap();
        assert!((r0 - 0.5).abs() < 1e-12);
        assert!((s.rows()[2].bound - 0.4).abs() < 1e-12);
        assert!(BecParamsBzt::new(1.1, 0.0).is_err());
    }

    #[test]
    fn capacity_system_examples() {
        let s = bec_capacity_system(&BecParamsCap::new(0.0, 1.0, 1.0).unwrap());
        assert!(polytope_contains(&s, &RateVector::new(vec![0.5, 0.5]).unwrap()).unwrap());
        let (v, p) = max_weighted_rate(&s, &[1.0, 1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!((p.coords[0] - 0.5).abs() < 1e-12);
        let s = bec_capacity_system(&BecParamsCap::new(1.0, 1.0, 1.0).unwrap());
        assert!((max_weighted_rate(&s, &[1.0, 0.0]).unwrap().0 - 2.0 / 3.0).abs() < 1e-12);
        assert!(BecParamsCap::new(0.5, 0.5, 0.4).is_err());
    }

    #[test]
    fn closed_forms_match_information_quantities() {
        let ch = make_bec_example();
        for &(p, q) in &[(0.0, 0.0), (0.3, 0.7), (0.6, 1.0), (1.0, 1.0)] {
            let aux = bec_bzt_aux(&BecParamsBzt { p, q }).unwrap();
            let i = ChainInfo::compute(&aux, &ch).unwrap();
            assert!((i.u1_y3 - (p / 6.0 + q / 2.0)).abs() < 1e-9);
            assert!((i.u1_y2 - p).abs() < 1e-9);
            assert!((i.x_y1_given_u1 - ((1.0 - p) / 2.0 + 1.0 - q)).abs() < 1e-9);
            let s = eval_bzt(&aux, &ch).unwrap();
            let c = bec_bzt_system(&BecParamsBzt { p, q });
            for w in weights_2d(19) {
                let a = max_weighted_rate(&s, &w.1).unwrap().0;
                let b = max_weighted_rate(&c, &w.1).unwrap().0;
                assert!((a - b).abs() < 1e-9);
            }
        }
        for &(r, s, t) in &[(0.0, 1.0, 1.0), (0.2, 0.5, 0.7), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0)] {
            let aux = bec_capacity_aux(&BecParamsCap { r, s, t }).unwrap();
            let sys = eval_theorem1(&aux, &ch).unwrap();
            let c = bec_capacity_system(&BecParamsCap { r, s, t });
            for w in weights_2d(19) {
                let a = max_weighted_rate(&sys, &w.1).unwrap().0;
                let b = max_weighted_rate(&c, &w.1).unwrap().0;
                assert!((a - b).abs() < 1e-9, "({r},{s},{t}) at {:?}", w.1);
            }
        }
    }

    #[test]
    fn box_vertices_match_enumeration() {
        use crate::region::PreparedSystem;
        for &(r, s, t) in &[(0.0, 0.0, 0.0), (0.2, 0.5, 0.7), (1.0, 1.0, 1.0), (0.1, 0.9, 0.3)] {
            let sys = bec_capacity_system(&BecParamsCap { r, s, t });
            let fast = box_sum_vertices(&sys).unwrap();
            let slow = PreparedSystem::new(&sys).unwrap();
            // The origin never reaches the hull's upper boundary.
            for v in slow.vertices().iter().filter(|v| v[0] > 0.0 || v[1] > 0.0) {
                assert!(fast.iter().any(|f| (f[0] - v[0]).abs() < 1e-12 && (f[1] - v[1]).abs() < 1e-12));
            }
            for f in fast {
                let p = RateVector::new(f.to_vec()).unwrap();
                assert!(polytope_contains(&sys, &p).unwrap());
            }
        }
    }

    #[test]
    fn capacity_fn_values() {
        assert_eq!(gaussian_capacity_fn(0.0).unwrap(), 0.0);
        assert!((gaussian_capacity_fn(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((gaussian_capacity_fn(3.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(gaussian_capacity_fn(-0.1).is_err());
    }

    #[test]
    fn gaussian_bzt_edge_cases() {
        let (p, n) = GAUSSIAN_EXAMPLE;
        let gp = GaussianParams { power: p, noise: n, p1: p, fractions: GaussianFractions::Bzt { alpha: 0.0, beta: 0.0 } };
        let s = gaussian_bzt_system(&gp).unwrap();
        assert_eq!(max_r0_at_r1(&s, 0.0), Some(0.0));
        let gp = GaussianParams { fractions: GaussianFractions::Bzt { alpha: 1.0, beta: 0.0 }, ..gp };
        let s = gaussian_bzt_system(&gp).unwrap();
        let expect = gaussian_capacity_fn(p / (n[0] + n[1] + n[2])).unwrap();
        assert!((s.rows()[0].bound - expect).abs() < 1e-15);
        let bad = GaussianParams { p1: 1.5, ..gp };
        assert!(gaussian_bzt_system(&bad).is_err());
    }

    #[test]
    fn aligned_inner_rows_are_bzt_sums() {
        let (p, n) = GAUSSIAN_EXAMPLE;
        let (alpha, beta, p1) = (0.3, 0.6, 0.45);
        let bzt = gaussian_bzt_system(&GaussianParams {
            power: p,
            noise: n,
            p1,
            fractions: GaussianFractions::Bzt { alpha, beta },
        })
        .unwrap();
        let inner = gaussian_inner_system(&GaussianParams {
            power: p,
            noise: n,
            p1,
            fractions: GaussianFractions::Inner { a1: alpha, a2: beta, b1: 0.0, b2: 0.0 },
        })
        .unwrap();
        let (b, i) = (bzt.rows(), inner.rows());
        assert!((i[0].bound - b[0].bound).abs() < 1e-15);
        assert!((i[1].bound - b[1].bound).abs() < 1e-15);
        assert!((i[2].bound - (b[0].bound + b[2].bound)).abs() < 1e-12);
        assert!((i[3].bound - (b[1].bound + b[2].bound)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_sweeps_stay_below_the_optimised_bzt_point() {
        let (power, noise) = GAUSSIAN_EXAMPLE;
        let ws = weights_2d(DEFAULT_ANGLES);
        let r1 = 0.5 * (0.49f64 / 0.3).log2();
        let best = gaussian_bzt_max_r0(power, noise, r1).unwrap().r0;
        let bzt = gaussian_frontier(GaussianKind::Bzt, power, noise, 40, &ws).unwrap();
        let swept = bzt.region.max_r1_at(0.0).unwrap();
        assert!(swept > r1);
        let inner = gaussian_frontier(GaussianKind::Inner, power, noise, 6, &ws).unwrap();
        inner.region.check_invariants(1e-9).unwrap();
        // No grid point of the BZT scheme beats the continuous optimum.
        for p in bzt.region.boundary_points.iter() {
            if p.coords[1] >= r1 {
                assert!(p.coords[0] <= best + 1e-9, "{:?} vs {best}", p.coords);
            }
        }
        assert!(gaussian_frontier(GaussianKind::Bzt, power, noise, 0, &ws).is_err());
        assert!("capacity".parse::<GaussianKind>().is_err());
    }
}
