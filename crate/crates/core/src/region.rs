//! Rate vectors, per-distribution constraint polytopes and support-function
//! approximations of unions of polytopes.
//!
//! Systems have at most 3 coordinates and a dozen or so rows, so linear
//! programs are solved exactly by enumerating basic solutions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when testing membership.
pub const CONTAIN_TOL: f64 = 1e-9;
/// Slack allowed by frontier invariants.
pub const FRONTIER_TOL: f64 = 1e-6;
/// Default number of weight angles for 2-D frontiers (0.5 degree steps).
pub const DEFAULT_ANGLES: usize = 181;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty polytope")]
    Empty,
    #[error("unbounded in direction {0:?}")]
    Unbounded(Vec<f64>),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid row: {0}")]
    InvalidRow(String),
}

pub fn coordinate_labels(dim: usize) -> &'static [&'static str] {
    match dim {
        2 => &["R0", "R1"],
        _ => &["R0", "R1", "R2"],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVector {
    pub coords: Vec<f64>,
}

impl RateVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if !(2..=3).contains(&coords.len()) {
            return Err(GeometryError::Dimension(format!("{} coordinates", coords.len())));
        }
        if coords.iter().any(|c| !c.is_finite() || *c < -CONTAIN_TOL) {
            return Err(GeometryError::Dimension(format!("negative rate in {coords:?}")));
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.coords.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRateInequality {
    pub coeffs: Vec<i64>,
    pub bound: f64,
}

impl LinearRateInequality {
    pub fn new(coeffs: Vec<i64>, bound: f64) -> Result<Self, GeometryError> {
        if coeffs.iter().all(|&c| c == 0) {
            return Err(GeometryError::InvalidRow("all coefficients are zero".into()));
        }
        if !bound.is_finite() {
            return Err(GeometryError::InvalidRow(format!("bound {bound}")));
        }
        Ok(Self { coeffs, bound })
    }

    pub fn lhs(&self, pt: &[f64]) -> f64 {
        self.coeffs.iter().zip(pt).map(|(&a, x)| a as f64 * x).sum()
    }

    pub fn render(&self) -> String {
        let labels = coordinate_labels(self.coeffs.len());
        let mut s = String::new();
        for (c, l) in self.coeffs.iter().zip(labels) {
            if *c == 0 {
                continue;
            }
            if !s.is_empty() {
                s.push_str(if *c > 0 { " + " } else { " - " });
            } else if *c < 0 {
                s.push('-');
            }
            if c.abs() != 1 {
                let _ = write!(s, "{}", c.abs());
            }
            s.push_str(l);
        }
        let _ = write!(s, " <= {}", self.bound);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConstraintSystem {
    dim: usize,
    rows: Vec<LinearRateInequality>,
}

impl RateConstraintSystem {
    pub fn new(dim: usize, rows: Vec<LinearRateInequality>) -> Result<Self, GeometryError> {
        if !(2..=3).contains(&dim) {
            return Err(GeometryError::Dimension(format!("dimension {dim}")));
        }
        if let Some(r) = rows.iter().find(|r| r.coeffs.len() != dim) {
            return Err(GeometryError::Dimension(format!(
                "row with {} coefficients in a {dim}-D system",
                r.coeffs.len()
            )));
        }
        Ok(Self { dim, rows })
    }

    /// Builds from `(coeffs, bound)` pairs; panics on malformed rows, so
    /// only for fixed row templates.
    pub fn from_pairs(dim: usize, rows: &[(&[i64], f64)]) -> Self {
        let rows = rows
            .iter()
            .map(|(c, b)| LinearRateInequality::new(c.to_vec(), *b).expect("template row"))
            .collect();
        Self::new(dim, rows).expect("template system")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[LinearRateInequality] {
        &self.rows
    }

    pub fn without_row(&self, i: usize) -> Self {
        let mut rows = self.rows.clone();
        rows.remove(i);
        Self { dim: self.dim, rows }
    }

    /// Fixes coordinate `axis` to `value` and drops it.
    pub fn slice(&self, axis: usize, value: f64) -> Result<Self, GeometryError> {
        if self.dim != 3 || axis >= 3 {
            return Err(GeometryError::Dimension("slicing needs a 3-D system".into()));
        }
        let mut rows = Vec::new();
        for r in &self.rows {
            let mut coeffs = r.coeffs.clone();
            let c = coeffs.remove(axis);
            let bound = r.bound - c as f64 * value;
            if coeffs.iter().all(|&a| a == 0) {
                if bound < -CONTAIN_TOL {
                    // Infeasible slice: keep it infeasible.
                    rows.push(LinearRateInequality::new(vec![1, 0], bound)?);
                }
                continue;
            }
            rows.push(LinearRateInequality::new(coeffs, bound)?);
        }
        Self::new(2, rows)
    }

    pub fn render(&self) -> String {
        self.rows.iter().map(|r| r.render() + "\n").collect()
    }
}

pub fn polytope_contains(
    sys: &RateConstraintSystem,
    pt: &RateVector,
) -> Result<bool, GeometryError> {
    if sys.dim != pt.dim() {
        return Err(GeometryError::Dimension(format!(
            "{}-D point against a {}-D system",
            pt.dim(),
            sys.dim
        )));
    }
    Ok(contains_raw(sys, &pt.coords))
}

fn contains_raw(sys: &RateConstraintSystem, x: &[f64]) -> bool {
    x.iter().all(|&c| c >= -CONTAIN_TOL)
        && sys.rows.iter().all(|r| r.lhs(x) <= r.bound + CONTAIN_TOL)
}

/// Half-space `a.x <= b` in float form, nonnegativity included.
fn planes(sys: &RateConstraintSystem) -> Vec<(Vec<f64>, f64)> {
    let d = sys.dim;
    let mut out: Vec<(Vec<f64>, f64)> = sys
        .rows
        .iter()
        .map(|r| (r.coeffs.iter().map(|&c| c as f64).collect(), r.bound))
        .collect();
    for i in 0..d {
        let mut a = vec![0.0; d];
        a[i] = -1.0;
        out.push((a, 0.0));
    }
    out
}

fn det2(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn det3(m: [&[f64]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn feasible(planes: &[(Vec<f64>, f64)], x: &[f64]) -> bool {
    planes.iter().all(|(a, b)| {
        let lhs: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
        lhs <= b + CONTAIN_TOL * (1.0 + b.abs())
    })
}

/// Unit extreme rays of the recession cone `{d >= 0 : A d <= 0}`.
fn recession_rays(planes: &[(Vec<f64>, f64)], dim: usize) -> Vec<Vec<f64>> {
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    if dim == 2 {
        for (a, _) in planes {
            candidates.push(vec![-a[1], a[0]]);
            candidates.push(vec![a[1], -a[0]]);
        }
    } else {
        for i in 0..planes.len() {
            for j in i + 1..planes.len() {
                let c = cross(&planes[i].0, &planes[j].0);
                candidates.push(c.iter().map(|v| -v).collect());
                candidates.push(c);
            }
        }
    }
    candidates
        .into_iter()
        .filter_map(|r| {
            let norm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return None;
            }
            let r: Vec<f64> = r.iter().map(|v| v / norm).collect();
            let in_cone = planes
                .iter()
                .all(|(a, _)| a.iter().zip(&r).map(|(p, q)| p * q).sum::<f64>() <= 1e-12);
            in_cone.then_some(r)
        })
        .collect()
}

fn basic_solutions(planes: &[(Vec<f64>, f64)], dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut consider = |x: Vec<f64>| {
        if feasible(planes, &x) {
            out.push(x.into_iter().map(|v| v.max(0.0)).collect::<Vec<f64>>());
        }
    };
    let n = planes.len();
    if dim == 2 {
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&planes[i], &planes[j]);
                let det = det2(&a.0, &b.0);
                if det.abs() < 1e-14 {
                    continue;
                }
                let x0 = (a.1 * b.0[1] - a.0[1] * b.1) / det;
                let x1 = (a.0[0] * b.1 - a.1 * b.0[0]) / det;
                consider(vec![x0, x1]);
            }
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let m = [&planes[i].0[..], &planes[j].0[..], &planes[k].0[..]];
                    let det = det3(m);
                    if det.abs() < 1e-14 {
                        continue;
                    }
                    let rhs = [planes[i].1, planes[j].1, planes[k].1];
                    let mut x = vec![0.0; 3];
                    for (c, xc) in x.iter_mut().enumerate() {
                        let mut cols = [[0.0f64; 3]; 3];
                        for r in 0..3 {
                            for cc in 0..3 {
                                cols[r][cc] = if cc == c { rhs[r] } else { m[r][cc] };
                            }
                        }
                        *xc = det3([&cols[0], &cols[1], &cols[2]]) / det;
                    }
                    consider(x);
                }
            }
        }
    }
    out
}

/// Orders candidate optima: higher value first, then lexicographically
/// larger coordinates.
fn better(value: f64, x: &[f64], best_value: f64, best: &[f64]) -> bool {
    let tie = 1e-12 * (1.0 + value.abs().max(best_value.abs()));
    if value > best_value + tie {
        return true;
    }
    if value < best_value - tie {
        return false;
    }
    for (a, b) in x.iter().zip(best) {
        if *a > b + 1e-12 {
            return true;
        }
        if *a < b - 1e-12 {
            return false;
        }
    }
    false
}

fn check_weight(dim: usize, w: &[f64]) -> Result<(), GeometryError> {
    if w.len() != dim {
        return Err(GeometryError::Dimension(format!("{}-D weight for a {dim}-D system", w.len())));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|&v| v == 0.0) {
        return Err(GeometryError::InvalidWeight(format!("{w:?}")));
    }
    Ok(())
}

/// A system with its basic feasible solutions and recession rays enumerated
/// once, for maximisation over many weights.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    rays: Vec<Vec<f64>>,
}

impl PreparedSystem {
    pub fn new(sys: &RateConstraintSystem) -> Result<Self, GeometryError> {
        let planes = planes(sys);
        let vertices = basic_solutions(&planes, sys.dim);
        if vertices.is_empty() {
            return Err(GeometryError::Empty);
        }
        Ok(Self { dim: sys.dim, vertices, rays: recession_rays(&planes, sys.dim) })
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn is_bounded(&self) -> bool {
        self.rays.is_empty()
    }

    /// Exact maximum of `w . R`, ties broken toward the lexicographically
    /// largest maximiser.
    pub fn maximize(&self, w: &[f64]) -> Result<(f64, RateVector), GeometryError> {
        check_weight(self.dim, w)?;
        if let Some(r) = self.rays.iter().find(|r| r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() > 1e-12) {
            return Err(GeometryError::Unbounded(r.clone()));
        }
        let mut best: Option<(f64, &Vec<f64>)> = None;
        for x in &self.vertices {
            let value: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            match best {
                Some((bv, bx)) if !better(value, x, bv, bx) => {}
                _ => best = Some((value, x)),
            }
        }
        let (value, x) = best.expect("at least one vertex");
        Ok((value, RateVector { coords: x.clone() }))
    }
}

/// Exact maximum of `w . R` over the polytope, with its maximiser.
pub fn max_weighted_rate(
    sys: &RateConstraintSystem,
    w: &[f64],
) -> Result<(f64, RateVector), GeometryError> {
    check_weight(sys.dim, w)?;
    PreparedSystem::new(sys)?.maximize(w)
}

/// Evenly spaced 2-D weights `(cos t, sin t)` for `t` in [0, 90] degrees.
pub fn weights_2d(angles: usize) -> Vec<(String, Vec<f64>)> {
    assert!(angles >= 2, "need at least the two axis directions");
    (0..angles)
        .map(|i| {
            let deg = 90.0 * i as f64 / (angles - 1) as f64;
            let w = if i == 0 {
                vec![1.0, 0.0]
            } else if i == angles - 1 {
                vec![0.0, 1.0]
            } else {
                let t = deg.to_radians();
                vec![t.cos(), t.sin()]
            };
            (format_sig(deg), w)
        })
        .collect()
}

/// Weights on the positive octant in spherical steps of `step_deg`,
/// labelled `azimuth:elevation`.
pub fn weights_3d(step_deg: f64) -> Vec<(String, Vec<f64>)> {
    assert!(step_deg > 0.0 && step_deg <= 90.0);
    let steps = (90.0 / step_deg).round() as usize;
    let mut out = Vec::new();
    for ie in 0..=steps {
        let el = 90.0 * ie as f64 / steps as f64;
        let az_steps = if ie == steps { 0 } else { steps };
        for ia in 0..=az_steps {
            let az = 90.0 * ia as f64 / steps.max(1) as f64;
            let (e, a) = (el.to_radians(), az.to_radians());
            let mut w = vec![e.cos() * a.cos(), e.cos() * a.sin(), e.sin()];
            w.iter_mut().for_each(|v| {
                if v.abs() < 1e-15 {
                    *v = 0.0
                }
            });
            out.push((format!("{}:{}", format_sig(az), format_sig(el)), w));
        }
    }
    out
}

/// Shortest decimal that round-trips a 9-significant-digit rounding.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float");
    format!("{rounded}")
}

/// Inner approximation of a union of polytopes by its support function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionApprox {
    pub dim: usize,
    pub weight_labels: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub supports: Vec<f64>,
    pub boundary_points: Vec<RateVector>,
}

/// Running per-weight maxima; merging two accumulators is associative and
/// commutative up to the deterministic tie rule.
#[derive(Debug, Clone)]
pub struct FrontierAccumulator {
    dim: usize,
    labels: Vec<String>,
    weights: Vec<Vec<f64>>,
    best: Vec<Option<(f64, RateVector)>>,
}

impl FrontierAccumulator {
    pub fn new(dim: usize, weights: &[(String, Vec<f64>)]) -> Result<Self, GeometryError> {
        for (_, w) in weights {
            check_weight(dim, w)?;
        }
        Ok(Self {
            dim,
            labels: weights.iter().map(|(l, _)| l.clone()).collect(),
            weights: weights.iter().map(|(_, w)| w.clone()).collect(),
            best: vec![None; weights.len()],
        })
    }

    fn propose(&mut self, i: usize, value: f64, pt: RateVector) {
        match &self.best[i] {
            Some((bv, bp)) if !better(value, &pt.coords, *bv, &bp.coords) => {}
            _ => self.best[i] = Some((value, pt)),
        }
    }

    pub fn offer(&mut self, sys: &RateConstraintSystem) -> Result<(), GeometryError> {
        self.offer_prepared(&PreparedSystem::new(sys)?)
    }

    pub fn offer_prepared(&mut self, sys: &PreparedSystem) -> Result<(), GeometryError> {
        if sys.dim != self.dim {
            return Err(GeometryError::Dimension("mixed dimensions in a union".into()));
        }
        for i in 0..self.weights.len() {
            let (v, p) = sys.maximize(&self.weights[i])?;
            self.propose(i, v, p);
        }
        Ok(())
    }

    pub fn support(&self, i: usize) -> Option<f64> {
        self.best[i].as_ref().map(|(v, _)| *v)
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (i, b) in other.best.into_iter().enumerate() {
            if let Some((v, p)) = b {
                self.propose(i, v, p);
            }
        }
        self
    }

    pub fn finish(self) -> Result<RegionApprox, GeometryError> {
        let mut supports = Vec::with_capacity(self.best.len());
        let mut points = Vec::with_capacity(self.best.len());
        for b in self.best {
            let (v, p) = b.ok_or(GeometryError::Empty)?;
            supports.push(v);
            points.push(p);
        }
        Ok(RegionApprox {
            dim: self.dim,
            weight_labels: self.labels,
            weights: self.weights,
            supports,
            boundary_points: points,
        })
    }
}

/// 2-D union frontier through the convex hull of all polytope vertices.
///
/// Gives the same supports and maximisers as `FrontierAccumulator`, but the
/// per-system cost does not depend on the number of weights, which matters
/// for sweeps over millions of parameter points.
#[derive(Debug, Clone, Default)]
pub struct HullAccumulator {
    points: Vec<[f64; 2]>,
    rays: Vec<[f64; 2]>,
    pruned_len: usize,
}

impl HullAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn offer(&mut self, sys: &RateConstraintSystem) -> Result<(), GeometryError> {
        if sys.dim != 2 {
            return Err(GeometryError::Dimension("hull accumulation is 2-D only".into()));
        }
        let p = PreparedSystem::new(sys)?;
        self.points.extend(p.vertices.iter().map(|v| [v[0], v[1]]));
        self.rays.extend(p.rays.iter().map(|r| [r[0], r[1]]));
        if self.points.len() > 4 * self.pruned_len.max(1024) {
            self.prune();
        }
        Ok(())
    }

    /// Adds points known to lie in the region (typically a polytope's
    /// vertices computed in closed form).
    pub fn offer_points(&mut self, pts: &[[f64; 2]]) {
        self.points.extend_from_slice(pts);
        if self.points.len() > 4 * self.pruned_len.max(1024) {
            self.prune();
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.points.extend(other.points);
        self.rays.extend(other.rays);
        self.prune();
        self
    }

    fn prune(&mut self) {
        self.points = convex_hull(std::mem::take(&mut self.points));
        self.pruned_len = self.points.len();
        self.rays.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        self.rays.dedup();
    }

    pub fn finish(mut self, weights: &[(String, Vec<f64>)]) -> Result<RegionApprox, GeometryError> {
        self.prune();
        if self.points.is_empty() {
            return Err(GeometryError::Empty);
        }
        let mut supports = Vec::with_capacity(weights.len());
        let mut points = Vec::with_capacity(weights.len());
        for (_, w) in weights {
            check_weight(2, w)?;
            if let Some(r) = self.rays.iter().find(|r| r[0] * w[0] + r[1] * w[1] > 1e-12) {
                return Err(GeometryError::Unbounded(r.to_vec()));
            }
            let mut best = (f64::NEG_INFINITY, self.points[0]);
            for p in &self.points {
                let v = p[0] * w[0] + p[1] * w[1];
                if better(v, p, best.0, &best.1) {
                    best = (v, *p);
                }
            }
            supports.push(best.0);
            points.push(RateVector { coords: best.1.to_vec() });
        }
        Ok(RegionApprox {
            dim: 2,
            weight_labels: weights.iter().map(|(l, _)| l.clone()).collect(),
            weights: weights.iter().map(|(_, w)| w.clone()).collect(),
            supports,
            boundary_points: points,
        })
    }
}

/// Convex hull vertices (collinear points dropped), monotone chain.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn union_frontier<'a, I>(
    systems: I,
    weights: &[(String, Vec<f64>)],
) -> Result<RegionApprox, GeometryError>
where
    I: IntoIterator<Item = &'a RateConstraintSystem>,
{
    let mut it = systems.into_iter().peekable();
    let dim = it.peek().ok_or(GeometryError::Empty)?.dim;
    let mut acc = FrontierAccumulator::new(dim, weights)?;
    for s in it {
        acc.offer(s)?;
    }
    acc.finish()
}

/// Per-weight comparison of two frontiers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub margin: f64,
    /// `support_a - support_b` per weight.
    pub gaps: Vec<f64>,
    /// Weights where `a` exceeds `b` by more than `margin`.
    pub a_exceeds: Vec<usize>,
    /// Weights where `b` exceeds `a` by more than `margin`.
    pub b_exceeds: Vec<usize>,
}

pub fn region_dominates(
    a: &RegionApprox,
    b: &RegionApprox,
    margin: f64,
) -> Result<DominanceReport, GeometryError> {
    if a.dim != b.dim || a.weights.len() != b.weights.len() {
        return Err(GeometryError::Dimension("regions sampled on different weights".into()));
    }
    for (wa, wb) in a.weights.iter().zip(&b.weights) {
        if wa.iter().zip(wb).any(|(x, y)| (x - y).abs() > 1e-12) {
            return Err(GeometryError::InvalidWeight("weight sets differ".into()));
        }
    }
    let gaps: Vec<f64> = a.supports.iter().zip(&b.supports).map(|(x, y)| x - y).collect();
    Ok(DominanceReport {
        margin,
        a_exceeds: (0..gaps.len()).filter(|&i| gaps[i] > margin).collect(),
        b_exceeds: (0..gaps.len()).filter(|&i| gaps[i] < -margin).collect(),
        gaps,
    })
}

impl RegionApprox {
    /// Checks the stored points against the stored supports.
    pub fn check_invariants(&self, tol: f64) -> Result<(), String> {
        for (i, w) in self.weights.iter().enumerate() {
            let own = self.boundary_points[i].dot(w);
            if (own - self.supports[i]).abs() > tol {
                return Err(format!("point {i} does not attain its support"));
            }
            for (k, p) in self.boundary_points.iter().enumerate() {
                if p.dot(w) > self.supports[i] + tol {
                    return Err(format!("point {k} exceeds the support at weight {i}"));
                }
            }
        }
        for (i, p) in self.boundary_points.iter().enumerate() {
            for q in &self.boundary_points {
                if q.coords.iter().zip(&p.coords).all(|(a, b)| *a > b + tol) {
                    return Err(format!("point {i} is strictly dominated"));
                }
            }
        }
        Ok(())
    }

    /// Upper concave hull of the 2-D boundary, from the R1 axis to the R0
    /// axis, with near-collinear points (within `tol`) removed.
    pub fn vertices_2d(&self, tol: f64) -> Vec<[f64; 2]> {
        assert_eq!(self.dim, 2, "vertices_2d on a {}-D region", self.dim);
        let mut pts: Vec<[f64; 2]> =
            self.boundary_points.iter().map(|p| [p.coords[0], p.coords[1]]).collect();
        let top = pts.iter().cloned().fold(f64::NEG_INFINITY, |m, p| m.max(p[1]));
        let right = pts.iter().cloned().fold(f64::NEG_INFINITY, |m, p| m.max(p[0]));
        pts.push([0.0, top]);
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(b[1].total_cmp(&a[1])));
        let mut hull: Vec<[f64; 2]> = Vec::new();
        for p in pts {
            if hull.last().is_some_and(|q| (q[0] - p[0]).abs() <= 1e-15) {
                continue;
            }
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let turn = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                if turn >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        if hull.last().is_some_and(|q| q[1] > 0.0) {
            hull.push([right, 0.0]);
        }
        let mut changed = true;
        while changed && hull.len() > 2 {
            changed = false;
            for i in 1..hull.len() - 1 {
                let (a, b, c) = (hull[i - 1], hull[i], hull[i + 1]);
                let len = ((c[0] - a[0]).powi(2) + (c[1] - a[1]).powi(2)).sqrt();
                let dist = ((c[0] - a[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (c[1] - a[1])).abs() / len;
                if dist < tol {
                    hull.remove(i);
                    changed = true;
                    break;
                }
            }
        }
        hull
    }

    /// Largest R1 on the 2-D hull at the given R0, if R0 is in range.
    pub fn max_r1_at(&self, r0: f64) -> Option<f64> {
        let hull = self.vertices_2d(0.0);
        for seg in hull.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if r0 >= a[0] - 1e-12 && r0 <= b[0] + 1e-12 {
                if (b[0] - a[0]).abs() < 1e-15 {
                    return Some(a[1].max(b[1]));
                }
                let t = ((r0 - a[0]) / (b[0] - a[0])).clamp(0.0, 1.0);
                return Some(a[1] + t * (b[1] - a[1]));
            }
        }
        None
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("weight_angle_deg,support");
        for l in coordinate_labels(self.dim) {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for i in 0..self.supports.len() {
            let _ = write!(s, "{},{}", self.weight_labels[i], format_sig(self.supports[i]));
            for c in &self.boundary_points[i].coords {
                let _ = write!(s, ",{}", format_sig(*c));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys2(rows: &[(&[i64], f64)]) -> RateConstraintSystem {
        RateConstraintSystem::from_pairs(2, rows)
    }

    #[test]
    fn contains_examples() {
        let s = sys2(&[(&[1, 0], 0.5), (&[1, 1], 1.0)]);
        assert!(polytope_contains(&s, &RateVector::new(vec![0.0, 0.0]).unwrap()).unwrap());
        assert!(polytope_contains(&s, &RateVector::new(vec![0.5, 0.5]).unwrap()).unwrap());
        assert!(!polytope_contains(&s, &RateVector::new(vec![0.5, 0.51]).unwrap()).unwrap());
        assert!(polytope_contains(&s, &RateVector::new(vec![0.0, 0.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn single_binding_row() {
        let s = sys2(&[(&[1, 0], 0.3), (&[1, 1], 0.8)]);
        let (v, p) = max_weighted_rate(&s, &[1.0, 0.0]).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
        assert!((p.coords[0] - 0.3).abs() < 1e-12);
        // tie along R0 = 0.3 broken toward the larger R1
        assert!((p.coords[1] - 0.5).abs() < 1e-12);
        let (v, p) = max_weighted_rate(&s, &[0.0, 1.0]).unwrap();
        assert!((v - 0.8).abs() < 1e-12 && p.coords[0] < 1e-12 + 0.0);
    }

    #[test]
    fn unbounded_and_empty_are_errors() {
        let s = sys2(&[(&[1, 0], 1.0)]);
        assert!(matches!(max_weighted_rate(&s, &[0.0, 1.0]), Err(GeometryError::Unbounded(_))));
        assert!(max_weighted_rate(&s, &[1.0, 0.0]).is_ok());
        let e = sys2(&[(&[1, 1], -1.0)]);
        assert_eq!(max_weighted_rate(&e, &[1.0, 1.0]), Err(GeometryError::Empty));
        assert!(max_weighted_rate(&s, &[-1.0, 1.0]).is_err());
    }

    #[test]
    fn three_dimensional_lp() {
        let s = RateConstraintSystem::from_pairs(
            3,
            &[(&[1, 0, 0], 1.0), (&[0, 1, 0], 1.0), (&[0, 0, 1], 1.0), (&[1, 1, 1], 2.0)],
        );
        let (v, _) = max_weighted_rate(&s, &[1.0, 1.0, 1.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let (v, p) = max_weighted_rate(&s, &[0.0, 0.0, 1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!((p.coords[0] - 1.0).abs() < 1e-12);
        let slice = s.slice(1, 0.0).unwrap();
        let (v, _) = max_weighted_rate(&slice, &[1.0, 1.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn frontier_of_two_boxes() {
        let a = sys2(&[(&[1, 0], 1.0), (&[0, 1], 0.2)]);
        let b = sys2(&[(&[1, 0], 0.2), (&[0, 1], 1.0)]);
        let w = weights_2d(DEFAULT_ANGLES);
        let r = union_frontier([&a, &b], &w).unwrap();
        r.check_invariants(FRONTIER_TOL).unwrap();
        let v = r.vertices_2d(1e-9);
        assert_eq!(v, vec![[0.0, 1.0], [0.2, 1.0], [1.0, 0.2], [1.0, 0.0]]);
        assert!((r.max_r1_at(0.6).unwrap() - 0.6).abs() < 1e-12);
        let same = region_dominates(&r, &r, 1e-9).unwrap();
        assert!(same.a_exceeds.is_empty() && same.b_exceeds.is_empty());
    }

    #[test]
    fn hull_accumulator_matches_direct_union() {
        let systems = [
            sys2(&[(&[1, 0], 0.7), (&[0, 1], 0.3)]),
            sys2(&[(&[1, 0], 0.2), (&[1, 1], 1.0)]),
            sys2(&[(&[2, 1], 1.0), (&[0, 1], 0.9)]),
            sys2(&[(&[1, 0], 0.5), (&[1, 1], 0.8), (&[0, 1], 0.6)]),
        ];
        let w = weights_2d(DEFAULT_ANGLES);
        let direct = union_frontier(systems.iter(), &w).unwrap();
        let mut hull = HullAccumulator::new();
        for s in &systems {
            hull.offer(s).unwrap();
        }
        let via_hull = hull.finish(&w).unwrap();
        for i in 0..w.len() {
            assert!((direct.supports[i] - via_hull.supports[i]).abs() < 1e-12);
            for (a, b) in direct.boundary_points[i].coords.iter().zip(&via_hull.boundary_points[i].coords) {
                assert!((a - b).abs() < 1e-12, "weight {i}");
            }
        }
    }

    #[test]
    fn csv_layout() {
        let a = sys2(&[(&[1, 1], 1.0)]);
        let r = union_frontier([&a], &weights_2d(3)).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "weight_angle_deg,support,R0,R1");
        assert_eq!(lines[1], "0,1,1,0");
        assert_eq!(lines[2], "45,0.707106781,1,0");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333");
    }

    #[test]
    fn weights_3d_cover_the_octant() {
        let w = weights_3d(45.0);
        assert_eq!(w.len(), 7);
        assert!(w.iter().all(|(_, v)| (v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12));
    }
}
