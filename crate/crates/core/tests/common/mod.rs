//! Sampled structural checks shared by the property and acceptance suites.
//! Each check draws its inputs from a seed and returns a description of
//! the first violation.

#![allow(dead_code)]

use rand::Rng;
use rrw_core::bounds::*;
use rrw_core::channel::BroadcastChannel3;
use rrw_core::prob::{
    compose_channels, conditional_mi, mutual_information, FinitePmf, JointPmf,
};
use rrw_core::region::{
    max_weighted_rate, weights_2d, PreparedSystem, RateConstraintSystem,
};
use rrw_core::sampling::*;

pub type Check = Result<(), String>;

fn fail<T>(msg: String) -> Result<T, String> {
    Err(msg)
}

pub fn small_channel<R: Rng>(rng: &mut R) -> BroadcastChannel3 {
    let nx = rng.random_range(2..=3);
    let outs = [rng.random_range(2..=3), rng.random_range(2..=3), rng.random_range(2..=3)];
    random_multilevel_channel(rng, nx, outs, 0.8)
}

pub fn small_chain<R: Rng>(rng: &mut R, nx: usize) -> AuxChain {
    let (a, b) = (rng.random_range(1..=3), rng.random_range(1..=4));
    AuxChain::new(random_pmf(rng, a, 0.7), random_matrix(rng, a, b, 0.7), random_matrix(rng, b, nx, 0.7)).unwrap()
}

pub fn small_single<R: Rng>(rng: &mut R, nx: usize) -> AuxChain {
    let a = rng.random_range(1..=4);
    AuxChain::single(random_pmf(rng, a, 0.7), random_matrix(rng, a, nx, 0.7)).unwrap()
}

pub fn small_triple<R: Rng>(rng: &mut R, nx: usize) -> AuxTriple {
    let s = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3), nx];
    AuxTriple::from_joint(s, &random_masses(rng, s.iter().product(), 0.5)).unwrap()
}

pub fn supports(sys: &RateConstraintSystem, weights: &[(String, Vec<f64>)]) -> Vec<f64> {
    let p = PreparedSystem::new(sys).unwrap();
    weights.iter().map(|(_, w)| p.maximize(w).unwrap().0).collect()
}

fn same_supports(a: &[f64], b: &[f64], tol: f64, what: &str) -> Check {
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if (x - y).abs() > tol {
            return fail(format!("{what}: weight {i} supports {x} vs {y}"));
        }
    }
    Ok(())
}

fn satisfies(rows: &[(Vec<f64>, f64)], x: &[f64], tol: f64) -> bool {
    x.iter().all(|v| *v >= -tol)
        && rows.iter().all(|(c, b)| c.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() <= b + tol)
}

fn float_rows<const D: usize>(rows: &[([i64; D], f64)]) -> Vec<(Vec<f64>, f64)> {
    rows.iter().map(|(c, b)| (c.iter().map(|&v| v as f64).collect(), *b)).collect()
}

/// Entropy by direct summation of `-p log2 p`.
fn h(ps: &[f64]) -> f64 {
    ps.iter().filter(|p| **p > 0.0).map(|p| -p * p.log2()).sum()
}

/// `H(A,B) = H(A) + H(B|A)` with `H(B|A)` summed row by row, and
/// `I(A,C;B) = I(C;B) + I(A;B|C)` on a random three-way joint.
pub fn chain_rule(seed: u64, tol: f64) -> Check {
    let mut rng = rng_for(seed, 11);
    let d = [rng.random_range(2..=4), rng.random_range(2..=4), rng.random_range(2..=3)];
    let j = JointPmf::new(d.to_vec(), random_masses(&mut rng, d.iter().product(), 0.6)).unwrap();
    let ab = j.marginal(&[0, 1]).unwrap();
    let mut h_b_given_a = 0.0;
    for a in 0..d[0] {
        let row = &ab.probs()[a * d[1]..(a + 1) * d[1]];
        let pa: f64 = row.iter().sum();
        if pa > 0.0 {
            h_b_given_a += pa * h(&row.iter().map(|p| p / pa).collect::<Vec<_>>());
        }
    }
    let lhs = h(ab.probs());
    let rhs = h(j.marginal(&[0]).unwrap().probs()) + h_b_given_a;
    if (lhs - rhs).abs() > tol {
        return fail(format!("H(A,B) {lhs} vs H(A)+H(B|A) {rhs}"));
    }
    // I(A,C;B): merge A and C into one axis.
    let acb = j.marginal(&[0, 2, 1]).unwrap();
    let merged = JointPmf::new(vec![d[0] * d[2], d[1]], acb.probs().to_vec()).unwrap();
    let lhs = mutual_information(&merged).unwrap();
    let cb = j.marginal(&[2, 1]).unwrap();
    let rhs = mutual_information(&cb).unwrap() + conditional_mi(&j.marginal(&[0, 1, 2]).unwrap()).unwrap();
    if (lhs - rhs).abs() > tol {
        return fail(format!("I(A,C;B) {lhs} vs I(C;B)+I(A;B|C) {rhs}"));
    }
    Ok(())
}

/// `I(A;C) <= I(A;B)` for `A -> B -> C` built by composing channels.
pub fn data_processing(seed: u64, tol: f64) -> Check {
    let mut rng = rng_for(seed, 12);
    let (na, nb, nc) = (rng.random_range(2..=4), rng.random_range(2..=4), rng.random_range(2..=4));
    let p = random_pmf(&mut rng, na, 0.7);
    let m1 = random_matrix(&mut rng, na, nb, 0.7);
    let m2 = random_matrix(&mut rng, nb, nc, 0.7);
    let ab = mutual_information(&JointPmf::from_input_and_channel(&p, &m1).unwrap()).unwrap();
    let ac = mutual_information(&JointPmf::from_input_and_channel(&p, &compose_channels(&m1, &m2).unwrap()).unwrap())
        .unwrap();
    if ac > ab + tol {
        return fail(format!("I(A;C) {ac} > I(A;B) {ab}"));
    }
    Ok(())
}

/// Support function of a union of sampled capacity-region polytopes is
/// sublinear: `h(l w1 + (1-l) w2) <= l h(w1) + (1-l) h(w2)`.
pub fn region_convexity(seed: u64, tol: f64) -> Check {
    let mut rng = rng_for(seed, 13);
    let ch = small_channel(&mut rng);
    let systems: Vec<PreparedSystem> = (0..4)
        .map(|_| PreparedSystem::new(&eval_theorem1(&small_chain(&mut rng, ch.input_size()), &ch).unwrap()).unwrap())
        .collect();
    let support = |w: &[f64]| systems.iter().map(|s| s.maximize(w).unwrap().0).fold(f64::NEG_INFINITY, f64::max);
    let ws = weights_2d(19);
    for pair in ws.windows(3) {
        let (w1, w2) = (&pair[0].1, &pair[2].1);
        let l: f64 = rng.random();
        let mix: Vec<f64> = w1.iter().zip(w2).map(|(a, b)| l * a + (1.0 - l) * b).collect();
        let lhs = support(&mix);
        let rhs = l * support(w1) + (1.0 - l) * support(w2);
        if lhs > rhs + tol {
            return fail(format!("support at {mix:?}: {lhs} > {rhs}"));
        }
    }
    Ok(())
}

/// Every vertex of the BZT polytope of `U` lies in the capacity-region
/// polytope with `U1 = U2 = U`.
pub fn bzt_in_capacity(seed: u64, tol: f64) -> Check {
    let mut rng = rng_for(seed, 14);
    let ch = small_channel(&mut rng);
    let u = small_single(&mut rng, ch.input_size());
    let bzt = PreparedSystem::new(&eval_bzt(&u, &ch).unwrap()).unwrap();
    let cap = eval_theorem1(&u, &ch).unwrap();
    for v in bzt.vertices() {
        if cap.rows().iter().any(|r| r.lhs(v) > r.bound + tol) {
            return fail(format!("BZT vertex {v:?} outside the U1=U2 capacity polytope"));
        }
    }
    Ok(())
}

/// The two-indirect-decoder bound with `U3 = U1` equals the bound with
/// only receiver 2 decoding indirectly.
pub fn prop5_u3_eq_u1(seed: u64, tol: f64) -> Check {
    let mut rng = rng_for(seed, 15);
    let ch = small_channel(&mut rng);
    let chain = small_chain(&mut rng, ch.input_size());
    let t = AuxTriple::from_chain_u3_eq_u1(&chain).unwrap();
    let w = weights_2d(91);
    same_supports(
        &supports(&eval_prop5_inner(&t, &ch).unwrap(), &w),
        &supports(&eval_setu3u1(&chain, &ch).unwrap(), &w),
        tol,
        "U3=U1",
    )
}

/// The triple with `V2` dropped, i.e. `U2 = U1`.
pub fn collapse_u2(t: &AuxTriple) -> AuxTriple {
    let [a, b, c, d] = t.sizes();
    let j = t.joint_aux();
    let mut out = vec![0.0; a * c * d];
    for u in 0..a {
        for v in 0..b {
            for w in 0..c {
                for x in 0..d {
                    out[(u * c + w) * d + x] += j[((u * b + v) * c + w) * d + x];
                }
            }
        }
    }
    AuxTriple::from_joint([a, 1, c, d], &out).unwrap()
}

/// Feasible `R1` range of `(R0, R1, total - R1)` in the three-message rows.
fn shift_feasible(rows: &[(Vec<f64>, f64)], r0: f64, total: f64, tol: f64) -> bool {
    let (mut lo, mut hi) = (0.0f64, total.max(0.0));
    for (c, b) in rows {
        let k = c[1] - c[2];
        let rest = b - c[0] * r0 - c[2] * total;
        if k > 0.0 {
            hi = hi.min(rest / k);
        } else if k < 0.0 {
            lo = lo.max(rest / k);
        } else if rest < -tol {
            return false;
        }
    }
    lo <= hi + tol
}

/// Slice `R1 = 0` of the three-message bound against the two-message
/// bound at the same triple: the slice is contained in it, and every point
/// of it is reached either by relabelling private rate of the three-message
/// bound at the same triple or by its slice at `U2 = U1`.
pub fn thm2_slice_vs_prop5(seed: u64, points: usize, tol: f64) -> Check {
    let mut rng = rng_for(seed, 16);
    let ch = small_channel(&mut rng);
    let t = small_triple(&mut rng, ch.input_size());
    let i = TripleInfo::compute(&t, &ch).unwrap();
    let p5 = float_rows(&prop5_rows(&i));
    let t2 = float_rows(&thm2_rows(&i));
    let slice: Vec<([i64; 2], f64)> = thm2_rows(&i)
        .iter()
        .filter(|(c, _)| c[0] != 0 || c[2] != 0)
        .map(|(c, b)| ([c[0], c[2]], *b))
        .collect();
    if let Ok(p) = PreparedSystem::new(&RateConstraintSystem::from_pairs(
        2,
        &slice.iter().map(|(c, b)| (&c[..], *b)).collect::<Vec<_>>(),
    )) {
        for v in p.vertices() {
            if !satisfies(&p5, v, tol) {
                return fail(format!("slice vertex {v:?} outside the two-message bound"));
            }
        }
    }
    let collapsed = TripleInfo::compute(&collapse_u2(&t), &ch).unwrap();
    let t2c = float_rows(&thm2_rows(&collapsed));
    let Ok(p) = PreparedSystem::new(&RateConstraintSystem::from_pairs(
        2,
        &prop5_rows(&i).iter().map(|(c, b)| (&c[..], *b)).collect::<Vec<_>>(),
    )) else {
        return Ok(());
    };
    let verts = p.vertices().to_vec();
    let mut candidates: Vec<Vec<f64>> = verts.clone();
    for _ in 0..points {
        let w = random_masses(&mut rng, verts.len(), 1.0);
        candidates.push((0..2).map(|k| verts.iter().zip(&w).map(|(v, a)| a * v[k]).sum()).collect());
    }
    for x in candidates {
        if !satisfies(&p5, &x, tol) {
            continue;
        }
        let a = shift_feasible(&t2, x[0], x[1], tol);
        let b = satisfies(&t2c, &[x[0], 0.0, x[1]], tol);
        if !a && !b {
            return fail(format!("point {x:?} of the two-message bound is not reached"));
        }
    }
    Ok(())
}

/// Largest `w . x` over the region closed under moving common rate into
/// private rate.
fn shifted_support(p: &PreparedSystem, w: &[f64]) -> f64 {
    if w[0] >= w[1] {
        p.maximize(w).unwrap().0
    } else {
        w[1] * p.maximize(&[1.0, 1.0]).unwrap().0
    }
}

/// The `R2 = 0` slice of the three-message bound at `(U1, U2, U3) =
/// (U, X, U)` equals the two-message region of `U`, and the relaxed form
/// equals that region closed under moving common rate into private rate.
pub fn private_slices(seed: u64, tol: f64) -> Check {
    let mut rng = rng_for(seed, 17);
    let ch = small_channel(&mut rng);
    let nx = ch.input_size();
    let u = small_single(&mut rng, nx).compressed().unwrap();
    let [a, b, _] = u.sizes();
    let ju = u.joint_aux();
    let mut j = vec![0.0; a * nx * nx];
    for uu in 0..a {
        for v in 0..b {
            for x in 0..nx {
                j[(uu * nx + x) * nx + x] += ju[(uu * b + v) * nx + x];
            }
        }
    }
    let t = AuxTriple::from_joint([a, nx, 1, nx], &j).unwrap();
    let slice = eval_thm2_inner(&t, &ch).unwrap().slice(2, 0.0).unwrap();
    let cor = eval_cor1(&u, &ch).unwrap();
    let w = weights_2d(91);
    same_supports(&supports(&slice, &w), &supports(&cor, &w), tol, "R2=0 slice")?;
    let p = PreparedSystem::new(&cor).unwrap();
    let shifted: Vec<f64> = w.iter().map(|(_, w)| shifted_support(&p, w)).collect();
    same_supports(&supports(&eval_redu2deg(&u, &ch).unwrap(), &w), &shifted, tol, "relaxed form")
}

/// Input pmfs on the simplex with denominators `steps`.
pub fn simplex_grid(n: usize, steps: usize) -> Vec<FinitePmf> {
    fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(n, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, steps, &mut Vec::new(), &mut out);
    out.into_iter().map(|c| FinitePmf::new(c.iter().map(|&k| k as f64 / steps as f64).collect()).unwrap()).collect()
}

/// `U = f(X)` as a single auxiliary at input `p`.
pub fn function_aux(p: &FinitePmf, f: &[usize], k: usize) -> AuxChain {
    let nx = p.alphabet_size();
    let mut j = vec![0.0; k * k * nx];
    for x in 0..nx {
        j[(f[x] * k + f[x]) * nx + x] = p.probs()[x];
    }
    AuxChain::from_joint([k, k, nx], &j).unwrap()
}

/// Largest deviation between the outer bound and the best of the three
/// natural auxiliaries over a grid of input pmfs, on one deterministic
/// channel.
pub fn deterministic_gap(ch: &BroadcastChannel3, steps: usize, weights: &[(String, Vec<f64>)]) -> f64 {
    let nx = ch.input_size();
    let y3 = ch.receiver(3);
    let f3: Vec<usize> = (0..nx).map(|x| y3.row(x).iter().position(|p| *p == 1.0).unwrap()).collect();
    let mut inner = vec![0.0f64; weights.len()];
    let mut outer = vec![0.0f64; weights.len()];
    for p in simplex_grid(nx, steps) {
        let auxes = [
            function_aux(&p, &f3, y3.cols()),
            function_aux(&p, &(0..nx).collect::<Vec<_>>(), nx),
            function_aux(&p, &vec![0; nx], 1),
        ];
        for a in &auxes {
            let s = supports(&eval_cor1(a, ch).unwrap(), weights);
            inner.iter_mut().zip(s).for_each(|(m, v)| *m = m.max(v));
        }
        let s = supports(&deterministic_outer(&p, ch).unwrap(), weights);
        outer.iter_mut().zip(s).for_each(|(m, v)| *m = m.max(v));
    }
    inner.iter().zip(&outer).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn weighted(sys: &RateConstraintSystem, w: &[f64]) -> f64 {
    max_weighted_rate(sys, w).unwrap().0
}

/// Membership disagreements between an eliminated system and the
/// corresponding hand-written rows, over random triples and channels.
pub fn fme_disagreements(id: &str, seed: u64, trials: usize, points: usize) -> usize {
    use rrw_core::fme::{compare_membership, rows_from_template, standard_derivation};
    let d = standard_derivation(id).unwrap();
    let mut rng = rng_for(seed, 40);
    let mut bad = 0;
    for _ in 0..trials {
        let nx = rng.random_range(2..=3);
        let ch = rrw_core::sampling::random_channel(&mut rng, nx, [2, 2, 2], 0.7);
        let t = small_triple(&mut rng, nx);
        let info = TripleInfo::compute(&t, &ch).unwrap();
        let val = d.symbols.names().iter().map(|n| (n.clone(), info.symbol(n).unwrap())).collect();
        d.check_valuation(&val, 1e-9).unwrap();
        let a = d.evaluate(&val).unwrap();
        let b = match id {
            "prop5-raw" => rows_from_template(&prop5_rows(&info)),
            _ => rows_from_template(&thm2_rows(&info)),
        };
        if compare_membership(&a, &b, &mut rng, points).is_some() {
            bad += 1;
        }
    }
    bad
}
