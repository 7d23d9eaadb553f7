//! Fourier–Motzkin elimination over linear rate inequalities whose
//! constants are rational combinations of named information quantities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FmeError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("row mentions undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("valuation misses symbol `{0}`")]
    MissingValue(String),
    #[error("valuation violates side condition {0}")]
    SideCondition(String),
    #[error("malformed substitution: {0}")]
    Substitution(String),
}

pub type Q = BigRational;

fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

fn fmt_q(c: &Q) -> String {
    if c.is_integer() {
        c.to_integer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

fn q_f64(c: &Q) -> f64 {
    c.to_f64().expect("finite rational")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SymbolTable {
    names: Vec<String>,
}

impl SymbolTable {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, FmeError> {
        let mut t = Self::default();
        for n in names {
            t.insert(n.as_ref())?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, name: &str) -> Result<(), FmeError> {
        if self.contains(name) {
            return Err(FmeError::DuplicateSymbol(name.into()));
        }
        self.names.push(name.into());
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Sparse linear form; zero coefficients are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinearForm(BTreeMap<String, Q>);

/// Linear combination of information symbols.
pub type SymbolicExpr = LinearForm;

impl LinearForm {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: &[(&str, i64)]) -> Self {
        let mut f = Self::zero();
        for (n, c) in terms {
            f.add_term(n, &q(*c));
        }
        f
    }

    pub fn add_term(&mut self, name: &str, c: &Q) {
        let e = self.0.entry(name.to_string()).or_insert_with(Q::zero);
        *e += c;
        if e.is_zero() {
            self.0.remove(name);
        }
    }

    pub fn get(&self, name: &str) -> Q {
        self.0.get(name).cloned().unwrap_or_else(Q::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&String, &Q)> {
        self.0.iter()
    }

    pub fn scaled(&self, c: &Q) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self(self.0.iter().map(|(k, v)| (k.clone(), v * c)).collect())
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, v) in &other.0 {
            out.add_term(k, v);
        }
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(&q(-1)))
    }

    fn without(&self, name: &str) -> Self {
        let mut out = self.clone();
        out.0.remove(name);
        out
    }

    pub fn eval(&self, values: &BTreeMap<String, f64>) -> Result<f64, FmeError> {
        self.0.iter().try_fold(0.0, |acc, (k, c)| {
            let v = values.get(k).ok_or_else(|| FmeError::MissingValue(k.clone()))?;
            Ok(acc + q_f64(c) * v)
        })
    }

    fn render(&self, order: &dyn Fn(&str) -> usize) -> String {
        if self.0.is_empty() {
            return "0".into();
        }
        let mut terms: Vec<_> = self.0.iter().collect();
        terms.sort_by_key(|(k, _)| (order(k), (*k).clone()));
        let mut s = String::new();
        for (i, (k, c)) in terms.into_iter().enumerate() {
            let neg = c.is_negative();
            if i == 0 {
                if neg {
                    s.push('-');
                }
            } else {
                s.push_str(if neg { " - " } else { " + " });
            }
            let a = c.abs();
            if !a.is_one() {
                s.push_str(&fmt_q(&a));
                s.push(' ');
            }
            s.push_str(k);
        }
        s
    }

    fn to_json(&self) -> BTreeMap<String, String> {
        self.0.iter().map(|(k, v)| (k.clone(), fmt_q(v))).collect()
    }
}

/// `sum var_coeffs * vars <= rhs`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolicInequality {
    pub vars: LinearForm,
    pub rhs: SymbolicExpr,
}

impl SymbolicInequality {
    pub fn new(vars: LinearForm, rhs: SymbolicExpr) -> Self {
        Self { vars, rhs }
    }

    fn is_trivial(&self) -> bool {
        self.vars.is_zero() && self.rhs.is_zero()
    }

    /// Positive rescaling to coprime integer coefficients.
    fn normalised(&self) -> Self {
        let all = || self.vars.0.values().chain(self.rhs.0.values());
        let lcm = all().fold(BigInt::one(), |l, c| l.lcm(c.denom()));
        let gcd = all().fold(BigInt::zero(), |g, c| g.gcd(&(c.numer() * &lcm / c.denom())));
        if gcd.is_zero() {
            return self.clone();
        }
        let s = Q::new(lcm, gcd);
        Self { vars: self.vars.scaled(&s), rhs: self.rhs.scaled(&s) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicSystem {
    pub variables: Vec<String>,
    pub symbols: SymbolTable,
    pub rows: Vec<SymbolicInequality>,
    /// Symbol combinations known to be nonnegative; used to discard
    /// dominated rows and to validate numeric valuations.
    pub facts: Vec<SymbolicExpr>,
}

/// Rows whose right-hand side can be shown to be nonnegative from
/// `facts`: either every term is a nonnegative atomic symbol, or the
/// expression minus a positive multiple of one compound fact is.
fn provably_nonneg(e: &SymbolicExpr, facts: &[SymbolicExpr]) -> bool {
    let atomic: BTreeSet<&String> =
        facts.iter().filter(|f| f.0.len() == 1 && f.0.values().all(|c| c.is_positive())).flat_map(|f| f.0.keys()).collect();
    let plain = |e: &SymbolicExpr| e.0.iter().all(|(k, c)| c.is_positive() && atomic.contains(k));
    if plain(e) {
        return true;
    }
    for f in facts.iter().filter(|f| f.0.len() > 1) {
        for (k, c) in &e.0 {
            if c.is_negative() {
                let fk = f.get(k);
                if fk.is_negative() {
                    let lambda = c / fk;
                    if plain(&e.minus(&f.scaled(&lambda))) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

impl SymbolicSystem {
    pub fn new(
        variables: &[&str],
        symbols: SymbolTable,
        rows: Vec<SymbolicInequality>,
        facts: Vec<SymbolicExpr>,
    ) -> Result<Self, FmeError> {
        let sys = Self { variables: variables.iter().map(|s| s.to_string()).collect(), symbols, rows, facts };
        sys.check()?;
        Ok(sys)
    }

    fn check(&self) -> Result<(), FmeError> {
        for r in &self.rows {
            for v in r.vars.0.keys() {
                if !self.variables.contains(v) {
                    return Err(FmeError::UndeclaredVariable(v.clone()));
                }
            }
            for s in r.rhs.0.keys() {
                if !self.symbols.contains(s) {
                    return Err(FmeError::UnknownSymbol(s.clone()));
                }
            }
        }
        for f in &self.facts {
            for s in f.0.keys() {
                if !self.symbols.contains(s) {
                    return Err(FmeError::UnknownSymbol(s.clone()));
                }
            }
        }
        Ok(())
    }

    fn var_order(&self, name: &str) -> usize {
        self.variables.iter().position(|v| v == name).unwrap_or(usize::MAX)
    }

    fn sym_order(&self, name: &str) -> usize {
        self.symbols.names.iter().position(|v| v == name).unwrap_or(usize::MAX)
    }

    /// Drops trivial rows, syntactic duplicates (up to positive scaling),
    /// constant rows implied by the facts, and rows whose bound exceeds that
    /// of a row with identical left-hand side by a provably nonnegative
    /// amount. Keeps first occurrences in order.
    pub fn simplified(&self) -> Self {
        let mut seen = BTreeSet::new();
        let mut rows: Vec<SymbolicInequality> = Vec::new();
        for r in &self.rows {
            let n = r.normalised();
            if n.is_trivial() || (n.vars.is_zero() && provably_nonneg(&n.rhs, &self.facts)) {
                continue;
            }
            if seen.insert(n.clone()) {
                rows.push(n);
            }
        }
        let mut keep = vec![true; rows.len()];
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                if i == j || !keep[j] || rows[i].vars != rows[j].vars {
                    continue;
                }
                // Row i is implied by row j when rhs_i - rhs_j >= 0.
                if provably_nonneg(&rows[i].rhs.minus(&rows[j].rhs), &self.facts) {
                    keep[i] = false;
                    break;
                }
            }
        }
        let rows = rows.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect();
        Self { rows, ..self.clone() }
    }

    /// Greedily drops rows implied by the remaining ones: rows with no
    /// positive coefficient and a provably nonnegative right-hand side
    /// (all variables are rates, hence nonnegative), and rows equal to a
    /// positive combination of one or two other rows up to a provably
    /// nonnegative slack. Rows go one at a time, so no two rows justify
    /// each other's removal.
    pub fn prune_implied(&self) -> (Self, Vec<ImpliedRow>) {
        let mut rows = self.rows.clone();
        let mut dropped = Vec::new();
        'outer: loop {
            for i in 0..rows.len() {
                if let Some(reason) = self.implication(&rows, i) {
                    let r = rows.remove(i);
                    dropped.push(ImpliedRow { row: self.render_row(&r), reason });
                    continue 'outer;
                }
            }
            break;
        }
        (Self { rows, ..self.clone() }, dropped)
    }

    fn implication(&self, rows: &[SymbolicInequality], i: usize) -> Option<String> {
        let coeffs = |r: &SymbolicInequality| -> Vec<Q> { self.variables.iter().map(|v| r.vars.get(v)).collect() };
        let a = coeffs(&rows[i]);
        let nonneg_gap = |combo: &[(Q, usize)]| {
            let mut gap = rows[i].rhs.clone();
            for (l, j) in combo {
                gap = gap.minus(&rows[*j].rhs.scaled(l));
            }
            provably_nonneg(&gap, &self.facts)
        };
        if !a.iter().any(|c| c.is_positive()) && provably_nonneg(&rows[i].rhs, &self.facts) {
            return Some("nonnegative rates".into());
        }
        let shown = |l: &Q, j: usize| {
            let r = self.render_row(&rows[j]);
            if l.is_one() { format!("({r})") } else { format!("{} ({r})", fmt_q(l)) }
        };
        for j in (0..rows.len()).filter(|&j| j != i) {
            let b = coeffs(&rows[j]);
            let Some(p) = b.iter().position(|c| !c.is_zero()) else { continue };
            let l = &a[p] / &b[p];
            if l.is_positive() && a.iter().zip(&b).all(|(x, y)| *x == &l * y) && nonneg_gap(&[(l.clone(), j)]) {
                return Some(shown(&l, j));
            }
        }
        for j in (0..rows.len()).filter(|&j| j != i) {
            for k in (j + 1..rows.len()).filter(|&k| k != i) {
                let (b, c) = (coeffs(&rows[j]), coeffs(&rows[k]));
                let n = a.len();
                let solved = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).find_map(|(p, q)| {
                    let det = &b[p] * &c[q] - &b[q] * &c[p];
                    if det.is_zero() {
                        return None;
                    }
                    Some(((&a[p] * &c[q] - &a[q] * &c[p]) / &det, (&b[p] * &a[q] - &b[q] * &a[p]) / &det))
                });
                let Some((l, m)) = solved else { continue };
                let exact = (0..n).all(|t| a[t] == &l * &b[t] + &m * &c[t]);
                if l.is_positive() && m.is_positive() && exact && nonneg_gap(&[(l.clone(), j), (m.clone(), k)]) {
                    return Some(format!("{} + {}", shown(&l, j), shown(&m, k)));
                }
            }
        }
        None
    }

    /// One line per distinct left-hand side, with a `min{..}` over the
    /// right-hand sides sharing it.
    pub fn render_grouped(&self) -> Vec<String> {
        let mut groups: Vec<(&LinearForm, Vec<String>)> = Vec::new();
        for r in &self.rows {
            let rhs = r.rhs.render(&|s| self.sym_order(s));
            match groups.iter_mut().find(|(v, _)| *v == &r.vars) {
                Some((_, g)) => g.push(rhs),
                None => groups.push((&r.vars, vec![rhs])),
            }
        }
        groups
            .into_iter()
            .map(|(v, g)| {
                let lhs = v.render(&|x| self.var_order(x));
                if g.len() == 1 {
                    format!("{lhs} <= {}", g[0])
                } else {
                    format!("{lhs} <= min{{{}}}", g.join(", "))
                }
            })
            .collect()
    }

    pub fn render_row(&self, r: &SymbolicInequality) -> String {
        let lhs = r.vars.render(&|v| self.var_order(v));
        let rhs = r.rhs.render(&|s| self.sym_order(s));
        format!("{lhs} <= {rhs}")
    }

    pub fn render(&self) -> String {
        self.rows.iter().map(|r| self.render_row(r) + "\n").collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "vars": r.vars.to_json(),
                    "rhs": r.rhs.to_json(),
                    "text": self.render_row(r),
                })
            })
            .collect();
        serde_json::json!({
            "variables": self.variables,
            "symbols": self.symbols.names(),
            "rows": rows,
        })
    }

    /// Numeric rows over `self.variables` at a symbol valuation.
    pub fn evaluate(&self, values: &BTreeMap<String, f64>) -> Result<NumericRows, FmeError> {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let c = self.variables.iter().map(|v| q_f64(&r.vars.get(v))).collect();
                Ok((c, r.rhs.eval(values)?))
            })
            .collect::<Result<_, FmeError>>()?;
        Ok(NumericRows { variables: self.variables.clone(), rows })
    }

    pub fn check_valuation(&self, values: &BTreeMap<String, f64>, tol: f64) -> Result<(), FmeError> {
        for s in self.symbols.names() {
            if !values.contains_key(s) {
                return Err(FmeError::MissingValue(s.clone()));
            }
        }
        for f in &self.facts {
            if f.eval(values)? < -tol {
                return Err(FmeError::SideCondition(format!("{} >= 0", f.render(&|s| self.sym_order(s)))));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SymbolicSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// One elimination step. Every row with a positive coefficient on `var`
/// is paired with every row with a negative one after scaling both to
/// unit magnitude; rows without `var` are carried over.
pub fn eliminate(sys: &SymbolicSystem, var: &str) -> Result<SymbolicSystem, FmeError> {
    if !sys.variables.iter().any(|v| v == var) {
        return Err(FmeError::UnknownVariable(var.into()));
    }
    let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
    for r in &sys.rows {
        let c = r.vars.get(var);
        if c.is_zero() {
            rest.push(r.clone());
        } else {
            let s = c.abs().recip();
            let r = SymbolicInequality { vars: r.vars.scaled(&s), rhs: r.rhs.scaled(&s) };
            if c.is_positive() {
                pos.push(r)
            } else {
                neg.push(r)
            }
        }
    }
    let mut rows = Vec::with_capacity(pos.len() * neg.len() + rest.len());
    for p in &pos {
        for n in &neg {
            rows.push(SymbolicInequality { vars: p.vars.plus(&n.vars).without(var), rhs: p.rhs.plus(&n.rhs) });
        }
    }
    rows.extend(rest);
    let out = SymbolicSystem {
        variables: sys.variables.iter().filter(|v| *v != var).cloned().collect(),
        rows,
        ..sys.clone()
    };
    Ok(out.simplified())
}

pub fn eliminate_all<S: AsRef<str>>(sys: &SymbolicSystem, vars: &[S]) -> Result<SymbolicSystem, FmeError> {
    for v in vars {
        if !sys.variables.iter().any(|x| x == v.as_ref()) {
            return Err(FmeError::UnknownVariable(v.as_ref().into()));
        }
    }
    vars.iter().try_fold(sys.clone(), |s, v| eliminate(&s, v.as_ref()))
}

/// Replaces `var` by `expr` (a linear form over variables, possibly new).
pub fn substitute_var(sys: &SymbolicSystem, var: &str, expr: &LinearForm) -> Result<SymbolicSystem, FmeError> {
    let idx = sys.variables.iter().position(|v| v == var).ok_or_else(|| FmeError::UnknownVariable(var.into()))?;
    let mut variables: Vec<String> = sys.variables.clone();
    variables.remove(idx);
    let mut insert_at = idx;
    for (k, _) in expr.terms() {
        if k == var {
            return Err(FmeError::Substitution(format!("{var} appears in its own replacement")));
        }
        if !variables.contains(k) {
            variables.insert(insert_at.min(variables.len()), k.clone());
            insert_at += 1;
        }
    }
    let rows = sys
        .rows
        .iter()
        .map(|r| {
            let c = r.vars.get(var);
            SymbolicInequality { vars: r.vars.without(var).plus(&expr.scaled(&c)), rhs: r.rhs.clone() }
        })
        .collect();
    let mut vs = variables;
    // Keep rate coordinates first so renderings read naturally.
    vs.sort_by_key(|v| !v.starts_with('R'));
    Ok(SymbolicSystem { variables: vs, rows, ..sys.clone() }.simplified())
}

/// Variable and symbol identifications of a substitution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Substitution {
    /// Variables fixed to zero.
    pub zero_vars: Vec<String>,
    /// `(old, new)` variable renamings; `new` may already exist.
    pub rename_vars: Vec<(String, String)>,
    /// `(old, Some(new))` merges a symbol into another; `(old, None)` sets it
    /// to zero.
    pub symbols: Vec<(String, Option<String>)>,
}

pub fn substitute(sys: &SymbolicSystem, sub: &Substitution) -> Result<SymbolicSystem, FmeError> {
    let mut variables = sys.variables.clone();
    for v in &sub.zero_vars {
        if !variables.contains(v) {
            return Err(FmeError::UnknownVariable(v.clone()));
        }
        variables.retain(|x| x != v);
    }
    let mut var_map: BTreeMap<String, String> = BTreeMap::new();
    for (old, new) in &sub.rename_vars {
        let pos = variables.iter().position(|x| x == old).ok_or_else(|| FmeError::UnknownVariable(old.clone()))?;
        if variables.contains(new) {
            variables.remove(pos);
        } else {
            variables[pos] = new.clone();
        }
        var_map.insert(old.clone(), new.clone());
    }
    let mut sym_map: BTreeMap<String, Option<String>> = BTreeMap::new();
    for (old, new) in &sub.symbols {
        if !sys.symbols.contains(old) {
            return Err(FmeError::UnknownSymbol(old.clone()));
        }
        if let Some(n) = new {
            if n == old || sub.symbols.iter().any(|(o, _)| o == n) {
                return Err(FmeError::Substitution(format!("symbol chain through `{n}`")));
            }
        }
        sym_map.insert(old.clone(), new.clone());
    }
    let mut symbols = SymbolTable::default();
    for s in sys.symbols.names() {
        let target = match sym_map.get(s) {
            Some(t) => t.clone(),
            None => Some(s.clone()),
        };
        if let Some(t) = target {
            if !symbols.contains(&t) {
                symbols.insert(&t)?;
            }
        }
    }
    let map_vars = |f: &LinearForm| {
        let mut out = LinearForm::zero();
        for (k, c) in f.terms() {
            if sub.zero_vars.contains(k) {
                continue;
            }
            out.add_term(var_map.get(k).unwrap_or(k), c);
        }
        out
    };
    let map_syms = |f: &SymbolicExpr| {
        let mut out = LinearForm::zero();
        for (k, c) in f.terms() {
            match sym_map.get(k) {
                Some(None) => {}
                Some(Some(n)) => out.add_term(n, c),
                None => out.add_term(k, c),
            }
        }
        out
    };
    let rows = sys.rows.iter().map(|r| SymbolicInequality { vars: map_vars(&r.vars), rhs: map_syms(&r.rhs) }).collect();
    let mut facts: Vec<SymbolicExpr> = Vec::new();
    for f in sys.facts.iter().map(map_syms) {
        if !f.is_zero() && !facts.contains(&f) {
            facts.push(f);
        }
    }
    Ok(SymbolicSystem { variables, symbols, rows, facts }.simplified())
}

/// A row removed by [`SymbolicSystem::prune_implied`] and what implies it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpliedRow {
    pub row: String,
    pub reason: String,
}

/// Numeric linear system `rows[i].0 . x <= rows[i].1` over named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericRows {
    pub variables: Vec<String>,
    pub rows: Vec<(Vec<f64>, f64)>,
}

impl NumericRows {
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.rows.iter().all(|(c, b)| c.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() <= b + tol)
    }

    fn scale(&self) -> f64 {
        self.rows.iter().map(|(_, b)| b.abs()).fold(0.1, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disagreement {
    pub valuation: BTreeMap<String, f64>,
    pub point: Vec<f64>,
    pub in_a: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivReport {
    pub trials: usize,
    pub points: usize,
    pub disagreements: Vec<Disagreement>,
}

impl EquivReport {
    pub fn equivalent(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// Membership tolerance of the numeric comparison.
pub const EQUIV_TOL: f64 = 1e-9;

/// Samples `points` nonnegative rate points and returns the first on
/// which the two systems disagree. Points within `EQUIV_TOL` of a boundary
/// of either system are resampled.
pub fn compare_membership<R: Rng + ?Sized>(
    a: &NumericRows,
    b: &NumericRows,
    rng: &mut R,
    points: usize,
) -> Option<(Vec<f64>, bool)> {
    let d = a.variables.len();
    let hi = 1.2 * a.scale().max(b.scale());
    let mut done = 0;
    let mut attempts = 0;
    while done < points && attempts < 20 * points {
        attempts += 1;
        // Half of the points concentrate near the origin, where thin
        // regions live.
        let top = if rng.random_bool(0.5) { hi } else { hi * 0.05 };
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..top)).collect();
        let (ia, ib) = (a.contains(&x, 0.0), b.contains(&x, 0.0));
        let near = |s: &NumericRows| s.contains(&x, EQUIV_TOL) != s.contains(&x, -EQUIV_TOL);
        if near(a) || near(b) {
            continue;
        }
        done += 1;
        if ia != ib {
            return Some((x, ia));
        }
    }
    None
}

/// Membership agreement of `a` and `b` over `trials` symbol valuations
/// drawn by `sampler`, `points` rate points each.
pub fn numeric_equiv(
    a: &SymbolicSystem,
    b: &SymbolicSystem,
    sampler: &mut dyn FnMut(&mut ChaCha8Rng) -> BTreeMap<String, f64>,
    trials: usize,
    points: usize,
    seed: u64,
) -> Result<EquivReport, FmeError> {
    if a.variables.iter().collect::<BTreeSet<_>>() != b.variables.iter().collect::<BTreeSet<_>>() {
        return Err(FmeError::Substitution(format!("free variables {:?} vs {:?}", a.variables, b.variables)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disagreements = Vec::new();
    for _ in 0..trials {
        let val = sampler(&mut rng);
        a.check_valuation(&val, 1e-9)?;
        b.check_valuation(&val, 1e-9)?;
        let na = a.evaluate(&val)?;
        let mut nb = b.evaluate(&val)?;
        // Align b's columns with a's variable order.
        nb.rows = nb
            .rows
            .into_iter()
            .map(|(c, r)| {
                (a.variables.iter().map(|v| c[b.variables.iter().position(|w| w == v).unwrap()]).collect(), r)
            })
            .collect();
        nb.variables = a.variables.clone();
        if let Some((point, in_a)) = compare_membership(&na, &nb, &mut rng, points) {
            disagreements.push(Disagreement { valuation: val, point, in_a });
        }
    }
    Ok(EquivReport { trials, points, disagreements })
}

pub const NAMED_SYSTEMS: [&str; 4] = ["prop5-raw", "thm2-raw", "appC-equiv", "appC-R1zero"];

const BASE_SYMBOLS: [&str; 9] = [
    "I(U2;U3|U1)",
    "I(X;Y1)",
    "I(X;Y1|U1)",
    "I(X;Y1|U2)",
    "I(X;Y1|U3)",
    "I(X;Y1|U2,U3)",
    "I(U2;Y2)",
    "I(U2;Y2|U1)",
    "I(U3;Y3)",
];
const TILDE_SYMBOLS: [&str; 4] = ["I(~U2;U3|U1)", "I(X;Y1|~U2)", "I(X;Y1|U3,~U2)", "I(~U2;Y2|U1)"];

/// Nonnegativity of every symbol plus the orderings implied by the
/// auxiliary Markov structure.
fn facts_for(symbols: &SymbolTable) -> Vec<SymbolicExpr> {
    let mut facts: Vec<SymbolicExpr> = symbols.names().iter().map(|s| LinearForm::from_terms(&[(s, 1)])).collect();
    let pairs = [
        ("I(X;Y1)", "I(X;Y1|U1)"),
        ("I(X;Y1|U1)", "I(X;Y1|U2)"),
        ("I(X;Y1|U1)", "I(X;Y1|U3)"),
        ("I(X;Y1|U2)", "I(X;Y1|U2,U3)"),
        ("I(X;Y1|U3)", "I(X;Y1|U2,U3)"),
        ("I(U2;Y2)", "I(U2;Y2|U1)"),
        ("I(X;Y1|U1)", "I(X;Y1|~U2)"),
        ("I(X;Y1|~U2)", "I(X;Y1|U2)"),
        ("I(X;Y1|U3)", "I(X;Y1|U3,~U2)"),
        ("I(X;Y1|U3,~U2)", "I(X;Y1|U2,U3)"),
        ("I(U2;U3|U1)", "I(~U2;U3|U1)"),
    ];
    for (a, b) in pairs {
        if symbols.contains(a) && symbols.contains(b) {
            facts.push(LinearForm::from_terms(&[(a, 1), (b, -1)]));
        }
    }
    facts
}

fn row(vars: &[(&str, i64)], rhs: &[(&str, i64)]) -> SymbolicInequality {
    SymbolicInequality::new(LinearForm::from_terms(vars), LinearForm::from_terms(rhs))
}

fn nonneg(v: &str) -> SymbolicInequality {
    row(&[(v, -1)], &[])
}

/// Transcriptions of the code-generation and decoding constraint systems.
pub fn build_named_system(id: &str) -> Result<SymbolicSystem, FmeError> {
    let pen = "I(U2;U3|U1)";
    let (variables, symbols, rows): (Vec<&str>, Vec<&str>, Vec<SymbolicInequality>) = match id {
        "prop5-raw" => (
            vec!["R0", "S1", "S2", "S3", "T2", "T3"],
            BASE_SYMBOLS.iter().copied().filter(|s| *s != "I(U2;Y2|U1)").collect(),
            vec![
                row(&[("S2", 1), ("T2", -1)], &[]),
                row(&[("S3", 1), ("T3", -1)], &[]),
                row(&[("S2", 1), ("S3", 1), ("T2", -1), ("T3", -1)], &[(pen, -1)]),
                row(&[("R0", 1), ("S1", 1), ("S2", 1), ("S3", 1)], &[("I(X;Y1)", 1)]),
                row(&[("S1", 1), ("S2", 1), ("S3", 1)], &[("I(X;Y1|U1)", 1)]),
                row(&[("S1", 1), ("S3", 1)], &[("I(X;Y1|U2)", 1)]),
                row(&[("S1", 1), ("S2", 1)], &[("I(X;Y1|U3)", 1)]),
                row(&[("S1", 1)], &[("I(X;Y1|U2,U3)", 1)]),
                row(&[("R0", 1), ("T2", 1)], &[("I(U2;Y2)", 1)]),
                row(&[("R0", 1), ("T3", 1)], &[("I(U3;Y3)", 1)]),
                nonneg("S1"),
                nonneg("S2"),
                nonneg("S3"),
            ],
        ),
        "thm2-raw" => (
            vec!["R0", "R1", "S1", "S3", "T2", "T3"],
            BASE_SYMBOLS.to_vec(),
            vec![
                row(&[("R1", 1), ("T2", -1)], &[]),
                row(&[("S3", 1), ("T3", -1)], &[]),
                row(&[("R1", 1), ("S3", 1), ("T2", -1), ("T3", -1)], &[(pen, -1)]),
                row(&[("R0", 1), ("S1", 1), ("R1", 1), ("S3", 1)], &[("I(X;Y1)", 1)]),
                row(&[("S1", 1), ("S3", 1)], &[("I(X;Y1|U2)", 1)]),
                row(&[("S1", 1), ("R1", 1)], &[("I(X;Y1|U3)", 1)]),
                row(&[("S1", 1), ("R1", 1), ("S3", 1)], &[("I(X;Y1|U1)", 1)]),
                row(&[("S1", 1)], &[("I(X;Y1|U2,U3)", 1)]),
                row(&[("R0", 1), ("T2", 1)], &[("I(U2;Y2)", 1)]),
                row(&[("T2", 1)], &[("I(U2;Y2|U1)", 1)]),
                row(&[("R0", 1), ("T3", 1)], &[("I(U3;Y3)", 1)]),
                nonneg("S1"),
                nonneg("S3"),
            ],
        ),
        "appC-equiv" | "appC-R1zero" => {
            let zero = id == "appC-R1zero";
            let mut vars = vec!["R0", "R1", "S1", "S2", "S3", "T21", "T22", "T3"];
            if zero {
                vars.retain(|v| *v != "R1");
            }
            let r1 = if zero { 0 } else { 1 };
            let mut syms = BASE_SYMBOLS.to_vec();
            syms.extend(TILDE_SYMBOLS);
            let rows = vec![
                row(&[("R1", r1), ("T21", -1)], &[]),
                row(&[("S2", 1), ("T22", -1)], &[]),
                row(&[("S3", 1), ("T3", -1)], &[]),
                row(&[("R1", r1), ("S3", 1), ("T21", -1), ("T3", -1)], &[("I(~U2;U3|U1)", -1)]),
                row(&[("R1", r1), ("S2", 1), ("S3", 1), ("T21", -1), ("T22", -1), ("T3", -1)], &[(pen, -1)]),
                row(&[("R0", 1), ("S1", 1), ("R1", r1), ("S2", 1), ("S3", 1)], &[("I(X;Y1)", 1)]),
                row(&[("S1", 1), ("R1", r1), ("S2", 1), ("S3", 1)], &[("I(X;Y1|U1)", 1)]),
                row(&[("S1", 1), ("S2", 1), ("S3", 1)], &[("I(X;Y1|~U2)", 1)]),
                row(&[("S1", 1), ("S3", 1)], &[("I(X;Y1|U2)", 1)]),
                row(&[("S1", 1), ("R1", r1), ("S2", 1)], &[("I(X;Y1|U3)", 1)]),
                row(&[("S1", 1), ("S2", 1)], &[("I(X;Y1|U3,~U2)", 1)]),
                row(&[("S1", 1)], &[("I(X;Y1|U2,U3)", 1)]),
                row(&[("R0", 1), ("T21", 1), ("T22", 1)], &[("I(U2;Y2)", 1)]),
                row(&[("T21", 1)], &[("I(~U2;Y2|U1)", 1)]),
                row(&[("R0", 1), ("T3", 1)], &[("I(U3;Y3)", 1)]),
                nonneg("S1"),
                nonneg("S2"),
                nonneg("S3"),
            ];
            (vars, syms, rows)
        }
        other => return Err(FmeError::UnknownSystem(other.into())),
    };
    let symbols = SymbolTable::new(&symbols)?;
    let facts = facts_for(&symbols);
    // Rows are kept verbatim (no simplification) so the transcription is
    // inspectable as written; `0 <= T21` style rows survive as well.
    SymbolicSystem::new(&variables, symbols, rows, facts)
}

/// Split of the private rate applied to a raw system before elimination:
/// the substituted variable, its replacement and a readable form.
pub fn private_split(id: &str) -> Option<(&'static str, LinearForm, &'static str)> {
    match id {
        "prop5-raw" => Some(("S1", LinearForm::from_terms(&[("R1", 1), ("S2", -1), ("S3", -1)]), "S1 = R1 - S2 - S3")),
        "thm2-raw" => Some(("S1", LinearForm::from_terms(&[("R2", 1), ("S3", -1)]), "S1 = R2 - S3")),
        _ => None,
    }
}

/// The named system with the private-rate split substituted and the
/// auxiliary rates eliminated in the standard order.
pub fn standard_derivation(id: &str) -> Result<SymbolicSystem, FmeError> {
    let sys = build_named_system(id)?;
    let order: &[&str] = match id {
        "prop5-raw" => &["T2", "T3", "S2", "S3"],
        "thm2-raw" => &["S3", "T2", "T3"],
        other => return Err(FmeError::UnknownSystem(other.into())),
    };
    let (var, expr, _) = private_split(id).expect("raw systems have a split");
    eliminate_all(&substitute_var(&sys, var, &expr)?, order)
}

/// Identifies the extra auxiliary with `U2`, drops its split and renames
/// `T21` to `T2`.
pub fn equiv_to_thm2() -> Substitution {
    Substitution {
        zero_vars: vec!["S2".into(), "T22".into()],
        rename_vars: vec![("T21".into(), "T2".into())],
        symbols: vec![
            ("I(~U2;U3|U1)".into(), Some("I(U2;U3|U1)".into())),
            ("I(X;Y1|~U2)".into(), Some("I(X;Y1|U2)".into())),
            ("I(X;Y1|U3,~U2)".into(), Some("I(X;Y1|U2,U3)".into())),
            ("I(~U2;Y2|U1)".into(), Some("I(U2;Y2|U1)".into())),
        ],
    }
}

/// Identifies the extra auxiliary with `U1`; `T21` is then squeezed to zero
/// and `T22` plays the role of `T2`.
pub fn r1zero_to_prop5() -> Substitution {
    Substitution {
        zero_vars: vec!["T21".into()],
        rename_vars: vec![("T22".into(), "T2".into())],
        symbols: vec![
            ("I(~U2;U3|U1)".into(), None),
            ("I(X;Y1|~U2)".into(), Some("I(X;Y1|U1)".into())),
            ("I(X;Y1|U3,~U2)".into(), Some("I(X;Y1|U3)".into())),
            ("I(~U2;Y2|U1)".into(), None),
            ("I(U2;Y2|U1)".into(), None),
        ],
    }
}

/// Converts `[i64; D]` rows (as produced by the bound evaluators) to
/// numeric rows over `R0, R1[, R2]`.
pub fn rows_from_template<const D: usize>(rows: &[([i64; D], f64)]) -> NumericRows {
    let variables = ["R0", "R1", "R2"][..D].iter().map(|s| s.to_string()).collect();
    NumericRows { variables, rows: rows.iter().map(|(c, b)| (c.iter().map(|&v| v as f64).collect(), *b)).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SymbolicSystem {
        let syms = SymbolTable::new(&["I(U2;Y2)"]).unwrap();
        let facts = facts_for(&syms);
        SymbolicSystem::new(
            &["R0", "S2", "T2"],
            syms,
            vec![row(&[("S2", 1), ("T2", -1)], &[]), row(&[("R0", 1), ("T2", 1)], &[("I(U2;Y2)", 1)])],
            facts,
        )
        .unwrap()
    }

    #[test]
    fn single_pair_elimination() {
        let out = eliminate(&tiny(), "T2").unwrap();
        assert_eq!(out.variables, ["R0", "S2"]);
        assert_eq!(out.render(), "R0 + S2 <= I(U2;Y2)\n");
    }

    #[test]
    fn one_signed_variable_drops_its_rows() {
        let out = eliminate(&tiny(), "R0").unwrap();
        assert_eq!(out.render(), "S2 - T2 <= 0\n");
        assert_eq!(eliminate(&tiny(), "Q"), Err(FmeError::UnknownVariable("Q".into())));
        assert_eq!(eliminate_all::<&str>(&tiny(), &[]).unwrap(), tiny());
    }

    #[test]
    fn named_system_shapes() {
        let p = build_named_system("prop5-raw").unwrap();
        assert_eq!(p.rows.len(), 13);
        let t = build_named_system("thm2-raw").unwrap();
        assert_eq!(t.rows.len() - 2, 11);
        let e = build_named_system("appC-equiv").unwrap();
        assert_eq!(e.rows.len() - 3, 15);
        assert_eq!(e.variables.len(), 8);
        assert!(build_named_system("nope").is_err());
    }

    #[test]
    fn dominated_rows_are_dropped() {
        let syms = SymbolTable::new(&["I(X;Y1)", "I(X;Y1|U1)"]).unwrap();
        let facts = facts_for(&syms);
        let s = SymbolicSystem {
            variables: vec!["R0".into()],
            symbols: syms,
            rows: vec![
                row(&[("R0", 2)], &[("I(X;Y1)", 2)]),
                row(&[("R0", 1)], &[("I(X;Y1|U1)", 1)]),
                row(&[], &[("I(X;Y1)", 1)]),
            ],
            facts,
        }
        .simplified();
        assert_eq!(s.render(), "R0 <= I(X;Y1|U1)\n");
    }

    #[test]
    fn equivalent_form_reductions_are_syntactic() {
        let a = substitute(&build_named_system("appC-equiv").unwrap(), &equiv_to_thm2()).unwrap();
        let b = build_named_system("thm2-raw").unwrap().simplified();
        let set = |s: &SymbolicSystem| s.rows.iter().cloned().collect::<BTreeSet<_>>();
        assert_eq!(set(&a), set(&b));
        let a = substitute(&build_named_system("appC-R1zero").unwrap(), &r1zero_to_prop5()).unwrap();
        let b = build_named_system("prop5-raw").unwrap().simplified();
        assert_eq!(set(&a), set(&b));
    }

    #[test]
    fn substitution_errors() {
        let s = build_named_system("prop5-raw").unwrap();
        let bad = Substitution { zero_vars: vec!["Z".into()], ..Default::default() };
        assert!(substitute(&s, &bad).is_err());
        let bad = Substitution { symbols: vec![("I(nope)".into(), None)], ..Default::default() };
        assert!(substitute(&s, &bad).is_err());
        assert_eq!(substitute(&s, &Substitution::default()).unwrap(), s.simplified());
    }
}
