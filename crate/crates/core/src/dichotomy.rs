//! Classification of queries by whether the lifted engine succeeds, with
//! hardness diagnostics for Type-1 queries.
//!
//! A Type-1 query has clauses over at most two variables, a left one `x` and
//! a right one `y`, whose atoms are left unaries `R_i(x)`, binaries
//! `S_j(x,y)` and right unaries `T_k(y)`. For such queries a failed run
//! certifies #P-hardness; for anything else a failure is reported as outside
//! the fragment, without a hardness claim.
//!
//! The diagnostics work on the propositional formula `F` of a single pair
//! `(x, y)`: one variable per symbol. With a designated left unary `U` and
//! right unary `V`, `F_ab = F[a/U, b/V]`. The query is splittable if some
//! `F_ab` is unsatisfiable, decomposable if its clauses split into
//! symbol-disjoint parts separating `U` from `V`, and immediately unsafe if
//! neither.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::engine::{evaluate_symbolic, EngineConfig, EvalResult};
use crate::entail::{sat, DEFAULT_DECISION_BUDGET};
use crate::fol::{Clause, CnfQuery, Literal, Predicate, Term};
use crate::{Error, Rational, Result};

const REWRITE_SEARCH_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    SafePtime,
    HardSharpP,
    OutOfFragment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    Left,
    Right,
}

/// Symbol kinds of a Type-1 query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Type1 {
    pub left: BTreeSet<Predicate>,
    pub right: BTreeSet<Predicate>,
    pub binary: BTreeSet<Predicate>,
}

/// Sides of a clause's variables implied by its binary atoms, or None if the
/// binaries disagree.
fn binary_sides(c: &Clause) -> Option<BTreeMap<u32, Side>> {
    let mut sides = BTreeMap::new();
    for l in c.literals() {
        if l.atom.args.len() != 2 {
            continue;
        }
        let (Term::Var(a), Term::Var(b)) = (&l.atom.args[0], &l.atom.args[1]) else { return None };
        if a == b {
            return None;
        }
        for (v, s) in [(*a, Side::Left), (*b, Side::Right)] {
            if *sides.entry(v).or_insert(s) != s {
                return None;
            }
        }
    }
    if sides.values().filter(|s| **s == Side::Left).count() > 1 || sides.values().filter(|s| **s == Side::Right).count() > 1
    {
        return None;
    }
    Some(sides)
}

/// Recognizes a Type-1 query and assigns each unary symbol a side. Unaries
/// never tied to a binary atom, directly or through another unary, are
/// placed by variable order (first variable left).
pub fn type1_structure(q: &CnfQuery) -> Option<Type1> {
    let mut kinds: BTreeMap<Predicate, Side> = BTreeMap::new();
    let mut binary = BTreeSet::new();
    let mut clause_sides: Vec<BTreeMap<u32, Side>> = Vec::new();
    for c in q.clauses() {
        if c.num_vars() > 2 {
            return None;
        }
        for l in c.literals() {
            let p = l.pred();
            if p.is_guard() || p.arity == 0 || p.arity > 2 || l.atom.args.iter().any(|t| matches!(t, Term::Const(_))) {
                return None;
            }
            if p.arity == 2 {
                binary.insert(p.clone());
            }
        }
        clause_sides.push(binary_sides(c)?);
    }
    if binary.iter().any(|b| q.relation_symbols().iter().any(|p| p.name == b.name && p.arity != 2)) {
        return None;
    }

    loop {
        let mut changed = false;
        for (c, sides) in q.clauses().iter().zip(clause_sides.iter_mut()) {
            for l in c.literals().iter().filter(|l| l.atom.args.len() == 1) {
                let Term::Var(v) = l.atom.args[0] else { unreachable!() };
                match (sides.get(&v).copied(), kinds.get(l.pred()).copied()) {
                    (Some(s), None) => {
                        kinds.insert(l.pred().clone(), s);
                        changed = true;
                    }
                    (None, Some(k)) => {
                        if sides.values().any(|s| *s == k) {
                            return None;
                        }
                        sides.insert(v, k);
                        changed = true;
                    }
                    (Some(s), Some(k)) if s != k => return None,
                    _ => {}
                }
            }
            let vars = c.vars();
            if vars.len() == 2 && sides.len() == 1 {
                let (&known, &s) = sides.iter().next().expect("one side");
                let other = *vars.iter().find(|v| **v != known).expect("two vars");
                let flip = if s == Side::Left { Side::Right } else { Side::Left };
                sides.insert(other, flip);
                changed = true;
            }
        }
        if changed {
            continue;
        }
        // Seed the first clause with an undetermined unary.
        let pending = q.clauses().iter().zip(clause_sides.iter_mut()).find(|(c, sides)| {
            c.literals().iter().any(|l| l.atom.args.len() == 1 && !sides.contains_key(&l.atom.args[0].as_var().unwrap()))
        });
        match pending {
            Some((c, sides)) => {
                let vars: Vec<u32> = c.vars().into_iter().collect();
                sides.insert(vars[0], Side::Left);
            }
            None => break,
        }
    }
    let left = kinds.iter().filter(|(_, s)| **s == Side::Left).map(|(p, _)| p.clone()).collect();
    let right = kinds.iter().filter(|(_, s)| **s == Side::Right).map(|(p, _)| p.clone()).collect();
    Some(Type1 { left, right, binary })
}

pub fn is_type1(q: &CnfQuery) -> bool {
    type1_structure(q).is_some()
}

/// The unique left and right unary symbols, if present.
pub fn designated_unaries(q: &CnfQuery) -> Result<Option<(Predicate, Predicate)>> {
    let t = type1_structure(q).ok_or_else(|| Error::Invalid("not a Type-1 query".into()))?;
    if t.left.len() > 1 || t.right.len() > 1 {
        return Err(Error::MultipleUnaries);
    }
    match (t.left.into_iter().next(), t.right.into_iter().next()) {
        (Some(u), Some(v)) => Ok(Some((u, v))),
        _ => Ok(None),
    }
}

/// Clauses of the single-pair formula, variables numbered per symbol name.
fn pair_formula(q: &CnfQuery) -> (Vec<Vec<i32>>, BTreeMap<Predicate, i32>) {
    let mut ids: BTreeMap<Predicate, i32> = BTreeMap::new();
    for p in q.relation_symbols() {
        let next = ids.len() as i32 + 1;
        ids.insert(p, next);
    }
    let clauses = q
        .clauses()
        .iter()
        .map(|c| {
            let mut lits: Vec<i32> =
                c.literals().iter().map(|l| if l.positive { ids[l.pred()] } else { -ids[l.pred()] }).collect();
            lits.sort_unstable();
            lits.dedup();
            lits
        })
        .filter(|c| !c.iter().any(|l| c.contains(&-l)))
        .collect();
    (clauses, ids)
}

/// Some `F[a/U, b/V]` is unsatisfiable.
pub fn splittable_with(q: &CnfQuery, u: &Predicate, v: &Predicate) -> Result<bool> {
    let (clauses, ids) = pair_formula(q);
    let (Some(&iu), Some(&iv)) = (ids.get(u), ids.get(v)) else { return Ok(false) };
    for a in [false, true] {
        for b in [false, true] {
            let mut cs = clauses.clone();
            cs.push(vec![if a { iu } else { -iu }]);
            cs.push(vec![if b { iv } else { -iv }]);
            if !sat(cs, ids.len(), DEFAULT_DECISION_BUDGET)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// The clauses split into symbol-disjoint blocks with `u` and `v` in
/// different blocks.
pub fn decomposable_with(q: &CnfQuery, u: &Predicate, v: &Predicate) -> bool {
    let syms: Vec<BTreeSet<Predicate>> =
        q.clauses().iter().map(|c| c.literals().iter().map(|l| l.pred().clone()).collect()).collect();
    let mut reach: BTreeSet<&Predicate> = BTreeSet::from([u]);
    loop {
        let before = reach.len();
        for s in &syms {
            if s.iter().any(|p| reach.contains(p)) {
                reach.extend(s.iter());
            }
        }
        if reach.len() == before {
            break;
        }
    }
    !reach.contains(v)
}

pub fn splittable(q: &CnfQuery) -> Result<bool> {
    match designated_unaries(q)? {
        Some((u, v)) => splittable_with(q, &u, &v),
        None => Ok(false),
    }
}

pub fn decomposable(q: &CnfQuery) -> Result<bool> {
    match designated_unaries(q)? {
        Some((u, v)) => Ok(decomposable_with(q, &u, &v)),
        None => Ok(true),
    }
}

pub fn immediately_unsafe_with(q: &CnfQuery, u: &Predicate, v: &Predicate) -> Result<bool> {
    Ok(!splittable_with(q, u, v)? && !decomposable_with(q, u, v))
}

/// `Q[value/Z]`: every `Z` atom replaced by a truth value.
pub fn rewrite(q: &CnfQuery, z: &Predicate, value: bool) -> CnfQuery {
    let mut out = Vec::new();
    'clauses: for c in q.clauses() {
        let mut lits: Vec<Literal> = Vec::new();
        for l in c.literals() {
            if l.pred() == z {
                if l.positive == value {
                    continue 'clauses;
                }
            } else {
                lits.push(l.clone());
            }
        }
        out.push(Clause::new(lits));
    }
    CnfQuery::new(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    /// The query the diagnostics refer to.
    pub query: String,
    pub left_unary: String,
    pub right_unary: String,
    pub splittable: bool,
    pub decomposable: bool,
    pub immediately_unsafe: bool,
    /// Shortest sequence of symbol assignments reaching an immediately
    /// unsafe query (empty when the query itself is one).
    pub unsafe_rewrite: Option<Vec<(String, bool)>>,
}

/// Breadth-first search over rewrites of symbols other than `u` and `v`.
pub fn unsafe_rewrite(q: &CnfQuery, u: &Predicate, v: &Predicate) -> Result<Option<Vec<(Predicate, bool)>>> {
    let mut seen: BTreeSet<CnfQuery> = BTreeSet::from([q.clone()]);
    let mut queue: VecDeque<(CnfQuery, Vec<(Predicate, bool)>)> = VecDeque::from([(q.clone(), Vec::new())]);
    while let Some((cur, path)) = queue.pop_front() {
        let syms = cur.relation_symbols();
        if syms.contains(u) && syms.contains(v) && immediately_unsafe_with(&cur, u, v)? {
            return Ok(Some(path));
        }
        for z in syms.iter().filter(|z| *z != u && *z != v) {
            for value in [false, true] {
                let next = rewrite(&cur, z, value);
                if seen.len() < REWRITE_SEARCH_CAP && seen.insert(next.clone()) {
                    let mut p = path.clone();
                    p.push((z.clone(), value));
                    queue.push_back((next, p));
                }
            }
        }
    }
    Ok(None)
}

fn diagnose(q: &CnfQuery) -> Result<Option<Diagnostics>> {
    let Some((u, v)) = (match designated_unaries(q) {
        Ok(d) => d,
        Err(Error::MultipleUnaries) | Err(Error::Invalid(_)) => None,
        Err(e) => return Err(e),
    }) else {
        return Ok(None);
    };
    let splittable = splittable_with(q, &u, &v)?;
    let decomposable = decomposable_with(q, &u, &v);
    let path = unsafe_rewrite(q, &u, &v)?;
    Ok(Some(Diagnostics {
        query: q.to_string(),
        left_unary: u.name.to_string(),
        right_unary: v.name.to_string(),
        splittable,
        decomposable,
        immediately_unsafe: !splittable && !decomposable,
        unsafe_rewrite: path.map(|p| p.into_iter().map(|(z, b)| (z.name.to_string(), b)).collect()),
    }))
}

#[derive(Clone, Debug)]
pub struct Classification {
    pub verdict: Verdict,
    /// The symbolic run: its trace on success, the stuck subquery on failure.
    pub run: EvalResult<Rational>,
    pub diagnostics: Option<Diagnostics>,
}

/// Runs the engine symbolically. Success means the query is PTIME on every
/// database; a failure on a Type-1 query means #P-hard.
pub fn classify(q: &CnfQuery) -> Result<Classification> {
    classify_with(q, &EngineConfig { trace: true, ..EngineConfig::default() })
}

pub fn classify_with(q: &CnfQuery, config: &EngineConfig) -> Result<Classification> {
    let run = evaluate_symbolic(q, config)?;
    let stuck = match &run {
        EvalResult::Success { .. } => {
            return Ok(Classification { verdict: Verdict::SafePtime, run, diagnostics: None });
        }
        EvalResult::Fail { stuck, .. } => stuck.clone(),
    };
    if !is_type1(q) {
        return Ok(Classification { verdict: Verdict::OutOfFragment, run, diagnostics: None });
    }
    let diagnostics = match diagnose(&stuck)? {
        Some(d) => Some(d),
        None => diagnose(q)?,
    };
    Ok(Classification { verdict: Verdict::HardSharpP, run, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_query;

    fn q(s: &str) -> CnfQuery {
        parse_query(s).unwrap()
    }

    fn p(name: &str) -> Predicate {
        Predicate::new(name, 1)
    }

    const Q7: &str = "(R(x) | !S(x,y) | T(y)) & (!R(x) | S(x,y) | !T(y))";

    #[test]
    fn type1_recognition() {
        assert!(is_type1(&q("!R(x) | S(x,y) | !T(y)")));
        assert!(is_type1(&q("(R(x) | S(x,y)) & (S(x,y) | T(y))")));
        assert!(!is_type1(&q("R(x,y,z) | S(x,y)")));
        assert!(!is_type1(&q("S(x,y) | S(y,x)")));
        let t = type1_structure(&q("(R(x) | S(x,y)) & (T(y) | R(z))")).unwrap();
        assert!(t.left.contains(&p("R")) && t.right.contains(&p("T")));
    }

    #[test]
    fn splittable_examples() {
        let (u, v) = (p("U"), p("V"));
        assert!(splittable_with(&q("(U(x) | V(y)) & S(x,y)"), &u, &v).unwrap());
        assert!(!splittable(&q(Q7)).unwrap());
        assert!(!splittable(&q("(R(x) | S(x,y)) & (S(x,y) | T(y))")).unwrap());
    }

    #[test]
    fn decomposable_examples() {
        let (u, v) = (p("U"), p("V"));
        assert!(decomposable_with(&q("(U(x) | R(x)) & (V(y) | T(y))"), &u, &v));
        assert!(!decomposable(&q(Q7)).unwrap());
        assert!(!decomposable_with(&q("U(x) | S(x,y) | V(y)"), &u, &v));
    }

    #[test]
    fn multiple_unaries_rejected() {
        assert!(matches!(splittable(&q("(U(x) | R(x) | S(x,y)) & (V(y) | S(x,y))")), Err(Error::MultipleUnaries)));
    }

    #[test]
    fn rewrite_sets_symbols() {
        let h1 = q("(R(x) | S(x,y)) & (S(x,y) | T(y))");
        assert_eq!(rewrite(&h1, &Predicate::new("S", 2), true), CnfQuery::truth());
        assert_eq!(rewrite(&h1, &Predicate::new("S", 2), false), q("R(x) & T(y)"));
    }

    #[test]
    fn classify_corpus() {
        let tweets = q("(Tweets(x) | !Follows(x,y)) & (Follows(x,y) | !Leader(y))");
        assert_eq!(classify(&tweets).unwrap().verdict, Verdict::SafePtime);
        for src in ["(R(x) | S(x,y)) & (S(x,y) | T(y))", "!R(x) | S(x,y) | !T(y)", Q7] {
            let c = classify(&q(src)).unwrap();
            assert_eq!(c.verdict, Verdict::HardSharpP, "{src}");
            let d = c.diagnostics.unwrap();
            assert!(d.immediately_unsafe && !d.splittable, "{src}: {d:?}");
            assert_eq!(d.unsafe_rewrite, Some(vec![]));
        }
        assert_eq!(classify(&q("(R(x) | S(x,y,z)) & (S(x,y,z) | T(z))")).unwrap().verdict, Verdict::OutOfFragment);
    }
}
