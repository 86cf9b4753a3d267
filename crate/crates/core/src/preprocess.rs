//! Shattering (removing constants) and ranking (ordering variables), each
//! as a pure query rewrite plus an optional materialized database.
//!
//! Both rewrites refer to derived relations by name (see [`crate::pdb`]), so
//! the rewritten query can be evaluated against the original database
//! directly. [`shatter`] and [`rank`] additionally store every derived
//! relation under its own name.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::fol::{Atom, Clause, CnfQuery, Literal, Predicate, Term, GUARD_PREFIX};
use crate::pdb::{rank_suffix, weak_orderings, Pdb};

pub const DEFAULT_RANK_ARITY_CAP: usize = 3;
/// Clauses with more order-relevant variables than this are not ranked.
const RANK_VAR_CAP: usize = 6;

fn ne_name(excluded: &BTreeSet<Arc<str>>) -> String {
    let mut s = format!("{GUARD_PREFIX}ne");
    for c in excluded {
        s.push(':');
        s.push_str(c);
    }
    s
}

fn ne_set(pred: &Predicate) -> Option<BTreeSet<Arc<str>>> {
    let rest = pred.name.strip_prefix(GUARD_PREFIX)?.strip_prefix("ne:")?;
    Some(rest.split(':').map(Arc::from).collect())
}

/// Constants excluded from `v` by the clause's `!$ne:..(v)` guards.
fn excluded(c: &Clause, v: u32) -> BTreeSet<Arc<str>> {
    let mut out = BTreeSet::new();
    for l in c.literals() {
        if !l.positive && l.atom.args == [Term::Var(v)] {
            if let Some(s) = ne_set(l.pred()) {
                out.extend(s);
            }
        }
    }
    out
}

/// Substitutes `c` for `v` and evaluates the `$ne` guards that become
/// ground. None if the clause becomes trivially true.
fn substitute_guarded(clause: &Clause, v: u32, c: &Arc<str>) -> Option<Clause> {
    let sub = clause.substitute(v, c);
    let mut lits = Vec::new();
    for l in sub.literals() {
        if let (Some(set), [Term::Const(k)]) = (ne_set(l.pred()), l.atom.args.as_slice()) {
            let holds = !set.contains(k);
            if holds == l.positive {
                return None;
            }
            continue;
        }
        lits.push(l.clone());
    }
    Some(Clause::new(lits))
}

/// Rewrites `q` into an equivalent query without constants. Every variable
/// sharing a relation position with constants is split into one copy per
/// constant plus a residual copy guarded by `!$ne:..`; atoms that end up
/// holding constants are renamed to pinned slices.
pub fn shatter_query(q: &CnfQuery) -> CnfQuery {
    if q.constants().is_empty() {
        return q.clone();
    }
    let mut clauses: Vec<Clause> = q.clauses().to_vec();
    loop {
        let mut cset: BTreeMap<(Predicate, usize), BTreeSet<Arc<str>>> = BTreeMap::new();
        for c in &clauses {
            for l in c.literals().iter().filter(|l| !l.pred().is_guard()) {
                for (i, t) in l.atom.args.iter().enumerate() {
                    if let Term::Const(k) = t {
                        cset.entry((l.pred().clone(), i)).or_default().insert(k.clone());
                    }
                }
            }
        }
        let mut changed = false;
        let mut next = Vec::new();
        for c in clauses {
            let mut split = None;
            'find: for l in c.literals().iter().filter(|l| !l.pred().is_guard()) {
                for (i, t) in l.atom.args.iter().enumerate() {
                    if let (Term::Var(v), Some(ks)) = (t, cset.get(&(l.pred().clone(), i))) {
                        let have = excluded(&c, *v);
                        let need: BTreeSet<Arc<str>> = ks.difference(&have).cloned().collect();
                        if !need.is_empty() {
                            split = Some((*v, have, need));
                            break 'find;
                        }
                    }
                }
            }
            let Some((v, have, need)) = split else {
                next.push(c);
                continue;
            };
            changed = true;
            for k in &need {
                if let Some(s) = substitute_guarded(&c, v, k) {
                    next.push(s);
                }
            }
            let all: BTreeSet<Arc<str>> = have.union(&need).cloned().collect();
            let guard = Literal::neg(Atom::new(Predicate::new(&ne_name(&all), 1), vec![Term::Var(v)]));
            let lits = c
                .literals()
                .iter()
                .filter(|l| !(!l.positive && l.atom.args == [Term::Var(v)] && ne_set(l.pred()).is_some()))
                .cloned()
                .chain(std::iter::once(guard));
            next.push(Clause::new(lits));
        }
        clauses = CnfQuery::new(next).clauses().to_vec();
        if !changed {
            break;
        }
    }
    CnfQuery::new(clauses.iter().map(Clause::specialize))
}

pub fn is_shattered(q: &CnfQuery) -> bool {
    q.constants().is_empty()
}

/// A strict order on the clause's variables under which every non-guard
/// atom lists distinct variables in increasing order, if one exists.
fn clause_rank_order(c: &Clause) -> Option<Vec<u32>> {
    let vars: Vec<u32> = c.vars().into_iter().collect();
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    for l in c.literals().iter().filter(|l| !l.pred().is_guard()) {
        let args: Vec<u32> = l.atom.args.iter().filter_map(Term::as_var).collect();
        if args.len() != l.atom.args.len() {
            return None;
        }
        let distinct: BTreeSet<u32> = args.iter().copied().collect();
        if distinct.len() != args.len() {
            return None;
        }
        for w in args.windows(2) {
            edges.insert((w[0], w[1]));
        }
    }
    // Kahn's algorithm, smallest variable first.
    let mut indeg: BTreeMap<u32, usize> = vars.iter().map(|&v| (v, 0)).collect();
    for &(_, b) in &edges {
        *indeg.get_mut(&b).expect("clause var") += 1;
    }
    let mut order = Vec::new();
    while let Some((&v, _)) = indeg.iter().find(|(_, &d)| d == 0) {
        indeg.remove(&v);
        order.push(v);
        for &(a, b) in &edges {
            if a == v {
                if let Some(d) = indeg.get_mut(&b) {
                    *d -= 1;
                }
            }
        }
    }
    (order.len() == vars.len()).then_some(order)
}

/// Every atom's variables appear in strictly increasing order under some
/// per-clause variable order.
pub fn is_ranked(q: &CnfQuery) -> bool {
    q.clauses().iter().all(|c| clause_rank_order(c).is_some())
}

/// Rewrites a constant-free query into ranked form. Each clause is split by
/// the order type of its variables that occur in atoms of arity at least 2;
/// the instance for order type `v0 < v1 < ..` carries guards `!$lt(vi, vi+1)`
/// and refers to relations through rank views `R#τ`.
pub fn rank_query(q: &CnfQuery, arity_cap: usize) -> Result<CnfQuery> {
    if is_ranked(q) {
        return Ok(q.clone());
    }
    if !is_shattered(q) {
        return Err(Error::Invalid("ranking requires a constant-free query".into()));
    }
    for p in q.relation_symbols() {
        if !p.is_guard() && p.arity > arity_cap {
            return Err(Error::UnsupportedArity { name: p.name.to_string(), arity: p.arity });
        }
    }
    let mut out = Vec::new();
    for c in q.clauses() {
        let relevant: Vec<u32> = c
            .literals()
            .iter()
            .filter(|l| !l.pred().is_guard() && l.atom.args.len() >= 2)
            .flat_map(|l| l.atom.vars())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if relevant.len() > RANK_VAR_CAP {
            return Err(Error::UnsupportedArity { name: c.to_string(), arity: relevant.len() });
        }
        let others: Vec<u32> = c.vars().into_iter().filter(|v| !relevant.contains(v)).collect();
        for order in weak_orderings(relevant.len()) {
            let blocks = order.iter().max().map_or(0, |m| m + 1) as u32;
            let rename = |v: u32| -> u32 {
                match relevant.iter().position(|&r| r == v) {
                    Some(i) => order[i] as u32,
                    None => blocks + others.iter().position(|&o| o == v).expect("clause var") as u32,
                }
            };
            let mut lits: Vec<Literal> = c
                .literals()
                .iter()
                .map(|l| {
                    let args: Vec<u32> = l.atom.args.iter().map(|t| rename(t.as_var().expect("constant-free"))).collect();
                    if l.pred().is_guard() || args.len() < 2 {
                        let atom = Atom::new(l.pred().clone(), args.into_iter().map(Term::Var).collect());
                        return Literal { atom, positive: l.positive };
                    }
                    let distinct: Vec<u32> = args.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
                    let tau: Vec<usize> = args.iter().map(|a| distinct.iter().position(|d| d == a).expect("present")).collect();
                    let name = format!("{}#{}", l.pred().name, rank_suffix(&tau));
                    let atom = Atom::new(Predicate::new(&name, distinct.len()), distinct.into_iter().map(Term::Var).collect());
                    Literal { atom, positive: l.positive }
                })
                .collect();
            for b in 1..blocks {
                let lt = Predicate::new(&format!("{GUARD_PREFIX}lt"), 2);
                lits.push(Literal::neg(Atom::new(lt, vec![Term::Var(b - 1), Term::Var(b)])));
            }
            out.push(Clause::new(lits));
        }
    }
    Ok(CnfQuery::new(out))
}

/// The rank views a relation of the given arity is split into.
pub fn ranked_vocabulary(preds: &BTreeSet<Predicate>) -> BTreeMap<Predicate, Vec<Predicate>> {
    preds
        .iter()
        .filter(|p| !p.is_guard() && p.arity >= 2)
        .map(|p| {
            let derived = weak_orderings(p.arity)
                .into_iter()
                .map(|tau| {
                    let k = tau.iter().max().map_or(0, |m| m + 1);
                    Predicate::new(&format!("{}#{}", p.name, rank_suffix(&tau)), k)
                })
                .collect();
            (p.clone(), derived)
        })
        .collect()
}

pub fn shatter(q: &CnfQuery, db: &Pdb) -> Result<(CnfQuery, Pdb)> {
    db.check_query(q)?;
    let out = shatter_query(q);
    let mdb = db.materialize(&out)?;
    Ok((out, mdb))
}

pub fn rank(q: &CnfQuery, db: &Pdb, arity_cap: usize) -> Result<(CnfQuery, Pdb)> {
    db.check_query(q)?;
    let out = rank_query(q, arity_cap)?;
    let mdb = db.materialize(&out)?;
    Ok((out, mdb))
}

/// Shatter then rank, without materializing.
pub fn prepare(q: &CnfQuery, arity_cap: usize) -> Result<CnfQuery> {
    rank_query(&shatter_query(q), arity_cap)
}

/// Clauses produced by [`expand_support`] before it gives up and returns
/// the query unchanged.
const EXPANSION_CLAUSE_CAP: usize = 1024;

/// Rows of `atom`'s relation where the literal can be false, as variable
/// bindings. None when the literal's sign is not satisfied by the relation's
/// default, or the relation is not stored.
type Binding = Vec<(u32, Arc<str>)>;

fn falsifying_bindings(lit: &Literal, db: &Pdb) -> Option<Vec<Binding>> {
    let rel = db.relation(&lit.pred().name)?;
    if rel.symmetric || rel.arity != lit.atom.args.len() {
        return None;
    }
    let default_true = if lit.positive { rel.default.is_one() } else { rel.default.is_zero() };
    if !default_true {
        return None;
    }
    let mut out = Vec::new();
    'rows: for (row, p) in rel.rows() {
        if *p == rel.default {
            continue;
        }
        let mut bind: Vec<(u32, Arc<str>)> = Vec::new();
        for (t, &c) in lit.atom.args.iter().zip(row) {
            let name = db.constant(c);
            match t {
                Term::Const(k) if k != name => continue 'rows,
                Term::Const(_) => {}
                Term::Var(v) => match bind.iter().find(|(w, _)| w == v) {
                    Some((_, prev)) if prev != name => continue 'rows,
                    Some(_) => {}
                    None => bind.push((*v, name.clone())),
                },
            }
        }
        out.push(bind);
    }
    Some(out)
}

fn bind_clause(c: &Clause, bind: &[(u32, Arc<str>)]) -> Clause {
    Clause::new(c.literals().iter().map(|l| {
        let mut l = l.clone();
        for t in &mut l.atom.args {
            if let Term::Var(v) = t {
                if let Some((_, k)) = bind.iter().find(|(w, _)| w == v) {
                    *t = Term::Const(k.clone());
                }
            }
        }
        l
    }))
}

/// Conditions on tuples whose probability equals their relation's default
/// when that default already satisfies the literal: with default 0,
/// `!R(x,y) | C` holds outside R's listed rows, so the clause is replaced by
/// one instance per row with nonzero probability (dually for default 1 and
/// positive literals). Per clause, the literal with the fewest such rows is
/// expanded, provided there are at most `limit` of them; repeated until no
/// clause qualifies. Exact for every database it is computed against.
pub fn expand_support(q: &CnfQuery, db: &Pdb, limit: usize) -> CnfQuery {
    if limit == 0 {
        return q.clone();
    }
    let mut todo: Vec<Clause> = q.clauses().to_vec();
    let mut done: Vec<Clause> = Vec::new();
    let mut changed = false;
    while let Some(c) = todo.pop() {
        let best = c
            .literals()
            .iter()
            .filter(|l| !l.atom.is_ground())
            .filter_map(|l| falsifying_bindings(l, db))
            .filter(|b| b.len() <= limit)
            .min_by_key(Vec::len);
        match best {
            Some(bindings) => {
                changed = true;
                todo.extend(bindings.iter().map(|b| bind_clause(&c, b)));
            }
            None => done.push(c),
        }
        if todo.len() + done.len() > EXPANSION_CLAUSE_CAP {
            return q.clone();
        }
    }
    if changed {
        CnfQuery::new(done)
    } else {
        q.clone()
    }
}
