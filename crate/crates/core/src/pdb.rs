//! Tuple-independent probabilistic databases.
//!
//! Relations are stored under their declared names. A query may also refer
//! to derived views of a stored relation, written as suffixes on its name and
//! resolved right to left:
//!
//! * `R@p:c` pins constant `c` at argument position `p` (1-based) of `R`,
//!   so `R@2:A(x)` reads `R(x, A)`.
//! * `R#τ` is the rank view for the weak ordering `τ` of `R`'s arguments:
//!   `R#01(a, b)` is `R(a, b)` restricted to `a < b`, `R#00(a)` is `R(a, a)`,
//!   `R#10(a, b)` is `R(b, a)` restricted to `a < b`.
//!
//! Names starting with `$` are deterministic guards: `$lt(a, b)` holds iff
//! `a` precedes `b` in domain order and `$ne:A:B(c)` holds iff `c` is
//! neither `A` nor `B`. A stored relation whose name matches exactly always
//! wins over view resolution.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, LazyLock};

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fol::{CnfQuery, Domain, Predicate, Term, GUARD_PREFIX};

static ZERO: LazyLock<BigRational> = LazyLock::new(BigRational::zero);
static ONE: LazyLock<BigRational> = LazyLock::new(BigRational::one);

/// Characters reserved for view and guard syntax.
const RESERVED: [char; 4] = ['@', '#', '$', ':'];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub arity: usize,
    pub default: BigRational,
    /// Declared with a single per-predicate weight; no tuple rows allowed.
    pub symmetric: bool,
    tuples: BTreeMap<Vec<u32>, BigRational>,
}

impl Relation {
    fn new(arity: usize) -> Relation {
        Relation { arity, default: BigRational::zero(), symmetric: false, tuples: BTreeMap::new() }
    }

    pub fn prob(&self, args: &[u32]) -> &BigRational {
        self.tuples.get(args).unwrap_or(&self.default)
    }

    /// Explicit rows, keyed by constant indices.
    pub fn rows(&self) -> impl Iterator<Item = (&Vec<u32>, &BigRational)> {
        self.tuples.iter()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pdb {
    domain: Domain,
    index: HashMap<Arc<str>, u32>,
    relations: BTreeMap<Arc<str>, Relation>,
}

/// A resolved relation name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum View {
    Stored(Arc<str>),
    Pin { inner: Box<View>, pos: usize, constant: u32 },
    Rank { inner: Box<View>, tau: Vec<usize> },
    Less,
    NotIn(Vec<u32>),
}

/// Where a ground atom's truth value comes from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Grounded {
    Tuple(Arc<str>, Vec<u32>),
    Fixed(bool),
}

impl View {
    pub fn ground(&self, args: &[u32]) -> Grounded {
        match self {
            View::Stored(name) => Grounded::Tuple(name.clone(), args.to_vec()),
            View::Pin { inner, pos, constant } => {
                let mut full = Vec::with_capacity(args.len() + 1);
                full.extend_from_slice(&args[..*pos]);
                full.push(*constant);
                full.extend_from_slice(&args[*pos..]);
                inner.ground(&full)
            }
            View::Rank { inner, tau } => {
                if args.windows(2).any(|w| w[0] >= w[1]) {
                    return Grounded::Fixed(false);
                }
                let full: Vec<u32> = tau.iter().map(|&t| args[t]).collect();
                inner.ground(&full)
            }
            View::Less => Grounded::Fixed(args[0] < args[1]),
            View::NotIn(set) => Grounded::Fixed(!set.contains(&args[0])),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            View::Stored(_) => false,
            View::Pin { inner, .. } | View::Rank { inner, .. } => inner.is_deterministic(),
            View::Less | View::NotIn(_) => true,
        }
    }
}

/// All weak orderings of `k` positions, as rank vectors using every value in
/// `0..m` for some `m`, sorted lexicographically.
pub fn weak_orderings(k: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            let m = prefix.iter().max().map_or(0, |x| x + 1);
            if (0..m).all(|v| prefix.contains(&v)) {
                out.push(prefix.clone());
            }
            return;
        }
        for v in 0..k {
            prefix.push(v);
            go(prefix, k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), k, &mut out);
    out
}

pub fn rank_suffix(tau: &[usize]) -> String {
    tau.iter().map(|d| char::from_digit(*d as u32, 10).expect("rank digit")).collect()
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(RESERVED) {
        return Err(Error::InvalidName(name.to_string()));
    }
    Ok(())
}

fn check_prob(what: impl fmt::Display, p: &BigRational) -> Result<()> {
    if *p < BigRational::zero() || *p > BigRational::one() {
        return Err(Error::ProbabilityOutOfRange { what: what.to_string(), value: p.to_string() });
    }
    Ok(())
}

impl Pdb {
    pub fn new(domain: Domain) -> Result<Pdb> {
        let mut index = HashMap::new();
        for (i, c) in domain.constants().iter().enumerate() {
            check_name(c)?;
            index.insert(c.clone(), i as u32);
        }
        Ok(Pdb { domain, index, relations: BTreeMap::new() })
    }

    pub fn with_size(n: usize) -> Pdb {
        Pdb::new(Domain::of_size(n)).expect("generated names are valid")
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn constant_index(&self, c: &str) -> Option<u32> {
        self.index.get(c).copied()
    }

    pub fn constant(&self, i: u32) -> &Arc<str> {
        &self.domain.constants()[i as usize]
    }

    pub fn relations(&self) -> impl Iterator<Item = (&Arc<str>, &Relation)> {
        self.relations.iter()
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    /// Declares a stored relation. Derived names (containing view syntax) are
    /// accepted so transformed databases can be materialized.
    pub fn declare(&mut self, name: &str, arity: usize) -> Result<&mut Relation> {
        if name.is_empty() || name.starts_with(GUARD_PREFIX) {
            return Err(Error::InvalidName(name.to_string()));
        }
        let rel = self.relations.entry(Arc::from(name)).or_insert_with(|| Relation::new(arity));
        if rel.arity != arity {
            return Err(Error::ArityMismatch { name: name.to_string(), expected: rel.arity, found: arity });
        }
        Ok(rel)
    }

    pub fn set_default(&mut self, name: &str, arity: usize, p: BigRational) -> Result<()> {
        check_prob(format!("default {name}"), &p)?;
        let rel = self.declare(name, arity)?;
        if rel.symmetric {
            return Err(Error::Invalid(format!("`{name}` is symmetric")));
        }
        rel.default = p;
        Ok(())
    }

    pub fn set_symmetric(&mut self, name: &str, arity: usize, p: BigRational) -> Result<()> {
        check_prob(format!("sym {name}"), &p)?;
        let rel = self.declare(name, arity)?;
        if !rel.tuples.is_empty() {
            return Err(Error::Invalid(format!("`{name}` has tuple rows")));
        }
        rel.default = p;
        rel.symmetric = true;
        Ok(())
    }

    pub fn set_prob(&mut self, name: &str, args: &[&str], p: BigRational) -> Result<()> {
        let idx = args
            .iter()
            .map(|a| self.constant_index(a).ok_or_else(|| Error::UndeclaredConstant(a.to_string())))
            .collect::<Result<Vec<u32>>>()?;
        self.set_prob_idx(name, idx, p)
    }

    pub fn set_prob_idx(&mut self, name: &str, args: Vec<u32>, p: BigRational) -> Result<()> {
        check_prob(format_args!("{name}{args:?}"), &p)?;
        let rel = self.declare(name, args.len())?;
        if rel.symmetric {
            return Err(Error::Invalid(format!("`{name}` is symmetric")));
        }
        rel.tuples.insert(args, p);
        Ok(())
    }

    /// Resolves a (possibly derived) relation name used with `arity` arguments.
    pub fn resolve(&self, name: &str, arity: usize) -> Result<View> {
        if let Some(rel) = self.relations.get(name) {
            if rel.arity != arity {
                return Err(Error::ArityMismatch { name: name.to_string(), expected: rel.arity, found: arity });
            }
            return Ok(View::Stored(Arc::from(name)));
        }
        let cut = match (name.rfind('@'), name.rfind('#')) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        if let Some(i) = cut.filter(|&i| i > 0) {
            let (prefix, suffix) = (&name[..i], &name[i + 1..]);
            if name.as_bytes()[i] == b'@' {
                let (pos, c) = suffix.split_once(':').ok_or_else(|| Error::UnknownPredicate(name.to_string()))?;
                let pos: usize = pos.parse().map_err(|_| Error::UnknownPredicate(name.to_string()))?;
                if pos == 0 || pos > arity + 1 {
                    return Err(Error::UnknownPredicate(name.to_string()));
                }
                let constant = self.constant_index(c).ok_or_else(|| Error::UndeclaredConstant(c.to_string()))?;
                let inner = self.resolve(prefix, arity + 1)?;
                return Ok(View::Pin { inner: Box::new(inner), pos: pos - 1, constant });
            }
            let tau: Vec<usize> = suffix
                .chars()
                .map(|ch| ch.to_digit(10).map(|d| d as usize))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::UnknownPredicate(name.to_string()))?;
            let m = tau.iter().max().map_or(0, |x| x + 1);
            if tau.is_empty() || !(0..m).all(|v| tau.contains(&v)) {
                return Err(Error::UnknownPredicate(name.to_string()));
            }
            if m != arity {
                return Err(Error::ArityMismatch { name: name.to_string(), expected: m, found: arity });
            }
            let inner = self.resolve(prefix, tau.len())?;
            return Ok(View::Rank { inner: Box::new(inner), tau });
        }
        if let Some(guard) = name.strip_prefix(GUARD_PREFIX) {
            let (expected, view) = if guard == "lt" {
                (2, View::Less)
            } else if let Some(rest) = guard.strip_prefix("ne:") {
                let set = rest
                    .split(':')
                    .map(|c| self.constant_index(c).ok_or_else(|| Error::UndeclaredConstant(c.to_string())))
                    .collect::<Result<Vec<u32>>>()?;
                (1, View::NotIn(set))
            } else {
                return Err(Error::UnknownPredicate(name.to_string()));
            };
            if arity != expected {
                return Err(Error::ArityMismatch { name: name.to_string(), expected, found: arity });
            }
            return Ok(view);
        }
        Err(Error::UnknownPredicate(name.to_string()))
    }

    pub fn tuple_prob(&self, g: &Grounded) -> &BigRational {
        match g {
            Grounded::Fixed(true) => &ONE,
            Grounded::Fixed(false) => &ZERO,
            Grounded::Tuple(name, args) => self.relations[name].prob(args),
        }
    }

    /// Probability of a ground atom given by a predicate and constant names.
    pub fn prob(&self, pred: &Predicate, args: &[&str]) -> Result<BigRational> {
        let view = self.resolve(&pred.name, pred.arity)?;
        let idx = args
            .iter()
            .map(|a| self.constant_index(a).ok_or_else(|| Error::UndeclaredConstant(a.to_string())))
            .collect::<Result<Vec<u32>>>()?;
        if idx.len() != pred.arity {
            return Err(Error::ArityMismatch { name: pred.name.to_string(), expected: pred.arity, found: idx.len() });
        }
        Ok(self.tuple_prob(&view.ground(&idx)).clone())
    }

    /// Every relation and constant of `q` must be known to this database.
    pub fn check_query(&self, q: &CnfQuery) -> Result<()> {
        for p in q.relation_symbols() {
            self.resolve(&p.name, p.arity)?;
        }
        for c in q.constants() {
            if self.constant_index(&c).is_none() {
                return Err(Error::UndeclaredConstant(c.to_string()));
            }
        }
        for cl in q.clauses() {
            for l in cl.literals() {
                debug_assert!(l.atom.args.iter().all(|t| matches!(t, Term::Var(_) | Term::Const(_))));
            }
        }
        Ok(())
    }

    /// Copies the rows of every relation `q` mentions into a database that
    /// stores each derived name under its own name. Guards stay virtual.
    pub fn materialize(&self, q: &CnfQuery) -> Result<Pdb> {
        let mut out = Pdb::new(self.domain.clone())?;
        let n = self.domain.len() as u32;
        for p in q.relation_symbols() {
            let view = self.resolve(&p.name, p.arity)?;
            if view.is_deterministic() {
                continue;
            }
            if let View::Stored(name) = &view {
                out.relations.insert(name.clone(), self.relations[name].clone());
                continue;
            }
            let rel = out.declare(&p.name, p.arity)?;
            let mut idx = vec![0u32; p.arity];
            loop {
                let v = self.tuple_prob(&view.ground(&idx));
                if !v.is_zero() {
                    rel.tuples.insert(idx.clone(), v.clone());
                }
                if !advance(&mut idx, n) {
                    break;
                }
            }
        }
        Ok(out)
    }

    /// Number of uncertain ground tuples (probability strictly between 0 and 1)
    /// over the relations `q` mentions.
    pub fn uncertain_tuples(&self, q: &CnfQuery) -> Result<usize> {
        let n = self.domain.len() as u32;
        let mut seen = std::collections::BTreeSet::new();
        for p in q.relation_symbols() {
            let view = self.resolve(&p.name, p.arity)?;
            let mut idx = vec![0u32; p.arity];
            loop {
                let g = view.ground(&idx);
                let v = self.tuple_prob(&g);
                if !v.is_zero() && !v.is_one() {
                    seen.insert(g);
                }
                if !advance(&mut idx, n) {
                    break;
                }
            }
        }
        Ok(seen.len())
    }
}

/// Odometer increment over `0..n` per position; false once wrapped.
pub(crate) fn advance(idx: &mut [u32], n: u32) -> bool {
    if n == 0 {
        return false;
    }
    for d in idx.iter_mut().rev() {
        *d += 1;
        if *d < n {
            return true;
        }
        *d = 0;
    }
    false
}

/// A random database over `c1..cn` giving every tuple of every relation a
/// probability drawn from `{0, 1/den, ..., 1}`; roughly a fifth of the tuples
/// are left at the default 0.
pub fn random_pdb<R: Rng>(rng: &mut R, vocab: &[Predicate], n: usize, den: i64) -> Pdb {
    random_pdb_over(rng, vocab, Domain::of_size(n), den)
}

pub fn random_pdb_over<R: Rng>(rng: &mut R, vocab: &[Predicate], domain: Domain, den: i64) -> Pdb {
    let n = domain.len();
    let mut db = Pdb::new(domain).expect("valid constant names");
    for p in vocab.iter().filter(|p| !p.is_guard()) {
        db.declare(&p.name, p.arity).expect("fresh vocabulary");
        let mut idx = vec![0u32; p.arity];
        loop {
            if rng.gen_range(0..5) != 0 {
                let num = rng.gen_range(0..=den);
                db.set_prob_idx(&p.name, idx.clone(), BigRational::new(num.into(), den.into())).expect("valid probability");
            }
            if !advance(&mut idx, n as u32) {
                break;
            }
        }
    }
    db
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;

    fn advisors() -> Pdb {
        let mut db = Pdb::new(Domain::new(vec!["Anne".into(), "Bob".into(), "Charlie".into()]).unwrap()).unwrap();
        db.set_prob("Advises", &["Anne", "Bob"], ratio(7, 10)).unwrap();
        db.set_prob("Prof", &["Anne"], ratio(9, 10)).unwrap();
        db
    }

    #[test]
    fn stored_lookup_and_default() {
        let db = advisors();
        let adv = Predicate::new("Advises", 2);
        assert_eq!(db.prob(&adv, &["Anne", "Bob"]).unwrap(), ratio(7, 10));
        assert_eq!(db.prob(&adv, &["Bob", "Anne"]).unwrap(), ratio(0, 1));
        assert!(matches!(db.prob(&Predicate::new("Advises", 1), &["Anne"]), Err(Error::ArityMismatch { .. })));
        assert!(matches!(db.prob(&Predicate::new("Nope", 1), &["Anne"]), Err(Error::UnknownPredicate(_))));
    }

    #[test]
    fn pinned_and_ranked_views() {
        let db = advisors();
        assert_eq!(db.prob(&Predicate::new("Advises@1:Anne", 1), &["Bob"]).unwrap(), ratio(7, 10));
        assert_eq!(db.prob(&Predicate::new("Advises@2:Bob", 1), &["Anne"]).unwrap(), ratio(7, 10));
        assert_eq!(db.prob(&Predicate::new("Advises@1:Anne@1:Bob", 0), &[]).unwrap(), ratio(7, 10));
        assert_eq!(db.prob(&Predicate::new("Advises#01", 2), &["Anne", "Bob"]).unwrap(), ratio(7, 10));
        assert_eq!(db.prob(&Predicate::new("Advises#10", 2), &["Anne", "Bob"]).unwrap(), ratio(0, 1));
        assert_eq!(db.prob(&Predicate::new("Advises#10", 2), &["Bob", "Anne"]).unwrap(), ratio(0, 1));
        assert_eq!(db.prob(&Predicate::new("Advises#01@1:Anne", 1), &["Bob"]).unwrap(), ratio(7, 10));
    }

    #[test]
    fn guards() {
        let db = advisors();
        let lt = Predicate::new("$lt", 2);
        assert_eq!(db.prob(&lt, &["Anne", "Bob"]).unwrap(), ratio(1, 1));
        assert_eq!(db.prob(&lt, &["Bob", "Bob"]).unwrap(), ratio(0, 1));
        let ne = Predicate::new("$ne:Anne", 1);
        assert_eq!(db.prob(&ne, &["Anne"]).unwrap(), ratio(0, 1));
        assert_eq!(db.prob(&ne, &["Bob"]).unwrap(), ratio(1, 1));
        assert_eq!(db.prob(&Predicate::new("$lt@1:Anne", 1), &["Charlie"]).unwrap(), ratio(1, 1));
    }

    #[test]
    fn range_and_constant_checks() {
        let mut db = advisors();
        assert!(matches!(db.set_prob("Prof", &["Anne"], ratio(3, 2)), Err(Error::ProbabilityOutOfRange { .. })));
        assert!(matches!(db.set_prob("Prof", &["Zed"], ratio(1, 2)), Err(Error::UndeclaredConstant(_))));
        assert!(matches!(db.set_prob("Prof", &["Anne", "Bob"], ratio(1, 2)), Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn weak_ordering_counts() {
        assert_eq!(weak_orderings(1).len(), 1);
        assert_eq!(weak_orderings(2), vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        assert_eq!(weak_orderings(3).len(), 13);
    }

    #[test]
    fn materialize_keeps_probabilities() {
        let db = advisors();
        let pinned = Predicate::new("Advises@1:Anne", 1);
        let q = CnfQuery::new(vec![crate::fol::Clause::new(vec![crate::fol::Literal::pos(crate::fol::Atom::new(
            pinned.clone(),
            vec![Term::Var(0)],
        ))])]);
        let m = db.materialize(&q).unwrap();
        assert_eq!(m.prob(&pinned, &["Bob"]).unwrap(), ratio(7, 10));
        assert!(matches!(m.resolve("Advises@1:Anne", 1).unwrap(), View::Stored(_)));
    }
}
