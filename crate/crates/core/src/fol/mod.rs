//! Relational first-order CNF.
//!
//! Clauses are universally quantified and scoped: every clause owns its
//! variables, numbered `0..k` in a canonical order, so two clauses never share
//! a variable and conjoining queries needs no renaming. Queries are kept
//! normalized (see [`CnfQuery::new`]), which makes syntactic equality a cheap
//! and deterministic pre-filter for semantic equivalence.

mod clause;
mod normalize;
mod separator;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

pub use clause::{connected_components, Clause};
pub use normalize::subsumes;
pub use separator::{find_separator, find_separator_with, verify_separator};

/// Prefix reserved for deterministic helper relations introduced by
/// preprocessing (order and inequality guards).
pub const GUARD_PREFIX: char = '$';

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(u32),
    Const(Arc<str>),
}

impl Term {
    pub fn constant(name: &str) -> Term {
        Term::Const(Arc::from(name))
    }

    pub fn as_var(&self) -> Option<u32> {
        match self {
            Term::Var(v) => Some(*v),
            Term::Const(_) => None,
        }
    }
}

const VAR_NAMES: [&str; 6] = ["x", "y", "z", "u", "v", "w"];

pub fn var_name(v: u32) -> String {
    match VAR_NAMES.get(v as usize) {
        Some(n) => (*n).to_string(),
        None => format!("x{v}"),
    }
}

/// Quotes a constant unless it already reads as a constant in query syntax.
pub fn render_constant(c: &str) -> String {
    let plain = c.chars().next().is_some_and(|ch| ch.is_ascii_uppercase())
        && c.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_');
    if plain {
        c.to_string()
    } else {
        format!("\"{c}\"")
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(&var_name(*v)),
            Term::Const(c) => f.write_str(&render_constant(c)),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    pub name: Arc<str>,
    pub arity: usize,
}

impl Predicate {
    pub fn new(name: &str, arity: usize) -> Predicate {
        Predicate { name: Arc::from(name), arity }
    }

    /// Deterministic helper relation created by preprocessing.
    pub fn is_guard(&self) -> bool {
        self.name.starts_with(GUARD_PREFIX)
    }

    /// Name of the stored relation this symbol is a view of: everything
    /// before the first `@` (slice) or `#` (rank) segment.
    pub fn base_name(&self) -> &str {
        let end = self.name.find(['@', '#']).unwrap_or(self.name.len());
        &self.name[..end]
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub pred: Predicate,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: Predicate, args: Vec<Term>) -> Atom {
        assert_eq!(pred.arity, args.len(), "arity mismatch for {}", pred.name);
        Atom { pred, args }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| matches!(t, Term::Const(_)))
    }

    pub fn vars(&self) -> impl Iterator<Item = u32> + '_ {
        self.args.iter().filter_map(Term::as_var)
    }

    /// Replaces every constant argument by a slice of the predicate: `R(x, A)`
    /// becomes `R@2:A(x)`. Constants are pinned left to right, each position
    /// counted in the residual argument list, which is the inverse of how
    /// [`crate::pdb::Pdb`] resolves the name.
    pub fn specialize(&self) -> Atom {
        if self.args.iter().all(|t| matches!(t, Term::Var(_))) {
            return self.clone();
        }
        let mut name = self.pred.name.to_string();
        let mut args = Vec::with_capacity(self.args.len());
        for t in &self.args {
            match t {
                Term::Var(_) => args.push(t.clone()),
                Term::Const(c) => {
                    name.push_str(&format!("@{}:{}", args.len() + 1, c));
                }
            }
        }
        Atom { pred: Predicate::new(&name, args.len()), args }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Literal {
        Literal { atom, positive: true }
    }

    pub fn neg(atom: Atom) -> Literal {
        Literal { atom, positive: false }
    }

    pub fn negated(&self) -> Literal {
        Literal { atom: self.atom.clone(), positive: !self.positive }
    }

    pub fn pred(&self) -> &Predicate {
        &self.atom.pred
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            f.write_str("!")?;
        }
        write!(f, "{}", self.atom)
    }
}

impl fmt::Debug for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A conjunction of clauses. The empty conjunction is TRUE; a query holding
/// the empty clause is FALSE (and then holds nothing else).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CnfQuery {
    clauses: Vec<Clause>,
}

impl CnfQuery {
    /// Builds a normalized query: tautologies dropped, ground unit clauses
    /// propagated, clauses condensed, subsumed clauses removed, sorted.
    pub fn new(clauses: impl IntoIterator<Item = Clause>) -> CnfQuery {
        CnfQuery { clauses: normalize::normalize(clauses.into_iter().collect()) }
    }

    pub fn truth() -> CnfQuery {
        CnfQuery { clauses: Vec::new() }
    }

    pub fn falsity() -> CnfQuery {
        CnfQuery { clauses: vec![Clause::empty()] }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn is_true(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn is_false(&self) -> bool {
        self.clauses.len() == 1 && self.clauses[0].is_empty()
    }

    pub fn and(&self, other: &CnfQuery) -> CnfQuery {
        CnfQuery::new(self.clauses.iter().chain(other.clauses.iter()).cloned())
    }

    pub fn with_clause(&self, c: Clause) -> CnfQuery {
        CnfQuery::new(self.clauses.iter().cloned().chain(std::iter::once(c)))
    }

    pub fn relation_symbols(&self) -> BTreeSet<Predicate> {
        self.clauses.iter().flat_map(|c| c.literals().iter().map(|l| l.pred().clone())).collect()
    }

    pub fn constants(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        for c in &self.clauses {
            for l in c.literals() {
                for t in &l.atom.args {
                    if let Term::Const(k) = t {
                        out.insert(k.clone());
                    }
                }
            }
        }
        out
    }

    pub fn max_arity(&self) -> usize {
        self.relation_symbols().iter().map(|p| p.arity).max().unwrap_or(0)
    }

    pub fn max_clause_len(&self) -> usize {
        self.clauses.iter().map(Clause::len).max().unwrap_or(0)
    }

    /// Total number of variables, counting each clause's scope separately.
    pub fn num_vars(&self) -> usize {
        self.clauses.iter().map(|c| c.num_vars()).sum()
    }
}

pub fn relation_symbols(q: &CnfQuery) -> BTreeSet<Predicate> {
    q.relation_symbols()
}

impl fmt::Display for CnfQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for CnfQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_true() {
            f.write_str("TRUE")
        } else {
            fmt::Display::fmt(self, f)
        }
    }
}

/// A disjunction of CNF queries, each with its own variables.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct UnionCnf {
    pub disjuncts: Vec<CnfQuery>,
}

impl fmt::Display for UnionCnf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, q) in self.disjuncts.iter().enumerate() {
            if i > 0 {
                f.write_str(" OR ")?;
            }
            write!(f, "[{q}]")?;
        }
        Ok(())
    }
}

/// Ordered list of distinct constants.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Domain {
    constants: Vec<Arc<str>>,
}

impl Domain {
    pub fn new(constants: Vec<Arc<str>>) -> Option<Domain> {
        let distinct: BTreeSet<_> = constants.iter().collect();
        (distinct.len() == constants.len()).then_some(Domain { constants })
    }

    /// `c1 .. cn`.
    pub fn of_size(n: usize) -> Domain {
        Domain { constants: (1..=n).map(|i| Arc::from(format!("c{i}").as_str())).collect() }
    }

    pub fn constants(&self) -> &[Arc<str>] {
        &self.constants
    }

    pub fn len(&self) -> usize {
        self.constants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constants.is_empty()
    }

    pub fn index_of(&self, c: &str) -> Option<usize> {
        self.constants.iter().position(|k| &**k == c)
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn atom(name: &str, args: &[&str]) -> Atom {
        let args = args
            .iter()
            .map(|a| match *a {
                "x" => Term::Var(0),
                "y" => Term::Var(1),
                "z" => Term::Var(2),
                "u" => Term::Var(3),
                other => Term::constant(other),
            })
            .collect::<Vec<_>>();
        Atom::new(Predicate::new(name, args.len()), args)
    }

    pub fn p(name: &str, args: &[&str]) -> Literal {
        Literal::pos(atom(name, args))
    }

    pub fn n(name: &str, args: &[&str]) -> Literal {
        Literal::neg(atom(name, args))
    }

    pub fn clause(lits: Vec<Literal>) -> Clause {
        Clause::new(lits)
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    #[test]
    fn specialize_pins_constants_left_to_right() {
        let a = atom("R", &["x", "Anne"]);
        assert_eq!(a.specialize().to_string(), "R@2:Anne(x)");
        let b = atom("R", &["Anne", "x", "Bob"]);
        assert_eq!(b.specialize().to_string(), "R@1:Anne@2:Bob(x)");
        let g = atom("T", &["Anne"]);
        assert_eq!(g.specialize().to_string(), "T@1:Anne()");
    }

    #[test]
    fn relation_symbols_of_h1_and_true() {
        let h1 = CnfQuery::new(vec![
            clause(vec![p("R", &["x"]), p("S", &["x", "y"])]),
            clause(vec![p("S", &["x", "y"]), p("T", &["y"])]),
        ]);
        let names: Vec<_> = h1.relation_symbols().iter().map(|p| p.name.to_string()).collect();
        assert_eq!(names, vec!["R", "S", "T"]);
        assert!(CnfQuery::truth().relation_symbols().is_empty());
    }

    #[test]
    fn base_name_strips_views() {
        assert_eq!(Predicate::new("R@1:a#01", 2).base_name(), "R");
        assert_eq!(Predicate::new("Follows", 2).base_name(), "Follows");
        assert!(Predicate::new("$lt", 2).is_guard());
    }

    #[test]
    fn domain_rejects_duplicates() {
        assert!(Domain::new(vec![Arc::from("a"), Arc::from("a")]).is_none());
        assert_eq!(Domain::of_size(3).index_of("c2"), Some(1));
    }
}
