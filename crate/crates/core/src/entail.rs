//! Implication between universally quantified CNF queries, and the search
//! for disconnected implicates.
//!
//! `q ⇒ C` fails iff `q ∧ ¬C` is satisfiable. Skolemizing the variables of
//! `C` with fresh constants leaves a universal sentence without function
//! symbols, which is satisfiable iff it has a model over its own constants.
//! So we ground `q` over those constants and look for a propositional model.
//! Relation names are opaque: deterministic guards are not interpreted,
//! which can only miss implications, never invent them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::fol::{subsumes, Atom, Clause, CnfQuery, Literal, Term};

pub const DEFAULT_DECISION_BUDGET: u64 = 1 << 24;
pub const DEFAULT_RESOLUTION_DEPTH: usize = 4;
/// Ground literal occurrences allowed in one satisfiability check.
const GROUND_SIZE_CAP: usize = 4_000_000;
const RESOLUTION_CLAUSE_CAP: usize = 4_000;
const SKOLEM_PREFIX: &str = "sk'";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImplicateCandidate {
    pub clause: Clause,
    pub components: Vec<Clause>,
}

#[derive(Debug)]
pub struct Entailer {
    pub decision_budget: u64,
    pub resolution_depth: usize,
    /// Clause-length bound for resolvents; `None` uses the query's longest clause.
    pub max_resolvent_len: Option<usize>,
    cache: Mutex<HashMap<(CnfQuery, Clause), bool>>,
}

impl Default for Entailer {
    fn default() -> Self {
        Entailer::new(DEFAULT_DECISION_BUDGET, DEFAULT_RESOLUTION_DEPTH)
    }
}

impl Entailer {
    pub fn new(decision_budget: u64, resolution_depth: usize) -> Entailer {
        Entailer { decision_budget, resolution_depth, max_resolvent_len: None, cache: Mutex::new(HashMap::new()) }
    }

    pub fn implies(&self, q: &CnfQuery, q2: &CnfQuery) -> Result<bool> {
        for c in q2.clauses() {
            if !self.implies_clause(q, c)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn equivalent(&self, q: &CnfQuery, q2: &CnfQuery) -> Result<bool> {
        if q == q2 {
            return Ok(true);
        }
        Ok(self.implies(q, q2)? && self.implies(q2, q)?)
    }

    pub fn implies_clause(&self, q: &CnfQuery, c: &Clause) -> Result<bool> {
        if q.is_false() || q.clauses().iter().any(|d| subsumes(d, c)) {
            return Ok(true);
        }
        let key = (q.clone(), c.clone());
        if let Some(&v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let v = !self.countermodel_exists(q, c)?;
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    fn countermodel_exists(&self, q: &CnfQuery, c: &Clause) -> Result<bool> {
        let mut constants: Vec<Arc<str>> = q.constants().into_iter().collect();
        for l in c.literals() {
            for t in &l.atom.args {
                if let Term::Const(k) = t {
                    if !constants.contains(k) {
                        constants.push(k.clone());
                    }
                }
            }
        }
        let skolem: HashMap<u32, Arc<str>> =
            c.vars().into_iter().map(|v| (v, Arc::from(format!("{SKOLEM_PREFIX}{v}").as_str()))).collect();
        constants.extend(skolem.values().cloned());
        constants.sort();
        if constants.is_empty() {
            constants.push(Arc::from(format!("{SKOLEM_PREFIX}d").as_str()));
        }
        let mut g = Grounder::default();
        for l in c.literals() {
            let args = l
                .atom
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) => Term::Const(skolem[v].clone()),
                    k => k.clone(),
                })
                .collect();
            let lit = g.literal(&Literal { atom: Atom { pred: l.atom.pred.clone(), args }, positive: !l.positive });
            g.clauses.push(vec![lit]);
        }
        for d in q.clauses() {
            g.add_clause(d, &constants)?;
        }
        sat(g.clauses, g.next as usize, self.decision_budget)
    }

    /// Disconnected clauses implied by `q` whose components each subsume a
    /// clause of `q` and are not implied by `q` on their own. Proposed by
    /// bounded resolution, confirmed by [`Entailer::implies_clause`], and
    /// pruned to the strongest under implication.
    pub fn disconnected_prime_implicates(&self, q: &CnfQuery) -> Result<Vec<ImplicateCandidate>> {
        if q.is_true() || q.is_false() {
            return Ok(Vec::new());
        }
        let bound = self.max_resolvent_len.unwrap_or_else(|| q.max_clause_len());
        let closure = resolution_closure(q, bound, self.resolution_depth);
        let mut found: Vec<ImplicateCandidate> = Vec::new();
        for c in closure {
            let comps = c.components();
            if comps.len() < 2 {
                continue;
            }
            if !comps.iter().all(|d| q.clauses().iter().any(|k| subsumes(d, k))) {
                continue;
            }
            let mut trivial = false;
            for d in &comps {
                if self.implies_clause(q, d)? {
                    trivial = true;
                    break;
                }
            }
            if trivial || !self.implies_clause(q, &c)? {
                continue;
            }
            found.push(ImplicateCandidate { clause: c, components: comps });
        }
        let mut keep = vec![true; found.len()];
        for i in 0..found.len() {
            for j in 0..found.len() {
                if i == j || !keep[j] || !keep[i] {
                    continue;
                }
                let cj = CnfQuery::new(vec![found[j].clause.clone()]);
                let ci = CnfQuery::new(vec![found[i].clause.clone()]);
                if self.implies_clause(&cj, &found[i].clause)? {
                    let back = self.implies_clause(&ci, &found[j].clause)?;
                    if !back || j < i {
                        keep[i] = false;
                    }
                }
            }
        }
        Ok(found.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect())
    }
}

pub fn implies(q: &CnfQuery, q2: &CnfQuery) -> Result<bool> {
    Entailer::default().implies(q, q2)
}

pub fn equivalent(q: &CnfQuery, q2: &CnfQuery) -> Result<bool> {
    Entailer::default().equivalent(q, q2)
}

pub fn disconnected_prime_implicates(q: &CnfQuery) -> Result<Vec<ImplicateCandidate>> {
    Entailer::default().disconnected_prime_implicates(q)
}

#[derive(Default)]
struct Grounder {
    atoms: HashMap<Atom, i32>,
    next: i32,
    clauses: Vec<Vec<i32>>,
    size: usize,
}

impl Grounder {
    fn literal(&mut self, l: &Literal) -> i32 {
        let next = &mut self.next;
        let id = *self.atoms.entry(l.atom.clone()).or_insert_with(|| {
            *next += 1;
            *next
        });
        if l.positive {
            id
        } else {
            -id
        }
    }

    fn add_clause(&mut self, c: &Clause, constants: &[Arc<str>]) -> Result<()> {
        let vars: Vec<u32> = c.vars().into_iter().collect();
        let n = constants.len();
        let mut assign = vec![0usize; vars.len()];
        loop {
            self.size += c.len();
            if self.size > GROUND_SIZE_CAP {
                return Err(Error::ResourceCap(format!("grounding exceeds {GROUND_SIZE_CAP} literals")));
            }
            let mut lits: Vec<i32> = Vec::with_capacity(c.len());
            let mut taut = false;
            for l in c.literals() {
                let args = l
                    .atom
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => Term::Const(constants[assign[vars.iter().position(|w| w == v).expect("var")]].clone()),
                        k => k.clone(),
                    })
                    .collect();
                let lit = self.literal(&Literal { atom: Atom { pred: l.atom.pred.clone(), args }, positive: l.positive });
                if lits.contains(&-lit) {
                    taut = true;
                }
                if !lits.contains(&lit) {
                    lits.push(lit);
                }
            }
            if !taut {
                self.clauses.push(lits);
            }
            let mut i = vars.len();
            loop {
                if i == 0 {
                    return Ok(());
                }
                i -= 1;
                assign[i] += 1;
                if assign[i] < n {
                    break;
                }
                assign[i] = 0;
            }
        }
    }
}

/// DPLL with unit propagation. Variables are `1..=nvars`.
pub(crate) fn sat(clauses: Vec<Vec<i32>>, nvars: usize, budget: u64) -> Result<bool> {
    let mut solver = Dpll { clauses, value: vec![0i8; nvars + 1], trail: Vec::new(), decisions: 0, budget };
    if solver.clauses.iter().any(Vec::is_empty) {
        return Ok(false);
    }
    solver.search()
}

struct Dpll {
    clauses: Vec<Vec<i32>>,
    value: Vec<i8>,
    trail: Vec<i32>,
    decisions: u64,
    budget: u64,
}

impl Dpll {
    fn lit_value(&self, l: i32) -> i8 {
        let v = self.value[l.unsigned_abs() as usize];
        if l > 0 {
            v
        } else {
            -v
        }
    }

    fn set(&mut self, l: i32) {
        self.value[l.unsigned_abs() as usize] = if l > 0 { 1 } else { -1 };
        self.trail.push(l);
    }

    /// False on conflict.
    fn propagate(&mut self) -> bool {
        loop {
            let mut unit = None;
            for c in &self.clauses {
                let mut free = None;
                let mut nfree = 0;
                let mut sat = false;
                for &l in c {
                    match self.lit_value(l) {
                        1 => {
                            sat = true;
                            break;
                        }
                        0 => {
                            nfree += 1;
                            free = Some(l);
                        }
                        _ => {}
                    }
                }
                if sat {
                    continue;
                }
                match nfree {
                    0 => return false,
                    1 => {
                        unit = free;
                        break;
                    }
                    _ => {}
                }
            }
            match unit {
                Some(l) => self.set(l),
                None => return true,
            }
        }
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let l = self.trail.pop().expect("trail");
            self.value[l.unsigned_abs() as usize] = 0;
        }
    }

    fn search(&mut self) -> Result<bool> {
        if !self.propagate() {
            return Ok(false);
        }
        // Branch on a literal of the first unsatisfied clause.
        let pick = self.clauses.iter().find_map(|c| {
            if c.iter().any(|&l| self.lit_value(l) == 1) {
                None
            } else {
                c.iter().copied().find(|&l| self.lit_value(l) == 0)
            }
        });
        let Some(l) = pick else {
            return Ok(true);
        };
        self.decisions += 1;
        if self.decisions > self.budget {
            return Err(Error::ResourceCap(format!("satisfiability search exceeded {} decisions", self.budget)));
        }
        for choice in [l, -l] {
            let mark = self.trail.len();
            self.set(choice);
            if self.search()? {
                return Ok(true);
            }
            self.undo(mark);
        }
        Ok(false)
    }
}

fn unify_terms(a: &Term, b: &Term, sub: &mut [Option<Term>]) -> bool {
    let a = walk(a, sub);
    let b = walk(b, sub);
    match (&a, &b) {
        _ if a == b => true,
        (Term::Var(v), t) | (t, Term::Var(v)) => {
            sub[*v as usize] = Some(t.clone());
            true
        }
        _ => false,
    }
}

fn walk(t: &Term, sub: &[Option<Term>]) -> Term {
    let mut cur = t.clone();
    while let Term::Var(v) = cur {
        match &sub[v as usize] {
            Some(next) => cur = next.clone(),
            None => break,
        }
    }
    cur
}

fn apply(lits: &[Literal], sub: &[Option<Term>]) -> Vec<Literal> {
    lits.iter()
        .map(|l| {
            let args = l.atom.args.iter().map(|t| walk(t, sub)).collect();
            Literal { atom: Atom { pred: l.atom.pred.clone(), args }, positive: l.positive }
        })
        .collect()
}

fn resolvents(c1: &Clause, c2: &Clause) -> Vec<Clause> {
    let off = c1.vars().last().map_or(0, |v| v + 1);
    let l1s = c1.literals();
    let l2s = c2.shifted_literals(off);
    let nvars = off as usize + c2.vars().last().map_or(0, |v| *v as usize + 1);
    let mut out = Vec::new();
    for (i, a) in l1s.iter().enumerate() {
        for (j, b) in l2s.iter().enumerate() {
            if a.positive == b.positive || a.atom.pred != b.atom.pred {
                continue;
            }
            let mut sub = vec![None; nvars];
            if !a.atom.args.iter().zip(&b.atom.args).all(|(x, y)| unify_terms(x, y, &mut sub)) {
                continue;
            }
            let rest: Vec<Literal> = l1s
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, l)| l.clone())
                .chain(l2s.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, l)| l.clone()))
                .collect();
            out.push(Clause::new(apply(&rest, &sub)));
        }
    }
    out
}

fn factors(c: &Clause) -> Vec<Clause> {
    let lits = c.literals();
    let nvars = c.vars().last().map_or(0, |v| *v as usize + 1);
    let mut out = Vec::new();
    for i in 0..lits.len() {
        for j in i + 1..lits.len() {
            let (a, b) = (&lits[i], &lits[j]);
            if a.positive != b.positive || a.atom.pred != b.atom.pred {
                continue;
            }
            let mut sub = vec![None; nvars];
            if a.atom.args.iter().zip(&b.atom.args).all(|(x, y)| unify_terms(x, y, &mut sub)) {
                out.push(Clause::new(apply(lits, &sub)));
            }
        }
    }
    out
}

/// Clauses derivable from `q` by at most `depth` rounds of binary
/// resolution and factoring, keeping resolvents of at most `bound`
/// literals, in order of derivation.
pub fn resolution_closure(q: &CnfQuery, bound: usize, depth: usize) -> Vec<Clause> {
    let mut set: Vec<Clause> = q.clauses().to_vec();
    let mut frontier = 0;
    for _ in 0..depth {
        let end = set.len();
        let mut fresh: Vec<Clause> = Vec::new();
        for i in 0..end {
            let mut derived = if i >= frontier { factors(&set[i]) } else { Vec::new() };
            for j in 0..end {
                if i.max(j) < frontier {
                    continue;
                }
                derived.extend(resolvents(&set[i], &set[j]));
            }
            for r in derived {
                let r = CnfQuery::new(vec![r]);
                let [r] = r.clauses() else { continue };
                if r.len() > bound || r.is_empty() {
                    continue;
                }
                if set.iter().chain(&fresh).any(|s| subsumes(s, r)) {
                    continue;
                }
                fresh.push(r.clone());
            }
            if set.len() + fresh.len() > RESOLUTION_CLAUSE_CAP {
                break;
            }
        }
        if fresh.is_empty() {
            break;
        }
        frontier = end;
        set.extend(fresh);
        if set.len() > RESOLUTION_CLAUSE_CAP {
            break;
        }
    }
    set
}
