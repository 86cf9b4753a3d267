//! The lifted evaluator.
//!
//! [`Engine::run`] tries, in order: ground literal lookup, rewriting the query
//! as a union of CNFs (decomposable disjunction, otherwise
//! inclusion/exclusion with equivalent terms merged before recursing),
//! decomposable conjunction, and decomposable universal quantification over
//! a separator. When none applies the query is reported as stuck.
//!
//! Probabilities come from a [`Weights`] source. [`PdbWeights`] reads them
//! from a [`Pdb`] (resolving pinned and ranked views on demand);
//! [`SymbolicWeights`] answers 1/2 for everything and is used to decide
//! whether the recursion succeeds independently of the data.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::entail::{Entailer, DEFAULT_DECISION_BUDGET, DEFAULT_RESOLUTION_DEPTH};
use crate::fol::{find_separator, subsumes, Clause, CnfQuery, Domain, Literal, Predicate, UnionCnf};
use crate::pdb::Pdb;
use crate::preprocess::{expand_support, prepare, DEFAULT_RANK_ARITY_CAP};
use crate::scalar::{ratio, Scalar};
use crate::{Error, Result};

/// Upper bound on the number of disjuncts produced by distributing
/// disconnected clauses.
pub const DEFAULT_MAX_UNION_TERMS: usize = 64;
/// Inclusion/exclusion enumerates `2^m - 1` subsets; larger unions are refused.
pub const MAX_IE_DISJUNCTS: usize = 12;
pub const DEFAULT_SUPPORT_LIMIT: usize = 16;
const DEPTH_SLACK: usize = 32;

pub trait Weights<S: Scalar>: Sync {
    fn domain(&self) -> &[Arc<str>];

    /// Probability of a nullary (fully specialized) atom.
    fn prob(&self, pred: &Predicate) -> Result<S>;

    /// Truth value of a nullary atom that is certain (a guard, or a tuple
    /// with probability 0 or 1); None otherwise.
    fn fixed(&self, pred: &Predicate) -> Result<Option<bool>>;
}

pub struct PdbWeights<'a> {
    db: &'a Pdb,
}

impl<'a> PdbWeights<'a> {
    pub fn new(db: &'a Pdb) -> PdbWeights<'a> {
        PdbWeights { db }
    }
}

impl<S: Scalar> Weights<S> for PdbWeights<'_> {
    fn domain(&self) -> &[Arc<str>] {
        self.db.domain().constants()
    }

    fn prob(&self, pred: &Predicate) -> Result<S> {
        let view = self.db.resolve(&pred.name, pred.arity)?;
        Ok(S::from_rational(self.db.tuple_prob(&view.ground(&[]))))
    }

    fn fixed(&self, pred: &Predicate) -> Result<Option<bool>> {
        if pred.arity != 0 {
            return Ok(None);
        }
        let view = self.db.resolve(&pred.name, 0)?;
        let p = self.db.tuple_prob(&view.ground(&[]));
        Ok(if num_traits::One::is_one(p) {
            Some(true)
        } else if num_traits::Zero::is_zero(p) {
            Some(false)
        } else {
            None
        })
    }
}

/// Data-independent weights: every uncertain atom has probability 1/2 and the
/// domain holds the query's constants plus two fresh ones. Guards are still
/// evaluated, so the recursion takes exactly the shape it takes on a real
/// database with that domain.
pub struct SymbolicWeights {
    db: Pdb,
}

impl SymbolicWeights {
    pub fn for_query(q: &CnfQuery) -> SymbolicWeights {
        let mut constants: Vec<Arc<str>> = q.constants().into_iter().collect();
        let mut fresh = 1;
        while constants.len() < q.constants().len() + 2 {
            let name: Arc<str> = Arc::from(format!("_r{fresh}"));
            if !constants.contains(&name) {
                constants.push(name);
            }
            fresh += 1;
        }
        let domain = Domain::new(constants).expect("distinct constants");
        SymbolicWeights { db: Pdb::new(domain).expect("query constants are valid names") }
    }
}

impl<S: Scalar> Weights<S> for SymbolicWeights {
    fn domain(&self) -> &[Arc<str>] {
        self.db.domain().constants()
    }

    fn prob(&self, _pred: &Predicate) -> Result<S> {
        Ok(S::from_rational(&ratio(1, 2)))
    }

    fn fixed(&self, pred: &Predicate) -> Result<Option<bool>> {
        if !pred.is_guard() {
            return Ok(None);
        }
        PdbWeights::new(&self.db).fixed_bool(pred)
    }
}

impl PdbWeights<'_> {
    fn fixed_bool(&self, pred: &Predicate) -> Result<Option<bool>> {
        <Self as Weights<crate::Rational>>::fixed(self, pred)
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub trace: bool,
    /// Evaluate independent children on the rayon pool. Ignored while
    /// tracing, so that traces do not depend on scheduling.
    pub parallel: bool,
    pub resolution_depth: usize,
    pub decision_budget: u64,
    pub max_union_terms: usize,
    pub rank_arity_cap: usize,
    /// See [`expand_support`]; 0 disables it.
    pub support_limit: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            trace: false,
            parallel: true,
            resolution_depth: DEFAULT_RESOLUTION_DEPTH,
            decision_budget: DEFAULT_DECISION_BUDGET,
            max_union_terms: DEFAULT_MAX_UNION_TERMS,
            rank_arity_cap: DEFAULT_RANK_ARITY_CAP,
            support_limit: DEFAULT_SUPPORT_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceGroup {
    pub query: String,
    pub coefficient: i64,
    /// 1-based disjunct indices of every subset in the class.
    pub members: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum TraceKind {
    True,
    False,
    GroundLiteral,
    Cached,
    /// The union rewrite left a single disjunct different from the query.
    Rewrite,
    DecomposableDisjunction,
    InclusionExclusion { groups: Vec<TraceGroup> },
    DecomposableConjunction,
    DecomposableUniversal { separators: Vec<String>, domain_size: usize },
    Fail { reason: String },
}

impl TraceKind {
    pub fn name(&self) -> &'static str {
        match self {
            TraceKind::True => "True",
            TraceKind::False => "False",
            TraceKind::GroundLiteral => "GroundLiteral",
            TraceKind::Cached => "Cached",
            TraceKind::Rewrite => "Rewrite",
            TraceKind::DecomposableDisjunction => "DecomposableDisjunction",
            TraceKind::InclusionExclusion { .. } => "InclusionExclusion",
            TraceKind::DecomposableConjunction => "DecomposableConjunction",
            TraceKind::DecomposableUniversal { .. } => "DecomposableUniversal",
            TraceKind::Fail { .. } => "Fail",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalTrace {
    #[serde(flatten)]
    pub kind: TraceKind,
    pub query: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<EvalTrace>,
}

impl EvalTrace {
    /// Preorder traversal.
    pub fn nodes(&self) -> Vec<&EvalTrace> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.nodes());
        }
        out
    }

    /// Indented rendering, one node per line.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        self.text_into(&mut s, 0, None);
        s
    }

    fn text_into(&self, s: &mut String, indent: usize, coef: Option<i64>) {
        let pad = "  ".repeat(indent);
        let _ = write!(s, "{pad}{}", self.kind.name());
        if let Some(c) = coef {
            let _ = write!(s, " [{c:+}]");
        }
        let _ = write!(s, ": {}", self.query);
        if let Some(v) = &self.value {
            let _ = write!(s, " = {v}");
        }
        s.push('\n');
        match &self.kind {
            TraceKind::InclusionExclusion { groups } => {
                for g in groups.iter().filter(|g| g.coefficient == 0) {
                    let _ = writeln!(s, "{pad}  [0] cancelled {:?}: {}", g.members, g.query);
                }
            }
            TraceKind::DecomposableUniversal { separators, domain_size } => {
                let _ = writeln!(s, "{pad}  separators {} over {domain_size} constants", separators.join(","));
            }
            TraceKind::Fail { reason } => {
                let _ = writeln!(s, "{pad}  {reason}");
            }
            _ => {}
        }
        let coefs = self.child_coefficients();
        for (i, c) in self.children.iter().enumerate() {
            c.text_into(s, indent + 1, coefs.as_ref().map(|v| v[i]));
        }
    }

    fn child_coefficients(&self) -> Option<Vec<i64>> {
        match &self.kind {
            TraceKind::InclusionExclusion { groups } => {
                Some(groups.iter().filter(|g| g.coefficient != 0).map(|g| g.coefficient).collect())
            }
            _ => None,
        }
    }

    /// One node per line, tab separated: id, parent id (`-` for the root),
    /// kind, coefficient (`-` unless the node is an inclusion/exclusion
    /// term), value (`-` when failed), query.
    pub fn render_lines(&self) -> String {
        let mut s = String::new();
        let mut next = 0;
        self.lines_into(&mut s, None, None, &mut next);
        s
    }

    fn lines_into(&self, s: &mut String, parent: Option<usize>, coef: Option<i64>, next: &mut usize) {
        let id = *next;
        *next += 1;
        let dash = |o: Option<String>| o.unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            s,
            "{id}\t{}\t{}\t{}\t{}\t{}",
            dash(parent.map(|p| p.to_string())),
            self.kind.name(),
            dash(coef.map(|c| c.to_string())),
            dash(self.value.clone()),
            self.query
        );
        let coefs = self.child_coefficients();
        for (i, c) in self.children.iter().enumerate() {
            c.lines_into(s, Some(id), coefs.as_ref().map(|v| v[i]), next);
        }
    }
}

#[derive(Clone, Debug)]
pub enum EvalResult<S> {
    Success { prob: S, trace: Option<EvalTrace> },
    Fail { stuck: CnfQuery, reason: String, trace: Option<EvalTrace> },
}

impl<S: Scalar> EvalResult<S> {
    pub fn prob(&self) -> Option<&S> {
        match self {
            EvalResult::Success { prob, .. } => Some(prob),
            EvalResult::Fail { .. } => None,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, EvalResult::Success { .. })
    }

    pub fn trace(&self) -> Option<&EvalTrace> {
        match self {
            EvalResult::Success { trace, .. } | EvalResult::Fail { trace, .. } => trace.as_ref(),
        }
    }
}

/// One equivalence class of inclusion/exclusion terms.
#[derive(Clone, Debug, PartialEq)]
pub struct IeTermGroup {
    pub representative: CnfQuery,
    /// Subsets of `1..=m`, each sorted.
    pub members: Vec<Vec<usize>>,
    pub net_coefficient: i64,
}

#[derive(Clone, Debug)]
enum Out<S> {
    Val(S),
    Stuck { query: CnfQuery, reason: String, depth_limited: bool },
}

type Step<S> = (Out<S>, Option<EvalTrace>);

pub struct Engine<'w, S: Scalar, W: Weights<S> + ?Sized> {
    weights: &'w W,
    config: EngineConfig,
    entailer: Entailer,
    memo: Mutex<HashMap<CnfQuery, Out<S>>>,
}

impl<'w, S: Scalar, W: Weights<S> + ?Sized> Engine<'w, S, W> {
    pub fn new(weights: &'w W, config: EngineConfig) -> Self {
        let entailer = Entailer::new(config.decision_budget, config.resolution_depth);
        Engine { weights, config, entailer, memo: Mutex::new(HashMap::new()) }
    }

    /// Evaluates a ranked and shattered query.
    pub fn run(&self, q: &CnfQuery) -> Result<EvalResult<S>> {
        let q = CnfQuery::new(self.drop_fixed(q.clauses().iter().cloned())?);
        let syms = q.relation_symbols().len();
        let n = self.weights.domain().len().max(1);
        let cap = syms * q.max_arity().max(1) * n + q.len() + DEPTH_SLACK;
        let (out, trace) = self.eval(&q, 0, cap)?;
        Ok(match out {
            Out::Val(prob) => EvalResult::Success { prob, trace },
            Out::Stuck { query, reason, .. } => EvalResult::Fail { stuck: query, reason, trace },
        })
    }

    fn parallel(&self) -> bool {
        self.config.parallel && !self.config.trace
    }

    fn node(&self, kind: TraceKind, query: &dyn fmt::Display, out: &Out<S>, children: Vec<EvalTrace>) -> Option<EvalTrace> {
        if !self.config.trace {
            return None;
        }
        let value = match out {
            Out::Val(v) => Some(v.to_string()),
            Out::Stuck { .. } => None,
        };
        Some(EvalTrace { kind, query: query.to_string(), value, children })
    }

    fn eval(&self, q: &CnfQuery, depth: usize, cap: usize) -> Result<Step<S>> {
        if q.is_true() {
            let out = Out::Val(S::one());
            return Ok((out.clone(), self.node(TraceKind::True, &"TRUE", &out, vec![])));
        }
        if q.is_false() {
            let out = Out::Val(S::zero());
            return Ok((out.clone(), self.node(TraceKind::False, &"FALSE", &out, vec![])));
        }
        let hit = self.memo.lock().expect("memo lock").get(q).cloned();
        if let Some(out) = hit {
            let node = self.node(TraceKind::Cached, q, &out, vec![]);
            return Ok((out, node));
        }
        let (out, node) = self.eval_uncached(q, depth, cap)?;
        if !matches!(out, Out::Stuck { depth_limited: true, .. }) {
            self.memo.lock().expect("memo lock").insert(q.clone(), out.clone());
        }
        Ok((out, node))
    }

    fn eval_uncached(&self, q: &CnfQuery, depth: usize, cap: usize) -> Result<Step<S>> {
        if depth > cap {
            let out = Out::Stuck {
                query: q.clone(),
                reason: format!("recursion depth cap {cap} exceeded"),
                depth_limited: true,
            };
            let node = self.node(TraceKind::Fail { reason: format!("depth cap {cap}") }, q, &out, vec![]);
            return Ok((out, node));
        }

        // Step 0: ground literal.
        if let [c] = q.clauses() {
            if let [lit] = c.literals() {
                if lit.atom.is_ground() {
                    let atom = lit.atom.specialize();
                    let p: S = self.weights.prob(&atom.pred)?;
                    let v = if lit.positive { p } else { p.complement() };
                    let out = Out::Val(v);
                    let node = self.node(TraceKind::GroundLiteral, q, &out, vec![]);
                    return Ok((out, node));
                }
            }
        }

        // Steps 1-3: union of CNFs.
        if let Some(u) = union_cnf_rewrite_with(q, &self.entailer, self.config.max_union_terms)? {
            if let [single] = u.disjuncts.as_slice() {
                let (out, child) = self.eval(single, depth + 1, cap)?;
                let node = self.node(TraceKind::Rewrite, q, &out, child.into_iter().collect());
                return Ok((out, node));
            }
            if u.disjuncts.len() > MAX_IE_DISJUNCTS {
                let reason = format!(
                    "union of {} CNFs exceeds the inclusion/exclusion limit {MAX_IE_DISJUNCTS}",
                    u.disjuncts.len()
                );
                let out = Out::Stuck { query: q.clone(), reason: reason.clone(), depth_limited: false };
                let node = self.node(TraceKind::Fail { reason }, q, &out, vec![]);
                return Ok((out, node));
            }
            return self.eval_union(&u.disjuncts, q, depth + 1, cap);
        }

        // Steps 4-5: decomposable conjunction.
        let clause_syms: Vec<BTreeSet<Predicate>> =
            q.clauses().iter().map(|c| uncertain_symbols(c.literals())).collect();
        if q.len() > 1 {
            if let Some((left, right)) = split_by_symbols(&clause_syms) {
                let ql = CnfQuery::new(left.iter().map(|&i| q.clauses()[i].clone()));
                let qr = CnfQuery::new(right.iter().map(|&i| q.clauses()[i].clone()));
                let (results, children) = self.eval_all(&[ql, qr], depth + 1, cap)?;
                let out = combine(results, |vals| vals.into_iter().fold(S::one(), |a, b| a * b));
                let node = self.node(TraceKind::DecomposableConjunction, q, &out, children);
                return Ok((out, node));
            }
        }

        // Step 6: decomposable universal quantifier.
        if let Some(seps) = find_separator(q) {
            let domain = self.weights.domain();
            let subs: Vec<CnfQuery> = domain
                .iter()
                .map(|a| {
                    let cs = q.clauses().iter().zip(&seps).map(|(c, &x)| c.substitute(x, a).specialize());
                    self.drop_fixed(cs).map(CnfQuery::new)
                })
                .collect::<Result<_>>()?;
            let (results, children) = self.eval_all(&subs, depth + 1, cap)?;
            let out = combine(results, |vals| vals.into_iter().fold(S::one(), |a, b| a * b));
            let kind = TraceKind::DecomposableUniversal {
                separators: seps.iter().map(|&v| crate::fol::var_name(v)).collect(),
                domain_size: domain.len(),
            };
            let node = self.node(kind, q, &out, children);
            return Ok((out, node));
        }

        let reason = format!(
            "no rule applies (implicate search: resolution depth {}, decision budget {})",
            self.config.resolution_depth, self.config.decision_budget
        );
        let out = Out::Stuck { query: q.clone(), reason: reason.clone(), depth_limited: false };
        let node = self.node(TraceKind::Fail { reason }, q, &out, vec![]);
        Ok((out, node))
    }

    /// Steps 2 and 3 on a union of at least two CNFs.
    fn eval_union(&self, ds: &[CnfQuery], label: &dyn fmt::Display, depth: usize, cap: usize) -> Result<Step<S>> {
        if let [single] = ds {
            return self.eval(single, depth, cap);
        }
        if depth > cap {
            let q = conjoin(ds.iter());
            return self.eval_uncached(&q, depth, cap);
        }
        let syms: Vec<BTreeSet<Predicate>> = ds
            .iter()
            .map(|d| d.clauses().iter().flat_map(|c| uncertain_symbols(c.literals())).collect())
            .collect();
        if let Some((left, right)) = split_by_symbols(&syms) {
            let ul: Vec<CnfQuery> = left.iter().map(|&i| ds[i].clone()).collect();
            let ur: Vec<CnfQuery> = right.iter().map(|&i| ds[i].clone()).collect();
            let parts = [ul, ur];
            let evals: Vec<Result<Step<S>>> = if self.parallel() {
                parts.par_iter().map(|u| self.eval_union(u, &UnionCnf { disjuncts: u.clone() }, depth + 1, cap)).collect()
            } else {
                parts.iter().map(|u| self.eval_union(u, &UnionCnf { disjuncts: u.clone() }, depth + 1, cap)).collect()
            };
            let (results, children) = unzip(evals)?;
            let out = combine(results, |vals| {
                S::one() - vals.into_iter().fold(S::one(), |a, b| a * b.complement())
            });
            let node = self.node(TraceKind::DecomposableDisjunction, label, &out, children);
            return Ok((out, node));
        }

        let classes = ie_classes(&UnionCnf { disjuncts: ds.to_vec() }, &self.entailer)?;
        let live: Vec<&IeTermGroup> = classes.iter().filter(|g| g.net_coefficient != 0).collect();
        let reps: Vec<CnfQuery> = live.iter().map(|g| g.representative.clone()).collect();
        let (results, children) = self.eval_all(&reps, depth + 1, cap)?;
        let coefs: Vec<i64> = live.iter().map(|g| g.net_coefficient).collect();
        let out = combine(results, |vals| {
            vals.into_iter().zip(&coefs).fold(S::zero(), |acc, (v, &c)| acc + S::from_i64(c) * v)
        });
        let groups = classes
            .iter()
            .map(|g| TraceGroup {
                query: g.representative.to_string(),
                coefficient: g.net_coefficient,
                members: g.members.clone(),
            })
            .collect();
        let node = self.node(TraceKind::InclusionExclusion { groups }, label, &out, children);
        Ok((out, node))
    }

    fn eval_all(&self, qs: &[CnfQuery], depth: usize, cap: usize) -> Result<(Vec<Out<S>>, Vec<EvalTrace>)> {
        let evals: Vec<Result<Step<S>>> = if self.parallel() && qs.len() > 1 {
            qs.par_iter().map(|q| self.eval(q, depth, cap)).collect()
        } else {
            let mut v = Vec::with_capacity(qs.len());
            for q in qs {
                let r = self.eval(q, depth, cap);
                let stop = matches!(r, Err(_) | Ok((Out::Stuck { .. }, _)));
                v.push(r);
                if stop {
                    break;
                }
            }
            v
        };
        unzip(evals)
    }

    /// Drops nullary literals whose truth value is known and clauses they
    /// satisfy.
    fn drop_fixed(&self, clauses: impl Iterator<Item = Clause>) -> Result<Vec<Clause>> {
        let mut out = Vec::new();
        'clauses: for c in clauses {
            let mut keep: Vec<Literal> = Vec::with_capacity(c.len());
            let mut changed = false;
            for l in c.literals() {
                if l.pred().arity == 0 {
                    if let Some(t) = self.weights.fixed(l.pred())? {
                        if t == l.positive {
                            continue 'clauses;
                        }
                        changed = true;
                        continue;
                    }
                }
                keep.push(l.clone());
            }
            out.push(if changed { Clause::new(keep) } else { c });
        }
        Ok(out)
    }
}

fn unzip<S>(evals: Vec<Result<Step<S>>>) -> Result<(Vec<Out<S>>, Vec<EvalTrace>)> {
    let mut outs = Vec::with_capacity(evals.len());
    let mut traces = Vec::new();
    for e in evals {
        let (o, t) = e?;
        outs.push(o);
        traces.extend(t);
    }
    Ok((outs, traces))
}

/// Combines child values, or propagates the first stuck child.
fn combine<S>(results: Vec<Out<S>>, f: impl FnOnce(Vec<S>) -> S) -> Out<S> {
    let mut vals = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Out::Val(v) => vals.push(v),
            stuck => return stuck,
        }
    }
    Out::Val(f(vals))
}

fn conjoin<'a>(qs: impl Iterator<Item = &'a CnfQuery>) -> CnfQuery {
    CnfQuery::new(qs.flat_map(|q| q.clauses().iter().cloned()))
}

fn uncertain_symbols(lits: &[Literal]) -> BTreeSet<Predicate> {
    lits.iter().map(|l| l.pred().clone()).filter(|p| !p.is_guard()).collect()
}

/// Connected components of the symbol-sharing graph: the first component
/// versus the rest, or `None` when everything is connected.
fn split_by_symbols(sets: &[BTreeSet<Predicate>]) -> Option<(Vec<usize>, Vec<usize>)> {
    if sets.len() < 2 {
        return None;
    }
    let mut comp = vec![usize::MAX; sets.len()];
    comp[0] = 0;
    let mut syms: BTreeSet<&Predicate> = sets[0].iter().collect();
    loop {
        let mut grew = false;
        for (i, s) in sets.iter().enumerate() {
            if comp[i] == usize::MAX && s.iter().any(|p| syms.contains(p)) {
                comp[i] = 0;
                syms.extend(s.iter());
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    let (left, right): (Vec<usize>, Vec<usize>) = (0..sets.len()).partition(|&i| comp[i] == 0);
    if right.is_empty() {
        None
    } else {
        Some((left, right))
    }
}

/// Splits a list of queries into two blocks with disjoint uncertain relation
/// symbols: the first connected component of the symbol-sharing graph
/// against the rest.
pub fn independent_partition(parts: &[CnfQuery]) -> Option<(Vec<CnfQuery>, Vec<CnfQuery>)> {
    let sets: Vec<BTreeSet<Predicate>> = parts
        .iter()
        .map(|q| q.clauses().iter().flat_map(|c| uncertain_symbols(c.literals())).collect())
        .collect();
    let (l, r) = split_by_symbols(&sets)?;
    Some((l.iter().map(|&i| parts[i].clone()).collect(), r.iter().map(|&i| parts[i].clone()).collect()))
}

/// Rewrites `q` as a union of CNFs by distributing its disconnected clauses,
/// or, when it has none, the disconnected prime implicates of `q`. Disjuncts
/// implying another disjunct are dropped. Returns `None` when only the
/// trivial form `q` itself remains.
pub fn union_cnf_rewrite(q: &CnfQuery) -> Result<Option<UnionCnf>> {
    union_cnf_rewrite_with(q, &Entailer::default(), DEFAULT_MAX_UNION_TERMS)
}

pub fn union_cnf_rewrite_with(q: &CnfQuery, ent: &Entailer, max_terms: usize) -> Result<Option<UnionCnf>> {
    if q.is_true() || q.is_false() {
        return Ok(None);
    }
    let mut clauses: Vec<Clause> = q.clauses().to_vec();
    if !clauses.iter().any(|c| !c.is_connected()) {
        let implicates = ent.disconnected_prime_implicates(q)?;
        if implicates.is_empty() {
            return Ok(None);
        }
        clauses.extend(implicates.into_iter().map(|c| c.clause));
        clauses = CnfQuery::new(clauses).clauses().to_vec();
    }

    let mut fixed: Vec<Clause> = Vec::new();
    let mut choices: Vec<Vec<Clause>> = Vec::new();
    let mut combos = 1usize;
    for c in clauses {
        let comps = c.components();
        if comps.len() > 1 && combos.saturating_mul(comps.len()) <= max_terms {
            combos *= comps.len();
            choices.push(comps);
        } else {
            fixed.push(c);
        }
    }
    if choices.is_empty() {
        return Ok(None);
    }

    let mut disjuncts: Vec<CnfQuery> = Vec::new();
    let mut idx = vec![0usize; choices.len()];
    loop {
        let picked = idx.iter().zip(&choices).map(|(&i, cs)| cs[i].clone());
        let d = CnfQuery::new(fixed.iter().cloned().chain(picked));
        if !disjuncts.contains(&d) {
            disjuncts.push(d);
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return finish_union(q, disjuncts, ent);
            }
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn syntactically_implies(a: &CnfQuery, b: &CnfQuery) -> bool {
    b.clauses().iter().all(|cb| a.clauses().iter().any(|ca| subsumes(ca, cb)))
}

fn implies_with(ent: &Entailer, a: &CnfQuery, b: &CnfQuery) -> Result<bool> {
    if a.is_false() || b.is_true() || syntactically_implies(a, b) {
        return Ok(true);
    }
    ent.implies(a, b)
}

fn finish_union(q: &CnfQuery, disjuncts: Vec<CnfQuery>, ent: &Entailer) -> Result<Option<UnionCnf>> {
    let mut disjuncts: Vec<CnfQuery> = disjuncts.into_iter().filter(|d| !d.is_false()).collect();
    if disjuncts.iter().any(CnfQuery::is_true) {
        disjuncts = vec![CnfQuery::truth()];
    }
    let n = disjuncts.len();
    let mut keep = vec![true; n];
    for i in 0..n {
        for j in 0..n {
            if i == j || !keep[j] {
                continue;
            }
            if implies_with(ent, &disjuncts[i], &disjuncts[j])? {
                let mutual = implies_with(ent, &disjuncts[j], &disjuncts[i])?;
                if !mutual || j < i {
                    keep[i] = false;
                    break;
                }
            }
        }
    }
    let kept: Vec<CnfQuery> = disjuncts.into_iter().zip(keep).filter(|(_, k)| *k).map(|(d, _)| d).collect();
    match kept.as_slice() {
        [] => Ok(Some(UnionCnf { disjuncts: vec![CnfQuery::falsity()] })),
        [only] if only == q => Ok(None),
        _ => Ok(Some(UnionCnf { disjuncts: kept })),
    }
}

/// Every equivalence class of the subset conjunctions `∧_{i∈s} Q_i`,
/// including classes whose coefficients cancel to zero. Subsets are visited
/// by size, then lexicographically; classes keep the order of their first
/// member, which is also their representative.
pub fn ie_classes(u: &UnionCnf, ent: &Entailer) -> Result<Vec<IeTermGroup>> {
    let m = u.disjuncts.len();
    if m > MAX_IE_DISJUNCTS {
        return Err(Error::ResourceCap(format!(
            "inclusion/exclusion over {m} disjuncts (limit {MAX_IE_DISJUNCTS})"
        )));
    }
    let mut subsets: Vec<Vec<usize>> = (1u32..(1 << m))
        .map(|mask| (0..m).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect())
        .collect();
    subsets.sort_by(|a: &Vec<usize>, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

    let mut groups: Vec<IeTermGroup> = Vec::new();
    let mut by_key: HashMap<CnfQuery, usize> = HashMap::new();
    for s in subsets {
        let conj = conjoin(s.iter().map(|&i| &u.disjuncts[i - 1]));
        let sign = if s.len() % 2 == 1 { 1 } else { -1 };
        match by_key.get(&conj) {
            Some(&g) => {
                groups[g].members.push(s);
                groups[g].net_coefficient += sign;
            }
            None => {
                by_key.insert(conj.clone(), groups.len());
                groups.push(IeTermGroup { representative: conj, members: vec![s], net_coefficient: sign });
            }
        }
    }

    // Merge semantically equivalent classes into the earliest one.
    let mut merged: Vec<IeTermGroup> = Vec::new();
    'outer: for g in groups {
        for h in merged.iter_mut() {
            if implies_with(ent, &g.representative, &h.representative)?
                && implies_with(ent, &h.representative, &g.representative)?
            {
                h.members.extend(g.members);
                h.net_coefficient += g.net_coefficient;
                continue 'outer;
            }
        }
        merged.push(g);
    }
    Ok(merged)
}

/// Inclusion/exclusion terms with equivalent conjunctions merged and
/// cancelled classes removed.
pub fn group_ie_terms(u: &UnionCnf) -> Result<Vec<IeTermGroup>> {
    Ok(ie_classes(u, &Entailer::default())?.into_iter().filter(|g| g.net_coefficient != 0).collect())
}

/// Conditions on `db`'s certain tuples (see [`expand_support`]), shatters
/// and ranks `q`, then evaluates it exactly over `db`.
pub fn evaluate(q: &CnfQuery, db: &Pdb) -> Result<EvalResult<crate::Rational>> {
    evaluate_with(q, db, &EngineConfig::default())
}

pub fn evaluate_with<S: Scalar>(q: &CnfQuery, db: &Pdb, config: &EngineConfig) -> Result<EvalResult<S>> {
    db.check_query(q)?;
    let expanded = expand_support(q, db, config.support_limit);
    let prepared = prepare(&expanded, config.rank_arity_cap)?;
    let weights = PdbWeights::new(db);
    Engine::new(&weights, config.clone()).run(&prepared)
}

/// Runs the recursion with symbolic weights: succeeds exactly when the
/// engine succeeds on every database.
pub fn evaluate_symbolic(q: &CnfQuery, config: &EngineConfig) -> Result<EvalResult<crate::Rational>> {
    let prepared = prepare(q, config.rank_arity_cap)?;
    let weights = SymbolicWeights::for_query(&prepared);
    Engine::new(&weights, config.clone()).run(&prepared)
}
