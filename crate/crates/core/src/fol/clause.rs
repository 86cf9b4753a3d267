use std::collections::BTreeSet;
use std::fmt;

use itertools::Itertools;

use super::{Literal, Term};

/// Clauses with at most this many variables are canonicalized exactly (by
/// trying every variable numbering); larger ones fall back to numbering by
/// first appearance.
const EXACT_CANON_VARS: usize = 6;

/// A universally quantified disjunction of literals in canonical form:
/// literals sorted and distinct, variables numbered `0..k`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clause {
    lits: Vec<Literal>,
}

impl Clause {
    pub fn new(lits: impl IntoIterator<Item = Literal>) -> Clause {
        Clause { lits: canonicalize(lits.into_iter().collect()) }
    }

    pub fn empty() -> Clause {
        Clause { lits: Vec::new() }
    }

    pub fn literals(&self) -> &[Literal] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn vars(&self) -> BTreeSet<u32> {
        self.lits.iter().flat_map(|l| l.atom.vars()).collect()
    }

    pub fn num_vars(&self) -> usize {
        self.vars().len()
    }

    pub fn is_ground(&self) -> bool {
        self.lits.iter().all(|l| l.atom.is_ground())
    }

    pub fn is_tautology(&self) -> bool {
        self.lits.iter().any(|l| self.lits.iter().any(|m| m.atom == l.atom && m.positive != l.positive))
    }

    /// `C[c/x]`: every occurrence of `var` replaced by the constant.
    pub fn substitute(&self, var: u32, c: &str) -> Clause {
        let k = Term::constant(c);
        Clause::new(self.lits.iter().map(|l| {
            let mut l = l.clone();
            for t in &mut l.atom.args {
                if *t == Term::Var(var) {
                    *t = k.clone();
                }
            }
            l
        }))
    }

    /// Rewrites constant arguments into predicate slices (see
    /// [`super::Atom::specialize`]).
    pub fn specialize(&self) -> Clause {
        Clause::new(self.lits.iter().map(|l| Literal { atom: l.atom.specialize(), positive: l.positive }))
    }

    /// Literals with variables shifted by `offset`, not re-canonicalized.
    pub(crate) fn shifted_literals(&self, offset: u32) -> Vec<Literal> {
        self.lits
            .iter()
            .map(|l| {
                let mut l = l.clone();
                for t in &mut l.atom.args {
                    if let Term::Var(v) = t {
                        *v += offset;
                    }
                }
                l
            })
            .collect()
    }

    /// Variable-connected groups of literals. Ground literals form singleton
    /// components. Returned in order of each group's first literal.
    pub fn components(&self) -> Vec<Clause> {
        let n = self.lits.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            let mut j = i;
            while p[j] != r {
                let nx = p[j];
                p[j] = r;
                j = nx;
            }
            r
        }
        let mut owner: std::collections::HashMap<u32, usize> = Default::default();
        for (i, l) in self.lits.iter().enumerate() {
            for v in l.atom.vars() {
                match owner.get(&v) {
                    Some(&j) => {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                    None => {
                        owner.insert(v, i);
                    }
                }
            }
        }
        let mut groups: Vec<(usize, Vec<Literal>)> = Vec::new();
        for (i, l) in self.lits.iter().enumerate() {
            let r = find(&mut parent, i);
            match groups.iter_mut().find(|(root, _)| *root == r) {
                Some((_, g)) => g.push(l.clone()),
                None => groups.push((r, vec![l.clone()])),
            }
        }
        groups.into_iter().map(|(_, g)| Clause::new(g)).collect()
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }
}

pub fn connected_components(c: &Clause) -> Vec<Clause> {
    c.components()
}

fn rename(lits: &[Literal], map: &dyn Fn(u32) -> u32) -> Vec<Literal> {
    let mut out: Vec<Literal> = lits
        .iter()
        .map(|l| {
            let mut l = l.clone();
            for t in &mut l.atom.args {
                if let Term::Var(v) = t {
                    *v = map(*v);
                }
            }
            l
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

fn canonicalize(mut lits: Vec<Literal>) -> Vec<Literal> {
    lits.sort();
    lits.dedup();
    let vars: Vec<u32> = lits.iter().flat_map(|l| l.atom.vars()).collect::<BTreeSet<_>>().into_iter().collect();
    if vars.is_empty() {
        return lits;
    }
    let max = *vars.iter().max().unwrap() as usize;
    if vars.len() <= EXACT_CANON_VARS {
        let mut best: Option<Vec<Literal>> = None;
        for perm in (0..vars.len() as u32).permutations(vars.len()) {
            let mut table = vec![0u32; max + 1];
            for (i, v) in vars.iter().enumerate() {
                table[*v as usize] = perm[i];
            }
            let cand = rename(&lits, &|v| table[v as usize]);
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        }
        best.unwrap()
    } else {
        // Two passes of first-appearance numbering settle most orderings.
        let mut cur = lits;
        for _ in 0..2 {
            let mut order: Vec<u32> = Vec::new();
            for l in &cur {
                for v in l.atom.vars() {
                    if !order.contains(&v) {
                        order.push(v);
                    }
                }
            }
            let m = *order.iter().max().unwrap() as usize;
            let mut table = vec![0u32; m + 1];
            for (i, v) in order.iter().enumerate() {
                table[*v as usize] = i as u32;
            }
            cur = rename(&cur, &|v| table[v as usize]);
        }
        cur
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, l) in self.lits.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
