use std::collections::HashMap;

use super::{CnfQuery, Predicate, Term};

/// Separator variables with no exemptions beyond the preprocessing guards.
pub fn find_separator(q: &CnfQuery) -> Option<Vec<u32>> {
    find_separator_with(q, &|p: &Predicate| p.is_guard())
}

/// One variable per clause such that (a) it occurs in every atom of its
/// clause and (b) all atoms of one relation hold it at the same argument
/// positions. Atoms of `exempt` relations are ignored by both conditions;
/// callers only exempt deterministic relations.
///
/// The first valid assignment in clause order, then variable order, wins.
pub fn find_separator_with(q: &CnfQuery, exempt: &dyn Fn(&Predicate) -> bool) -> Option<Vec<u32>> {
    if q.is_true() || q.is_false() {
        return None;
    }
    let candidates: Vec<Vec<u32>> = q
        .clauses()
        .iter()
        .map(|c| {
            c.vars()
                .into_iter()
                .filter(|v| c.literals().iter().filter(|l| !exempt(l.pred())).all(|l| l.atom.args.contains(&Term::Var(*v))))
                .collect()
        })
        .collect();
    if candidates.iter().any(Vec::is_empty) {
        return None;
    }
    let mut chosen = Vec::with_capacity(candidates.len());
    let mut positions: HashMap<Predicate, Vec<usize>> = HashMap::new();
    if assign(q, exempt, &candidates, 0, &mut chosen, &mut positions) {
        Some(chosen)
    } else {
        None
    }
}

fn assign(
    q: &CnfQuery,
    exempt: &dyn Fn(&Predicate) -> bool,
    candidates: &[Vec<u32>],
    k: usize,
    chosen: &mut Vec<u32>,
    positions: &mut HashMap<Predicate, Vec<usize>>,
) -> bool {
    if k == candidates.len() {
        return true;
    }
    let clause = &q.clauses()[k];
    for &v in &candidates[k] {
        let mut added: Vec<Predicate> = Vec::new();
        let mut ok = true;
        for l in clause.literals().iter().filter(|l| !exempt(l.pred())) {
            let pos: Vec<usize> = l.atom.args.iter().enumerate().filter(|(_, t)| **t == Term::Var(v)).map(|(i, _)| i).collect();
            match positions.get(l.pred()) {
                Some(p) if *p != pos => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    positions.insert(l.pred().clone(), pos);
                    added.push(l.pred().clone());
                }
            }
        }
        if ok {
            chosen.push(v);
            if assign(q, exempt, candidates, k + 1, chosen, positions) {
                return true;
            }
            chosen.pop();
        }
        for p in added {
            positions.remove(&p);
        }
    }
    false
}

/// Independent check of conditions (a) and (b) for a proposed assignment.
pub fn verify_separator(q: &CnfQuery, seps: &[u32], exempt: &dyn Fn(&Predicate) -> bool) -> bool {
    if seps.len() != q.len() {
        return false;
    }
    let mut seen: HashMap<&Predicate, Vec<usize>> = HashMap::new();
    for (c, &v) in q.clauses().iter().zip(seps) {
        if !c.vars().contains(&v) {
            return false;
        }
        for l in c.literals() {
            if exempt(l.pred()) {
                continue;
            }
            let pos: Vec<usize> = (0..l.atom.args.len()).filter(|&i| l.atom.args[i] == Term::Var(v)).collect();
            if pos.is_empty() {
                return false;
            }
            if let Some(prev) = seen.insert(l.pred(), pos.clone()) {
                if prev != pos {
                    return false;
                }
            }
        }
    }
    true
}
