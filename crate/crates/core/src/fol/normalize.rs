use super::{Clause, Literal, Term};

/// θ-subsumption: true if some substitution for the variables of `d` maps
/// every literal of `d` into `c`. Variables of `c` are treated as rigid.
pub fn subsumes(d: &Clause, c: &Clause) -> bool {
    let dl = d.literals();
    let cl = c.literals();
    let nvars = dl.iter().flat_map(|l| l.atom.vars()).max().map_or(0, |m| m as usize + 1);
    // Most constrained literals first.
    let mut order: Vec<(usize, Vec<usize>)> = dl
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let cands = cl
                .iter()
                .enumerate()
                .filter(|(_, m)| m.positive == l.positive && m.atom.pred == l.atom.pred)
                .map(|(j, _)| j)
                .collect();
            (i, cands)
        })
        .collect();
    if order.iter().any(|(_, c)| c.is_empty()) {
        return false;
    }
    order.sort_by_key(|(_, c)| c.len());
    let mut binding: Vec<Option<Term>> = vec![None; nvars];
    search(&order, 0, dl, cl, &mut binding)
}

fn search(order: &[(usize, Vec<usize>)], k: usize, dl: &[Literal], cl: &[Literal], binding: &mut Vec<Option<Term>>) -> bool {
    let Some((i, cands)) = order.get(k) else {
        return true;
    };
    let src = &dl[*i];
    for &j in cands {
        let dst = &cl[j];
        let mut newly: Vec<usize> = Vec::new();
        let mut ok = true;
        for (s, t) in src.atom.args.iter().zip(dst.atom.args.iter()) {
            match s {
                Term::Const(_) => {
                    if s != t {
                        ok = false;
                        break;
                    }
                }
                Term::Var(v) => {
                    let v = *v as usize;
                    match &binding[v] {
                        Some(b) => {
                            if b != t {
                                ok = false;
                                break;
                            }
                        }
                        None => {
                            binding[v] = Some(t.clone());
                            newly.push(v);
                        }
                    }
                }
            }
        }
        if ok && search(order, k + 1, dl, cl, binding) {
            return true;
        }
        for v in newly {
            binding[v] = None;
        }
    }
    false
}

/// Drops literals a clause can fold onto itself: `C` is equivalent to `C - {l}`
/// when `C` subsumes `C - {l}`.
pub(crate) fn condense(c: Clause) -> Clause {
    let mut cur = c;
    'outer: loop {
        if cur.len() <= 1 || cur.num_vars() == 0 {
            return cur;
        }
        for i in 0..cur.len() {
            let smaller = Clause::new(cur.literals().iter().enumerate().filter(|(j, _)| *j != i).map(|(_, l)| l.clone()));
            if subsumes(&cur, &smaller) {
                cur = smaller;
                continue 'outer;
            }
        }
        return cur;
    }
}

pub(crate) fn normalize(clauses: Vec<Clause>) -> Vec<Clause> {
    let mut cs: Vec<Clause> = clauses.into_iter().filter(|c| !c.is_tautology()).map(condense).collect();
    if cs.iter().any(Clause::is_empty) {
        return vec![Clause::empty()];
    }

    // Ground unit propagation.
    let mut done: Vec<Literal> = Vec::new();
    loop {
        let unit = cs
            .iter()
            .find(|c| c.len() == 1 && c.is_ground() && !done.contains(&c.literals()[0]))
            .map(|c| c.literals()[0].clone());
        let Some(u) = unit else { break };
        let neg = u.negated();
        let mut next = Vec::with_capacity(cs.len());
        for c in cs {
            if c.len() == 1 && c.literals()[0] == u {
                next.push(c);
            } else if c.literals().contains(&u) {
                continue;
            } else if c.literals().contains(&neg) {
                let reduced = Clause::new(c.literals().iter().filter(|l| **l != neg).cloned());
                if reduced.is_empty() {
                    return vec![Clause::empty()];
                }
                next.push(reduced);
            } else {
                next.push(c);
            }
        }
        cs = next;
        done.push(u);
    }

    cs.sort();
    cs.dedup();
    // Subsumption; condensed clauses that subsume each other are variants,
    // and variants were merged by the dedup above.
    let keep: Vec<bool> = (0..cs.len())
        .map(|i| !(0..cs.len()).any(|j| j != i && subsumes(&cs[j], &cs[i]) && !(subsumes(&cs[i], &cs[j]) && i < j)))
        .collect();
    cs.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect()
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::CnfQuery;
    use super::*;

    #[test]
    fn subsumption_with_renaming() {
        let d = clause(vec![p("Tweets", &["x"])]);
        let c = clause(vec![p("Tweets", &["x"]), n("Follows", &["x", "y"])]);
        assert!(subsumes(&d, &c));
        assert!(!subsumes(&c, &d));
        let d2 = clause(vec![p("S", &["x", "x"])]);
        let c2 = clause(vec![p("S", &["x", "y"])]);
        assert!(!subsumes(&d2, &c2));
        assert!(subsumes(&c2, &d2));
    }

    #[test]
    fn condensation_folds_redundant_literals() {
        let c = clause(vec![p("R", &["x", "y"]), p("R", &["x", "z"])]);
        assert_eq!(condense(c).len(), 1);
        let c = clause(vec![p("R", &["x", "y"]), p("R", &["y", "x"])]);
        assert_eq!(condense(c).len(), 2);
    }

    #[test]
    fn duplicate_and_subsumed_clauses_removed() {
        let q = CnfQuery::new(vec![clause(vec![p("R", &["x"])]), clause(vec![p("R", &["y"])])]);
        assert_eq!(q.len(), 1);
        let q = CnfQuery::new(vec![clause(vec![p("R", &["x"])]), clause(vec![p("R", &["x"]), p("S", &["x", "y"])])]);
        assert_eq!(q.to_string(), "(R(x))");
    }

    #[test]
    fn ground_units_propagate() {
        let q = CnfQuery::new(vec![clause(vec![p("A", &[])]), clause(vec![n("A", &[])])]);
        assert!(q.is_false());
        let q = CnfQuery::new(vec![clause(vec![p("A", &[])]), clause(vec![n("A", &[]), p("S", &["x"])])]);
        assert_eq!(q.to_string(), "(A()) & (S(x))");
    }

    #[test]
    fn normalization_is_idempotent_on_examples() {
        let q = CnfQuery::new(vec![
            clause(vec![p("R", &["x"]), n("S", &["x", "y"]), p("T", &["y"])]),
            clause(vec![n("R", &["x"]), p("S", &["x", "y"]), n("T", &["y"])]),
        ]);
        assert_eq!(CnfQuery::new(q.clauses().to_vec()), q);
    }
}
