//! Symmetric weights: one probability per predicate.
//!
//! Provides the atom-counting operator (condition a unary predicate on its
//! cardinality and sum with binomial weights), the closed form for
//! `H = !R(x) | S(x,y) | !T(y)`, and the mutual recurrence for the typed
//! query `S(x1,y1) | !S(x1,y2) | !S(x2,y1) | S(x2,y2)`.
//!
//! The closed form for `H` is the binomially weighted sum
//! `Σ_{k,l} C(n,k) C(n,l) r^k (1-r)^(n-k) t^l (1-t)^(n-l) s^(kl)`: given
//! `|R| = k` and `|T| = l`, `H` holds iff all `k·l` pairs of `R × T` are in
//! `S`. A form without the binomial factors and with `1 - s^(kl)` in place of
//! `s^(kl)` does not match brute force already at `n = 1`.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};

use crate::engine::{evaluate, EvalResult};
use crate::fol::{CnfQuery, Domain, Predicate};
use crate::io::parse_query;
use crate::pdb::Pdb;
use crate::scalar::{binomial, Scalar};
use crate::{Error, Rational, Result};

pub const H_QUERY: &str = "!R(x) | S(x,y) | !T(y)";
pub const Q4_QUERY: &str = "S(x1,y1) | !S(x1,y2) | !S(x2,y1) | S(x2,y2)";

pub fn h_query() -> CnfQuery {
    parse_query(H_QUERY).expect("H parses")
}

pub fn q4_query() -> CnfQuery {
    parse_query(Q4_QUERY).expect("Q4 parses")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymWeights {
    pub n: usize,
    pub probs: BTreeMap<String, Rational>,
}

impl SymWeights {
    pub fn new(n: usize, probs: impl IntoIterator<Item = (impl Into<String>, Rational)>) -> Result<SymWeights> {
        let probs: BTreeMap<String, Rational> = probs.into_iter().map(|(k, v)| (k.into(), v)).collect();
        for (name, p) in &probs {
            if *p < Rational::zero() || *p > Rational::one() {
                return Err(Error::ProbabilityOutOfRange { what: name.clone(), value: p.to_string() });
            }
        }
        Ok(SymWeights { n, probs })
    }

    fn prob(&self, name: &str) -> Result<&Rational> {
        self.probs.get(name).ok_or_else(|| Error::UnknownPredicate(name.to_string()))
    }

    /// A database over `c1..cn` where every relation of `q` is symmetric.
    pub fn pdb(&self, q: &CnfQuery) -> Result<Pdb> {
        let mut db = Pdb::with_size(self.n);
        for pred in q.relation_symbols() {
            db.set_symmetric(&pred.name, pred.arity, self.prob(&pred.name)?.clone())?;
        }
        Ok(db)
    }
}

/// Atom counting on `unary`: `Σ_k C(n,k) w^k (1-w)^(n-k) Pr(q | unary = first k
/// constants)`, each conditional probability computed by the lifted engine.
pub fn atom_count_eval(q: &CnfQuery, sw: &SymWeights, unary: &str) -> Result<EvalResult<Rational>> {
    let syms = q.relation_symbols();
    if !syms.contains(&Predicate::new(unary, 1)) {
        return Err(Error::Invalid(format!("`{unary}` is not a unary predicate of the query")));
    }
    let w = sw.prob(unary)?;
    let n = sw.n;
    let mut total = Rational::zero();
    for k in 0..=n {
        let mut db = Pdb::new(Domain::of_size(n))?;
        for pred in &syms {
            if &*pred.name == unary {
                db.declare(unary, 1)?;
                for i in 0..k {
                    db.set_prob_idx(unary, vec![i as u32], Rational::one())?;
                }
            } else {
                db.set_default(&pred.name, pred.arity, sw.prob(&pred.name)?.clone())?;
            }
        }
        let cond = match evaluate(q, &db)? {
            EvalResult::Success { prob, .. } => prob,
            fail => return Ok(fail),
        };
        let weight: Rational = binomial::<Rational>(n as u64, k as u64)
            * w.ipow(k as u64)
            * w.complement().ipow((n - k) as u64);
        total += weight * cond;
    }
    Ok(EvalResult::Success { prob: total, trace: None })
}

/// `Pr(H)` over a domain of size `n` with symmetric probabilities `r, s, t`.
pub fn pr_h<S: Scalar>(n: usize, r: &S, s: &S, t: &S) -> S {
    let n64 = n as u64;
    let mut total = S::zero();
    for k in 0..=n64 {
        let rk = binomial::<S>(n64, k) * r.ipow(k) * r.complement().ipow(n64 - k);
        for l in 0..=n64 {
            let tl = binomial::<S>(n64, l) * t.ipow(l) * t.complement().ipow(n64 - l);
            total = total + rk.clone() * tl * s.ipow(k * l);
        }
    }
    total
}

/// `Pr(Q4)` for `S ⊆ [n1] × [n2]` with every tuple at probability `p`, via
/// `f(n1,n2) + g(n1,n2)` where `f` peels off the `k ≥ 1` left elements
/// related to everything and `g` the `l ≥ 1` right elements related to
/// nothing. If either side is empty the query is vacuous and the result is 1.
pub fn pr_q4<S: Scalar>(n1: usize, n2: usize, p: &S) -> S {
    if n1 == 0 || n2 == 0 {
        return S::one();
    }
    let mut memo = Q4Memo { p: p.clone(), q: p.complement(), f: HashMap::new(), g: HashMap::new() };
    memo.f(n1, n2) + memo.g(n1, n2)
}

struct Q4Memo<S> {
    p: S,
    q: S,
    f: HashMap<(usize, usize), S>,
    g: HashMap<(usize, usize), S>,
}

impl<S: Scalar> Q4Memo<S> {
    fn f(&mut self, n1: usize, n2: usize) -> S {
        if n2 == 0 {
            return S::one();
        }
        if let Some(v) = self.f.get(&(n1, n2)) {
            return v.clone();
        }
        let mut v = S::zero();
        for k in 1..=n1 {
            let term = binomial::<S>(n1 as u64, k as u64) * self.p.ipow((k * n2) as u64) * self.g(n1 - k, n2);
            v = v + term;
        }
        self.f.insert((n1, n2), v.clone());
        v
    }

    fn g(&mut self, n1: usize, n2: usize) -> S {
        if n1 == 0 {
            return S::one();
        }
        if let Some(v) = self.g.get(&(n1, n2)) {
            return v.clone();
        }
        let mut v = S::zero();
        for l in 1..=n2 {
            let term = binomial::<S>(n2 as u64, l as u64) * self.q.ipow((n1 * l) as u64) * self.f(n1, n2 - l);
            v = v + term;
        }
        self.g.insert((n1, n2), v.clone());
        v
    }
}

/// The typed query as an untyped instance: domain `A1..An1, B1..Bn2`,
/// deterministic `Left`/`Right` type predicates guarding every variable, and
/// `S` at probability `p` on `A × B`. Suitable for the ground oracle.
pub fn typed_q4_instance(n1: usize, n2: usize, p: &Rational) -> Result<(CnfQuery, Pdb)> {
    let q = parse_query(
        "S(x1,y1) | !S(x1,y2) | !S(x2,y1) | S(x2,y2) | !Left(x1) | !Left(x2) | !Right(y1) | !Right(y2)",
    )?;
    let left: Vec<String> = (1..=n1).map(|i| format!("A{i}")).collect();
    let right: Vec<String> = (1..=n2).map(|j| format!("B{j}")).collect();
    let names = left.iter().chain(&right).map(|s| std::sync::Arc::from(s.as_str())).collect();
    let domain = Domain::new(names).ok_or_else(|| Error::Invalid("duplicate constants".into()))?;
    let mut db = Pdb::new(domain)?;
    db.declare("Left", 1)?;
    db.declare("Right", 1)?;
    db.declare("S", 2)?;
    for a in &left {
        db.set_prob("Left", &[a], Rational::one())?;
        for b in &right {
            db.set_prob("S", &[a, b], p.clone())?;
        }
    }
    for b in &right {
        db.set_prob("Right", &[b], Rational::one())?;
    }
    Ok((q, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::pr_oracle;
    use crate::scalar::ratio;

    #[test]
    fn h_small_cases() {
        let (r, s, t) = (ratio(1, 3), ratio(1, 2), ratio(2, 3));
        assert_eq!(pr_h(0, &r, &s, &t), Rational::one());
        assert_eq!(pr_h(1, &Rational::one(), &s, &Rational::one()), s);
        let sw = SymWeights::new(2, [("R", r.clone()), ("S", s.clone()), ("T", t.clone())]).unwrap();
        let oracle = pr_oracle(&h_query(), &sw.pdb(&h_query()).unwrap()).unwrap();
        assert_eq!(pr_h(2, &r, &s, &t), oracle);
    }

    #[test]
    fn atom_counting_matches_oracle() {
        let sw = SymWeights::new(2, [("R", ratio(1, 3)), ("S", ratio(1, 2)), ("T", ratio(2, 3))]).unwrap();
        let v = atom_count_eval(&h_query(), &sw, "R").unwrap();
        let oracle = pr_oracle(&h_query(), &sw.pdb(&h_query()).unwrap()).unwrap();
        assert_eq!(v.prob(), Some(&oracle));

        let only_r = parse_query("R(x)").unwrap();
        let sw = SymWeights::new(3, [("R", ratio(1, 2))]).unwrap();
        assert_eq!(atom_count_eval(&only_r, &sw, "R").unwrap().prob(), Some(&ratio(1, 8)));
        let sw = SymWeights::new(3, [("R", Rational::one())]).unwrap();
        assert_eq!(atom_count_eval(&only_r, &sw, "R").unwrap().prob(), Some(&Rational::one()));
    }

    #[test]
    fn q4_small_cases() {
        assert_eq!(pr_q4(1, 1, &ratio(2, 7)), Rational::one());
        assert_eq!(pr_q4(0, 5, &ratio(2, 7)), Rational::one());
        assert_eq!(pr_q4(0, 0, &ratio(2, 7)), Rational::one());
        for (n1, n2, p) in [(2, 2, ratio(1, 2)), (3, 3, ratio(1, 3)), (2, 3, ratio(3, 5))] {
            let (q, db) = typed_q4_instance(n1, n2, &p).unwrap();
            assert_eq!(pr_q4(n1, n2, &p), pr_oracle(&q, &db).unwrap(), "n1={n1} n2={n2}");
        }
    }

    #[test]
    fn q4_duality() {
        let p = ratio(2, 9);
        for n1 in 0..=3 {
            for n2 in 0..=3 {
                assert_eq!(pr_q4(n1, n2, &p), pr_q4(n2, n1, &p.complement()));
            }
        }
    }

    #[test]
    fn f64_versions_track_exact() {
        let exact = pr_q4(3, 2, &ratio(1, 3));
        let approx = pr_q4(3, 2, &(1.0f64 / 3.0));
        assert!((f64::from_rational(&exact) - approx).abs() < 1e-12);
        let h = pr_h(3, &0.25f64, &0.5, &0.75);
        assert!((h - f64::from_rational(&pr_h(3, &ratio(1, 4), &ratio(1, 2), &ratio(3, 4)))).abs() < 1e-12);
    }
}
