//! Reference semantics: grounding over the database domain and exact
//! weighted model counting of the resulting propositional CNF.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::fol::{CnfQuery, Term};
use crate::pdb::{advance, Grounded, Pdb};

pub const DEFAULT_ATOM_BUDGET: usize = 40;
pub const NAIVE_ATOM_BUDGET: usize = 20;

/// A propositional CNF over uncertain ground tuples. Literals are signed
/// 1-based atom indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundCnf {
    pub atoms: Vec<(Arc<str>, Vec<u32>)>,
    pub weights: Vec<BigRational>,
    pub clauses: Vec<Vec<i32>>,
    /// Clause instantiations before simplification.
    pub instantiations: usize,
}

impl GroundCnf {
    pub fn is_unsat(&self) -> bool {
        self.clauses.iter().any(Vec::is_empty)
    }
}

/// Instantiates every clause of `q` over the domain of `db`. Atoms whose
/// probability is 0 or 1 are replaced by their value.
pub fn ground(q: &CnfQuery, db: &Pdb) -> Result<GroundCnf> {
    db.check_query(q)?;
    let n = db.domain().len() as u32;
    let mut index: HashMap<(Arc<str>, Vec<u32>), usize> = HashMap::new();
    let mut g = GroundCnf { atoms: Vec::new(), weights: Vec::new(), clauses: Vec::new(), instantiations: 0 };
    for clause in q.clauses() {
        let vars: Vec<u32> = clause.vars().into_iter().collect();
        let views = clause
            .literals()
            .iter()
            .map(|l| db.resolve(&l.pred().name, l.pred().arity))
            .collect::<Result<Vec<_>>>()?;
        if n == 0 && !vars.is_empty() {
            continue;
        }
        let mut assign = vec![0u32; vars.len()];
        loop {
            g.instantiations += 1;
            let mut lits: Vec<i32> = Vec::new();
            let mut satisfied = false;
            for (l, view) in clause.literals().iter().zip(&views) {
                let args: Vec<u32> = l
                    .atom
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => assign[vars.iter().position(|w| w == v).expect("clause variable")],
                        Term::Const(c) => db.constant_index(c).expect("checked constant"),
                    })
                    .collect();
                let grounded = view.ground(&args);
                let p = db.tuple_prob(&grounded);
                let value = if p.is_zero() {
                    Some(false)
                } else if p.is_one() {
                    Some(true)
                } else {
                    None
                };
                match value {
                    Some(v) => {
                        if v == l.positive {
                            satisfied = true;
                            break;
                        }
                    }
                    None => {
                        let Grounded::Tuple(name, targs) = grounded else { unreachable!("fixed atoms are 0 or 1") };
                        let key = (name, targs);
                        let id = match index.get(&key) {
                            Some(&i) => i,
                            None => {
                                g.atoms.push(key.clone());
                                g.weights.push(p.clone());
                                index.insert(key, g.atoms.len() - 1);
                                g.atoms.len() - 1
                            }
                        };
                        let lit = if l.positive { id as i32 + 1 } else { -(id as i32 + 1) };
                        if lits.contains(&-lit) {
                            satisfied = true;
                            break;
                        }
                        if !lits.contains(&lit) {
                            lits.push(lit);
                        }
                    }
                }
            }
            if !satisfied {
                lits.sort_unstable();
                g.clauses.push(lits);
            }
            if !advance(&mut assign, n) {
                break;
            }
        }
    }
    g.clauses.sort();
    g.clauses.dedup();
    Ok(g)
}

fn weight(g: &GroundCnf, lit: i32) -> BigRational {
    let w = &g.weights[lit.unsigned_abs() as usize - 1];
    if lit > 0 {
        w.clone()
    } else {
        BigRational::one() - w
    }
}

fn distinct_atoms(clauses: &[Vec<i32>]) -> usize {
    let mut seen: Vec<u32> = clauses.iter().flatten().map(|l| l.unsigned_abs()).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Exact weighted model count by Shannon expansion with unit propagation,
/// component decomposition and memoization. Atoms absent from every clause
/// sum out to 1.
pub fn wmc(g: &GroundCnf, atom_budget: usize) -> Result<BigRational> {
    if g.is_unsat() {
        return Ok(BigRational::zero());
    }
    let k = distinct_atoms(&g.clauses);
    if k > atom_budget {
        return Err(Error::ResourceCap(format!("grounding has {k} uncertain atoms, budget is {atom_budget}")));
    }
    let mut memo = HashMap::new();
    Ok(count(g, g.clauses.clone(), &mut memo))
}

fn assign(clauses: &[Vec<i32>], lit: i32) -> Option<Vec<Vec<i32>>> {
    let mut out = Vec::with_capacity(clauses.len());
    for c in clauses {
        if c.contains(&lit) {
            continue;
        }
        if c.contains(&-lit) {
            let r: Vec<i32> = c.iter().copied().filter(|&l| l != -lit).collect();
            if r.is_empty() {
                return None;
            }
            out.push(r);
        } else {
            out.push(c.clone());
        }
    }
    Some(out)
}

fn count(g: &GroundCnf, mut clauses: Vec<Vec<i32>>, memo: &mut HashMap<Vec<Vec<i32>>, BigRational>) -> BigRational {
    let mut factor = BigRational::one();
    while let Some(u) = clauses.iter().find(|c| c.len() == 1).map(|c| c[0]) {
        factor *= weight(g, u);
        match assign(&clauses, u) {
            Some(next) => clauses = next,
            None => return BigRational::zero(),
        }
    }
    if clauses.is_empty() {
        return factor;
    }
    clauses.sort();
    clauses.dedup();
    if let Some(v) = memo.get(&clauses) {
        return factor * v;
    }

    let comps = components(&clauses);
    let value = if comps.len() > 1 {
        let mut prod = BigRational::one();
        for comp in comps {
            let v = count(g, comp, memo);
            if v.is_zero() {
                prod = v;
                break;
            }
            prod *= v;
        }
        prod
    } else {
        let mut occ: BTreeMap<u32, usize> = BTreeMap::new();
        for l in clauses.iter().flatten() {
            *occ.entry(l.unsigned_abs()).or_default() += 1;
        }
        let (&atom, _) = occ.iter().max_by_key(|(a, c)| (**c, std::cmp::Reverse(**a))).expect("nonempty");
        let atom = atom as i32;
        let mut total = BigRational::zero();
        for lit in [atom, -atom] {
            if let Some(next) = assign(&clauses, lit) {
                total += weight(g, lit) * count(g, next, memo);
            }
        }
        total
    };
    memo.insert(clauses, value.clone());
    factor * value
}

fn components(clauses: &[Vec<i32>]) -> Vec<Vec<Vec<i32>>> {
    let mut parent: HashMap<u32, u32> = HashMap::new();
    fn find(p: &mut HashMap<u32, u32>, x: u32) -> u32 {
        let mut r = x;
        while let Some(&q) = p.get(&r) {
            if q == r {
                break;
            }
            r = q;
        }
        p.insert(x, r);
        r
    }
    for c in clauses {
        let first = c[0].unsigned_abs();
        parent.entry(first).or_insert(first);
        for l in &c[1..] {
            let a = l.unsigned_abs();
            parent.entry(a).or_insert(a);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, first));
            if ra != rb {
                parent.insert(ra, rb);
            }
        }
    }
    let mut groups: BTreeMap<u32, Vec<Vec<i32>>> = BTreeMap::new();
    for c in clauses {
        let r = find(&mut parent, c[0].unsigned_abs());
        groups.entry(r).or_default().push(c.clone());
    }
    groups.into_values().collect()
}

/// Sums over all assignments of the atoms occurring in clauses. Used only to
/// cross-check [`wmc`].
pub fn wmc_naive(g: &GroundCnf, atom_budget: usize) -> Result<BigRational> {
    if g.is_unsat() {
        return Ok(BigRational::zero());
    }
    let mut used: Vec<u32> = g.clauses.iter().flatten().map(|l| l.unsigned_abs()).collect();
    used.sort_unstable();
    used.dedup();
    if used.len() > atom_budget {
        return Err(Error::ResourceCap(format!("{} atoms exceed the enumeration budget {atom_budget}", used.len())));
    }
    let mut total = BigRational::zero();
    for mask in 0u64..(1u64 << used.len()) {
        let truth = |l: i32| {
            let i = used.binary_search(&l.unsigned_abs()).expect("used atom");
            ((mask >> i) & 1 == 1) == (l > 0)
        };
        if g.clauses.iter().all(|c| c.iter().any(|&l| truth(l))) {
            let mut w = BigRational::one();
            for (i, &a) in used.iter().enumerate() {
                let lit = if (mask >> i) & 1 == 1 { a as i32 } else { -(a as i32) };
                w *= weight(g, lit);
            }
            total += w;
        }
    }
    Ok(total)
}

pub fn pr_oracle(q: &CnfQuery, db: &Pdb) -> Result<BigRational> {
    pr_oracle_with(q, db, DEFAULT_ATOM_BUDGET)
}

pub fn pr_oracle_with(q: &CnfQuery, db: &Pdb, atom_budget: usize) -> Result<BigRational> {
    wmc(&ground(q, db)?, atom_budget)
}

/// DIMACS-style dump: atom names and weights as comment lines, then the
/// clauses.
pub fn to_dimacs(g: &GroundCnf, db: &Pdb) -> String {
    let mut out = String::new();
    for (i, (name, args)) in g.atoms.iter().enumerate() {
        let args: Vec<&str> = args.iter().map(|&a| &**db.constant(a)).collect();
        let _ = writeln!(out, "c atom {} {}({})", i + 1, name, args.join(","));
    }
    for (i, w) in g.weights.iter().enumerate() {
        let _ = writeln!(out, "c weight {} {}", i + 1, w);
    }
    let _ = writeln!(out, "p cnf {} {}", g.atoms.len(), g.clauses.len());
    for c in &g.clauses {
        for l in c {
            let _ = write!(out, "{l} ");
        }
        out.push_str("0\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fol::Predicate;
    use crate::io::{parse_pdb, parse_query};
    use crate::pdb::random_pdb;
    use crate::scalar::ratio;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn small_cases() {
        let db = parse_pdb("domain = A, B\nR(A) = 1/2\nR(B) = 1/3").unwrap();
        let q = parse_query("R(x)").unwrap();
        let g = ground(&q, &db).unwrap();
        assert_eq!(g.clauses, vec![vec![1], vec![2]]);
        assert_eq!(wmc(&g, 40).unwrap(), ratio(1, 6));
        assert_eq!(pr_oracle(&CnfQuery::truth(), &db).unwrap(), ratio(1, 1));
        assert_eq!(pr_oracle(&CnfQuery::falsity(), &db).unwrap(), ratio(0, 1));
    }

    #[test]
    fn advisors_complement() {
        let db = parse_pdb(
            "domain = Anne, Bob, Charlie\nProf(Anne) = 0.9\nProf(Charlie) = 0.1\nStudent(Bob) = 0.5\n\
             Student(Charlie) = 0.8\nAdvises(Anne, Bob) = 0.7\nAdvises(Bob, Charlie) = 0.1",
        )
        .unwrap();
        let q = parse_query("!Prof(x) | !Advises(x,y) | !Student(y)").unwrap();
        let g = ground(&q, &db).unwrap();
        assert_eq!(g.instantiations, 9);
        assert_eq!(wmc(&g, 40).unwrap(), ratio(137, 200));
    }

    #[test]
    fn h1_grounding_size() {
        let h1 = parse_query("(R(x) | S(x,y)) & (S(x,y) | T(y))").unwrap();
        let db = parse_pdb("domain size 2\ndefault R/1 = 1/2\ndefault S/2 = 1/2\ndefault T/1 = 1/2").unwrap();
        let g = ground(&h1, &db).unwrap();
        assert_eq!(g.clauses.len(), 8);
        assert_eq!(g.atoms.len(), 8);
    }

    #[test]
    fn budget_enforced() {
        let db = parse_pdb("domain size 7\ndefault S/2 = 1/2").unwrap();
        let q = parse_query("S(x,y)").unwrap();
        assert!(matches!(pr_oracle(&q, &db), Err(Error::ResourceCap(_))));
    }

    #[test]
    fn uniform_weights_count_models() {
        // (A | B) & (!A | C): 4 of 8 assignments.
        let db = parse_pdb("domain = K\ndefault A/0 = 1/2\ndefault B/0 = 1/2\ndefault C/0 = 1/2").unwrap();
        let q = parse_query("(A() | B()) & (!A() | C())").unwrap();
        assert_eq!(pr_oracle(&q, &db).unwrap(), ratio(1, 2));
    }

    fn random_query(seed: u64) -> CnfQuery {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let preds = [("R", 1), ("S", 2), ("T", 1), ("U", 2)];
        let mut text = Vec::new();
        for _ in 0..rng.gen_range(1..4) {
            let mut lits = Vec::new();
            for _ in 0..rng.gen_range(1..4) {
                let (p, k) = preds[rng.gen_range(0..preds.len())];
                let args: Vec<&str> = (0..k).map(|_| ["x", "y"][rng.gen_range(0..2)]).collect();
                let neg = if rng.gen_bool(0.5) { "!" } else { "" };
                lits.push(format!("{neg}{p}({})", args.join(",")));
            }
            text.push(format!("({})", lits.join(" | ")));
        }
        parse_query(&text.join(" & ")).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn decomposition_matches_enumeration(seed in 0u64..10_000) {
            let q = random_query(seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let vocab = [Predicate::new("R", 1), Predicate::new("S", 2), Predicate::new("T", 1), Predicate::new("U", 2)];
            let db = random_pdb(&mut rng, &vocab, 2, 6);
            let g = ground(&q, &db).unwrap();
            prop_assert_eq!(wmc(&g, 40).unwrap(), wmc_naive(&g, 20).unwrap());
        }

        #[test]
        fn adding_a_clause_never_increases(seed in 0u64..10_000) {
            let q = random_query(seed);
            let extra = random_query(seed + 1);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vocab = [Predicate::new("R", 1), Predicate::new("S", 2), Predicate::new("T", 1), Predicate::new("U", 2)];
            let db = random_pdb(&mut rng, &vocab, 2, 5);
            let both = q.and(&extra);
            prop_assert!(pr_oracle(&both, &db).unwrap() <= pr_oracle(&q, &db).unwrap());
        }
    }
}
