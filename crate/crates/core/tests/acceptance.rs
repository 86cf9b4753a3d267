//! Acceptance checks. Runs without the libtest harness so that each check
//! prints its `PASS`/`FAIL` line, with the tolerances it enforces, on every
//! `cargo test` run.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use liftr::dichotomy::{classify, Verdict};
use liftr::engine::{evaluate, evaluate_with, EngineConfig, EvalResult, EvalTrace, TraceKind};
use liftr::entail::equivalent;
use liftr::fol::{CnfQuery, Predicate};
use liftr::ground::{pr_oracle, pr_oracle_with, DEFAULT_ATOM_BUDGET};
use liftr::io::{parse_pdb, parse_query, parse_query_file};
use liftr::pdb::{random_pdb, Pdb};
use liftr::preprocess::{rank, shatter, DEFAULT_RANK_ARITY_CAP};
use liftr::reduction::{count_pp2cnf, recover_counts, Pp2Cnf};
use liftr::scalar::{ratio, Scalar};
use liftr::symmetric::{h_query, pr_h, pr_q4, SymWeights};
use liftr::{Error, Rational};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWEETS: &str = "(Tweets(x) | !Follows(x,y)) & (Follows(x,y) | !Leader(y))";
const H1: &str = "(R(x) | S(x,y)) & (S(x,y) | T(y))";
const H3: &str = "(R(x) | S1(x,y)) & (S1(x,y) | S2(x,y)) & (S2(x,y) | S3(x,y)) & (S3(x,y) | T(y))";
const QW: &str = "(R(x0) | S1(x0,y0) | S1(x1,y1) | S2(x1,y1)) \
                  & (R(x0) | S1(x0,y0) | S3(x3,y3) | T(y3)) \
                  & (S2(x2,y2) | S3(x2,y2) | S3(x3,y3) | T(y3))";
const H: &str = "!R(x) | S(x,y) | !T(y)";
const Q7: &str = "(R(x) | !S(x,y) | T(y)) & (!R(x) | S(x,y) | !T(y))";

const ADVISORS_PDB: &str = "domain = Anne, Bob, Charlie
Prof(Anne) = 0.9
Prof(Charlie) = 0.1
Student(Bob) = 0.5
Student(Charlie) = 0.8
Advises(Anne, Bob) = 0.7
Advises(Bob, Charlie) = 0.1
";

fn q(text: &str) -> CnfQuery {
    parse_query(text).unwrap()
}

fn vocab(q: &CnfQuery) -> Vec<Predicate> {
    q.relation_symbols().into_iter().collect()
}

fn report(id: u32, name: &str, ok: bool, detail: String) {
    println!("criterion {id} [{name}]: {} ({detail})", if ok { "PASS" } else { "FAIL" });
}

fn within(t: Duration, limit: Duration) -> bool {
    t <= limit
}

/// Every tuple of every relation gets a probability strictly inside (0, 1),
/// so no support conditioning applies.
fn dense_pdb(rng: &mut ChaCha8Rng, vocab: &[Predicate], n: usize) -> Pdb {
    let mut text = format!("domain size {n}\n");
    for p in vocab {
        text.push_str(&format!("default {}/{} = 1/2\n", p.name, p.arity));
    }
    let mut db = parse_pdb(&text).unwrap();
    for p in vocab {
        let mut idx = vec![0u32; p.arity];
        'tuples: loop {
            db.set_prob_idx(&p.name, idx.clone(), ratio(rng.gen_range(1..10), 10)).unwrap();
            for d in idx.iter_mut() {
                *d += 1;
                if (*d as usize) < n {
                    continue 'tuples;
                }
                *d = 0;
            }
            break;
        }
    }
    db
}

fn criterion_1_advisors_ucq() {
    let start = Instant::now();
    let qf = parse_query_file("Prof(x) & Advises(x,y) & Student(y)", true).unwrap();
    let db = parse_pdb(ADVISORS_PDB).unwrap();
    let got = evaluate(&qf.cnf, &db).unwrap().prob().map(|p| Rational::one() - p);
    let t = start.elapsed();
    let ok = got == Some(ratio(63, 200)) && within(t, Duration::from_secs(1));
    report(1, "advisors UCQ = 63/200 exactly, < 1s", ok, format!("value {}, {t:.2?}", got.map_or("FAIL".to_string(), |v| v.to_string())));
    assert!(ok);
}

fn criterion_2_soundness() {
    let start = Instant::now();
    let queries = [
        TWEETS,
        QW,
        H1,
        H3,
        H,
        Q7,
        "!Prof(x) | !Advises(x,y) | !Student(y)",
        "R(x) | S(x,x) | !S(x,y)",
        "R(x) | S(x,c1)",
        "S(x,y) | S(y,x)",
        "(R(x) | S(x,y)) & (S(x,y) | T(x))",
        "R(x) | T(y)",
        "(R(x) | S1(x,y)) & (S2(x,y) | T(y))",
        "(R(x) | S(x,y,z)) & (S(x,y,z) | T(z))",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut runs, mut successes, mut mismatches) = (0, 0, Vec::new());
    for text in queries {
        let query = q(text);
        let voc = vocab(&query);
        for n in 1..=3 {
            for _ in 0..20 {
                let db = random_pdb(&mut rng, &voc, n, 10);
                runs += 1;
                if let EvalResult::Success { prob, .. } = evaluate(&query, &db).unwrap() {
                    successes += 1;
                    let oracle = pr_oracle_with(&query, &db, DEFAULT_ATOM_BUDGET).unwrap();
                    if prob != oracle {
                        mismatches.push(format!("{text} n={n}: engine {prob} oracle {oracle}"));
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    let ok = mismatches.is_empty() && within(t, Duration::from_secs(120));
    report(
        2,
        "engine = oracle exactly whenever it succeeds, 14 queries x 20 PDBs x n=1..3, < 2min",
        ok,
        format!("{runs} runs, {successes} successes, {} mismatches, {t:.2?}", mismatches.len()),
    );
    assert!(ok, "{mismatches:?}");
}

fn criterion_3_dichotomy_examples() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut problems = Vec::new();
    for (name, text) in [("h1", H1), ("h3", H3), ("H", H), ("Q7", Q7)] {
        let query = q(text);
        let db = dense_pdb(&mut rng, &vocab(&query), 3);
        match evaluate(&query, &db).unwrap() {
            EvalResult::Fail { .. } => {}
            EvalResult::Success { .. } => problems.push(format!("{name}: evaluate succeeded")),
        }
        let v = classify(&query).unwrap().verdict;
        if v != Verdict::HardSharpP {
            problems.push(format!("{name}: {v:?}"));
        }
    }
    for (name, text) in [("Tweets", TWEETS), ("Q_W", QW)] {
        let v = classify(&q(text)).unwrap().verdict;
        if v != Verdict::SafePtime {
            problems.push(format!("{name}: {v:?}"));
        }
    }
    let t = start.elapsed();
    let ok = problems.is_empty() && within(t, Duration::from_secs(10));
    report(3, "h1/h3/H/Q7 FAIL and HardSharpP; Tweets/Q_W SafePtime, < 10s", ok, format!("{problems:?}, {t:.2?}"));
    assert!(ok);
}

fn zero_groups(t: &EvalTrace) -> Vec<String> {
    t.nodes()
        .into_iter()
        .filter_map(|n| match &n.kind {
            TraceKind::InclusionExclusion { groups } => Some(groups.iter().filter(|g| g.coefficient == 0).map(|g| g.query.clone())),
            _ => None,
        })
        .flatten()
        .collect()
}

fn criterion_4_qw_cancellation() {
    let start = Instant::now();
    let query = q(QW);
    let voc = vocab(&query);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = EngineConfig { trace: true, ..EngineConfig::default() };
    let db = random_pdb(&mut rng, &voc, 2, 10);
    let run = evaluate_with::<Rational>(&query, &db, &cfg).unwrap();
    let zeros = run.trace().map(zero_groups).unwrap_or_default();
    let h3 = q(H3);
    let has_h3 = zeros.iter().any(|g| equivalent(&q(g), &h3).unwrap());
    let mut values_ok = true;
    let mut checked = 0;
    for n in [2, 3] {
        for _ in 0..5 {
            let db = random_pdb(&mut rng, &voc, n, 10);
            let engine = evaluate(&query, &db).unwrap();
            let oracle = pr_oracle(&query, &db).unwrap();
            values_ok &= engine.prob() == Some(&oracle);
            checked += 1;
        }
    }
    let t = start.elapsed();
    let ok = has_h3 && values_ok && within(t, Duration::from_secs(30));
    report(
        4,
        "Q_W trace has a zero-coefficient h3 group; engine = oracle at n=2,3, < 30s",
        ok,
        format!("zero groups {zeros:?}, {checked} oracle comparisons ok={values_ok}, {t:.2?}"),
    );
    assert!(ok);
}

fn criterion_5_preprocessing_invariance() {
    let start = Instant::now();
    let pool = [
        "R(x) | S(x,c1)",
        "R(x) | S(x,x) | !S(x,y)",
        "S(x,y) | S(y,x)",
        "(R(c1) | S(x,y)) & (!S(c1,x) | T(x))",
        "R(x) | !S(x,y,x) | S(y,y,x)",
        "(T(x) | !S(x,c1)) & (S(c1,x) | R(x))",
        TWEETS,
        H1,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();
    for i in 0..50 {
        let text = pool[i % pool.len()];
        let query = q(text);
        let n = rng.gen_range(1..=3);
        let db = random_pdb(&mut rng, &vocab(&query), n, 10);
        let base = pr_oracle(&query, &db).unwrap();
        let (sq, sdb) = shatter(&query, &db).unwrap();
        let (rq, rdb) = rank(&query, &db, DEFAULT_RANK_ARITY_CAP).unwrap();
        let (bq, bdb) = rank(&sq, &sdb, DEFAULT_RANK_ARITY_CAP).unwrap();
        for (what, v) in [
            ("shatter", pr_oracle(&sq, &sdb).unwrap()),
            ("rank", pr_oracle(&rq, &rdb).unwrap()),
            ("shatter+rank", pr_oracle(&bq, &bdb).unwrap()),
        ] {
            if v != base {
                failures.push(format!("{what} on {text} n={n}: {v} vs {base}"));
            }
        }
    }
    let t = start.elapsed();
    let ok = failures.is_empty() && within(t, Duration::from_secs(60));
    report(5, "oracle invariant under shatter and rank on 50 pairs, < 1min", ok, format!("{failures:?}, {t:.2?}"));
    assert!(ok);
}

/// `Pr(Q4)` by enumerating every `S ⊆ [n1] × [n2]`, grouped by `|S|`.
fn q4_brute(n1: usize, n2: usize, p: &Rational) -> Rational {
    let cells = n1 * n2;
    let mut by_size = vec![0u64; cells + 1];
    for world in 0u32..(1 << cells) {
        let s = |i: usize, j: usize| world >> (i * n2 + j) & 1 == 1;
        let mut sat = true;
        'check: for x1 in 0..n1 {
            for x2 in 0..n1 {
                for y1 in 0..n2 {
                    for y2 in 0..n2 {
                        if !(s(x1, y1) || !s(x1, y2) || !s(x2, y1) || s(x2, y2)) {
                            sat = false;
                            break 'check;
                        }
                    }
                }
            }
        }
        if sat {
            by_size[world.count_ones() as usize] += 1;
        }
    }
    by_size
        .iter()
        .enumerate()
        .map(|(k, &c)| Rational::from_integer(c.into()) * p.ipow(k as u64) * p.complement().ipow((cells - k) as u64))
        .sum()
}

fn criterion_6_symmetric_closed_forms() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let grid = [Rational::zero(), ratio(1, 4), ratio(1, 3), ratio(1, 2), Rational::one()];
    let mut q4_checks = 0;
    for n1 in 0..=4 {
        for n2 in 0..=4 {
            for p in &grid {
                q4_checks += 1;
                if pr_q4(n1, n2, p) != q4_brute(n1, n2, p) {
                    failures.push(format!("Q4 n1={n1} n2={n2} p={p}"));
                }
                if pr_q4(n1, n2, p) != pr_q4(n2, n1, &p.complement()) {
                    failures.push(format!("duality n1={n1} n2={n2} p={p}"));
                }
            }
        }
    }
    let hq = h_query();
    let axis = [ratio(1, 5), ratio(1, 2), ratio(7, 9)];
    let mut h_checks = 0;
    for n in 0..=4 {
        for r in &axis {
            for s in &axis {
                for t in &axis {
                    let sw = SymWeights::new(n, [("R", r.clone()), ("S", s.clone()), ("T", t.clone())]).unwrap();
                    h_checks += 1;
                    if pr_h(n, r, s, t) != pr_oracle(&hq, &sw.pdb(&hq).unwrap()).unwrap() {
                        failures.push(format!("H n={n} r={r} s={s} t={t}"));
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    let ok = failures.is_empty() && within(t, Duration::from_secs(120));
    report(
        6,
        "pr_Q4 = brute force (n1,n2<=4, 5 p values), duality, pr_H = oracle (n<=4, 3x3x3), < 2min",
        ok,
        format!("{q4_checks} Q4 and {h_checks} H checks, failures {failures:?}, {t:.2?}"),
    );
    assert!(ok);
}

/// `N(k,l,p,q)` by enumerating assignments directly.
fn brute_table(n: usize, edges: &[(usize, usize)]) -> BTreeMap<(usize, usize, usize, usize), BigInt> {
    let mut out = BTreeMap::new();
    for xs in 0u32..(1 << n) {
        for ys in 0u32..(1 << n) {
            let x = |i: usize| xs >> (i - 1) & 1 == 1;
            let y = |j: usize| ys >> (j - 1) & 1 == 1;
            let p = edges.iter().filter(|&&(i, j)| x(i) && y(j)).count();
            let q = edges.iter().filter(|&&(i, j)| !x(i) && !y(j)).count();
            *out.entry((xs.count_ones() as usize, ys.count_ones() as usize, p, q)).or_insert_with(BigInt::zero) += 1;
        }
    }
    out
}

fn criterion_7_pp2cnf_reduction() {
    let start = Instant::now();
    let all = [(1, 1), (1, 2), (2, 1), (2, 2)];
    let mut failures = Vec::new();
    let mut instances = 0;
    for mask in 1u32..16 {
        let edges: Vec<(usize, usize)> = all.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e).collect();
        let phi = Pp2Cnf::new(2, edges.clone()).unwrap();
        instances += 1;
        let brute = brute_table(2, &edges);
        let expected: BigInt = brute.iter().filter(|((_, _, _, q), _)| *q == 0).map(|(_, v)| v).sum();
        let table = recover_counts(&phi, &|q, db| pr_oracle(q, db)).unwrap();
        let nonzero: BTreeMap<_, _> = table.nonzero().map(|(k, v)| (*k, v.clone())).collect();
        let sane = table.counts.values().all(|v| *v >= BigInt::zero()) && table.total() == BigInt::from(16);
        let count = count_pp2cnf(&phi).unwrap();
        if !sane || nonzero != brute || count != expected {
            failures.push(format!("{edges:?}: #phi {count} vs {expected}"));
        }
    }
    let t = start.elapsed();
    let ok = failures.is_empty() && instances >= 10 && within(t, Duration::from_secs(300));
    report(
        7,
        "count_pp2cnf = brute force, n=2, 1<=|E|<=4, N integral >= 0 summing to 16, < 5min",
        ok,
        format!("{instances} instances, failures {failures:?}, {t:.2?}"),
    );
    assert!(ok);
}

fn criterion_8_scaling() {
    let start = Instant::now();
    let query = q(TWEETS);
    let voc = vocab(&query);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = EngineConfig::default();
    let mut timed = |n: usize| {
        let db = dense_pdb(&mut rng, &voc, n);
        let t = Instant::now();
        let v = evaluate_with::<f64>(&query, &db, &cfg).unwrap();
        (t.elapsed(), v.is_success())
    };
    let (t100, ok100) = timed(100);
    let (t200, ok200) = timed(200);
    let ratio_200_100 = t200.as_secs_f64() / t100.as_secs_f64();
    let mut oracle_limit = None;
    for n in 1..=8 {
        let db = dense_pdb(&mut rng, &voc, n);
        match pr_oracle(&query, &db) {
            Ok(_) => {}
            Err(Error::ResourceCap(_)) => {
                oracle_limit = Some(n);
                break;
            }
            Err(e) => panic!("{e}"),
        }
    }
    let t = start.elapsed();
    let ok = ok100
        && ok200
        && ratio_200_100 <= 6.0
        && matches!(oracle_limit, Some(n) if n <= 7)
        && within(t, Duration::from_secs(60));
    report(
        8,
        "Tweets f64 time(n=200)/time(n=100) <= 6; oracle over budget by n~6; < 1min",
        ok,
        format!("{t100:.2?} vs {t200:.2?}, ratio {ratio_200_100:.2}, oracle first refuses n={oracle_limit:?}, {t:.2?}"),
    );
    assert!(ok);
}

fn main() {
    let checks: [(&str, fn()); 8] = [
        ("criterion_1_advisors_ucq", criterion_1_advisors_ucq),
        ("criterion_2_soundness", criterion_2_soundness),
        ("criterion_3_dichotomy_examples", criterion_3_dichotomy_examples),
        ("criterion_4_qw_cancellation", criterion_4_qw_cancellation),
        ("criterion_5_preprocessing_invariance", criterion_5_preprocessing_invariance),
        ("criterion_6_symmetric_closed_forms", criterion_6_symmetric_closed_forms),
        ("criterion_7_pp2cnf_reduction", criterion_7_pp2cnf_reduction),
        ("criterion_8_scaling", criterion_8_scaling),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        if std::panic::catch_unwind(check).is_err() {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed: {failed:?}");
        std::process::exit(1);
    }
}
