use liftr::engine::{evaluate, evaluate_with, EngineConfig, EvalResult};
use liftr::fol::Predicate;
use liftr::ground::pr_oracle;
use liftr::io::{format_pdb, format_query, parse_pdb, parse_query, parse_query_file};
use liftr::pdb::random_pdb;
use liftr::scalar::Scalar;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ATOMS: [&str; 8] = ["R(x)", "T(y)", "S(x,y)", "S(y,x)", "U(x,y)", "R(y)", "S(x,x)", "T(c1)"];

fn literal() -> impl Strategy<Value = String> {
    (0..ATOMS.len(), any::<bool>()).prop_map(|(i, pos)| format!("{}{}", if pos { "" } else { "!" }, ATOMS[i]))
}

fn query_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::collection::vec(literal(), 1..4), 1..4).prop_map(|cs| {
        cs.iter().map(|c| format!("({})", c.join(" | "))).collect::<Vec<_>>().join(" & ")
    })
}

fn db_for(n: usize, seed: u64) -> liftr::pdb::Pdb {
    let vocab = [Predicate::new("R", 1), Predicate::new("T", 1), Predicate::new("S", 2), Predicate::new("U", 2)];
    random_pdb(&mut ChaCha8Rng::seed_from_u64(seed), &vocab, n, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_agrees_with_oracle(text in query_text(), n in 1usize..=2, seed in any::<u64>()) {
        let q = parse_query(&text).unwrap();
        let db = db_for(n, seed);
        if let EvalResult::Success { prob, .. } = evaluate(&q, &db).unwrap() {
            prop_assert_eq!(prob, pr_oracle(&q, &db).unwrap(), "{}", text);
        }
    }

    #[test]
    fn f64_tracks_exact(text in query_text(), seed in any::<u64>()) {
        let q = parse_query(&text).unwrap();
        let db = db_for(2, seed);
        let exact = evaluate(&q, &db).unwrap();
        let approx = evaluate_with::<f64>(&q, &db, &EngineConfig::default()).unwrap();
        prop_assert_eq!(exact.is_success(), approx.is_success());
        if let (Some(e), Some(a)) = (exact.prob(), approx.prob()) {
            prop_assert!((f64::from_rational(e) - a).abs() < 1e-9);
        }
    }

    #[test]
    fn query_round_trip(text in query_text()) {
        let q = parse_query(&text).unwrap();
        prop_assert_eq!(parse_query(&format_query(&q)).unwrap(), q);
    }

    #[test]
    fn pdb_round_trip(n in 1usize..=3, seed in any::<u64>()) {
        let db = db_for(n, seed);
        prop_assert_eq!(format_pdb(&parse_pdb(&format_pdb(&db)).unwrap()), format_pdb(&db));
    }

    #[test]
    fn adding_a_clause_never_increases(text in query_text(), extra in prop::collection::vec(literal(), 1..3), seed in any::<u64>()) {
        let q = parse_query(&text).unwrap();
        let bigger = parse_query(&format!("{text} & ({})", extra.join(" | "))).unwrap();
        let db = db_for(2, seed);
        prop_assert!(pr_oracle(&bigger, &db).unwrap() <= pr_oracle(&q, &db).unwrap());
    }

    #[test]
    fn dnf_reads_as_negated_cnf(terms in prop::collection::vec(prop::collection::vec((0..ATOMS.len(), any::<bool>()), 1..4), 1..4)) {
        let lit = |&(i, pos): &(usize, bool)| format!("{}{}", if pos { "" } else { "!" }, ATOMS[i]);
        let dnf: Vec<String> = terms.iter().map(|t| t.iter().map(lit).collect::<Vec<_>>().join(" & ")).collect();
        let cnf: Vec<String> = terms
            .iter()
            .map(|t| format!("({})", t.iter().map(|&(i, pos)| lit(&(i, !pos))).collect::<Vec<_>>().join(" | ")))
            .collect();
        let qf = parse_query_file(&dnf.join(" | "), true).unwrap();
        prop_assert!(qf.dnf);
        prop_assert_eq!(qf.cnf, parse_query(&cnf.join(" & ")).unwrap());
    }
}
