//! Stdout and exit-code snapshots. Set `UPDATE_GOLDEN=1` to rewrite them.

use std::path::PathBuf;
use std::process::Command;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn snapshot(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_liftr")).args(args).current_dir(root()).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let stdout: String = stdout
        .lines()
        .filter(|l| !l.starts_with("time:") && !l.contains("\"seconds\""))
        .map(|l| format!("{l}\n"))
        .collect();
    let stderr = String::from_utf8(out.stderr).unwrap();
    let mut snap = format!("exit: {}\n{stdout}", out.status.code().unwrap());
    if !stderr.is_empty() {
        snap.push_str("stderr:\n");
        snap.push_str(&stderr);
    }
    snap
}

fn check(name: &str, args: &[&str]) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"));
    let got = snapshot(args);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &got).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(got, want, "{name}");
}

#[test]
fn eval_outputs() {
    check("eval_ucq", &["eval", "-q", "data/ucq.fol", "--dnf", "-d", "data/advisors.pdb"]);
    check("eval_advisors", &["eval", "-q", "data/advisors.fol", "-d", "data/advisors.pdb", "--decimal", "2"]);
    check("eval_qw_trace", &["eval", "-q", "data/qw.fol", "-d", "data/random2.pdb", "--trace"]);
    check("eval_h1_fail", &["eval", "-q", "data/h1.fol", "-d", "data/random.pdb"]);
    check("eval_ucq_json", &["--json", "eval", "-q", "data/ucq.fol", "-d", "data/advisors.pdb"]);
}

#[test]
fn oracle_and_compare() {
    check("oracle_advisors", &["oracle", "-q", "data/advisors.fol", "-d", "data/advisors.pdb", "--dimacs"]);
    check("compare_h1", &["compare", "-q", "data/h1.fol", "-d", "data/random.pdb"]);
    check("compare_qw", &["compare", "-q", "data/qw.fol", "-d", "data/random2.pdb"]);
    check("compare_tweets_seeded", &["compare", "-q", "data/tweets.fol", "--n", "3", "--seed", "7"]);
    check("compare_json", &["compare", "-q", "data/tweets.fol", "-d", "data/tweets.pdb", "--json"]);
}

#[test]
fn classify_outputs() {
    check("classify_h1", &["classify", "-q", "data/h1.fol"]);
    check("classify_q7", &["classify", "-q", "data/q7.fol", "--json"]);
    check("classify_tweets_trace", &["classify", "-q", "data/tweets.fol", "--trace"]);
}

#[test]
fn transforms() {
    check("rank_selfjoin", &["rank", "-q", "data/selfjoin.fol", "-d", "data/selfjoin.pdb"]);
    check("shatter_constants", &["shatter", "-q", "data/constants.fol", "-d", "data/selfjoin.pdb"]);
    check("shatter_query_only", &["shatter", "-q", "data/constants.fol"]);
}

#[test]
fn symmetric_and_reduction() {
    check("sym_h", &["sym", "--query", "H", "--n", "3", "--weights", "R=1/2,S=1/3,T=0.25", "--check"]);
    check("sym_q4", &["sym", "--query", "Q4", "--n", "3", "--n2", "2", "--weights", "S=1/2"]);
    check("reduce_demo", &["reduce-demo", "--n", "2", "--edges", "1-1,2-2"]);
}

#[test]
fn input_errors_exit_2() {
    check("missing_file", &["eval", "-q", "data/missing.fol", "-d", "data/advisors.pdb"]);
    check("parse_error", &["eval", "-q", "crates/cli/tests/golden/bad_query.fol", "-d", "data/advisors.pdb"]);
    check("bad_probability", &["sym", "--query", "H", "--n", "2", "--weights", "R=3/2,S=1,T=1"]);
    check("unknown_predicate", &["eval", "-q", "data/h1.fol", "-d", "data/advisors.pdb"]);
    check("bad_edges", &["reduce-demo", "--n", "2", "--edges", "1-3"]);
}
