use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use liftr::dichotomy::{classify_with, Verdict};
use liftr::engine::{evaluate_with, EngineConfig, EvalResult, EvalTrace};
use liftr::entail::{DEFAULT_DECISION_BUDGET, DEFAULT_RESOLUTION_DEPTH};
use liftr::fol::CnfQuery;
use liftr::ground::{ground, pr_oracle_with, to_dimacs, DEFAULT_ATOM_BUDGET};
use liftr::io::{format_pdb, format_query, parse_pdb, parse_query_file, QueryFile};
use liftr::pdb::{random_pdb, Pdb};
use liftr::preprocess::{rank, rank_query, shatter, shatter_query, DEFAULT_RANK_ARITY_CAP};
use liftr::reduction::{recover_counts, Pp2Cnf};
use liftr::scalar::to_decimal;
use liftr::symmetric::{atom_count_eval, h_query, pr_h, pr_q4, SymWeights};
use liftr::{Error, Rational};
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "liftr", version, about = "Exact lifted inference for probabilistic databases")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Print the evaluation trace.
    #[arg(long, global = true)]
    trace: bool,
    /// Fractional digits of the decimal rendering.
    #[arg(long, global = true, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..))]
    decimal: u32,
    /// Read the query as a DNF (a union of conjunctions).
    #[arg(long, global = true)]
    dnf: bool,
    /// Seed for generated databases.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Resolution depth bound for prime implicates and implication checks.
    #[arg(long, global = true, default_value_t = DEFAULT_RESOLUTION_DEPTH, value_parser = positive)]
    resolution_depth: usize,
    /// Atom limit of the ground oracle.
    #[arg(long, global = true, default_value_t = DEFAULT_ATOM_BUDGET, value_parser = positive)]
    atom_budget: usize,
    /// Emit a JSON object instead of text.
    #[arg(long, global = true)]
    json: bool,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be positive".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args, Debug)]
struct Inputs {
    /// Query file.
    #[arg(short, long)]
    query: PathBuf,
    /// Database file.
    #[arg(short = 'd', long)]
    pdb: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a query with the lifted engine.
    Eval(Inputs),
    /// Evaluate a query by grounding and exact model counting.
    Oracle {
        #[command(flatten)]
        inputs: Inputs,
        /// Also print the grounding in DIMACS form.
        #[arg(long)]
        dimacs: bool,
    },
    /// Compare the engine with the oracle.
    Compare {
        #[arg(short, long)]
        query: PathBuf,
        /// Database file; a random one over `--n` constants when absent.
        #[arg(short = 'd', long)]
        pdb: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
    /// Classify a query as PTIME or #P-hard.
    Classify {
        #[arg(short, long)]
        query: PathBuf,
    },
    /// Rank the query (and database).
    Rank {
        #[arg(short, long)]
        query: PathBuf,
        #[arg(short = 'd', long)]
        pdb: Option<PathBuf>,
    },
    /// Shatter the query (and database) on its constants.
    Shatter {
        #[arg(short, long)]
        query: PathBuf,
        #[arg(short = 'd', long)]
        pdb: Option<PathBuf>,
    },
    /// Closed forms over symmetric databases.
    Sym {
        #[arg(long, value_enum)]
        query: SymQuery,
        #[arg(long)]
        n: usize,
        /// Right domain size for Q4; defaults to `--n`.
        #[arg(long)]
        n2: Option<usize>,
        /// Comma separated `Name=p` pairs.
        #[arg(long)]
        weights: String,
        /// For H: also evaluate through atom counting and the engine.
        #[arg(long)]
        check: bool,
    },
    /// Count a bipartite positive 2-CNF through the probability oracle.
    ReduceDemo {
        #[arg(long)]
        n: usize,
        /// Edges as `i-j` pairs, comma separated.
        #[arg(long)]
        edges: String,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SymQuery {
    #[value(name = "H")]
    H,
    #[value(name = "Q4")]
    Q4,
}

struct Outcome {
    code: u8,
    text: String,
    json: Value,
}

impl Outcome {
    fn ok(text: String, json: Value) -> Outcome {
        Outcome { code: 0, text, json }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("json"));
            } else {
                print!("{}", out.text);
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            if cli.json {
                println!("{}", json!({ "status": "error", "error": e.to_string() }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn load_query(cli: &Cli, path: &Path) -> Result<QueryFile, Error> {
    parse_query_file(&read(path)?, cli.dnf)
}

fn load_pdb(path: &Path) -> Result<Pdb, Error> {
    parse_pdb(&read(path)?)
}

fn engine_config(cli: &Cli) -> EngineConfig {
    EngineConfig { trace: cli.trace, resolution_depth: cli.resolution_depth, ..EngineConfig::default() }
}

fn rational_json(r: &Rational) -> Value {
    json!({ "num": r.numer().to_string(), "den": r.denom().to_string() })
}

fn value_line(cli: &Cli, r: &Rational) -> String {
    format!("{r} ({})", to_decimal(r, cli.decimal as usize))
}

/// `1 - v` in DNF mode, where the engine ran on the negation.
fn query_value(qf: &QueryFile, v: &Rational) -> Rational {
    if qf.dnf {
        Rational::one() - v
    } else {
        v.clone()
    }
}

fn bounds_line(cli: &Cli) -> String {
    format!(
        "bounds: resolution-depth={} decision-budget={} rank-arity-cap={}",
        cli.resolution_depth, DEFAULT_DECISION_BUDGET, DEFAULT_RANK_ARITY_CAP
    )
}

fn push_trace(text: &mut String, trace: Option<&EvalTrace>) {
    if let Some(t) = trace {
        text.push_str("trace:\n");
        text.push_str(&t.render_text());
    }
}

fn trace_json(cli: &Cli, trace: Option<&EvalTrace>) -> Value {
    match trace {
        Some(t) if cli.trace => serde_json::to_value(t).expect("trace serializes"),
        _ => Value::Null,
    }
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    match &cli.command {
        Command::Eval(inputs) => eval(cli, inputs),
        Command::Oracle { inputs, dimacs } => oracle(cli, inputs, *dimacs),
        Command::Compare { query, pdb, n } => compare(cli, query, pdb.as_deref(), *n),
        Command::Classify { query } => classify(cli, query),
        Command::Rank { query, pdb } => transform(cli, query, pdb.as_deref(), true),
        Command::Shatter { query, pdb } => transform(cli, query, pdb.as_deref(), false),
        Command::Sym { query, n, n2, weights, check } => sym(cli, *query, *n, *n2, weights, *check),
        Command::ReduceDemo { n, edges } => reduce_demo(*n, edges),
    }
}

fn eval(cli: &Cli, inputs: &Inputs) -> Result<Outcome, Error> {
    let qf = load_query(cli, &inputs.query)?;
    let db = load_pdb(&inputs.pdb)?;
    let mut text = String::new();
    match evaluate_with::<Rational>(&qf.cnf, &db, &engine_config(cli))? {
        EvalResult::Success { prob, trace } => {
            let v = query_value(&qf, &prob);
            let _ = writeln!(text, "{}", value_line(cli, &v));
            if qf.dnf {
                let _ = writeln!(text, "negated query: {}", qf.cnf);
            }
            push_trace(&mut text, trace.as_ref());
            let json = json!({
                "status": "success",
                "value": rational_json(&v),
                "decimal": to_decimal(&v, cli.decimal as usize),
                "dnf": qf.dnf,
                "trace": trace_json(cli, trace.as_ref()),
            });
            Ok(Outcome::ok(text, json))
        }
        EvalResult::Fail { stuck, reason, trace } => {
            let _ = writeln!(text, "FAIL (stuck: {stuck})");
            let _ = writeln!(text, "reason: {reason}");
            let _ = writeln!(text, "{}", bounds_line(cli));
            push_trace(&mut text, trace.as_ref());
            let json = json!({
                "status": "fail",
                "stuck": stuck.to_string(),
                "reason": reason,
                "resolution_depth": cli.resolution_depth,
                "trace": trace_json(cli, trace.as_ref()),
            });
            Ok(Outcome { code: 1, text, json })
        }
    }
}

fn oracle(cli: &Cli, inputs: &Inputs, dimacs: bool) -> Result<Outcome, Error> {
    let qf = load_query(cli, &inputs.query)?;
    let db = load_pdb(&inputs.pdb)?;
    db.check_query(&qf.cnf)?;
    let v = query_value(&qf, &pr_oracle_with(&qf.cnf, &db, cli.atom_budget)?);
    let mut text = format!("{}\n", value_line(cli, &v));
    let mut json = json!({ "status": "success", "value": rational_json(&v), "decimal": to_decimal(&v, cli.decimal as usize) });
    if dimacs {
        let dump = to_dimacs(&ground(&qf.cnf, &db)?, &db);
        text.push_str(&dump);
        json["dimacs"] = Value::String(dump);
    }
    Ok(Outcome::ok(text, json))
}

fn compare(cli: &Cli, query: &Path, pdb: Option<&Path>, n: usize) -> Result<Outcome, Error> {
    let qf = load_query(cli, query)?;
    let db = match pdb {
        Some(p) => load_pdb(p)?,
        None => {
            let vocab: Vec<_> = qf.cnf.relation_symbols().into_iter().collect();
            random_pdb(&mut ChaCha8Rng::seed_from_u64(cli.seed), &vocab, n, 10)
        }
    };
    db.check_query(&qf.cnf)?;
    let oracle = query_value(&qf, &pr_oracle_with(&qf.cnf, &db, cli.atom_budget)?);
    let run = evaluate_with::<Rational>(&qf.cnf, &db, &engine_config(cli))?;
    let mut text = String::new();
    let (code, json) = match &run {
        EvalResult::Success { prob, .. } => {
            let engine = query_value(&qf, prob);
            let verdict = if engine == oracle { "EQUAL" } else { "DIFFER" };
            if engine == oracle {
                let _ = writeln!(text, "EQUAL {}", value_line(cli, &engine));
            } else {
                let _ = writeln!(text, "DIFFER engine={engine} oracle={oracle}");
            }
            let json = json!({
                "verdict": verdict,
                "engine": rational_json(&engine),
                "oracle": rational_json(&oracle),
            });
            (u8::from(engine != oracle), json)
        }
        EvalResult::Fail { stuck, reason, .. } => {
            let _ = writeln!(text, "ENGINE_FAIL (stuck: {stuck})");
            let _ = writeln!(text, "oracle: {}", value_line(cli, &oracle));
            let _ = writeln!(text, "{}", bounds_line(cli));
            let json = json!({
                "verdict": "ENGINE_FAIL",
                "stuck": stuck.to_string(),
                "reason": reason,
                "oracle": rational_json(&oracle),
            });
            (1, json)
        }
    };
    push_trace(&mut text, run.trace());
    Ok(Outcome { code, text, json })
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::SafePtime => "SafePtime",
        Verdict::HardSharpP => "HardSharpP",
        Verdict::OutOfFragment => "OutOfFragment",
    }
}

fn classify(cli: &Cli, query: &Path) -> Result<Outcome, Error> {
    let qf = load_query(cli, query)?;
    let cfg = EngineConfig { trace: true, ..engine_config(cli) };
    let c = classify_with(&qf.cnf, &cfg)?;
    let mut text = format!("verdict: {}\n", verdict_name(c.verdict));
    if let EvalResult::Fail { stuck, .. } = &c.run {
        let _ = writeln!(text, "stuck: {stuck}");
        let _ = writeln!(text, "{}", bounds_line(cli));
    }
    if let Some(d) = &c.diagnostics {
        let _ = writeln!(text, "diagnostics for: {}", d.query);
        let _ = writeln!(text, "  left unary: {}", d.left_unary);
        let _ = writeln!(text, "  right unary: {}", d.right_unary);
        let _ = writeln!(text, "  splittable: {}", d.splittable);
        let _ = writeln!(text, "  decomposable: {}", d.decomposable);
        let _ = writeln!(text, "  immediately unsafe: {}", d.immediately_unsafe);
        match &d.unsafe_rewrite {
            Some(path) if path.is_empty() => text.push_str("  unsafe rewrite: none needed\n"),
            Some(path) => {
                let steps: Vec<String> = path.iter().map(|(s, v)| format!("{s}={}", u8::from(*v))).collect();
                let _ = writeln!(text, "  unsafe rewrite: {}", steps.join(", "));
            }
            None => text.push_str("  unsafe rewrite: not found\n"),
        }
    }
    if cli.trace {
        push_trace(&mut text, c.run.trace());
    }
    let json = json!({
        "verdict": verdict_name(c.verdict),
        "stuck": match &c.run { EvalResult::Fail { stuck, .. } => Value::String(stuck.to_string()), _ => Value::Null },
        "diagnostics": c.diagnostics,
        "trace": trace_json(cli, c.run.trace()),
    });
    Ok(Outcome::ok(text, json))
}

fn transform(cli: &Cli, query: &Path, pdb: Option<&Path>, ranking: bool) -> Result<Outcome, Error> {
    let qf = load_query(cli, query)?;
    let (q, db): (CnfQuery, Option<Pdb>) = match pdb {
        Some(p) => {
            let db = load_pdb(p)?;
            db.check_query(&qf.cnf)?;
            let (q, db) = if ranking { rank(&qf.cnf, &db, DEFAULT_RANK_ARITY_CAP)? } else { shatter(&qf.cnf, &db)? };
            (q, Some(db))
        }
        None if ranking => (rank_query(&qf.cnf, DEFAULT_RANK_ARITY_CAP)?, None),
        None => (shatter_query(&qf.cnf), None),
    };
    let mut text = format_query(&q);
    let db_text = db.as_ref().map(format_pdb);
    if let Some(d) = &db_text {
        text.push_str("--\n");
        text.push_str(d);
    }
    let json = json!({ "query": format_query(&q), "pdb": db_text });
    Ok(Outcome::ok(text, json))
}

fn parse_weights(s: &str) -> Result<Vec<(String, Rational)>, Error> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (name, value) =
                pair.split_once('=').ok_or_else(|| Error::Invalid(format!("weight `{pair}` is not Name=p")))?;
            let value = value.trim();
            let p = liftr::io::parse_decimal(value)
                .or_else(|| value.parse::<Rational>().ok())
                .ok_or_else(|| Error::Invalid(format!("bad probability `{value}`")))?;
            Ok((name.trim().to_string(), p))
        })
        .collect()
}

fn sym(cli: &Cli, which: SymQuery, n: usize, n2: Option<usize>, weights: &str, check: bool) -> Result<Outcome, Error> {
    let weights = parse_weights(weights)?;
    let sw = SymWeights::new(n, weights)?;
    let get = |name: &str| sw.probs.get(name).cloned().ok_or_else(|| Error::UnknownPredicate(name.to_string()));
    let mut text = String::new();
    let mut json = json!({});
    match which {
        SymQuery::H => {
            if n2.is_some() {
                return Err(Error::Invalid("--n2 applies to Q4 only".into()));
            }
            let v = pr_h(n, &get("R")?, &get("S")?, &get("T")?);
            let _ = writeln!(text, "{}", value_line(cli, &v));
            json["value"] = rational_json(&v);
            json["decimal"] = Value::String(to_decimal(&v, cli.decimal as usize));
            if check {
                let lifted = atom_count_eval(&h_query(), &sw, "R")?;
                match lifted.prob() {
                    Some(l) => {
                        let _ = writeln!(text, "atom counting: {}", value_line(cli, l));
                        json["atom_counting"] = rational_json(l);
                    }
                    None => text.push_str("atom counting: FAIL\n"),
                }
            }
        }
        SymQuery::Q4 => {
            let v = pr_q4(n, n2.unwrap_or(n), &get("S")?);
            let _ = writeln!(text, "{}", value_line(cli, &v));
            json["value"] = rational_json(&v);
            json["decimal"] = Value::String(to_decimal(&v, cli.decimal as usize));
        }
    }
    Ok(Outcome::ok(text, json))
}

fn parse_edges(s: &str) -> Result<Vec<(usize, usize)>, Error> {
    s.split(',')
        .filter(|e| !e.trim().is_empty())
        .map(|e| {
            let (i, j) = e.trim().split_once('-').ok_or_else(|| Error::Invalid(format!("edge `{e}` is not i-j")))?;
            let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| Error::Invalid(format!("bad edge endpoint `{v}`")));
            Ok((parse(i)?, parse(j)?))
        })
        .collect()
}

fn reduce_demo(n: usize, edges: &str) -> Result<Outcome, Error> {
    let phi = Pp2Cnf::new(n, parse_edges(edges)?)?;
    let start = Instant::now();
    let table = recover_counts(&phi, &|q, db| pr_oracle_with(q, db, DEFAULT_ATOM_BUDGET))?;
    let elapsed = start.elapsed();
    let brute = phi.brute_force_count();
    let count = table.sharp_phi();
    let matches = count == brute.into();
    let mut text = format!("n={} m={} grid attempt {}\n", phi.n(), phi.m(), table.attempt);
    text.push_str("k\tl\tp\tq\tN\n");
    let mut rows = Vec::new();
    for ((k, l, p, q), v) in table.nonzero() {
        let _ = writeln!(text, "{k}\t{l}\t{p}\t{q}\t{v}");
        rows.push(json!({ "k": k, "l": l, "p": p, "q": q, "n": v.to_string() }));
    }
    let _ = writeln!(text, "sum N = {}", table.total());
    let _ = writeln!(text, "#phi = {count}");
    let _ = writeln!(text, "brute force = {brute} ({})", if matches { "match" } else { "MISMATCH" });
    let _ = writeln!(text, "time: {:.3}s", elapsed.as_secs_f64());
    let json = json!({
        "n": phi.n(),
        "m": phi.m(),
        "table": rows,
        "count": count.to_string(),
        "brute_force": brute.to_string(),
        "match": matches,
        "seconds": elapsed.as_secs_f64(),
    });
    Ok(Outcome { code: u8::from(!matches), text, json })
}
