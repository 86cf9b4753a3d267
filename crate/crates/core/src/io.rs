//! Text formats for queries and databases.
//!
//! Query files hold one clause per line or `&`-separated clauses:
//!
//! ```text
//! // Tweets
//! (Tweets(x) | !Follows(x,y))
//! (Follows(x,y) | !Leader(y))
//! ```
//!
//! Variables start with a lowercase letter; constants are capitalized or
//! quoted. `()` is the empty clause. A leading `mode: dnf` line switches to
//! a disjunction of conjunctive terms (`(A(x) & B(x,y))`, separated by `|`
//! or newlines), which is negated into CNF on load.
//!
//! Database files:
//!
//! ```text
//! domain = Anne, Bob, Charlie      // or: domain size 5   (c1 .. c5)
//! relation Advises/2
//! default Prof/1 = 0
//! sym S/2 = 1/2
//! Advises(Anne, Bob) = 0.7
//! ```
//!
//! Relations without an explicit arity take the arity of their first use,
//! or 1 in `default`/`sym` lines.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::fol::{render_constant, Atom, Clause, CnfQuery, Domain, Literal, Predicate, Term};
use crate::pdb::Pdb;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    Comma,
    Bar,
    Amp,
    Bang,
    Eq,
    Slash,
    Newline,
    Ident(String),
    Quoted(String),
    Number(String),
    Eof,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Bar => "`|`".into(),
        Tok::Amp => "`&`".into(),
        Tok::Bang => "`!`".into(),
        Tok::Eq => "`=`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Newline => "end of line".into(),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Quoted(s) => format!("\"{s}\""),
        Tok::Number(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '@' | ':' | '#' | '$')
}

impl Lexer {
    fn new(text: &str) -> Result<Lexer> {
        let mut toks = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let chars: Vec<char> = line.chars().collect();
            let mut i = 0;
            while i < chars.len() {
                let c = chars[i];
                let col = i + 1;
                let single = match c {
                    '(' => Some(Tok::LParen),
                    ')' => Some(Tok::RParen),
                    ',' => Some(Tok::Comma),
                    '|' => Some(Tok::Bar),
                    '&' => Some(Tok::Amp),
                    '!' => Some(Tok::Bang),
                    '=' => Some(Tok::Eq),
                    _ => None,
                };
                if let Some(t) = single {
                    toks.push((t, ln + 1, col));
                    i += 1;
                } else if c.is_whitespace() {
                    i += 1;
                } else if c == '/' {
                    if chars.get(i + 1) == Some(&'/') {
                        break;
                    }
                    toks.push((Tok::Slash, ln + 1, col));
                    i += 1;
                } else if c == '"' {
                    let end = chars[i + 1..].iter().position(|&d| d == '"').ok_or(Error::Parse {
                        line: ln + 1,
                        col,
                        expected: "closing `\"`".into(),
                    })?;
                    toks.push((Tok::Quoted(chars[i + 1..i + 1 + end].iter().collect()), ln + 1, col));
                    i += end + 2;
                } else if c.is_ascii_digit() || c == '.' {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                        i += 1;
                    }
                    toks.push((Tok::Number(chars[start..i].iter().collect()), ln + 1, col));
                } else if is_ident_start(c) {
                    let start = i;
                    while i < chars.len() && is_ident_char(chars[i]) {
                        i += 1;
                    }
                    toks.push((Tok::Ident(chars[start..i].iter().collect()), ln + 1, col));
                } else {
                    return Err(Error::Parse { line: ln + 1, col, expected: "a token".into() });
                }
            }
            toks.push((Tok::Newline, ln + 1, chars.len() + 1));
        }
        let (l, c) = toks.last().map_or((1, 1), |t| (t.1, t.2));
        toks.push((Tok::Eof, l, c));
        Ok(Lexer { toks, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].0
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, expected: &str) -> Result<T> {
        let (t, line, col) = &self.toks[self.pos];
        Err(Error::Parse { line: *line, col: *col, expected: format!("{expected}, found {}", describe(t)) })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<()> {
        if *self.peek() == t {
            self.next();
            Ok(())
        } else {
            self.err(what)
        }
    }

    fn skip_newlines(&mut self) {
        while *self.peek() == Tok::Newline {
            self.next();
        }
    }
}

/// A parsed query file. In DNF mode `cnf` is the negation of the query read,
/// so `Pr(query) = 1 - Pr(cnf)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryFile {
    pub cnf: CnfQuery,
    pub dnf: bool,
}

/// Strips a leading `mode:` line; returns the remaining text (line numbers
/// kept) and whether DNF mode was requested.
fn split_mode(text: &str) -> Result<(String, Option<bool>)> {
    let mut out = Vec::new();
    let mut mode = None;
    let mut seen_content = false;
    for (i, line) in text.lines().enumerate() {
        let body = line.split("//").next().unwrap_or("").trim();
        if !seen_content && !body.is_empty() {
            seen_content = true;
            if let Some(m) = body.strip_prefix("mode:") {
                mode = Some(match m.trim() {
                    "dnf" => true,
                    "cnf" => false,
                    _ => return Err(Error::Parse { line: i + 1, col: 1, expected: "`mode: cnf` or `mode: dnf`".into() }),
                });
                out.push(String::new());
                continue;
            }
        }
        out.push(line.to_string());
    }
    Ok((out.join("\n"), mode))
}

pub fn parse_query(text: &str) -> Result<CnfQuery> {
    let (body, mode) = split_mode(text)?;
    if mode == Some(true) {
        return Err(Error::Parse { line: 1, col: 1, expected: "a CNF query (this file is in DNF mode)".into() });
    }
    let mut lx = Lexer::new(&body)?;
    parse_cnf(&mut lx)
}

/// Parses a query file honoring its `mode:` header; `force_dnf` reads the
/// body as DNF when no header is present.
pub fn parse_query_file(text: &str, force_dnf: bool) -> Result<QueryFile> {
    let (body, mode) = split_mode(text)?;
    let dnf = mode.unwrap_or(force_dnf);
    let mut lx = Lexer::new(&body)?;
    let cnf = if dnf { parse_dnf(&mut lx)? } else { parse_cnf(&mut lx)? };
    Ok(QueryFile { cnf, dnf })
}

fn parse_cnf(lx: &mut Lexer) -> Result<CnfQuery> {
    let mut clauses = Vec::new();
    loop {
        while matches!(lx.peek(), Tok::Newline | Tok::Amp) {
            lx.next();
        }
        if *lx.peek() == Tok::Eof {
            break;
        }
        clauses.push(Clause::new(parse_group(lx, Tok::Bar, "`|`")?));
        match lx.peek() {
            Tok::Newline | Tok::Amp | Tok::Eof => {}
            _ => return lx.err("`&` or end of line"),
        }
    }
    Ok(CnfQuery::new(clauses))
}

fn parse_dnf(lx: &mut Lexer) -> Result<CnfQuery> {
    let mut clauses = Vec::new();
    loop {
        while matches!(lx.peek(), Tok::Newline | Tok::Bar) {
            lx.next();
        }
        if *lx.peek() == Tok::Eof {
            break;
        }
        let term = parse_group(lx, Tok::Amp, "`&`")?;
        clauses.push(Clause::new(term.into_iter().map(|l| l.negated())));
        match lx.peek() {
            Tok::Newline | Tok::Bar | Tok::Eof => {}
            _ => return lx.err("`|` or end of line"),
        }
    }
    Ok(CnfQuery::new(clauses))
}

/// A parenthesized or bare list of literals joined by `sep`, with variables
/// scoped to the list.
fn parse_group(lx: &mut Lexer, sep: Tok, sep_name: &str) -> Result<Vec<Literal>> {
    let mut vars: HashMap<String, u32> = HashMap::new();
    let mut lits = Vec::new();
    if *lx.peek() == Tok::LParen {
        lx.next();
        lx.skip_newlines();
        if *lx.peek() == Tok::RParen {
            lx.next();
            return Ok(lits);
        }
        loop {
            lits.push(parse_literal(lx, &mut vars)?);
            lx.skip_newlines();
            if *lx.peek() == sep {
                lx.next();
                lx.skip_newlines();
                continue;
            }
            lx.expect(Tok::RParen, &format!("{sep_name} or `)`"))?;
            return Ok(lits);
        }
    }
    loop {
        lits.push(parse_literal(lx, &mut vars)?);
        if *lx.peek() == sep {
            lx.next();
            lx.skip_newlines();
            continue;
        }
        return Ok(lits);
    }
}

fn parse_literal(lx: &mut Lexer, vars: &mut HashMap<String, u32>) -> Result<Literal> {
    let positive = if *lx.peek() == Tok::Bang {
        lx.next();
        false
    } else {
        true
    };
    let Tok::Ident(name) = lx.peek().clone() else {
        return lx.err("a predicate name");
    };
    lx.next();
    lx.expect(Tok::LParen, "`(`")?;
    let mut args = Vec::new();
    if *lx.peek() != Tok::RParen {
        loop {
            let t = match lx.peek().clone() {
                Tok::Ident(s) if s.starts_with(|c: char| c.is_lowercase()) => {
                    let n = vars.len() as u32;
                    Term::Var(*vars.entry(s).or_insert(n))
                }
                Tok::Ident(s) | Tok::Quoted(s) => Term::constant(&s),
                _ => return lx.err("a variable or constant"),
            };
            lx.next();
            args.push(t);
            if *lx.peek() == Tok::Comma {
                lx.next();
                continue;
            }
            break;
        }
    }
    lx.expect(Tok::RParen, "`,` or `)`")?;
    let atom = Atom::new(Predicate::new(&name, args.len()), args);
    Ok(Literal { atom, positive })
}

/// One clause per line; TRUE is the empty string.
pub fn format_query(q: &CnfQuery) -> String {
    q.clauses().iter().map(|c| format!("{c}\n")).collect()
}

fn parse_prob(s: &str) -> Option<BigRational> {
    if let Some((a, b)) = s.split_once('/') {
        let a: BigInt = a.trim().parse().ok()?;
        let b: BigInt = b.trim().parse().ok()?;
        return (!b.is_zero()).then(|| BigRational::new(a, b));
    }
    parse_decimal(s)
}

/// Exact decimal conversion: `0.315` becomes `63/200`.
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = digits.parse().ok()?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    Some(BigRational::new(num, den))
}

fn parse_prob_tokens(lx: &mut Lexer) -> Result<BigRational> {
    let Tok::Number(a) = lx.peek().clone() else {
        return lx.err("a probability");
    };
    lx.next();
    let text = if *lx.peek() == Tok::Slash {
        lx.next();
        let Tok::Number(b) = lx.peek().clone() else {
            return lx.err("a denominator");
        };
        lx.next();
        format!("{a}/{b}")
    } else {
        a
    };
    match parse_prob(&text) {
        Some(p) => Ok(p),
        None => {
            lx.pos -= 1;
            lx.err("a probability such as `0.7` or `7/10`")
        }
    }
}

fn constant_token(lx: &mut Lexer) -> Result<String> {
    match lx.peek().clone() {
        Tok::Ident(s) | Tok::Quoted(s) => {
            lx.next();
            Ok(s)
        }
        _ => lx.err("a constant"),
    }
}

/// `R` or `R/k`; `k` defaults to the declared arity, else `fallback`.
fn relation_ref(lx: &mut Lexer, db: &Pdb, fallback: usize) -> Result<(String, usize)> {
    let Tok::Ident(name) = lx.peek().clone() else {
        return lx.err("a relation name");
    };
    lx.next();
    if *lx.peek() == Tok::Slash {
        lx.next();
        let Tok::Number(k) = lx.peek().clone() else {
            return lx.err("an arity");
        };
        let k: usize = match k.parse() {
            Ok(k) => k,
            Err(_) => return lx.err("an arity"),
        };
        lx.next();
        return Ok((name, k));
    }
    let k = db.relation(&name).map_or(fallback, |r| r.arity);
    Ok((name, k))
}

fn end_of_line(lx: &mut Lexer) -> Result<()> {
    match lx.peek() {
        Tok::Newline | Tok::Eof => {
            lx.next();
            Ok(())
        }
        _ => lx.err("end of line"),
    }
}

pub fn parse_pdb(text: &str) -> Result<Pdb> {
    let mut lx = Lexer::new(text)?;
    let mut db: Option<Pdb> = None;
    loop {
        lx.skip_newlines();
        let tok = lx.peek().clone();
        if tok == Tok::Eof {
            break;
        }
        let Tok::Ident(word) = tok else {
            return lx.err("a directive or tuple");
        };
        let (line, col) = (lx.toks[lx.pos].1, lx.toks[lx.pos].2);
        let at = |e: Error| match e {
            Error::Invalid(msg) => Error::Parse { line, col, expected: msg },
            other => other,
        };
        let db_ref = db.get_or_insert_with(|| Pdb::new(Domain::default()).expect("empty domain"));
        match word.as_str() {
            "domain" if matches!(lx.peek2(), Tok::Eq | Tok::Ident(_)) => {
                if !db_ref.domain().is_empty() || db_ref.relations().next().is_some() {
                    return Err(Error::Parse { line, col, expected: "a single domain line before any relation".into() });
                }
                lx.next();
                let domain = if *lx.peek() == Tok::Eq {
                    lx.next();
                    let mut cs: Vec<Arc<str>> = Vec::new();
                    if !matches!(lx.peek(), Tok::Newline | Tok::Eof) {
                        loop {
                            cs.push(Arc::from(constant_token(&mut lx)?.as_str()));
                            if *lx.peek() == Tok::Comma {
                                lx.next();
                                continue;
                            }
                            break;
                        }
                    }
                    Domain::new(cs).ok_or(Error::Parse { line, col, expected: "distinct constants".into() })?
                } else {
                    if *lx.peek() != Tok::Ident("size".into()) {
                        return lx.err("`=` or `size`");
                    }
                    lx.next();
                    let Tok::Number(n) = lx.peek().clone() else {
                        return lx.err("a domain size");
                    };
                    let Ok(n) = n.parse::<usize>() else {
                        return lx.err("a domain size");
                    };
                    lx.next();
                    Domain::of_size(n)
                };
                *db_ref = Pdb::new(domain)?;
            }
            "relation" if matches!(lx.peek2(), Tok::Ident(_)) => {
                lx.next();
                let (name, k) = relation_ref(&mut lx, db_ref, usize::MAX)?;
                if k == usize::MAX {
                    return lx.err("`/` and an arity");
                }
                db_ref.declare(&name, k).map_err(at)?;
            }
            "default" | "sym" if matches!(lx.peek2(), Tok::Ident(_)) => {
                lx.next();
                let (name, k) = relation_ref(&mut lx, db_ref, 1)?;
                lx.expect(Tok::Eq, "`=`")?;
                let p = parse_prob_tokens(&mut lx)?;
                if word == "sym" {
                    db_ref.set_symmetric(&name, k, p).map_err(at)?;
                } else {
                    db_ref.set_default(&name, k, p).map_err(at)?;
                }
            }
            _ => {
                lx.next();
                lx.expect(Tok::LParen, "`(`")?;
                let mut args = Vec::new();
                if *lx.peek() != Tok::RParen {
                    loop {
                        args.push(constant_token(&mut lx)?);
                        if *lx.peek() == Tok::Comma {
                            lx.next();
                            continue;
                        }
                        break;
                    }
                }
                lx.expect(Tok::RParen, "`,` or `)`")?;
                lx.expect(Tok::Eq, "`=`")?;
                let p = parse_prob_tokens(&mut lx)?;
                let refs: Vec<&str> = args.iter().map(String::as_str).collect();
                db_ref.set_prob(&word, &refs, p).map_err(at)?;
            }
        }
        end_of_line(&mut lx)?;
    }
    Ok(db.unwrap_or_else(|| Pdb::new(Domain::default()).expect("empty domain")))
}

fn format_prob(p: &BigRational) -> String {
    if p.is_integer() {
        p.numer().to_string()
    } else {
        format!("{}/{}", p.numer(), p.denom())
    }
}

pub fn format_pdb(db: &Pdb) -> String {
    let mut out = String::new();
    let cs = db.domain().constants();
    if *db.domain() == Domain::of_size(cs.len()) && !cs.is_empty() {
        out.push_str(&format!("domain size {}\n", cs.len()));
    } else {
        let list: Vec<String> = cs.iter().map(|c| render_constant(c)).collect();
        out.push_str(&format!("domain = {}\n", list.join(", ")));
    }
    for (name, rel) in db.relations() {
        if rel.symmetric {
            out.push_str(&format!("sym {name}/{} = {}\n", rel.arity, format_prob(&rel.default)));
            continue;
        }
        if rel.default.is_zero() {
            out.push_str(&format!("relation {name}/{}\n", rel.arity));
        } else {
            out.push_str(&format!("default {name}/{} = {}\n", rel.arity, format_prob(&rel.default)));
        }
        for (args, p) in rel.rows() {
            let args: Vec<String> = args.iter().map(|&i| render_constant(db.constant(i))).collect();
            out.push_str(&format!("{name}({}) = {}\n", args.join(", "), format_prob(p)));
        }
    }
    out
}

/// `1 - p`, for reporting DNF-mode answers.
pub fn complement(p: &BigRational) -> BigRational {
    BigRational::one() - p
}
