//! Plain-text factor graph format (`.fgt`).
//!
//! ```text
//! # comment
//! variables 3
//! 2 2 2
//! factor 2 0 1
//! 2 1 1 2
//! factor 2 1 2
//! 2 1 1 2
//! ```
//!
//! Each factor block lists its arity and argument ids, followed by one line
//! with the table in row-major order (argument 0 most significant).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::factor_graph::{Factor, FactorGraph, Potential, Variable};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next non-blank, non-comment line with its 1-based number.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some((i + 1, trimmed));
        }
        None
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("expected a non-negative integer, found `{tok}`")))
}

pub fn parse_fgt(text: &str) -> Result<FactorGraph> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (ln, header) = lines
        .next_content()
        .ok_or_else(|| parse_err(1, "empty input, expected `variables <n>`"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("variables") {
        return Err(parse_err(ln, "expected `variables <n>`"));
    }
    let n = parse_usize(toks.next().ok_or_else(|| parse_err(ln, "missing variable count"))?, ln)?;
    if toks.next().is_some() {
        return Err(parse_err(ln, "trailing tokens after variable count"));
    }

    let mut cards = Vec::with_capacity(n);
    while cards.len() < n {
        let (ln, line) = lines
            .next_content()
            .ok_or_else(|| parse_err(ln, format!("expected {n} cardinalities")))?;
        for tok in line.split_whitespace() {
            cards.push(parse_usize(tok, ln)?);
        }
        if cards.len() > n {
            return Err(parse_err(ln, format!("more than {n} cardinalities")));
        }
    }
    let variables: Vec<Variable> = cards
        .iter()
        .enumerate()
        .map(|(i, &c)| Variable::new(i, c))
        .collect();
    if let Some(v) = variables.iter().find(|v| v.cardinality < 2) {
        return Err(Error::BadCardinality {
            var: v.id,
            cardinality: v.cardinality,
        });
    }

    let mut factors = Vec::new();
    while let Some((ln, line)) = lines.next_content() {
        let mut toks = line.split_whitespace();
        if toks.next() != Some("factor") {
            return Err(parse_err(ln, "expected `factor <arity> <args...>`"));
        }
        let arity = parse_usize(toks.next().ok_or_else(|| parse_err(ln, "missing arity"))?, ln)?;
        let args = toks.map(|t| parse_usize(t, ln)).collect::<Result<Vec<_>>>()?;
        if args.len() != arity {
            return Err(parse_err(ln, format!("arity {arity} but {} arguments", args.len())));
        }
        let mut fcards = Vec::with_capacity(arity);
        for &a in &args {
            let c = cards
                .get(a)
                .ok_or_else(|| parse_err(ln, format!("argument {a} is not a declared variable")))?;
            fcards.push(*c);
        }
        let size: usize = fcards.iter().product();
        let mut values = Vec::with_capacity(size);
        while values.len() < size {
            let (vln, vline) = lines
                .next_content()
                .ok_or_else(|| parse_err(ln, format!("factor needs {size} table values")))?;
            if vline.starts_with("factor") {
                return Err(parse_err(vln, format!("factor table needs {size} values, found {}", values.len())));
            }
            for tok in vline.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(vln, format!("`{tok}` is not a number")))?;
                values.push(v);
            }
            if values.len() > size {
                return Err(parse_err(vln, format!("factor table needs {size} values, found {}", values.len())));
            }
        }
        let table = Potential::new(fcards, values).map_err(|e| parse_err(ln, e.to_string()))?;
        let id = factors.len();
        factors.push(Factor::new(id, args, table));
    }
    FactorGraph::new(variables, factors)
}

/// Writes the graph back in `.fgt` form. Values use Rust's shortest
/// round-trip float formatting, so `parse_fgt(write_fgt(g)) == g`.
pub fn write_fgt(graph: &FactorGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "variables {}", graph.num_variables());
    let cards: Vec<String> = graph
        .variables()
        .iter()
        .map(|v| v.cardinality.to_string())
        .collect();
    let _ = writeln!(out, "{}", cards.join(" "));
    for f in graph.factors() {
        let args: Vec<String> = f.args.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "factor {} {}", f.arity(), args.join(" "));
        let vals: Vec<String> = f.table.values().iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", vals.join(" "));
    }
    out
}

/// Evidence files: one `<variable> <state>` pair per line, `#` comments.
pub fn parse_evidence(text: &str) -> Result<crate::factor_graph::Evidence> {
    let mut evidence = crate::factor_graph::Evidence::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(i + 1, "expected `<variable> <state>`"));
        }
        evidence.observe(parse_usize(toks[0], i + 1)?, parse_usize(toks[1], i + 1)?);
    }
    Ok(evidence)
}
