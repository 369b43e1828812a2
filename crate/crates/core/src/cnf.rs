//! CNF formulas: DIMACS input and output, clause factor graphs, unit
//! propagation and exact model counting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::Command;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_graph::{Factor, FactorGraph, Potential, Variable};

/// A propositional literal. Variables are numbered from 1 as in DIMACS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn new(var: usize, positive: bool) -> Self {
        assert!(var >= 1, "variables are 1-based");
        Literal { var, positive }
    }

    pub fn from_dimacs(lit: i64) -> Self {
        Literal::new(lit.unsigned_abs() as usize, lit > 0)
    }

    pub fn to_dimacs(self) -> i64 {
        if self.positive {
            self.var as i64
        } else {
            -(self.var as i64)
        }
    }

    pub fn negated(self) -> Self {
        Literal {
            var: self.var,
            positive: !self.positive,
        }
    }

    /// Whether the literal holds under `value` for its variable.
    pub fn satisfied_by(self, value: bool) -> bool {
        self.positive == value
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    pub num_vars: usize,
    pub clauses: Vec<Vec<Literal>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseStats {
    pub tautologies_removed: usize,
    pub duplicate_literals_removed: usize,
}

/// Values for a subset of the variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialAssignment(BTreeMap<usize, bool>);

impl PartialAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `lit`. Returns `false` if its variable already has the other value.
    pub fn assign(&mut self, lit: Literal) -> bool {
        *self.0.entry(lit.var).or_insert(lit.positive) == lit.positive
    }

    pub fn get(&self, var: usize) -> Option<bool> {
        self.0.get(&var).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn literals(&self) -> impl Iterator<Item = Literal> + '_ {
        self.0.iter().map(|(&var, &positive)| Literal { var, positive })
    }
}

/// Outcome of conditioning and unit propagation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Propagation {
    /// Satisfied clauses dropped and falsified literals removed. Variables
    /// keep their numbering; fixed variables no longer occur in any clause.
    Residual { formula: CnfFormula, implied: Vec<Literal> },
    /// Some clause became empty: no models under this branch.
    Conflict,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Vec<Literal>>) -> Result<Self> {
        for clause in &clauses {
            for lit in clause {
                if lit.var == 0 || lit.var > num_vars {
                    return Err(Error::InvalidConfig(format!(
                        "literal {} out of range for {num_vars} variables",
                        lit.to_dimacs()
                    )));
                }
            }
        }
        Ok(CnfFormula { num_vars, clauses })
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    /// Variables occurring in at least one clause, ascending.
    pub fn clause_variables(&self) -> BTreeSet<usize> {
        self.clauses.iter().flatten().map(|l| l.var).collect()
    }

    pub fn is_satisfied_by(&self, values: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|c| c.iter().any(|l| l.satisfied_by(values[l.var - 1])))
    }
}

pub fn parse_dimacs(text: &str) -> Result<CnfFormula> {
    parse_dimacs_with_stats(text).map(|(f, _)| f)
}

pub fn parse_dimacs_with_stats(text: &str) -> Result<(CnfFormula, ParseStats)> {
    let err = |line: usize, message: String| Error::Parse { line, message };
    let mut header: Option<(usize, usize, usize)> = None;
    let mut stats = ParseStats::default();
    let mut clauses = Vec::new();
    let mut seen_clauses = 0usize;
    let mut current: Vec<i64> = Vec::new();
    let mut last_line = 0;

    let mut finish = |lits: &mut Vec<i64>, stats: &mut ParseStats| {
        let mut clause: Vec<Literal> = Vec::with_capacity(lits.len());
        let mut tautology = false;
        for &l in lits.iter() {
            let lit = Literal::from_dimacs(l);
            if clause.contains(&lit) {
                stats.duplicate_literals_removed += 1;
            } else if clause.contains(&lit.negated()) {
                tautology = true;
            } else {
                clause.push(lit);
            }
        }
        lits.clear();
        if tautology {
            stats.tautologies_removed += 1;
        } else {
            clauses.push(clause);
        }
    };

    'lines: for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        last_line = ln;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(err(ln, "second `p` header".into()));
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 || toks[0] != "p" || toks[1] != "cnf" {
                return Err(err(ln, "expected `p cnf <variables> <clauses>`".into()));
            }
            let vars = toks[2].parse().map_err(|_| err(ln, format!("bad variable count `{}`", toks[2])))?;
            let count = toks[3].parse().map_err(|_| err(ln, format!("bad clause count `{}`", toks[3])))?;
            header = Some((vars, count, ln));
            continue;
        }
        let Some((vars, _, _)) = header else {
            return Err(err(ln, "clause before the `p cnf` header".into()));
        };
        for tok in line.split_whitespace() {
            if tok == "%" {
                break 'lines;
            }
            let l: i64 = tok.parse().map_err(|_| err(ln, format!("`{tok}` is not an integer literal")))?;
            if l == 0 {
                seen_clauses += 1;
                finish(&mut current, &mut stats);
            } else {
                if l.unsigned_abs() as usize > vars {
                    return Err(err(ln, format!("literal {l} out of range for {vars} variables")));
                }
                current.push(l);
            }
        }
    }
    let Some((num_vars, count, hl)) = header else {
        return Err(err(last_line.max(1), "missing `p cnf` header".into()));
    };
    if !current.is_empty() {
        return Err(err(last_line, "last clause is not terminated by 0".into()));
    }
    if seen_clauses != count {
        return Err(err(hl, format!("header declares {count} clauses, found {seen_clauses}")));
    }
    Ok((CnfFormula { num_vars, clauses }, stats))
}

/// Header plus one line per clause, clauses and literals in stored order.
pub fn to_dimacs(formula: &CnfFormula) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "p cnf {} {}", formula.num_vars, formula.clauses.len());
    for clause in &formula.clauses {
        for lit in clause {
            let _ = write!(out, "{} ", lit.to_dimacs());
        }
        out.push_str("0\n");
    }
    out
}

/// One binary variable per proposition (id `v - 1`, state 1 = true) and one
/// 0/1 factor per clause, zero exactly on the falsifying assignment.
pub fn to_factor_graph(formula: &CnfFormula) -> Result<FactorGraph> {
    let variables = (1..=formula.num_vars)
        .map(|v| Variable::new(v - 1, 2).with_label(format!("x{v}")))
        .collect();
    let mut factors = Vec::with_capacity(formula.clauses.len());
    for (id, clause) in formula.clauses.iter().enumerate() {
        if clause.is_empty() {
            return Err(Error::Contradiction(format!("clause {id} is empty")));
        }
        let k = clause.len();
        let mut values = vec![1.0; 1 << k];
        let falsifying = clause
            .iter()
            .fold(0usize, |idx, lit| (idx << 1) | usize::from(!lit.positive));
        values[falsifying] = 0.0;
        let table = Potential::new(vec![2; k], values)?;
        factors.push(Factor::new(id, clause.iter().map(|l| l.var - 1).collect(), table));
    }
    FactorGraph::new(variables, factors)
}

/// Unit propagation from the formula's own unit clauses.
pub fn propagate(formula: &CnfFormula) -> Propagation {
    simplify(formula, &[])
}

/// Sets `lit`, then propagates. `implied` excludes `lit` itself.
pub fn condition_and_propagate(formula: &CnfFormula, lit: Literal) -> Result<Propagation> {
    if lit.var == 0 || lit.var > formula.num_vars {
        return Err(Error::InvalidConfig(format!(
            "literal {} out of range for {} variables",
            lit.to_dimacs(),
            formula.num_vars
        )));
    }
    Ok(simplify(formula, &[lit]))
}

fn simplify(formula: &CnfFormula, seed: &[Literal]) -> Propagation {
    let mut value: Vec<Option<bool>> = vec![None; formula.num_vars + 1];
    let mut implied = Vec::new();
    for &lit in seed {
        value[lit.var] = Some(lit.positive);
    }
    loop {
        let mut changed = false;
        for clause in &formula.clauses {
            let mut open = None;
            let mut open_count = 0;
            let mut satisfied = false;
            for &lit in clause {
                match value[lit.var] {
                    Some(v) if lit.satisfied_by(v) => {
                        satisfied = true;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        open_count += 1;
                        open = Some(lit);
                    }
                }
            }
            if satisfied {
                continue;
            }
            match (open_count, open) {
                (0, _) => return Propagation::Conflict,
                (1, Some(lit)) => {
                    value[lit.var] = Some(lit.positive);
                    implied.push(lit);
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    let clauses = formula
        .clauses
        .iter()
        .filter(|c| !c.iter().any(|l| value[l.var].is_some_and(|v| l.satisfied_by(v))))
        .map(|c| c.iter().copied().filter(|l| value[l.var].is_none()).collect())
        .collect();
    Propagation::Residual {
        formula: CnfFormula {
            num_vars: formula.num_vars,
            clauses,
        },
        implied,
    }
}

/// Drops the `removed` variables and renumbers the rest densely in
/// increasing order. The removed variables must not occur in any clause.
/// Returns the new formula and, per new variable, its old number.
pub fn compact(formula: &CnfFormula, removed: &BTreeSet<usize>) -> (CnfFormula, Vec<usize>) {
    let mut renumber = vec![0usize; formula.num_vars + 1];
    let mut old_of_new = Vec::new();
    for (v, slot) in renumber.iter_mut().enumerate().skip(1) {
        if !removed.contains(&v) {
            old_of_new.push(v);
            *slot = old_of_new.len();
        }
    }
    let clauses = formula
        .clauses
        .iter()
        .map(|c| {
            c.iter()
                .map(|l| {
                    assert!(renumber[l.var] != 0, "removed variable {} still occurs", l.var);
                    Literal::new(renumber[l.var], l.positive)
                })
                .collect()
        })
        .collect();
    (
        CnfFormula {
            num_vars: old_of_new.len(),
            clauses,
        },
        old_of_new,
    )
}

pub const BRUTE_FORCE_LIMIT: usize = 26;

/// Model count by enumerating all `2^n` assignments.
pub fn brute_force_count(formula: &CnfFormula) -> Result<u64> {
    let n = formula.num_vars;
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyVariables {
            vars: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let masks: Vec<(u32, u32)> = formula
        .clauses
        .iter()
        .map(|c| {
            c.iter().fold((0u32, 0u32), |(p, q), l| {
                let bit = 1u32 << (l.var - 1);
                if l.positive {
                    (p | bit, q)
                } else {
                    (p, q | bit)
                }
            })
        })
        .collect();
    let mut count = 0u64;
    for a in 0u32..(1u32 << n) {
        if masks.iter().all(|&(p, q)| (a & p) | (!a & q) != 0) {
            count += 1;
        }
    }
    Ok(count)
}

/// Exact model count by DPLL with unit propagation, connected components,
/// most-occurring-variable branching and component caching.
///
/// With a `budget`, fails with [`Error::BudgetExceeded`] when more than
/// `budget` variables still occur in clauses after initial propagation.
pub fn exact_count(formula: &CnfFormula, budget: Option<usize>) -> Result<BigUint> {
    let clauses: Vec<Vec<i32>> = formula
        .clauses
        .iter()
        .map(|c| c.iter().map(|l| l.to_dimacs() as i32).collect())
        .collect();
    let occurring = formula.clause_variables().len();
    let free = formula.num_vars - occurring;
    if let Some(budget) = budget {
        let after = match unit_propagate(clauses.clone()) {
            Some((residual, _)) => vars_of(&residual).len(),
            None => 0,
        };
        if after > budget {
            return Err(Error::BudgetExceeded { vars: after, budget });
        }
    }
    let mut counter = Counter::default();
    Ok(counter.count(clauses) << free)
}

#[derive(Default)]
struct Counter {
    cache: HashMap<Vec<Vec<i32>>, BigUint>,
}

const CACHE_LIMIT: usize = 1 << 18;

fn vars_of(clauses: &[Vec<i32>]) -> BTreeSet<u32> {
    clauses.iter().flatten().map(|l| l.unsigned_abs()).collect()
}

/// Returns the simplified clauses and the number of fixed variables, or
/// `None` on conflict.
fn unit_propagate(mut clauses: Vec<Vec<i32>>) -> Option<(Vec<Vec<i32>>, usize)> {
    let mut fixed = 0;
    while let Some(unit) = clauses.iter().find(|c| c.len() <= 1).map(|c| c.first().copied()) {
        let lit = unit?;
        fixed += 1;
        clauses = clauses
            .into_iter()
            .filter(|c| !c.contains(&lit))
            .map(|mut c| {
                c.retain(|&l| l != -lit);
                c
            })
            .collect();
    }
    Some((clauses, fixed))
}

fn components(clauses: Vec<Vec<i32>>) -> Vec<Vec<Vec<i32>>> {
    let vars: Vec<u32> = vars_of(&clauses).into_iter().collect();
    let index: HashMap<u32, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut parent: Vec<usize> = (0..vars.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for c in &clauses {
        let first = index[&c[0].unsigned_abs()];
        for l in &c[1..] {
            let (a, b) = (find(&mut parent, first), find(&mut parent, index[&l.unsigned_abs()]));
            parent[a] = b;
        }
    }
    let mut groups: BTreeMap<usize, Vec<Vec<i32>>> = BTreeMap::new();
    for c in clauses {
        let root = find(&mut parent, index[&c[0].unsigned_abs()]);
        groups.entry(root).or_default().push(c);
    }
    groups.into_values().collect()
}

impl Counter {
    /// Models over exactly the variables occurring in `clauses`.
    fn count(&mut self, clauses: Vec<Vec<i32>>) -> BigUint {
        let before = vars_of(&clauses).len();
        let Some((residual, fixed)) = unit_propagate(clauses) else {
            return BigUint::zero();
        };
        let remaining = vars_of(&residual).len();
        let freed = before - fixed - remaining;
        let mut total = BigUint::one() << freed;
        for comp in components(residual) {
            let c = self.count_component(comp);
            if c.is_zero() {
                return c;
            }
            total *= c;
        }
        total
    }

    fn count_component(&mut self, mut comp: Vec<Vec<i32>>) -> BigUint {
        for c in comp.iter_mut() {
            c.sort_unstable();
        }
        comp.sort_unstable();
        if let Some(hit) = self.cache.get(&comp) {
            return hit.clone();
        }
        let mut occurrences: BTreeMap<u32, usize> = BTreeMap::new();
        for l in comp.iter().flatten() {
            *occurrences.entry(l.unsigned_abs()).or_default() += 1;
        }
        let (&var, _) = occurrences
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .expect("component has a variable");
        let var = var as i32;
        let mut total = BigUint::zero();
        for lit in [var, -var] {
            let mut branch = comp.clone();
            branch.push(vec![lit]);
            total += self.count(branch);
        }
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        self.cache.insert(comp, total.clone());
        total
    }
}

/// An external model counter run as a subprocess.
///
/// The formula is written to a temporary DIMACS file whose path is appended
/// to `args`. The count is read from an `s mc <N>` line if present, otherwise
/// from the last integer token on standard output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalCounter {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ExternalCounter {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        ExternalCounter {
            program: program.into(),
            args: Vec::new(),
        }
    }

    pub fn count(&self, formula: &CnfFormula) -> Result<BigUint> {
        let mut file = tempfile::Builder::new().suffix(".cnf").tempfile()?;
        file.write_all(to_dimacs(formula).as_bytes())?;
        file.flush()?;
        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(file.path())
            .output()
            .map_err(|e| Error::ExternalCounter(format!("cannot run {}: {e}", self.program.display())))?;
        let stdout = String::from_utf8_lossy(&output.stdout);
        parse_counter_output(&stdout).ok_or_else(|| {
            Error::ExternalCounter(format!(
                "{} printed no count (exit status {})",
                self.program.display(),
                output.status
            ))
        })
    }
}

fn parse_counter_output(stdout: &str) -> Option<BigUint> {
    for line in stdout.lines() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() >= 3 && toks[0] == "s" && toks[1] == "mc" {
            return toks[2].parse().ok();
        }
    }
    stdout
        .split(|c: char| !c.is_ascii_digit())
        .rfind(|t| !t.is_empty())
        .and_then(|t| t.parse().ok())
}
