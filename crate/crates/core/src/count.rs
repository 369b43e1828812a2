//! Probabilistic lower bounds on model counts, guided by BP marginals.
//!
//! One iteration repeatedly estimates marginals of the residual formula with
//! BP (or counting BP), fixes the most balanced variable to a uniformly random
//! value and unit-propagates, until at most `exact_threshold` variables occur
//! in clauses. The residual is then counted exactly as `M_c`, and with `s`
//! random fixings the iteration reports `2^(s - alpha) * M_c`. The minimum over
//! `t` iterations is a lower bound with probability at least
//! `1 - 2^(-alpha * t)`.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bp::{run_bp, BpConfig, Schedule};
use crate::cbp::run_cbp;
use crate::cnf::{compact, condition_and_propagate, exact_count, to_factor_graph, CnfFormula, ExternalCounter, Literal, Propagation};
use crate::error::{Error, Result};
use crate::factor_graph::Evidence;
use crate::lifting::{compress, SignatureMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Bp,
    Cbp,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bp" => Ok(Engine::Bp),
            "cbp" => Ok(Engine::Cbp),
            other => Err(Error::InvalidConfig(format!("unknown engine `{other}` (expected bp or cbp)"))),
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Bp => "bp",
            Engine::Cbp => "cbp",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountConfig {
    pub alpha: f64,
    pub iterations: usize,
    pub engine: Engine,
    pub bp: BpConfig,
    pub mode: SignatureMode,
    /// Count exactly once at most this many variables occur in clauses.
    pub exact_threshold: usize,
    pub seed: u64,
    /// Used instead of the internal exact counter when set.
    pub external: Option<ExternalCounter>,
}

impl CountConfig {
    pub fn new(seed: u64) -> Self {
        CountConfig {
            alpha: 1.0,
            iterations: 7,
            engine: Engine::Bp,
            bp: BpConfig::default(),
            mode: SignatureMode::default(),
            exact_threshold: 64,
            seed,
            external: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha {} must be a finite non-negative number", self.alpha)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("at least one iteration is required".into()));
        }
        if self.bp.schedule != Schedule::Flooding {
            return Err(Error::InvalidConfig("counting runs BP with the flooding schedule".into()));
        }
        self.bp.validate()
    }

    /// `1 - 2^(-alpha * t)`.
    pub fn confidence(&self) -> f64 {
        1.0 - (-self.alpha * self.iterations as f64).exp2()
    }
}

/// One marginal estimate and the decision taken from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Variable of the input formula that was fixed.
    pub variable: usize,
    pub value: bool,
    /// Variables occurring in clauses when the marginals were computed.
    pub clause_variables: usize,
    pub implied: usize,
    pub messages: u64,
    pub edges: usize,
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub s: usize,
    /// Exact count of the final residual, in decimal.
    pub m_c: String,
    /// `2^(s - alpha) * M_c`, rounded down, in decimal.
    pub count: String,
    pub conflict: bool,
    pub messages: u64,
    pub edges: u64,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountResult {
    pub lower_bound: String,
    pub confidence: f64,
    pub engine: Engine,
    pub seed: u64,
    pub alpha: f64,
    pub winning_iteration: usize,
    pub iterations: Vec<IterationRecord>,
}

impl CountResult {
    pub fn lower_bound_value(&self) -> BigUint {
        self.lower_bound.parse().expect("lower bound is a decimal integer")
    }

    pub fn total_messages(&self) -> u64 {
        self.iterations.iter().map(|i| i.messages).sum()
    }
}

/// Ties within this distance of the best balance go to the smallest index.
const TIE_TOLERANCE: f64 = 1e-9;

/// The candidate whose `P(true)` is closest to 0.5; ties go to the smallest
/// index. `marginals[i]` is `P(true)` of variable `i`.
pub fn most_balanced_variable(marginals: &[f64], candidates: impl IntoIterator<Item = usize>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for v in candidates {
        let d = (marginals[v] - 0.5).abs();
        let better = match best {
            None => true,
            Some((bv, bd)) => d < bd - TIE_TOLERANCE || (d <= bd + TIE_TOLERANCE && v < bv),
        };
        if better {
            best = Some((v, d));
        }
    }
    best.map(|(v, _)| v).ok_or(Error::NoCandidates)
}

/// `2^exponent * m`, rounded down. Fractional exponents use a 52-bit
/// fixed-point power of two, rounded down, so the result never overshoots.
pub fn scale_pow2(m: &BigUint, exponent: f64) -> BigUint {
    let k = exponent.floor();
    let frac = exponent - k;
    let (mantissa, shift) = if frac == 0.0 {
        (m.clone(), k as i64)
    } else {
        let fixed = (frac.exp2() * (1u64 << 52) as f64).floor() as u64;
        (m * BigUint::from(fixed), k as i64 - 52)
    };
    if shift >= 0 {
        mantissa << shift as u64
    } else {
        mantissa >> (-shift) as u64
    }
}

fn marginals(formula: &CnfFormula, config: &CountConfig) -> Result<(Vec<f64>, crate::bp::RunStats)> {
    let graph = to_factor_graph(formula)?;
    let evidence = Evidence::new();
    let (beliefs, stats) = match config.engine {
        Engine::Bp => run_bp(&graph, &evidence, &config.bp)?,
        Engine::Cbp => {
            let compressed = compress(&graph, &evidence, config.mode)?;
            run_cbp(&compressed, &config.bp)?
        }
    };
    Ok((beliefs.iter().map(|b| b[1]).collect(), stats))
}

fn residual_count(formula: &CnfFormula, config: &CountConfig) -> Result<BigUint> {
    match &config.external {
        Some(counter) => counter.count(formula),
        None => exact_count(formula, None),
    }
}

/// Runs iteration `index`, drawing from stream `index` of the seeded RNG.
pub fn count_iteration(formula: &CnfFormula, config: &CountConfig, index: usize) -> Result<IterationRecord> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let mut current = formula.clone();
    let mut original: Vec<usize> = (1..=formula.num_vars).collect();
    let mut steps = Vec::new();
    let mut conflict = false;
    loop {
        let candidates = current.clause_variables();
        if candidates.len() <= config.exact_threshold {
            break;
        }
        let (marg, stats) = match marginals(&current, config) {
            Ok(r) => r,
            // Zero beliefs under 0/1 clause factors certify unsatisfiability.
            Err(Error::Contradiction(_)) => {
                conflict = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let u = most_balanced_variable(&marg, candidates.iter().map(|v| v - 1))? + 1;
        let value = rng.random_bool(0.5);
        let mut step = StepRecord {
            variable: original[u - 1],
            value,
            clause_variables: candidates.len(),
            implied: 0,
            messages: stats.messages,
            edges: stats.edges,
            sweeps: stats.sweeps,
            converged: stats.converged,
        };
        match condition_and_propagate(&current, Literal::new(u, value))? {
            Propagation::Conflict => {
                steps.push(step);
                conflict = true;
                break;
            }
            Propagation::Residual { formula: residual, implied } => {
                step.implied = implied.len();
                steps.push(step);
                let removed: BTreeSet<usize> = implied.iter().map(|l| l.var).chain([u]).collect();
                let (next, map) = compact(&residual, &removed);
                original = map.iter().map(|&v| original[v - 1]).collect();
                current = next;
            }
        }
    }
    let s = steps.len();
    let m_c = if conflict { BigUint::zero() } else { residual_count(&current, config)? };
    let count = scale_pow2(&m_c, s as f64 - config.alpha);
    Ok(IterationRecord {
        index,
        s,
        m_c: m_c.to_string(),
        count: count.to_string(),
        conflict,
        messages: steps.iter().map(|st| st.messages).sum(),
        edges: steps.iter().map(|st| st.edges as u64).sum(),
        steps,
    })
}

/// Combines iteration records (in any order) into a result.
pub fn summarize(config: &CountConfig, mut iterations: Vec<IterationRecord>) -> CountResult {
    iterations.sort_by_key(|r| r.index);
    let (winning_iteration, lower_bound) = iterations
        .iter()
        .map(|r| (r.index, r.count.parse::<BigUint>().expect("decimal count")))
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
        .unwrap_or((0, BigUint::zero()));
    CountResult {
        lower_bound: lower_bound.to_string(),
        confidence: config.confidence(),
        engine: config.engine,
        seed: config.seed,
        alpha: config.alpha,
        winning_iteration,
        iterations,
    }
}

pub fn run_count(formula: &CnfFormula, config: &CountConfig) -> Result<CountResult> {
    config.validate()?;
    let records = (0..config.iterations)
        .map(|i| count_iteration(formula, config, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(config, records))
}
