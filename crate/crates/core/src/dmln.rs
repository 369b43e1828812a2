//! The dynamic smokers Markov logic network and the comparison between
//! factored frontier (BP under the forwards-backwards schedule, one layer per
//! timestep) and its lifted variant (the same schedule run by counting BP).
//!
//! Clause templates, with default weights:
//!
//! | weight | clause                                          | groundings      |
//! |--------|-------------------------------------------------|-----------------|
//! | 1.4    | `!Smokes(x,0)`                                  | x               |
//! | 2.3    | `!Cancer(x,0)`                                  | x               |
//! | 4.6    | `!Friends(x,y,0)`                               | x, y            |
//! | 2.0    | `Smokes(x,t) => Cancer(x,t)`                    | x, t            |
//! | 2.0    | `Friends(x,y,t) => (Smokes(x,t) <=> Smokes(y,t))` | x, y, t       |
//! | 5.0    | `Friends(x,y,t) <=> Friends(x,y,t+1)`           | x, y, t < T - 1 |
//! | 5.0    | `Smokes(x,t) <=> Smokes(x,t+1)`                 | x, t < T - 1    |
//!
//! A ground clause becomes a factor worth `exp(w)` where the clause holds and
//! 1 where it fails. State 1 of every atom means true.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bp::{BpConfig, LoopyBp, Schedule};
use crate::cbp::CountingBp;
use crate::error::{Error, Result};
use crate::factor_graph::{Evidence, Factor, FactorGraph, Potential, Variable};
use crate::lifting::{compress_with, LiftOptions, SignatureMode};

pub const DEFAULT_WEIGHTS: [f64; 7] = [1.4, 2.3, 4.6, 2.0, 2.0, 5.0, 5.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmlnSpec {
    pub people: usize,
    pub timesteps: usize,
    pub weights: [f64; 7],
    /// Ground `Friends(x,x,t)` atoms and their clauses.
    pub reflexive: bool,
}

impl DmlnSpec {
    pub fn new(people: usize, timesteps: usize) -> Self {
        DmlnSpec {
            people,
            timesteps,
            weights: DEFAULT_WEIGHTS,
            reflexive: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.people == 0 || self.timesteps == 0 {
            return Err(Error::InvalidConfig("need at least one person and one timestep".into()));
        }
        if let Some(w) = self.weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig(format!("weight {w} is not finite")));
        }
        Ok(())
    }

    fn friends_per_step(&self) -> usize {
        if self.reflexive {
            self.people * self.people
        } else {
            self.people * (self.people - 1)
        }
    }

    fn block(&self) -> usize {
        2 * self.people + self.friends_per_step()
    }

    pub fn num_variables(&self) -> usize {
        self.block() * self.timesteps
    }

    /// Variable id of `Smokes(x,t)`. Ids are time-major: within a timestep
    /// all `Smokes`, then all `Cancer`, then all `Friends` atoms.
    pub fn smokes(&self, x: usize, t: usize) -> usize {
        t * self.block() + x
    }

    pub fn cancer(&self, x: usize, t: usize) -> usize {
        t * self.block() + self.people + x
    }

    /// Variable id of `Friends(x,y,t)`; `None` for `x == y` without reflexive atoms.
    pub fn friends(&self, x: usize, y: usize, t: usize) -> Option<usize> {
        let base = t * self.block() + 2 * self.people;
        if self.reflexive {
            Some(base + x * self.people + y)
        } else if x == y {
            None
        } else {
            Some(base + x * (self.people - 1) + if y < x { y } else { y - 1 })
        }
    }

    fn friend_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.people;
        (0..n)
            .flat_map(move |x| (0..n).map(move |y| (x, y)))
            .filter(|&(x, y)| self.reflexive || x != y)
    }

    /// Timestep of every variable, the layer key for the schedule.
    pub fn layers(&self) -> Vec<usize> {
        (0..self.num_variables()).map(|v| v / self.block()).collect()
    }
}

fn unary_not(w: f64) -> Vec<f64> {
    vec![w.exp(), 1.0]
}

fn implies(w: f64) -> Vec<f64> {
    let e = w.exp();
    vec![e, e, 1.0, e]
}

fn equivalent(w: f64) -> Vec<f64> {
    let e = w.exp();
    vec![e, 1.0, 1.0, e]
}

/// `F => (S1 <=> S2)` over `(F, S1, S2)`.
fn similar(w: f64) -> Vec<f64> {
    let e = w.exp();
    (0..8)
        .map(|i| {
            let (f, s1, s2) = (i >> 2 & 1, i >> 1 & 1, i & 1);
            if f == 1 && s1 != s2 {
                1.0
            } else {
                e
            }
        })
        .collect()
}

pub fn ground_dmln(spec: &DmlnSpec) -> Result<FactorGraph> {
    spec.validate()?;
    let n = spec.people;
    let w = spec.weights;
    let mut variables = vec![Variable::new(0, 2); spec.num_variables()];
    for t in 0..spec.timesteps {
        for x in 0..n {
            variables[spec.smokes(x, t)] = Variable::new(spec.smokes(x, t), 2).with_label(format!("Smokes({x},{t})"));
            variables[spec.cancer(x, t)] = Variable::new(spec.cancer(x, t), 2).with_label(format!("Cancer({x},{t})"));
        }
        for (x, y) in spec.friend_pairs() {
            let v = spec.friends(x, y, t).expect("pair is grounded");
            variables[v] = Variable::new(v, 2).with_label(format!("Friends({x},{y},{t})"));
        }
    }

    let mut factors = Vec::new();
    let mut push = |args: Vec<usize>, values: Vec<f64>| -> Result<()> {
        let cards = vec![2; args.len()];
        let id = factors.len();
        factors.push(Factor::new(id, args, Potential::new(cards, values)?));
        Ok(())
    };
    for x in 0..n {
        push(vec![spec.smokes(x, 0)], unary_not(w[0]))?;
    }
    for x in 0..n {
        push(vec![spec.cancer(x, 0)], unary_not(w[1]))?;
    }
    for (x, y) in spec.friend_pairs() {
        push(vec![spec.friends(x, y, 0).unwrap()], unary_not(w[2]))?;
    }
    for t in 0..spec.timesteps {
        for x in 0..n {
            push(vec![spec.smokes(x, t), spec.cancer(x, t)], implies(w[3]))?;
        }
        for (x, y) in spec.friend_pairs() {
            let f = spec.friends(x, y, t).unwrap();
            if x == y {
                // Smokes(x) <=> Smokes(x) always holds: a constant factor.
                push(vec![f, spec.smokes(x, t)], vec![w[4].exp(); 4])?;
            } else {
                push(vec![f, spec.smokes(x, t), spec.smokes(y, t)], similar(w[4]))?;
            }
        }
        if t + 1 < spec.timesteps {
            for (x, y) in spec.friend_pairs() {
                push(vec![spec.friends(x, y, t).unwrap(), spec.friends(x, y, t + 1).unwrap()], equivalent(w[5]))?;
            }
            for x in 0..n {
                push(vec![spec.smokes(x, t), spec.smokes(x, t + 1)], equivalent(w[6]))?;
            }
        }
    }
    FactorGraph::new(variables, factors)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSpec {
    /// Fraction of people observed, in `[0, 1]`.
    pub fraction: f64,
    pub friends: usize,
    pub seed: u64,
}

impl EvidenceSpec {
    pub fn new(fraction: f64, seed: u64) -> Self {
        EvidenceSpec {
            fraction,
            friends: 5,
            seed,
        }
    }
}

/// For `ceil(r * N)` random people: one random timestep, a random `Smokes`
/// value and `friends` random other people marked as friends, all at that
/// timestep. `Cancer` is never observed.
pub fn generate_evidence(spec: &DmlnSpec, ev: &EvidenceSpec) -> Result<Evidence> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&ev.fraction) {
        return Err(Error::InvalidConfig(format!("fraction {} not in [0, 1]", ev.fraction)));
    }
    let n = spec.people;
    let observed = (ev.fraction * n as f64).ceil() as usize;
    if observed > 0 && ev.friends > n - 1 {
        return Err(Error::InvalidConfig(format!(
            "{} friends requested but only {} other people exist",
            ev.friends,
            n - 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ev.seed);
    let mut people = sample(&mut rng, n, observed).into_vec();
    people.sort_unstable();
    let mut evidence = Evidence::new();
    for x in people {
        let t = rng.random_range(0..spec.timesteps);
        evidence.observe(spec.smokes(x, t), usize::from(rng.random_bool(0.5)));
        let mut others = sample(&mut rng, n - 1, ev.friends).into_vec();
        others.sort_unstable();
        for o in others {
            let y = if o < x { o } else { o + 1 };
            evidence.observe(spec.friends(x, y, t).unwrap(), 1);
        }
    }
    Ok(evidence)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CancerBelief {
    pub person: usize,
    pub timestep: usize,
    pub ff: f64,
    pub lfoff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub r: f64,
    pub seed: u64,
    pub sweeps: usize,
    pub edges_ff: usize,
    pub edges_lfoff: usize,
    pub messages_ff: u64,
    pub messages_lfoff: u64,
    pub ratio_edges: f64,
    pub ratio_messages: f64,
    pub max_belief_difference: f64,
    pub cancer: Vec<CancerBelief>,
}

/// Largest allowed difference between the two engines' Cancer beliefs.
pub const AGREEMENT_TOLERANCE: f64 = 1e-6;

/// Runs FF and LFOFF for exactly `sweeps` forwards-backwards sweeps each,
/// with no damping.
pub fn run_comparison(spec: &DmlnSpec, ev: &EvidenceSpec, sweeps: usize) -> Result<ComparisonReport> {
    run_comparison_with(spec, ev, sweeps, SignatureMode::default())
}

pub fn run_comparison_with(
    spec: &DmlnSpec,
    ev: &EvidenceSpec,
    sweeps: usize,
    mode: SignatureMode,
) -> Result<ComparisonReport> {
    let graph = ground_dmln(spec)?;
    let evidence = generate_evidence(spec, ev)?;
    let layers = spec.layers();
    let config = BpConfig {
        damping: 0.0,
        max_sweeps: sweeps,
        schedule: Schedule::ForwardsBackwards { layers: layers.clone() },
        ..BpConfig::default()
    };
    config.validate()?;

    let conditioned = graph.apply_evidence(&evidence)?;
    let mut ff = LoopyBp::new(&conditioned, config.clone())?;
    let compressed = compress_with(
        &graph,
        &evidence,
        &LiftOptions {
            mode,
            layers: Some(layers),
        },
    )?;
    let mut lfoff = CountingBp::new(&compressed, config)?;
    for _ in 0..sweeps {
        ff.sweep()?;
        lfoff.sweep()?;
    }
    let ff_beliefs = ff.beliefs()?;
    let lfoff_beliefs = lfoff.beliefs()?;

    let mut cancer = Vec::with_capacity(spec.people * spec.timesteps);
    let mut max_diff = 0.0f64;
    for t in 0..spec.timesteps {
        for x in 0..spec.people {
            let v = spec.cancer(x, t);
            let (a, b) = (ff_beliefs[v][1], lfoff_beliefs[v][1]);
            max_diff = max_diff.max((a - b).abs());
            cancer.push(CancerBelief {
                person: x,
                timestep: t,
                ff: a,
                lfoff: b,
            });
        }
    }
    // NaN counts as a mismatch.
    if max_diff.is_nan() || max_diff > AGREEMENT_TOLERANCE {
        return Err(Error::EngineMismatch(format!(
            "FF and LFOFF Cancer beliefs differ by {max_diff:e}"
        )));
    }
    let (fs, ls) = (ff.stats(), lfoff.stats());
    Ok(ComparisonReport {
        r: ev.fraction,
        seed: ev.seed,
        sweeps,
        edges_ff: fs.edges,
        edges_lfoff: ls.edges,
        messages_ff: fs.messages,
        messages_lfoff: ls.messages,
        ratio_edges: ls.edges as f64 / fs.edges as f64,
        ratio_messages: ls.messages as f64 / fs.messages as f64,
        max_belief_difference: max_diff,
        cancer,
    })
}
