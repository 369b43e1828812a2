//! Loopy sum-product belief propagation on a ground factor graph.
//!
//! Messages are normalized after every update and optionally damped:
//! `new = (1 - d) * fresh + d * old`. A sweep under [`Schedule::Flooding`]
//! recomputes every variable-to-factor message from the current factor
//! messages, then every factor-to-variable message from the new variable
//! messages. Under [`Schedule::ForwardsBackwards`] variables are grouped into
//! layers; the forward pass visits layers in increasing order and the backward
//! pass in decreasing order. Visiting a layer first refreshes all factor
//! messages into its variables, then all messages out of them. Updates within
//! one layer are synchronous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_graph::{Evidence, FactorGraph, Incidence};
use crate::message::{damp, factor_message, mul_pow, normalize, MessageStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    Flooding,
    /// Layer key per ground variable. Distinct keys give a total order.
    ForwardsBackwards { layers: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    /// Fraction of the previous message kept, in `[0, 1)`.
    pub damping: f64,
    /// Stop once the largest message change in a sweep falls below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub schedule: Schedule,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            damping: 0.5,
            tolerance: 1e-8,
            max_sweeps: 1000,
            schedule: Schedule::Flooding,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidConfig(format!("damping {} not in [0, 1)", self.damping)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!("tolerance {} must be positive", self.tolerance)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub sweeps: usize,
    pub messages: u64,
    pub edges: usize,
    pub converged: bool,
    pub residual: f64,
}

/// Groups node indices by layer key, in increasing key order.
pub(crate) fn layer_blocks(layers: &[usize]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..layers.len()).collect();
    order.sort_by_key(|&i| (layers[i], i));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut last = None;
    for i in order {
        if last != Some(layers[i]) {
            blocks.push(Vec::new());
            last = Some(layers[i]);
        }
        blocks.last_mut().unwrap().push(i);
    }
    blocks
}

/// Message-passing state for one BP run over an (evidence-conditioned) graph.
pub struct LoopyBp<'g> {
    graph: &'g FactorGraph,
    config: BpConfig,
    edge_base: Vec<usize>,
    edge_var: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
    blocks: Vec<Vec<usize>>,
    store: MessageStore,
    stats: RunStats,
}

impl<'g> LoopyBp<'g> {
    pub fn new(graph: &'g FactorGraph, config: BpConfig) -> Result<Self> {
        config.validate()?;
        if let Some(f) = graph.find_zero_factor() {
            return Err(Error::Contradiction(format!("factor {f} is zero for every assignment")));
        }
        let mut edge_base = Vec::with_capacity(graph.num_factors());
        let mut edge_var = Vec::with_capacity(graph.num_edges());
        for f in graph.factors() {
            edge_base.push(edge_var.len());
            edge_var.extend_from_slice(&f.args);
        }
        let var_edges: Vec<Vec<usize>> = (0..graph.num_variables())
            .map(|v| {
                graph
                    .adjacency(v)
                    .iter()
                    .map(|inc| edge_base[inc.factor] + inc.position)
                    .collect()
            })
            .collect();
        let blocks = match &config.schedule {
            Schedule::Flooding => Vec::new(),
            Schedule::ForwardsBackwards { layers } => {
                if layers.len() != graph.num_variables() {
                    return Err(Error::InvalidConfig(format!(
                        "{} layer keys for {} variables",
                        layers.len(),
                        graph.num_variables()
                    )));
                }
                layer_blocks(layers)
                    .into_iter()
                    .map(|vars| vars.into_iter().flat_map(|v| var_edges[v].iter().copied()).collect())
                    .collect()
            }
        };
        let store = MessageStore::uniform(edge_var.iter().map(|&v| graph.cardinality(v)));
        let stats = RunStats {
            edges: edge_var.len(),
            ..RunStats::default()
        };
        Ok(LoopyBp {
            graph,
            config,
            edge_base,
            edge_var,
            var_edges,
            blocks,
            store,
            stats,
        })
    }

    pub fn graph(&self) -> &FactorGraph {
        self.graph
    }

    pub fn store(&self) -> &MessageStore {
        &self.store
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn edge_id(&self, inc: Incidence) -> usize {
        self.edge_base[inc.factor] + inc.position
    }

    pub fn set_factor_to_variable(&mut self, inc: Incidence, msg: &[f64]) {
        let e = self.edge_id(inc);
        self.store.set_to_variable(e, msg);
    }

    pub fn set_variable_to_factor(&mut self, inc: Incidence, msg: &[f64]) {
        let e = self.edge_id(inc);
        self.store.set_to_factor(e, msg);
    }

    fn v2f(&self, edge: usize) -> Result<Vec<f64>> {
        let var = self.edge_var[edge];
        let mut out = vec![1.0; self.graph.cardinality(var)];
        for &other in &self.var_edges[var] {
            if other != edge {
                mul_pow(&mut out, self.store.to_variable(other), 1.0);
            }
        }
        if !normalize(&mut out) {
            return Err(Error::Contradiction(format!(
                "incoming messages to variable {var} annihilate every state"
            )));
        }
        Ok(out)
    }

    fn f2v(&self, edge: usize) -> Result<Vec<f64>> {
        let f = self.edge_factor(edge);
        let base = self.edge_base[f];
        let factor = &self.graph.factors()[f];
        let incoming: Vec<&[f64]> = (0..factor.arity()).map(|q| self.store.to_factor(base + q)).collect();
        let mut out = factor_message(&factor.table, &incoming, edge - base);
        if !normalize(&mut out) {
            return Err(Error::Contradiction(format!(
                "factor {f} sends an all-zero message to variable {}",
                self.edge_var[edge]
            )));
        }
        Ok(out)
    }

    fn edge_factor(&self, edge: usize) -> usize {
        self.edge_base.partition_point(|&b| b <= edge) - 1
    }

    /// Normalized variable-to-factor message for the incidence `inc` of `var`.
    pub fn variable_to_factor_message(&self, var: usize, inc: Incidence) -> Result<Vec<f64>> {
        let e = self.checked_edge(var, inc)?;
        self.v2f(e)
    }

    /// Normalized factor-to-variable message along `inc` to `var`.
    pub fn factor_to_variable_message(&self, inc: Incidence, var: usize) -> Result<Vec<f64>> {
        let e = self.checked_edge(var, inc)?;
        self.f2v(e)
    }

    fn checked_edge(&self, var: usize, inc: Incidence) -> Result<usize> {
        match self.graph.factors().get(inc.factor) {
            Some(f) if f.args.get(inc.position) == Some(&var) => Ok(self.edge_id(inc)),
            _ => Err(Error::UnknownNode {
                kind: "edge",
                id: inc.factor,
            }),
        }
    }

    fn update_to_variable(&mut self, edges: &[usize]) -> Result<()> {
        let fresh = edges.iter().map(|&e| self.f2v(e)).collect::<Result<Vec<_>>>()?;
        for (&e, mut msg) in edges.iter().zip(fresh) {
            damp(&mut msg, self.store.to_variable(e), self.config.damping);
            self.store.set_to_variable(e, &msg);
        }
        self.stats.messages += edges.len() as u64;
        Ok(())
    }

    fn update_to_factor(&mut self, edges: &[usize]) -> Result<()> {
        let fresh = edges.iter().map(|&e| self.v2f(e)).collect::<Result<Vec<_>>>()?;
        for (&e, mut msg) in edges.iter().zip(fresh) {
            damp(&mut msg, self.store.to_factor(e), self.config.damping);
            self.store.set_to_factor(e, &msg);
        }
        self.stats.messages += edges.len() as u64;
        Ok(())
    }

    fn fb_pass(&mut self, blocks: &[Vec<usize>]) -> Result<()> {
        for block in blocks.iter().chain(blocks.iter().rev()) {
            self.update_to_variable(block)?;
            self.update_to_factor(block)?;
        }
        Ok(())
    }

    /// One sweep of the configured schedule. Returns the residual.
    pub fn sweep(&mut self) -> Result<f64> {
        let before = self.store.clone();
        match self.config.schedule {
            Schedule::Flooding => {
                let all: Vec<usize> = (0..self.edge_var.len()).collect();
                self.update_to_factor(&all)?;
                self.update_to_variable(&all)?;
            }
            Schedule::ForwardsBackwards { .. } => {
                let blocks = std::mem::take(&mut self.blocks);
                let result = self.fb_pass(&blocks);
                self.blocks = blocks;
                result?;
            }
        }
        let residual = self.store.max_abs_diff(&before);
        self.stats.sweeps += 1;
        self.stats.residual = residual;
        self.stats.converged = residual < self.config.tolerance;
        Ok(residual)
    }

    /// Normalized product of all incoming factor messages, per variable.
    pub fn beliefs(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.graph.num_variables())
            .map(|v| {
                let mut b = vec![1.0; self.graph.cardinality(v)];
                for &e in &self.var_edges[v] {
                    mul_pow(&mut b, self.store.to_variable(e), 1.0);
                }
                if normalize(&mut b) {
                    Ok(b)
                } else {
                    Err(Error::Contradiction(format!("belief of variable {v} is zero everywhere")))
                }
            })
            .collect()
    }

    /// Sweeps until convergence or the sweep cap.
    pub fn run(mut self) -> Result<(Vec<Vec<f64>>, RunStats)> {
        while self.stats.sweeps < self.config.max_sweeps {
            self.sweep()?;
            if self.stats.converged {
                break;
            }
        }
        let beliefs = self.beliefs()?;
        Ok((beliefs, self.stats))
    }
}

/// Conditions `graph` on `evidence` and runs BP to convergence.
pub fn run_bp(graph: &FactorGraph, evidence: &Evidence, config: &BpConfig) -> Result<(Vec<Vec<f64>>, RunStats)> {
    let conditioned = graph.apply_evidence(evidence)?;
    let (mut beliefs, stats) = LoopyBp::new(&conditioned, config.clone())?.run()?;
    // Evidence on a variable without factors never reaches a message.
    for (&v, &s) in evidence.iter() {
        if conditioned.adjacency(v).is_empty() {
            beliefs[v] = point_mass(beliefs[v].len(), s);
        }
    }
    Ok((beliefs, stats))
}

pub(crate) fn point_mass(card: usize, state: usize) -> Vec<f64> {
    let mut b = vec![0.0; card];
    b[state] = 1.0;
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn variable_message_multiplies_other_inputs() {
        // X (var 0) with factors f (0), g (1), h (2).
        let g = FactorGraph::from_tables(
            &[2],
            vec![(vec![0], vec![1.0, 1.0]), (vec![0], vec![1.0, 1.0]), (vec![0], vec![1.0, 1.0])],
        )
        .unwrap();
        let mut bp = LoopyBp::new(&g, BpConfig::default()).unwrap();
        bp.set_factor_to_variable(Incidence { factor: 1, position: 0 }, &[0.2, 0.8]);
        bp.set_factor_to_variable(Incidence { factor: 2, position: 0 }, &[0.5, 0.5]);
        let m = bp.variable_to_factor_message(0, Incidence { factor: 0, position: 0 }).unwrap();
        assert!(close(&m, &[0.2, 0.8], 1e-15));
    }

    #[test]
    fn lone_variable_sends_uniform() {
        let g = FactorGraph::from_tables(&[2], vec![(vec![0], vec![3.0, 1.0])]).unwrap();
        let bp = LoopyBp::new(&g, BpConfig::default()).unwrap();
        let m = bp.variable_to_factor_message(0, Incidence { factor: 0, position: 0 }).unwrap();
        assert_eq!(m, vec![0.5, 0.5]);
    }

    #[test]
    fn annihilating_inputs_are_a_contradiction() {
        let g = FactorGraph::from_tables(
            &[2],
            vec![(vec![0], vec![1.0, 1.0]), (vec![0], vec![1.0, 1.0]), (vec![0], vec![1.0, 1.0])],
        )
        .unwrap();
        let mut bp = LoopyBp::new(&g, BpConfig::default()).unwrap();
        bp.set_factor_to_variable(Incidence { factor: 1, position: 0 }, &[1.0, 0.0]);
        bp.set_factor_to_variable(Incidence { factor: 2, position: 0 }, &[0.0, 1.0]);
        let err = bp.variable_to_factor_message(0, Incidence { factor: 0, position: 0 });
        assert!(matches!(err, Err(Error::Contradiction(_))));
    }

    #[test]
    fn factor_message_sums_out_other_argument() {
        let g = FactorGraph::from_tables(&[2, 2], vec![(vec![0, 1], vec![1.0, 2.0, 3.0, 4.0])]).unwrap();
        let mut bp = LoopyBp::new(&g, BpConfig::default()).unwrap();
        let to_x = Incidence { factor: 0, position: 0 };
        let m = bp.factor_to_variable_message(to_x, 0).unwrap();
        assert!(close(&m, &[0.3, 0.7], 1e-15));
        // Y deterministic at state 0 selects the y = 0 column: [1, 3] / 4.
        bp.set_variable_to_factor(Incidence { factor: 0, position: 1 }, &[1.0, 0.0]);
        let m = bp.factor_to_variable_message(to_x, 0).unwrap();
        assert!(close(&m, &[0.25, 0.75], 1e-15));
    }

    #[test]
    fn unary_factor_message_and_belief() {
        let g = FactorGraph::from_tables(&[2], vec![(vec![0], vec![3.0, 1.0])]).unwrap();
        let bp = LoopyBp::new(&g, BpConfig::default()).unwrap();
        let m = bp.factor_to_variable_message(Incidence { factor: 0, position: 0 }, 0).unwrap();
        assert_eq!(m, vec![0.75, 0.25]);

        let cfg = BpConfig {
            damping: 0.0,
            ..BpConfig::default()
        };
        let (beliefs, stats) = run_bp(&g, &Evidence::new(), &cfg).unwrap();
        assert!(close(&beliefs[0], &[0.75, 0.25], 1e-15));
        // The first sweep moves the message, the second confirms the fixed point.
        assert_eq!(stats.sweeps, 2);
        assert_eq!(stats.messages, 2 * 2);
    }

    #[test]
    fn chain_beliefs_match_enumeration() {
        // A - f1 - B - f2 - C; marginals by enumerating the 8 joint states.
        let f1 = vec![1.0, 2.0, 3.0, 0.5];
        let f2 = vec![2.0, 1.0, 0.25, 4.0];
        let g = FactorGraph::from_tables(&[2, 2, 2], vec![(vec![0, 1], f1.clone()), (vec![1, 2], f2.clone())]).unwrap();
        let mut marg = vec![vec![0.0; 2]; 3];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let p = f1[a * 2 + b] * f2[b * 2 + c];
                    marg[0][a] += p;
                    marg[1][b] += p;
                    marg[2][c] += p;
                }
            }
        }
        for m in &mut marg {
            normalize(m);
        }
        let (beliefs, stats) = run_bp(&g, &Evidence::new(), &BpConfig::default()).unwrap();
        assert!(stats.converged);
        for (b, m) in beliefs.iter().zip(&marg) {
            assert!(close(b, m, 1e-8), "{b:?} vs {m:?}");
        }
    }

    #[test]
    fn symmetric_chain_with_evidence_on_middle() {
        let t = vec![2.0, 1.0, 1.0, 2.0];
        let g = FactorGraph::from_tables(&[2, 2, 2], vec![(vec![0, 1], t.clone()), (vec![1, 2], t)]).unwrap();
        let e: Evidence = [(1, 1)].into_iter().collect();
        let (beliefs, _) = run_bp(&g, &e, &BpConfig::default()).unwrap();
        assert_eq!(beliefs[0], beliefs[2]);
        // enumeration: P(A | B=1) = [1, 2] / 3
        assert!(close(&beliefs[0], &[1.0 / 3.0, 2.0 / 3.0], 1e-8));
        assert!(close(&beliefs[1], &[0.0, 1.0], 1e-12));
    }

    #[test]
    fn contradictory_evidence_fails_at_start() {
        let g = FactorGraph::from_tables(&[2], vec![(vec![0], vec![3.0, 0.0])]).unwrap();
        let e: Evidence = [(0, 1)].into_iter().collect();
        assert!(matches!(run_bp(&g, &e, &BpConfig::default()), Err(Error::Contradiction(_))));
    }

    #[test]
    fn flooding_counts_two_messages_per_edge() {
        let t = vec![2.0, 1.0, 1.0, 2.0];
        let g = FactorGraph::from_tables(&[2, 2, 2], vec![(vec![0, 1], t.clone()), (vec![1, 2], t)]).unwrap();
        let (_, stats) = run_bp(&g, &Evidence::new(), &BpConfig::default()).unwrap();
        assert_eq!(stats.messages, stats.sweeps as u64 * 2 * stats.edges as u64);
    }

    #[test]
    fn forwards_backwards_is_exact_on_a_chain_in_one_sweep() {
        let f1 = vec![1.0, 2.0, 3.0, 0.5];
        let f2 = vec![2.0, 1.0, 0.25, 4.0];
        let g = FactorGraph::from_tables(&[2, 2, 2], vec![(vec![0, 1], f1), (vec![1, 2], f2)]).unwrap();
        let exact = run_bp(&g, &Evidence::new(), &BpConfig::default()).unwrap().0;
        let cfg = BpConfig {
            damping: 0.0,
            max_sweeps: 1,
            schedule: Schedule::ForwardsBackwards { layers: vec![0, 1, 2] },
            ..BpConfig::default()
        };
        let (fb, stats) = run_bp(&g, &Evidence::new(), &cfg).unwrap();
        assert_eq!(stats.sweeps, 1);
        assert_eq!(stats.messages, 4 * 4);
        for (a, b) in fb.iter().zip(&exact) {
            assert!(close(a, b, 1e-8));
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            BpConfig { damping: 1.0, ..BpConfig::default() },
            BpConfig { tolerance: 0.0, ..BpConfig::default() },
            BpConfig { max_sweeps: 0, ..BpConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        let g = FactorGraph::from_tables(&[2], vec![(vec![0], vec![1.0, 1.0])]).unwrap();
        let cfg = BpConfig {
            schedule: Schedule::ForwardsBackwards { layers: vec![] },
            ..BpConfig::default()
        };
        assert!(LoopyBp::new(&g, cfg).is_err());
    }

    #[test]
    fn isolated_observed_variable_is_a_point_mass() {
        let g = FactorGraph::from_tables(&[2, 3], vec![(vec![0], vec![3.0, 1.0])]).unwrap();
        let mut ev = Evidence::new();
        ev.observe(1, 2);
        let (beliefs, _) = run_bp(&g, &ev, &BpConfig::default()).unwrap();
        assert_eq!(beliefs[1], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn isolated_variable_is_uniform() {
        let g = FactorGraph::from_tables(&[2, 3], vec![(vec![0], vec![3.0, 1.0])]).unwrap();
        let (beliefs, _) = run_bp(&g, &Evidence::new(), &BpConfig::default()).unwrap();
        assert!(close(&beliefs[1], &[1.0 / 3.0; 3], 1e-15));
    }
}
