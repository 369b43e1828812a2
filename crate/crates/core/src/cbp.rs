//! Counting belief propagation: BP on a [`CompressedFactorGraph`].
//!
//! A clusternode's message along an edge with count `c` is the product of
//! every incoming clusterfactor message raised to its count, with the
//! exponent of the target edge lowered to `c - 1`. Clusterfactor messages
//! are ordinary sum-product messages over the representative potential,
//! reading at each argument position the message carried by the edge that
//! position is wired to. Beliefs raise every incoming message to its count.
//!
//! Schedules and damping mirror [`crate::bp`], so a CBP sweep reproduces a
//! ground BP sweep message for message.

use crate::bp::{layer_blocks, point_mass, BpConfig, RunStats, Schedule};
use crate::error::{Error, Result};
use crate::lifting::CompressedFactorGraph;
use crate::message::{damp, factor_message, mul_pow, normalize, MessageStore};

pub type ClusterMessageStore = MessageStore;

pub struct CountingBp<'c> {
    graph: &'c CompressedFactorGraph,
    config: BpConfig,
    blocks: Vec<Vec<usize>>,
    store: ClusterMessageStore,
    stats: RunStats,
}

impl<'c> CountingBp<'c> {
    pub fn new(graph: &'c CompressedFactorGraph, config: BpConfig) -> Result<Self> {
        config.validate()?;
        if let Some(f) = graph.factors.iter().position(|f| f.potential.is_all_zero()) {
            return Err(Error::Contradiction(format!(
                "clusterfactor {f} is zero for every assignment"
            )));
        }
        let blocks = match &config.schedule {
            Schedule::Flooding => Vec::new(),
            Schedule::ForwardsBackwards { layers } => {
                if layers.len() != graph.ground_variables {
                    return Err(Error::InvalidConfig(format!(
                        "{} layer keys for {} variables",
                        layers.len(),
                        graph.ground_variables
                    )));
                }
                let mut node_layers = Vec::with_capacity(graph.nodes.len());
                for (i, node) in graph.nodes.iter().enumerate() {
                    let layer = layers[node.representative];
                    if node.members.iter().any(|&m| layers[m] != layer) {
                        return Err(Error::ScheduleNotLiftable { cluster: i });
                    }
                    node_layers.push(layer);
                }
                layer_blocks(&node_layers)
                    .into_iter()
                    .map(|nodes| nodes.into_iter().flat_map(|n| graph.node_edges(n).iter().copied()).collect())
                    .collect()
            }
        };
        let store = MessageStore::uniform(graph.edges.iter().map(|e| graph.nodes[e.node].cardinality));
        let stats = RunStats {
            edges: graph.num_edges(),
            ..RunStats::default()
        };
        Ok(CountingBp {
            graph,
            config,
            blocks,
            store,
            stats,
        })
    }

    pub fn store(&self) -> &ClusterMessageStore {
        &self.store
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn set_factor_to_node(&mut self, edge: usize, msg: &[f64]) {
        self.store.set_to_variable(edge, msg);
    }

    pub fn set_node_to_factor(&mut self, edge: usize, msg: &[f64]) {
        self.store.set_to_factor(edge, msg);
    }

    /// Normalized clusternode-to-clusterfactor message along `edge`.
    pub fn cluster_variable_to_factor_message(&self, edge: usize) -> Result<Vec<f64>> {
        let node = self.graph.edges[edge].node;
        let mut out = vec![1.0; self.graph.nodes[node].cardinality];
        for &e in self.graph.node_edges(node) {
            let count = self.graph.edges[e].count as f64;
            let exponent = if e == edge { count - 1.0 } else { count };
            mul_pow(&mut out, self.store.to_variable(e), exponent);
        }
        if !normalize(&mut out) {
            return Err(Error::Contradiction(format!(
                "incoming messages to clusternode {node} annihilate every state"
            )));
        }
        Ok(out)
    }

    /// Normalized clusterfactor-to-clusternode message along `edge`.
    pub fn cluster_factor_to_variable_message(&self, edge: usize) -> Result<Vec<f64>> {
        let e = &self.graph.edges[edge];
        let factor = &self.graph.factors[e.factor];
        let incoming: Vec<&[f64]> = factor.wiring.iter().map(|&w| self.store.to_factor(w)).collect();
        let mut out = factor_message(&factor.potential, &incoming, e.positions[0]);
        if !normalize(&mut out) {
            return Err(Error::Contradiction(format!(
                "clusterfactor {} sends an all-zero message to clusternode {}",
                e.factor, e.node
            )));
        }
        Ok(out)
    }

    fn update_to_variable(&mut self, edges: &[usize]) -> Result<()> {
        let fresh = edges
            .iter()
            .map(|&e| self.cluster_factor_to_variable_message(e))
            .collect::<Result<Vec<_>>>()?;
        for (&e, mut msg) in edges.iter().zip(fresh) {
            damp(&mut msg, self.store.to_variable(e), self.config.damping);
            self.store.set_to_variable(e, &msg);
        }
        self.stats.messages += edges.len() as u64;
        Ok(())
    }

    fn update_to_factor(&mut self, edges: &[usize]) -> Result<()> {
        let fresh = edges
            .iter()
            .map(|&e| self.cluster_variable_to_factor_message(e))
            .collect::<Result<Vec<_>>>()?;
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

    pub fn sweep(&mut self) -> Result<f64> {
        let before = self.store.clone();
        match self.config.schedule {
            Schedule::Flooding => {
                let all: Vec<usize> = (0..self.graph.num_edges()).collect();
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

    /// Normalized belief per clusternode.
    pub fn cluster_beliefs(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.graph.nodes.len())
            .map(|n| {
                let mut b = vec![1.0; self.graph.nodes[n].cardinality];
                for &e in self.graph.node_edges(n) {
                    mul_pow(&mut b, self.store.to_variable(e), self.graph.edges[e].count as f64);
                }
                if normalize(&mut b) {
                    Ok(b)
                } else {
                    Err(Error::Contradiction(format!("belief of clusternode {n} is zero everywhere")))
                }
            })
            .collect()
    }

    /// Beliefs expanded to ground variables.
    pub fn beliefs(&self) -> Result<Vec<Vec<f64>>> {
        let cluster = self.cluster_beliefs()?;
        Ok((0..self.graph.ground_variables)
            .map(|v| cluster[self.graph.cluster_of(v)].clone())
            .collect())
    }

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

/// Runs counting BP to convergence; beliefs are keyed by ground variable.
pub fn run_cbp(graph: &CompressedFactorGraph, config: &BpConfig) -> Result<(Vec<Vec<f64>>, RunStats)> {
    let (mut beliefs, stats) = CountingBp::new(graph, config.clone())?.run()?;
    // Evidence on a variable without factors never reaches a message.
    for (n, node) in graph.nodes.iter().enumerate() {
        if let (Some(s), true) = (node.observed, graph.node_edges(n).is_empty()) {
            for &v in &node.members {
                beliefs[v] = point_mass(node.cardinality, s);
            }
        }
    }
    Ok((beliefs, stats))
}
