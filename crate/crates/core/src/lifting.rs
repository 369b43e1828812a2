//! Color passing: compresses a factor graph into clusternodes and
//! clusterfactors that send and receive identical BP messages.
//!
//! Variables start colored by `(cardinality, observed state, layer)` and
//! factors by a key of their evidence-conditioned table. Each round, a
//! factor's signature is the colors of its arguments followed by its own
//! color; factors with equal signatures share a new color. A variable's
//! signature is the sorted multiset of `(factor color, position tag)` over its
//! incidences, followed by its own color. Rounds repeat until the number of
//! groups stops growing.
//!
//! Position tags depend on [`SignatureMode`]:
//!
//! * `Untagged`: no tags in variable signatures.
//! * `Positional`: the tag is the argument position.
//! * `Commutative`: tables are first brought into a canonical argument order
//!   (clauses: positive literals first; small tables: lexicographically least
//!   permutation). Positions whose transposition leaves the canonical table
//!   unchanged form one class and share a tag; argument colors inside a class
//!   are sorted in the factor signature.
//!
//! The compressed graph stores, per clusterfactor, the edges
//! `(clusterfactor, positions, clusternode)` where `positions` are the
//! representative's argument positions of one tag class wired to that
//! clusternode, and a count: how many ground edges of the clusterfactor at
//! those positions reach each single member of the clusternode.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_graph::{Evidence, FactorGraph, Potential};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignatureMode {
    Untagged,
    Positional,
    #[default]
    Commutative,
}

impl std::str::FromStr for SignatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "untagged" => Ok(SignatureMode::Untagged),
            "positional" => Ok(SignatureMode::Positional),
            "commutative" => Ok(SignatureMode::Commutative),
            other => Err(Error::InvalidConfig(format!("unknown signature mode `{other}`"))),
        }
    }
}

/// Canonical view of one factor's table.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct FactorShape {
    /// Tag class per raw argument position.
    pub tags: Vec<u32>,
    /// Exact encoding of the canonical table.
    pub key: Vec<u64>,
}

fn table_key(table: &Potential) -> Vec<u64> {
    let mut key = Vec::with_capacity(1 + table.arity() + table.len());
    key.push(table.arity() as u64);
    key.extend(table.cardinalities().iter().map(|&c| c as u64));
    // -0.0 and 0.0 are the same potential value
    key.extend(table.values().iter().map(|&v| if v == 0.0 { 0 } else { v.to_bits() }));
    key
}

/// Falsifying assignment when `table` is a disjunction over binary arguments:
/// exactly one zero entry and every other entry equal.
fn clause_polarity(table: &Potential) -> Option<Vec<usize>> {
    if table.cardinalities().iter().any(|&c| c != 2) {
        return None;
    }
    let mut zero = None;
    let mut positive = None;
    for (i, &v) in table.values().iter().enumerate() {
        if v == 0.0 {
            if zero.replace(i).is_some() {
                return None;
            }
        } else if *positive.get_or_insert(v) != v {
            return None;
        }
    }
    let zero = zero?;
    positive?;
    let n = table.arity();
    Some((0..n).map(|p| (zero >> (n - 1 - p)) & 1).collect())
}

fn cmp_tables(a: &Potential, b: &Potential) -> std::cmp::Ordering {
    a.cardinalities().cmp(b.cardinalities()).then_with(|| {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for slot in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(slot, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

const LEXMIN_MAX_ARITY: usize = 4;
const SYMMETRY_MAX_ENTRIES: usize = 1 << 16;

/// Raw positions listed in canonical order.
fn canonical_order(table: &Potential) -> Vec<usize> {
    let n = table.arity();
    if let Some(falsifying) = clause_polarity(table) {
        // positive literals (falsified by 0) first
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&p| falsifying[p]);
        return order;
    }
    if n <= LEXMIN_MAX_ARITY && n > 1 {
        let mut best: Option<(Vec<usize>, Potential)> = None;
        for perm in permutations(n) {
            let candidate = table.permuted(&perm);
            let better = match &best {
                None => true,
                Some((_, b)) => cmp_tables(&candidate, b).is_lt(),
            };
            if better {
                best = Some((perm, candidate));
            }
        }
        return best.map(|(p, _)| p).unwrap_or_default();
    }
    (0..n).collect()
}

/// Classes of positions whose pairwise transposition is a symmetry of `table`.
fn transposition_classes(table: &Potential) -> Vec<usize> {
    let n = table.arity();
    let mut class: Vec<usize> = (0..n).collect();
    if table.len() > SYMMETRY_MAX_ENTRIES {
        return class;
    }
    for i in 0..n {
        if class[i] != i {
            continue;
        }
        #[allow(clippy::needless_range_loop)]
        for j in i + 1..n {
            if class[j] != j || table.cardinalities()[i] != table.cardinalities()[j] {
                continue;
            }
            let mut swap: Vec<usize> = (0..n).collect();
            swap.swap(i, j);
            if table.permuted(&swap).values() == table.values() {
                class[j] = i;
            }
        }
    }
    class
}

pub(crate) fn factor_shape(table: &Potential, mode: SignatureMode) -> FactorShape {
    match mode {
        SignatureMode::Untagged | SignatureMode::Positional => FactorShape {
            tags: (0..table.arity() as u32).collect(),
            key: table_key(table),
        },
        SignatureMode::Commutative => {
            let order = canonical_order(table);
            let canonical = table.permuted(&order);
            let class = transposition_classes(&canonical);
            // number classes by their smallest canonical position
            let mut class_id = vec![u32::MAX; order.len()];
            let mut next = 0;
            for q in 0..order.len() {
                if class_id[class[q]] == u32::MAX {
                    class_id[class[q]] = next;
                    next += 1;
                }
            }
            let mut tags = vec![0; order.len()];
            for (q, &raw) in order.iter().enumerate() {
                tags[raw] = class_id[class[q]];
            }
            FactorShape {
                tags,
                key: table_key(&canonical),
            }
        }
    }
}

/// Variable and factor colors; each is dense from 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    pub variables: Vec<u32>,
    pub factors: Vec<u32>,
}

impl Coloring {
    pub fn num_variable_colors(&self) -> usize {
        count_colors(&self.variables)
    }

    pub fn num_factor_colors(&self) -> usize {
        count_colors(&self.factors)
    }
}

fn count_colors(colors: &[u32]) -> usize {
    colors.iter().max().map_or(0, |&m| m as usize + 1)
}

/// Assigns dense colors to `keys` in lexicographic order of the keys.
fn recolor<K: Ord>(keys: Vec<K>) -> Vec<u32> {
    let mut sorted: Vec<(K, usize)> = keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
    sorted.sort();
    let mut out = vec![0; sorted.len()];
    let mut color = 0;
    for i in 0..sorted.len() {
        if i > 0 && sorted[i].0 != sorted[i - 1].0 {
            color += 1;
        }
        out[sorted[i].1] = color;
    }
    out
}

/// Per-factor (color, tag, count) triples plus the node's previous color.
type VariableSignature = (Vec<(u32, u32, u32)>, u32);

/// Options for [`compress_with`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LiftOptions {
    pub mode: SignatureMode,
    /// Per-variable layer keys kept apart from the start, so clusternodes
    /// never mix layers of a forwards-backwards schedule.
    pub layers: Option<Vec<usize>>,
}

struct Refiner<'g> {
    graph: &'g FactorGraph,
    mode: SignatureMode,
    tags: Vec<Vec<u32>>,
}

impl<'g> Refiner<'g> {
    fn new(graph: &'g FactorGraph, mode: SignatureMode) -> Self {
        let tags = graph
            .factors()
            .iter()
            .map(|f| factor_shape(&f.table, mode).tags)
            .collect();
        Refiner { graph, mode, tags }
    }

    fn refine(&self, colors: &Coloring) -> Coloring {
        let factor_sigs: Vec<Vec<u32>> = self
            .graph
            .factors()
            .iter()
            .map(|f| {
                let tags = &self.tags[f.id];
                let mut entries: Vec<(u32, u32)> = f
                    .args
                    .iter()
                    .zip(tags)
                    .map(|(&a, &t)| (t, colors.variables[a]))
                    .collect();
                entries.sort_unstable();
                let mut sig: Vec<u32> = entries.into_iter().map(|(_, c)| c).collect();
                sig.push(colors.factors[f.id]);
                sig
            })
            .collect();
        let factors = recolor(factor_sigs);

        let var_sigs: Vec<(Vec<(u32, u32)>, u32)> = (0..self.graph.num_variables())
            .map(|v| {
                let mut entries: Vec<(u32, u32)> = self
                    .graph
                    .adjacency(v)
                    .iter()
                    .map(|inc| {
                        let tag = match self.mode {
                            SignatureMode::Untagged => 0,
                            _ => self.tags[inc.factor][inc.position],
                        };
                        (factors[inc.factor], tag)
                    })
                    .collect();
                entries.sort_unstable();
                (entries, colors.variables[v])
            })
            .collect();
        let variables = recolor(var_sigs);
        Coloring { variables, factors }
    }
}

fn initial_coloring(conditioned: &FactorGraph, evidence: &Evidence, options: &LiftOptions) -> Result<Coloring> {
    if let Some(layers) = &options.layers {
        if layers.len() != conditioned.num_variables() {
            return Err(Error::InvalidConfig(format!(
                "{} layer keys for {} variables",
                layers.len(),
                conditioned.num_variables()
            )));
        }
    }
    let var_keys: Vec<(usize, Option<usize>, usize)> = conditioned
        .variables()
        .iter()
        .map(|v| {
            let layer = options.layers.as_ref().map_or(0, |l| l[v.id]);
            (v.cardinality, evidence.get(v.id), layer)
        })
        .collect();
    let factor_keys: Vec<Vec<u64>> = conditioned
        .factors()
        .iter()
        .map(|f| factor_shape(&f.table, options.mode).key)
        .collect();
    Ok(Coloring {
        variables: recolor(var_keys),
        factors: recolor(factor_keys),
    })
}

/// Colors before any refinement: variables by observed state, factors by
/// their evidence-conditioned table.
pub fn initial_colors(graph: &FactorGraph, evidence: &Evidence, mode: SignatureMode) -> Result<Coloring> {
    let conditioned = graph.apply_evidence(evidence)?;
    initial_coloring(
        &conditioned,
        evidence,
        &LiftOptions {
            mode,
            layers: None,
        },
    )
}

/// One color-passing round over an evidence-conditioned graph.
pub fn refine_once(conditioned: &FactorGraph, colors: &Coloring, mode: SignatureMode) -> Coloring {
    Refiner::new(conditioned, mode).refine(colors)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub color: u32,
    pub members: Vec<usize>,
    pub representative: usize,
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterFactor {
    pub color: u32,
    pub members: Vec<usize>,
    pub representative: usize,
    pub potential: Potential,
    /// Edge index for each argument position of the representative.
    pub wiring: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterEdge {
    pub factor: usize,
    pub positions: Vec<usize>,
    pub node: usize,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressedFactorGraph {
    pub mode: SignatureMode,
    pub nodes: Vec<ClusterNode>,
    pub factors: Vec<ClusterFactor>,
    pub edges: Vec<ClusterEdge>,
    /// Color-passing rounds run until the partition was stable.
    pub rounds: usize,
    pub ground_variables: usize,
    pub ground_factors: usize,
    pub ground_edges: usize,
    #[serde(skip)]
    node_edges: Vec<Vec<usize>>,
    #[serde(skip)]
    variable_cluster: Vec<usize>,
}

impl CompressedFactorGraph {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edge ids incident to a clusternode.
    pub fn node_edges(&self, node: usize) -> &[usize] {
        &self.node_edges[node]
    }

    /// Clusternode containing a ground variable.
    pub fn cluster_of(&self, var: usize) -> usize {
        self.variable_cluster[var]
    }

    fn index(&mut self) {
        self.node_edges = vec![Vec::new(); self.nodes.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            self.node_edges[edge.node].push(e);
        }
        self.variable_cluster = vec![0; self.ground_variables];
        for (i, n) in self.nodes.iter().enumerate() {
            for &m in &n.members {
                self.variable_cluster[m] = i;
            }
        }
    }

    /// Runs color passing on the compressed structure itself, treating each
    /// clusternode and clusterfactor as a single node and each edge as
    /// `count` parallel ground edges. Members of the result index into
    /// `self.nodes` and `self.factors`.
    pub fn recompress(&self) -> Result<CompressedFactorGraph> {
        let shapes: Vec<FactorShape> = self
            .factors
            .iter()
            .map(|f| factor_shape(&f.potential, self.mode))
            .collect();
        let mut colors = Coloring {
            variables: recolor(
                self.nodes
                    .iter()
                    .map(|n| (n.cardinality, n.observed, n.layer.unwrap_or(0)))
                    .collect(),
            ),
            factors: recolor(shapes.iter().map(|s| s.key.clone()).collect()),
        };
        let mut stable = self.nodes.is_empty() && self.factors.is_empty();
        let mut rounds = 0;
        while !stable {
            rounds += 1;
            let factor_sigs: Vec<Vec<u32>> = self
                .factors
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let mut entries: Vec<(u32, u32)> = f
                        .wiring
                        .iter()
                        .enumerate()
                        .map(|(q, &e)| (shapes[i].tags[q], colors.variables[self.edges[e].node]))
                        .collect();
                    entries.sort_unstable();
                    let mut sig: Vec<u32> = entries.into_iter().map(|(_, c)| c).collect();
                    sig.push(colors.factors[i]);
                    sig
                })
                .collect();
            let factors = recolor(factor_sigs);
            let var_sigs: Vec<VariableSignature> = (0..self.nodes.len())
                .map(|n| {
                    let mut agg: BTreeMap<(u32, u32), u32> = BTreeMap::new();
                    for &e in &self.node_edges[n] {
                        let edge = &self.edges[e];
                        let tag = match self.mode {
                            SignatureMode::Untagged => 0,
                            _ => shapes[edge.factor].tags[edge.positions[0]],
                        };
                        *agg.entry((factors[edge.factor], tag)).or_default() += edge.count;
                    }
                    (agg.into_iter().map(|((f, t), c)| (f, t, c)).collect(), colors.variables[n])
                })
                .collect();
            let variables = recolor(var_sigs);
            let next = Coloring { variables, factors };
            stable = next.num_variable_colors() == colors.num_variable_colors()
                && next.num_factor_colors() == colors.num_factor_colors();
            colors = next;
        }

        // Assemble the quotient of the quotient.
        let nodes = group(&colors.variables)
            .into_iter()
            .enumerate()
            .map(|(c, members)| {
                let rep = &self.nodes[members[0]];
                ClusterNode {
                    color: c as u32,
                    representative: members[0],
                    cardinality: rep.cardinality,
                    observed: rep.observed,
                    layer: rep.layer,
                    members,
                }
            })
            .collect::<Vec<_>>();
        let mut factors = Vec::new();
        let mut edges: Vec<ClusterEdge> = Vec::new();
        for (c, members) in group(&colors.factors).into_iter().enumerate() {
            let rep_idx = members[0];
            let rep = &self.factors[rep_idx];
            let tags = &shapes[rep_idx].tags;
            let mut by_key: BTreeMap<(u32, u32), usize> = BTreeMap::new();
            let mut wiring = Vec::with_capacity(rep.wiring.len());
            for (q, &e) in rep.wiring.iter().enumerate() {
                let node = colors.variables[self.edges[e].node];
                let idx = *by_key.entry((tags[q], node)).or_insert_with(|| {
                    edges.push(ClusterEdge {
                        factor: c,
                        positions: Vec::new(),
                        node: node as usize,
                        count: 0,
                    });
                    edges.len() - 1
                });
                edges[idx].positions.push(q);
                wiring.push(idx);
            }
            // Counts seen from one member of each new clusternode: old edges
            // into the representative old node, aggregated per new edge.
            for &idx in by_key.values() {
                let edge = &edges[idx];
                let tag = tags[edge.positions[0]];
                let rep_node = nodes[edge.node].representative;
                let count: u32 = self.node_edges[rep_node]
                    .iter()
                    .map(|&e| &self.edges[e])
                    .filter(|old| {
                        colors.factors[old.factor] as usize == c
                            && shapes[old.factor].tags[old.positions[0]] == tag
                    })
                    .map(|old| old.count)
                    .sum();
                edges[idx].count = count;
            }
            factors.push(ClusterFactor {
                color: c as u32,
                representative: rep_idx,
                potential: rep.potential.clone(),
                wiring,
                members,
            });
        }
        let mut out = CompressedFactorGraph {
            mode: self.mode,
            nodes,
            factors,
            edges,
            rounds,
            ground_variables: self.nodes.len(),
            ground_factors: self.factors.len(),
            ground_edges: self.edges.len(),
            node_edges: Vec::new(),
            variable_cluster: Vec::new(),
        };
        out.index();
        Ok(out)
    }
}

/// Members per color, colors in increasing order.
fn group(colors: &[u32]) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); count_colors(colors)];
    for (i, &c) in colors.iter().enumerate() {
        groups[c as usize].push(i);
    }
    groups
}

/// Compresses `graph` under `evidence` until color passing reaches a fixpoint.
pub fn compress(graph: &FactorGraph, evidence: &Evidence, mode: SignatureMode) -> Result<CompressedFactorGraph> {
    compress_with(graph, evidence, &LiftOptions { mode, layers: None })
}

pub fn compress_with(graph: &FactorGraph, evidence: &Evidence, options: &LiftOptions) -> Result<CompressedFactorGraph> {
    let conditioned = graph.apply_evidence(evidence)?;
    let mut colors = initial_coloring(&conditioned, evidence, options)?;
    let refiner = Refiner::new(&conditioned, options.mode);
    let mut rounds = 0;
    if conditioned.num_variables() + conditioned.num_factors() > 0 {
        loop {
            let next = refiner.refine(&colors);
            rounds += 1;
            let stable = next.num_variable_colors() == colors.num_variable_colors()
                && next.num_factor_colors() == colors.num_factor_colors();
            colors = next;
            if stable {
                break;
            }
        }
    }
    assemble(&conditioned, evidence, options, &refiner.tags, &colors, rounds)
}

fn assemble(
    conditioned: &FactorGraph,
    evidence: &Evidence,
    options: &LiftOptions,
    tags: &[Vec<u32>],
    colors: &Coloring,
    rounds: usize,
) -> Result<CompressedFactorGraph> {
    let nodes: Vec<ClusterNode> = group(&colors.variables)
        .into_iter()
        .enumerate()
        .map(|(c, members)| {
            let rep = members[0];
            ClusterNode {
                color: c as u32,
                representative: rep,
                cardinality: conditioned.cardinality(rep),
                observed: evidence.get(rep),
                layer: options.layers.as_ref().map(|l| l[rep]),
                members,
            }
        })
        .collect();

    let mut factors = Vec::new();
    let mut edges: Vec<ClusterEdge> = Vec::new();
    for (c, members) in group(&colors.factors).into_iter().enumerate() {
        let rep = &conditioned.factors()[members[0]];
        let rep_tags = &tags[rep.id];
        let mut by_key: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        let mut wiring = Vec::with_capacity(rep.arity());
        for (q, &arg) in rep.args.iter().enumerate() {
            let node = colors.variables[arg];
            let idx = *by_key.entry((rep_tags[q], node)).or_insert_with(|| {
                edges.push(ClusterEdge {
                    factor: c,
                    positions: Vec::new(),
                    node: node as usize,
                    count: 0,
                });
                edges.len() - 1
            });
            edges[idx].positions.push(q);
            wiring.push(idx);
        }

        // Ground hits per edge; every member must reproduce the
        // representative's wiring multiplicities.
        let mut hits: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &m in &members {
            let f = &conditioned.factors()[m];
            let mut per_edge: BTreeMap<usize, usize> = BTreeMap::new();
            for (p, &arg) in f.args.iter().enumerate() {
                let key = (tags[m][p], colors.variables[arg]);
                let Some(&idx) = by_key.get(&key) else {
                    return Err(Error::CountUniformity(format!(
                        "factor {m} has an argument (variable {arg}) with no matching edge in its clusterfactor"
                    )));
                };
                *per_edge.entry(idx).or_default() += 1;
                hits.entry(idx).or_default().push(arg);
            }
            for (&idx, &n) in &per_edge {
                if n != edges[idx].positions.len() {
                    return Err(Error::CountUniformity(format!(
                        "factor {m} reaches clusternode {} through {n} positions, its representative through {}",
                        edges[idx].node,
                        edges[idx].positions.len()
                    )));
                }
            }
        }
        for (idx, mut vars) in hits {
            let node = &nodes[edges[idx].node];
            vars.sort_unstable();
            let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
            for v in vars {
                *counts.entry(v).or_default() += 1;
            }
            let first = *counts.values().next().unwrap_or(&0);
            if counts.len() != node.members.len() || counts.values().any(|&c| c != first) {
                return Err(Error::CountUniformity(format!(
                    "members of clusternode {} receive different numbers of edges from clusterfactor {c} (mode {:?})",
                    edges[idx].node, options.mode
                )));
            }
            edges[idx].count = first;
        }
        factors.push(ClusterFactor {
            color: c as u32,
            representative: rep.id,
            potential: rep.table.clone(),
            wiring,
            members,
        });
    }

    let mut out = CompressedFactorGraph {
        mode: options.mode,
        nodes,
        factors,
        edges,
        rounds,
        ground_variables: conditioned.num_variables(),
        ground_factors: conditioned.num_factors(),
        ground_edges: conditioned.num_edges(),
        node_edges: Vec::new(),
        variable_cluster: Vec::new(),
    };
    out.index();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub variables: usize,
    pub factors: usize,
    pub edges: usize,
    pub clusternodes: usize,
    pub clusterfactors: usize,
    pub compressed_edges: usize,
    pub node_ratio: f64,
    pub factor_ratio: f64,
    pub edge_ratio: f64,
    pub rounds: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compression_stats(graph: &FactorGraph, compressed: &CompressedFactorGraph) -> CompressionStats {
    CompressionStats {
        variables: graph.num_variables(),
        factors: graph.num_factors(),
        edges: graph.num_edges(),
        clusternodes: compressed.nodes.len(),
        clusterfactors: compressed.factors.len(),
        compressed_edges: compressed.num_edges(),
        node_ratio: ratio(compressed.nodes.len(), graph.num_variables()),
        factor_ratio: ratio(compressed.factors.len(), graph.num_factors()),
        edge_ratio: ratio(compressed.num_edges(), graph.num_edges()),
        rounds: compressed.rounds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> FactorGraph {
        let t = vec![2.0, 1.0, 1.0, 2.0];
        FactorGraph::from_tables(&[2, 2, 2], vec![(vec![0, 1], t.clone()), (vec![1, 2], t)]).unwrap()
    }

    #[test]
    fn initial_colors_without_evidence() {
        let c = initial_colors(&chain3(), &Evidence::new(), SignatureMode::Commutative).unwrap();
        assert_eq!(c.variables, vec![0, 0, 0]);
        assert_eq!(c.factors, vec![0, 0]);
    }

    #[test]
    fn initial_colors_with_evidence() {
        let e: Evidence = [(1, 1)].into_iter().collect();
        for mode in [SignatureMode::Untagged, SignatureMode::Positional, SignatureMode::Commutative] {
            let c = initial_colors(&chain3(), &e, mode).unwrap();
            assert_eq!(c.variables[0], c.variables[2]);
            assert_ne!(c.variables[0], c.variables[1]);
            // f1(A,B) keeps column B=1, f2(B,C) keeps row B=1: equal only up to permutation
            if mode == SignatureMode::Commutative {
                assert_eq!(c.factors[0], c.factors[1]);
            } else {
                assert_ne!(c.factors[0], c.factors[1]);
            }
        }
    }

    #[test]
    fn distinct_unary_tables_get_distinct_colors() {
        let g = FactorGraph::from_tables(&[2, 2], vec![(vec![0], vec![3.0, 1.0]), (vec![1], vec![1.0, 3.0])]).unwrap();
        let c = initial_colors(&g, &Evidence::new(), SignatureMode::Untagged).unwrap();
        assert_ne!(c.factors[0], c.factors[1]);
    }

    #[test]
    fn one_round_splits_the_middle_variable() {
        let g = chain3();
        let c0 = initial_colors(&g, &Evidence::new(), SignatureMode::Commutative).unwrap();
        let c1 = refine_once(&g, &c0, SignatureMode::Commutative);
        assert_eq!(c1.variables[0], c1.variables[2]);
        assert_ne!(c1.variables[0], c1.variables[1]);
        assert_eq!(c1.factors[0], c1.factors[1]);
    }

    #[test]
    fn singleton_partition_is_a_fixpoint() {
        let g = FactorGraph::from_tables(
            &[2, 2, 2],
            vec![(vec![0], vec![1.0, 2.0]), (vec![1], vec![1.0, 3.0]), (vec![2], vec![1.0, 4.0])],
        )
        .unwrap();
        let c0 = initial_colors(&g, &Evidence::new(), SignatureMode::Positional).unwrap();
        let c1 = refine_once(&g, &c0, SignatureMode::Positional);
        assert_eq!(c1.num_variable_colors(), 3);
        let c2 = refine_once(&g, &c1, SignatureMode::Positional);
        assert_eq!(c1, c2);
    }

    #[test]
    fn symmetric_four_cycle_stays_one_group() {
        let t = vec![3.0, 1.0, 1.0, 3.0];
        let g = FactorGraph::from_tables(
            &[2, 2, 2, 2],
            (0..4).map(|i| (vec![i, (i + 1) % 4], t.clone())).collect(),
        )
        .unwrap();
        let c0 = initial_colors(&g, &Evidence::new(), SignatureMode::Commutative).unwrap();
        let c1 = refine_once(&g, &c0, SignatureMode::Commutative);
        assert_eq!(c1.num_variable_colors(), 1);
        assert_eq!(c1.num_factor_colors(), 1);
    }

    #[test]
    fn chain3_compresses_to_two_clusternodes() {
        let g = chain3();
        let cg = compress(&g, &Evidence::new(), SignatureMode::Commutative).unwrap();
        assert_eq!(cg.nodes.len(), 2);
        assert_eq!(cg.factors.len(), 1);
        let ac = cg.nodes.iter().find(|n| n.members == vec![0, 2]).expect("{A, C}");
        let b = cg.nodes.iter().find(|n| n.members == vec![1]).expect("{B}");
        let count_to = |node: &ClusterNode| {
            cg.edges
                .iter()
                .find(|e| cg.nodes[e.node] == *node)
                .map(|e| e.count)
                .unwrap()
        };
        assert_eq!(count_to(ac), 1);
        assert_eq!(count_to(b), 2);

        let stats = compression_stats(&g, &cg);
        assert!((stats.node_ratio - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(stats.factor_ratio, 0.5);
        assert_eq!(stats.edge_ratio, 0.5);
    }

    #[test]
    fn positional_mode_keeps_chain3_apart() {
        // A sits at position 0, C at position 1: Positional refuses to merge them.
        let cg = compress(&chain3(), &Evidence::new(), SignatureMode::Positional).unwrap();
        assert_eq!(cg.nodes.len(), 3);
        assert_eq!(cg.factors.len(), 2);
    }

    #[test]
    fn no_symmetry_is_isomorphic() {
        let g = FactorGraph::from_tables(
            &[2, 3, 2],
            vec![
                (vec![0, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
                (vec![1, 2], vec![1.5, 2.0, 3.0, 4.0, 5.0, 7.0]),
                (vec![2], vec![1.0, 9.0]),
            ],
        )
        .unwrap();
        for mode in [SignatureMode::Untagged, SignatureMode::Positional, SignatureMode::Commutative] {
            let cg = compress(&g, &Evidence::new(), mode).unwrap();
            let s = compression_stats(&g, &cg);
            assert_eq!((s.node_ratio, s.factor_ratio, s.edge_ratio), (1.0, 1.0, 1.0));
            assert!(cg.edges.iter().all(|e| e.count == 1));
        }
    }

    #[test]
    fn star_collapses_leaves() {
        let k = 9;
        let t = vec![2.0, 1.0, 1.0, 2.0];
        let g = FactorGraph::from_tables(&vec![2; k], (1..k).map(|leaf| (vec![0, leaf], t.clone())).collect()).unwrap();
        let cg = compress(&g, &Evidence::new(), SignatureMode::Commutative).unwrap();
        let s = compression_stats(&g, &cg);
        assert!((s.node_ratio - 2.0 / k as f64).abs() < 1e-15);
        let hub = cg.cluster_of(0);
        let hub_edge = cg.edges.iter().find(|e| e.node == hub).unwrap();
        assert_eq!(hub_edge.count, (k - 1) as u32);
    }

    #[test]
    fn clause_tables_sort_by_polarity() {
        // (x ∨ ¬y): zero at x=0, y=1
        let a = Potential::new(vec![2, 2], vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        // (¬y ∨ x) in the other argument order
        let b = Potential::new(vec![2, 2], vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let sa = factor_shape(&a, SignatureMode::Commutative);
        let sb = factor_shape(&b, SignatureMode::Commutative);
        assert_eq!(sa.key, sb.key);
        assert_eq!(sa.tags, vec![0, 1]);
        assert_eq!(sb.tags, vec![1, 0]);
        // (x ∨ y ∨ z): one class
        let c = Potential::new(vec![2, 2, 2], vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(factor_shape(&c, SignatureMode::Commutative).tags, vec![0, 0, 0]);
    }

    #[test]
    fn untagged_reports_nonuniform_counts() {
        // Asymmetric table: A at position 0 of f1, B at position 1 of f2.
        let t = vec![1.0, 2.0, 3.0, 4.0];
        let g = FactorGraph::from_tables(&[2, 2, 2, 2], vec![(vec![0, 2], t.clone()), (vec![3, 1], t)]).unwrap();
        let err = compress(&g, &Evidence::new(), SignatureMode::Untagged).unwrap_err();
        assert!(matches!(err, Error::CountUniformity(_)));
        assert!(compress(&g, &Evidence::new(), SignatureMode::Positional).is_ok());
    }

    #[test]
    fn recompress_is_identity_at_fixpoint() {
        let cg = compress(&chain3(), &Evidence::new(), SignatureMode::Commutative).unwrap();
        let again = cg.recompress().unwrap();
        assert_eq!(again.nodes.len(), cg.nodes.len());
        assert_eq!(again.factors.len(), cg.factors.len());
        assert_eq!(again.edges.len(), cg.edges.len());
        assert!(again.nodes.iter().all(|n| n.members.len() == 1));
    }

    #[test]
    fn factor_free_graph_groups_by_evidence() {
        let g = FactorGraph::from_tables(&[2, 2, 2, 3], vec![]).unwrap();
        let e: Evidence = [(1, 1)].into_iter().collect();
        let cg = compress(&g, &e, SignatureMode::Commutative).unwrap();
        // {0, 2} unknown binary, {1} observed, {3} ternary
        assert_eq!(cg.nodes.len(), 3);
    }

    #[test]
    fn layers_keep_clusternodes_apart() {
        let t = vec![2.0, 1.0, 1.0, 2.0];
        let g = FactorGraph::from_tables(&[2, 2, 2], vec![(vec![0, 1], t.clone()), (vec![1, 2], t)]).unwrap();
        let opts = LiftOptions {
            mode: SignatureMode::Commutative,
            layers: Some(vec![0, 1, 2]),
        };
        let cg = compress_with(&g, &Evidence::new(), &opts).unwrap();
        assert_eq!(cg.nodes.len(), 3);
        assert!(cg.nodes.iter().all(|n| n.layer == Some(n.members[0])));
    }
}
