//! Discrete factor graphs.
//!
//! A [`FactorGraph`] is a bipartite graph of variables and factors. Every factor
//! owns a dense [`Potential`] table laid out in row-major order with argument 0
//! as the most significant index, so a table over `(A, B)` with binary `B` is
//! stored as `[f(0,0), f(0,1), f(1,0), f(1,1), ...]`.
//!
//! Evidence is incorporated by zeroing every table row that disagrees with an
//! observation ([`FactorGraph::apply_evidence`]); variables are never clamped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub id: usize,
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Variable {
    pub fn new(id: usize, cardinality: usize) -> Self {
        Variable {
            id,
            cardinality,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// Dense non-negative table over an ordered list of argument cardinalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    cardinalities: Vec<usize>,
    values: Vec<f64>,
}

impl Potential {
    pub fn new(cardinalities: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let size: usize = cardinalities.iter().product();
        if cardinalities.is_empty() {
            return Err(Error::InvalidPotential("a potential needs at least one argument".into()));
        }
        if values.len() != size {
            return Err(Error::InvalidPotential(format!(
                "table has {} entries, cardinalities {:?} require {}",
                values.len(),
                cardinalities,
                size
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidPotential(format!("entry {v} is not a finite non-negative number")));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidPotential("every entry is zero".into()));
        }
        Ok(Potential {
            cardinalities,
            values,
        })
    }

    /// Builds a table without the "at least one positive entry" check. Evidence
    /// conditioning can legitimately produce such tables; they are reported as
    /// contradictions when inference starts.
    pub(crate) fn new_unchecked(cardinalities: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), cardinalities.iter().product::<usize>());
        Potential {
            cardinalities,
            values,
        }
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn arity(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Row-major strides, argument 0 most significant.
    pub fn strides(&self) -> Vec<usize> {
        strides(&self.cardinalities)
    }

    pub fn flat_index(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(self.strides())
            .map(|(s, stride)| s * stride)
            .sum()
    }

    pub fn value(&self, states: &[usize]) -> f64 {
        self.values[self.flat_index(states)]
    }

    /// Table with its arguments reordered so that new argument `i` is old
    /// argument `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Potential {
        let cards: Vec<usize> = order.iter().map(|&o| self.cardinalities[o]).collect();
        let old_strides = self.strides();
        let mut values = Vec::with_capacity(self.values.len());
        for_each_assignment(&cards, |states| {
            let idx: usize = states
                .iter()
                .zip(order)
                .map(|(s, &o)| s * old_strides[o])
                .sum();
            values.push(self.values[idx]);
        });
        Potential::new_unchecked(cards, values)
    }
}

pub(crate) fn strides(cards: &[usize]) -> Vec<usize> {
    let mut out = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * cards[i + 1];
    }
    out
}

/// Calls `f` with every joint assignment in row-major order.
pub(crate) fn for_each_assignment(cards: &[usize], mut f: impl FnMut(&[usize])) {
    if cards.contains(&0) {
        return;
    }
    let mut states = vec![0usize; cards.len()];
    loop {
        f(&states);
        let mut i = cards.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            states[i] += 1;
            if states[i] < cards[i] {
                break;
            }
            states[i] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub id: usize,
    pub args: Vec<usize>,
    pub table: Potential,
}

impl Factor {
    pub fn new(id: usize, args: Vec<usize>, table: Potential) -> Self {
        Factor { id, args, table }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

/// One incidence of a variable: it sits at `position` of factor `factor`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Incidence {
    pub factor: usize,
    pub position: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRef {
    Variable(usize),
    Factor(usize),
}

/// Neighbors of a node, as returned by [`FactorGraph::neighbors`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Neighbors<'a> {
    Variable(&'a [Incidence]),
    Factor(&'a [usize]),
}

impl Neighbors<'_> {
    pub fn len(&self) -> usize {
        match self {
            Neighbors::Variable(inc) => inc.len(),
            Neighbors::Factor(args) => args.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorGraph {
    variables: Vec<Variable>,
    factors: Vec<Factor>,
    adjacency: Vec<Vec<Incidence>>,
}

impl FactorGraph {
    /// Validates variables and factors and computes the adjacency lists.
    ///
    /// Variable and factor ids must be dense and match their index.
    pub fn new(variables: Vec<Variable>, factors: Vec<Factor>) -> Result<Self> {
        for (i, v) in variables.iter().enumerate() {
            if v.id != i {
                return Err(Error::UnknownNode {
                    kind: "variable",
                    id: v.id,
                });
            }
            if v.cardinality < 2 {
                return Err(Error::BadCardinality {
                    var: i,
                    cardinality: v.cardinality,
                });
            }
        }
        let mut adjacency = vec![Vec::new(); variables.len()];
        for (k, f) in factors.iter().enumerate() {
            if f.id != k {
                return Err(Error::UnknownNode {
                    kind: "factor",
                    id: f.id,
                });
            }
            if f.args.len() != f.table.arity() {
                return Err(Error::DimensionMismatch {
                    factor: k,
                    reason: format!(
                        "{} arguments but a {}-dimensional table",
                        f.args.len(),
                        f.table.arity()
                    ),
                });
            }
            for (p, &var) in f.args.iter().enumerate() {
                let Some(v) = variables.get(var) else {
                    return Err(Error::DanglingVariable { factor: k, var });
                };
                if f.args[..p].contains(&var) {
                    return Err(Error::RepeatedArgument { factor: k, var });
                }
                if f.table.cardinalities()[p] != v.cardinality {
                    return Err(Error::DimensionMismatch {
                        factor: k,
                        reason: format!(
                            "position {p} has {} states but variable {var} has cardinality {}",
                            f.table.cardinalities()[p],
                            v.cardinality
                        ),
                    });
                }
                adjacency[var].push(Incidence {
                    factor: k,
                    position: p,
                });
            }
        }
        Ok(FactorGraph {
            variables,
            factors,
            adjacency,
        })
    }

    /// Convenience constructor from cardinalities and `(args, table values)`.
    pub fn from_tables(cards: &[usize], factors: Vec<(Vec<usize>, Vec<f64>)>) -> Result<Self> {
        let variables = cards
            .iter()
            .enumerate()
            .map(|(i, &c)| Variable::new(i, c))
            .collect();
        let mut built = Vec::with_capacity(factors.len());
        for (k, (args, values)) in factors.into_iter().enumerate() {
            let mut fcards = Vec::with_capacity(args.len());
            for &a in &args {
                match cards.get(a) {
                    Some(&c) => fcards.push(c),
                    None => return Err(Error::DanglingVariable { factor: k, var: a }),
                }
            }
            let table = Potential::new(fcards, values).map_err(|e| Error::DimensionMismatch {
                factor: k,
                reason: e.to_string(),
            })?;
            built.push(Factor::new(k, args, table));
        }
        FactorGraph::new(variables, built)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    /// Number of (undirected) variable-factor edges.
    pub fn num_edges(&self) -> usize {
        self.factors.iter().map(|f| f.args.len()).sum()
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.variables[var].cardinality
    }

    pub fn adjacency(&self, var: usize) -> &[Incidence] {
        &self.adjacency[var]
    }

    pub fn neighbors(&self, node: NodeRef) -> Result<Neighbors<'_>> {
        match node {
            NodeRef::Variable(v) => self
                .adjacency
                .get(v)
                .map(|a| Neighbors::Variable(a))
                .ok_or(Error::UnknownNode {
                    kind: "variable",
                    id: v,
                }),
            NodeRef::Factor(f) => self
                .factors
                .get(f)
                .map(|f| Neighbors::Factor(&f.args))
                .ok_or(Error::UnknownNode { kind: "factor", id: f }),
        }
    }

    pub fn validate_evidence(&self, evidence: &Evidence) -> Result<()> {
        for (&var, &state) in evidence.iter() {
            let Some(v) = self.variables.get(var) else {
                return Err(Error::UnknownNode {
                    kind: "variable",
                    id: var,
                });
            };
            if state >= v.cardinality {
                return Err(Error::EvidenceOutOfRange {
                    var,
                    state,
                    cardinality: v.cardinality,
                });
            }
        }
        Ok(())
    }

    /// Returns a copy in which every row inconsistent with the evidence is zero.
    pub fn apply_evidence(&self, evidence: &Evidence) -> Result<FactorGraph> {
        self.validate_evidence(evidence)?;
        if evidence.is_empty() {
            return Ok(self.clone());
        }
        let factors = self
            .factors
            .iter()
            .map(|f| {
                let observed: Vec<Option<usize>> = f.args.iter().map(|a| evidence.get(*a)).collect();
                if observed.iter().all(Option::is_none) {
                    return f.clone();
                }
                let mut values = f.table.values().to_vec();
                let mut idx = 0;
                for_each_assignment(f.table.cardinalities(), |states| {
                    let clash = states
                        .iter()
                        .zip(&observed)
                        .any(|(s, o)| matches!(o, Some(obs) if obs != s));
                    if clash {
                        values[idx] = 0.0;
                    }
                    idx += 1;
                });
                Factor::new(
                    f.id,
                    f.args.clone(),
                    Potential::new_unchecked(f.table.cardinalities().to_vec(), values),
                )
            })
            .collect();
        Ok(FactorGraph {
            variables: self.variables.clone(),
            factors,
            adjacency: self.adjacency.clone(),
        })
    }

    /// First factor whose table is entirely zero, if any.
    pub fn find_zero_factor(&self) -> Option<usize> {
        self.factors.iter().position(|f| f.table.is_all_zero())
    }
}

/// Observed states, keyed by variable id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    assignments: BTreeMap<usize, usize>,
}

impl Evidence {
    pub fn new() -> Self {
        Evidence::default()
    }

    pub fn observe(&mut self, var: usize, state: usize) -> &mut Self {
        self.assignments.insert(var, state);
        self
    }

    pub fn get(&self, var: usize) -> Option<usize> {
        self.assignments.get(&var).copied()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&usize, &usize)> {
        self.assignments.iter()
    }
}

impl FromIterator<(usize, usize)> for Evidence {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        Evidence {
            assignments: iter.into_iter().collect(),
        }
    }
}
