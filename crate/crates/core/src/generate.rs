//! Seeded random instances for tests, benchmarks and experiments.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::cnf::{CnfFormula, Literal};
use crate::factor_graph::FactorGraph;

/// `clauses` clauses of `k` distinct variables each, with random signs.
pub fn random_kcnf<R: Rng>(rng: &mut R, num_vars: usize, clauses: usize, k: usize) -> CnfFormula {
    assert!(k <= num_vars, "clause width exceeds variable count");
    let clauses = (0..clauses)
        .map(|_| {
            sample(rng, num_vars, k)
                .into_iter()
                .map(|v| Literal::new(v + 1, rng.random_bool(0.5)))
                .collect()
        })
        .collect();
    CnfFormula { num_vars, clauses }
}

/// `k` variable-disjoint copies of `formula`.
pub fn disjoint_copies(formula: &CnfFormula, k: usize) -> CnfFormula {
    let n = formula.num_vars;
    let clauses = (0..k)
        .flat_map(|i| {
            formula
                .clauses
                .iter()
                .map(move |c| c.iter().map(|l| Literal::new(l.var + i * n, l.positive)).collect())
        })
        .collect();
    CnfFormula {
        num_vars: n * k,
        clauses,
    }
}

fn random_values<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(0.1..2.0)).collect()
}

/// A random acyclic factor graph: every non-unary factor joins exactly one
/// variable already in the tree with fresh ones. Unary factors are sprinkled
/// on top. Tables are strictly positive.
pub fn random_tree<R: Rng>(rng: &mut R, max_vars: usize, max_card: usize, max_arity: usize) -> FactorGraph {
    let n = rng.random_range(1..=max_vars);
    let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=max_card)).collect();
    let mut tables: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    let mut next = 1;
    while next < n {
        let arity = rng.random_range(2..=max_arity.min(n - next + 1).max(2));
        let mut args = vec![rng.random_range(0..next)];
        args.extend(next..next + arity - 1);
        next += arity - 1;
        args.shuffle(rng);
        let len = args.iter().map(|&a| cards[a]).product();
        tables.push((args, random_values(rng, len)));
    }
    for (v, &card) in cards.iter().enumerate() {
        if tables.is_empty() || rng.random_bool(0.4) {
            tables.push((vec![v], random_values(rng, card)));
        }
    }
    FactorGraph::from_tables(&cards, tables).expect("generated tree is valid")
}

/// A random (usually loopy) graph built from up to three copies of a random
/// motif. Factors draw their tables from a small pool, so many factors and
/// variables are indistinguishable. With three copies, the first variables of
/// consecutive copies are joined in a ring by a pooled pairwise table when one
/// exists. All variables share one cardinality; some pool tables are symmetric.
pub fn random_symmetric<R: Rng>(rng: &mut R, max_vars: usize, max_factors: usize, max_card: usize) -> FactorGraph {
    let copies = rng.random_range(1..=3).min(max_vars / 2).max(1);
    let n0 = rng.random_range(2..=(max_vars / copies).max(2));
    let m0 = rng.random_range(1..=(max_factors / copies).max(1));
    let card = rng.random_range(2..=max_card);
    let pool_size = rng.random_range(1..=3);
    let pool: Vec<(usize, Vec<f64>)> = (0..pool_size)
        .map(|_| {
            let arity = rng.random_range(1..=3.min(n0));
            let mut values = random_values(rng, card.pow(arity as u32));
            if arity == 2 && rng.random_bool(0.5) {
                for a in 0..card {
                    for b in 0..a {
                        values[b * card + a] = values[a * card + b];
                    }
                }
            }
            (arity, values)
        })
        .collect();
    let motif: Vec<(Vec<usize>, Vec<f64>)> = (0..m0)
        .map(|_| {
            let (arity, values) = pool[rng.random_range(0..pool.len())].clone();
            (sample(rng, n0, arity).into_vec(), values)
        })
        .collect();
    let mut tables: Vec<(Vec<usize>, Vec<f64>)> = (0..copies)
        .flat_map(|c| {
            motif
                .iter()
                .map(move |(args, values)| (args.iter().map(|a| a + c * n0).collect(), values.clone()))
        })
        .collect();
    if copies == 3 {
        if let Some((_, values)) = pool.iter().find(|(arity, _)| *arity == 2) {
            for c in 0..copies {
                tables.push((vec![c * n0, ((c + 1) % copies) * n0], values.clone()));
            }
        }
    }
    FactorGraph::from_tables(&vec![card; n0 * copies], tables).expect("generated graph is valid")
}
