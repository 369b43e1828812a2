//! Fixed inputs shared by the benchmarks.

use cbp_core::cnf::CnfFormula;
use cbp_core::dmln::{generate_evidence, ground_dmln, DmlnSpec, EvidenceSpec};
use cbp_core::generate::{disjoint_copies, random_kcnf};
use cbp_core::{Evidence, FactorGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Smokers network with `people` people over `timesteps` steps, evidence for a
/// fraction `r` of them.
pub fn dmln(people: usize, timesteps: usize, r: f64) -> (DmlnSpec, FactorGraph, Evidence) {
    let spec = DmlnSpec::new(people, timesteps);
    let graph = ground_dmln(&spec).expect("valid spec");
    let ev = EvidenceSpec {
        friends: 5.min(people - 1),
        ..EvidenceSpec::new(r, 1)
    };
    let evidence = generate_evidence(&spec, &ev).expect("valid evidence spec");
    (spec, graph, evidence)
}

pub fn random_3cnf(vars: usize, clauses: usize, seed: u64) -> CnfFormula {
    random_kcnf(&mut ChaCha8Rng::seed_from_u64(seed), vars, clauses, 3)
}

pub fn copies_3cnf(copies: usize) -> CnfFormula {
    disjoint_copies(&random_3cnf(15, 45, 3), copies)
}
