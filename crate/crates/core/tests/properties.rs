use cbp_core::bp::{BpConfig, LoopyBp, Schedule};
use cbp_core::cbp::CountingBp;
use cbp_core::cnf::{
    brute_force_count, compact, condition_and_propagate, exact_count, to_factor_graph, CnfFormula, Literal, Propagation,
};
use cbp_core::fgt::{parse_fgt, write_fgt};
use cbp_core::generate::{disjoint_copies, random_kcnf, random_symmetric, random_tree};
use cbp_core::lifting::{compress, compress_with, LiftOptions, SignatureMode};
use cbp_core::{Evidence, FactorGraph, NodeRef};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact marginals by summing the factor product over all joint states.
fn brute_marginals(graph: &FactorGraph) -> Vec<Vec<f64>> {
    let cards: Vec<usize> = graph.variables().iter().map(|v| v.cardinality).collect();
    let mut marg: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    let mut states = vec![0usize; cards.len()];
    loop {
        let w: f64 = graph
            .factors()
            .iter()
            .map(|f| f.table.value(&f.args.iter().map(|&a| states[a]).collect::<Vec<_>>()))
            .product();
        for (v, &s) in states.iter().enumerate() {
            marg[v][s] += w;
        }
        let mut i = 0;
        while i < cards.len() {
            states[i] += 1;
            if states[i] < cards[i] {
                break;
            }
            states[i] = 0;
            i += 1;
        }
        if i == cards.len() {
            break;
        }
    }
    for m in &mut marg {
        let z: f64 = m.iter().sum();
        m.iter_mut().for_each(|x| *x /= z);
    }
    marg
}

fn random_evidence(rng: &mut ChaCha8Rng, graph: &FactorGraph, p: f64) -> Evidence {
    let mut ev = Evidence::new();
    for v in graph.variables() {
        if rng.random_bool(p) {
            ev.observe(v.id, rng.random_range(0..v.cardinality));
        }
    }
    ev
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn small_formula(rng: &mut ChaCha8Rng, max_vars: usize) -> CnfFormula {
    let n = rng.random_range(1..=max_vars);
    let m = rng.random_range(0..=2 * n);
    let mut f = random_kcnf(rng, n, 0, 1);
    for _ in 0..m {
        let k = rng.random_range(1..=3.min(n));
        f.clauses.extend(random_kcnf(rng, n, 1, k).clauses);
    }
    f
}

fn tree_config() -> BpConfig {
    BpConfig {
        damping: 0.0,
        tolerance: 1e-12,
        ..BpConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bp_is_exact_on_trees(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_tree(&mut rng, 8, 3, 3);
        let (beliefs, stats) = cbp_core::run_bp(&g, &Evidence::new(), &tree_config()).unwrap();
        prop_assert!(stats.converged);
        prop_assert!(max_diff(&beliefs, &brute_marginals(&g)) < 1e-8);
    }

    #[test]
    fn evidence_is_idempotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_symmetric(&mut rng, 6, 8, 3);
        let ev = random_evidence(&mut rng, &g, 0.4);
        let once = g.apply_evidence(&ev).unwrap();
        prop_assert_eq!(once.apply_evidence(&ev).unwrap(), once);
    }

    #[test]
    fn adjacency_is_symmetric_and_survives_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_symmetric(&mut rng, 7, 10, 3);
        for f in g.factors() {
            for (pos, &v) in f.args.iter().enumerate() {
                prop_assert!(g.adjacency(v).iter().any(|inc| inc.factor == f.id && inc.position == pos));
            }
            prop_assert_eq!(g.neighbors(NodeRef::Factor(f.id)).unwrap().len(), f.arity());
        }
        let total: usize = (0..g.num_variables()).map(|v| g.adjacency(v).len()).sum();
        prop_assert_eq!(total, g.num_edges());
        prop_assert_eq!(parse_fgt(&write_fgt(&g)).unwrap(), g);
    }

    #[test]
    fn cbp_matches_bp_every_flooding_sweep(seed in any::<u64>(), mode in 0usize..2) {
        let mode = [SignatureMode::Positional, SignatureMode::Commutative][mode];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_symmetric(&mut rng, 8, 12, 3);
        let ev = random_evidence(&mut rng, &g, 0.15);
        let config = BpConfig { max_sweeps: 12, ..BpConfig::default() };
        let conditioned = g.apply_evidence(&ev).unwrap();
        let compressed = compress(&g, &ev, mode).unwrap();
        let mut ground = LoopyBp::new(&conditioned, config.clone()).unwrap();
        let mut lifted = CountingBp::new(&compressed, config).unwrap();
        for _ in 0..12 {
            let r1 = ground.sweep().unwrap();
            let r2 = lifted.sweep().unwrap();
            prop_assert!((r1 - r2).abs() < 1e-9);
            prop_assert!(max_diff(&ground.beliefs().unwrap(), &lifted.beliefs().unwrap()) < 1e-9);
        }
        prop_assert!(lifted.stats().messages <= ground.stats().messages);
    }

    #[test]
    fn cbp_matches_bp_under_layered_schedule(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_symmetric(&mut rng, 8, 12, 2);
        let layers: Vec<usize> = (0..g.num_variables()).map(|_| rng.random_range(0..3)).collect();
        let config = BpConfig {
            damping: 0.0,
            schedule: Schedule::ForwardsBackwards { layers: layers.clone() },
            ..BpConfig::default()
        };
        let ev = Evidence::new();
        let compressed = compress_with(&g, &ev, &LiftOptions { mode: SignatureMode::Commutative, layers: Some(layers) }).unwrap();
        let mut ground = LoopyBp::new(&g, config.clone()).unwrap();
        let mut lifted = CountingBp::new(&compressed, config).unwrap();
        for _ in 0..5 {
            ground.sweep().unwrap();
            lifted.sweep().unwrap();
            prop_assert!(max_diff(&ground.beliefs().unwrap(), &lifted.beliefs().unwrap()) < 1e-9);
        }
    }

    #[test]
    fn compression_is_a_fixpoint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_symmetric(&mut rng, 10, 14, 2);
        let c = compress(&g, &Evidence::new(), SignatureMode::Commutative).unwrap();
        prop_assert!(c.rounds <= g.num_variables() + g.num_factors());
        let again = c.recompress().unwrap();
        prop_assert_eq!(again.nodes.len(), c.nodes.len());
        prop_assert_eq!(again.factors.len(), c.factors.len());
        prop_assert_eq!(again.edges.len(), c.edges.len());
        prop_assert!(again.nodes.iter().all(|n| n.members.len() == 1));
    }

    #[test]
    fn exact_count_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = small_formula(&mut rng, 14);
        prop_assert_eq!(exact_count(&f, None).unwrap(), BigUint::from(brute_force_count(&f).unwrap()));
    }

    #[test]
    fn conditioning_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = small_formula(&mut rng, 10);
        let total = brute_force_count(&f).unwrap();
        let u = rng.random_range(1..=f.num_vars);
        let mut sum = 0;
        for value in [true, false] {
            if let Propagation::Residual { formula, implied } = condition_and_propagate(&f, Literal::new(u, value)).unwrap() {
                let removed = implied.iter().map(|l| l.var).chain([u]).collect();
                let (residual, _) = compact(&formula, &removed);
                sum += brute_force_count(&residual).unwrap();
            }
        }
        prop_assert_eq!(sum, total);
    }

    #[test]
    fn disjoint_union_multiplies(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = small_formula(&mut rng, 6);
        let single = exact_count(&f, None).unwrap();
        let tripled = exact_count(&disjoint_copies(&f, 3), None).unwrap();
        prop_assert_eq!(tripled, single.pow(3));
    }

    #[test]
    fn clause_graph_preserves_models(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = small_formula(&mut rng, 8);
        prop_assume!(f.clauses.iter().all(|c| !c.is_empty()));
        let g = to_factor_graph(&f).unwrap();
        let a: Vec<bool> = (0..f.num_vars).map(|_| rng.random_bool(0.5)).collect();
        let product: f64 = g
            .factors()
            .iter()
            .map(|fac| fac.table.value(&fac.args.iter().map(|&v| usize::from(a[v])).collect::<Vec<_>>()))
            .product();
        prop_assert_eq!(product != 0.0, f.is_satisfied_by(&a));
    }
}

#[test]
fn dmln_grounding_sizes_match_enumeration() {
    use cbp_core::dmln::{ground_dmln, DmlnSpec};
    for n in 1..=5 {
        for t in 1..=4 {
            for reflexive in [true, false] {
                let spec = DmlnSpec { reflexive, ..DmlnSpec::new(n, t) };
                let g = ground_dmln(&spec).unwrap();
                let pairs = (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).filter(|&(x, y)| reflexive || x != y).count();
                assert_eq!(g.num_variables(), 2 * n * t + pairs * t);
                let priors = 2 * n + pairs;
                let intra = n * t + pairs * t;
                let inter = (pairs + n) * (t - 1);
                assert_eq!(g.num_factors(), priors + intra + inter, "n={n} t={t} reflexive={reflexive}");
                let labels: std::collections::BTreeSet<_> = g.variables().iter().map(|v| v.label.clone().unwrap()).collect();
                assert_eq!(labels.len(), g.num_variables());
            }
        }
    }
}

#[test]
fn confidence_increases_in_alpha_and_iterations() {
    let mut c = cbp_core::CountConfig::new(0);
    let mut last = 0.0;
    for t in 1..6 {
        c.iterations = t;
        assert!(c.confidence() > last);
        last = c.confidence();
    }
    c.iterations = 2;
    let mut last = -1.0;
    for a in [0.0, 0.5, 1.0, 2.0] {
        c.alpha = a;
        assert!(c.confidence() > last);
        last = c.confidence();
    }
}
