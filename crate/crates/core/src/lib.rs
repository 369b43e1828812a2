//! Factor-graph inference with loopy and counting belief propagation.
//!
//! * [`factor_graph`]: discrete factor graphs, evidence conditioning, and the
//!   `.fgt` text format in [`fgt`].
//! * [`bp`]: loopy sum-product BP with flooding or forwards-backwards schedules.
//! * [`lifting`]: color passing that compresses a graph into clusternodes and
//!   clusterfactors.
//! * [`cbp`]: BP on the compressed graph, equivalent to BP on the ground graph.
//! * [`cnf`]: DIMACS formulas, unit propagation and exact model counting.
//! * [`count`]: BP-guided probabilistic lower bounds on model counts.
//! * [`dmln`]: the smokers dynamic Markov logic network and its
//!   factored-frontier benchmark.
//! * [`generate`]: seeded random formulas and factor graphs.

pub mod bp;
pub mod cbp;
pub mod cnf;
pub mod count;
pub mod dmln;
pub mod error;
pub mod factor_graph;
pub mod fgt;
pub mod generate;
pub mod lifting;
pub mod message;

pub use bp::{run_bp, BpConfig, LoopyBp, RunStats, Schedule};
pub use cbp::{run_cbp, CountingBp};
pub use cnf::{CnfFormula, Literal};
pub use dmln::{ground_dmln, run_comparison, DmlnSpec, EvidenceSpec};
pub use count::{run_count, CountConfig, CountResult, Engine};
pub use error::{Error, Result};
pub use factor_graph::{Evidence, Factor, FactorGraph, Incidence, NodeRef, Potential, Variable};
pub use lifting::{compress, compress_with, compression_stats, CompressedFactorGraph, LiftOptions, SignatureMode};
