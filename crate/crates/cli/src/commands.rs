use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use cbp_core::bp::{run_bp, BpConfig, Schedule};
use cbp_core::cbp::run_cbp;
use cbp_core::cnf::{exact_count, parse_dimacs, to_factor_graph, CnfFormula, ExternalCounter};
use cbp_core::count::{count_iteration, summarize, CountConfig, IterationRecord};
use cbp_core::dmln::{run_comparison_with, CancerBelief, ComparisonReport, DmlnSpec, EvidenceSpec};
use cbp_core::fgt::{parse_evidence, parse_fgt};
use cbp_core::lifting::{compress_with, compression_stats, CompressedFactorGraph, CompressionStats, LiftOptions};
use cbp_core::{Error, Evidence, FactorGraph, Result, RunStats, SignatureMode};

use crate::{
    BenchCountArgs, BenchDmlnArgs, BpArgs, Command, CompressArgs, CountArgs, CountingArgs, EngineArg, MarginalsArgs,
    ScheduleArg,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Compress(args) => compress(args),
        Command::Marginals(args) => marginals(args),
        Command::Count(args) => count(args),
        Command::BenchDmln(args) => bench_dmln(args),
        Command::BenchCount(args) => bench_count(args),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn is_cnf(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "cnf")
}

fn load_graph(path: &Path) -> Result<FactorGraph> {
    let text = read(path)?;
    if is_cnf(path) {
        to_factor_graph(&parse_dimacs(&text)?)
    } else {
        parse_fgt(&text)
    }
}

fn load_cnf(path: &Path) -> Result<CnfFormula> {
    parse_dimacs(&read(path)?)
}

fn load_evidence(path: Option<&Path>) -> Result<Evidence> {
    match path {
        Some(p) => parse_evidence(&read(p)?),
        None => Ok(Evidence::new()),
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn bp_config(args: &BpArgs, schedule: Schedule) -> BpConfig {
    BpConfig {
        damping: args.damping,
        tolerance: args.tolerance,
        max_sweeps: args.max_sweeps,
        schedule,
    }
}

#[derive(Serialize)]
struct CompressOutput<'a> {
    mode: SignatureMode,
    stats: CompressionStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    graph: Option<&'a CompressedFactorGraph>,
}

fn compress(args: CompressArgs) -> Result<()> {
    let graph = load_graph(&args.input)?;
    let evidence = load_evidence(args.evidence.as_deref())?;
    let options = LiftOptions {
        mode: args.mode.into(),
        layers: None,
    };
    let compressed = compress_with(&graph, &evidence, &options)?;
    let out = CompressOutput {
        mode: options.mode,
        stats: compression_stats(&graph, &compressed),
        graph: args.graph.then_some(&compressed),
    };
    emit(args.output.as_deref(), &to_json(&out))
}

#[derive(Serialize)]
struct MarginalsOutput {
    engine: &'static str,
    beliefs: BTreeMap<usize, Vec<f64>>,
    stats: RunStats,
}

fn parse_layers(text: &str, n: usize) -> Result<Vec<usize>> {
    let layers = text
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidConfig(format!("layer key `{t}` is not a non-negative integer")))
        })
        .collect::<Result<Vec<usize>>>()?;
    if layers.len() != n {
        return Err(Error::InvalidConfig(format!("{} layer keys for {n} variables", layers.len())));
    }
    Ok(layers)
}

fn marginals(args: MarginalsArgs) -> Result<()> {
    let graph = load_graph(&args.input)?;
    let evidence = load_evidence(args.evidence.as_deref())?;
    let layers = match (args.schedule, &args.layers) {
        (ScheduleArg::Flooding, None) => None,
        (ScheduleArg::Flooding, Some(_)) => {
            return Err(Error::InvalidConfig("--layers needs --schedule fb".into()));
        }
        (ScheduleArg::Fb, Some(path)) => Some(parse_layers(&read(path)?, graph.num_variables())?),
        (ScheduleArg::Fb, None) => Some((0..graph.num_variables()).collect()),
    };
    let schedule = match &layers {
        Some(l) => Schedule::ForwardsBackwards { layers: l.clone() },
        None => Schedule::Flooding,
    };
    let config = bp_config(&args.bp, schedule);
    let (beliefs, stats) = match args.engine {
        EngineArg::Bp => run_bp(&graph, &evidence, &config)?,
        EngineArg::Cbp => {
            let options = LiftOptions {
                mode: args.mode.into(),
                layers,
            };
            run_cbp(&compress_with(&graph, &evidence, &options)?, &config)?
        }
    };
    let out = MarginalsOutput {
        engine: match args.engine {
            EngineArg::Bp => "bp",
            EngineArg::Cbp => "cbp",
        },
        beliefs: beliefs.into_iter().enumerate().collect(),
        stats,
    };
    emit(args.output.as_deref(), &to_json(&out))
}

fn count_config(args: &CountingArgs, engine: EngineArg) -> CountConfig {
    CountConfig {
        alpha: args.alpha,
        iterations: args.iterations,
        engine: engine.into(),
        bp: bp_config(&args.bp, Schedule::Flooding),
        mode: args.mode.into(),
        exact_threshold: args.exact_threshold,
        seed: args.seed,
        external: None,
    }
}

fn iterations(formula: &CnfFormula, config: &CountConfig, jobs: usize) -> Result<Vec<IterationRecord>> {
    config.validate()?;
    pool(jobs)?.install(|| {
        (0..config.iterations)
            .into_par_iter()
            .map(|i| count_iteration(formula, config, i))
            .collect()
    })
}

#[derive(Serialize)]
struct ExactOutput {
    count: String,
    exact: bool,
}

fn count(args: CountArgs) -> Result<()> {
    let formula = load_cnf(&args.input)?;
    let external = args.external_counter.map(ExternalCounter::new);
    if args.exact {
        let count = match &external {
            Some(counter) => counter.count(&formula)?,
            None => exact_count(&formula, Some(args.counting.exact_threshold))?,
        };
        let out = ExactOutput {
            count: count.to_string(),
            exact: true,
        };
        return emit(args.output.as_deref(), &to_json(&out));
    }
    let mut config = count_config(&args.counting, args.engine);
    config.external = external;
    let records = iterations(&formula, &config, args.counting.jobs)?;
    emit(args.output.as_deref(), &to_json(&summarize(&config, records)))
}

#[derive(Serialize)]
struct BeliefRecord<'a> {
    r: f64,
    seed: u64,
    cancer: &'a [CancerBelief],
}

fn bench_dmln(args: BenchDmlnArgs) -> Result<()> {
    let spec = DmlnSpec {
        reflexive: !args.no_reflexive,
        ..DmlnSpec::new(args.people, args.timesteps)
    };
    spec.validate()?;
    let friends = args.friends.unwrap_or(5.min(args.people - 1));
    let mode: SignatureMode = args.mode.into();
    let tasks: Vec<(u64, f64)> = (0..args.seeds)
        .flat_map(|i| args.r.iter().map(move |&r| (args.seed + i, r)))
        .collect();
    let reports: Vec<ComparisonReport> = pool(args.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(seed, r)| {
                let ev = EvidenceSpec {
                    friends,
                    ..EvidenceSpec::new(r, seed)
                };
                run_comparison_with(&spec, &ev, args.sweeps, mode)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut csv = String::from("r,seed,edges_ff,edges_lfoff,messages_ff,messages_lfoff,ratio_edges,ratio_messages\n");
    for rep in &reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{:.6},{:.6}",
            rep.r,
            rep.seed,
            rep.edges_ff,
            rep.edges_lfoff,
            rep.messages_ff,
            rep.messages_lfoff,
            rep.ratio_edges,
            rep.ratio_messages
        );
    }
    if let Some(path) = &args.beliefs {
        let records: Vec<BeliefRecord> = reports
            .iter()
            .map(|rep| BeliefRecord {
                r: rep.r,
                seed: rep.seed,
                cancer: &rep.cancer,
            })
            .collect();
        fs::write(path, to_json(&records))?;
    }
    emit(args.output.as_deref(), &csv)
}

fn bench_count(args: BenchCountArgs) -> Result<()> {
    let formula = load_cnf(&args.input)?;
    let bp = iterations(&formula, &count_config(&args.counting, EngineArg::Bp), args.counting.jobs)?;
    let cbp = iterations(&formula, &count_config(&args.counting, EngineArg::Cbp), args.counting.jobs)?;
    let mut csv = String::from("iteration,step,messages_bp,messages_cbp,cumulative_bp,cumulative_cbp,ratio\n");
    let (mut cum_bp, mut cum_cbp) = (0u64, 0u64);
    for (a, b) in bp.iter().zip(&cbp) {
        for step in 0..a.steps.len().max(b.steps.len()) {
            let mb = a.steps.get(step).map_or(0, |s| s.messages);
            let mc = b.steps.get(step).map_or(0, |s| s.messages);
            cum_bp += mb;
            cum_cbp += mc;
            let ratio = if cum_bp == 0 { 1.0 } else { cum_cbp as f64 / cum_bp as f64 };
            let _ = writeln!(csv, "{},{},{mb},{mc},{cum_bp},{cum_cbp},{ratio:.6}", a.index, step);
        }
    }
    emit(args.output.as_deref(), &csv)
}
