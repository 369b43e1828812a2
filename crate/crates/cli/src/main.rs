//! `cbp`: compression, marginals, model counting and benchmarks from the
//! command line.
//!
//! Exit codes: 0 success, 1 internal failure, 2 bad input, 3 contradiction,
//! 4 budget exceeded.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cbp_core::{Engine, Error, SignatureMode};

#[derive(Parser, Debug)]
#[command(name = "cbp", version, about = "Loopy and counting belief propagation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compress a factor graph (.fgt) or CNF formula (.cnf) and report ratios.
    Compress(CompressArgs),
    /// Run BP or counting BP and print beliefs as JSON.
    Marginals(MarginalsArgs),
    /// Probabilistic lower bound on the model count of a CNF formula.
    Count(CountArgs),
    /// FF versus LFOFF on the dynamic smokers network; CSV of ratios.
    BenchDmln(BenchDmlnArgs),
    /// BP- versus CBP-guided counting with a shared seed; cumulative message CSV.
    BenchCount(BenchCountArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Bp,
    Cbp,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Bp => Engine::Bp,
            EngineArg::Cbp => Engine::Cbp,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Untagged,
    Positional,
    Commutative,
}

impl From<ModeArg> for SignatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Untagged => SignatureMode::Untagged,
            ModeArg::Positional => SignatureMode::Positional,
            ModeArg::Commutative => SignatureMode::Commutative,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Flooding,
    /// Forwards-backwards; layers from `--layers`, else one per variable.
    Fb,
}

#[derive(Args, Debug, Clone)]
pub struct BpArgs {
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_sweeps: usize,
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Commutative)]
    pub mode: ModeArg,
    /// Evidence file: `<variable> <state>` per line.
    #[arg(long)]
    pub evidence: Option<PathBuf>,
    /// Include the compressed graph in the output.
    #[arg(long)]
    pub graph: bool,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MarginalsArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineArg::Bp)]
    pub engine: EngineArg,
    #[arg(long)]
    pub evidence: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Flooding)]
    pub schedule: ScheduleArg,
    /// Whitespace-separated layer key per variable for `--schedule fb`.
    #[arg(long)]
    pub layers: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Commutative)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub bp: BpArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CountingArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, short = 't', default_value_t = 7)]
    pub iterations: usize,
    #[arg(long, default_value_t = 64)]
    pub exact_threshold: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Commutative)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub bp: BpArgs,
    /// Worker threads for independent iterations.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineArg::Bp)]
    pub engine: EngineArg,
    #[command(flatten)]
    pub counting: CountingArgs,
    /// Count the formula exactly instead; fails if more than
    /// `--exact-threshold` variables remain after unit propagation.
    #[arg(long)]
    pub exact: bool,
    /// Program that counts a DIMACS file given as its last argument.
    #[arg(long)]
    pub external_counter: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchDmlnArgs {
    /// First seed; runs use `seed, seed + 1, ...`.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 20)]
    pub people: usize,
    #[arg(long, default_value_t = 10)]
    pub timesteps: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
    pub r: Vec<f64>,
    /// Friends per observed person; defaults to min(5, people - 1).
    #[arg(long)]
    pub friends: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub sweeps: usize,
    #[arg(long)]
    pub no_reflexive: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Commutative)]
    pub mode: ModeArg,
    /// Also write per-atom Cancer beliefs as JSON here.
    #[arg(long)]
    pub beliefs: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchCountArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub counting: CountingArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Contradiction(_) => 3,
        Error::BudgetExceeded { .. } | Error::TooManyVariables { .. } => 4,
        Error::BadCardinality { .. }
        | Error::DimensionMismatch { .. }
        | Error::RepeatedArgument { .. }
        | Error::DanglingVariable { .. }
        | Error::InvalidPotential(_)
        | Error::UnknownNode { .. }
        | Error::EvidenceOutOfRange { .. }
        | Error::InvalidConfig(_)
        | Error::ScheduleNotLiftable { .. }
        | Error::Parse { .. }
        | Error::Io(_) => 2,
        Error::CountUniformity(_) | Error::EngineMismatch(_) | Error::NoCandidates | Error::ExternalCounter(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if let Error::BudgetExceeded { .. } = err {
                eprintln!("hint: raise --exact-threshold, or use `cbp count` without --exact to fix variables first");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
