use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "qsynth", version, about = "Quantized controller synthesis for discrete time linear hybrid systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the control abstraction of a plant.
    Abstract(AbstractArgs),
    /// Synthesize the most general optimal controller.
    Synth(SynthArgs),
    /// Emit a control table as JSON and C.
    Codegen(CodegenArgs),
    /// Simulate the closed loop from seeded initial states.
    Simulate(SimulateArgs),
    /// Time the abstraction for several worker counts and write a CSV table.
    Report(ReportArgs),
    /// Worker side of a multi-process run.
    #[command(hide = true)]
    Worker(WorkerArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Pendulum,
    Buck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Inproc,
    Multiproc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlantArg {
    /// The transition relation, resolved by a MILP pick.
    Dtlhs,
    /// The nonlinear pendulum.
    Nonlinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ResolverArg {
    Lexmin,
    Random,
}

#[derive(Clone, Debug, Args)]
pub struct ModelArgs {
    /// Model file.
    #[arg(long, conflicts_with = "builtin")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
    /// Total quantization bits, split over the real state variables.
    #[arg(long, conflicts_with = "levels")]
    pub bits: Option<u32>,
    /// Level counts, e.g. `x1=16,x2=16`.
    #[arg(long)]
    pub levels: Option<String>,
    /// Number of buck inputs.
    #[arg(long, default_value_t = 1)]
    pub inputs: u32,
    /// Pendulum force intensity.
    #[arg(long)]
    pub force: Option<String>,
}

#[derive(Clone, Debug, Args)]
pub struct ParallelArgs {
    #[arg(short = 'p', long = "workers", default_value_t = 1)]
    pub workers: u32,
    #[arg(long, value_enum, default_value_t = ModeArg::Inproc)]
    pub mode: ModeArg,
    /// Spool directory for multi-process runs (default `<out>/spool`).
    #[arg(long)]
    pub spool: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct AbstractArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub parallel: ParallelArgs,
    #[arg(long, default_value = "qsynth-out")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Explicit transition system instead of a plant.
    #[arg(long, conflicts_with_all = ["model", "builtin"])]
    pub lts: Option<PathBuf>,
    /// Reuse an abstraction written by `abstract`.
    #[arg(long)]
    pub abstraction: Option<PathBuf>,
    #[command(flatten)]
    pub parallel: ParallelArgs,
    /// Goal relaxation; defaults to the quantization step.
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long, default_value = "qsynth-out")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct CodegenArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Controller dump written by `synth`.
    #[arg(long)]
    pub controller: PathBuf,
    /// Base name of the generated files.
    #[arg(long, default_value = "control")]
    pub name: String,
    #[arg(long, default_value = "qsynth-out")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Control table written by `codegen`.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: usize,
    #[arg(long, value_enum, default_value_t = PlantArg::Dtlhs)]
    pub plant: PlantArg,
    #[arg(long, value_enum, default_value_t = ResolverArg::Lexmin)]
    pub resolver: ResolverArg,
    /// Draw starts only from controlled cells.
    #[arg(long)]
    pub in_domain: bool,
    /// Goal relaxation; defaults to the quantization step.
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long, default_value = "qsynth-out")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Worker counts to time, e.g. `1,2,4`.
    #[arg(long, default_value = "1,2,4")]
    pub workers_list: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Inproc)]
    pub mode: ModeArg,
    #[arg(long)]
    pub spool: Option<PathBuf>,
    /// Goal relaxation; defaults to the quantization step.
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long, default_value = "qsynth-out")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct WorkerArgs {
    #[arg(long)]
    pub job: PathBuf,
    #[arg(long)]
    pub index: u32,
    #[arg(long)]
    pub workers: u32,
}
