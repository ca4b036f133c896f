use clap::{Args, Parser, Subcommand, ValueEnum};
use std::net::SocketAddr;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "powrl", version, about = "Grid topology control: training, evaluation, analysis and the operator service")]
pub struct Cli {
    /// Log filter, e.g. `info` or `powrl_core=debug` (overrides RUST_LOG).
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a bundled grid and a generated chronic suite as a scenario directory.
    Generate(GenerateArgs),
    /// Build a reduced action set from stressed states of a chronic directory.
    Reduce(ReduceArgs),
    /// Train the policy and write a checkpoint.
    Train(TrainArgs),
    /// Run agents over a chronic directory and report survival.
    Evaluate(EvaluateArgs),
    /// Action-diversity statistics of episode logs.
    Analyze(AnalyzeArgs),
    /// Run one episode and write its log.
    Run(RunArgs),
    /// Serve the operator-console HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureName {
    Fig1,
    Training,
    Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteKind {
    /// Stressed days with maintenance and line attacks.
    Adversarial,
    /// Light load, no maintenance, no attacks.
    Easy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentArg {
    DoNothing,
    ExpertHeuristic,
    Powrl,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub fixture: FixtureName,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub chronics: usize,
    /// Rows per chronic (288 = one day at 5 minutes).
    #[arg(long, default_value_t = 288)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = SuiteKind::Adversarial)]
    pub suite: SuiteKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a reduced action set of this size.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub chronics_dir: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub budget: usize,
    /// Only use the first N chronics (sorted by file name).
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub chronics_dir: PathBuf,
    #[arg(long)]
    pub actions: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parallel environments per collection round.
    #[arg(long, default_value_t = 4)]
    pub envs: usize,
    /// Collection/update rounds.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Optimisation passes over the replay sample per round.
    #[arg(long)]
    pub update_epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long)]
    pub minibatch_size: Option<usize>,
    /// Actor hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub actor_hidden: Option<Vec<usize>>,
    /// Critic hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub critic_hidden: Option<Vec<usize>>,
    /// Wall-clock budget in seconds, checked between rounds.
    #[arg(long)]
    pub max_seconds: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub chronics_dir: PathBuf,
    #[arg(long)]
    pub actions: PathBuf,
    /// Required for the powrl agent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to all three agents with a checkpoint, else the two baselines.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub agents: Option<Vec<AgentArg>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write one episode log per row into this directory.
    #[arg(long)]
    pub logs_dir: Option<PathBuf>,
    /// Write the machine-readable report here (JSON).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Log files, or directories whose `*.log` files are read.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Grid the logs were recorded on (gives the substation count).
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub max_n: usize,
    /// Rows of the n-gram table.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub chronic: PathBuf,
    #[arg(long)]
    pub actions: PathBuf,
    #[arg(long, value_enum, default_value_t = AgentArg::ExpertHeuristic)]
    pub agent: AgentArg,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop after this many steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// One step request per line: `"accept"` or an action object.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// A scenario directory, or a directory of them.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Sessions untouched for this long are dropped.
    #[arg(long, default_value_t = 1800)]
    pub idle_timeout_secs: u64,
    /// Episode logs of finished or evicted sessions are written here.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}
