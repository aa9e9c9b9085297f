use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mfmdp::evaluate::DEFAULT_EVAL_CAP;
use mfmdp::solver::DEFAULT_MAX_ITERATIONS;

/// Solver and simulator for mean-field MDPs with common noise.
#[derive(Parser, Debug)]
#[command(name = "mfmdp", version, about)]
pub struct Cli {
    /// Cap on worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "MFMDP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the lifted Bellman equation and save an artifact.
    Solve(SolveArgs),
    /// Simulate the N-agent system and the limit system under a policy.
    Simulate(SimulateArgs),
    /// Gap between N-agent and limit gains over a list of N.
    Converge(ConvergeArgs),
    /// Exact (sampling-free) evaluation of a policy.
    Evaluate(EvaluateArgs),
    /// Builtin example models.
    #[command(subcommand)]
    Examples(ExamplesCommand),
    /// Re-run the command recorded in a manifest and check the outputs.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Value,
    Policy,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SolveArgs {
    /// Model file, or the name of a builtin example.
    #[arg(long, env = "MFMDP_MODEL")]
    pub model: String,
    /// Simplex grid resolution n_eta.
    #[arg(long, env = "MFMDP_N_ETA", default_value_t = 10)]
    pub n_eta: usize,
    /// Kernel-row lattice resolution n_A.
    #[arg(long, env = "MFMDP_N_ACTIONS_GRID", default_value_t = 10)]
    pub n_actions_grid: usize,
    #[arg(long, env = "MFMDP_TOL", default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, env = "MFMDP_METHOD", value_enum, default_value = "value")]
    pub method: MethodArg,
    /// Search deterministic feedback kernels only.
    #[arg(long, env = "MFMDP_FEEDBACK_ONLY")]
    pub feedback_only: bool,
    #[arg(long, env = "MFMDP_MAX_ITERATIONS", default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iterations: usize,
    /// Random joint laws used to estimate the Lipschitz constants.
    #[arg(long, env = "MFMDP_LIPSCHITZ_SAMPLES", default_value_t = 200)]
    pub lipschitz_samples: usize,
    #[arg(long, env = "MFMDP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "MFMDP_OUT")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, env = "MFMDP_MODEL")]
    pub model: String,
    /// Solver artifact, or `script:ex4_2` / `script:constant`.
    #[arg(long, env = "MFMDP_POLICY")]
    pub policy: String,
    #[arg(long, env = "MFMDP_AGENTS", default_value_t = 1000)]
    pub agents: usize,
    /// Truncation horizon; by default the smallest T with tail bound below tol/10.
    #[arg(long, env = "MFMDP_HORIZON")]
    pub horizon: Option<usize>,
    #[arg(long, env = "MFMDP_TOL", default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, env = "MFMDP_REPLICATIONS", default_value_t = 100)]
    pub replications: usize,
    #[arg(long, env = "MFMDP_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Agents of the first replication whose trajectories are written.
    #[arg(long, env = "MFMDP_RECORD_AGENTS", default_value_t = 0)]
    pub record_agents: usize,
    #[arg(long, env = "MFMDP_OUT")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ConvergeArgs {
    #[arg(long, env = "MFMDP_MODEL")]
    pub model: String,
    #[arg(long, env = "MFMDP_POLICY")]
    pub policy: String,
    /// Comma-separated, strictly increasing agent counts.
    #[arg(long = "agents", env = "MFMDP_AGENTS", value_delimiter = ',', required = true, num_args = 1..)]
    pub ns: Vec<usize>,
    #[arg(long, env = "MFMDP_HORIZON")]
    pub horizon: Option<usize>,
    #[arg(long, env = "MFMDP_TOL", default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, env = "MFMDP_REPLICATIONS", default_value_t = 100)]
    pub replications: usize,
    #[arg(long, env = "MFMDP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "MFMDP_OUT")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long, env = "MFMDP_MODEL")]
    pub model: String,
    /// Solver artifact, `open-loop-search`, or `script:<name>`.
    #[arg(long, env = "MFMDP_POLICY", default_value = "open-loop-search")]
    pub policy: String,
    /// Truncation tolerance on the discounted tail.
    #[arg(long, env = "MFMDP_TOL", default_value_t = 1e-6)]
    pub tol: f64,
    /// Maximum number of lifted steps the evaluation may take.
    #[arg(long, env = "MFMDP_CAP", default_value_t = DEFAULT_EVAL_CAP)]
    pub cap: u64,
    #[arg(long, env = "MFMDP_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ExamplesCommand {
    /// List the builtin examples.
    List,
    /// Write builtin examples as model files.
    Export {
        #[arg(long, env = "MFMDP_OUT")]
        out: PathBuf,
        /// Export only this example.
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory (default: the manifest's own directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
