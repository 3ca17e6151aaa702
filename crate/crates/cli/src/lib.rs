//! Command-line front end: train, search, evaluate, compile, export, cost
//! and predict.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RunArgs, RunConfig};
pub use error::{exit, CliError, Result};

#[derive(Parser, Debug)]
#[command(name = "dln", version, about = "Train logic-gate regression networks and compile them to circuits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one network and write model.json and metrics.json
    Train(RunArgs),
    /// Random hyperparameter search, final fit and test evaluation
    Search(SearchArgs),
    /// Score a model or circuit on a labelled CSV
    Evaluate(EvaluateArgs),
    /// Turn a model into circuit.json, rules.txt, circuit.dot and cost.json
    Compile(CompileArgs),
    /// Write the circuit of a model as Graphviz DOT
    Export(ExportArgs),
    /// Print the operation count of a model or circuit
    Cost(CostArgs),
    /// Write predictions in original target units
    Predict(PredictArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct SearchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// number of sampled configurations
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CostOverrides {
    /// cost table override, e.g. `fp16_mul=1500` or `XOR=2` (repeatable)
    #[arg(long = "cost", value_name = "KEY=VALUE")]
    pub cost: Vec<String>,
    /// keep the circuit exactly as discretized
    #[arg(long)]
    pub no_simplify: bool,
}

#[derive(Args, Debug, Clone)]
pub struct CompileArgs {
    /// model.json written by `train` or `search`
    #[arg(long)]
    pub model: PathBuf,
    /// output directory (defaults to the model's directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub opts: CostOverrides,
}

#[derive(Args, Debug, Clone)]
pub struct ExportArgs {
    /// model.json or circuit.json
    #[arg(long)]
    pub model: PathBuf,
    /// DOT file to write (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_simplify: bool,
}

#[derive(Args, Debug, Clone)]
pub struct CostArgs {
    /// model.json or circuit.json
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub opts: CostOverrides,
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    /// model.json or circuit.json
    #[arg(long)]
    pub model: PathBuf,
    /// CSV containing the feature columns and the target
    #[arg(long)]
    pub data: PathBuf,
    /// metrics file to write (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    /// model.json or circuit.json
    #[arg(long)]
    pub model: PathBuf,
    /// CSV containing the feature columns
    #[arg(long)]
    pub data: PathBuf,
    /// predictions CSV to write (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => commands::cmd_train(&a),
        Command::Search(a) => commands::cmd_search(&a),
        Command::Evaluate(a) => commands::cmd_evaluate(&a),
        Command::Compile(a) => commands::cmd_compile(&a),
        Command::Export(a) => commands::cmd_export(&a),
        Command::Cost(a) => commands::cmd_cost(&a),
        Command::Predict(a) => commands::cmd_predict(&a),
    }
}

/// Parse `args` (including the program name), run, print a one-line
/// diagnostic on failure and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            e.exit_code()
        }
    }
}
