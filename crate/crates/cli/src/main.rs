use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

#[derive(Parser, Debug)]
#[command(name = "cyclecost", version, about = "Rainflow cycle-based battery degradation cost and dispatch")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Run configuration (JSON, or TOML by extension). Defaults to the
    /// regulation case study.
    #[arg(long, global = true, env = "CYCLECOST_CONFIG")]
    pub config: Option<PathBuf>,

    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for output files. Overrides `output_dir` of the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Format of what is printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Count rainflow cycles in a `t,soc` profile. Writes cycles.json.
    Count {
        profile: PathBuf,
    },
    /// Degradation cost of a `t,soc` profile under the configured model.
    /// Writes cost.json.
    Cost {
        profile: PathBuf,
    },
    /// Degradation-aware dispatch for the configured signal. Writes
    /// solution.csv, report.json and convergence.csv.
    Optimize {
        /// Inner iterations per barrier stage.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Rainflow, no-cost and linear-cost policies on the same signal. Writes
    /// benchmark.json, benchmark.txt, power.csv and soc.csv.
    Benchmark {
        /// Inner iterations per barrier stage for both optimized policies.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Run oracle property suites. Writes verify.json; exits 1 on any
    /// violation.
    Verify {
        /// convexity, merge, perturbation, gradient, solver-gap or all.
        #[arg(default_value = "all")]
        suite: String,

        /// Cases per property and model. The solver-gap suite runs one
        /// instance per 50 samples.
        #[arg(long, default_value_t = 1000)]
        samples: usize,

        /// Stress model to test instead of the built-in set, as
        /// `variant:c1,c2`. Convexity is not enforced here so that concave
        /// models can serve as negative controls. Repeatable.
        #[arg(long = "model")]
        models: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Count { profile } => commands::count(&cli.global, profile),
        Command::Cost { profile } => commands::cost(&cli.global, profile),
        Command::Optimize { iters } => commands::optimize(&cli.global, *iters),
        Command::Benchmark { iters } => commands::benchmark(&cli.global, *iters),
        Command::Verify { suite, samples, models } => commands::verify(&cli.global, suite, *samples, models),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
