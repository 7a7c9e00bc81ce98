use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use layerlock_cli::{default_out, execute, CliError, Command, ExperimentConfig, Format, Run};

/// Semi-open deployment lab: rank-collapse theory, toy victims, distillation
/// attacks and SOLID layer selection.
#[derive(Parser)]
#[command(name = "layerlock", version)]
struct Cli {
    /// TOML experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $LAYERLOCK_OUT, then ./layerlock-out).
    #[arg(long, global = true, env = "LAYERLOCK_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Format of the summary printed to stdout; both are always written.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Collapse vs. secured depth fraction on a random bounded stack.
    TheorySweep,
    /// Adversarial non-collapsing instance with random top-layer replacements.
    TheoryAdversarial,
    /// Search for the largest complement contraction under the norm budget.
    TheoryBeta,
    /// Train the toy victim and save its checkpoint.
    TrainVictim,
    /// Distillation difficulty of every bottom prefix.
    Dd,
    /// Smallest bottom prefix within epsilon of the full difficulty.
    SolidSelect,
    /// Distillation attack against every configured strategy.
    Attack,
    /// Fine-tune the public parameters on the downstream task.
    Customize,
    /// Slide a window of secured layers up the stack.
    SweepPlacement,
    /// Grow the secured bottom prefix.
    SweepSize,
    /// Correlation between difficulty and ratio over the sweep tables.
    Correlate,
    /// Markdown ratio table from one or more attack directories.
    Report {
        /// Attack output directories (default: the output directory).
        dirs: Vec<PathBuf>,
    },
}

fn fail(e: &CliError) -> ExitCode {
    let msg = e.to_string().replace('\n', " ");
    eprintln!("error[{}]: {}", e.kind(), msg.trim());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return fail(&CliError::Usage(first));
        }
    };
    let (command, inputs) = match cli.command {
        Cmd::TheorySweep => (Command::TheorySweep, vec![]),
        Cmd::TheoryAdversarial => (Command::TheoryAdversarial, vec![]),
        Cmd::TheoryBeta => (Command::TheoryBeta, vec![]),
        Cmd::TrainVictim => (Command::TrainVictim, vec![]),
        Cmd::Dd => (Command::Dd, vec![]),
        Cmd::SolidSelect => (Command::SolidSelect, vec![]),
        Cmd::Attack => (Command::Attack, vec![]),
        Cmd::Customize => (Command::Customize, vec![]),
        Cmd::SweepPlacement => (Command::SweepPlacement, vec![]),
        Cmd::SweepSize => (Command::SweepSize, vec![]),
        Cmd::Correlate => (Command::Correlate, vec![]),
        Cmd::Report { dirs } => (Command::Report, dirs),
    };
    let config = match ExperimentConfig::load(cli.config.as_deref()) {
        Ok(c) => c.resolve(cli.seed),
        Err(e) => return fail(&e),
    };
    let run = Run {
        config,
        out: cli.out.unwrap_or_else(default_out),
        jobs: cli.jobs,
        format: match cli.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        },
        inputs,
    };
    match execute(command, &run) {
        Ok(outcome) => {
            let _ = std::io::stdout().write_all(outcome.stdout.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
