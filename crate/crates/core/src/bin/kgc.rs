use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgc::cli::{
    apply_overrides, cmd_compare, cmd_inspect, cmd_prepare, cmd_train, RunConfig,
    FINAL_ACCURACY_WINDOW,
};
use kgc::Result;

#[derive(Parser)]
#[command(
    name = "kgc",
    version,
    about = "Learn to integrate compressed contexts into a knowledge graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// key=value run configuration
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir`
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `seed`
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Split a triple file into train / holdout and generate evaluation contexts
    Prepare(RunArgs),
    /// Train the Q-network on the prepared split
    Train(RunArgs),
    /// Evaluate random, rule-based, supervised and DQN policies
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Timed evaluation runs per policy; the median time is reported
        #[arg(long)]
        repeat: Option<usize>,
    },
    /// Summarise a triple file, checkpoint, log, manifest or report
    Inspect { path: PathBuf },
}

fn load(args: RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    apply_overrides(&mut cfg, args.output_dir, args.seed);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(args) => {
            let cfg = load(args)?;
            let m = cmd_prepare(&cfg)?;
            println!(
                "prepared {}: {} train, {} holdout ({} for evaluation), {} evaluation contexts",
                cfg.output_dir.display(),
                m.train_triples,
                m.holdout_triples,
                m.eval_holdout_triples,
                m.eval_contexts
            );
        }
        Command::Train(args) => {
            let cfg = load(args)?;
            let out = cmd_train(&cfg)?;
            match out.final_accuracy {
                Some(acc) => {
                    println!("final greedy accuracy (last {FINAL_ACCURACY_WINDOW} steps): {acc:.4}")
                }
                None => println!("final greedy accuracy: n/a (no training steps)"),
            }
        }
        Command::Compare { run, repeat } => {
            let mut cfg = load(run)?;
            if let Some(r) = repeat {
                cfg.eval.repeat = r;
            }
            let out = cmd_compare(&cfg)?;
            print!("{}", out.table);
        }
        Command::Inspect { path } => print!("{}", cmd_inspect(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kgc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
