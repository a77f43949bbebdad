use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rashomon_cli::config::parse_job_range;
use rashomon_cli::{pipeline, CliError, ExperimentConfig, StageReport};

#[derive(Parser)]
#[command(name = "rashomon", version, about = "Verify and explain Rashomon sets of cloned taxi policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of training seeds, counting up from the base seed.
    #[arg(long, global = true)]
    seeds: Option<u64>,
    /// Job range `min..max`; the minimum also becomes the trained job count.
    #[arg(long, global = true)]
    jobs: Option<String>,
    /// Reachability property, e.g. "P=? [ F jobs_done=5 & done=1 ]".
    #[arg(long, global = true)]
    property: Option<String>,
    /// State-space cap for model and induced-chain construction.
    #[arg(long, global = true)]
    cap: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the taxi MDP.
    Build,
    /// Synthesize the optimal expert policy and its dataset.
    Synthesize,
    /// Train one network per seed.
    Train,
    /// Group policies by induced DTMC and model check each class.
    Verify,
    /// Rank features by mean saliency for every policy.
    Attribute,
    /// Select the Rashomon set from the largest class.
    Rashomon,
    /// Evaluate the Rashomon set over the shifted job range.
    Shift,
    /// Run every stage and write a manifest.
    All,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = cli.seeds {
        cfg.set_seed_count(n);
    }
    if let Some(jobs) = &cli.jobs {
        let range = parse_job_range(jobs)?;
        cfg.taxi.num_jobs = *range.start();
        cfg.shift_jobs = range;
    }
    if let Some(p) = &cli.property {
        cfg.property = Some(p.clone());
    }
    if let Some(cap) = cli.cap {
        cfg.taxi.state_cap = cap;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_stage(r: &StageReport) {
    println!("{:<10} {:>8.2}s  {}", r.stage, r.seconds, r.outputs.join(" "));
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let stage = match cli.command {
        Command::Build => pipeline::cmd_build(&cfg)?,
        Command::Synthesize => pipeline::cmd_synthesize(&cfg)?,
        Command::Train => pipeline::cmd_train(&cfg)?,
        Command::Verify => pipeline::cmd_verify(&cfg)?,
        Command::Attribute => pipeline::cmd_attribute(&cfg)?,
        Command::Rashomon => pipeline::cmd_rashomon(&cfg)?,
        Command::Shift => pipeline::cmd_shift(&cfg)?,
        Command::All => {
            let manifest = pipeline::cmd_all(&cfg)?;
            manifest.stages.iter().for_each(print_stage);
            println!(
                "manifest   {:>8.2}s  {}",
                manifest.total_seconds,
                cfg.output_dir.join(pipeline::MANIFEST_FILE).display()
            );
            return Ok(());
        }
    };
    print_stage(&stage);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
