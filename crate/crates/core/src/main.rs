use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use interdelivery::experiment::{describe, emit_policy, run_experiment, Evaluation, ExperimentOutput};
use interdelivery::{Error, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "interdelivery", version, about = "Risk-sensitive inter-delivery scheduling experiments")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file; stdout when absent (and the config names none).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact evaluation of every policy at every sweep point (CSV).
    Solve,
    /// Monte Carlo evaluation of every policy at every sweep point (CSV).
    Simulate,
    /// Runs the configuration as written (CSV).
    Sweep,
    /// State count, θ threshold and level sets of the configured instance.
    Describe {
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Decision table of a policy at the first sweep point (JSON).
    EmitPolicy {
        /// Policy name; the first listed policy when absent.
        #[arg(long)]
        policy: Option<String>,
    },
}

fn write_output(path: Option<&Path>, body: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(body)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().or_else(|| cfg.output.clone());

    let csv = |cfg: &ExperimentConfig| -> Result<()> {
        let result: ExperimentOutput = run_experiment(cfg)?;
        let mut buf = Vec::new();
        result.write_csv(&mut buf)?;
        write_output(out.as_deref(), &buf)?;
        if let Some(p) = &out {
            log::info!("wrote {} rows to {}", result.rows.len(), p.display());
        }
        Ok(())
    };

    match cli.command {
        Command::Solve => {
            cfg.evaluation = Evaluation::Exact;
            cfg.validate()?;
            csv(&cfg)
        }
        Command::Simulate => {
            cfg.evaluation = Evaluation::Simulate;
            cfg.validate()?;
            csv(&cfg)
        }
        Command::Sweep => csv(&cfg),
        Command::Describe { json } => {
            let d = describe(&cfg)?;
            let body = if json {
                for w in &d.warnings {
                    log::warn!("{w}");
                }
                let mut s = serde_json::to_string_pretty(&d)?;
                s.push('\n');
                s
            } else {
                d.to_string()
            };
            write_output(cli.out.as_deref(), body.as_bytes())
        }
        Command::EmitPolicy { policy } => {
            let v = emit_policy(&cfg, policy.as_deref())?;
            let mut s = serde_json::to_string(&v)?;
            s.push('\n');
            write_output(cli.out.as_deref(), s.as_bytes())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
