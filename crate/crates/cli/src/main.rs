use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dpclust::verify::{run_checks, VerifyConfig};
use dpclust_cli::config::{resolve_config, Overrides};
use dpclust_cli::pipeline::{run_pipeline, summarize};
use dpclust_cli::{exit_code, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_OK};

#[derive(Parser)]
#[command(name = "dpclust", version, about = "Nonparametric Bayesian clustering of expression profiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the posterior and write all artifacts.
    Run(RunArgs),
    /// Run the built-in oracle checks.
    Verify(VerifyArgs),
    /// Recompute similarity, partition, summaries and cross-tab from a trace.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration (a previous manifest.json also works).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset underlying the configuration.
    #[arg(long)]
    preset: Option<String>,
    /// Tab-separated data file.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset.clone(),
            data: self.data.clone(),
            seed: self.seed,
            chains: self.chains,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SummarizeArgs {
    #[command(flatten)]
    common: Common,
    /// Trace written by `run`; defaults to trace.csv in the output directory.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// JSON check configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces every concentration parameter used by the checks.
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Comma-separated criterion numbers; default all.
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<u8>,
}

fn verify(args: &VerifyArgs) -> Result<i32> {
    let mut cfg: VerifyConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{}: invalid check configuration", p.display()))?
        }
        None => VerifyConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.theta.is_some() {
        cfg.theta = args.theta;
    }
    if !args.criteria.is_empty() {
        cfg.criteria = args.criteria.clone();
    }
    let reports = run_checks(&cfg)?;
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        println!("{failed} of {} checks failed", reports.len());
        return Ok(EXIT_CHECK_FAILED);
    }
    println!("all {} checks passed", reports.len());
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let c = &args.common;
            let cfg = resolve_config(c.config.as_deref(), &c.overrides())?;
            let warnings = run_pipeline(&cfg, &c.out)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("wrote artifacts to {}", c.out.display());
            Ok(EXIT_OK)
        }
        Command::Summarize(args) => {
            let c = &args.common;
            let cfg = resolve_config(c.config.as_deref(), &c.overrides())?;
            let trace = args
                .trace
                .clone()
                .unwrap_or_else(|| c.out.join(dpclust_cli::output::TRACE));
            summarize(&cfg, &trace, &c.out)?;
            eprintln!("wrote summaries to {}", c.out.display());
            Ok(EXIT_OK)
        }
        Command::Verify(args) => verify(&args),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for numerical failures here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            e.print().ok();
            return ExitCode::from(if usage_error { EXIT_INVALID as u8 } else { EXIT_OK as u8 });
        }
    };
    let code = dispatch(cli).unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        exit_code(&e)
    });
    ExitCode::from(code as u8)
}
