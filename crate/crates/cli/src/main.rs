use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use stacost::runner::{self, ExperimentConfig, Severity};

/// Compare the energetic cost of finite-time adiabatic control protocols.
///
/// Every flag can also be set through an environment variable with the
/// `STACOST_` prefix, e.g. `STACOST_SEED=3`.
#[derive(Parser, Debug)]
#[command(name = "stacost", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a preset or a config file and write CSV/JSON output.
    Run(RunArgs),
    /// Check a preset or config file without simulating.
    Validate(Source),
    /// List the built-in presets.
    ListPresets,
}

#[derive(Args, Debug)]
struct Source {
    /// Name of a built-in preset.
    #[arg(env = "STACOST_PRESET", conflicts_with = "config")]
    preset: Option<String>,

    /// TOML experiment config.
    #[arg(long, short, env = "STACOST_CONFIG")]
    config: Option<PathBuf>,

    /// Override the config's random seed.
    #[arg(long, env = "STACOST_SEED")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    source: Source,

    /// Output directory [default: out/<name>].
    #[arg(long, short, env = "STACOST_OUT")]
    out: Option<PathBuf>,

    /// Worker threads for scans [default: all cores].
    #[arg(long, env = "STACOST_THREADS")]
    threads: Option<usize>,

    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(src: &Source) -> Result<ExperimentConfig> {
    let mut cfg = runner::load(src.preset.as_deref(), src.config.as_deref())?;
    if let Some(seed) = src.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::ListPresets => {
            for (name, about) in runner::list_presets() {
                println!("{name:<6} {about}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(src) => {
            let cfg = resolve(&src)?;
            let report = runner::validate(&cfg);
            if report.is_clean() {
                println!("{}: ok", cfg.name);
            }
            for issue in &report.issues {
                let tag = match issue.severity {
                    Severity::Error => "error",
                    Severity::Warning => "warning",
                };
                println!("{}: {tag}: {}", cfg.name, issue.message);
            }
            Ok(if report.has_errors() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Run(args) => {
            let cfg = resolve(&args.source)?;
            if args.print_config {
                print!("{}", cfg.to_toml()?);
                return Ok(ExitCode::SUCCESS);
            }
            if let Some(n) = args.threads {
                runner::configure_threads(n)?;
            }
            let out = args.out.unwrap_or_else(|| runner::default_out_dir(&cfg));
            let summary = runner::run(&cfg, &out).with_context(|| format!("running {}", cfg.name))?;
            for f in &summary.files {
                println!("{}", out.join(f).display());
            }
            for failure in &summary.failures {
                eprintln!("warning: {failure}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
