use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vanet_sec::config::{parse_config_resolved, ResolvedConfig};
use vanet_sec::harness::{execute, parse_override, parse_sweep, validation_report, HarnessError, RunRequest};

#[derive(Parser)]
#[command(name = "vanet-sec", version, about = "V2V security overhead and emergency-braking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replications (optionally over a sweep) and write CSVs and a manifest.
    Run(RunArgs),
    /// Print the resolved configuration with provenance; runs nothing.
    Validate(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Replace one key, e.g. `--override scheme=BP`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    /// Sweep one key over values, e.g. `--sweep alpha=1,5,10`. Repeatable.
    #[arg(long = "sweep", value_name = "KEY=V1,V2,...")]
    sweeps: Vec<String>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Resolve and check everything, then exit without simulating.
    #[arg(long)]
    validate: bool,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load(args: &ConfigArgs, extra: &[(String, String)]) -> Result<ResolvedConfig, HarnessError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|source| HarnessError::Io { path: args.config.clone(), source })?;
    let mut resolved = parse_config_resolved(&text)?;
    let mut pairs = args.overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>, _>>()?;
    pairs.extend_from_slice(extra);
    resolved.apply_overrides(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    Ok(resolved)
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let mut extra = Vec::new();
    if let Some(s) = args.seed {
        extra.push(("seed".to_owned(), s.to_string()));
    }
    if let Some(r) = args.replications {
        extra.push(("replications".to_owned(), r.to_string()));
    }
    let resolved = load(&args.cfg, &extra)?;
    let sweeps = args.sweeps.iter().map(|s| parse_sweep(s)).collect::<Result<Vec<_>, _>>()?;
    if args.validate {
        vanet_sec::harness::expand_sweeps(&resolved.config, &sweeps)?;
        print!("{}", validation_report(&resolved));
        return Ok(());
    }
    let out = args.out.ok_or_else(|| HarnessError::Argument { arg: "--out".into(), reason: "required for run".into() })?;
    let manifest = execute(&RunRequest { resolved, sweeps, workers: args.workers, out })?;
    for f in &manifest.outputs {
        println!("{f}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Validate(a) => load(&a, &[]).map(|r| print!("{}", validation_report(&r))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
