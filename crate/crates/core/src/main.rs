use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use hybrid_repeater::cli::{self, Config, OutputFormat, SweepSpec};
use hybrid_repeater::links::OracleConfig;
use hybrid_repeater::timing::ProtocolVariant;
use hybrid_repeater::validation::{run_validation, Bound};

#[derive(Parser)]
#[command(name = "hybrid-repeater", version, about = "Duration and fidelity of ion/ensemble repeater protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a protocol over a list of distances.
    Sweep(SweepArgs),
    /// Optimize a protocol at a single distance.
    Optimize(OptimizeArgs),
    /// Run the invariant suites.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// TOML configuration; the built-in baseline when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// direct, direct-ion-repeater, hybrid or hybrid-repeater.
    #[arg(long)]
    protocol: Option<ProtocolVariant>,
    /// Target fidelity.
    #[arg(long)]
    fidelity: Option<f64>,
    /// Seed of the optimizer multistarts.
    #[arg(long)]
    seed: Option<u64>,
    /// Photon-number cutoff of the Fock-space circuits.
    #[arg(long)]
    cutoff: Option<usize>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Distance between the edge nodes in km.
    #[arg(long)]
    distance: f64,
}

#[derive(Args)]
struct ValidateArgs {
    /// Photon-number cutoff of the Fock-space circuits.
    #[arg(long, default_value_t = OracleConfig::default().cutoff)]
    cutoff: usize,
    /// Seed of the randomized checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// text or json.
    #[arg(long, default_value = "text")]
    format: String,
}

enum Failure {
    Config(anyhow::Error),
    Validation,
    Runtime(anyhow::Error),
}

impl From<cli::ConfigError> for Failure {
    fn from(e: cli::ConfigError) -> Self {
        Self::Config(e.into())
    }
}

fn load(args: &ScenarioArgs) -> Result<(Config, ProtocolVariant), Failure> {
    let mut cfg = match &args.config {
        Some(path) => Config::from_path(path)?,
        None => Config::parse(cli::BASELINE_PRESET)?,
    };
    if let Some(f) = args.fidelity {
        cfg.scenario.target_fidelity = f;
        cli::config::check_scenario(&cfg.scenario)?;
    }
    if let Some(s) = args.seed {
        cfg.optimizer.seed = s;
    }
    if let Some(c) = args.cutoff {
        if c == 0 {
            return Err(cli::ConfigError::field("oracle.cutoff", "cutoff must be at least 1").into());
        }
        cfg.oracle.cutoff = c;
    }
    let protocol = args
        .protocol
        .or(cfg.protocol)
        .ok_or_else(|| Failure::Config(anyhow::anyhow!("no protocol given (use --protocol or set `protocol`)")))?;
    Ok((cfg, protocol))
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p)
                .with_context(|| format!("cannot create {}", p.display()))
                .map_err(Failure::Config)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let (cfg, protocol) = load(&args.scenario)?;
    let spec = SweepSpec::from_config(&cfg, protocol);
    spec.validate()?;
    let rows = cli::run_sweep(&spec, args.threads).map_err(|e| Failure::Runtime(e.into()))?;
    let out = open_output(&args.output.out)?;
    cli::write_rows(&rows, args.output.format, protocol, cfg.scenario.target_fidelity, out)
        .context("writing the curve")
        .map_err(Failure::Runtime)
}

fn optimize(args: OptimizeArgs) -> Result<(), Failure> {
    let (cfg, protocol) = load(&args.scenario)?;
    if !(args.distance.is_finite() && args.distance >= 0.0) {
        return Err(Failure::Config(anyhow::anyhow!("--distance must be nonnegative")));
    }
    let scenario = cli::scenario_at(&cfg.scenario, protocol, args.distance);
    let row = cli::optimize_point(protocol, &scenario, &cfg.optimizer, &cfg.oracle)
        .map_err(|e| Failure::Runtime(e.into()))?;
    let out = open_output(&args.output.out)?;
    cli::write_rows(&[row], args.output.format, protocol, cfg.scenario.target_fidelity, out)
        .context("writing the result")
        .map_err(Failure::Runtime)
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    if args.cutoff == 0 {
        return Err(cli::ConfigError::field("cutoff", "cutoff must be at least 1").into());
    }
    if args.format != "text" && args.format != "json" {
        return Err(Failure::Config(anyhow::anyhow!("unknown format `{}` (expected text or json)", args.format)));
    }
    let report = run_validation(&OracleConfig { cutoff: args.cutoff }, args.seed);
    let mut out = open_output(&args.out)?;
    let written = if args.format == "json" {
        serde_json::to_writer_pretty(&mut out, &report)
            .map_err(io::Error::from)
            .and_then(|_| writeln!(out))
    } else {
        report.checks.iter().try_for_each(|c| {
            let op = match c.bound {
                Bound::AtMost => "<=",
                Bound::AtLeast => ">=",
            };
            writeln!(
                out,
                "{} {:<40} measured {:<12.4e} required {op} {:.3e}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.tolerance
            )
        })
    };
    written
        .and_then(|_| out.flush())
        .context("writing the report")
        .map_err(Failure::Runtime)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Optimize(a) => optimize(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => {
            eprintln!("validation failed");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
    }
}
