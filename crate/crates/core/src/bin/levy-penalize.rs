use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use levy_penalize::error::{Error, Result};
use levy_penalize::exec::{configure_threads, Runtime};
use levy_penalize::levy_models::LevyModel;
use levy_penalize::path_sim::{write_path_dump, Streams, Walker};
use levy_penalize::runner::{run_suite, RunConfig, Suite};

#[derive(Parser)]
#[command(name = "levy-penalize", version, about = "Supremum penalization experiments for Lévy processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ratio under an exponential clock against the penalized target.
    ExpClock(RunArgs),
    /// Ratio under a constant clock against the penalized target (Brownian).
    ConstClock(RunArgs),
    /// Normalized mass against its exact value or limit.
    Mass(RunArgs),
    /// Importance-weighted sample of the penalized law.
    PenalizedSample(RunArgs),
    /// Explicit path-decomposition sampler (Brownian).
    Decompose(RunArgs),
    /// Compare the importance-weighted and decomposition samplers.
    Crosscheck(RunArgs),
    /// Analytic identity residuals.
    Identities(RunArgs),
    /// Write one simulated path as a binary dump.
    Debug(DebugArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file with [run] and [tolerance] sections; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// brownian | stable:alpha=<a>,rho=<r>
    #[arg(long)]
    model: Option<String>,
    /// indicator:a=<a> | expdecay:c=<c> | table:<csv>
    #[arg(long)]
    weight: Option<String>,
    /// one | x-le:b=<b> | s-le:b=<b> | logistic | tanh
    #[arg(long)]
    functional: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    paths: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// CSV report path; the manifest is written next to it.
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated clock grid.
    #[arg(long, allow_hyphen_values = true)]
    clocks: Option<String>,
    /// exp | const (mass suite)
    #[arg(long)]
    clock_kind: Option<String>,
    /// Post-maximum probe time (decompose).
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long, value_parser = ["on", "off"])]
    refine: Option<String>,
    /// Tolerance override, repeatable.
    #[arg(long = "tol", value_name = "KEY=VALUE")]
    tol: Vec<String>,
}

#[derive(Args)]
struct DebugArgs {
    #[arg(long, default_value = "brownian")]
    model: String,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "off", value_parser = ["on", "off"])]
    refine: String,
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn into_config(self, suite: Suite) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_config_file(path)?,
            None => RunConfig::default(),
        };
        cfg.suite = suite;
        let flags = [
            ("model", self.model),
            ("weight", self.weight),
            ("functional", self.functional),
            ("t", self.t),
            ("dt", self.dt),
            ("paths", self.paths),
            ("seed", self.seed),
            ("out", self.out),
            ("clocks", self.clocks),
            ("clock_kind", self.clock_kind),
            ("horizon", self.horizon),
            ("refine", self.refine),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set("run", key, &v)?;
            }
        }
        for kv in &self.tol {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--tol expects KEY=VALUE, got `{kv}`")))?;
            cfg.set("tolerance", k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

fn debug_dump(args: DebugArgs) -> Result<()> {
    let model = LevyModel::parse(&args.model)?;
    let mut w = Walker::new(&model, args.dt, args.refine == "on", Streams::new(args.seed, 0))?
        .recording(model.kind(), args.seed);
    w.advance_to(args.horizon);
    let path = w.into_path().expect("recording enabled");
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_path_dump(&path, BufWriter::new(File::create(&args.out)?))?;
    eprintln!("wrote {} points to {}", path.len(), args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    let (suite, args) = match cli.command {
        Command::ExpClock(a) => (Suite::ExpClock, a),
        Command::ConstClock(a) => (Suite::ConstClock, a),
        Command::Mass(a) => (Suite::Mass, a),
        Command::PenalizedSample(a) => (Suite::PenalizedSample, a),
        Command::Decompose(a) => (Suite::Decompose, a),
        Command::Crosscheck(a) => (Suite::Crosscheck, a),
        Command::Identities(a) => (Suite::Identities, a),
        Command::Debug(a) => return debug_dump(a).map(|_| 0),
    };
    let cfg = args.into_config(suite)?;
    let outcome = run_suite(&cfg, Runtime::default())?;
    eprintln!(
        "{suite}: {} rows, {} in {:.2}s -> {}",
        outcome.report.len(),
        if outcome.exit_code == 0 { "all pass" } else { "FAILURES" },
        outcome.wall_time_s,
        cfg.out.display()
    );
    Ok(outcome.exit_code as u8)
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("LEVY_PENALIZE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        configure_threads(n);
    }
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e @ (Error::Usage(_) | Error::Parse { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
