//! Command line runner.
//!
//! `khessian <command> [--config FILE] [--out DIR] [--seed N] [--reproducible] [--print-config]`
//! runs one experiment. `khessian run --config FILE` takes the command from the
//! file, and `khessian gallery <eval|predict|scan>` evaluates gallery specs
//! written with the short keys `n, k, a, b, variant, gamma, p`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use khessian::config::{load_kv, Command, ExperimentConfig};
use khessian::kv::KvMap;
use khessian::gallery::{power_smoothness_scan, predict, rhs_real, GalleryConfig};
use khessian::runner::run;
use khessian::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "khessian", version, about = "Experiments on degenerate k-Hessian equations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Symmetric-function property suites and the key-inequality fuzz.
    AlgebraSuite(RunArgs),
    /// Solve the doubly radial Dirichlet problem.
    Solve(RunArgs),
    /// Solve and probe the regularity of the solution.
    Probe(RunArgs),
    /// Solve and probe over a grid of (a, b).
    SharpnessSweep(RunArgs),
    /// Exponents and regime of one example.
    Predict(RunArgs),
    /// Run whatever `command` the config names.
    Run(RunArgs),
    /// Gallery spec utilities.
    #[command(subcommand)]
    Gallery(GalleryCmd),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sequential linear algebra kernels, so reruns are bit-identical.
    #[arg(long)]
    reproducible: bool,
    /// Print the resolved configuration with every default and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand, Debug)]
enum GalleryCmd {
    /// Evaluate the datum at a point.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Comma separated real coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Vec<f64>,
    },
    /// Print the exponent prediction as JSON.
    Predict {
        #[arg(long)]
        config: PathBuf,
    },
    /// Second-difference scan of `F^gamma` at spacing `h` and `h/2`.
    Scan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1.0 / 256.0)]
        h: f64,
    },
}

fn resolve(args: &RunArgs, command: Option<Command>) -> Result<ExperimentConfig> {
    let kv = match &args.config {
        Some(path) => load_kv(path)?,
        None if command.is_none() => return Err(Error::Config("`run` needs --config".into())),
        None => KvMap::new(),
    };
    let named: Option<Command> = kv.get("command").map(str::parse).transpose()?;
    let mut cfg = ExperimentConfig::from_kv(kv)?;
    if let Some(c) = command {
        if named.is_some_and(|n| n != c) {
            return Err(Error::Config(format!("config names command `{}` but `{c}` was requested", cfg.command)));
        }
        cfg.command = c;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.reproducible {
        cfg.reproducible = true;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn experiment(args: &RunArgs, command: Option<Command>) -> Result<()> {
    let cfg = resolve(args, command)?;
    if args.print_config {
        print!("{}", cfg.to_kv().to_text());
        return Ok(());
    }
    let outcome = run(&cfg, &cfg.output_dir)?;
    print!("{}", outcome.summary);
    Ok(())
}

fn gallery(cmd: &GalleryCmd) -> Result<()> {
    let load = |p: &PathBuf| -> Result<GalleryConfig> {
        let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
        GalleryConfig::parse(&text)
    };
    match cmd {
        GalleryCmd::Eval { config, point } => {
            let g = load(config)?;
            if point.len() != g.spec.n {
                return Err(Error::Config(format!("point has {} coordinates, expected {}", point.len(), g.spec.n)));
            }
            println!("{:?}", rhs_real(point, &g.spec));
        }
        GalleryCmd::Predict { config } => {
            let g = load(config)?;
            let pred = predict(&g.spec, g.gamma.or(g.p))?;
            println!("{}", serde_json::to_string_pretty(&pred)?);
        }
        GalleryCmd::Scan { config, h } => {
            let g = load(config)?;
            let gamma = g.gamma.ok_or_else(|| Error::Config("scan needs `gamma`".into()))?;
            println!("{}", serde_json::to_string_pretty(&power_smoothness_scan(&g.spec, gamma, *h)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::AlgebraSuite(a) => experiment(a, Some(Command::AlgebraSuite)),
        Cmd::Solve(a) => experiment(a, Some(Command::Solve)),
        Cmd::Probe(a) => experiment(a, Some(Command::Probe)),
        Cmd::SharpnessSweep(a) => experiment(a, Some(Command::SharpnessSweep)),
        Cmd::Predict(a) => experiment(a, Some(Command::Predict)),
        Cmd::Run(a) => experiment(a, None),
        Cmd::Gallery(g) => gallery(g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
