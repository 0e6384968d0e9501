//! `smallball`: run a small-ball experiment from a JSON config.
//!
//! Exit status: 0 on success (for `verify`, only if every row passes),
//! 1 when some verify row fails, 2 on any error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use smallball::experiment::{emit_plot_data, run, ExperimentConfig, Mode, RadiusGrid, RadiusUnit, Report};

#[derive(Parser)]
#[command(name = "smallball", version, about = "Small-ball bounds, exact oracles and Monte Carlo checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stable rank, δ, r₀, tail energies and dyadic block ranks of the matrix.
    Analyze(Common),
    /// Numeric bounds at every radius of the grid.
    Bound(Common),
    /// Monte Carlo concentration estimates at every radius.
    Estimate(Common),
    /// Exact small-ball probabilities for discrete laws, as {radius: probability}.
    Exact(Common),
    /// Compare measured concentration against the bounds; fails unless every row passes.
    Verify(Common),
    /// Smallest constant consistent with the measurements on the grid.
    FitConstant(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON, "schema": 1).
    config: PathBuf,
    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the radius grid; repeat for several radii. Keeps the config's
    /// unit, or `scaled` if it has none.
    #[arg(long = "radius")]
    radius: Vec<f64>,
    /// Candidate centers as a JSON array of points, e.g. '[[0,0],[1,0]]'.
    #[arg(long)]
    centers: Option<String>,
    /// Write CSV plot data here, with a config sidecar next to it (verify only).
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Mode, Common) {
        match self {
            Command::Analyze(c) => (Mode::Analyze, c),
            Command::Bound(c) => (Mode::Bound, c),
            Command::Estimate(c) => (Mode::Estimate, c),
            Command::Exact(c) => (Mode::Exact, c),
            Command::Verify(c) => (Mode::Verify, c),
            Command::FitConstant(c) => (Mode::FitConstant, c),
        }
    }
}

fn resolve(mode: Mode, args: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    if let Some(m) = cfg.mode.filter(|m| *m != mode) {
        eprintln!("note: config mode {m:?} replaced by subcommand {mode:?}");
    }
    cfg.mode = Some(mode);
    if let Some(n) = args.samples {
        cfg.estimator.samples = n;
    }
    if let Some(s) = args.seed {
        cfg.estimator.seed = s;
    }
    if !args.radius.is_empty() {
        let unit = cfg.radii.as_ref().map(|g| g.unit).unwrap_or(RadiusUnit::Scaled);
        cfg.radii = Some(RadiusGrid { unit, values: args.radius.clone() });
    }
    if let Some(text) = &args.centers {
        let centers: Vec<Vec<f64>> = serde_json::from_str(text).context("parsing --centers")?;
        cfg.estimator.centers = Some(centers);
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool> {
    let (mode, args) = cli.command.split();
    if args.plot.is_some() && mode != Mode::Verify {
        bail!("--plot is only available for verify");
    }
    let cfg = resolve(mode, &args)?;
    let report = run(&cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.output {
        Some(path) => std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    if let Report::Verify(v) = &report {
        if let Some(path) = &args.plot {
            let sidecar = emit_plot_data(v, &cfg, path).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("plot data: {} (config: {})", path.display(), sidecar.display());
        }
        eprintln!("{}", v.radius_convention);
        for row in v.rows.iter().filter(|r| !r.pass) {
            eprintln!(
                "FAIL radius {}: {:?} value {} > bound {} ({:?}), center {:?}",
                row.radius, row.provenance, row.compared, row.bound, row.branch, row.center
            );
        }
        return Ok(v.summary.all_pass);
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
