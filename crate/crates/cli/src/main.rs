use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use ambrsim::harness::{self, AnalyticRanges, ScenarioPreset};
use ambrsim::SimConfig;

#[derive(Parser)]
#[command(name = "ambrsim", version, about = "MANET routing simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a preset sweep or a single configuration and write summary CSV.
    Run {
        /// fig8-size-sweep, fig9-mobility-sweep, fig10-pause-sweep or a desk-* preset.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// key=value configuration file describing a single scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        base_seed: Option<u64>,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the closed-form model over a Cartesian grid of parameters.
    Analytic {
        #[arg(long, value_delimiter = ',', default_value = "1")]
        lambda: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        mu: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        e_l: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        e_n: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        kk: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        p0: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        k: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a configuration file, then print the resolved values.
    ValidateConfig { path: PathBuf },
}

fn output(out: Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(&p).with_context(|| format!("cannot write {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(path: &PathBuf) -> anyhow::Result<SimConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    SimConfig::parse(&text).with_context(|| path.display().to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Run {
            preset,
            config,
            replications,
            base_seed,
            out,
        } => {
            let scenario = match (preset, config) {
                (Some(name), None) => harness::preset(&name)?,
                (None, Some(path)) => ScenarioPreset::single("config", load(&path)?),
                _ => bail!("exactly one of --preset or --config is required"),
            };
            let reps = replications.unwrap_or(scenario.base.replications);
            let seed = base_seed.unwrap_or(scenario.base.seed);
            let rows = harness::run_scenario(&scenario, reps, seed)?;
            harness::emit_csv(&rows, output(out)?)?;
        }
        Cmd::Analytic {
            lambda,
            mu,
            e_l,
            e_n,
            kk,
            p0,
            k,
            out,
        } => {
            let ranges = AnalyticRanges {
                lambda,
                mu,
                e_l,
                e_n,
                kk,
                p0,
                k,
            };
            let rows = harness::analytic_sweep(&ranges)?;
            harness::emit_analytic_csv(&rows, output(out)?)?;
        }
        Cmd::ValidateConfig { path } => {
            let cfg = load(&path)?;
            println!("{cfg:#?}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
