use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use imbibition_cli::config::{self, RunConfig, PRESET_NAMES};
use imbibition_cli::data::write_measurements;
use imbibition_cli::pipeline::{analyze, generate_synthetic, observations, run_calibration};

#[derive(Parser)]
#[command(name = "imbibe", version, about = "Capillary imbibition forward solver and ABC-SMC calibration")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration: synthetic-nn, synthetic-bkp, brick, ajarte.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<RunConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => Ok(RunConfig::load(path)?),
            (None, Some(name)) => Ok(config::preset(name)?),
            (None, None) => bail!("either --config or --preset is required"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem at the configured synthetic truth.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Output file (default: <output_dir>/simulated.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write pseudo-observations generated at the synthetic truth.
    Synth {
        #[command(flatten)]
        source: Source,
        /// Standard deviation of additive Gaussian noise (g/cm²).
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        /// Output file (default: <output_dir>/observations.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run ABC-SMC and write populations, diagnostics and posterior analysis.
    Calibrate {
        #[command(flatten)]
        source: Source,
        /// Worker threads; results do not depend on this.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Print the resolved configuration and exit without simulating.
        #[arg(long)]
        dry_run: bool,
    },
    /// Recompute the posterior analysis from saved population files.
    Analyze {
        /// Directory holding gen_<t>.csv files.
        #[arg(long)]
        populations: PathBuf,
        /// Configuration to use instead of the run's manifest.json.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: parent of --populations).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List the built-in presets or print one.
    Presets { name: Option<String> },
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { source, output } => {
            let cfg = source.load()?;
            let truth = cfg.resolved_truth().context("simulate needs synthetic_truth in the configuration")?;
            let (setup, _, _) = observations(&cfg)?;
            let curve = generate_synthetic(&setup, cfg.model, &truth, &cfg.grid, 0.0, cfg.smc.seed)?;
            let path = output.unwrap_or_else(|| cfg.effective_output_dir().join("simulated.csv"));
            create_parent(&path)?;
            write_measurements(&path, &curve)?;
            println!("wrote {}", path.display());
        }
        Command::Synth { source, noise_sd, output } => {
            let cfg = source.load()?;
            let truth = cfg.resolved_truth().context("synth needs synthetic_truth in the configuration")?;
            let setup = cfg.setup.resolve(cfg.setup.configured_times()?)?;
            let curve = generate_synthetic(&setup, cfg.model, &truth, &cfg.grid, noise_sd, cfg.smc.seed)?;
            let path = output.unwrap_or_else(|| cfg.effective_output_dir().join("observations.csv"));
            create_parent(&path)?;
            write_measurements(&path, &curve)?;
            println!("wrote {}", path.display());
        }
        Command::Calibrate { source, workers, dry_run } => {
            let cfg = source.load()?;
            if dry_run {
                println!("# output directory: {}", cfg.effective_output_dir().display());
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let run = run_calibration(&cfg, workers)?;
            println!("{:<10} {:>14} {:>14} {:>14}", "parameter", "median", "lower", "upper");
            for (name, s) in run.report.names.iter().zip(&run.report.summaries) {
                println!("{name:<10} {:>14.6e} {:>14.6e} {:>14.6e}", s.median, s.lower, s.upper);
            }
            println!(
                "generations {}, final epsilon {:.4e}, median-curve discrepancy {:.4e}",
                run.outcome.populations.len(),
                run.final_epsilon(),
                run.median_discrepancy
            );
            println!("outputs in {}", run.output_dir.display());
        }
        Command::Analyze { populations, config, output } => {
            let cfg = config.map(|p| RunConfig::load(&p)).transpose()?;
            let report = analyze(&populations, cfg, output)?;
            for (name, s) in report.names.iter().zip(&report.summaries) {
                println!("{name:<10} {:>14.6e} {:>14.6e} {:>14.6e}", s.median, s.lower, s.upper);
            }
        }
        Command::Presets { name } => match name {
            Some(n) => print!("{}", config::preset_text(&n).with_context(|| format!("unknown preset {n}"))?),
            None => PRESET_NAMES.iter().for_each(|n| println!("{n}")),
        },
    }
    Ok(())
}

fn create_parent(path: &std::path::Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}
