//! `svgf`: command-line front end for the mean-field and particle experiments.
//!
//! The worker pool size can be set with `SVGF_THREADS`; nothing else is read
//! from the environment.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use svgf_core::experiment::{
    emit_plots, parse_config_file, run_experiment, run_invariant_suite, run_sweep, write_report,
    PlotStyle,
};

const THREADS_VAR: &str = "SVGF_THREADS";

#[derive(Parser)]
#[command(name = "svgf", version, about = "Stein variational flow experiments on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run { config: PathBuf },
    /// Run every `*.cfg` in a directory and collect their rates.
    Sweep {
        config_dir: PathBuf,
        /// Where the combined rates table and overlay plots go.
        #[arg(long, default_value = "out/sweep")]
        out: PathBuf,
    },
    /// Render diagnostics CSVs into one SVG plot.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Style::Auto)]
        style: Style,
    },
    /// Run the built-in invariant suite.
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Auto,
    Loglog,
    Semilog,
}

impl From<Style> for PlotStyle {
    fn from(s: Style) -> Self {
        match s {
            Style::Auto => PlotStyle::Auto,
            Style::Loglog => PlotStyle::LogLog,
            Style::Semilog => PlotStyle::SemiLog,
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got `{raw}`"))?;
    anyhow::ensure!(n > 0, "{THREADS_VAR} must be a positive integer, got `{raw}`");
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

fn run(command: Command) -> Result<bool> {
    let mut stdout = std::io::stdout().lock();
    match command {
        Command::Run { config } => {
            let cfg = parse_config_file(&config)?;
            let summary = run_experiment(&cfg)?;
            write_report(&summary, &mut stdout)?;
            Ok(summary.succeeded())
        }
        Command::Sweep { config_dir, out } => {
            let sweep = run_sweep(&config_dir, &out)?;
            for (path, result) in &sweep.runs {
                match result {
                    Ok(summary) => write_report(summary, &mut stdout)?,
                    Err(e) => println!("run {}: error: {e}", path.display()),
                }
            }
            println!("rates: {}", sweep.rates_path.display());
            for p in &sweep.plots {
                println!("plot: {}", p.display());
            }
            Ok(sweep.succeeded())
        }
        Command::Plot { csv, out, style } => {
            emit_plots(&csv, &out, style.into())?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Check => {
            let results = run_invariant_suite();
            let mut ok = true;
            for r in &results {
                ok &= r.passed;
                println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| run(cli.command));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
