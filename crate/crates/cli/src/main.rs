use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use randtrial_cli::commands::{cmd_enumerate, cmd_plot, cmd_simulate, cmd_summarize};
use randtrial_core::schemes::{SchemeSpec, DEFAULT_ENUMERATION_CAP};

#[derive(Parser)]
#[command(
    name = "randtrial",
    version,
    about = "Type I error convergence studies for restricted randomization in finite populations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation study described by a JSON config
    Simulate {
        /// Path to the JSON config
        #[arg(long)]
        config: PathBuf,
        /// Output directory for populations.csv and manifest.json
        #[arg(long)]
        out: PathBuf,
        /// Override the config's master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the worker thread count (0 = available parallelism)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Aggregate per-population results into convergence summaries
    Summarize {
        /// populations.csv produced by `simulate`
        #[arg(long)]
        input: PathBuf,
        /// Destination summary.csv
        #[arg(long)]
        out: PathBuf,
        /// Sequences per sample for the Monte Carlo bounds (default: each
        /// group's own nrand)
        #[arg(long)]
        l: Option<u64>,
    },
    /// Render a summary.csv as an SVG convergence chart
    Plot {
        /// summary.csv produced by `summarize`
        #[arg(long)]
        input: PathBuf,
        /// Destination .svg
        #[arg(long)]
        out: PathBuf,
        /// Override the L used for the grey Monte Carlo band
        #[arg(long)]
        l: Option<u64>,
    },
    /// Enumerate a scheme's sequence space; with outcomes, report the exact
    /// randomization-test p-value distribution and rejection proportions
    Enumerate {
        /// Scheme: simple, complete, fixed_block:B, or big_stick:M
        #[arg(long)]
        scheme: SchemeSpec,
        /// Sequence length
        #[arg(long)]
        n: usize,
        /// Optional outcome file (floats separated by commas or whitespace)
        #[arg(long)]
        y: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Enumeration cap
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u128,
    },
}

fn threads_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var("RANDTRIAL_THREADS") {
        Ok(raw) => {
            let parsed = raw
                .parse::<usize>()
                .with_context(|| format!("RANDTRIAL_THREADS must be an integer, got `{raw}`"))?;
            Ok(Some(parsed))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => bail!("RANDTRIAL_THREADS is not valid unicode: {e}"),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            threads,
        } => {
            // Precedence: --threads, then RANDTRIAL_THREADS, then the config.
            let threads = match threads {
                Some(t) => Some(t),
                None => threads_from_env()?,
            };
            let outcome = cmd_simulate(&config, &out, seed, threads)?;
            println!("wrote {}", outcome.populations_csv.display());
            println!("wrote {}", outcome.manifest_path.display());
            Ok(())
        }
        Command::Summarize { input, out, l } => {
            cmd_summarize(&input, &out, l)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Plot { input, out, l } => {
            cmd_plot(&input, &out, l)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Enumerate {
            scheme,
            n,
            y,
            alpha,
            cap,
        } => {
            let report = cmd_enumerate(scheme, n, y.as_deref(), alpha, cap)?;
            print!("{report}");
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
