use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod grid;

use commands::CliError;

/// Bayesian inference for correlated binomial proportions.
#[derive(Debug, Parser)]
#[command(name = "mvbeta", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a prior from a specification and check its admissibility.
    Fit {
        /// Prior specification (JSON).
        spec: PathBuf,
        /// Output distribution (JSON).
        #[arg(short, long)]
        out: PathBuf,
        /// Admissibility report (JSON); printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Largest dimension handled with the full parametrisation.
        #[arg(long, default_value_t = mvbeta::admissibility::DEFAULT_MAX_FULL_DIM)]
        max_full_dim: usize,
        /// Write the closest attainable prior even if the moments are infeasible.
        #[arg(long)]
        allow_approximate: bool,
    },
    /// Update a distribution with a binary data matrix.
    Update {
        dist: PathBuf,
        /// Headered CSV with one 0/1 column per proportion.
        data: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the cell counts of this batch (CSV).
        #[arg(long)]
        counts_out: Option<PathBuf>,
    },
    /// Simultaneous credible region.
    Region {
        dist: PathBuf,
        /// approximate, copula or extensive.
        #[arg(long, default_value = "copula")]
        method: mvbeta::Method,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// identity, all-vs-one, or a CSV file (label, k1..km per row).
        #[arg(long, default_value = "identity")]
        contrast: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Posterior sample size for sampling-based methods.
        #[arg(long, default_value_t = mvbeta::regions::DEFAULT_SAMPLES)]
        n_r: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Histogram grids of pairwise and marginal posterior densities.
    Grid {
        dist: PathBuf,
        /// Pairs such as "1-2,1-3" (1-based); all pairs when omitted.
        #[arg(long)]
        pairs: Option<String>,
        #[arg(long, default_value_t = 20)]
        resolution: usize,
        #[arg(long, default_value_t = mvbeta::regions::DEFAULT_SAMPLES)]
        n_r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run coverage simulations from a scenario file (one object or a list).
    Simulate {
        scenario: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Use full-scale run counts and posterior sample sizes.
        #[arg(long)]
        paper_scale: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit {
            spec,
            out,
            report,
            max_full_dim,
            allow_approximate,
        } => commands::fit(
            &spec,
            &out,
            report.as_deref(),
            max_full_dim,
            allow_approximate,
        ),
        Command::Update {
            dist,
            data,
            out,
            counts_out,
        } => commands::update(&dist, &data, &out, counts_out.as_deref()),
        Command::Region {
            dist,
            method,
            level,
            contrast,
            seed,
            n_r,
            out,
        } => commands::region(&dist, method, level, &contrast, seed, n_r, &out),
        Command::Grid {
            dist,
            pairs,
            resolution,
            n_r,
            seed,
            out,
        } => grid::cmd_grid(&dist, pairs.as_deref(), resolution, n_r, seed, &out),
        Command::Simulate {
            scenario,
            out,
            paper_scale,
        } => commands::simulate(&scenario, &out, paper_scale),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
