use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use effect_fusion::gibbs::DrawsFormat;
use effect_fusion::simstudy::StudyConfig;
use effect_fusion::{ErrorClass, FusionError};
use effect_fusion_cli::{
    cmd_fit, cmd_prior, cmd_select, cmd_simulate, load_run_config, read_toml, FitOptions,
    PriorConfig,
};

#[derive(Parser)]
#[command(name = "effusion", version, about = "Bayesian effect fusion for categorical predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Bin,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the posterior for a CSV data set.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        chains: Option<usize>,
        /// Run even if the posterior propriety conditions fail.
        #[arg(long)]
        force: bool,
        /// Center and scale the response before fitting.
        #[arg(long)]
        standardize: bool,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Select fused models from stored draws and refit them.
    Select {
        /// Directory written by `fit`.
        #[arg(long)]
        draws: PathBuf,
        /// Run config to use instead of the copy stored with the draws.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the simulation study.
    Simulate {
        /// Study config; omitted fields take the default design and settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        /// Worker threads for replicates (1 runs them sequentially).
        #[arg(long)]
        replicates_parallel: Option<usize>,
    },
    /// Export the fusion probability curve and draws from the prior.
    Prior {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), FusionError> {
    match cli.command {
        Command::Fit {
            config,
            seed,
            out,
            chains,
            force,
            standardize,
            format,
        } => {
            let cfg = load_run_config(&config)?;
            let opts = FitOptions {
                seed,
                out,
                chains,
                force,
                standardize,
                format: format.map(|f| match f {
                    Format::Csv => DrawsFormat::Csv,
                    Format::Bin => DrawsFormat::Bin,
                }),
            };
            let fit = cmd_fit(cfg, &opts)?;
            println!("{} draws written to {}", fit.draws.n_rows(), fit.draws_path.display());
            if let Some(s) = fit.iat.effects {
                println!(
                    "autocorrelation time of effects: median {:.1}, range {:.1} to {:.1}",
                    s.median, s.min, s.max
                );
            }
        }
        Command::Select {
            draws,
            config,
            seed,
            out,
        } => {
            let cfg = config.as_deref().map(load_run_config).transpose()?;
            let report = cmd_select(&draws, cfg, out.as_deref(), seed)?;
            for c in &report.covariates {
                let state = if c.excluded { "excluded" } else { "kept" };
                println!("{}: {} clusters, {state}", c.name, c.partition.n_clusters());
            }
        }
        Command::Simulate {
            config,
            seed,
            out,
            replicates,
            replicates_parallel,
        } => {
            let cfg: StudyConfig = match config {
                Some(p) => read_toml(&p)?,
                None => StudyConfig::default(),
            };
            let report = cmd_simulate(cfg, seed, replicates, &out, replicates_parallel)?;
            println!("{} table rows written to {}", report.metrics.len(), out.display());
        }
        Command::Prior { config, seed, out } => {
            let cfg: PriorConfig = match config {
                Some(p) => read_toml(&p)?,
                None => PriorConfig::default(),
            };
            let res = cmd_prior(cfg, seed, &out, None)?;
            if let Some(c) = res.concentration {
                println!(
                    "band mass {:.4} (reference {:.4}): {}",
                    c.prior_mass,
                    c.reference_mass,
                    if c.passed() { "concentrated" } else { "not concentrated" }
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}
