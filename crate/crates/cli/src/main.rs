use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use retrieve_cli::{parse_alphas, parse_strategies, CvAlpha, Experiment, Precompute};

#[derive(Parser)]
#[command(
    name = "retrieve",
    version,
    about = "Interactive concept retrieval with eigenfunction graph SSL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the visual and semantic bases of a collection
    Precompute {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        taxonomy: PathBuf,
        /// Pipeline settings as JSON; flags below override it
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        k_visual: Option<usize>,
        #[arg(long)]
        k_semantic: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare query strategies on synthetic concepts
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// One or more of adaptive, constant, random, comma separated
        #[arg(long, default_value = "adaptive,constant,random")]
        strategy: String,
        #[arg(long, default_value_t = 200)]
        rounds: usize,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Report zero wall times so identical runs give identical bytes
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// F1 curves of the adaptive strategy per threshold step size
    CvAlpha {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "0.5,1,2,4,8")]
        alphas: String,
        #[arg(long, default_value_t = 200)]
        rounds: usize,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic collection (features, classes, taxonomy, concepts)
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the session HTTP service
    Serve {
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Precompute {
            features,
            classes,
            taxonomy,
            config,
            bins,
            k_visual,
            k_semantic,
            out,
        } => {
            let bases = retrieve_cli::precompute(&Precompute {
                features,
                classes,
                taxonomy,
                config,
                bins,
                k_visual,
                k_semantic,
                out: out.clone(),
            })?;
            eprintln!(
                "wrote {} visual and {} semantic eigenfunctions to {}",
                bases.visual.basis.k(),
                bases.semantic.k(),
                out.display()
            );
        }
        Command::Experiment {
            config,
            strategy,
            rounds,
            seeds,
            no_timing,
            out,
        } => retrieve_cli::experiment(&Experiment {
            config,
            strategies: parse_strategies(&strategy)?,
            rounds,
            seeds,
            timing: !no_timing,
            out,
        })?,
        Command::CvAlpha {
            config,
            alphas,
            rounds,
            seeds,
            out,
        } => retrieve_cli::cv_alpha(&CvAlpha {
            config,
            alphas: parse_alphas(&alphas)?,
            rounds,
            seeds,
            out,
        })?,
        Command::Generate { config, out } => retrieve_cli::generate(&config, &out)?,
        Command::Serve { data, addr } => retrieve_cli::serve(&data, addr)?,
    }
    Ok(())
}
