//! Subcommand implementations behind the `retrieve` binary.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use retrieve_core::harness::{
    cross_validate_step_alpha, generate_synthetic, ExperimentConfig, SyntheticConfig, Workbench,
};
use retrieve_core::io::{read_classes, read_features};
use retrieve_core::taxonomy::{Taxonomy, TaxonomyDocument};
use retrieve_core::{OfflineBases, PipelineConfig, StrategyKind};
use serde::Serialize;

pub struct Precompute {
    pub features: PathBuf,
    pub classes: PathBuf,
    pub taxonomy: PathBuf,
    pub config: Option<PathBuf>,
    pub bins: Option<usize>,
    pub k_visual: Option<usize>,
    pub k_semantic: Option<usize>,
    pub out: PathBuf,
}

/// Fits both bases and writes them to `out`. Flags override the config file.
pub fn precompute(args: &Precompute) -> Result<OfflineBases> {
    let mut config: PipelineConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(b) = args.bins {
        config.bins = b;
    }
    if let Some(k) = args.k_visual {
        config.k_visual = k;
    }
    if let Some(k) = args.k_semantic {
        config.k_semantic = k;
    }
    let features = read_features(BufReader::new(open(&args.features)?))
        .with_context(|| format!("reading {}", args.features.display()))?;
    let items = read_classes(BufReader::new(open(&args.classes)?))
        .with_context(|| format!("reading {}", args.classes.display()))?;
    let doc: TaxonomyDocument = read_json(&args.taxonomy)?;
    let taxonomy = Taxonomy::from_document(&doc)
        .with_context(|| format!("validating {}", args.taxonomy.display()))?;
    let classes: Vec<&str> = items.iter().map(|i| i.class_id.as_str()).collect();
    let bases = OfflineBases::build(&features, &classes, &taxonomy, &config)?;
    bases.write_dir(&args.out)?;
    Ok(bases)
}

pub struct Experiment {
    pub config: PathBuf,
    pub strategies: Vec<StrategyKind>,
    pub rounds: usize,
    pub seeds: usize,
    pub timing: bool,
    pub out: PathBuf,
}

pub fn experiment(args: &Experiment) -> Result<()> {
    if args.strategies.is_empty() {
        bail!("no strategy given");
    }
    let bench = Workbench::prepare(load_experiment_config(&args.config)?)?;
    let doc = bench.compare(&args.strategies, args.rounds, args.seeds, args.timing)?;
    write_json(&args.out, &doc)
}

pub struct CvAlpha {
    pub config: PathBuf,
    pub alphas: Vec<f64>,
    pub rounds: usize,
    pub seeds: usize,
    pub out: PathBuf,
}

pub fn cv_alpha(args: &CvAlpha) -> Result<()> {
    if args.alphas.is_empty() {
        bail!("no alpha given");
    }
    let bench = Workbench::prepare(load_experiment_config(&args.config)?)?;
    let doc = cross_validate_step_alpha(&bench, &args.alphas, args.rounds, args.seeds)?;
    write_json(&args.out, &doc)
}

/// Writes a synthetic collection in the ingestion formats plus its concepts.
pub fn generate(config: &Path, out: &Path) -> Result<()> {
    let cfg: SyntheticConfig = read_json(config)?;
    let data = generate_synthetic(&cfg)?;
    let files = data.export()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("features.fmat"), files.features)?;
    fs::write(out.join("classes.csv"), files.classes)?;
    fs::write(out.join("taxonomy.json"), files.taxonomy)?;
    write_json(&out.join("concepts.json"), &data.concepts)
}

pub fn serve(data: &Path, addr: std::net::SocketAddr) -> Result<()> {
    let service = retrieve_service::Service::open(data)
        .with_context(|| format!("opening data directory {}", data.display()))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(retrieve_service::serve(Arc::new(service), addr))?;
    Ok(())
}

pub fn parse_alphas(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|a| {
            let v: f64 = a
                .trim()
                .parse()
                .with_context(|| format!("bad alpha `{a}`"))?;
            if !(v > 0.0 && v.is_finite()) {
                bail!("alpha must be positive, got {v}");
            }
            Ok(v)
        })
        .collect()
}

pub fn parse_strategies(s: &str) -> Result<Vec<StrategyKind>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let k: StrategyKind = part.trim().parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}

fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(open(path)?))
        .with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
