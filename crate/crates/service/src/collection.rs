//! Ingested collections: raw files, precomputed bases and per-item bases.

use std::fs;
use std::path::Path;

use retrieve_core::io::{read_classes, read_features, ItemRecord};
use retrieve_core::taxonomy::{Taxonomy, TaxonomyDocument};
use retrieve_core::{Error as CoreError, Modality, OfflineBases, PipelineConfig};
use serde::Serialize;

use crate::error::{Result, ServiceError};

pub const FEATURES_FILE: &str = "features.fmat";
pub const CLASSES_FILE: &str = "classes.csv";
pub const TAXONOMY_FILE: &str = "taxonomy.json";
pub const CONFIG_FILE: &str = "config.json";
pub const BASES_DIR: &str = "bases";

/// Raw uploaded files. A missing config means defaults.
#[derive(Debug, Clone, Default)]
pub struct Upload {
    pub features: Vec<u8>,
    pub classes: Vec<u8>,
    pub taxonomy: Vec<u8>,
    pub config: Option<Vec<u8>>,
}

#[derive(Debug)]
pub struct Collection {
    pub id: String,
    pub items: Vec<ItemRecord>,
    pub config: PipelineConfig,
    pub modalities: Vec<Modality>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CollectionDescriptor {
    pub collection_id: String,
    pub n: usize,
    pub k_visual: usize,
    pub k_semantic: usize,
}

struct Parsed {
    features: retrieve_core::DenseMatrix,
    items: Vec<ItemRecord>,
    taxonomy: Taxonomy,
    config: PipelineConfig,
}

fn parse(upload: &Upload) -> Result<Parsed> {
    let config: PipelineConfig = match &upload.config {
        Some(bytes) if !bytes.iter().all(u8::is_ascii_whitespace) => {
            serde_json::from_slice(bytes).map_err(|e| ServiceError::ingest("config", e))?
        }
        _ => PipelineConfig::default(),
    };
    config
        .validate()
        .map_err(|e| ServiceError::ingest("config", e))?;
    let features = read_features(upload.features.as_slice())
        .map_err(|e| ServiceError::ingest("features", e))?;
    let items =
        read_classes(upload.classes.as_slice()).map_err(|e| ServiceError::ingest("classes", e))?;
    if items.len() != features.rows() {
        return Err(ServiceError::ingest(
            "classes",
            format!(
                "{} rows but the feature matrix has {}",
                items.len(),
                features.rows()
            ),
        ));
    }
    let doc: TaxonomyDocument = serde_json::from_slice(&upload.taxonomy)
        .map_err(|e| ServiceError::ingest("taxonomy", e))?;
    let taxonomy =
        Taxonomy::from_document(&doc).map_err(|e| ServiceError::ingest("taxonomy", e))?;
    if let Some(it) = items.iter().find(|it| !taxonomy.contains(&it.class_id)) {
        return Err(ServiceError::ingest(
            "classes",
            format!("item `{}` has unknown class `{}`", it.item_id, it.class_id),
        ));
    }
    Ok(Parsed {
        features,
        items,
        taxonomy,
        config,
    })
}

fn class_ids(items: &[ItemRecord]) -> Vec<&str> {
    items.iter().map(|it| it.class_id.as_str()).collect()
}

fn build_error(e: CoreError) -> ServiceError {
    match e {
        CoreError::UnknownClass(_) | CoreError::Dimension(_) => ServiceError::ingest("classes", e),
        CoreError::InfeasibleConfig(_) => ServiceError::ingest("config", e),
        CoreError::Io(io) => ServiceError::Io(io),
        other => ServiceError::ingest("features", other),
    }
}

impl Collection {
    /// Validates the upload, fits both bases and writes everything under
    /// `dir`, which must not exist yet.
    pub fn ingest(id: String, upload: &Upload, dir: &Path) -> Result<Self> {
        let parsed = parse(upload)?;
        let classes = class_ids(&parsed.items);
        let bases =
            OfflineBases::build(&parsed.features, &classes, &parsed.taxonomy, &parsed.config)
                .map_err(build_error)?;
        let modalities = bases
            .modalities(&parsed.features, &classes)
            .map_err(build_error)?;

        let staging = dir.with_extension("partial");
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        fs::write(staging.join(FEATURES_FILE), &upload.features)?;
        fs::write(staging.join(CLASSES_FILE), &upload.classes)?;
        fs::write(staging.join(TAXONOMY_FILE), &upload.taxonomy)?;
        fs::write(
            staging.join(CONFIG_FILE),
            serde_json::to_vec_pretty(&parsed.config).expect("config serializes"),
        )?;
        bases.write_dir(&staging.join(BASES_DIR))?;
        fs::rename(&staging, dir)?;

        Ok(Self {
            id,
            items: parsed.items,
            config: parsed.config,
            modalities,
        })
    }

    /// Reloads a collection written by [`Collection::ingest`] without
    /// refitting.
    pub fn load(id: String, dir: &Path) -> Result<Self> {
        let upload = Upload {
            features: fs::read(dir.join(FEATURES_FILE))?,
            classes: fs::read(dir.join(CLASSES_FILE))?,
            taxonomy: fs::read(dir.join(TAXONOMY_FILE))?,
            config: Some(fs::read(dir.join(CONFIG_FILE))?),
        };
        let parsed = parse(&upload)?;
        let bases = OfflineBases::read_dir(&dir.join(BASES_DIR))?;
        let modalities = bases.modalities(&parsed.features, &class_ids(&parsed.items))?;
        Ok(Self {
            id,
            items: parsed.items,
            config: parsed.config,
            modalities,
        })
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }

    pub fn descriptor(&self) -> CollectionDescriptor {
        let k = |name: &str| {
            self.modalities
                .iter()
                .find(|m| m.name == name)
                .map_or(0, |m| m.eigenvalues.len())
        };
        CollectionDescriptor {
            collection_id: self.id.clone(),
            n: self.n(),
            k_visual: k(retrieve_core::solver::VISUAL),
            k_semantic: k(retrieve_core::solver::SEMANTIC),
        }
    }
}
