//! Offline steps for one collection and the settings that drive them.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eigenmap::{
    interpolate, read_basis, write_basis, InterpolationTable, VisualModel, VisualSettings,
    DEFAULT_BANDWIDTH_FRACTION, DEFAULT_BINS, DEFAULT_DISCARD_EPSILON, DEFAULT_K,
};
use crate::error::{Error, Result};
use crate::numerics::{pca_transform, DenseMatrix, PcaModel};
use crate::solver::{
    FusionWeights, LabelState, Modality, RowStructure, DEFAULT_LAMBDA_REG, SEMANTIC, VISUAL,
};
use crate::taxonomy::{
    assign_item_vectors, class_rows, fit_class_basis, AffinityKind, ClassBasis, ClassPriors,
    SemanticSettings, Taxonomy, DEFAULT_K_SEMANTIC, DEFAULT_SEMANTIC_SIGMA,
};

pub const VISUAL_BASIS_FILE: &str = "visual.eigb";
pub const PCA_FILE: &str = "pca.json";
pub const SEMANTIC_BASIS_FILE: &str = "semantic.json";

/// Offline and online constants shared by collections and experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub bins: usize,
    pub k_visual: usize,
    pub k_semantic: usize,
    pub pca_dims: usize,
    /// Absolute visual bandwidth; derived from the data when absent.
    pub rbf_sigma: Option<f64>,
    pub bandwidth_fraction: f64,
    pub semantic_sigma: f64,
    pub semantic_affinity: AffinityKind,
    pub class_priors: ClassPriors,
    pub discard_epsilon: f64,
    pub lambda_reg: f64,
    pub fusion: FusionWeights,
    pub step_alpha: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            k_visual: DEFAULT_K,
            k_semantic: DEFAULT_K_SEMANTIC,
            pca_dims: 64,
            rbf_sigma: None,
            bandwidth_fraction: DEFAULT_BANDWIDTH_FRACTION,
            semantic_sigma: DEFAULT_SEMANTIC_SIGMA,
            semantic_affinity: AffinityKind::RbfDissimilarity,
            class_priors: ClassPriors::Frequency,
            discard_epsilon: DEFAULT_DISCARD_EPSILON,
            lambda_reg: DEFAULT_LAMBDA_REG,
            fusion: FusionWeights::default(),
            step_alpha: crate::active::DEFAULT_STEP_ALPHA,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InfeasibleConfig(what.to_string()));
        if self.bins < 2 {
            return bad("bins must be at least 2");
        }
        if self.k_visual == 0 || self.k_semantic == 0 || self.pca_dims == 0 {
            return bad("k_visual, k_semantic and pca_dims must be positive");
        }
        if self.rbf_sigma.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return bad("rbf_sigma must be positive");
        }
        if !(self.bandwidth_fraction > 0.0 && self.semantic_sigma > 0.0) {
            return bad("bandwidths must be positive");
        }
        if !(self.lambda_reg > 0.0 && self.lambda_reg.is_finite()) {
            return bad("lambda_reg must be positive");
        }
        if !(self.step_alpha > 0.0 && self.step_alpha.is_finite()) {
            return bad("step_alpha must be positive");
        }
        if self.discard_epsilon.is_nan() || self.discard_epsilon < 0.0 {
            return bad("discard_epsilon must be nonnegative");
        }
        Ok(())
    }

    pub fn visual_settings(&self) -> VisualSettings {
        VisualSettings {
            bins: self.bins,
            k: self.k_visual,
            pca_dims: self.pca_dims,
            rbf_sigma: self.rbf_sigma,
            bandwidth_fraction: self.bandwidth_fraction,
            discard_epsilon: self.discard_epsilon,
        }
    }

    pub fn semantic_settings(&self) -> SemanticSettings {
        SemanticSettings {
            k: self.k_semantic,
            semantic_sigma: self.semantic_sigma,
            affinity: self.semantic_affinity,
            priors: self.class_priors,
            discard_epsilon: self.discard_epsilon,
        }
    }

    pub fn empty_labels(&self) -> Result<LabelState> {
        LabelState::new(self.lambda_reg)
    }
}

/// Precomputed bases of one collection.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineBases {
    pub visual: VisualModel,
    pub semantic: ClassBasis,
}

impl OfflineBases {
    /// Fits both modalities. A requested `k` above what the data supports is
    /// lowered to the number of usable eigenfunctions.
    pub fn build<S: AsRef<str>>(
        features: &DenseMatrix,
        item_class: &[S],
        taxonomy: &Taxonomy,
        config: &PipelineConfig,
    ) -> Result<Self> {
        config.validate()?;
        if features.rows() != item_class.len() {
            return Err(Error::dim(format!(
                "{} feature rows but {} item classes",
                features.rows(),
                item_class.len()
            )));
        }
        let mut vs = config.visual_settings();
        let visual = match VisualModel::fit(features, &vs) {
            Err(Error::NotEnoughEigenfunctions { available, .. }) if available > 0 => {
                vs.k = available;
                VisualModel::fit(features, &vs)?
            }
            other => other?,
        };
        let mut ss = config.semantic_settings();
        let semantic = match fit_class_basis(taxonomy, item_class, &ss) {
            Err(Error::NotEnoughEigenfunctions { available, .. }) if available > 0 => {
                ss.k = available;
                fit_class_basis(taxonomy, item_class, &ss)?
            }
            other => other?,
        };
        Ok(Self { visual, semantic })
    }

    /// The two modalities over `features` in collection order. Smoothness
    /// weights are the eigenvalues scaled by `n`, see [`item_smoothness`].
    pub fn modalities<S: AsRef<str>>(
        &self,
        features: &DenseMatrix,
        item_class: &[S],
    ) -> Result<Vec<Modality>> {
        let n = features.rows();
        let x_rot = pca_transform(&self.visual.pca, features)?;
        let u_vis = interpolate(&self.visual.basis, &x_rot)?;
        let table = InterpolationTable::new(&self.visual.basis, &x_rot)?;
        let item_row = class_rows(&self.semantic, item_class)?;
        let u_sem = assign_item_vectors(&self.semantic, item_class)?;
        let mut visual = Modality::new(
            VISUAL,
            u_vis,
            item_smoothness(&self.visual.basis.eigenvalues(), n),
        )?;
        if let Some(t) = table {
            visual = visual.with_structure(RowStructure::Interpolated(t))?;
        }
        let semantic = Modality::new(
            SEMANTIC,
            u_sem,
            item_smoothness(&self.semantic.eigenvalues, n),
        )?
        .with_structure(RowStructure::Shared {
            rows: self.semantic.vectors.clone(),
            item_row,
        })?;
        Ok(vec![visual, semantic])
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_basis(
            &self.visual.basis,
            BufWriter::new(File::create(dir.join(VISUAL_BASIS_FILE))?),
        )?;
        write_json(&dir.join(PCA_FILE), &self.visual.pca)?;
        write_json(&dir.join(SEMANTIC_BASIS_FILE), &self.semantic)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let basis = read_basis(BufReader::new(File::open(dir.join(VISUAL_BASIS_FILE))?))?;
        let pca: PcaModel = read_json(&dir.join(PCA_FILE), "pca")?;
        let semantic: ClassBasis = read_json(&dir.join(SEMANTIC_BASIS_FILE), "semantic basis")?;
        if let Some(f) = basis
            .functions
            .iter()
            .find(|f| f.dimension_index >= pca.output_dims())
        {
            return Err(Error::format(
                "basis file",
                format!(
                    "axis {} beyond {} PCA outputs",
                    f.dimension_index,
                    pca.output_dims()
                ),
            ));
        }
        Ok(Self {
            visual: VisualModel { pca, basis },
            semantic,
        })
    }
}

/// Eigenfunctions are normalized against a probability density, so over
/// `n` items an interpolated column has squared norm of order `n`, while a
/// graph eigenvector has unit norm. Scaling `Σ` by `n` makes `αᵀΣα` the
/// graph smoothness of `f = Uα` and keeps `lambda_reg` meaningful at any `n`.
pub fn item_smoothness(eigenvalues: &[f64], n: usize) -> Vec<f64> {
    eigenvalues.iter().map(|s| s * n as f64).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, value).map_err(|e| Error::format("json", e.to_string()))?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &'static str) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| Error::format(what, e.to_string()))
}
