//! Desk-scale stand-in data: hierarchical Gaussian classes, a balanced
//! taxonomy over them and concepts made of sibling classes.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::solver::{Label, LabelState};
use crate::taxonomy::{NodeRecord, Taxonomy, TaxonomyDocument};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    pub num_classes: usize,
    pub positive_prior: f64,
    pub cluster_spread: f64,
    pub taxonomy_depth: usize,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleConfig(m));
        if self.d == 0 || self.taxonomy_depth == 0 {
            return bad("d and taxonomy_depth must be positive".into());
        }
        if self.num_classes < 2 || self.n < self.num_classes {
            return bad(format!(
                "{} items cannot cover {} classes",
                self.n, self.num_classes
            ));
        }
        if !(self.positive_prior > 0.0 && self.positive_prior <= 0.5) {
            return bad(format!(
                "positive_prior {} outside (0, 0.5]",
                self.positive_prior
            ));
        }
        if self.positive_prior * (self.n as f64) < 10.0 {
            return bad("positive_prior * n must be at least 10".into());
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return bad("cluster_spread must be positive".into());
        }
        let largest = self.n.div_ceil(self.num_classes) as f64;
        if largest > self.positive_prior * self.n as f64 {
            return bad(format!(
                "a class of {largest} items exceeds the positive budget {}",
                self.positive_prior * self.n as f64
            ));
        }
        Ok(())
    }
}

/// A query concept: the union of some classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub name: String,
    pub positive_classes: Vec<String>,
}

impl Concept {
    pub fn contains(&self, class: &str) -> bool {
        self.positive_classes.iter().any(|c| c == class)
    }

    /// Ground truth for every item.
    pub fn truth<S: AsRef<str>>(&self, item_class: &[S]) -> Vec<Label> {
        item_class
            .iter()
            .map(|c| Label::from_bool(self.contains(c.as_ref())))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub item_class: Vec<String>,
    pub taxonomy_document: TaxonomyDocument,
    pub taxonomy: Taxonomy,
    pub concepts: Vec<Concept>,
}

/// A dataset in the ingestion file formats.
#[derive(Debug, Clone)]
pub struct CollectionFiles {
    pub features: Vec<u8>,
    pub classes: Vec<u8>,
    pub taxonomy: Vec<u8>,
}

impl Dataset {
    /// Serializes features, item classes (ids `item{i}`) and the taxonomy.
    pub fn export(&self) -> Result<CollectionFiles> {
        let mut features = Vec::new();
        crate::io::write_features(&self.features, &mut features)?;
        let items: Vec<crate::io::ItemRecord> = self
            .item_class
            .iter()
            .enumerate()
            .map(|(i, c)| crate::io::ItemRecord {
                item_id: format!("item{i}"),
                class_id: c.clone(),
                thumbnail: None,
            })
            .collect();
        let mut classes = Vec::new();
        crate::io::write_classes(&items, &mut classes)?;
        let taxonomy =
            serde_json::to_vec_pretty(&self.taxonomy_document).expect("taxonomy serializes");
        Ok(CollectionFiles {
            features,
            classes,
            taxonomy,
        })
    }
}

/// Smallest `b` with `b^depth ≥ classes`.
fn branching(classes: usize, depth: usize) -> usize {
    let mut b = 1usize;
    while b
        .checked_pow(depth as u32)
        .is_none_or(|leaves| leaves < classes)
    {
        b += 1;
    }
    b.max(2)
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (c, d, depth) = (config.num_classes, config.d, config.taxonomy_depth);
    let b = branching(c, depth);

    // Leaf slot s sits under internal node (level l, index s / b^(depth-l)).
    let mut nodes = vec![NodeRecord {
        id: "root".into(),
        parent: None,
        count: 0,
    }];
    let mut centers: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    centers.insert("root".into(), vec![0.0; d]);
    let class_ids: Vec<String> = (0..c).map(|i| format!("c{i}")).collect();
    let per_class: Vec<usize> = (0..c)
        .map(|i| config.n / c + usize::from(i < config.n % c))
        .collect();
    for level in 1..=depth {
        let width = b.pow((depth - level) as u32);
        let scale = 0.5f64.powi(level as i32 - 1);
        let used = (c - 1) / width + 1;
        for idx in 0..used {
            let (id, count) = if level == depth {
                (class_ids[idx].clone(), per_class[idx] as u64)
            } else {
                (format!("n{level}_{idx}"), 0)
            };
            let parent = if level == 1 {
                "root".to_string()
            } else {
                format!("n{}_{}", level - 1, idx / b)
            };
            let base = centers[&parent].clone();
            let center = base
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + scale * z
                })
                .collect();
            centers.insert(id.clone(), center);
            nodes.push(NodeRecord {
                id,
                parent: Some(parent),
                count,
            });
        }
    }
    let taxonomy_document = TaxonomyDocument { nodes };
    let taxonomy = Taxonomy::from_document(&taxonomy_document)?;

    let n = config.n;
    let item_class: Vec<String> = (0..n).map(|i| class_ids[i % c].clone()).collect();
    let mut values = Vec::with_capacity(n * d);
    for cls in &item_class {
        let center = &centers[cls];
        for v in center {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(v + config.cluster_spread * z);
        }
    }
    let features = DenseMatrix::new(n, d, values)?;

    // Chunk each parent's leaf children into concepts within the budget.
    let budget = config.positive_prior * n as f64;
    let mut concepts = Vec::new();
    let parents: Vec<String> = class_ids
        .iter()
        .filter_map(|cl| taxonomy.parent(cl).ok().flatten().map(str::to_string))
        .fold(Vec::new(), |mut acc, p| {
            if !acc.contains(&p) {
                acc.push(p);
            }
            acc
        });
    for p in parents {
        let kids: Vec<&String> = class_ids
            .iter()
            .filter(|cl| taxonomy.parent(cl).ok().flatten() == Some(p.as_str()))
            .collect();
        let mut chunk: Vec<String> = Vec::new();
        let mut size = 0usize;
        for kid in kids {
            let k_size = per_class[class_index(kid)];
            if !chunk.is_empty() && (size + k_size) as f64 > budget {
                concepts.push(make_concept(concepts.len(), std::mem::take(&mut chunk)));
                size = 0;
            }
            chunk.push(kid.clone());
            size += k_size;
        }
        if !chunk.is_empty() {
            concepts.push(make_concept(concepts.len(), chunk));
        }
    }
    Ok(Dataset {
        features,
        item_class,
        taxonomy_document,
        taxonomy,
        concepts,
    })
}

fn class_index(id: &str) -> usize {
    id[1..].parse().expect("generated class id")
}

fn make_concept(i: usize, classes: Vec<String>) -> Concept {
    Concept {
        name: format!("concept{i}"),
        positive_classes: classes,
    }
}

/// Disjoint pool and test indices, both ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub pool: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn pool_mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.pool {
            m[i] = true;
        }
        m
    }
}

/// Holds out `test_per_class` random items of every class.
pub fn split<S: AsRef<str>>(item_class: &[S], test_per_class: usize, seed: u64) -> Result<Split> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in item_class.iter().enumerate() {
        by_class.entry(c.as_ref()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::new();
    let mut pool = Vec::new();
    for (class, mut items) in by_class {
        if items.len() <= test_per_class {
            return Err(Error::InfeasibleSplit(format!(
                "class {class} has {} items, needs more than {test_per_class}",
                items.len()
            )));
        }
        items.shuffle(&mut rng);
        test.extend_from_slice(&items[..test_per_class]);
        pool.extend_from_slice(&items[test_per_class..]);
    }
    test.sort_unstable();
    pool.sort_unstable();
    Ok(Split { pool, test })
}

/// Nine positives and one negative drawn uniformly from the pool.
pub fn initial_labels(
    truth: &[Label],
    pool: &[usize],
    seed: u64,
    lambda_reg: f64,
) -> Result<LabelState> {
    let pos: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&i| truth[i] == Label::Positive)
        .collect();
    let neg: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&i| truth[i] == Label::Negative)
        .collect();
    if pos.len() < 9 || neg.is_empty() {
        return Err(Error::InfeasibleConcept(format!(
            "pool has {} positives and {} negatives",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = sample(&mut rng, pos.len(), 9)
        .into_iter()
        .map(|j| (pos[j], Label::Positive));
    let negative = neg[sample(&mut rng, neg.len(), 1).index(0)];
    LabelState::with_labels(
        lambda_reg,
        chosen.chain(std::iter::once((negative, Label::Negative))),
    )
}
