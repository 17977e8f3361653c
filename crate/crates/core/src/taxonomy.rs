//! Semantic modality built from a class hierarchy.
//!
//! Classes are compared with Lin's information-content similarity, turned
//! into an exact class-level affinity matrix, and solved with the same
//! density-weighted eigenproblem as the dense features (one "axis" whose
//! points are the classes). Items inherit the row of their class.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::eigenmap::DensityOperator;
use crate::error::{Error, Result};
use crate::numerics::{sym_generalized_eig, DenseMatrix};

pub const DEFAULT_SEMANTIC_SIGMA: f64 = 0.5;
pub const DEFAULT_K_SEMANTIC: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub parent: Option<String>,
    pub count: u64,
}

/// On-disk taxonomy document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyDocument {
    pub nodes: Vec<NodeRecord>,
}

/// Validated rooted tree with precomputed subtree item counts.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    ids: Vec<String>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    own_count: Vec<u64>,
    subtree: Vec<u64>,
    index: HashMap<String, usize>,
    root: usize,
}

impl Taxonomy {
    pub fn from_document(doc: &TaxonomyDocument) -> Result<Self> {
        let mut index = HashMap::with_capacity(doc.nodes.len());
        for (i, node) in doc.nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(Error::DuplicateNode(node.id.clone()));
            }
        }
        let mut parent = Vec::with_capacity(doc.nodes.len());
        let mut roots = Vec::new();
        for (i, node) in doc.nodes.iter().enumerate() {
            match &node.parent {
                None => {
                    roots.push(i);
                    parent.push(None);
                }
                Some(p) => {
                    let pi = *index.get(p).ok_or_else(|| Error::UnknownParent {
                        node: node.id.clone(),
                        parent: p.clone(),
                    })?;
                    parent.push(Some(pi));
                }
            }
        }
        if doc.nodes.is_empty() {
            return Err(Error::ZeroTotalItems);
        }
        if roots.len() > 1 {
            return Err(Error::MultipleRoots(
                roots.iter().map(|&i| doc.nodes[i].id.clone()).collect(),
            ));
        }
        let Some(&root) = roots.first() else {
            // every node has a parent, so following parents must loop
            return Err(Error::CycleDetected(doc.nodes[0].id.clone()));
        };

        let n = doc.nodes.len();
        let mut children = vec![Vec::new(); n];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        let mut depth = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        depth[root] = 0;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                queue.push_back(c);
            }
        }
        if let Some(stray) = (0..n).find(|&i| depth[i] == usize::MAX) {
            return Err(Error::CycleDetected(doc.nodes[stray].id.clone()));
        }

        let own_count: Vec<u64> = doc.nodes.iter().map(|n| n.count).collect();
        let mut subtree = own_count.clone();
        for &v in order.iter().rev() {
            if let Some(p) = parent[v] {
                subtree[p] += subtree[v];
            }
        }
        if subtree[root] == 0 {
            return Err(Error::ZeroTotalItems);
        }
        if let Some(empty) = (0..n).find(|&i| subtree[i] == 0) {
            return Err(Error::EmptySubtree(doc.nodes[empty].id.clone()));
        }

        Ok(Self {
            ids: doc.nodes.iter().map(|n| n.id.clone()).collect(),
            parent,
            depth,
            own_count,
            subtree,
            index,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn root(&self) -> &str {
        &self.ids[self.root]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    fn node(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn parent(&self, id: &str) -> Result<Option<&str>> {
        Ok(self.parent[self.node(id)?].map(|p| self.ids[p].as_str()))
    }

    pub fn children(&self, id: &str) -> Result<Vec<&str>> {
        let v = self.node(id)?;
        Ok((0..self.len())
            .filter(|&i| self.parent[i] == Some(v))
            .map(|i| self.ids[i].as_str())
            .collect())
    }

    pub fn is_leaf(&self, id: &str) -> Result<bool> {
        let v = self.node(id)?;
        Ok(!self.parent.contains(&Some(v)))
    }

    pub fn total_items(&self) -> u64 {
        self.subtree[self.root]
    }

    /// Items assigned directly to `id` (not counting descendants).
    pub fn own_count(&self, id: &str) -> Result<u64> {
        Ok(self.own_count[self.node(id)?])
    }

    /// Fraction of all items that fall in the subtree of `id`.
    pub fn probability(&self, id: &str) -> Result<f64> {
        Ok(self.prob(self.node(id)?))
    }

    fn prob(&self, v: usize) -> f64 {
        self.subtree[v] as f64 / self.subtree[self.root] as f64
    }

    fn lowest_common_ancestor(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].expect("non-root has parent");
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].expect("non-root has parent");
        }
        while a != b {
            a = self.parent[a].expect("non-root has parent");
            b = self.parent[b].expect("non-root has parent");
        }
        a
    }

    pub fn lowest_common_ancestor_of(&self, a: &str, b: &str) -> Result<&str> {
        let l = self.lowest_common_ancestor(self.node(a)?, self.node(b)?);
        Ok(&self.ids[l])
    }

    fn lin(&self, a: usize, b: usize) -> Result<f64> {
        for v in [a, b] {
            if self.subtree[v] == self.subtree[self.root] {
                return Err(Error::RootOperand(self.ids[v].clone()));
            }
        }
        if a == b {
            return Ok(1.0);
        }
        let l = self.lowest_common_ancestor(a, b);
        let p_l = self.prob(l);
        if p_l >= 1.0 {
            return Ok(0.0);
        }
        let sim = 2.0 * p_l.ln() / (self.prob(a).ln() + self.prob(b).ln());
        Ok(sim.clamp(0.0, 1.0))
    }
}

pub fn load_taxonomy(json: &str) -> Result<Taxonomy> {
    let doc: TaxonomyDocument =
        serde_json::from_str(json).map_err(|e| Error::format("taxonomy document", e))?;
    Taxonomy::from_document(&doc)
}

/// `2 log p(lso(a, b)) / (log p(a) + log p(b))`.
///
/// Returns 0 when the lowest common ancestor covers every item, and
/// [`Error::RootOperand`] when either operand does.
pub fn lin_similarity(t: &Taxonomy, a: &str, b: &str) -> Result<f64> {
    t.lin(t.node(a)?, t.node(b)?)
}

/// How class-to-class similarity becomes an affinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityKind {
    /// `exp(−(1 − lin)² / 2σ²)`
    RbfDissimilarity,
    /// `lin` itself.
    Lin,
}

fn pairwise(t: &Taxonomy, classes: &[String], map: impl Fn(f64) -> f64) -> Result<DenseMatrix> {
    let nodes = classes
        .iter()
        .map(|c| t.node(c))
        .collect::<Result<Vec<_>>>()?;
    let c = nodes.len();
    let mut w = DenseMatrix::zeros(c, c);
    for i in 0..c {
        w.set(i, i, map(t.lin(nodes[i], nodes[i])?));
        for j in (i + 1)..c {
            let v = map(t.lin(nodes[i], nodes[j])?);
            w.set(i, j, v);
            w.set(j, i, v);
        }
    }
    Ok(w)
}

pub fn class_affinity(
    t: &Taxonomy,
    classes: &[String],
    semantic_sigma: f64,
) -> Result<DenseMatrix> {
    if !(semantic_sigma > 0.0) {
        return Err(Error::InfeasibleConfig(format!(
            "semantic_sigma must be positive, got {semantic_sigma}"
        )));
    }
    let denom = 2.0 * semantic_sigma * semantic_sigma;
    pairwise(t, classes, |lin| (-(1.0 - lin).powi(2) / denom).exp())
}

/// Alternate affinity that uses Lin similarity directly.
pub fn lin_affinity(t: &Taxonomy, classes: &[String]) -> Result<DenseMatrix> {
    pairwise(t, classes, |lin| lin)
}

pub fn affinity(
    t: &Taxonomy,
    classes: &[String],
    kind: AffinityKind,
    semantic_sigma: f64,
) -> Result<DenseMatrix> {
    match kind {
        AffinityKind::RbfDissimilarity => class_affinity(t, classes, semantic_sigma),
        AffinityKind::Lin => lin_affinity(t, classes),
    }
}

/// Per-class eigenvector rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBasis {
    pub class_ids: Vec<String>,
    /// C × k_s
    pub vectors: DenseMatrix,
    pub eigenvalues: Vec<f64>,
}

impl ClassBasis {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }
}

pub fn build_class_basis(
    class_ids: &[String],
    affinity: &DenseMatrix,
    class_priors: &[f64],
    k_s: usize,
    discard_epsilon: f64,
) -> Result<ClassBasis> {
    let c = class_ids.len();
    if class_priors.len() != c {
        return Err(Error::dim(format!(
            "{} priors for {c} classes",
            class_priors.len()
        )));
    }
    let mut seen = std::collections::HashSet::with_capacity(c);
    if let Some(dup) = class_ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::DuplicateNode(dup.clone()));
    }
    let op = DensityOperator::new(affinity, class_priors)?;
    let pairs = sym_generalized_eig(&op.laplacian, &op.mass, c)?;
    let kept: Vec<_> = pairs
        .into_iter()
        .filter(|p| p.value > discard_epsilon)
        .collect();
    if kept.len() < k_s || k_s == 0 {
        return Err(Error::NotEnoughEigenfunctions {
            available: kept.len(),
            requested: k_s,
        });
    }
    let kept = &kept[..k_s];
    let vectors = DenseMatrix::from_fn(c, k_s, |i, j| kept[j].vector[i]);
    Ok(ClassBasis {
        class_ids: class_ids.to_vec(),
        vectors,
        eigenvalues: kept.iter().map(|p| p.value).collect(),
    })
}

/// Index into `basis.vectors` of every item's class.
pub fn class_rows<S: AsRef<str>>(basis: &ClassBasis, item_class: &[S]) -> Result<Vec<u32>> {
    let rows: HashMap<&str, u32> = basis
        .class_ids
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i as u32))
        .collect();
    item_class
        .iter()
        .map(|class| {
            rows.get(class.as_ref())
                .copied()
                .ok_or_else(|| Error::UnknownClass(class.as_ref().to_string()))
        })
        .collect()
}

/// Row `i` of the result is the basis row of item `i`'s class.
pub fn assign_item_vectors<S: AsRef<str>>(
    basis: &ClassBasis,
    item_class: &[S],
) -> Result<DenseMatrix> {
    let k = basis.k();
    let mut values = Vec::with_capacity(item_class.len() * k);
    for r in class_rows(basis, item_class)? {
        values.extend_from_slice(basis.vectors.row(r as usize));
    }
    DenseMatrix::new(item_class.len(), k, values)
}

/// Weighting of classes in the density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassPriors {
    Frequency,
    Uniform,
}

/// Distinct classes in first-appearance order with their priors.
pub fn class_priors<S: AsRef<str>>(item_class: &[S], mode: ClassPriors) -> (Vec<String>, Vec<f64>) {
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for c in item_class {
        let entry = counts.entry(c.as_ref()).or_insert(0);
        if *entry == 0 {
            order.push(c.as_ref().to_string());
        }
        *entry += 1;
    }
    let priors = match mode {
        ClassPriors::Frequency => order
            .iter()
            .map(|c| counts[c.as_str()] as f64 / item_class.len() as f64)
            .collect(),
        ClassPriors::Uniform => vec![1.0 / order.len() as f64; order.len()],
    };
    (order, priors)
}

/// Settings for the semantic pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticSettings {
    pub k: usize,
    pub semantic_sigma: f64,
    pub affinity: AffinityKind,
    pub priors: ClassPriors,
    pub discard_epsilon: f64,
}

impl Default for SemanticSettings {
    fn default() -> Self {
        Self {
            k: DEFAULT_K_SEMANTIC,
            semantic_sigma: DEFAULT_SEMANTIC_SIGMA,
            affinity: AffinityKind::RbfDissimilarity,
            priors: ClassPriors::Frequency,
            discard_epsilon: crate::eigenmap::DEFAULT_DISCARD_EPSILON,
        }
    }
}

/// Every offline semantic step for one collection. Classes are ordered by
/// first appearance among the items.
pub fn fit_class_basis<S: AsRef<str>>(
    t: &Taxonomy,
    item_class: &[S],
    settings: &SemanticSettings,
) -> Result<ClassBasis> {
    let (classes, priors) = class_priors(item_class, settings.priors);
    if let Some(missing) = classes.iter().find(|c| !t.contains(c)) {
        return Err(Error::UnknownClass(missing.clone()));
    }
    let w = affinity(t, &classes, settings.affinity, settings.semantic_sigma)?;
    build_class_basis(&classes, &w, &priors, settings.k, settings.discard_epsilon)
}
