//! Online label-function solves and multimodal fusion.
//!
//! With `f = U α`, minimizing `αᵀ Σ α + (Uα − y)ᵀ Λ (Uα − y)` reduces to the
//! k × k system `(Σ + Uᵀ Λ U) α = Uᵀ Λ y`. Only labeled rows of `U`
//! contribute to the system, so a solve costs O(l·k² + k³) plus O(n·k) to
//! expand `f`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::eigenmap::InterpolationTable;
use crate::error::{Error, Result};
use crate::numerics::{solve_linear, DenseMatrix};

pub const DEFAULT_LAMBDA_REG: f64 = 100.0;
pub const VISUAL: &str = "visual";
pub const SEMANTIC: &str = "semantic";

/// Binary relevance label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn from_bool(relevant: bool) -> Self {
        if relevant {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(format!("label must be 1 or -1, got {other}")),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", i8::from(*self))
    }
}

/// Sparse labels plus the weight `λ` given to every labeled item.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelState {
    labels: BTreeMap<usize, Label>,
    lambda_reg: f64,
}

impl LabelState {
    pub fn new(lambda_reg: f64) -> Result<Self> {
        if !(lambda_reg > 0.0 && lambda_reg.is_finite()) {
            return Err(Error::InfeasibleConfig(format!(
                "lambda_reg must be positive, got {lambda_reg}"
            )));
        }
        Ok(Self {
            labels: BTreeMap::new(),
            lambda_reg,
        })
    }

    pub fn with_labels(
        lambda_reg: f64,
        labels: impl IntoIterator<Item = (usize, Label)>,
    ) -> Result<Self> {
        let mut s = Self::new(lambda_reg)?;
        for (i, l) in labels {
            s.insert(i, l)?;
        }
        Ok(s)
    }

    /// Adds a label; existing labels are never overwritten.
    pub fn insert(&mut self, item: usize, label: Label) -> Result<()> {
        if self.labels.contains_key(&item) {
            return Err(Error::AlreadyLabeled(item));
        }
        self.labels.insert(item, label);
        Ok(())
    }

    pub fn get(&self, item: usize) -> Option<Label> {
        self.labels.get(&item).copied()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.labels.contains_key(&item)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Label)> + '_ {
        self.labels.iter().map(|(&i, &l)| (i, l))
    }

    pub fn with_lambda(&self, lambda_reg: f64) -> Result<Self> {
        let mut s = Self::new(lambda_reg)?;
        s.labels = self.labels.clone();
        Ok(s)
    }

    fn check_bounds(&self, n: usize) -> Result<()> {
        match self.labels.keys().next_back() {
            Some(&max) if max >= n => Err(Error::dim(format!(
                "labeled item {max} outside a collection of {n}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Real-valued relevance score per item.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFunction {
    pub values: Vec<f64>,
    pub modality: String,
}

impl LabelFunction {
    pub fn new(modality: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            values,
            modality: modality.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Convex weights over modalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct FusionWeights {
    weights: BTreeMap<String, f64>,
}

impl FusionWeights {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("no modalities".into()));
        }
        if let Some((m, w)) = weights.iter().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidWeights(format!("weight for `{m}` is {w}")));
        }
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    pub fn get(&self, modality: &str) -> Option<f64> {
        self.weights.get(modality).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self::from_pairs([(VISUAL, 0.5), (SEMANTIC, 0.5)]).expect("valid default")
    }
}

impl TryFrom<BTreeMap<String, f64>> for FusionWeights {
    type Error = Error;

    fn try_from(m: BTreeMap<String, f64>) -> Result<Self> {
        Self::new(m)
    }
}

impl From<FusionWeights> for BTreeMap<String, f64> {
    fn from(w: FusionWeights) -> Self {
        w.weights
    }
}

/// One modality's basis: the n × k matrix `U` and its eigenvalues `Σ`.
#[derive(Debug, Clone)]
pub struct Modality {
    pub name: String,
    pub basis: Arc<DenseMatrix>,
    pub eigenvalues: Arc<Vec<f64>>,
    /// Cheaper route to `Uα` than reading all of `basis`.
    pub structure: Option<Arc<RowStructure>>,
}

/// How the rows of a modality's `U` were produced.
#[derive(Debug, Clone, PartialEq)]
pub enum RowStructure {
    /// Rows interpolated from per-axis bin grids.
    Interpolated(InterpolationTable),
    /// Row `i` is row `item_row[i]` of `rows`; exact.
    Shared {
        rows: DenseMatrix,
        item_row: Vec<u32>,
    },
}

impl RowStructure {
    pub fn rows(&self) -> usize {
        match self {
            Self::Interpolated(t) => t.rows(),
            Self::Shared { item_row, .. } => item_row.len(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Self::Interpolated(t) => t.k(),
            Self::Shared { rows, .. } => rows.cols(),
        }
    }

    pub fn apply(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Interpolated(t) => t.apply(alpha),
            Self::Shared { rows, item_row } => {
                let per_row = rows.mat_vec(alpha)?;
                Ok(item_row.iter().map(|&r| per_row[r as usize]).collect())
            }
        }
    }
}

impl Modality {
    pub fn new(name: impl Into<String>, basis: DenseMatrix, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.len() != basis.cols() {
            return Err(Error::dim(format!(
                "{} eigenvalues for a basis with {} columns",
                eigenvalues.len(),
                basis.cols()
            )));
        }
        Ok(Self {
            name: name.into(),
            basis: Arc::new(basis),
            eigenvalues: Arc::new(eigenvalues),
            structure: None,
        })
    }

    /// Attaches a structure that must describe the same `U`.
    pub fn with_structure(mut self, structure: RowStructure) -> Result<Self> {
        if structure.rows() != self.basis.rows() || structure.k() != self.basis.cols() {
            return Err(Error::dim(format!(
                "structure is {} × {} but the basis is {} × {}",
                structure.rows(),
                structure.k(),
                self.basis.rows(),
                self.basis.cols()
            )));
        }
        if let RowStructure::Shared { rows, item_row } = &structure {
            if let Some(&r) = item_row.iter().find(|&&r| r as usize >= rows.rows()) {
                return Err(Error::dim(format!(
                    "row index {r} outside {} shared rows",
                    rows.rows()
                )));
            }
        }
        self.structure = Some(Arc::new(structure));
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.basis.rows()
    }

    pub fn solve(&self, state: &LabelState) -> Result<LabelFunction> {
        let alpha = solve_coefficients(&self.basis, &self.eigenvalues, state)?;
        let values = match &self.structure {
            Some(s) => s.apply(&alpha)?,
            None => self.basis.mat_vec(&alpha)?,
        };
        Ok(LabelFunction::new(self.name.clone(), values))
    }
}

/// The reduced k × k system `(A, b) = (Σ + UᵀΛU, UᵀΛy)`.
pub fn reduced_system(
    u: &DenseMatrix,
    eigenvalues: &[f64],
    state: &LabelState,
) -> Result<(DenseMatrix, Vec<f64>)> {
    let k = u.cols();
    if eigenvalues.len() != k {
        return Err(Error::dim(format!(
            "{} eigenvalues for {k} basis columns",
            eigenvalues.len()
        )));
    }
    if let Some(e) = eigenvalues.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::DegenerateInput(format!("negative eigenvalue {e}")));
    }
    if state.is_empty() {
        return Err(Error::NoLabels);
    }
    state.check_bounds(u.rows())?;

    let lambda = state.lambda_reg();
    let mut a = DenseMatrix::from_diagonal(eigenvalues);
    let mut b = vec![0.0; k];
    for (item, label) in state.iter() {
        let row = u.row(item);
        let y = label.value();
        for p in 0..k {
            let lp = lambda * row[p];
            b[p] += lp * y;
            for q in p..k {
                let v = a.get(p, q) + lp * row[q];
                a.set(p, q, v);
            }
        }
    }
    for p in 0..k {
        for q in (p + 1)..k {
            a.set(q, p, a.get(p, q));
        }
    }
    Ok((a, b))
}

/// Coefficients `α` of the reduced system.
pub fn solve_coefficients(
    u: &DenseMatrix,
    eigenvalues: &[f64],
    state: &LabelState,
) -> Result<Vec<f64>> {
    let (a, b) = reduced_system(u, eigenvalues, state)?;
    solve_linear(&a, &b)
}

/// `f* = U α`.
pub fn solve_reduced(
    u: &DenseMatrix,
    eigenvalues: &[f64],
    state: &LabelState,
) -> Result<LabelFunction> {
    let alpha = solve_coefficients(u, eigenvalues, state)?;
    Ok(LabelFunction::new("reduced", u.mat_vec(&alpha)?))
}

/// Solves `(L + Λ) f = Λ y` with `L = D − W` on the full graph.
///
/// Cubic in n; meant as the reference the reduced solve is measured against.
pub fn exact_dense_solve(w: &DenseMatrix, state: &LabelState) -> Result<LabelFunction> {
    let n = w.rows();
    if w.cols() != n {
        return Err(Error::dim("affinity must be square"));
    }
    state.check_bounds(n)?;
    let mut system = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            let wij = w.get(i, j);
            degree += wij;
            system.set(i, j, -wij);
        }
        system.set(i, i, system.get(i, i) + degree);
    }
    let mut rhs = vec![0.0; n];
    for (item, label) in state.iter() {
        system.set(item, item, system.get(item, item) + state.lambda_reg());
        rhs[item] = state.lambda_reg() * label.value();
    }
    Ok(LabelFunction::new("exact", solve_linear(&system, &rhs)?))
}

/// Pointwise convex combination of per-modality label functions.
pub fn fuse(functions: &[LabelFunction], weights: &FusionWeights) -> Result<LabelFunction> {
    let n = functions.first().map_or(0, LabelFunction::len);
    if functions.iter().any(|f| f.len() != n) {
        return Err(Error::dim("label functions differ in length"));
    }
    for (m, _) in weights.iter() {
        if !functions.iter().any(|f| f.modality == m) {
            return Err(Error::MissingModality(m.to_string()));
        }
    }
    let mut out = vec![0.0; n];
    for f in functions {
        let w = weights
            .get(&f.modality)
            .ok_or_else(|| Error::MissingModality(f.modality.clone()))?;
        for (o, v) in out.iter_mut().zip(&f.values) {
            *o += w * v;
        }
    }
    Ok(LabelFunction::new("fused", out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use retrieve_testkit::norm;
    use retrieve_testkit::{gauss_solve, jacobi_eigen, spearman, XorShift};

    fn two_cluster_affinity(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = XorShift::new(seed);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let c = if i < n / 2 { -2.0 } else { 2.0 };
                (c + 0.5 * rng.normal(), 0.5 * rng.normal())
            })
            .collect();
        DenseMatrix::from_fn(n, n, |i, j| {
            let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
            (-(dx * dx + dy * dy) / 2.0).exp()
        })
    }

    #[test]
    fn single_constant_eigenfunction_propagates_label() {
        let u = DenseMatrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let state = LabelState::with_labels(1.0, [(0, Label::Positive)]).unwrap();
        let (a, b) = reduced_system(&u, &[0.0], &state).unwrap();
        assert_eq!(a.values(), &[1.0]);
        assert_eq!(b, vec![1.0]);
        let f = solve_reduced(&u, &[0.0], &state).unwrap();
        assert_abs_diff_eq!(f.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.values[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn flipping_labels_flips_scores() {
        let mut rng = XorShift::new(4);
        let u = DenseMatrix::new(20, 4, (0..80).map(|_| rng.normal()).collect()).unwrap();
        let eig = [0.1, 0.2, 0.3, 0.4];
        let pos =
            LabelState::with_labels(10.0, [(1, Label::Positive), (5, Label::Negative)]).unwrap();
        let neg =
            LabelState::with_labels(10.0, [(1, Label::Negative), (5, Label::Positive)]).unwrap();
        let fp = solve_reduced(&u, &eig, &pos).unwrap();
        let fn_ = solve_reduced(&u, &eig, &neg).unwrap();
        for (a, b) in fp.values.iter().zip(&fn_.values) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn full_eigenvector_basis_matches_dense_solve() {
        let n = 30;
        let w = two_cluster_affinity(n, 8);
        // oracle eigenvectors of L = D − W
        let lap: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let d: f64 = w.row(i).iter().sum();
                (0..n)
                    .map(|j| {
                        if i == j {
                            d - w.get(i, j)
                        } else {
                            -w.get(i, j)
                        }
                    })
                    .collect()
            })
            .collect();
        let (vals, vecs) = jacobi_eigen(&lap);
        let u = DenseMatrix::from_fn(n, n, |i, j| vecs[j][i]);
        let eig: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
        let state = LabelState::with_labels(
            DEFAULT_LAMBDA_REG,
            [
                (0, Label::Positive),
                (3, Label::Positive),
                (20, Label::Negative),
            ],
        )
        .unwrap();
        let approx = solve_reduced(&u, &eig, &state).unwrap();
        let exact = exact_dense_solve(&w, &state).unwrap();
        assert!(spearman(&approx.values, &exact.values) >= 0.99);
    }

    #[test]
    fn reduced_residual_bound() {
        let mut rng = XorShift::new(12);
        let u = DenseMatrix::new(100, 8, (0..800).map(|_| rng.normal()).collect()).unwrap();
        let eig: Vec<f64> = (1..=8).map(|i| i as f64 * 0.05).collect();
        let state = LabelState::with_labels(
            100.0,
            (0..10).map(|i| (i * 7, Label::from_bool(i % 3 != 0))),
        )
        .unwrap();
        let (a, b) = reduced_system(&u, &eig, &state).unwrap();
        let alpha = solve_coefficients(&u, &eig, &state).unwrap();
        let r: Vec<f64> = a
            .mat_vec(&alpha)
            .unwrap()
            .iter()
            .zip(&b)
            .map(|(x, y)| x - y)
            .collect();
        assert!(norm(&r) <= 1e-8 * (1.0 + norm(&b)));
    }

    #[test]
    fn reduced_errors() {
        let u = DenseMatrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let empty = LabelState::new(1.0).unwrap();
        assert!(matches!(
            solve_reduced(&u, &[0.0], &empty),
            Err(Error::NoLabels)
        ));
        let far = LabelState::with_labels(1.0, [(5, Label::Positive)]).unwrap();
        assert!(matches!(
            solve_reduced(&u, &[0.0], &far),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            solve_reduced(&u, &[0.0, 1.0], &far),
            Err(Error::Dimension(_))
        ));
        assert!(LabelState::new(0.0).is_err());
    }

    #[test]
    fn labels_are_never_overwritten() {
        let mut s = LabelState::new(1.0).unwrap();
        s.insert(3, Label::Positive).unwrap();
        assert!(matches!(
            s.insert(3, Label::Negative),
            Err(Error::AlreadyLabeled(3))
        ));
        assert_eq!(s.get(3), Some(Label::Positive));
    }

    #[test]
    fn dense_solve_on_two_cliques() {
        let w = DenseMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let state =
            LabelState::with_labels(1.0, [(0, Label::Positive), (2, Label::Negative)]).unwrap();
        let f = exact_dense_solve(&w, &state).unwrap();
        // hand solution per clique: [[2,-1],[-1,1]] f = [1,0] → f = [1, 1]
        let oracle = gauss_solve(
            &vec![
                vec![2.0, -1.0, 0.0, 0.0],
                vec![-1.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 2.0, -1.0],
                vec![0.0, 0.0, -1.0, 1.0],
            ],
            &[1.0, 0.0, -1.0, 0.0],
        );
        for (a, b) in f.values.iter().zip(&oracle) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert!(f.values[0] > 0.0 && f.values[1] > 0.0);
        assert!(f.values[2] < 0.0 && f.values[3] < 0.0);
    }

    #[test]
    fn dense_solve_large_lambda_pins_labels() {
        let w = two_cluster_affinity(20, 2);
        let labels: Vec<(usize, Label)> =
            (0..20).map(|i| (i, Label::from_bool(i % 2 == 0))).collect();
        let state = LabelState::with_labels(1e6, labels.clone()).unwrap();
        let f = exact_dense_solve(&w, &state).unwrap();
        for (i, l) in labels {
            assert!((f.values[i] - l.value()).abs() <= 1e-3);
        }
    }

    #[test]
    fn dense_solve_without_edges_is_decoupled() {
        let w = DenseMatrix::zeros(3, 3);
        let state = LabelState::with_labels(1.0, [(1, Label::Positive)]).unwrap();
        let f = exact_dense_solve(&w, &state).unwrap();
        assert_abs_diff_eq!(f.values[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.values[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.values[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fuse_examples() {
        let v = LabelFunction::new(VISUAL, vec![1.0, 0.0]);
        let s = LabelFunction::new(SEMANTIC, vec![0.0, 1.0]);
        let half = FusionWeights::default();
        assert_eq!(
            fuse(&[v.clone(), s.clone()], &half).unwrap().values,
            vec![0.5, 0.5]
        );
        let visual_only = FusionWeights::from_pairs([(VISUAL, 1.0), (SEMANTIC, 0.0)]).unwrap();
        assert_eq!(
            fuse(&[v.clone(), s.clone()], &visual_only).unwrap().values,
            v.values
        );
        assert!(matches!(
            fuse(&[v.clone()], &half),
            Err(Error::MissingModality(_))
        ));
        let short = LabelFunction::new(SEMANTIC, vec![0.0]);
        assert!(matches!(fuse(&[v, short], &half), Err(Error::Dimension(_))));
        assert_eq!(half.get(VISUAL), Some(0.5));
        assert!(FusionWeights::from_pairs([(VISUAL, 0.7), (SEMANTIC, 0.7)]).is_err());
        assert!(FusionWeights::from_pairs([(VISUAL, 1.5), (SEMANTIC, -0.5)]).is_err());
    }

    #[test]
    fn label_serde_is_plus_minus_one() {
        assert_eq!(serde_json::to_string(&Label::Negative).unwrap(), "-1");
        assert_eq!(serde_json::from_str::<Label>("1").unwrap(), Label::Positive);
        assert!(serde_json::from_str::<Label>("0").is_err());
    }

    proptest::proptest! {
        #[test]
        fn dense_solve_obeys_maximum_principle(seed in 0u64..200, lambda in 0.1f64..100.0) {
            let w = two_cluster_affinity(16, seed);
            let state = LabelState::with_labels(lambda, [(0, Label::Positive), (9, Label::Negative), (12, Label::Positive)]).unwrap();
            let f = exact_dense_solve(&w, &state).unwrap();
            for v in f.values {
                proptest::prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&v));
            }
        }

        #[test]
        fn fuse_with_one_modality_keeps_ranking(seed in 0u64..200) {
            let mut rng = XorShift::new(seed);
            let a = LabelFunction::new(VISUAL, (0..30).map(|_| rng.normal()).collect());
            let b = LabelFunction::new(SEMANTIC, (0..30).map(|_| rng.normal()).collect());
            let w = FusionWeights::from_pairs([(VISUAL, 0.0), (SEMANTIC, 1.0)]).unwrap();
            let fused = fuse(&[a, b.clone()], &w).unwrap();
            let argsort = |v: &[f64]| {
                let mut idx: Vec<usize> = (0..v.len()).collect();
                idx.sort_by(|&i, &j| v[j].total_cmp(&v[i]).then(i.cmp(&j)));
                idx
            };
            proptest::prop_assert_eq!(argsort(&fused.values), argsort(&b.values));
        }
    }
}
