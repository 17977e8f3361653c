//! Dense linear algebra: PCA, symmetric-definite generalized eigenproblems
//! and symmetric linear solves.
//!
//! All routines are pure. Eigenvector and principal-direction signs are
//! normalized so that the largest-magnitude entry is positive (lowest index
//! wins ties), which makes every output reproducible byte for byte.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::dim(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.values[i * n + i] = d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix from a generator; the caller guarantees finiteness.
    pub(crate) fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::dim(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn mat_mul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.values[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                        *d += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Largest absolute difference between the matrix and its transpose.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flips `v` so its largest-magnitude entry is positive; ties go to the
/// lowest index.
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fitted principal-component rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// d × d_out, orthonormal columns.
    pub components: DenseMatrix,
    /// Sample variances (n − 1 denominator) along each component, descending.
    pub explained_variances: Vec<f64>,
}

impl PcaModel {
    pub fn output_dims(&self) -> usize {
        self.components.cols()
    }
}

pub fn pca_fit(x: &DenseMatrix, d_out: usize) -> Result<PcaModel> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::dim(format!("PCA needs at least 2 rows, got {n}")));
    }
    if d_out == 0 || d_out > n.min(d) {
        return Err(Error::dim(format!(
            "d_out = {d_out} must lie in 1..={}",
            n.min(d)
        )));
    }

    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for ((c, v), m) in centered.iter_mut().zip(x.row(i)).zip(&mean) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = SymmetricEigen::try_new(cov, f64::EPSILON, 0).ok_or(Error::ConvergenceFailure)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    if eig.eigenvalues[order[0]] <= 0.0 {
        return Err(Error::DegenerateInput(
            "data has zero variance in every direction".into(),
        ));
    }

    let mut components = DenseMatrix::zeros(d, d_out);
    let mut explained = Vec::with_capacity(d_out);
    for (c, &src) in order.iter().take(d_out).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        normalize_sign(&mut v);
        for (r, val) in v.into_iter().enumerate() {
            components.set(r, c, val);
        }
        explained.push(eig.eigenvalues[src].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variances: explained,
    })
}

pub fn pca_transform(model: &PcaModel, x: &DenseMatrix) -> Result<DenseMatrix> {
    let d = model.mean.len();
    if x.cols() != d {
        return Err(Error::dim(format!(
            "PCA model expects {d} columns, got {}",
            x.cols()
        )));
    }
    let d_out = model.components.cols();
    let mut out = DenseMatrix::zeros(x.rows(), d_out);
    let mut centered = vec![0.0; d];
    for i in 0..x.rows() {
        for ((c, v), m) in centered.iter_mut().zip(x.row(i)).zip(&model.mean) {
            *c = v - m;
        }
        for j in 0..d_out {
            let mut acc = 0.0;
            for (r, c) in centered.iter().enumerate() {
                acc += c * model.components.get(r, j);
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// One eigenpair of a generalized symmetric-definite problem.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Relative tolerance for the symmetry precondition.
const SYMMETRY_TOL: f64 = 1e-10;

/// Solves `A g = σ B g` for the `m` smallest eigenvalues.
///
/// `B` must be symmetric positive definite; it is reduced through its
/// Cholesky factor `B = L Lᵀ` to the standard problem
/// `L⁻¹ A L⁻ᵀ y = σ y` with `g = L⁻ᵀ y`, so returned vectors satisfy
/// `gᵢᵀ B gⱼ = δᵢⱼ`.
pub fn sym_generalized_eig(a: &DenseMatrix, b: &DenseMatrix, m: usize) -> Result<Vec<EigenPair>> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n || b.cols() != n {
        return Err(Error::dim(format!(
            "A is {}x{}, B is {}x{}; both must be square and equal",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if m > n {
        return Err(Error::dim(format!(
            "requested {m} eigenpairs of a {n}x{n} problem"
        )));
    }
    for mat in [a, b] {
        let scale = mat.values().iter().fold(1.0_f64, |s, v| s.max(v.abs()));
        let asym = mat.asymmetry();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
    }

    let a_na = symmetrized(a);
    let b_na = symmetrized(b);
    let chol = Cholesky::new(b_na).ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();

    // C = L⁻¹ A L⁻ᵀ, formed as L⁻¹ (L⁻¹ A)ᵀ using the symmetry of A.
    let left = l
        .solve_lower_triangular(&a_na)
        .ok_or(Error::NotPositiveDefinite)?;
    let mut c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::NotPositiveDefinite)?;
    let ct = c.transpose();
    c += ct;
    c *= 0.5;

    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 0).ok_or(Error::ConvergenceFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });

    let mut pairs = Vec::with_capacity(m);
    for &idx in order.iter().take(m) {
        let y: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let g = l
            .tr_solve_lower_triangular(&y)
            .ok_or(Error::NotPositiveDefinite)?;
        let mut vector: Vec<f64> = g.iter().copied().collect();
        normalize_sign(&mut vector);
        pairs.push(EigenPair {
            value: eig.eigenvalues[idx],
            vector,
        });
    }
    Ok(pairs)
}

fn symmetrized(m: &DenseMatrix) -> DMatrix<f64> {
    let raw = m.to_nalgebra();
    (&raw + raw.transpose()) * 0.5
}

/// Residual tolerance accepted by [`solve_linear`], relative to `1 + ‖b‖`.
pub const SOLVE_TOLERANCE: f64 = 1e-8;

/// Solves `A x = b` for symmetric positive semi-definite `A`.
///
/// Uses a Cholesky factorization with one step of iterative refinement and
/// falls back to an SVD least-squares solve when `A` is not definite.
/// Returns [`Error::SingularSystem`] when the best solution still leaves a
/// residual above `1e-8 · (1 + ‖b‖)`.
pub fn solve_linear(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::dim(format!(
            "system is {}x{} with right-hand side of length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let a_na = a.to_nalgebra();
    let rhs = DVector::from_column_slice(b);
    let tol = SOLVE_TOLERANCE * (1.0 + rhs.norm());

    if let Some(chol) = Cholesky::new(a_na.clone()) {
        let mut x = chol.solve(&rhs);
        let r = &rhs - &a_na * &x;
        x += chol.solve(&r);
        let res = (&rhs - &a_na * &x).norm();
        if res <= tol {
            return Ok(x.iter().copied().collect());
        }
    }

    let svd = a_na.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * n as f64 * f64::EPSILON;
    let x = svd
        .solve(&rhs, cutoff)
        .map_err(|_| Error::SingularSystem(f64::INFINITY))?;
    let res = (&rhs - &a_na * &x).norm();
    if res <= tol {
        Ok(x.iter().copied().collect())
    } else {
        Err(Error::SingularSystem(res))
    }
}
