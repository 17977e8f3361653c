//! Offline eigenfunction approximation for dense features.
//!
//! Each rotated feature axis gets a histogram of its marginal density. On the
//! bin centers we solve the discretized weighted Laplacian eigenproblem
//!
//! ```text
//! (D̃ − P W̃ P) g = σ P D̂ g
//! ```
//!
//! where `W̃` is the RBF affinity between bin centers, `P` the bin densities,
//! `D̃` the column sums of `P W̃ P` and `D̂` the column sums of `P W̃`. The
//! smallest non-trivial eigenfunctions over all axes are then merged into one
//! basis and linearly interpolated back to every item in O(n·k).

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{pca_fit, pca_transform, sym_generalized_eig, DenseMatrix, PcaModel};

/// Default number of histogram bins per axis.
pub const DEFAULT_BINS: usize = 500;
/// Default number of eigenfunctions kept for dense features.
pub const DEFAULT_K: usize = 256;
/// Eigenvalues at or below this are treated as the constant solution.
pub const DEFAULT_DISCARD_EPSILON: f64 = 1e-10;
/// Densities are floored here before forming `P`.
pub const DENSITY_FLOOR: f64 = 1e-8;
/// Ridge added to `P D̂` to keep it positive definite.
pub const MASS_RIDGE: f64 = 1e-12;
/// Default bandwidth as a fraction of the widest histogram range.
pub const DEFAULT_BANDWIDTH_FRACTION: f64 = 0.2;

const HISTOGRAM_PAD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalHistogram {
    pub dimension_index: usize,
    pub bin_centers: Vec<f64>,
    pub densities: Vec<f64>,
    pub bin_width: f64,
}

impl MarginalHistogram {
    /// Span covered by the bins, edge to edge.
    pub fn range(&self) -> f64 {
        self.bin_width * self.bin_centers.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenfunction1D {
    pub dimension_index: usize,
    pub eigenvalue: f64,
    pub bin_centers: Vec<f64>,
    pub values_at_bins: Vec<f64>,
}

impl Eigenfunction1D {
    /// Linear interpolation between bin centers, clamped to the end values.
    #[inline]
    pub fn evaluate(&self, x: f64) -> f64 {
        let centers = &self.bin_centers;
        let values = &self.values_at_bins;
        let last = centers.len() - 1;
        let first = centers[0];
        let step = centers[1] - centers[0];
        let t = (x - first) / step;
        if !(t > 0.0) {
            return values[0];
        }
        if t >= last as f64 {
            return values[last];
        }
        let lo = (t.floor() as usize).min(last - 1);
        let frac = t - lo as f64;
        values[lo] + frac * (values[lo + 1] - values[lo])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub functions: Vec<Eigenfunction1D>,
    pub rbf_sigma: f64,
    pub discard_epsilon: f64,
}

impl EigenBasis {
    pub fn k(&self) -> usize {
        self.functions.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.functions.iter().map(|f| f.eigenvalue).collect()
    }
}

pub fn build_histogram(column: &[f64], bins: usize) -> Result<MarginalHistogram> {
    build_histogram_for(0, column, bins)
}

fn build_histogram_for(
    dimension_index: usize,
    column: &[f64],
    bins: usize,
) -> Result<MarginalHistogram> {
    if bins < 2 {
        return Err(Error::dim(format!(
            "histogram needs at least 2 bins, got {bins}"
        )));
    }
    if column.is_empty() {
        return Err(Error::DegenerateInput("empty column".into()));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value in column".into()));
    }
    let (min, max) = column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if max == min {
        return Err(Error::DegenerateInput(format!(
            "dimension {dimension_index} is constant"
        )));
    }
    let lo = min - HISTOGRAM_PAD;
    let hi = max + HISTOGRAM_PAD;
    let bin_width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in column {
        let b = (((v - lo) / bin_width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = column.len() as f64;
    Ok(MarginalHistogram {
        dimension_index,
        bin_centers: (0..bins)
            .map(|b| lo + (b as f64 + 0.5) * bin_width)
            .collect(),
        densities: counts.into_iter().map(|c| c as f64 / n).collect(),
        bin_width,
    })
}

/// The two sides of the discretized eigenproblem: `(D̃ − P W̃ P, P D̂ + ridge)`.
///
/// Shared by the histogram route and the class-level semantic route.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    pub laplacian: DenseMatrix,
    pub mass: DenseMatrix,
}

impl DensityOperator {
    /// `affinity` is the symmetric W̃, `weights` the unnormalized densities.
    pub fn new(affinity: &DenseMatrix, weights: &[f64]) -> Result<Self> {
        let b = weights.len();
        if affinity.rows() != b || affinity.cols() != b {
            return Err(Error::dim(format!(
                "affinity is {}x{} for {b} density weights",
                affinity.rows(),
                affinity.cols()
            )));
        }
        let p = floored_densities(weights);
        let mut laplacian = DenseMatrix::zeros(b, b);
        let mut d_tilde = vec![0.0; b];
        let mut d_hat = vec![0.0; b];
        for i in 0..b {
            for j in 0..b {
                let w = affinity.get(i, j);
                let pwp = p[i] * w * p[j];
                laplacian.set(i, j, -pwp);
                // column sums
                d_tilde[j] += pwp;
                d_hat[j] += p[i] * w;
            }
        }
        let mut mass = DenseMatrix::zeros(b, b);
        for i in 0..b {
            laplacian.set(i, i, laplacian.get(i, i) + d_tilde[i]);
            mass.set(i, i, p[i] * d_hat[i] + MASS_RIDGE);
        }
        Ok(Self { laplacian, mass })
    }

    /// `‖(D̃ − PW̃P) g − σ P D̂ g‖` measured against the operator as solved.
    pub fn residual(&self, eigenvalue: f64, g: &[f64]) -> f64 {
        let lg = self.laplacian.mat_vec(g).expect("dimension checked");
        lg.iter()
            .enumerate()
            .map(|(i, v)| {
                let r = v - eigenvalue * self.mass.get(i, i) * g[i];
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Floors densities at [`DENSITY_FLOOR`] and renormalizes to sum 1.
pub fn floored_densities(weights: &[f64]) -> Vec<f64> {
    let floored: Vec<f64> = weights.iter().map(|&w| w.max(DENSITY_FLOOR)).collect();
    let total: f64 = floored.iter().sum();
    floored.into_iter().map(|w| w / total).collect()
}

fn rbf_affinity(centers: &[f64], sigma: f64) -> DenseMatrix {
    let denom = 2.0 * sigma * sigma;
    DenseMatrix::from_fn(centers.len(), centers.len(), |i, j| {
        let d = centers[i] - centers[j];
        (-(d * d) / denom).exp()
    })
}

pub fn density_operator(hist: &MarginalHistogram, rbf_sigma: f64) -> Result<DensityOperator> {
    if !(rbf_sigma > 0.0) {
        return Err(Error::InfeasibleConfig(format!(
            "rbf_sigma must be positive, got {rbf_sigma}"
        )));
    }
    DensityOperator::new(&rbf_affinity(&hist.bin_centers, rbf_sigma), &hist.densities)
}

/// The `m` smallest eigenfunctions of one axis.
pub fn solve_eigenfunctions_1d(
    hist: &MarginalHistogram,
    rbf_sigma: f64,
    m: usize,
) -> Result<Vec<Eigenfunction1D>> {
    if m > hist.bin_centers.len() {
        return Err(Error::dim(format!(
            "requested {m} eigenfunctions from {} bins",
            hist.bin_centers.len()
        )));
    }
    let op = density_operator(hist, rbf_sigma)?;
    let pairs = sym_generalized_eig(&op.laplacian, &op.mass, m)?;
    Ok(pairs
        .into_iter()
        .map(|p| Eigenfunction1D {
            dimension_index: hist.dimension_index,
            eigenvalue: p.value,
            bin_centers: hist.bin_centers.clone(),
            values_at_bins: p.vector,
        })
        .collect())
}

/// Merges per-axis eigenfunctions, drops near-zero eigenvalues and keeps the
/// `k` smallest. Ties fall back to axis index, then to within-axis order.
pub fn select_basis(
    per_dim: Vec<Vec<Eigenfunction1D>>,
    k: usize,
    discard_epsilon: f64,
    rbf_sigma: f64,
) -> Result<EigenBasis> {
    if k == 0 {
        return Err(Error::dim("k must be at least 1"));
    }
    let mut pool: Vec<(usize, Eigenfunction1D)> = per_dim
        .into_iter()
        .flat_map(|fs| fs.into_iter().enumerate())
        .filter(|(_, f)| f.eigenvalue > discard_epsilon)
        .collect();
    if pool.len() < k {
        return Err(Error::NotEnoughEigenfunctions {
            available: pool.len(),
            requested: k,
        });
    }
    pool.sort_by(|(oa, a), (ob, b)| {
        a.eigenvalue
            .total_cmp(&b.eigenvalue)
            .then(a.dimension_index.cmp(&b.dimension_index))
            .then(oa.cmp(ob))
    });
    pool.truncate(k);
    Ok(EigenBasis {
        functions: pool.into_iter().map(|(_, f)| f).collect(),
        rbf_sigma,
        discard_epsilon,
    })
}

/// Evaluates every basis function at every item: the n × k matrix `U`.
pub fn interpolate(basis: &EigenBasis, x_rot: &DenseMatrix) -> Result<DenseMatrix> {
    if let Some(f) = basis
        .functions
        .iter()
        .find(|f| f.dimension_index >= x_rot.cols())
    {
        return Err(Error::dim(format!(
            "basis references axis {} but data has {} columns",
            f.dimension_index,
            x_rot.cols()
        )));
    }
    let k = basis.k();
    let n = x_rot.rows();
    let mut values = vec![0.0; n * k];
    values
        .par_chunks_mut(k.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let x = x_rot.row(i);
            for (out, f) in row.iter_mut().zip(&basis.functions) {
                *out = f.evaluate(x[f.dimension_index]);
            }
        });
    DenseMatrix::new(n, k, values)
}

/// Bin position of every item on every axis the basis uses. `Uα` then
/// costs one lookup per axis instead of one product per function: the
/// functions of an axis are first combined on its bin grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationTable {
    bins: usize,
    slots: usize,
    /// Axis slot of each function.
    slot_of: Vec<usize>,
    /// k × bins.
    values: Vec<f64>,
    /// n × slots.
    lower: Vec<u32>,
    fraction: Vec<f64>,
}

fn locate(centers: &[f64], x: f64) -> (u32, f64) {
    let last = centers.len() - 1;
    let t = (x - centers[0]) / (centers[1] - centers[0]);
    if !(t > 0.0) {
        return (0, 0.0);
    }
    if t >= last as f64 {
        return ((last - 1) as u32, 1.0);
    }
    let lo = (t.floor() as usize).min(last - 1);
    (lo as u32, t - lo as f64)
}

impl InterpolationTable {
    /// `None` when functions on one axis disagree on their bin centers.
    pub fn new(basis: &EigenBasis, x_rot: &DenseMatrix) -> Result<Option<Self>> {
        let Some(first) = basis.functions.first() else {
            return Ok(None);
        };
        let bins = first.bin_centers.len();
        let mut axes: Vec<usize> = Vec::new();
        let mut slot_of = Vec::with_capacity(basis.k());
        for f in &basis.functions {
            if f.dimension_index >= x_rot.cols() {
                return Err(Error::dim(format!(
                    "basis references axis {} but data has {} columns",
                    f.dimension_index,
                    x_rot.cols()
                )));
            }
            let slot = match axes.iter().position(|&a| a == f.dimension_index) {
                Some(s) => s,
                None => {
                    axes.push(f.dimension_index);
                    axes.len() - 1
                }
            };
            let owner = basis
                .functions
                .iter()
                .find(|g| g.dimension_index == f.dimension_index)
                .expect("f itself matches");
            if f.bin_centers.len() != bins
                || bins < 2
                || bins > u32::MAX as usize
                || f.bin_centers != owner.bin_centers
                || f.values_at_bins.len() != bins
            {
                return Ok(None);
            }
            slot_of.push(slot);
        }
        let centers: Vec<&[f64]> = axes
            .iter()
            .map(|&a| {
                let f = basis.functions.iter().find(|f| f.dimension_index == a);
                f.expect("axis came from a function").bin_centers.as_slice()
            })
            .collect();
        let n = x_rot.rows();
        let slots = axes.len();
        let mut lower = Vec::with_capacity(n * slots);
        let mut fraction = Vec::with_capacity(n * slots);
        for i in 0..n {
            let row = x_rot.row(i);
            for (&a, c) in axes.iter().zip(&centers) {
                let (lo, q) = locate(c, row[a]);
                lower.push(lo);
                fraction.push(q);
            }
        }
        Ok(Some(Self {
            bins,
            slots,
            slot_of,
            values: basis
                .functions
                .iter()
                .flat_map(|f| f.values_at_bins.iter().copied())
                .collect(),
            lower,
            fraction,
        }))
    }

    pub fn rows(&self) -> usize {
        self.lower.len() / self.slots
    }

    pub fn k(&self) -> usize {
        self.slot_of.len()
    }

    /// `Uα`, equal to the dense product up to rounding.
    pub fn apply(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.k() {
            return Err(Error::dim(format!(
                "{} coefficients for {} functions",
                alpha.len(),
                self.k()
            )));
        }
        let b = self.bins;
        let mut grid = vec![0.0; self.slots * b];
        for ((&a, &s), vals) in alpha
            .iter()
            .zip(&self.slot_of)
            .zip(self.values.chunks_exact(b))
        {
            for (g, v) in grid[s * b..(s + 1) * b].iter_mut().zip(vals) {
                *g += a * v;
            }
        }
        Ok(self
            .lower
            .chunks_exact(self.slots)
            .zip(self.fraction.chunks_exact(self.slots))
            .map(|(lo, q)| {
                let mut acc = 0.0;
                for (s, (&l, &t)) in lo.iter().zip(q).enumerate() {
                    let at = s * b + l as usize;
                    acc += grid[at] + t * (grid[at + 1] - grid[at]);
                }
                acc
            })
            .collect())
    }
}

/// Settings for the dense-feature pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualSettings {
    pub bins: usize,
    pub k: usize,
    /// Upper bound on the PCA output dimension.
    pub pca_dims: usize,
    /// Absolute bandwidth; overrides `bandwidth_fraction` when set.
    pub rbf_sigma: Option<f64>,
    pub bandwidth_fraction: f64,
    pub discard_epsilon: f64,
}

impl Default for VisualSettings {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            k: DEFAULT_K,
            pca_dims: 64,
            rbf_sigma: None,
            bandwidth_fraction: DEFAULT_BANDWIDTH_FRACTION,
            discard_epsilon: DEFAULT_DISCARD_EPSILON,
        }
    }
}

/// PCA rotation plus the selected eigenfunctions.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualModel {
    pub pca: PcaModel,
    pub basis: EigenBasis,
}

impl VisualModel {
    /// Runs every offline step: PCA, per-axis histograms, per-axis
    /// eigenfunctions (in parallel) and global selection.
    pub fn fit(features: &DenseMatrix, settings: &VisualSettings) -> Result<Self> {
        let d_out = settings.pca_dims.min(features.cols()).min(features.rows());
        let pca = pca_fit(features, d_out)?;
        let rotated = pca_transform(&pca, features)?;

        let hists: Vec<MarginalHistogram> = (0..rotated.cols())
            .filter_map(|j| build_histogram_for(j, &rotated.column(j), settings.bins).ok())
            .collect();
        if hists.is_empty() {
            return Err(Error::DegenerateInput(
                "every rotated axis is constant".into(),
            ));
        }
        let sigma = match settings.rbf_sigma {
            Some(s) => s,
            None => {
                let widest = hists
                    .iter()
                    .map(MarginalHistogram::range)
                    .fold(0.0, f64::max);
                settings.bandwidth_fraction * widest
            }
        };
        let per_axis = (settings.k + 1).min(settings.bins);
        let per_dim = hists
            .par_iter()
            .map(|h| solve_eigenfunctions_1d(h, sigma, per_axis))
            .collect::<Result<Vec<_>>>()?;
        let basis = select_basis(per_dim, settings.k, settings.discard_epsilon, sigma)?;
        Ok(Self { pca, basis })
    }

    /// Rotates raw features and interpolates them onto the basis.
    pub fn embed(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        interpolate(&self.basis, &pca_transform(&self.pca, features)?)
    }
}

/// Magic header of the persisted basis container.
pub const BASIS_MAGIC: &[u8; 8] = b"EIGB0001";

/// Serializes a basis: magic, then `rbf_sigma`, `discard_epsilon` (f64),
/// `k` (u64), then per function `dimension_index` (u64), `eigenvalue` (f64),
/// `B` (u64), `B` bin centers and `B` values (f64). Little-endian throughout.
pub fn write_basis<W: Write>(basis: &EigenBasis, mut w: W) -> Result<()> {
    w.write_all(BASIS_MAGIC)?;
    w.write_all(&basis.rbf_sigma.to_le_bytes())?;
    w.write_all(&basis.discard_epsilon.to_le_bytes())?;
    w.write_all(&(basis.functions.len() as u64).to_le_bytes())?;
    for f in &basis.functions {
        w.write_all(&(f.dimension_index as u64).to_le_bytes())?;
        w.write_all(&f.eigenvalue.to_le_bytes())?;
        w.write_all(&(f.bin_centers.len() as u64).to_le_bytes())?;
        for v in f.bin_centers.iter().chain(&f.values_at_bins) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_basis<R: Read>(mut r: R) -> Result<EigenBasis> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BASIS_MAGIC {
        return Err(Error::format("basis file", "bad magic header"));
    }
    let rbf_sigma = read_f64(&mut r)?;
    let discard_epsilon = read_f64(&mut r)?;
    let k = read_u64(&mut r)? as usize;
    let mut functions = Vec::with_capacity(k.min(1 << 16));
    for _ in 0..k {
        let dimension_index = read_u64(&mut r)? as usize;
        let eigenvalue = read_f64(&mut r)?;
        let b = read_u64(&mut r)? as usize;
        if !(2..=1 << 24).contains(&b) {
            return Err(Error::format(
                "basis file",
                format!("implausible bin count {b}"),
            ));
        }
        let bin_centers = (0..b)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let values_at_bins = (0..b)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        functions.push(Eigenfunction1D {
            dimension_index,
            eigenvalue,
            bin_centers,
            values_at_bins,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::format("basis file", "trailing bytes"));
    }
    Ok(EigenBasis {
        functions,
        rbf_sigma,
        discard_epsilon,
    })
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
