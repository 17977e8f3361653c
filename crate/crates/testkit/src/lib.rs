//! Reference implementations used only as test oracles.
//!
//! Everything here is written against plain `Vec<f64>` storage and shares no
//! code with `retrieve-core`, so a bug in the production path cannot leak
//! into the expected values it is checked against.

/// Dense row-major square matrix as nested vectors.
pub type Square = Vec<Vec<f64>>;

/// Cyclic Jacobi eigensolver for a symmetric matrix.
///
/// Returns eigenvalues ascending with matching unit eigenvectors.
pub fn jacobi_eigen(a: &Square) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Square = a.clone();
    let mut v: Square = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale || off < 1e-300 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i][i].total_cmp(&m[j][j]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (values, vectors)
}

/// Generalized symmetric-definite eigenproblem `A g = s B g` for diagonal `B`,
/// reduced through `B^{-1/2} A B^{-1/2}`. Eigenvectors are B-normalized.
pub fn generalized_eigen_diag(a: &Square, b_diag: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let inv_sqrt: Vec<f64> = b_diag.iter().map(|b| 1.0 / b.sqrt()).collect();
    let c: Square = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| a[i][j] * inv_sqrt[i] * inv_sqrt[j])
                .collect()
        })
        .collect();
    let (vals, vecs) = jacobi_eigen(&c);
    let vecs = vecs
        .into_iter()
        .map(|y| y.iter().zip(&inv_sqrt).map(|(y, s)| y * s).collect())
        .collect();
    (vals, vecs)
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Square, b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for row in (col + 1)..n {
            let f = m[row][col] / p;
            if f != 0.0 {
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

pub fn mat_vec(a: &Square, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(a, x)| a * x).sum())
        .collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Absolute cosine similarity between two vectors.
pub fn abs_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (norm(a) * norm(b))).abs()
}

/// Average ranks (1-based) with ties sharing the mean rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Indices of the `k` largest scores (descending score, ascending index).
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    idx.truncate(k);
    idx
}

/// Fraction of shared members between two top-k sets.
pub fn top_k_overlap(a: &[f64], b: &[f64], k: usize) -> f64 {
    let ta = top_k(a, k);
    let tb: std::collections::HashSet<usize> = top_k(b, k).into_iter().collect();
    ta.iter().filter(|i| tb.contains(i)).count() as f64 / k as f64
}

/// Area under the stepwise precision-recall curve, built point by point
/// from every cutoff of the ranking.
pub fn brute_force_average_precision(scores: &[f64], positive: &[bool]) -> f64 {
    let total_pos = positive.iter().filter(|&&p| p).count() as f64;
    let order = top_k(scores, scores.len());
    let mut curve = vec![(0.0_f64, 1.0_f64)];
    for cutoff in 1..=order.len() {
        let retrieved = &order[..cutoff];
        let tp = retrieved.iter().filter(|&&i| positive[i]).count() as f64;
        curve.push((tp / total_pos, tp / cutoff as f64));
    }
    curve.windows(2).map(|w| (w[1].0 - w[0].0) * w[1].1).sum()
}

/// Deterministic xorshift generator so oracles never share RNG code paths
/// with the implementation.
pub struct XorShift(u64);

impl XorShift {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
