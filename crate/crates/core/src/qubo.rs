//! Penalized QUBO construction for balanced clustering.
//!
//! The objective over the one-hot vector `z` (length K·I) is
//!
//! ```text
//! E(z) = zᵀ Q z + λ ‖G z − d‖²  =  zᵀ (Q + λGᵀG) z − 2λ dᵀG z + λ dᵀd
//! ```
//!
//! where `Q` holds the pairwise data costs and `G z = d` encodes the
//! one-cluster-per-point and cluster-size constraints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{BinaryVector, ClusteringTask};

/// Sparse constraint matrix `G` ((I+K) × (K·I)) with right-hand side `d`.
///
/// Row `i < I` sums the K bits of point `i`; row `I + k` sums the I bits of
/// cluster `k`. Every column therefore has exactly two nonzeros.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    n_points: usize,
    k: usize,
    rhs: Vec<i64>,
}

impl ConstraintSystem {
    pub fn n_rows(&self) -> usize {
        self.n_points + self.k
    }

    pub fn n_cols(&self) -> usize {
        self.n_points * self.k
    }

    /// Right-hand side `d`: I ones followed by the target sizes.
    pub fn rhs(&self) -> &[i64] {
        &self.rhs
    }

    /// Row indices of the two nonzeros in column `var`.
    pub fn column_rows(&self, var: usize) -> [usize; 2] {
        let k = var / self.n_points;
        let i = var % self.n_points;
        [i, self.n_points + k]
    }

    /// Dense copy of `G`, row-major.
    #[allow(clippy::needless_range_loop)]
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let mut g = vec![vec![0u8; self.n_cols()]; self.n_rows()];
        for var in 0..self.n_cols() {
            let [a, b] = self.column_rows(var);
            g[a][var] = 1;
            g[b][var] = 1;
        }
        g
    }

    pub fn nnz(&self) -> usize {
        2 * self.n_cols()
    }

    /// Residual `G z − d`.
    pub fn residual(&self, z: &BinaryVector) -> Result<Vec<i64>> {
        if z.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                actual: z.len(),
            });
        }
        let mut r: Vec<i64> = self.rhs.iter().map(|d| -d).collect();
        for var in 0..self.n_cols() {
            if z.get(var) {
                for row in self.column_rows(var) {
                    r[row] += 1;
                }
            }
        }
        Ok(r)
    }

    /// Squared residual norm `‖G z − d‖²`.
    pub fn violation(&self, z: &BinaryVector) -> Result<i64> {
        Ok(self.residual(z)?.iter().map(|r| r * r).sum())
    }
}

pub fn build_constraints(t: &ClusteringTask) -> ConstraintSystem {
    let mut rhs = vec![1i64; t.n_points()];
    rhs.extend(t.sizes().iter().map(|&s| s as i64));
    ConstraintSystem {
        n_points: t.n_points(),
        k: t.k(),
        rhs,
    }
}

/// A QUBO `zᵀ q z + bᵀ z + offset` with dense symmetric `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    n: usize,
    q: Vec<f64>,
    b: Vec<f64>,
    offset: f64,
    lambda: f64,
}

impl QuboProblem {
    /// Builds a QUBO from a dense symmetric matrix (row-major, n×n).
    pub fn new(n: usize, q: Vec<f64>, b: Vec<f64>, offset: f64, lambda: f64) -> Result<Self> {
        if q.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: q.len(),
            });
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        if q.iter().chain(&b).any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(Error::invalid("QUBO coefficients must be finite"));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if q[i * n + j] != q[j * n + i] {
                    return Err(Error::invalid(format!("q is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(QuboProblem {
            n,
            q,
            b,
            offset,
            lambda,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    /// Row `i` of `q`.
    #[inline]
    pub fn q_row(&self, i: usize) -> &[f64] {
        &self.q[i * self.n..(i + 1) * self.n]
    }

    pub fn linear(&self) -> &[f64] {
        &self.b
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `zᵀ q z + bᵀ z + offset`.
    pub fn energy(&self, z: &BinaryVector) -> Result<f64> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: z.len(),
            });
        }
        Ok(self.energy_bits(z.as_bytes()))
    }

    pub(crate) fn energy_bits(&self, z: &[u8]) -> f64 {
        let mut e = self.offset;
        for i in 0..self.n {
            if z[i] == 0 {
                continue;
            }
            let row = self.q_row(i);
            e += row[i] + self.b[i];
            let mut pair = 0.0;
            for j in (i + 1)..self.n {
                if z[j] == 1 {
                    pair += row[j];
                }
            }
            e += 2.0 * pair;
        }
        e
    }

    /// Ising form of the problem under `z = (1 + σ) / 2`.
    pub fn to_ising(&self) -> IsingModel {
        let n = self.n;
        let mut couplings = vec![0.0; n * n];
        let mut fields = vec![0.0; n];
        let mut constant = self.offset;
        for i in 0..n {
            let row = self.q_row(i);
            let row_sum: f64 = row.iter().sum();
            fields[i] = -(0.5 * row_sum + 0.5 * self.b[i]);
            constant += 0.25 * row_sum + 0.25 * row[i] + 0.5 * self.b[i];
            for j in (i + 1)..n {
                couplings[i * n + j] = -0.5 * row[j];
            }
        }
        IsingModel {
            n,
            couplings,
            fields,
            constant,
        }
    }

    /// Flattened export with `i < j` couplings.
    ///
    /// The exported energy is `Σ linear_i z_i + Σ value_ij z_i z_j + offset`,
    /// so `linear_i = q_ii + b_i` and `value_ij = 2 q_ij`.
    pub fn to_export(&self) -> QuboExport {
        let mut quadratic = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let v = self.q(i, j);
                if v != 0.0 {
                    quadratic.push((i, j, 2.0 * v));
                }
            }
        }
        QuboExport {
            n: self.n,
            lambda: self.lambda,
            offset: self.offset,
            linear: (0..self.n).map(|i| self.q(i, i) + self.b[i]).collect(),
            quadratic,
        }
    }

    pub fn from_export(e: &QuboExport) -> Result<Self> {
        if e.linear.len() != e.n {
            return Err(Error::DimensionMismatch {
                expected: e.n,
                actual: e.linear.len(),
            });
        }
        let mut q = vec![0.0; e.n * e.n];
        for &(i, j, v) in &e.quadratic {
            if i >= j || j >= e.n {
                return Err(Error::invalid(format!("bad coupling index ({i}, {j})")));
            }
            q[i * e.n + j] += 0.5 * v;
            q[j * e.n + i] += 0.5 * v;
        }
        QuboProblem::new(e.n, q, e.linear.clone(), e.offset, e.lambda)
    }
}

/// Wire format handed to external samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboExport {
    pub n: usize,
    pub lambda: f64,
    pub offset: f64,
    pub linear: Vec<f64>,
    pub quadratic: Vec<(usize, usize, f64)>,
}

/// `H(σ) = −Σ_{i<j} J_ij σ_i σ_j − Σ_i h_i σ_i + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    n: usize,
    couplings: Vec<f64>,
    fields: Vec<f64>,
    constant: f64,
}

impl IsingModel {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Coupling `J_ij` for `i < j`.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.couplings[a * self.n + b]
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn energy(&self, spins: &[i8]) -> f64 {
        let mut e = self.constant;
        for (i, &s) in spins.iter().enumerate().take(self.n) {
            let si = f64::from(s);
            e -= self.fields[i] * si;
            let row = &self.couplings[i * self.n..(i + 1) * self.n];
            for (c, &sj) in row.iter().zip(spins).skip(i + 1) {
                e -= c * si * f64::from(sj);
            }
        }
        e
    }
}

pub fn qubo_to_ising(p: &QuboProblem) -> IsingModel {
    p.to_ising()
}

/// Block-diagonal data costs alone (no penalty, λ = 0).
///
/// Within cluster `k`, `q[(k,i),(k,j)] = ‖x_i − x_j‖² / (4 s_k)` for `i ≠ j`.
/// Each unordered pair is counted twice by `zᵀqz`, so a feasible `z` scores
/// `Σ_k (1 / 2 s_k) Σ_{i<j ∈ k} ‖x_i − x_j‖² = Σ_k ½ Σ_{i ∈ k} ‖x_i − μ̂_k‖²`,
/// the Gaussian negative log-likelihood with identity covariance and the
/// sample mean plugged in.
pub fn build_data_costs(t: &ClusteringTask) -> QuboProblem {
    let n_points = t.n_points();
    let n = t.n_vars();
    let mut q = vec![0.0; n * n];
    let sq = pairwise_sq_dists(t.points());
    for (k, &s) in t.sizes().iter().enumerate() {
        let scale = 1.0 / (4.0 * s as f64);
        for i in 0..n_points {
            for j in 0..n_points {
                if i != j {
                    let (u, v) = (k * n_points + i, k * n_points + j);
                    q[u * n + v] = sq[i * n_points + j] * scale;
                }
            }
        }
    }
    QuboProblem {
        n,
        q,
        b: vec![0.0; n],
        offset: 0.0,
        lambda: 0.0,
    }
}

/// Penalized QUBO `q = Q + λGᵀG`, `b = −2λGᵀd`, `offset = λdᵀd`.
pub fn build_qubo(t: &ClusteringTask, lambda: f64) -> Result<QuboProblem> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let mut p = build_data_costs(t);
    let g = build_constraints(t);
    let n = p.n;
    let n_points = t.n_points();
    let k = t.k();
    // (GᵀG)_uv counts the rows shared by columns u and v: same point or same cluster.
    for u in 0..n {
        let (ku, iu) = (u / n_points, u % n_points);
        for v in 0..n {
            let (kv, iv) = (v / n_points, v % n_points);
            let shared = usize::from(iu == iv) + usize::from(ku == kv);
            if shared > 0 {
                p.q[u * n + v] += lambda * shared as f64;
            }
        }
    }
    for u in 0..n {
        let [r1, r2] = g.column_rows(u);
        p.b[u] = -2.0 * lambda * (g.rhs[r1] + g.rhs[r2]) as f64;
    }
    let dtd: i64 = g.rhs.iter().map(|d| d * d).sum();
    p.offset = lambda * dtd as f64;
    p.lambda = lambda;
    debug_assert_eq!(k * n_points, n);
    Ok(p)
}

pub fn qubo_energy(p: &QuboProblem, z: &BinaryVector) -> Result<f64> {
    p.energy(z)
}

pub(crate) fn pairwise_sq_dists(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}
