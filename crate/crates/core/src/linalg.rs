//! Dense row-major matrices, symmetric eigendecomposition and the handful of
//! structured products the pairwise models are built from.
//!
//! The eigensolver and the Cholesky/LU solves are delegated to `nalgebra`;
//! everything else operates on [`DenseMatrix`] directly.

use std::cell::Cell;
use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Relative tolerance on `max|M - M^T| / max|M|` accepted by [`sym_eig`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;
/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Smallest admissible divisor magnitude for [`elementwise`] division.
pub const MIN_DIVISOR: f64 = 1e-300;

const EIG_MAX_SWEEPS_PER_DIM: usize = 1000;
const PARALLEL_MATMUL_FLOPS: usize = 1 << 21;

thread_local! {
    static SYM_EIG_CALLS: Cell<usize> = const { Cell::new(0) };
}

/// Number of [`sym_eig`] calls made on the current thread.
pub fn sym_eig_calls() -> usize {
    SYM_EIG_CALLS.with(Cell::get)
}

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::RaggedInput {
                    row: i,
                    len: r.len(),
                    expected: cols,
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    /// Inverse of column-stacking: `mat(vec(X)) == X`.
    pub fn from_vec_cols(rows: usize, cols: usize, v: &[f64]) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} cannot be reshaped to {rows}x{cols}",
                v.len()
            )));
        }
        Ok(Self::from_fn(rows, cols, |i, j| v[j * rows + i]))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Column-stacking vectorization; pair (i, j) lands at `j * rows + i`.
    pub fn vec_cols(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                v.push(self[(i, j)]);
            }
        }
        v
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other, what)?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    /// `self + shift * I`.
    pub fn add_diagonal(&self, shift: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += shift;
        }
        m
    }

    /// `self * diag(factors)`: column j multiplied by `factors[j]`.
    pub fn scale_cols(&self, factors: &[f64]) -> Self {
        debug_assert_eq!(factors.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * factors[j])
    }

    /// `diag(factors) * self`: row i multiplied by `factors[i]`.
    pub fn scale_rows(&self, factors: &[f64]) -> Self {
        debug_assert_eq!(factors.len(), self.rows);
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * factors[i])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let n = other.cols;
        let mut out = vec![0.0; self.rows * n];
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        };
        if n > 0 && self.rows * self.cols * n >= PARALLEL_MATMUL_FLOPS {
            out.par_chunks_mut(n).enumerate().for_each(kernel);
        } else if n > 0 {
            out.chunks_mut(n).enumerate().for_each(kernel);
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: n,
            data: out,
        })
    }

    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "mat_vec: {}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Explicit Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (p, q) = other.shape();
        Self::from_fn(self.rows * p, self.cols * q, |r, c| {
            self[(r / p, c / q)] * other[(r % p, c % q)]
        })
    }

    /// Submatrix with the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    /// Rows of `self` followed by rows of `below`.
    pub fn vstack(&self, below: &Self) -> Result<Self> {
        if self.cols != below.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} columns on {} columns",
                below.cols, self.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        Ok(Self { rows: self.rows + below.rows, cols: self.cols, data })
    }

    /// Columns of `self` followed by columns of `right`.
    pub fn hstack(&self, right: &Self) -> Result<Self> {
        if self.rows != right.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot join {} rows with {} rows",
                right.rows, self.rows
            )));
        }
        Ok(Self::from_fn(self.rows, self.cols + right.cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                right[(i, j - self.cols)]
            }
        }))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `max|self - other| / max(max|other|, tiny)`; used by tests and checks.
    pub fn max_rel_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in max_rel_diff");
        let scale = other.max_abs().max(f64::MIN_POSITIVE);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
            / scale
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Orthonormal eigenvectors (as columns) and ascending eigenvalues of a
/// symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub vectors: DenseMatrix,
    pub values: Vec<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// `vectors * diag(f(values)) * vectors^T`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let weights: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        let scaled = self.vectors.scale_cols(&weights);
        scaled
            .matmul(&self.vectors.transpose())
            .expect("square eigenvector matrix")
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.spectral_map(|v| v)
    }

    /// Zeroes eigenvalues below `RANK_TOLERANCE * max`, including small
    /// negative round-off.
    pub fn clamp_small(mut self) -> Self {
        let cutoff = RANK_TOLERANCE * self.max_value().max(0.0);
        for v in &mut self.values {
            if *v < cutoff {
                *v = 0.0;
            }
        }
        self
    }

    /// Rows of `vectors` reordered so the decomposition describes `P M P^T`
    /// where row i of the new matrix is row `perm[i]` of the old one.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let cols: Vec<usize> = (0..self.dim()).collect();
        EigenDecomposition {
            vectors: self.vectors.select(perm, &cols),
            values: self.values.clone(),
        }
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues.
///
/// The input is symmetrized as `(M + M^T) / 2` after checking that its
/// asymmetry is within [`SYMMETRY_TOLERANCE`] of its largest entry.
pub fn sym_eig(m: &DenseMatrix) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::NonSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    SYM_EIG_CALLS.with(|c| c.set(c.get() + 1));
    let n = m.rows();
    if n == 0 {
        return Ok(EigenDecomposition {
            vectors: DenseMatrix::zeros(0, 0),
            values: Vec::new(),
        });
    }
    let scale = m.max_abs();
    let asymmetry = m.sub(&m.transpose())?.max_abs();
    let tolerance = SYMMETRY_TOLERANCE * scale;
    if asymmetry > tolerance {
        return Err(Error::ExcessiveAsymmetry {
            asymmetry,
            tolerance,
        });
    }
    let sym = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let max_iter = EIG_MAX_SWEEPS_PER_DIM * n;
    let eig = nalgebra::SymmetricEigen::try_new(sym.to_nalgebra(), f64::EPSILON, max_iter)
        .ok_or(Error::ConvergenceFailure(max_iter))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigenDecomposition { vectors, values })
}

/// `left * x * right`, i.e. `mat((right^T ⊗ left) vec(x))` without forming
/// the Kronecker product.
pub fn kron_apply(left: &DenseMatrix, x: &DenseMatrix, right: &DenseMatrix) -> Result<DenseMatrix> {
    left.matmul(x)?.matmul(right)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Multiply,
    Divide,
    /// `1 / (a + b)`.
    ReciprocalShift,
}

#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Matrix(&'a DenseMatrix),
    Scalar(f64),
}

pub fn elementwise(op: ElementwiseOp, a: &DenseMatrix, b: Operand<'_>) -> Result<DenseMatrix> {
    let rhs = |k: usize| match b {
        Operand::Matrix(m) => m.data[k],
        Operand::Scalar(s) => s,
    };
    if let Operand::Matrix(m) = b {
        a.check_same_shape(m, "elementwise")?;
    }
    let mut data = Vec::with_capacity(a.data.len());
    for (k, &x) in a.data.iter().enumerate() {
        let y = rhs(k);
        let v = match op {
            ElementwiseOp::Multiply => x * y,
            ElementwiseOp::Divide => {
                if y.abs() <= MIN_DIVISOR {
                    return Err(Error::DivisionByNearZero(y));
                }
                x / y
            }
            ElementwiseOp::ReciprocalShift => {
                let d = x + y;
                if d.abs() <= MIN_DIVISOR {
                    return Err(Error::DivisionByNearZero(d));
                }
                1.0 / d
            }
        };
        data.push(v);
    }
    Ok(DenseMatrix {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "solve_spd: {}x{} system with {}x{} right-hand side",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let chol = nalgebra::Cholesky::new(a.to_nalgebra())
        .ok_or_else(|| Error::SingularSystem("matrix is not positive definite".into()))?;
    Ok(DenseMatrix::from_nalgebra(&chol.solve(&b.to_nalgebra())))
}

pub fn inverse_spd(a: &DenseMatrix) -> Result<DenseMatrix> {
    solve_spd(a, &DenseMatrix::identity(a.rows()))
}

/// Solves a general square system `a x = b` by partial-pivot LU.
pub fn solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "solve: {}x{} system with {}x{} right-hand side",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    nalgebra::LU::new(a.to_nalgebra())
        .solve(&b.to_nalgebra())
        .map(|x| DenseMatrix::from_nalgebra(&x))
        .ok_or_else(|| Error::SingularSystem("LU factorization is singular".into()))
}

#[cfg(test)]
pub(crate) mod testing {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::DenseMatrix;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// `X X^T` with `X` of shape n x rank; full rank when rank >= n.
    pub fn random_psd(rng: &mut impl Rng, n: usize, rank: usize) -> DenseMatrix {
        let x = random_matrix(rng, n, rank);
        x.matmul(&x.transpose()).unwrap()
    }

    /// Dense inverse through LU, kept independent of the eigen route.
    pub fn dense_inverse(a: &DenseMatrix) -> DenseMatrix {
        super::solve(a, &DenseMatrix::identity(a.rows())).unwrap()
    }
}
