#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pairlearn::io::write_matrix_csv;
use pairlearn::linalg::{self, DenseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// `X Xᵀ` with `X` of shape n×rank.
pub fn random_psd(r: &mut impl Rng, n: usize, rank: usize) -> DenseMatrix {
    let x = random_matrix(r, n, rank);
    x.matmul(&x.transpose()).unwrap()
}

pub fn random_binary(r: &mut impl Rng, rows: usize, cols: usize, p: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| if r.random_bool(p) { 1.0 } else { 0.0 })
}

pub fn dense_inverse(a: &DenseMatrix) -> DenseMatrix {
    linalg::solve(a, &DenseMatrix::identity(a.rows())).unwrap()
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn write_labels(dir: &Path, name: &str, y: &DenseMatrix) -> PathBuf {
    let p = dir.join(name);
    write_matrix_csv(&p, &ids("d", y.rows()), &ids("t", y.cols()), y).unwrap();
    p
}

pub fn write_kernel(dir: &Path, name: &str, prefix: &str, k: &DenseMatrix) -> PathBuf {
    let p = dir.join(name);
    write_matrix_csv(&p, &ids(prefix, k.rows()), &ids(prefix, k.cols()), k).unwrap();
    p
}

pub fn rel_err(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.max_rel_diff(b)
}
