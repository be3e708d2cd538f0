//! Gram matrices for instances and tasks, the label matrix, and the explicit
//! pairwise kernels (Kronecker, two-step Ξ and shifted Υ) that serve as
//! small-scale oracles.

use std::collections::HashSet;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, EigenDecomposition, SYMMETRY_TOLERANCE};

/// Eigenvalues below `-PSD_TOLERANCE * max` reject a kernel as indefinite.
pub const PSD_TOLERANCE: f64 = 1e-9;
/// Default cap on `m * q` for explicitly materialized pairwise matrices.
pub const DEFAULT_PAIRWISE_CAP: usize = 4096;

/// Symmetric PSD Gram matrix with one identifier per row/column.
///
/// The eigendecomposition is computed on first use and cached, so any number
/// of fits over a kernel share one factorization.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    ids: Vec<String>,
    gram: DenseMatrix,
    eigen: OnceLock<EigenDecomposition>,
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::IdCollision(id.clone()));
        }
    }
    Ok(())
}

pub(crate) fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

impl KernelMatrix {
    /// Validates shape, identifiers and symmetry, then symmetrizes.
    pub fn new(ids: Vec<String>, gram: DenseMatrix) -> Result<Self> {
        if !gram.is_square() {
            return Err(Error::NonSquareKernel {
                rows: gram.rows(),
                cols: gram.cols(),
            });
        }
        if ids.len() != gram.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for a {}x{} kernel",
                ids.len(),
                gram.rows(),
                gram.cols()
            )));
        }
        check_unique(&ids)?;
        let n = gram.rows();
        let tol = SYMMETRY_TOLERANCE * gram.max_abs();
        for i in 0..n {
            for j in (i + 1)..n {
                if (gram[(i, j)] - gram[(j, i)]).abs() > tol {
                    return Err(Error::AsymmetricInput { row: i, col: j });
                }
            }
        }
        let gram = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (gram[(i, j)] + gram[(j, i)]));
        Ok(KernelMatrix {
            ids,
            gram,
            eigen: OnceLock::new(),
        })
    }

    /// Kernel with identifiers `"0"`, `"1"`, ...
    pub fn from_gram(gram: DenseMatrix) -> Result<Self> {
        Self::new(default_ids(gram.rows()), gram)
    }

    pub fn with_ids(self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for a kernel of size {}",
                ids.len(),
                self.len()
            )));
        }
        check_unique(&ids)?;
        Ok(KernelMatrix { ids, ..self })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn gram(&self) -> &DenseMatrix {
        &self.gram
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Cached eigendecomposition with tiny eigenvalues clamped to zero.
    ///
    /// Fails with [`Error::NotPsd`] when the smallest eigenvalue is below
    /// `-1e-9 * max`.
    pub fn eigen(&self) -> Result<&EigenDecomposition> {
        if let Some(e) = self.eigen.get() {
            return Ok(e);
        }
        let e = linalg::sym_eig(&self.gram)?;
        let tolerance = -PSD_TOLERANCE * e.max_value().max(0.0);
        if e.min_value() < tolerance {
            return Err(Error::NotPsd {
                min: e.min_value(),
                tolerance,
            });
        }
        let _ = self.eigen.set(e.clamp_small());
        Ok(self.eigen.get().expect("eigen cache just set"))
    }

    /// Clamps every negative eigenvalue to zero and rebuilds the Gram matrix
    /// from the clipped spectrum.
    pub fn clip_spectrum(self) -> Result<Self> {
        let mut e = linalg::sym_eig(&self.gram)?;
        for v in &mut e.values {
            *v = v.max(0.0);
        }
        let e = e.clamp_small();
        let gram = e.reconstruct();
        let n = gram.rows();
        let gram = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (gram[(i, j)] + gram[(j, i)]));
        let eigen = OnceLock::new();
        let _ = eigen.set(e);
        Ok(KernelMatrix {
            ids: self.ids,
            gram,
            eigen,
        })
    }

    /// `K + shift * I`; a cached decomposition carries over shifted.
    pub fn shifted(&self, shift: f64) -> Self {
        let eigen = OnceLock::new();
        if let Some(e) = self.eigen.get() {
            let _ = eigen.set(EigenDecomposition {
                vectors: e.vectors.clone(),
                values: e.values.iter().map(|v| v + shift).collect(),
            });
        }
        KernelMatrix {
            ids: self.ids.clone(),
            gram: self.gram.add_diagonal(shift),
            eigen,
        }
    }

    /// Principal submatrix over the given positions (no eigen cache).
    pub fn subset(&self, idx: &[usize]) -> Self {
        KernelMatrix {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            gram: self.gram.select(idx, idx),
            eigen: OnceLock::new(),
        }
    }

    /// Reorders (and possibly restricts) the kernel to `ids`.
    ///
    /// Returns the aligned kernel and the number of dropped entries. A pure
    /// permutation keeps the cached decomposition.
    pub fn align_to(&self, ids: &[String]) -> Result<(Self, usize)> {
        let position: std::collections::HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut perm = Vec::with_capacity(ids.len());
        for id in ids {
            perm.push(*position.get(id.as_str()).ok_or_else(|| Error::MissingId(id.clone()))?);
        }
        let dropped = self.len() - perm.len();
        if dropped == 0 && perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok((self.clone(), 0));
        }
        let out = self.subset(&perm);
        if dropped == 0 {
            if let Some(e) = self.eigen.get() {
                let _ = out.eigen.set(e.permuted(&perm));
            }
        }
        Ok((out, dropped))
    }

    pub(crate) fn check_ids(&self, expected: &[String], what: &str) -> Result<()> {
        if self.ids != expected {
            return Err(Error::IdMismatch(format!(
                "{what} kernel ids do not match label ids"
            )));
        }
        Ok(())
    }
}

/// Dyad labels: rows are instances, columns are tasks, every pair observed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    instance_ids: Vec<String>,
    task_ids: Vec<String>,
    values: DenseMatrix,
}

impl LabelMatrix {
    pub fn new(instance_ids: Vec<String>, task_ids: Vec<String>, values: DenseMatrix) -> Result<Self> {
        if instance_ids.len() != values.rows() || task_ids.len() != values.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} labels with {} instance ids and {} task ids",
                values.rows(),
                values.cols(),
                instance_ids.len(),
                task_ids.len()
            )));
        }
        check_unique(&instance_ids)?;
        check_unique(&task_ids)?;
        Ok(LabelMatrix {
            instance_ids,
            task_ids,
            values,
        })
    }

    pub fn from_values(values: DenseMatrix) -> Self {
        LabelMatrix {
            instance_ids: default_ids(values.rows()),
            task_ids: default_ids(values.cols()),
            values,
        }
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn task_ids(&self) -> &[String] {
        &self.task_ids
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn n_instances(&self) -> usize {
        self.values.rows()
    }

    pub fn n_tasks(&self) -> usize {
        self.values.cols()
    }

    pub fn with_values(&self, values: DenseMatrix) -> Result<Self> {
        Self::new(self.instance_ids.clone(), self.task_ids.clone(), values)
    }

    pub fn is_binary(&self) -> bool {
        self.values.as_slice().iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Linear kernel `K[i][j] = <x_i, x_j>`.
pub fn gram_linear(features: &[Vec<f64>]) -> Result<KernelMatrix> {
    let x = DenseMatrix::from_rows(features)?;
    KernelMatrix::from_gram(x.matmul(&x.transpose())?)
}

/// `K[i][j] = exp(-d_ij / scale)` from a symmetric distance matrix.
pub fn gram_rbf(distances: &DenseMatrix, scale: f64) -> Result<KernelMatrix> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("rbf scale must be positive, got {scale}")));
    }
    if !distances.is_square() {
        return Err(Error::NonSquare {
            rows: distances.rows(),
            cols: distances.cols(),
        });
    }
    let n = distances.rows();
    for i in 0..n {
        if distances[(i, i)] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "distance diagonal entry ({i}, {i}) is {} instead of 0",
                distances[(i, i)]
            )));
        }
        for j in 0..n {
            let d = distances[(i, j)];
            if d < 0.0 {
                return Err(Error::NegativeDistance { row: i, col: j, value: d });
            }
            if d != distances[(j, i)] {
                return Err(Error::AsymmetricInput { row: i, col: j });
            }
        }
    }
    KernelMatrix::from_gram(distances.map(|d| (-d / scale).exp()))
}

fn check_pairwise_cap(m: usize, q: usize, cap: usize) -> Result<()> {
    let size = m.saturating_mul(q);
    if size > cap {
        return Err(Error::SizeOverflow { size, cap });
    }
    Ok(())
}

/// Explicit `G ⊗ K`; pair (instance i, task j) sits at index `j * m + i`.
pub fn kron_gram(g: &KernelMatrix, k: &KernelMatrix) -> Result<DenseMatrix> {
    kron_gram_capped(g, k, DEFAULT_PAIRWISE_CAP)
}

pub fn kron_gram_capped(g: &KernelMatrix, k: &KernelMatrix, cap: usize) -> Result<DenseMatrix> {
    check_pairwise_cap(k.len(), g.len(), cap)?;
    Ok(g.gram().kron(k.gram()))
}

/// Pairwise kernel whose KRR with unit regularization reproduces two-step
/// fitted values: `Ξ = (G ⊗ K)(λ_dλ_t I + λ_t I ⊗ K + λ_d G ⊗ I)^{-1}`.
///
/// Built in the joint eigenbasis `V ⊗ U`, where it is diagonal with entries
/// `σ s / (λ_dλ_t + λ_t σ + λ_d s)`.
pub fn xi_gram(k: &KernelMatrix, g: &KernelMatrix, lambda_d: f64, lambda_t: f64) -> Result<DenseMatrix> {
    if !(lambda_d > 0.0 && lambda_t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "xi kernel needs positive regularization, got ({lambda_d}, {lambda_t})"
        )));
    }
    check_pairwise_cap(k.len(), g.len(), DEFAULT_PAIRWISE_CAP)?;
    let (ek, eg) = (k.eigen()?, g.eigen()?);
    let m = ek.dim();
    let basis = eg.vectors.kron(&ek.vectors);
    let weights: Vec<f64> = (0..basis.cols())
        .map(|c| {
            let (sigma, s) = (ek.values[c % m], eg.values[c / m]);
            sigma * s / (lambda_d * lambda_t + lambda_t * sigma + lambda_d * s)
        })
        .collect();
    basis.scale_cols(&weights).matmul(&basis.transpose())
}

/// Explicit `(G + λ_t I) ⊗ (K + λ_d I)` on the training pairs.
pub fn upsilon_gram(k: &KernelMatrix, g: &KernelMatrix, lambda_d: f64, lambda_t: f64) -> Result<DenseMatrix> {
    check_pairwise_cap(k.len(), g.len(), DEFAULT_PAIRWISE_CAP)?;
    Ok(g.gram().add_diagonal(lambda_t).kron(&k.gram().add_diagonal(lambda_d)))
}

/// Maps binary labels to `N/N⁺` (positives) and `-N/N⁻` (negatives), with
/// `N = m q`. The rescored labels always sum to zero.
pub fn rescore_labels(y: &LabelMatrix) -> Result<LabelMatrix> {
    let values = y.values();
    for i in 0..values.rows() {
        for j in 0..values.cols() {
            let v = values[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::NonBinaryLabels { row: i, col: j, value: v });
            }
        }
    }
    let n = values.as_slice().len() as f64;
    let positives = values.as_slice().iter().filter(|&&v| v == 1.0).count() as f64;
    let negatives = n - positives;
    if positives == 0.0 || negatives == 0.0 {
        return Err(Error::AllSameClass);
    }
    let (pos, neg) = (n / positives, -n / negatives);
    y.with_values(values.map(|v| if v == 1.0 { pos } else { neg }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testing::*;
    use rand::Rng;

    fn km(rows: &[&[f64]]) -> KernelMatrix {
        KernelMatrix::from_gram(
            DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap(),
        )
        .unwrap()
    }

    fn dm(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn linear_gram_examples() {
        let k = gram_linear(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(k.gram(), &DenseMatrix::identity(2));
        assert_eq!(gram_linear(&[vec![1.0, 1.0]]).unwrap().gram(), &dm(&[&[2.0]]));
        assert!(matches!(
            gram_linear(&[vec![1.0], vec![1.0, 2.0]]),
            Err(Error::RaggedInput { .. })
        ));
    }

    #[test]
    fn linear_gram_matches_double_loop() {
        let mut r = rng(1);
        let x: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let k = gram_linear(&x).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..3).map(|c| x[i][c] * x[j][c]).sum();
                assert!((k.gram()[(i, j)] - dot).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rbf_gram_examples() {
        let d = dm(&[&[0.0, 10.0], &[10.0, 0.0]]);
        let k = gram_rbf(&d, 10.0).unwrap();
        assert_eq!(k.gram()[(0, 0)], 1.0);
        assert!((k.gram()[(0, 1)] - 0.367879).abs() < 1e-6);
        assert!(matches!(
            gram_rbf(&dm(&[&[0.0, -1.0], &[-1.0, 0.0]]), 1.0),
            Err(Error::NegativeDistance { .. })
        ));
        assert!(matches!(
            gram_rbf(&dm(&[&[0.0, 1.0], &[2.0, 0.0]]), 1.0),
            Err(Error::AsymmetricInput { .. })
        ));
    }

    #[test]
    fn rbf_gram_is_entrywise_exp() {
        let mut r = rng(2);
        let mut d = DenseMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in (i + 1)..3 {
                let v = r.random_range(0.0..5.0);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        let k = gram_rbf(&d, 2.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k.gram()[(i, j)], (-d[(i, j)] / 2.5).exp());
            }
        }
    }

    #[test]
    fn kron_gram_examples() {
        let g = km(&[&[1.0]]);
        let k = km(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(kron_gram(&g, &k).unwrap(), DenseMatrix::identity(2));
        assert_eq!(kron_gram(&k, &k).unwrap(), DenseMatrix::identity(4));
        let big = KernelMatrix::from_gram(DenseMatrix::identity(70)).unwrap();
        assert!(matches!(kron_gram(&big, &big), Err(Error::SizeOverflow { .. })));
    }

    #[test]
    fn kron_gram_index_layout() {
        let mut r = rng(4);
        let g = KernelMatrix::from_gram(random_psd(&mut r, 2, 2)).unwrap();
        let k = KernelMatrix::from_gram(random_psd(&mut r, 3, 3)).unwrap();
        let gamma = kron_gram(&g, &k).unwrap();
        let m = 3;
        for j in 0..2 {
            for i in 0..3 {
                for jp in 0..2 {
                    for ip in 0..3 {
                        let expected = g.gram()[(j, jp)] * k.gram()[(i, ip)];
                        assert_eq!(gamma[(j * m + i, jp * m + ip)], expected);
                    }
                }
            }
        }
    }

    #[test]
    fn xi_gram_scalar_and_identity() {
        // σ s / (λdλt + λt σ + λd s) = 1 / 3
        let one = km(&[&[1.0]]);
        let xi = xi_gram(&one, &one, 1.0, 1.0).unwrap();
        assert!((xi[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        let i2 = KernelMatrix::from_gram(DenseMatrix::identity(2)).unwrap();
        let xi = xi_gram(&i2, &one, 1.0, 1.0).unwrap();
        assert!(xi.max_rel_diff(&DenseMatrix::identity(2).scale(1.0 / 3.0)) < 1e-14);
    }

    #[test]
    fn xi_gram_matches_dense_inverse_formula() {
        let mut r = rng(6);
        for _ in 0..5 {
            let k = KernelMatrix::from_gram(random_psd(&mut r, 2, 2).add_diagonal(0.1)).unwrap();
            let g = KernelMatrix::from_gram(random_psd(&mut r, 3, 3).add_diagonal(0.1)).unwrap();
            let (ld, lt) = (r.random_range(0.1..2.0), r.random_range(0.1..2.0));
            let (m, q) = (2, 3);
            let inner = DenseMatrix::identity(m * q)
                .scale(ld * lt)
                .add(&DenseMatrix::identity(q).kron(k.gram()).scale(lt))
                .unwrap()
                .add(&g.gram().kron(&DenseMatrix::identity(m)).scale(ld))
                .unwrap();
            let oracle = g.gram().kron(k.gram()).matmul(&dense_inverse(&inner)).unwrap();
            let xi = xi_gram(&k, &g, ld, lt).unwrap();
            assert!(xi.max_rel_diff(&oracle) < 1e-10);
            // symmetric PSD
            assert!(xi.max_rel_diff(&xi.transpose()) < 1e-12);
            let e = linalg::sym_eig(&xi).unwrap();
            assert!(e.min_value() >= -1e-9 * e.max_value());
        }
    }

    #[test]
    fn upsilon_gram_examples() {
        let one = km(&[&[1.0]]);
        assert_eq!(upsilon_gram(&one, &one, 1.0, 1.0).unwrap(), dm(&[&[4.0]]));
        let i2 = KernelMatrix::from_gram(DenseMatrix::identity(2)).unwrap();
        assert_eq!(
            upsilon_gram(&i2, &i2, 1.0, 1.0).unwrap(),
            DenseMatrix::identity(4).scale(4.0)
        );
        let mut r = rng(8);
        let k = KernelMatrix::from_gram(random_psd(&mut r, 2, 2)).unwrap();
        let g = KernelMatrix::from_gram(random_psd(&mut r, 2, 2)).unwrap();
        let composed = kron_gram(&g.shifted(0.7), &k.shifted(0.3)).unwrap();
        assert_eq!(upsilon_gram(&k, &g, 0.3, 0.7).unwrap(), composed);
        assert_eq!(upsilon_gram(&k, &g, 0.0, 0.0).unwrap(), kron_gram(&g, &k).unwrap());
    }

    #[test]
    fn rescore_examples() {
        let y = LabelMatrix::from_values(dm(&[&[1.0, 0.0], &[0.0, 0.0]]));
        let r = rescore_labels(&y).unwrap();
        assert_eq!(r.values(), &dm(&[&[4.0, -4.0 / 3.0], &[-4.0 / 3.0, -4.0 / 3.0]]));
        let y = LabelMatrix::from_values(dm(&[&[1.0], &[0.0]]));
        assert_eq!(rescore_labels(&y).unwrap().values(), &dm(&[&[2.0], &[-2.0]]));
        let y = LabelMatrix::from_values(dm(&[&[1.0], &[1.0]]));
        assert!(matches!(rescore_labels(&y), Err(Error::AllSameClass)));
        let y = LabelMatrix::from_values(dm(&[&[0.5], &[1.0]]));
        assert!(matches!(rescore_labels(&y), Err(Error::NonBinaryLabels { .. })));
    }

    #[test]
    fn rescored_labels_sum_to_zero() {
        let mut r = rng(10);
        for _ in 0..50 {
            let mut v = DenseMatrix::from_fn(4, 4, |_, _| f64::from(r.random_bool(0.3) as u8));
            v[(0, 0)] = 1.0;
            v[(3, 3)] = 0.0;
            let rescored = rescore_labels(&LabelMatrix::from_values(v)).unwrap();
            let sum: f64 = rescored.values().as_slice().iter().sum();
            assert!(sum.abs() <= 1e-12 * 16.0, "sum={sum}");
        }
    }

    #[test]
    fn kernel_validation() {
        assert!(matches!(
            KernelMatrix::from_gram(DenseMatrix::zeros(2, 3)),
            Err(Error::NonSquareKernel { .. })
        ));
        assert!(matches!(
            KernelMatrix::new(vec!["a".into(), "a".into()], DenseMatrix::identity(2)),
            Err(Error::IdCollision(_))
        ));
        let indefinite = km(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(indefinite.eigen(), Err(Error::NotPsd { .. })));
        let clipped = km(&[&[0.0, 1.0], &[1.0, 0.0]]).clip_spectrum().unwrap();
        assert!(clipped.eigen().unwrap().min_value() >= 0.0);
        assert!(clipped.gram().max_rel_diff(&dm(&[&[0.5, 0.5], &[0.5, 0.5]])) < 1e-14);
    }

    #[test]
    fn alignment_permutes_and_keeps_cache() {
        let mut r = rng(12);
        let k = KernelMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            random_psd(&mut r, 3, 3),
        )
        .unwrap();
        k.eigen().unwrap();
        let before = linalg::sym_eig_calls();
        let order = vec!["c".to_string(), "a".to_string(), "b".to_string()];
        let (aligned, dropped) = k.align_to(&order).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(aligned.ids(), order.as_slice());
        let e = aligned.eigen().unwrap();
        assert_eq!(linalg::sym_eig_calls(), before);
        assert!(e.reconstruct().max_rel_diff(aligned.gram()) < 1e-10);
        let (sub, dropped) = k.align_to(&["b".to_string()]).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(sub.gram()[(0, 0)], k.gram()[(1, 1)]);
        assert!(matches!(k.align_to(&["z".to_string()]), Err(Error::MissingId(id)) if id == "z"));
    }
}
