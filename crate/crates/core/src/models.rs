//! Dual-form fits for independent-task (IT), Kronecker (KK), ordinary
//! Kronecker least-squares (OKKLS) and two-step (TS) kernel ridge regression.
//!
//! All fits go through the cached eigendecompositions of `K` and `G`, so
//! refitting for another regularization value costs a few matrix products.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelMatrix, LabelMatrix};
use crate::linalg::{DenseMatrix, EigenDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    It,
    Kk,
    Okkls,
    Ts,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::It => "it",
            Variant::Kk => "kk",
            Variant::Okkls => "okkls",
            Variant::Ts => "ts",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "it" => Ok(Variant::It),
            "kk" => Ok(Variant::Kk),
            "okkls" => Ok(Variant::Okkls),
            "ts" => Ok(Variant::Ts),
            other => Err(Error::InvalidParameter(format!("unknown model '{other}'"))),
        }
    }
}

/// Fitted dual parameters `A` (m x q). Regularization fields a variant does
/// not use are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DualModel {
    pub variant: Variant,
    pub params: DenseMatrix,
    pub lambda_d: f64,
    pub lambda_t: f64,
    pub lambda: f64,
    pub instance_ids: Vec<String>,
    pub task_ids: Vec<String>,
}

fn check_lambda(name: &str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite and nonnegative, got {value}"
        )))
    }
}

/// `1 / (σ + λ)` for every eigenvalue, failing on an exact zero divisor.
fn shifted_reciprocals(e: &EigenDecomposition, lambda: f64, what: &str) -> Result<Vec<f64>> {
    e.values
        .iter()
        .map(|&v| {
            let d = v + lambda;
            if d == 0.0 {
                Err(Error::SingularSystem(format!(
                    "{what} kernel is rank-deficient and regularization is zero"
                )))
            } else {
                Ok(1.0 / d)
            }
        })
        .collect()
}

/// `(K + λI)^{-1} X` via the eigendecomposition of `K`.
fn shifted_solve(e: &EigenDecomposition, lambda: f64, x: &DenseMatrix, what: &str) -> Result<DenseMatrix> {
    let w = shifted_reciprocals(e, lambda, what)?;
    let u = &e.vectors;
    u.matmul(&u.transpose().matmul(x)?.scale_rows(&w))
}

/// Independent-task KRR: `(K + λ_d I) A = Y`.
pub fn fit_it(k: &KernelMatrix, y: &LabelMatrix, lambda_d: f64) -> Result<DualModel> {
    check_lambda("lambda_d", lambda_d)?;
    k.check_ids(y.instance_ids(), "instance")?;
    let params = shifted_solve(k.eigen()?, lambda_d, y.values(), "instance")?;
    Ok(DualModel {
        variant: Variant::It,
        params,
        lambda_d,
        lambda_t: 0.0,
        lambda: 0.0,
        instance_ids: y.instance_ids().to_vec(),
        task_ids: y.task_ids().to_vec(),
    })
}

fn kronecker_params(k: &KernelMatrix, g: &KernelMatrix, y: &LabelMatrix, lambda: f64) -> Result<DenseMatrix> {
    k.check_ids(y.instance_ids(), "instance")?;
    g.check_ids(y.task_ids(), "task")?;
    let (ek, eg) = (k.eigen()?, g.eigen()?);
    let (u, v) = (&ek.vectors, &eg.vectors);
    let mut c = u.transpose().matmul(y.values())?.matmul(v)?;
    for (a, &sigma) in ek.values.iter().enumerate() {
        for (b, &s) in eg.values.iter().enumerate() {
            let d = sigma * s + lambda;
            if d == 0.0 {
                return Err(Error::SingularSystem(
                    "Kronecker spectrum has a zero eigenvalue and regularization is zero".into(),
                ));
            }
            c[(a, b)] /= d;
        }
    }
    u.matmul(&c)?.matmul(&v.transpose())
}

/// Kronecker KRR: `(G ⊗ K + λI) vec(A) = vec(Y)`, solved in the joint
/// eigenbasis.
pub fn fit_kk(k: &KernelMatrix, g: &KernelMatrix, y: &LabelMatrix, lambda: f64) -> Result<DualModel> {
    check_lambda("lambda", lambda)?;
    Ok(DualModel {
        variant: Variant::Kk,
        params: kronecker_params(k, g, y, lambda)?,
        lambda_d: 0.0,
        lambda_t: 0.0,
        lambda,
        instance_ids: y.instance_ids().to_vec(),
        task_ids: y.task_ids().to_vec(),
    })
}

/// Unregularized Kronecker least-squares: `(G ⊗ K) vec(A) = vec(Y)`.
///
/// Pass `k.shifted(λ_d)` and `g.shifted(λ_t)` to fit with the shifted
/// pairwise kernel `(G + λ_t I) ⊗ (K + λ_d I)`.
pub fn fit_okkls(k: &KernelMatrix, g: &KernelMatrix, y: &LabelMatrix) -> Result<DualModel> {
    Ok(DualModel {
        variant: Variant::Okkls,
        params: kronecker_params(k, g, y, 0.0)?,
        lambda_d: 0.0,
        lambda_t: 0.0,
        lambda: 0.0,
        instance_ids: y.instance_ids().to_vec(),
        task_ids: y.task_ids().to_vec(),
    })
}

/// Two-step KRR: `A = (K + λ_d I)^{-1} Y (G + λ_t I)^{-1}`.
pub fn fit_ts(k: &KernelMatrix, g: &KernelMatrix, y: &LabelMatrix, lambda_d: f64, lambda_t: f64) -> Result<DualModel> {
    check_lambda("lambda_d", lambda_d)?;
    check_lambda("lambda_t", lambda_t)?;
    k.check_ids(y.instance_ids(), "instance")?;
    g.check_ids(y.task_ids(), "task")?;
    let left = shifted_solve(k.eigen()?, lambda_d, y.values(), "instance")?;
    // X (G + λI)^{-1} = ((G + λI)^{-1} Xᵀ)ᵀ by symmetry of G
    let params = shifted_solve(g.eigen()?, lambda_t, &left.transpose(), "task")?.transpose();
    Ok(DualModel {
        variant: Variant::Ts,
        params,
        lambda_d,
        lambda_t,
        lambda: 0.0,
        instance_ids: y.instance_ids().to_vec(),
        task_ids: y.task_ids().to_vec(),
    })
}

impl DualModel {
    pub fn n_instances(&self) -> usize {
        self.params.rows()
    }

    pub fn n_tasks(&self) -> usize {
        self.params.cols()
    }
}

/// `F = k_test A g_testᵀ` for `p` test instances and `u` test tasks.
///
/// An IT model has no task kernel; its `g_test` rows must be indicator rows
/// selecting training tasks.
pub fn predict(model: &DualModel, k_test: &DenseMatrix, g_test: &DenseMatrix) -> Result<DenseMatrix> {
    if k_test.cols() != model.n_instances() || g_test.cols() != model.n_tasks() {
        return Err(Error::DimensionMismatch(format!(
            "test kernels have {} and {} columns, model was trained on {} instances and {} tasks",
            k_test.cols(),
            g_test.cols(),
            model.n_instances(),
            model.n_tasks()
        )));
    }
    if model.variant == Variant::It {
        for r in 0..g_test.rows() {
            let row = g_test.row(r);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::ITNewTask(r));
            }
        }
    }
    k_test.matmul(&model.params)?.matmul(&g_test.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testing::*;
    use rand::seq::SliceRandom;

    fn dm(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn kern(m: DenseMatrix) -> KernelMatrix {
        KernelMatrix::from_gram(m).unwrap()
    }

    fn labels(m: DenseMatrix) -> LabelMatrix {
        LabelMatrix::from_values(m)
    }

    #[test]
    fn it_examples() {
        let k = kern(dm(&[&[2.0, 0.0], &[0.0, 1.0]]));
        let a = fit_it(&k, &labels(dm(&[&[3.0], &[4.0]])), 1.0).unwrap();
        assert!(a.params.max_rel_diff(&dm(&[&[1.0], &[2.0]])) < 1e-15);
        let y = dm(&[&[1.5, -2.0], &[0.3, 7.0]]);
        let a = fit_it(&kern(DenseMatrix::identity(2)), &labels(y.clone()), 0.0).unwrap();
        assert!(a.params.max_rel_diff(&y) < 1e-15);
    }

    #[test]
    fn it_rejects_singular_and_mismatched() {
        let k = kern(dm(&[&[1.0, 1.0], &[1.0, 1.0]]));
        let y = labels(dm(&[&[1.0], &[2.0]]));
        assert!(matches!(fit_it(&k, &y, 0.0), Err(Error::SingularSystem(_))));
        let k3 = kern(DenseMatrix::identity(3));
        assert!(matches!(fit_it(&k3, &y, 1.0), Err(Error::IdMismatch(_))));
        assert!(matches!(fit_it(&k, &y, -1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn it_matches_dense_inverse() {
        let mut r = rng(31);
        let kmat = random_psd(&mut r, 6, 6);
        let y = random_matrix(&mut r, 6, 3);
        let a = fit_it(&kern(kmat.clone()), &labels(y.clone()), 0.1).unwrap();
        let oracle = dense_inverse(&kmat.add_diagonal(0.1)).matmul(&y).unwrap();
        assert!(a.params.max_rel_diff(&oracle) < 1e-9);
        let residual = kmat.add_diagonal(0.1).matmul(&a.params).unwrap();
        assert!(residual.max_rel_diff(&y) < 1e-8);
    }

    #[test]
    fn kk_examples() {
        let i2 = kern(DenseMatrix::identity(2));
        let a = fit_kk(&i2, &i2, &labels(dm(&[&[2.0, 4.0], &[6.0, 8.0]])), 1.0).unwrap();
        assert!(a.params.max_rel_diff(&dm(&[&[1.0, 2.0], &[3.0, 4.0]])) < 1e-15);
        let one = kern(dm(&[&[1.0]]));
        let a = fit_kk(&one, &one, &labels(dm(&[&[5.0]])), 0.0).unwrap();
        assert_eq!(a.params.as_slice(), &[5.0]);
    }

    #[test]
    fn kk_matches_vectorized_solve() {
        let mut r = rng(32);
        let kmat = random_psd(&mut r, 3, 3);
        let gmat = random_psd(&mut r, 4, 4);
        let y = random_matrix(&mut r, 3, 4);
        let a = fit_kk(&kern(kmat.clone()), &kern(gmat.clone()), &labels(y.clone()), 0.5).unwrap();
        let gamma = gmat.kron(&kmat).add_diagonal(0.5);
        let alpha = solve_vec(&gamma, &y.vec_cols());
        let oracle = DenseMatrix::from_vec_cols(3, 4, &alpha).unwrap();
        assert!(a.params.max_rel_diff(&oracle) < 1e-9);
    }

    fn solve_vec(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
        let rhs = DenseMatrix::from_row_major(b.len(), 1, b.to_vec()).unwrap();
        crate::linalg::solve(a, &rhs).unwrap().into_vec()
    }

    #[test]
    fn okkls_examples() {
        let two = kern(dm(&[&[2.0]]));
        let a = fit_okkls(&two, &two, &labels(dm(&[&[8.0]]))).unwrap();
        assert_eq!(a.params.as_slice(), &[2.0]);
        let i2 = kern(DenseMatrix::identity(2));
        let y = dm(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(fit_okkls(&i2, &i2, &labels(y.clone())).unwrap().params, y);
        let singular = kern(dm(&[&[1.0, 1.0], &[1.0, 1.0]]));
        assert!(matches!(
            fit_okkls(&singular, &i2, &labels(y)),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn ts_examples() {
        let a = fit_ts(
            &kern(dm(&[&[1.0]])),
            &kern(dm(&[&[3.0]])),
            &labels(dm(&[&[8.0]])),
            1.0,
            1.0,
        )
        .unwrap();
        assert!((a.params[(0, 0)] - 1.0).abs() < 1e-15);
        let i2 = kern(DenseMatrix::identity(2));
        let a = fit_ts(&i2, &i2, &labels(dm(&[&[4.0, 4.0], &[4.0, 4.0]])), 1.0, 1.0).unwrap();
        assert!(a.params.max_rel_diff(&dm(&[&[1.0, 1.0], &[1.0, 1.0]])) < 1e-15);
    }

    #[test]
    fn ts_matches_dense_inverse_and_residual() {
        let mut r = rng(33);
        let kmat = random_psd(&mut r, 5, 5);
        let gmat = random_psd(&mut r, 4, 4);
        let y = random_matrix(&mut r, 5, 4);
        let a = fit_ts(&kern(kmat.clone()), &kern(gmat.clone()), &labels(y.clone()), 0.4, 1.7).unwrap();
        let oracle = dense_inverse(&kmat.add_diagonal(0.4))
            .matmul(&y)
            .unwrap()
            .matmul(&dense_inverse(&gmat.add_diagonal(1.7)))
            .unwrap();
        assert!(a.params.max_rel_diff(&oracle) < 1e-9);
        let residual = kmat
            .add_diagonal(0.4)
            .matmul(&a.params)
            .unwrap()
            .matmul(&gmat.add_diagonal(1.7))
            .unwrap();
        assert!(residual.max_rel_diff(&y) < 1e-8);
    }

    #[test]
    fn predict_examples() {
        let model = DualModel {
            variant: Variant::Ts,
            params: dm(&[&[1.0]]),
            lambda_d: 1.0,
            lambda_t: 1.0,
            lambda: 0.0,
            instance_ids: vec!["d".into()],
            task_ids: vec!["t".into()],
        };
        assert_eq!(predict(&model, &dm(&[&[2.0]]), &dm(&[&[3.0]])).unwrap().as_slice(), &[6.0]);
        assert!(predict(&model, &dm(&[&[2.0, 1.0]]), &dm(&[&[3.0]])).is_err());
        let it = DualModel { variant: Variant::It, ..model };
        assert!(matches!(
            predict(&it, &dm(&[&[2.0]]), &dm(&[&[0.5]])),
            Err(Error::ITNewTask(0))
        ));
        assert_eq!(predict(&it, &dm(&[&[2.0]]), &dm(&[&[1.0]])).unwrap().as_slice(), &[2.0]);
    }

    #[test]
    fn predict_matches_double_sum() {
        let mut r = rng(34);
        let kmat = random_psd(&mut r, 4, 4);
        let gmat = random_psd(&mut r, 3, 3);
        let model = fit_ts(&kern(kmat), &kern(gmat), &labels(random_matrix(&mut r, 4, 3)), 0.5, 0.5).unwrap();
        let kt = random_matrix(&mut r, 2, 4);
        let gt = random_matrix(&mut r, 5, 3);
        let f = predict(&model, &kt, &gt).unwrap();
        for p in 0..2 {
            for u in 0..5 {
                let mut sum = 0.0;
                for i in 0..4 {
                    for j in 0..3 {
                        sum += model.params[(i, j)] * kt[(p, i)] * gt[(u, j)];
                    }
                }
                assert!((f[(p, u)] - sum).abs() < 1e-12 * sum.abs().max(1.0));
            }
        }
    }

    #[test]
    fn training_prediction_is_hat_action() {
        let mut r = rng(35);
        let kmat = random_psd(&mut r, 4, 4);
        let gmat = random_psd(&mut r, 3, 3);
        let model = fit_kk(&kern(kmat.clone()), &kern(gmat.clone()), &labels(random_matrix(&mut r, 4, 3)), 0.5).unwrap();
        let f = predict(&model, &kmat, &gmat).unwrap();
        let direct = kmat.matmul(&model.params).unwrap().matmul(&gmat).unwrap();
        assert!(f.max_rel_diff(&direct) < 1e-14);
    }

    #[test]
    fn ts_with_zero_task_regularization_equals_it() {
        let mut r = rng(36);
        for _ in 0..10 {
            let kmat = random_psd(&mut r, 6, 6);
            let gmat = random_psd(&mut r, 4, 4);
            let y = labels(random_matrix(&mut r, 6, 4));
            let (k, g) = (kern(kmat), kern(gmat));
            let ts = fit_ts(&k, &g, &y, 0.3, 0.0).unwrap();
            let it = fit_it(&k, &y, 0.3).unwrap();
            let kt = random_matrix(&mut r, 3, 6);
            let select = DenseMatrix::identity(4);
            let f_ts = predict(&ts, &kt, &g.gram().matmul(&select).unwrap()).unwrap();
            let f_it = predict(&it, &kt, &select).unwrap();
            assert!(f_ts.max_rel_diff(&f_it) < 1e-8);
        }
    }

    #[test]
    fn ts_equals_shifted_okkls_on_unseen_pairs() {
        let mut r = rng(37);
        let (k, g) = (kern(random_psd(&mut r, 5, 5)), kern(random_psd(&mut r, 4, 4)));
        let y = labels(random_matrix(&mut r, 5, 4));
        let (ld, lt) = (0.8, 0.2);
        let ts = fit_ts(&k, &g, &y, ld, lt).unwrap();
        let ok = fit_okkls(&k.shifted(ld), &g.shifted(lt), &y).unwrap();
        let kt = random_matrix(&mut r, 3, 5);
        let gt = random_matrix(&mut r, 2, 4);
        let a = predict(&ts, &kt, &gt).unwrap();
        let b = predict(&ok, &kt, &gt).unwrap();
        assert!(a.max_rel_diff(&b) < 1e-8);
    }

    #[test]
    fn fits_are_permutation_invariant() {
        let mut r = rng(38);
        let kmat = random_psd(&mut r, 6, 6);
        let gmat = random_psd(&mut r, 3, 3);
        let y = random_matrix(&mut r, 6, 3);
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut r);
        let all_t: Vec<usize> = (0..3).collect();
        let (k, g) = (kern(kmat.clone()), kern(gmat));
        let kp = kern(kmat.select(&perm, &perm));
        let yp = labels(y.select(&perm, &all_t));
        let ya = labels(y);
        for (a, b) in [
            (fit_it(&k, &ya, 0.2).unwrap(), fit_it(&kp, &yp, 0.2).unwrap()),
            (fit_kk(&k, &g, &ya, 0.2).unwrap(), fit_kk(&kp, &g, &yp, 0.2).unwrap()),
            (fit_ts(&k, &g, &ya, 0.2, 0.5).unwrap(), fit_ts(&kp, &g, &yp, 0.2, 0.5).unwrap()),
        ] {
            let permuted = a.params.select(&perm, &all_t);
            assert!(b.params.max_rel_diff(&permuted) < 1e-9);
        }
    }
}
