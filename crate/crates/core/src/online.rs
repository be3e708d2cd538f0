//! Primal two-step model over explicit feature maps, with Woodbury updates
//! for batches of new instances or new tasks.
//!
//! `W = (ΦᵀΦ + λ_d I)^{-1} Φᵀ Y Ψ (ΨᵀΨ + λ_t I)^{-1}`. Both `ΦᵀY` (d×q) and
//! `YΨ` (m×r) are kept so that instance and task batches can be interleaved;
//! the second grows with the number of instances seen.

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

#[derive(Debug, Clone)]
pub struct PrimalModel {
    pub w: DenseMatrix,
    /// `(ΦᵀΦ + λ_d I)^{-1}`
    pub m: DenseMatrix,
    /// `(ΨᵀΨ + λ_t I)^{-1}`
    pub n: DenseMatrix,
    pub phi: DenseMatrix,
    pub psi: DenseMatrix,
    pub phi_t_y: DenseMatrix,
    pub y_psi: DenseMatrix,
    pub lambda_d: f64,
    pub lambda_t: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn mismatch(what: &str, got: usize, expected: usize) -> Error {
    Error::DimensionMismatch(format!("{what}: got {got}, expected {expected}"))
}

/// Woodbury update of `M = (ΦᵀΦ + λI)^{-1}` after appending rows `x` to Φ.
///
/// For `l ≤ d` the `l×l` system `(I + xMxᵀ)` is inverted; otherwise the
/// `d×d` system `(xᵀx + M^{-1})`, with `M^{-1}` rebuilt from the stored
/// features so that no explicit inverse of `M` is taken.
fn woodbury(m: &DenseMatrix, features: &DenseMatrix, lambda: f64, x: &DenseMatrix) -> Result<DenseMatrix> {
    let (l, d) = x.shape();
    let mx_t = m.matmul(&x.transpose())?;
    let updated = if l <= d {
        let inner = x.matmul(&mx_t)?.add_diagonal(1.0);
        // M - MXᵀ (I + XMXᵀ)^{-1} XM
        let right = linalg::solve_spd(&inner, &mx_t.transpose())?;
        m.sub(&mx_t.matmul(&right)?)?
    } else {
        let x_t_x = x.transpose().matmul(x)?;
        let m_inv = features.transpose().matmul(features)?.add_diagonal(lambda);
        let inner = x_t_x.add(&m_inv)?;
        // M - MXᵀ X (XᵀX + M^{-1})^{-1}
        let right = linalg::solve_spd(&inner, &x_t_x.matmul(m)?)?;
        m.sub(&right.transpose())?
    };
    Ok(updated.add(&updated.transpose())?.scale(0.5))
}

pub fn init_primal(phi: &DenseMatrix, psi: &DenseMatrix, y: &DenseMatrix, lambda_d: f64, lambda_t: f64) -> Result<PrimalModel> {
    check_positive("lambda_d", lambda_d)?;
    check_positive("lambda_t", lambda_t)?;
    if y.rows() != phi.rows() {
        return Err(mismatch("label rows vs instance feature rows", y.rows(), phi.rows()));
    }
    if y.cols() != psi.rows() {
        return Err(mismatch("label columns vs task feature rows", y.cols(), psi.rows()));
    }
    let m = linalg::inverse_spd(&phi.transpose().matmul(phi)?.add_diagonal(lambda_d))?;
    let n = linalg::inverse_spd(&psi.transpose().matmul(psi)?.add_diagonal(lambda_t))?;
    let phi_t_y = phi.transpose().matmul(y)?;
    let y_psi = y.matmul(psi)?;
    let w = m.matmul(&phi_t_y)?.matmul(psi)?.matmul(&n)?;
    Ok(PrimalModel { w, m, n, phi: phi.clone(), psi: psi.clone(), phi_t_y, y_psi, lambda_d, lambda_t })
}

impl PrimalModel {
    pub fn feature_dims(&self) -> (usize, usize) {
        (self.w.rows(), self.w.cols())
    }

    pub fn n_instances(&self) -> usize {
        self.phi.rows()
    }

    pub fn n_tasks(&self) -> usize {
        self.psi.rows()
    }
}

/// Adds `l` instances with features `phi_new` (l×d) and labels `y_new` (l×q).
pub fn update_instances(model: &PrimalModel, phi_new: &DenseMatrix, y_new: &DenseMatrix) -> Result<PrimalModel> {
    let (d, _) = model.feature_dims();
    if phi_new.cols() != d {
        return Err(mismatch("instance feature columns", phi_new.cols(), d));
    }
    if y_new.cols() != model.n_tasks() {
        return Err(mismatch("label columns", y_new.cols(), model.n_tasks()));
    }
    if y_new.rows() != phi_new.rows() {
        return Err(mismatch("label rows", y_new.rows(), phi_new.rows()));
    }
    let m = woodbury(&model.m, &model.phi, model.lambda_d, phi_new)?;
    let phi_t_y = model.phi_t_y.add(&phi_new.transpose().matmul(y_new)?)?;
    let b_g = model.psi.matmul(&model.n)?;
    let w = m.matmul(&phi_t_y)?.matmul(&b_g)?;
    Ok(PrimalModel {
        w,
        m,
        n: model.n.clone(),
        phi: model.phi.vstack(phi_new)?,
        psi: model.psi.clone(),
        phi_t_y,
        y_psi: model.y_psi.vstack(&y_new.matmul(&model.psi)?)?,
        lambda_d: model.lambda_d,
        lambda_t: model.lambda_t,
    })
}

/// Adds `l` tasks with features `psi_new` (l×r) and labels `y_new` (m×l).
pub fn update_tasks(model: &PrimalModel, psi_new: &DenseMatrix, y_new: &DenseMatrix) -> Result<PrimalModel> {
    let (_, r) = model.feature_dims();
    if psi_new.cols() != r {
        return Err(mismatch("task feature columns", psi_new.cols(), r));
    }
    if y_new.rows() != model.n_instances() {
        return Err(mismatch("label rows", y_new.rows(), model.n_instances()));
    }
    if y_new.cols() != psi_new.rows() {
        return Err(mismatch("label columns", y_new.cols(), psi_new.rows()));
    }
    let n = woodbury(&model.n, &model.psi, model.lambda_t, psi_new)?;
    let y_psi = model.y_psi.add(&y_new.matmul(psi_new)?)?;
    let b_k = model.m.matmul(&model.phi.transpose())?;
    let w = b_k.matmul(&y_psi)?.matmul(&n)?;
    Ok(PrimalModel {
        w,
        m: model.m.clone(),
        n,
        phi: model.phi.clone(),
        psi: model.psi.vstack(psi_new)?,
        phi_t_y: model.phi_t_y.hstack(&model.phi.transpose().matmul(y_new)?)?,
        y_psi,
        lambda_d: model.lambda_d,
        lambda_t: model.lambda_t,
    })
}

/// `φᵀ W ψ`.
pub fn predict_primal(model: &PrimalModel, phi: &[f64], psi: &[f64]) -> Result<f64> {
    let (d, r) = model.feature_dims();
    if phi.len() != d {
        return Err(mismatch("instance feature length", phi.len(), d));
    }
    if psi.len() != r {
        return Err(mismatch("task feature length", psi.len(), r));
    }
    let w_psi = model.w.mat_vec(psi)?;
    Ok(phi.iter().zip(&w_psi).map(|(a, b)| a * b).sum())
}

/// Predictions for every pair of rows of `phi` (p×d) and `psi` (u×r).
pub fn predict_primal_matrix(model: &PrimalModel, phi: &DenseMatrix, psi: &DenseMatrix) -> Result<DenseMatrix> {
    phi.matmul(&model.w)?.matmul(&psi.transpose())
}
