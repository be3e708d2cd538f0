//! Spectral filters and the hat matrices built from them.
//!
//! Every model here fits by replacing the inverse of a Gram matrix with a
//! function of its eigenvalues. Pairwise hat matrices are only ever applied
//! in the eigenbasis; the `mq x mq` matrix is never formed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, EigenDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    /// `1 / (σ + λ)`
    Tikhonov { lambda: f64 },
    /// `1 / (σ s + λ)`
    KroneckerTikhonov { lambda: f64 },
    /// `1 / ((σ + λ_d)(s + λ_t))`
    TwoStep { lambda_d: f64, lambda_t: f64 },
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        let lambdas: &[f64] = match self {
            FilterSpec::Tikhonov { lambda } | FilterSpec::KroneckerTikhonov { lambda } => {
                &[*lambda][..]
            }
            FilterSpec::TwoStep { lambda_d, lambda_t } => &[*lambda_d, *lambda_t][..],
        };
        match lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            Some(l) => Err(Error::InvalidParameter(format!(
                "regularization must be finite and nonnegative, got {l}"
            ))),
            None => Ok(()),
        }
    }

    fn is_pairwise(&self) -> bool {
        !matches!(self, FilterSpec::Tikhonov { .. })
    }
}

fn reciprocal(denominator: f64) -> Result<f64> {
    if denominator == 0.0 {
        Err(Error::ZeroDivisor)
    } else {
        Ok(1.0 / denominator)
    }
}

/// Evaluates the filter at instance eigenvalue `sigma` and task eigenvalue
/// `s` (ignored by the single-kernel Tikhonov filter).
pub fn apply_filter(spec: FilterSpec, sigma: f64, s: Option<f64>) -> Result<f64> {
    let task = || {
        s.ok_or_else(|| Error::InvalidParameter("pairwise filter needs a task eigenvalue".into()))
    };
    match spec {
        FilterSpec::Tikhonov { lambda } => reciprocal(sigma + lambda),
        FilterSpec::KroneckerTikhonov { lambda } => reciprocal(sigma * task()? + lambda),
        FilterSpec::TwoStep { lambda_d, lambda_t } => {
            Ok(reciprocal(sigma + lambda_d)? * reciprocal(task()? + lambda_t)?)
        }
    }
}

/// `K (K + λI)^{-1}` from the eigendecomposition of `K`.
pub fn hat_matrix(e: &EigenDecomposition, lambda: f64) -> Result<DenseMatrix> {
    FilterSpec::Tikhonov { lambda }.validate()?;
    let weights = e
        .values
        .iter()
        .map(|&v| Ok(v * apply_filter(FilterSpec::Tikhonov { lambda }, v, None)?))
        .collect::<Result<Vec<f64>>>()?;
    e.vectors.scale_cols(&weights).matmul(&e.vectors.transpose())
}

/// `Ψ[a][b] = σ_a s_b · filter(σ_a, s_b)`: the pairwise hat matrix's
/// eigenvalues laid out on the instance x task grid.
pub fn pairwise_spectrum(ek: &EigenDecomposition, eg: &EigenDecomposition, spec: FilterSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    if !spec.is_pairwise() {
        return Err(Error::InvalidParameter(
            "pairwise hat needs a Kronecker or two-step filter".into(),
        ));
    }
    let mut psi = DenseMatrix::zeros(ek.dim(), eg.dim());
    for (a, &sigma) in ek.values.iter().enumerate() {
        for (b, &s) in eg.values.iter().enumerate() {
            psi[(a, b)] = sigma * s * apply_filter(spec, sigma, Some(s))?;
        }
    }
    Ok(psi)
}

fn check_labels(ek: &EigenDecomposition, eg: &EigenDecomposition, y: &DenseMatrix) -> Result<()> {
    if y.shape() != (ek.dim(), eg.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "labels are {}x{} but kernels are {} and {}",
            y.rows(),
            y.cols(),
            ek.dim(),
            eg.dim()
        )));
    }
    Ok(())
}

/// `mat(H vec(Y))` computed as `U (Ψ ∘ (Uᵀ Y V)) Vᵀ`.
pub fn pairwise_hat_action(
    ek: &EigenDecomposition,
    eg: &EigenDecomposition,
    spec: FilterSpec,
    y: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_labels(ek, eg, y)?;
    let psi = pairwise_spectrum(ek, eg, spec)?;
    let (u, v) = (&ek.vectors, &eg.vectors);
    let projected = u.transpose().matmul(y)?.matmul(v)?;
    u.matmul(&psi.hadamard(&projected)?)?.matmul(&v.transpose())
}

/// Diagonal of the pairwise hat matrix as an `m x q` grid:
/// `(U ∘ U) Ψ (V ∘ V)ᵀ`.
pub fn pairwise_hat_diag(ek: &EigenDecomposition, eg: &EigenDecomposition, spec: FilterSpec) -> Result<DenseMatrix> {
    let psi = pairwise_spectrum(ek, eg, spec)?;
    let u2 = ek.vectors.hadamard(&ek.vectors)?;
    let v2 = eg.vectors.hadamard(&eg.vectors)?;
    u2.matmul(&psi)?.matmul(&v2.transpose())
}
