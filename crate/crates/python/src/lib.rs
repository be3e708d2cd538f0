//! Python bindings. Matrices cross the boundary as lists of row lists.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use pairlearn::holdout::{self, Hyperparams, Setting};
use pairlearn::linalg::DenseMatrix;
use pairlearn::metrics::{self, Axis};
use pairlearn::models::{self, Variant};
use pairlearn::{kernels, online, KernelMatrix, LabelMatrix};

create_exception!(pairlearn_py, PairlearnError, PyException);

type Rows = Vec<Vec<f64>>;

fn err(e: pairlearn::Error) -> PyErr {
    PairlearnError::new_err(e.to_string())
}

fn matrix(rows: Rows) -> PyResult<DenseMatrix> {
    if rows.is_empty() {
        return Err(PairlearnError::new_err("matrix has no rows"));
    }
    DenseMatrix::from_rows(&rows).map_err(err)
}

fn kernel(rows: Rows) -> PyResult<KernelMatrix> {
    KernelMatrix::from_gram(matrix(rows)?).map_err(err)
}

fn labels(rows: Rows) -> PyResult<LabelMatrix> {
    Ok(LabelMatrix::from_values(matrix(rows)?))
}

fn parse<T: std::str::FromStr<Err = pairlearn::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Fitted dual model: `params` is the m×q coefficient matrix.
#[pyclass(name = "DualModel", frozen)]
struct PyDualModel {
    inner: models::DualModel,
}

#[pymethods]
impl PyDualModel {
    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.name()
    }

    #[getter]
    fn params(&self) -> Rows {
        self.inner.params.to_rows()
    }

    #[getter]
    fn lambdas(&self) -> (f64, f64, f64) {
        (self.inner.lambda_d, self.inner.lambda_t, self.inner.lambda)
    }

    /// Predictions `k_test A g_testᵀ`; `g_test` defaults to the identity for `it`.
    #[pyo3(signature = (k_test, g_test=None))]
    fn predict(&self, k_test: Rows, g_test: Option<Rows>) -> PyResult<Rows> {
        let g = match g_test {
            Some(g) => matrix(g)?,
            None => DenseMatrix::identity(self.inner.n_tasks()),
        };
        Ok(models::predict(&self.inner, &matrix(k_test)?, &g).map_err(err)?.to_rows())
    }

    fn __repr__(&self) -> String {
        format!("DualModel({}, {}x{})", self.inner.variant, self.inner.n_instances(), self.inner.n_tasks())
    }
}

/// Fits `model` in {"it", "kk", "okkls", "ts"}. `g` is ignored for `it`.
#[pyfunction]
#[pyo3(signature = (model, k, y, g=None, lambda_d=0.0, lambda_t=0.0, lam=0.0))]
fn fit(model: &str, k: Rows, y: Rows, g: Option<Rows>, lambda_d: f64, lambda_t: f64, lam: f64) -> PyResult<PyDualModel> {
    let variant: Variant = parse(model)?;
    let (k, y) = (kernel(k)?, labels(y)?);
    let task_kernel = || -> PyResult<KernelMatrix> {
        kernel(g.clone().ok_or_else(|| PairlearnError::new_err(format!("model {variant} needs g")))?)
    };
    let inner = match variant {
        Variant::It => models::fit_it(&k, &y, lambda_d),
        Variant::Kk => models::fit_kk(&k, &task_kernel()?, &y, lam),
        Variant::Okkls => models::fit_okkls(&k, &task_kernel()?, &y),
        Variant::Ts => models::fit_ts(&k, &task_kernel()?, &y, lambda_d, lambda_t),
    }
    .map_err(err)?;
    Ok(PyDualModel { inner })
}

/// Leave-one-out predictions for a setting in {"A", "B", "C", "D"}.
#[pyfunction]
#[pyo3(signature = (model, setting, k, g, y, lambda_d=0.0, lambda_t=0.0, lam=0.0, oracle=false))]
#[allow(clippy::too_many_arguments)]
fn leave_one_out(
    model: &str,
    setting: &str,
    k: Rows,
    g: Rows,
    y: Rows,
    lambda_d: f64,
    lambda_t: f64,
    lam: f64,
    oracle: bool,
) -> PyResult<Rows> {
    let variant: Variant = parse(model)?;
    let setting: Setting = parse(setting)?;
    let (k, g, y) = (kernel(k)?, kernel(g)?, labels(y)?);
    let hp = Hyperparams { lambda_d, lambda_t, lambda: lam };
    let result = if oracle {
        holdout::brute_force_loo(variant, setting, &k, &g, &y, hp)
    } else {
        holdout::leave_one_out(variant, setting, &k, &g, &y, hp)
    };
    Ok(result.map_err(err)?.predictions.to_rows())
}

#[pyfunction]
fn rescore_labels(y: Rows) -> PyResult<Rows> {
    Ok(kernels::rescore_labels(&labels(y)?).map_err(err)?.values().to_rows())
}

#[pyfunction]
fn mse(truth: Rows, pred: Rows) -> PyResult<f64> {
    metrics::mse(&matrix(truth)?, &matrix(pred)?).map_err(err)
}

#[pyfunction]
fn micro_auc(truth: Rows, scores: Rows) -> PyResult<f64> {
    metrics::micro_auc(&matrix(truth)?, &matrix(scores)?).map_err(err)
}

/// Mean per-slice AUC over `axis` ("rows" or "cols") and the number of skipped slices.
#[pyfunction]
fn macro_auc(truth: Rows, scores: Rows, axis: &str) -> PyResult<(f64, usize)> {
    let axis = match axis {
        "rows" => Axis::Rows,
        "cols" => Axis::Cols,
        other => return Err(PairlearnError::new_err(format!("unknown axis '{other}'"))),
    };
    let m = metrics::macro_auc(&matrix(truth)?, &matrix(scores)?, axis).map_err(err)?;
    Ok((m.value, m.skipped))
}

#[pyfunction]
fn c_index(y: Vec<f64>, f: Vec<f64>) -> PyResult<f64> {
    metrics::c_index(&y, &f).map_err(err)
}

/// Primal two-step model with mini-batch updates; updates return new models.
#[pyclass(name = "PrimalModel", frozen)]
struct PyPrimalModel {
    inner: online::PrimalModel,
}

#[pymethods]
impl PyPrimalModel {
    #[new]
    fn new(phi: Rows, psi: Rows, y: Rows, lambda_d: f64, lambda_t: f64) -> PyResult<Self> {
        let inner = online::init_primal(&matrix(phi)?, &matrix(psi)?, &matrix(y)?, lambda_d, lambda_t).map_err(err)?;
        Ok(PyPrimalModel { inner })
    }

    #[getter]
    fn weights(&self) -> Rows {
        self.inner.w.to_rows()
    }

    fn update_instances(&self, phi_new: Rows, y_new: Rows) -> PyResult<Self> {
        let inner = online::update_instances(&self.inner, &matrix(phi_new)?, &matrix(y_new)?).map_err(err)?;
        Ok(PyPrimalModel { inner })
    }

    fn update_tasks(&self, psi_new: Rows, y_new: Rows) -> PyResult<Self> {
        let inner = online::update_tasks(&self.inner, &matrix(psi_new)?, &matrix(y_new)?).map_err(err)?;
        Ok(PyPrimalModel { inner })
    }

    fn predict(&self, phi: Vec<f64>, psi: Vec<f64>) -> PyResult<f64> {
        online::predict_primal(&self.inner, &phi, &psi).map_err(err)
    }
}

#[pymodule]
fn pairlearn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PairlearnError", m.py().get_type::<PairlearnError>())?;
    m.add_class::<PyDualModel>()?;
    m.add_class::<PyPrimalModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(leave_one_out, m)?)?;
    m.add_function(wrap_pyfunction!(rescore_labels, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(micro_auc, m)?)?;
    m.add_function(wrap_pyfunction!(macro_auc, m)?)?;
    m.add_function(wrap_pyfunction!(c_index, m)?)?;
    Ok(())
}
