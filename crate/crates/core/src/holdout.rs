//! Exact leave-one-out predictions for the four prediction settings.
//!
//! Each shortcut divides the in-sample fitted values (with the held-out
//! labels' own contribution removed) by a function of the hat diagonals.
//! [`brute_force_loo`] retrains from scratch and is kept as the reference.

use serde::{Deserialize, Serialize};

use crate::error::{Entity, Error, Result};
use crate::filters::{self, FilterSpec};
use crate::kernels::{self, KernelMatrix, LabelMatrix};
use crate::linalg::{self, DenseMatrix, EigenDecomposition};
use crate::models::{self, Variant};

/// Smallest admissible leave-one-out denominator `1 - H_ii`.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;
/// Default dyad cap for [`brute_force_loo`].
pub const DEFAULT_ORACLE_CAP: usize = 400;

/// Which entities are unseen at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// Both instance and task seen; one dyad held out.
    A,
    /// New instance; one row held out.
    B,
    /// New task; one column held out.
    C,
    /// New instance and new task; row and column held out.
    D,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Setting::A => "A",
            Setting::B => "B",
            Setting::C => "C",
            Setting::D => "D",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Setting::A),
            "B" => Ok(Setting::B),
            "C" => Ok(Setting::C),
            "D" => Ok(Setting::D),
            other => Err(Error::InvalidParameter(format!("unknown setting '{other}'"))),
        }
    }
}

/// Regularization values; those a variant does not use stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda_d: f64,
    pub lambda_t: f64,
    pub lambda: f64,
}

impl Hyperparams {
    pub fn it(lambda_d: f64) -> Self {
        Hyperparams { lambda_d, ..Default::default() }
    }

    pub fn kk(lambda: f64) -> Self {
        Hyperparams { lambda, ..Default::default() }
    }

    pub fn ts(lambda_d: f64, lambda_t: f64) -> Self {
        Hyperparams { lambda_d, lambda_t, lambda: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct LooResult {
    pub setting: Setting,
    pub model_variant: Variant,
    pub hyperparams: Hyperparams,
    pub predictions: DenseMatrix,
}

fn denominators(h_diag: &[f64], make_entity: impl Fn(usize) -> Entity) -> Result<Vec<f64>> {
    h_diag
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let d = 1.0 - h;
            if d < DENOMINATOR_FLOOR {
                Err(Error::DenominatorUnderflow { entity: make_entity(i), value: d })
            } else {
                Ok(d)
            }
        })
        .collect()
}

fn instance(i: usize) -> Entity {
    Entity::Instance(i.to_string())
}

fn task(j: usize) -> Entity {
    Entity::Task(j.to_string())
}

/// `H - diag_m(H)`.
fn off_diagonal(h: &DenseMatrix) -> DenseMatrix {
    let mut out = h.clone();
    for i in 0..h.rows().min(h.cols()) {
        out[(i, i)] = 0.0;
    }
    out
}

fn check_square_hat(h: &DenseMatrix, n: usize, what: &str) -> Result<()> {
    if h.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "{what} hat matrix is {}x{}, expected {n}x{n}",
            h.rows(),
            h.cols()
        )));
    }
    Ok(())
}

/// Independent-task leave-one-instance-out (valid for Settings A and B):
/// `(H Y - diag_m(H) Y) / ((1 - diag_v(H)) 1ᵀ)`.
pub fn loo_it(h_k: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    check_square_hat(h_k, y.rows(), "instance")?;
    let denom = denominators(&h_k.diag(), instance)?;
    let numer = off_diagonal(h_k).matmul(y)?;
    Ok(numer.scale_rows(&denom.iter().map(|d| 1.0 / d).collect::<Vec<_>>()))
}

/// Leave-one-dyad-out for Kronecker or two-step KRR:
/// `mat((H vec(Y) - diag_m(H) vec(Y)) / diag_v(I - H))`, with `H` applied
/// in the eigenbasis.
pub fn loo_setting_a(
    ek: &EigenDecomposition,
    eg: &EigenDecomposition,
    spec: FilterSpec,
    y: &DenseMatrix,
) -> Result<DenseMatrix> {
    let fitted = filters::pairwise_hat_action(ek, eg, spec, y)?;
    let diag = filters::pairwise_hat_diag(ek, eg, spec)?;
    let mut out = DenseMatrix::zeros(y.rows(), y.cols());
    for i in 0..y.rows() {
        for j in 0..y.cols() {
            let d = 1.0 - diag[(i, j)];
            if d < DENOMINATOR_FLOOR {
                return Err(Error::DenominatorUnderflow {
                    entity: Entity::Instance(format!("{i} (task {j})")),
                    value: d,
                });
            }
            out[(i, j)] = (fitted[(i, j)] - diag[(i, j)] * y[(i, j)]) / d;
        }
    }
    Ok(out)
}

/// Two-step leave-one-instance-out:
/// `(H^k Y H^g - diag_m(H^k) Y H^g) / (diag_v(I - H^k) 1ᵀ)`.
pub fn loo_setting_b(h_k: &DenseMatrix, h_g: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    check_square_hat(h_g, y.cols(), "task")?;
    loo_it(h_k, &y.matmul(h_g)?)
}

/// Two-step leave-one-task-out:
/// `(H^k Y H^g - H^k Y diag_m(H^g)) / (1 diag_v(I - H^g)ᵀ)`.
pub fn loo_setting_c(h_k: &DenseMatrix, h_g: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    check_square_hat(h_k, y.rows(), "instance")?;
    check_square_hat(h_g, y.cols(), "task")?;
    let denom = denominators(&h_g.diag(), task)?;
    let numer = h_k.matmul(y)?.matmul(&off_diagonal(h_g))?;
    Ok(numer.scale_cols(&denom.iter().map(|d| 1.0 / d).collect::<Vec<_>>()))
}

/// Two-step leave-row-and-column-out:
/// `(H^k - diag_m(H^k)) Y (H^g - diag_m(H^g)) / (diag_v(I - H^k) diag_v(I - H^g)ᵀ)`.
pub fn loo_setting_d(h_k: &DenseMatrix, h_g: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    check_square_hat(h_k, y.rows(), "instance")?;
    check_square_hat(h_g, y.cols(), "task")?;
    let dk = denominators(&h_k.diag(), instance)?;
    let dg = denominators(&h_g.diag(), task)?;
    let numer = off_diagonal(h_k).matmul(y)?.matmul(&off_diagonal(h_g))?;
    Ok(numer
        .scale_rows(&dk.iter().map(|d| 1.0 / d).collect::<Vec<_>>())
        .scale_cols(&dg.iter().map(|d| 1.0 / d).collect::<Vec<_>>()))
}

/// Replaces positional entity labels in a holdout error with identifiers.
pub fn name_entities(err: Error, instance_ids: &[String], task_ids: &[String]) -> Error {
    let rename = |label: &str, ids: &[String]| -> String {
        let head = label.split_whitespace().next().unwrap_or(label);
        match head.parse::<usize>().ok().and_then(|i| ids.get(i)) {
            Some(id) => label.replacen(head, id, 1),
            None => label.to_string(),
        }
    };
    match err {
        Error::DenominatorUnderflow { entity, value } => {
            let entity = match entity {
                Entity::Instance(label) => {
                    let mut named = rename(&label, instance_ids);
                    if let (Some(start), Some(end)) = (named.find("(task "), named.rfind(')')) {
                        let inner = &named[start + 6..end];
                        if let Some(id) = inner.parse::<usize>().ok().and_then(|j| task_ids.get(j)) {
                            named = format!("{}(task {id})", &named[..start]);
                        }
                    }
                    Entity::Instance(named)
                }
                Entity::Task(label) => Entity::Task(rename(&label, task_ids)),
            };
            Error::DenominatorUnderflow { entity, value }
        }
        other => other,
    }
}

/// Leave-one-out predictions through the closed-form shortcuts.
///
/// IT supports Settings A and B, Kronecker KRR only Setting A, two-step KRR
/// all four settings.
pub fn leave_one_out(
    variant: Variant,
    setting: Setting,
    k: &KernelMatrix,
    g: &KernelMatrix,
    y: &LabelMatrix,
    hp: Hyperparams,
) -> Result<LooResult> {
    k.check_ids(y.instance_ids(), "instance")?;
    let yv = y.values();
    let predictions = match (variant, setting) {
        (Variant::It, Setting::A | Setting::B) => loo_it(&filters::hat_matrix(k.eigen()?, hp.lambda_d)?, yv),
        (Variant::Kk, Setting::A) => {
            g.check_ids(y.task_ids(), "task")?;
            loo_setting_a(k.eigen()?, g.eigen()?, FilterSpec::KroneckerTikhonov { lambda: hp.lambda }, yv)
        }
        (Variant::Ts, Setting::A) => {
            g.check_ids(y.task_ids(), "task")?;
            let spec = FilterSpec::TwoStep { lambda_d: hp.lambda_d, lambda_t: hp.lambda_t };
            loo_setting_a(k.eigen()?, g.eigen()?, spec, yv)
        }
        (Variant::Ts, Setting::B | Setting::C | Setting::D) => {
            g.check_ids(y.task_ids(), "task")?;
            let h_k = filters::hat_matrix(k.eigen()?, hp.lambda_d)?;
            let h_g = filters::hat_matrix(g.eigen()?, hp.lambda_t)?;
            match setting {
                Setting::B => loo_setting_b(&h_k, &h_g, yv),
                Setting::C => loo_setting_c(&h_k, &h_g, yv),
                _ => loo_setting_d(&h_k, &h_g, yv),
            }
        }
        _ => {
            return Err(Error::UnsupportedCombination(format!(
                "no leave-one-out shortcut for model {variant} in setting {setting}"
            )))
        }
    }
    .map_err(|e| name_entities(e, y.instance_ids(), y.task_ids()))?;
    Ok(LooResult { setting, model_variant: variant, hyperparams: hp, predictions })
}

fn without(n: usize, skip: usize) -> Vec<usize> {
    (0..n).filter(|&i| i != skip).collect()
}

fn sub_labels(y: &LabelMatrix, rows: &[usize], cols: &[usize]) -> Result<LabelMatrix> {
    LabelMatrix::new(
        rows.iter().map(|&i| y.instance_ids()[i].clone()).collect(),
        cols.iter().map(|&j| y.task_ids()[j].clone()).collect(),
        y.values().select(rows, cols),
    )
}

fn refit(
    variant: Variant,
    k: &KernelMatrix,
    g: &KernelMatrix,
    y: &LabelMatrix,
    hp: Hyperparams,
) -> Result<models::DualModel> {
    match variant {
        Variant::It => models::fit_it(k, y, hp.lambda_d),
        Variant::Kk => models::fit_kk(k, g, y, hp.lambda),
        Variant::Ts => models::fit_ts(k, g, y, hp.lambda_d, hp.lambda_t),
        Variant::Okkls => models::fit_okkls(k, g, y),
    }
}

/// Dyad-level leave-one-out for KRR with an explicit pairwise Gram matrix:
/// each dyad is dropped, the `(mq-1)`-sized system is re-solved densely and
/// the dropped dyad predicted.
fn explicit_dyad_loo(gram: &DenseMatrix, ridge: f64, y: &DenseMatrix) -> Result<DenseMatrix> {
    let n = gram.rows();
    let labels = y.vec_cols();
    let mut out = vec![0.0; n];
    for (s, slot) in out.iter_mut().enumerate() {
        let keep = without(n, s);
        let system = gram.select(&keep, &keep).add_diagonal(ridge);
        let rhs = DenseMatrix::from_fn(keep.len(), 1, |r, _| labels[keep[r]]);
        let alpha = linalg::solve(&system, &rhs)?;
        *slot = keep.iter().enumerate().map(|(r, &c)| gram[(s, c)] * alpha[(r, 0)]).sum();
    }
    DenseMatrix::from_vec_cols(y.rows(), y.cols(), &out)
}

/// Reference leave-one-out by retraining on every reduced data set.
pub fn brute_force_loo(
    variant: Variant,
    setting: Setting,
    k: &KernelMatrix,
    g: &KernelMatrix,
    y: &LabelMatrix,
    hp: Hyperparams,
) -> Result<LooResult> {
    brute_force_loo_capped(variant, setting, k, g, y, hp, DEFAULT_ORACLE_CAP)
}

pub fn brute_force_loo_capped(
    variant: Variant,
    setting: Setting,
    k: &KernelMatrix,
    g: &KernelMatrix,
    y: &LabelMatrix,
    hp: Hyperparams,
    cap: usize,
) -> Result<LooResult> {
    let (m, q) = (y.n_instances(), y.n_tasks());
    if m * q > cap {
        return Err(Error::SizeOverflow { size: m * q, cap });
    }
    k.check_ids(y.instance_ids(), "instance")?;
    if variant != Variant::It {
        g.check_ids(y.task_ids(), "task")?;
    }
    let empty = match setting {
        Setting::A => m * q <= 1,
        Setting::B => m <= 1,
        Setting::C => q <= 1,
        Setting::D => m <= 1 || q <= 1,
    };
    if empty {
        return Err(Error::NoTrainingData);
    }
    let all_rows: Vec<usize> = (0..m).collect();
    let all_cols: Vec<usize> = (0..q).collect();
    let yv = y.values();

    let predictions = match (variant, setting) {
        (Variant::It, Setting::A | Setting::B) => {
            let mut out = DenseMatrix::zeros(m, q);
            for i in 0..m {
                let keep = without(m, i);
                let model = models::fit_it(&k.subset(&keep), &sub_labels(y, &keep, &all_cols)?, hp.lambda_d)?;
                let k_test = k.gram().select(&[i], &keep);
                let f = models::predict(&model, &k_test, &DenseMatrix::identity(q))?;
                for j in 0..q {
                    out[(i, j)] = f[(0, j)];
                }
            }
            out
        }
        (Variant::Ts, Setting::A) => {
            let xi = kernels::xi_gram(k, g, hp.lambda_d, hp.lambda_t)?;
            explicit_dyad_loo(&xi, 1.0, yv)?
        }
        (Variant::Kk, Setting::A) => explicit_dyad_loo(&kernels::kron_gram(g, k)?, hp.lambda, yv)?,
        (Variant::Ts | Variant::Kk, Setting::B) => {
            let mut out = DenseMatrix::zeros(m, q);
            for i in 0..m {
                let keep = without(m, i);
                let model = refit(variant, &k.subset(&keep), g, &sub_labels(y, &keep, &all_cols)?, hp)?;
                let f = models::predict(&model, &k.gram().select(&[i], &keep), g.gram())?;
                for j in 0..q {
                    out[(i, j)] = f[(0, j)];
                }
            }
            out
        }
        (Variant::Ts | Variant::Kk, Setting::C) => {
            let mut out = DenseMatrix::zeros(m, q);
            for j in 0..q {
                let keep = without(q, j);
                let model = refit(variant, k, &g.subset(&keep), &sub_labels(y, &all_rows, &keep)?, hp)?;
                let f = models::predict(&model, k.gram(), &g.gram().select(&[j], &keep))?;
                for i in 0..m {
                    out[(i, j)] = f[(i, 0)];
                }
            }
            out
        }
        (Variant::Ts | Variant::Kk, Setting::D) => {
            let mut out = DenseMatrix::zeros(m, q);
            for i in 0..m {
                let rows = without(m, i);
                let k_sub = k.subset(&rows);
                let k_test = k.gram().select(&[i], &rows);
                for j in 0..q {
                    let cols = without(q, j);
                    let model = refit(variant, &k_sub, &g.subset(&cols), &sub_labels(y, &rows, &cols)?, hp)?;
                    let f = models::predict(&model, &k_test, &g.gram().select(&[j], &cols))?;
                    out[(i, j)] = f[(0, 0)];
                }
            }
            out
        }
        _ => {
            return Err(Error::UnsupportedCombination(format!(
                "model {variant} has no leave-one-out procedure for setting {setting}"
            )))
        }
    };
    Ok(LooResult { setting, model_variant: variant, hyperparams: hp, predictions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testing::*;
    use crate::linalg::sym_eig;
    use rand::Rng;

    fn dm(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn kern(m: DenseMatrix) -> KernelMatrix {
        KernelMatrix::from_gram(m).unwrap()
    }

    fn problem(seed: u64, m: usize, q: usize) -> (KernelMatrix, KernelMatrix, LabelMatrix) {
        let mut r = rng(seed);
        (
            kern(random_psd(&mut r, m, m)),
            kern(random_psd(&mut r, q, q)),
            LabelMatrix::from_values(random_matrix(&mut r, m, q)),
        )
    }

    #[test]
    fn it_examples() {
        let y = dm(&[&[3.0, -1.0], &[2.0, 5.0]]);
        let h = filters::hat_matrix(&sym_eig(&DenseMatrix::identity(2)).unwrap(), 0.7).unwrap();
        assert!(loo_it(&h, &y).unwrap().max_abs() < 1e-15);

        let ones = dm(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let h = filters::hat_matrix(&sym_eig(&ones).unwrap(), 1.0).unwrap();
        let f = loo_it(&h, &dm(&[&[3.0], &[3.0]])).unwrap();
        assert!((f[(0, 0)] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn it_matches_retraining() {
        let (k, g, y) = problem(41, 7, 3);
        let hp = Hyperparams::it(0.3);
        let fast = leave_one_out(Variant::It, Setting::B, &k, &g, &y, hp).unwrap();
        let slow = brute_force_loo(Variant::It, Setting::B, &k, &g, &y, hp).unwrap();
        assert!(fast.predictions.max_rel_diff(&slow.predictions) < 1e-9);
    }

    #[test]
    fn setting_a_examples() {
        let y = dm(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let e = sym_eig(&DenseMatrix::identity(2)).unwrap();
        let f = loo_setting_a(&e, &e, FilterSpec::KroneckerTikhonov { lambda: 1.0 }, &y).unwrap();
        assert!(f.max_abs() < 1e-15);
        let one = sym_eig(&dm(&[&[1.0]])).unwrap();
        let spec = FilterSpec::TwoStep { lambda_d: 1.0, lambda_t: 1.0 };
        let f = loo_setting_a(&one, &one, spec, &dm(&[&[5.0]])).unwrap();
        assert!(f[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn kronecker_setting_a_matches_vectorized_oracle() {
        let (k, g, y) = problem(42, 4, 3);
        let hp = Hyperparams::kk(0.5);
        let fast = leave_one_out(Variant::Kk, Setting::A, &k, &g, &y, hp).unwrap();
        let slow = brute_force_loo(Variant::Kk, Setting::A, &k, &g, &y, hp).unwrap();
        assert!(fast.predictions.max_rel_diff(&slow.predictions) < 1e-9);
    }

    #[test]
    fn setting_b_examples_and_oracle() {
        let y = dm(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let hk = filters::hat_matrix(&sym_eig(&DenseMatrix::identity(2)).unwrap(), 0.5).unwrap();
        let hg = filters::hat_matrix(&sym_eig(&dm(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap(), 0.5).unwrap();
        assert!(loo_setting_b(&hk, &hg, &y).unwrap().max_abs() < 1e-15);

        // q = 1, G = [[1]], λ_t = 0 reduces to IT
        let (k, _, _) = problem(43, 5, 1);
        let y1 = random_matrix(&mut rng(1), 5, 1);
        let hk = filters::hat_matrix(k.eigen().unwrap(), 0.4).unwrap();
        let hg = filters::hat_matrix(&sym_eig(&dm(&[&[1.0]])).unwrap(), 0.0).unwrap();
        let b = loo_setting_b(&hk, &hg, &y1).unwrap();
        assert!(b.max_rel_diff(&loo_it(&hk, &y1).unwrap()) < 1e-15);

        let (k, g, y) = problem(44, 6, 4);
        let hp = Hyperparams::ts(0.5, 2.0);
        let fast = leave_one_out(Variant::Ts, Setting::B, &k, &g, &y, hp).unwrap();
        let slow = brute_force_loo(Variant::Ts, Setting::B, &k, &g, &y, hp).unwrap();
        assert!(fast.predictions.max_rel_diff(&slow.predictions) < 1e-9);
    }

    #[test]
    fn setting_c_examples_and_oracle() {
        let y = dm(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let hk = filters::hat_matrix(&sym_eig(&dm(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap(), 0.5).unwrap();
        let hg = filters::hat_matrix(&sym_eig(&DenseMatrix::identity(2)).unwrap(), 0.5).unwrap();
        assert!(loo_setting_c(&hk, &hg, &y).unwrap().max_abs() < 1e-15);

        // m = 1, K = [[1]], λ_d = 0: transpose of IT
        let (_, g, _) = problem(45, 1, 5);
        let y1 = random_matrix(&mut rng(2), 1, 5);
        let hk = filters::hat_matrix(&sym_eig(&dm(&[&[1.0]])).unwrap(), 0.0).unwrap();
        let hg = filters::hat_matrix(g.eigen().unwrap(), 0.4).unwrap();
        let c = loo_setting_c(&hk, &hg, &y1).unwrap();
        let it = loo_it(&hg, &y1.transpose()).unwrap().transpose();
        assert!(c.max_rel_diff(&it) < 1e-14);

        let (k, g, y) = problem(46, 4, 6);
        let hp = Hyperparams::ts(1.0, 0.1);
        let fast = leave_one_out(Variant::Ts, Setting::C, &k, &g, &y, hp).unwrap();
        let slow = brute_force_loo(Variant::Ts, Setting::C, &k, &g, &y, hp).unwrap();
        assert!(fast.predictions.max_rel_diff(&slow.predictions) < 1e-9);
    }

    #[test]
    fn setting_d_examples_and_oracle() {
        let y = dm(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let ones = dm(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let h_id = filters::hat_matrix(&sym_eig(&DenseMatrix::identity(2)).unwrap(), 1.0).unwrap();
        let h_ones = filters::hat_matrix(&sym_eig(&ones).unwrap(), 1.0).unwrap();
        assert!(loo_setting_d(&h_id, &h_ones, &y).unwrap().max_abs() < 1e-15);
        assert!(loo_setting_d(&h_ones, &h_id, &y).unwrap().max_abs() < 1e-15);

        // training on dyad (0, 0) alone: a = 4 / (2 * 2), prediction 1
        let f = loo_setting_d(&h_ones, &h_ones, &dm(&[&[4.0, 0.0], &[0.0, 0.0]])).unwrap();
        assert!((f[(1, 1)] - 1.0).abs() < 1e-14);
        let (k2, g2) = (kern(ones.clone()), kern(ones));
        let y2 = LabelMatrix::from_values(dm(&[&[4.0, 0.0], &[0.0, 0.0]]));
        let slow = brute_force_loo(Variant::Ts, Setting::D, &k2, &g2, &y2, Hyperparams::ts(1.0, 1.0)).unwrap();
        assert!((slow.predictions[(1, 1)] - 1.0).abs() < 1e-14);

        let (k, g, y) = problem(47, 6, 5);
        let hp = Hyperparams::ts(0.3, 3.0);
        let fast = leave_one_out(Variant::Ts, Setting::D, &k, &g, &y, hp).unwrap();
        let slow = brute_force_loo(Variant::Ts, Setting::D, &k, &g, &y, hp).unwrap();
        assert!(fast.predictions.max_rel_diff(&slow.predictions) < 1e-9);
    }

    #[test]
    fn ts_setting_a_matches_xi_oracle() {
        let (k, g, y) = problem(48, 4, 3);
        let hp = Hyperparams::ts(0.5, 2.0);
        let fast = leave_one_out(Variant::Ts, Setting::A, &k, &g, &y, hp).unwrap();
        let slow = brute_force_loo(Variant::Ts, Setting::A, &k, &g, &y, hp).unwrap();
        assert!(fast.predictions.max_rel_diff(&slow.predictions) < 1e-9);
    }

    #[test]
    fn held_out_labels_do_not_leak() {
        let (k, g, y) = problem(49, 6, 5);
        let hk = filters::hat_matrix(k.eigen().unwrap(), 0.5).unwrap();
        let hg = filters::hat_matrix(g.eigen().unwrap(), 0.8).unwrap();
        let yv = y.values();
        let mut r = rng(50);
        let d = loo_setting_d(&hk, &hg, yv).unwrap();
        let b = loo_setting_b(&hk, &hg, yv).unwrap();
        let c = loo_setting_c(&hk, &hg, yv).unwrap();
        for _ in 0..10 {
            let (i, j) = (r.random_range(0..6), r.random_range(0..5));
            let mut zeroed = yv.clone();
            for t in 0..5 {
                zeroed[(i, t)] = 0.0;
            }
            for s in 0..6 {
                zeroed[(s, j)] = 0.0;
            }
            let d2 = loo_setting_d(&hk, &hg, &zeroed).unwrap();
            assert!((d2[(i, j)] - d[(i, j)]).abs() < 1e-12);

            let mut row_zeroed = yv.clone();
            (0..5).for_each(|t| row_zeroed[(i, t)] = 0.0);
            let b2 = loo_setting_b(&hk, &hg, &row_zeroed).unwrap();
            assert!((0..5).all(|t| (b2[(i, t)] - b[(i, t)]).abs() < 1e-12));

            let mut col_zeroed = yv.clone();
            (0..6).for_each(|s| col_zeroed[(s, j)] = 0.0);
            let c2 = loo_setting_c(&hk, &hg, &col_zeroed).unwrap();
            assert!((0..6).all(|s| (c2[(s, j)] - c[(s, j)]).abs() < 1e-12));
        }
    }

    #[test]
    fn unsupported_and_degenerate_cases() {
        let (k, g, y) = problem(51, 3, 3);
        assert!(matches!(
            leave_one_out(Variant::Kk, Setting::B, &k, &g, &y, Hyperparams::kk(1.0)),
            Err(Error::UnsupportedCombination(_))
        ));
        assert!(matches!(
            leave_one_out(Variant::It, Setting::D, &k, &g, &y, Hyperparams::it(1.0)),
            Err(Error::UnsupportedCombination(_))
        ));
        let one = kern(dm(&[&[1.0]]));
        let y1 = LabelMatrix::from_values(dm(&[&[1.0]]));
        assert!(matches!(
            brute_force_loo(Variant::Ts, Setting::D, &one, &one, &y1, Hyperparams::ts(1.0, 1.0)),
            Err(Error::NoTrainingData)
        ));
        let (k, g, y) = problem(52, 21, 20);
        assert!(matches!(
            brute_force_loo(Variant::Ts, Setting::B, &k, &g, &y, Hyperparams::ts(1.0, 1.0)),
            Err(Error::SizeOverflow { .. })
        ));
    }

    #[test]
    fn kronecker_brute_force_other_settings_run() {
        let (k, g, y) = problem(53, 4, 3);
        for setting in [Setting::B, Setting::C, Setting::D] {
            let r = brute_force_loo(Variant::Kk, setting, &k, &g, &y, Hyperparams::kk(0.5)).unwrap();
            assert!(r.predictions.as_slice().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn underflow_names_the_entity() {
        let k = KernelMatrix::new(vec!["a".into(), "b".into()], DenseMatrix::identity(2)).unwrap();
        let g = KernelMatrix::new(vec!["t".into()], dm(&[&[1.0]])).unwrap();
        let y = LabelMatrix::new(vec!["a".into(), "b".into()], vec!["t".into()], dm(&[&[1.0], &[2.0]])).unwrap();
        match leave_one_out(Variant::It, Setting::B, &k, &g, &y, Hyperparams::it(0.0)) {
            Err(Error::DenominatorUnderflow { entity: Entity::Instance(id), .. }) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }
        match leave_one_out(Variant::Kk, Setting::A, &k, &g, &y, Hyperparams::kk(0.0)) {
            Err(Error::DenominatorUnderflow { entity: Entity::Instance(id), .. }) => assert_eq!(id, "a (task t)"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
