//! Mean squared error, AUC (micro and per-slice macro) and concordance index.
//!
//! A label counts as positive when it is strictly greater than zero, which
//! covers {0, 1}, {-1, 1} and rescored labels alike. Score ties earn half a
//! concordant pair everywhere.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Mse,
    MicroAuc,
    MacroAucRows,
    MacroAucCols,
    CIndex,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::MicroAuc => "micro-auc",
            Metric::MacroAucRows => "macro-auc-rows",
            Metric::MacroAucCols => "macro-auc-cols",
            Metric::CIndex => "c-index",
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Mse)
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "mse" => Ok(Metric::Mse),
            "micro-auc" => Ok(Metric::MicroAuc),
            "macro-auc-rows" => Ok(Metric::MacroAucRows),
            "macro-auc-cols" => Ok(Metric::MacroAucCols),
            "c-index" => Ok(Metric::CIndex),
            other => Err(Error::InvalidParameter(format!("unknown metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Mean of per-slice AUCs plus the number of slices lacking one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroAuc {
    pub value: f64,
    pub skipped: usize,
}

fn check_shapes(a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "truth is {}x{}, predictions are {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!("{what} entry {i} is not finite"))),
        None => Ok(()),
    }
}

pub fn mse(truth: &DenseMatrix, pred: &DenseMatrix) -> Result<f64> {
    check_shapes(truth, pred)?;
    let n = truth.as_slice().len();
    if n == 0 {
        return Err(Error::InvalidInput("mean squared error of an empty matrix".into()));
    }
    let total: f64 = truth.as_slice().iter().zip(pred.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / n as f64)
}

/// Positions sorted by value with tied runs grouped: `(start, end)` spans
/// into the returned order.
fn tie_groups(values: &[f64]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || values[order[i]] != values[order[start]] {
            groups.push((start, i));
            start = i;
        }
    }
    (order, groups)
}

/// AUC of flat vectors through the rank-sum statistic with midranks.
/// `None` when one class is absent.
fn auc_slice(truth: &[f64], scores: &[f64]) -> Option<f64> {
    let n_pos = truth.iter().filter(|&&t| t > 0.0).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let (order, groups) = tie_groups(scores);
    // twice the rank sum keeps every quantity integral
    let mut twice_rank_sum = 0.0;
    for (start, end) in groups {
        let twice_mid = (start + 1 + end) as f64;
        let pos = order[start..end].iter().filter(|&&i| truth[i] > 0.0).count();
        twice_rank_sum += twice_mid * pos as f64;
    }
    let twice_u = twice_rank_sum - (n_pos * (n_pos + 1)) as f64;
    Some(twice_u / 2.0 / (n_pos as f64 * n_neg as f64))
}

pub fn micro_auc(truth: &DenseMatrix, scores: &DenseMatrix) -> Result<f64> {
    check_shapes(truth, scores)?;
    check_finite(scores.as_slice(), "score")?;
    auc_slice(truth.as_slice(), scores.as_slice()).ok_or(Error::DegenerateClasses)
}

pub fn macro_auc(truth: &DenseMatrix, scores: &DenseMatrix, axis: Axis) -> Result<MacroAuc> {
    check_shapes(truth, scores)?;
    check_finite(scores.as_slice(), "score")?;
    let slices: Vec<(Vec<f64>, Vec<f64>)> = match axis {
        Axis::Rows => (0..truth.rows()).map(|i| (truth.row(i).to_vec(), scores.row(i).to_vec())).collect(),
        Axis::Cols => (0..truth.cols()).map(|j| (truth.col(j), scores.col(j))).collect(),
    };
    let aucs: Vec<f64> = slices.iter().filter_map(|(t, s)| auc_slice(t, s)).collect();
    let skipped = slices.len() - aucs.len();
    if aucs.is_empty() {
        return Err(Error::NoValidSlices);
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} slices lack one class and were skipped", slices.len());
    }
    Ok(MacroAuc { value: aucs.iter().sum::<f64>() / aucs.len() as f64, skipped })
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted positions `< i`.
    fn prefix(&self, mut i: usize) -> u64 {
        let mut total = 0;
        while i > 0 {
            total += self.0[i];
            i -= i & i.wrapping_neg();
        }
        total
    }
}

/// Fraction of pairs with `y_i > y_j` ranked the same way by `f`; pairs tied
/// in `y` are not comparable, pairs tied in `f` earn one half.
pub fn c_index(y: &[f64], f: &[f64]) -> Result<f64> {
    if y.len() != f.len() {
        return Err(Error::DimensionMismatch(format!("{} labels but {} predictions", y.len(), f.len())));
    }
    check_finite(y, "label")?;
    check_finite(f, "prediction")?;
    // dense ranks of f
    let (f_order, f_groups) = tie_groups(f);
    let mut f_rank = vec![0; f.len()];
    for (rank, &(start, end)) in f_groups.iter().enumerate() {
        for &i in &f_order[start..end] {
            f_rank[i] = rank;
        }
    }
    let (y_order, y_groups) = tie_groups(y);
    let mut tree = Fenwick::new(f_groups.len());
    let (mut concordant, mut tied, mut comparable) = (0u64, 0u64, 0u64);
    let mut inserted = 0u64;
    for (start, end) in y_groups {
        let group = &y_order[start..end];
        for &i in group {
            let below = tree.prefix(f_rank[i]);
            let equal = tree.prefix(f_rank[i] + 1) - below;
            concordant += below;
            tied += equal;
            comparable += inserted;
        }
        for &i in group {
            tree.add(f_rank[i]);
        }
        inserted += group.len() as u64;
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok((concordant as f64 + 0.5 * tied as f64) / comparable as f64)
}

/// Scores `pred` against `truth` with the given metric.
pub fn evaluate(metric: Metric, truth: &DenseMatrix, pred: &DenseMatrix) -> Result<f64> {
    match metric {
        Metric::Mse => mse(truth, pred),
        Metric::MicroAuc => micro_auc(truth, pred),
        Metric::MacroAucRows => macro_auc(truth, pred, Axis::Rows).map(|m| m.value),
        Metric::MacroAucCols => macro_auc(truth, pred, Axis::Cols).map(|m| m.value),
        Metric::CIndex => {
            check_shapes(truth, pred)?;
            c_index(truth.as_slice(), pred.as_slice())
        }
    }
}

/// `Less` when `a` is the worse score under `metric`.
pub fn compare_scores(metric: Metric, a: f64, b: f64) -> Ordering {
    if metric.higher_is_better() {
        a.total_cmp(&b)
    } else {
        b.total_cmp(&a)
    }
}
