//! Command-line driver: `fit`, `predict`, `loo`, `grid` and `online`.
//!
//! Exit codes: 1 for usage errors, 2 for data errors, 3 for numeric failures.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters;
use crate::holdout::{self, Hyperparams, Setting};
use crate::io::{self, DatasetBundle, DatasetInfo, GridRecord, Report, ReportFormat};
use crate::kernels::{self, KernelMatrix};
use crate::linalg::DenseMatrix;
use crate::metrics::{self, Metric};
use crate::models::{self, DualModel, Variant};
use crate::online;

/// Default regularization grid: ten to the powers -7 through 6.
pub const DEFAULT_GRID: &str = "1e-7:1e6:decade";
/// Fraction of instances held out by `online` for its learning curve.
pub const ONLINE_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Parser)]
#[command(name = "pairlearn", version, about = "Kernel ridge regression for pairwise data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write its dual parameters.
    Fit(FitArgs),
    /// Predict with saved dual parameters and test kernels.
    Predict(PredictArgs),
    /// Leave-one-out predictions and score for one setting.
    Loo(LooArgs),
    /// Leave-one-out score over a regularization grid.
    Grid(GridArgs),
    /// Primal model trained in mini-batches of instances.
    Online(OnlineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub instance_kernel: PathBuf,
    #[arg(long)]
    pub task_kernel: Option<PathBuf>,
    /// Replace binary labels by N/N+ and -N/N-.
    #[arg(long)]
    pub rescore_labels: bool,
    /// Clamp negative kernel eigenvalues to zero.
    #[arg(long)]
    pub clip_spectrum: bool,
}

#[derive(Debug, Clone, Args)]
pub struct LambdaArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_d: Option<f64>,
    #[arg(long)]
    pub lambda_t: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_variant)]
    pub model: Variant,
    #[command(flatten)]
    pub lambdas: LambdaArgs,
    #[arg(long, default_value = "auto")]
    pub metric: String,
    /// Dual parameter CSV; the report goes to `<output>.report.json`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Dual parameter CSV written by `fit`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    pub model: Variant,
    /// Test instances by training instances.
    #[arg(long)]
    pub instance_kernel: PathBuf,
    /// Test tasks by training tasks; omitted for `it`, which predicts the training tasks.
    #[arg(long)]
    pub task_kernel: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LooArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_variant)]
    pub model: Variant,
    #[arg(long, value_parser = parse_setting)]
    pub setting: Setting,
    #[command(flatten)]
    pub lambdas: LambdaArgs,
    #[arg(long, default_value = "auto")]
    pub metric: String,
    /// Retrain for every held-out entity instead of using the closed forms.
    #[arg(long)]
    pub oracle: bool,
    /// Report path; predictions go to `<output>.predictions.csv`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_variant)]
    pub model: Variant,
    #[arg(long, value_parser = parse_setting)]
    pub setting: Setting,
    #[arg(long, default_value = DEFAULT_GRID)]
    pub grid: String,
    #[arg(long, default_value = "auto")]
    pub metric: String,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct OnlineArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub instance_features: PathBuf,
    #[arg(long)]
    pub task_features: PathBuf,
    #[arg(long)]
    pub lambda_d: f64,
    #[arg(long)]
    pub lambda_t: f64,
    #[arg(long)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "auto")]
    pub metric: String,
    #[arg(long)]
    pub rescore_labels: bool,
    /// Learning-curve CSV; weights go to `<output>.weights.csv` and the
    /// report to `<output>.report.json`.
    #[arg(long)]
    pub output: PathBuf,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_setting(s: &str) -> std::result::Result<Setting, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<ReportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Regularization values from `start:stop:decade` or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| Error::InvalidParameter(format!("grid '{spec}': {why}"));
    let values: Vec<f64> = if let Some((range, step)) = spec.rsplit_once(':').filter(|(r, _)| r.contains(':')) {
        if step != "decade" {
            return Err(bad("only decade steps are supported"));
        }
        let (start, stop) = range.split_once(':').ok_or_else(|| bad("expected start:stop:decade"))?;
        let start: f64 = start.trim().parse().map_err(|_| bad("start is not a number"))?;
        let stop: f64 = stop.trim().parse().map_err(|_| bad("stop is not a number"))?;
        if !(start > 0.0 && stop >= start && stop.is_finite()) {
            return Err(bad("need 0 < start <= stop"));
        }
        let text = format!("{start:e}");
        let (mantissa, exponent) = text.split_once('e').ok_or_else(|| bad("unreadable start"))?;
        let exponent: i32 = exponent.parse().map_err(|_| bad("unreadable start"))?;
        let mut out = Vec::new();
        for k in 0.. {
            let v: f64 = format!("{mantissa}e{}", exponent + k).parse().map_err(|_| bad("overflow"))?;
            if v > stop * (1.0 + 1e-12) || !v.is_finite() {
                break;
            }
            out.push(v);
        }
        out
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("entries must be numbers")))
            .collect::<Result<_>>()?
    };
    if values.is_empty() {
        return Err(bad("no values"));
    }
    if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(bad("values must be positive"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad("values must be strictly increasing"));
    }
    Ok(values)
}

/// The metric used when `--metric auto`: micro AUC for settings A and D,
/// per-instance macro AUC for B, per-task macro AUC for C.
pub fn auto_metric(setting: Setting) -> Metric {
    match setting {
        Setting::A | Setting::D => Metric::MicroAuc,
        Setting::B => Metric::MacroAucRows,
        Setting::C => Metric::MacroAucCols,
    }
}

fn resolve_metric(name: &str, fallback: Metric) -> Result<Metric> {
    if name == "auto" {
        Ok(fallback)
    } else {
        name.parse()
    }
}

fn require(value: Option<f64>, flag: &str, variant: Variant) -> Result<f64> {
    value.ok_or_else(|| Error::InvalidParameter(format!("model {variant} needs --{flag}")))
}

fn hyperparams(variant: Variant, l: &LambdaArgs) -> Result<Hyperparams> {
    Ok(match variant {
        Variant::It => Hyperparams::it(require(l.lambda_d, "lambda-d", variant)?),
        Variant::Kk => Hyperparams::kk(require(l.lambda, "lambda", variant)?),
        Variant::Ts => Hyperparams::ts(require(l.lambda_d, "lambda-d", variant)?, require(l.lambda_t, "lambda-t", variant)?),
        Variant::Okkls => Hyperparams::default(),
    })
}

fn record(variant: Variant, hp: Hyperparams, score: f64) -> GridRecord {
    match variant {
        Variant::Kk | Variant::Okkls => GridRecord { lambda_d: 0.0, lambda_t: 0.0, lambda: Some(hp.lambda), score },
        _ => GridRecord { lambda_d: hp.lambda_d, lambda_t: hp.lambda_t, lambda: None, score },
    }
}

/// Reads labels and kernels, aligns them and records file checksums.
/// Models other than `it` need a task kernel; `it` gets an identity one.
pub fn load_bundle(data: &DataArgs, variant: Variant) -> Result<DatasetBundle> {
    let mut y = io::read_label_csv(&data.labels)?;
    if data.rescore_labels {
        y = kernels::rescore_labels(&y)?;
    }
    let k = io::read_kernel_csv(&data.instance_kernel, data.clip_spectrum)?;
    let mut paths = vec![data.labels.clone(), data.instance_kernel.clone()];
    let g = match (&data.task_kernel, variant) {
        (Some(path), _) => {
            paths.push(path.clone());
            io::read_kernel_csv(path, data.clip_spectrum)?
        }
        (None, Variant::It) => KernelMatrix::new(y.task_ids().to_vec(), DenseMatrix::identity(y.n_tasks()))?,
        (None, _) => return Err(Error::InvalidParameter(format!("model {variant} needs --task-kernel"))),
    };
    let mut bundle = io::align_bundle(y, &k, &g)?;
    bundle.provenance = paths.iter().map(|p| io::file_provenance(p)).collect::<Result<_>>()?;
    Ok(bundle)
}

fn dataset_info(bundle: &DatasetBundle) -> DatasetInfo {
    let (m, q) = bundle.shape();
    DatasetInfo { m, q, provenance: bundle.provenance.iter().map(|p| p.path.display().to_string()).collect() }
}

fn fit_model(variant: Variant, bundle: &DatasetBundle, hp: Hyperparams) -> Result<DualModel> {
    match variant {
        Variant::It => models::fit_it(&bundle.k, &bundle.y, hp.lambda_d),
        Variant::Kk => models::fit_kk(&bundle.k, &bundle.g, &bundle.y, hp.lambda),
        Variant::Okkls => models::fit_okkls(&bundle.k, &bundle.g, &bundle.y),
        Variant::Ts => models::fit_ts(&bundle.k, &bundle.g, &bundle.y, hp.lambda_d, hp.lambda_t),
    }
}

fn side_path(output: &Path, suffix: &str) -> PathBuf {
    let mut s = output.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_fit(args: &FitArgs) -> Result<Report> {
    let start = Instant::now();
    let bundle = load_bundle(&args.data, args.model)?;
    let hp = hyperparams(args.model, &args.lambdas)?;
    let metric = resolve_metric(&args.metric, Metric::Mse)?;
    let model = fit_model(args.model, &bundle, hp)?;
    io::write_matrix_csv(&args.output, &model.instance_ids, &model.task_ids, &model.params)?;

    let g_train = if args.model == Variant::It { DenseMatrix::identity(model.n_tasks()) } else { bundle.g.gram().clone() };
    let fitted = models::predict(&model, bundle.k.gram(), &g_train)?;
    let score = metrics::evaluate(metric, bundle.y.values(), &fitted)?;
    let rec = record(args.model, hp, score);
    let report = Report {
        model: args.model.to_string(),
        setting: None,
        metric: metric.to_string(),
        grid: vec![rec],
        best: Some(rec),
        timing_seconds: start.elapsed().as_secs_f64(),
        dataset: dataset_info(&bundle),
    };
    io::write_report(&report, &side_path(&args.output, ".report.json"), ReportFormat::Json)?;
    Ok(report)
}

/// Columns of `raw` reordered to `ids`.
fn columns_for(raw: &io::RawMatrix, ids: &[String], what: &str) -> Result<DenseMatrix> {
    let idx: Vec<usize> = ids
        .iter()
        .map(|id| {
            raw.col_ids
                .iter()
                .position(|c| c == id)
                .ok_or_else(|| Error::MissingId(format!("{what} kernel lacks training id '{id}'")))
        })
        .collect::<Result<_>>()?;
    Ok(raw.values.select(&(0..raw.values.rows()).collect::<Vec<_>>(), &idx))
}

pub fn cmd_predict(args: &PredictArgs) -> Result<DenseMatrix> {
    let params = io::read_raw_csv(&args.params)?;
    let model = DualModel {
        variant: args.model,
        params: params.values.clone(),
        lambda_d: 0.0,
        lambda_t: 0.0,
        lambda: 0.0,
        instance_ids: params.row_ids.clone(),
        task_ids: params.col_ids.clone(),
    };
    let k_raw = io::read_raw_csv(&args.instance_kernel)?;
    let k_test = columns_for(&k_raw, &model.instance_ids, "instance")?;
    let (g_test, test_tasks) = match (&args.task_kernel, args.model) {
        (Some(path), _) => {
            let g_raw = io::read_raw_csv(path)?;
            (columns_for(&g_raw, &model.task_ids, "task")?, g_raw.row_ids)
        }
        (None, Variant::It) => (DenseMatrix::identity(model.n_tasks()), model.task_ids.clone()),
        (None, v) => return Err(Error::InvalidParameter(format!("model {v} needs --task-kernel"))),
    };
    let f = models::predict(&model, &k_test, &g_test)?;
    io::write_matrix_csv(&args.output, &k_raw.row_ids, &test_tasks, &f)?;
    Ok(f)
}

fn check_loo_support(variant: Variant, setting: Setting, oracle: bool) -> Result<()> {
    let supported = match variant {
        Variant::It => matches!(setting, Setting::A | Setting::B),
        Variant::Ts => true,
        Variant::Kk => setting == Setting::A || oracle,
        Variant::Okkls => false,
    };
    if supported {
        Ok(())
    } else if variant == Variant::Kk {
        Err(Error::UnsupportedCombination(format!(
            "model kk in setting {setting} has no closed form; pass --oracle to retrain explicitly"
        )))
    } else {
        Err(Error::UnsupportedCombination(format!("model {variant} does not support setting {setting}")))
    }
}

pub fn cmd_loo(args: &LooArgs) -> Result<(Report, DenseMatrix)> {
    let start = Instant::now();
    check_loo_support(args.model, args.setting, args.oracle)?;
    let bundle = load_bundle(&args.data, args.model)?;
    let hp = hyperparams(args.model, &args.lambdas)?;
    let metric = resolve_metric(&args.metric, auto_metric(args.setting))?;
    let result = if args.oracle {
        holdout::brute_force_loo(args.model, args.setting, &bundle.k, &bundle.g, &bundle.y, hp)?
    } else {
        holdout::leave_one_out(args.model, args.setting, &bundle.k, &bundle.g, &bundle.y, hp)?
    };
    let score = metrics::evaluate(metric, bundle.y.values(), &result.predictions)?;
    let rec = record(args.model, hp, score);
    let report = Report {
        model: args.model.to_string(),
        setting: Some(args.setting.to_string()),
        metric: metric.to_string(),
        grid: vec![rec],
        best: Some(rec),
        timing_seconds: start.elapsed().as_secs_f64(),
        dataset: dataset_info(&bundle),
    };
    io::write_report(&report, &args.output, args.format)?;
    io::write_matrix_csv(
        &side_path(&args.output, ".predictions.csv"),
        bundle.y.instance_ids(),
        bundle.y.task_ids(),
        &result.predictions,
    )?;
    Ok((report, result.predictions))
}

/// Index of the best record; among equal scores the one with the
/// lexicographically largest `(lambda_d, lambda_t, lambda)` wins.
pub fn select_best(records: &[GridRecord], metric: Metric) -> Option<usize> {
    let key = |r: &GridRecord| (r.lambda_d, r.lambda_t, r.lambda.unwrap_or(0.0));
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let current = &records[b];
                let ord = metrics::compare_scores(metric, r.score, current.score);
                let better = ord.is_gt() || (ord.is_eq() && key(r).partial_cmp(&key(current)).is_some_and(|o| o.is_gt()));
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Leave-one-out scores at every grid point. Both eigendecompositions are
/// computed once up front and shared by all points.
pub fn grid_search(
    variant: Variant,
    setting: Setting,
    bundle: &DatasetBundle,
    values: &[f64],
    metric: Metric,
) -> Result<Vec<GridRecord>> {
    check_loo_support(variant, setting, false)?;
    let (k, g, y) = (&bundle.k, &bundle.g, &bundle.y);
    k.eigen()?;
    if variant != Variant::It {
        g.eigen()?;
    }
    let points: Vec<Hyperparams> = match variant {
        Variant::It => values.iter().map(|&l| Hyperparams::it(l)).collect(),
        Variant::Kk => values.iter().map(|&l| Hyperparams::kk(l)).collect(),
        _ => values.iter().flat_map(|&d| values.iter().map(move |&t| Hyperparams::ts(d, t))).collect(),
    };

    let two_step_hats = variant == Variant::Ts && setting != Setting::A;
    let (hk, hg): (Vec<DenseMatrix>, Vec<DenseMatrix>) = if two_step_hats || variant == Variant::It {
        let (ek, eg) = (k.eigen()?, g.eigen()?);
        let hk = values.par_iter().map(|&l| filters::hat_matrix(ek, l)).collect::<Result<_>>()?;
        let hg = if two_step_hats {
            values.par_iter().map(|&l| filters::hat_matrix(eg, l)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        (hk, hg)
    } else {
        (Vec::new(), Vec::new())
    };

    let p = values.len();
    let mut records: Vec<GridRecord> = points
        .par_iter()
        .enumerate()
        .map(|(idx, &hp)| {
            let predictions = if variant == Variant::It {
                holdout::loo_it(&hk[idx], y.values())
            } else if two_step_hats {
                let (a, b) = (&hk[idx / p], &hg[idx % p]);
                match setting {
                    Setting::B => holdout::loo_setting_b(a, b, y.values()),
                    Setting::C => holdout::loo_setting_c(a, b, y.values()),
                    _ => holdout::loo_setting_d(a, b, y.values()),
                }
            } else {
                holdout::leave_one_out(variant, setting, k, g, y, hp).map(|r| r.predictions)
            }
            .map_err(|e| holdout::name_entities(e, y.instance_ids(), y.task_ids()))?;
            let score = metrics::evaluate(metric, y.values(), &predictions)?;
            Ok(record(variant, hp, score))
        })
        .collect::<Result<_>>()?;
    records.sort_by(|a, b| {
        (a.lambda_d, a.lambda_t, a.lambda.unwrap_or(0.0))
            .partial_cmp(&(b.lambda_d, b.lambda_t, b.lambda.unwrap_or(0.0)))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(records)
}

pub fn cmd_grid(args: &GridArgs) -> Result<Report> {
    let start = Instant::now();
    let values = parse_grid(&args.grid)?;
    let metric = resolve_metric(&args.metric, auto_metric(args.setting))?;
    check_loo_support(args.model, args.setting, false)?;
    let bundle = load_bundle(&args.data, args.model)?;
    let grid = grid_search(args.model, args.setting, &bundle, &values, metric)?;
    let best = select_best(&grid, metric).map(|i| grid[i]);
    let report = Report {
        model: args.model.to_string(),
        setting: Some(args.setting.to_string()),
        metric: metric.to_string(),
        grid,
        best,
        timing_seconds: start.elapsed().as_secs_f64(),
        dataset: dataset_info(&bundle),
    };
    io::write_report(&report, &args.output, args.format)?;
    Ok(report)
}

/// Rows of `raw` in the order of `ids`.
fn rows_for(raw: &io::RawMatrix, ids: &[String], what: &str) -> Result<DenseMatrix> {
    let idx: Vec<usize> = ids
        .iter()
        .map(|id| {
            raw.row_ids
                .iter()
                .position(|r| r == id)
                .ok_or_else(|| Error::MissingId(format!("{what} features lack id '{id}'")))
        })
        .collect::<Result<_>>()?;
    Ok(raw.values.select(&idx, &(0..raw.values.cols()).collect::<Vec<_>>()))
}

/// One learning-curve row: batch number, training instances seen, test score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub batch: usize,
    pub n_instances: usize,
    pub score: f64,
}

pub fn cmd_online(args: &OnlineArgs) -> Result<(Report, Vec<CurvePoint>, online::PrimalModel)> {
    let start = Instant::now();
    if args.batch_size == 0 {
        return Err(Error::InvalidParameter("--batch-size must be positive".into()));
    }
    let metric = resolve_metric(&args.metric, Metric::Mse)?;
    let mut y = io::read_label_csv(&args.labels)?;
    if args.rescore_labels {
        y = kernels::rescore_labels(&y)?;
    }
    let phi_raw = io::read_feature_csv(&args.instance_features)?;
    let psi_raw = io::read_feature_csv(&args.task_features)?;
    let phi_all = rows_for(&phi_raw, y.instance_ids(), "instance")?;
    let psi = rows_for(&psi_raw, y.task_ids(), "task")?;

    let m = y.n_instances();
    let n_test = ((m as f64 * ONLINE_TEST_FRACTION).round() as usize).max(1);
    if m <= n_test {
        return Err(Error::NoTrainingData);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(args.seed));
    let (test_idx, train_idx) = order.split_at(n_test);
    let all_cols: Vec<usize> = (0..y.n_tasks()).collect();
    let phi_test = phi_all.select(test_idx, &(0..phi_all.cols()).collect::<Vec<_>>());
    let y_test = y.values().select(test_idx, &all_cols);

    let mut model: Option<online::PrimalModel> = None;
    let mut curve = Vec::new();
    for (b, chunk) in train_idx.chunks(args.batch_size).enumerate() {
        let phi_b = phi_all.select(chunk, &(0..phi_all.cols()).collect::<Vec<_>>());
        let y_b = y.values().select(chunk, &all_cols);
        let next = match &model {
            None => online::init_primal(&phi_b, &psi, &y_b, args.lambda_d, args.lambda_t)?,
            Some(prev) => online::update_instances(prev, &phi_b, &y_b)?,
        };
        let f = online::predict_primal_matrix(&next, &phi_test, &psi)?;
        let score = metrics::evaluate(metric, &y_test, &f)?;
        curve.push(CurvePoint { batch: b + 1, n_instances: next.n_instances(), score });
        model = Some(next);
    }
    let model = model.ok_or(Error::NoTrainingData)?;

    let mut text = String::from("batch,n_instances,score\n");
    for p in &curve {
        text.push_str(&format!("{},{},{}\n", p.batch, p.n_instances, io::format_number(p.score)));
    }
    std::fs::write(&args.output, text).map_err(|e| Error::io(&args.output, e))?;
    io::write_matrix_csv(&side_path(&args.output, ".weights.csv"), &phi_raw.col_ids, &psi_raw.col_ids, &model.w)?;

    let hp = Hyperparams::ts(args.lambda_d, args.lambda_t);
    let last = record(Variant::Ts, hp, curve.last().map_or(f64::NAN, |p| p.score));
    let provenance = [&args.labels, &args.instance_features, &args.task_features]
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    let report = Report {
        model: "ts-primal".into(),
        setting: None,
        metric: metric.to_string(),
        grid: vec![last],
        best: Some(last),
        timing_seconds: start.elapsed().as_secs_f64(),
        dataset: DatasetInfo { m, q: y.n_tasks(), provenance },
    };
    io::write_report(&report, &side_path(&args.output, ".report.json"), ReportFormat::Json)?;
    Ok((report, curve, model))
}

/// Caps the global thread pool at `PAIRLEARN_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("PAIRLEARN_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::debug!("thread pool already configured: {e}");
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads();
    match cli.command {
        Command::Fit(a) => {
            let r = cmd_fit(&a)?;
            log::info!("fit {} score {:?}", r.model, r.best.map(|b| b.score));
        }
        Command::Predict(a) => {
            cmd_predict(&a)?;
        }
        Command::Loo(a) => {
            let (r, _) = cmd_loo(&a)?;
            if let Some(b) = r.best {
                println!("{} {}", r.metric, b.score);
            }
        }
        Command::Grid(a) => {
            let r = cmd_grid(&a)?;
            if let Some(b) = r.best {
                println!("{} {} lambda_d={} lambda_t={} lambda={:?}", r.metric, b.score, b.lambda_d, b.lambda_t, b.lambda);
            }
        }
        Command::Online(a) => {
            let (_, curve, _) = cmd_online(&a)?;
            if let Some(p) = curve.last() {
                println!("batches {} score {}", p.batch, p.score);
            }
        }
    }
    Ok(())
}
