//! Matrix CSV files, dataset bundles and run reports.
//!
//! Every matrix file has a header row whose first cell is blank or `id`
//! followed by column ids; each data row starts with its row id.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{KernelMatrix, LabelMatrix};
use crate::linalg::DenseMatrix;

/// A parsed matrix file before any kind-specific validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub values: DenseMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Label,
    Kernel,
    Feature,
}

#[derive(Debug, Clone)]
pub enum ParsedMatrix {
    Label(LabelMatrix),
    Kernel(KernelMatrix),
    Feature(RawMatrix),
}

fn parse_error(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::ParseError { path: path.to_path_buf(), line, column, message: message.into() }
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

/// Parses CSV text; `path` is only used in error messages.
pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<RawMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_error(path, 1, 1, e.to_string()))?,
        None => return Err(parse_error(path, 1, 1, "empty file, expected a header row")),
    };
    let corner = header.get(0).unwrap_or("");
    if !(corner.is_empty() || corner.eq_ignore_ascii_case("id")) {
        return Err(parse_error(path, 1, 1, format!("header must start with a blank cell or 'id', found '{corner}'")));
    }
    let col_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    check_unique(&col_ids)?;

    let mut row_ids = Vec::new();
    let mut data = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, 1, e.to_string())
        })?;
        let line = record.position().map_or(row_ids.len() + 2, |p| p.line() as usize);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != col_ids.len() + 1 {
            return Err(parse_error(
                path,
                line,
                record.len().min(col_ids.len() + 1),
                format!("expected {} cells, found {}", col_ids.len() + 1, record.len()),
            ));
        }
        row_ids.push(record[0].to_string());
        for (c, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, line, c + 1, format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(path, line, c + 1, format!("'{cell}' is not finite")));
            }
            data.push(v);
        }
    }
    check_unique(&row_ids)?;
    let values = DenseMatrix::from_row_major(row_ids.len(), col_ids.len(), data)?;
    Ok(RawMatrix { row_ids, col_ids, values })
}

pub fn read_raw_csv(path: &Path) -> Result<RawMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text, path)
}

pub fn read_label_csv(path: &Path) -> Result<LabelMatrix> {
    let raw = read_raw_csv(path)?;
    LabelMatrix::new(raw.row_ids, raw.col_ids, raw.values)
}

/// Reads a square kernel file, checks symmetry and positive semidefiniteness.
/// With `clip`, small negative eigenvalues are set to zero instead of failing.
pub fn read_kernel_csv(path: &Path, clip: bool) -> Result<KernelMatrix> {
    let raw = read_raw_csv(path)?;
    kernel_from_raw(raw, clip)
}

fn kernel_from_raw(raw: RawMatrix, clip: bool) -> Result<KernelMatrix> {
    let (rows, cols) = raw.values.shape();
    if rows != cols {
        return Err(Error::NonSquareKernel { rows, cols });
    }
    if raw.row_ids != raw.col_ids {
        return Err(Error::IdMismatch("kernel row ids differ from column ids".into()));
    }
    let k = KernelMatrix::new(raw.row_ids, raw.values)?;
    if clip {
        k.clip_spectrum()
    } else {
        k.eigen()?;
        Ok(k)
    }
}

pub fn read_feature_csv(path: &Path) -> Result<RawMatrix> {
    read_raw_csv(path)
}

pub fn read_matrix_csv(path: &Path, kind: MatrixKind) -> Result<ParsedMatrix> {
    Ok(match kind {
        MatrixKind::Label => ParsedMatrix::Label(read_label_csv(path)?),
        MatrixKind::Kernel => ParsedMatrix::Kernel(read_kernel_csv(path, false)?),
        MatrixKind::Feature => ParsedMatrix::Feature(read_feature_csv(path)?),
    })
}

/// Shortest decimal text that parses back to the same value.
pub fn format_number(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

pub fn matrix_csv_string(row_ids: &[String], col_ids: &[String], values: &DenseMatrix) -> Result<String> {
    if row_ids.len() != values.rows() || col_ids.len() != values.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} row ids and {} column ids for a {}x{} matrix",
            row_ids.len(),
            col_ids.len(),
            values.rows(),
            values.cols()
        )));
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| Error::InvalidInput(e.to_string());
    writer
        .write_record(std::iter::once("id").chain(col_ids.iter().map(String::as_str)))
        .map_err(to_io)?;
    for (i, id) in row_ids.iter().enumerate() {
        let cells = values.row(i).iter().map(|&v| format_number(v));
        writer.write_record(std::iter::once(id.clone()).chain(cells)).map_err(to_io)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn write_matrix_csv(path: &Path, row_ids: &[String], col_ids: &[String], values: &DenseMatrix) -> Result<()> {
    let text = matrix_csv_string(row_ids, col_ids, values)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn file_provenance(path: &Path) -> Result<Provenance> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(Provenance { path: path.to_path_buf(), sha256 })
}

#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub y: LabelMatrix,
    pub k: KernelMatrix,
    pub g: KernelMatrix,
    pub provenance: Vec<Provenance>,
}

impl DatasetBundle {
    pub fn shape(&self) -> (usize, usize) {
        (self.y.n_instances(), self.y.n_tasks())
    }
}

/// Reorders both kernels to the label matrix's id order, dropping kernel
/// entries without labels.
pub fn align_bundle(y: LabelMatrix, k: &KernelMatrix, g: &KernelMatrix) -> Result<DatasetBundle> {
    let (k, dropped_k) = k.align_to(y.instance_ids())?;
    let (g, dropped_g) = g.align_to(y.task_ids())?;
    if dropped_k > 0 {
        log::warn!("dropped {dropped_k} instance kernel entries without labels");
    }
    if dropped_g > 0 {
        log::warn!("dropped {dropped_g} task kernel entries without labels");
    }
    Ok(DatasetBundle { y, k, g, provenance: Vec::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub lambda_d: f64,
    pub lambda_t: f64,
    pub lambda: Option<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub m: usize,
    pub q: usize,
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: String,
    pub setting: Option<String>,
    pub metric: String,
    pub grid: Vec<GridRecord>,
    pub best: Option<GridRecord>,
    pub timing_seconds: f64,
    pub dataset: DatasetInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidParameter(format!("unknown report format '{other}'"))),
        }
    }
}

pub fn report_string(report: &Report, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => {
            let mut out = String::from("lambda_d,lambda_t,lambda,score\n");
            for r in &report.grid {
                let lambda = r.lambda.map(format_number).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    format_number(r.lambda_d),
                    format_number(r.lambda_t),
                    lambda,
                    format_number(r.score)
                ));
            }
            Ok(out)
        }
    }
}

pub fn write_report(report: &Report, path: &Path, format: ReportFormat) -> Result<()> {
    fs::write(path, report_string(report, format)?).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
