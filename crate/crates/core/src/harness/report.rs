use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fieldmodels::ModelKind;
use crate::signals::{Bandwidth, Family};
use crate::tasks::TaskKind;

use super::run::{CellResult, CellStatus};

pub const RESULTS_CSV: &str = "results.csv";
/// Like [`RESULTS_CSV`] without the wall-clock columns, so that identical
/// runs produce identical bytes.
pub const CANONICAL_CSV: &str = "canonical.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

pub const CSV_COLUMNS: [&str; 15] = [
    "model",
    "task",
    "family",
    "dim",
    "resolution",
    "budget",
    "bandwidth",
    "seed",
    "param_count",
    "psnr_db",
    "ssim",
    "iou",
    "train_s",
    "infer_s",
    "status",
];
const TIMING_COLUMNS: [&str; 2] = ["train_s", "infer_s"];

/// Quality metric selectable for reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Psnr,
    Ssim,
    Iou,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
            Metric::Iou => "iou",
        }
    }

    pub fn of(self, row: &ResultRow) -> Option<f64> {
        match self {
            Metric::Psnr => row.psnr_db,
            Metric::Ssim => row.ssim,
            Metric::Iou => row.iou,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Metric::Psnr, Metric::Ssim, Metric::Iou]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("metric", format!("expected psnr, ssim or iou, got `{s}`")))
    }
}

/// One line of the results table.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub model: ModelKind,
    pub task: TaskKind,
    pub family: Family,
    pub dim: usize,
    pub resolution: usize,
    pub budget: usize,
    pub bandwidth: Bandwidth,
    pub seed: u64,
    pub param_count: Option<usize>,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub iou: Option<f64>,
    pub train_s: Option<f64>,
    pub infer_s: Option<f64>,
    pub status: CellStatus,
}

impl ResultRow {
    pub fn sort_key(&self) -> (&'static str, &'static str, usize, u8, u64) {
        (self.model.name(), self.task.name(), self.budget, self.bandwidth.index(), self.seed)
    }

    fn fields(&self) -> [String; 15] {
        [
            self.model.name().to_string(),
            self.task.name().to_string(),
            self.family.name().to_string(),
            self.dim.to_string(),
            self.resolution.to_string(),
            self.budget.to_string(),
            fmt_float(self.bandwidth.value()),
            self.seed.to_string(),
            self.param_count.map(|p| p.to_string()).unwrap_or_default(),
            fmt_opt(self.psnr_db),
            fmt_opt(self.ssim),
            fmt_opt(self.iou),
            fmt_opt(self.train_s),
            fmt_opt(self.infer_s),
            self.status.name().to_string(),
        ]
    }
}

impl From<&CellResult> for ResultRow {
    fn from(r: &CellResult) -> Self {
        let m = r.metrics.as_ref();
        ResultRow {
            model: r.model,
            task: r.task,
            family: r.family,
            dim: r.dim,
            resolution: r.resolution,
            budget: r.budget,
            bandwidth: r.bandwidth,
            seed: r.seed,
            param_count: m.map(|m| m.param_count),
            psnr_db: m.map(|m| m.psnr_db),
            ssim: m.and_then(|m| m.ssim),
            iou: m.and_then(|m| m.iou),
            train_s: m.map(|m| m.train_s),
            infer_s: m.map(|m| m.infer_s),
            status: r.status,
        }
    }
}

/// Shortest round-trip decimal, always with a fractional part; non-finite
/// values as `inf`, `-inf` and `nan`.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("{other:?}"),
        },
    }
}

pub fn sorted_rows(results: &[CellResult]) -> Vec<ResultRow> {
    let mut rows: Vec<ResultRow> = results.iter().map(ResultRow::from).collect();
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    rows
}

/// Writes rows in canonical order, optionally without the timing columns.
pub fn write_results_csv(rows: &[ResultRow], path: &Path, timing: bool) -> Result<()> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let keep: Vec<usize> = (0..CSV_COLUMNS.len())
        .filter(|&i| timing || !TIMING_COLUMNS.contains(&CSV_COLUMNS[i]))
        .collect();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(keep.iter().map(|&i| CSV_COLUMNS[i])).map_err(|e| csv_err(path, e))?;
    for row in &sorted {
        let f = row.fields();
        w.write_record(keep.iter().map(|&i| f[i].as_str())).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, column: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        offset: line,
        message: format!("column `{column}`: cannot parse `{s}`"),
    })
}

fn parse_opt<T: std::str::FromStr>(path: &Path, line: usize, column: &str, s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(path, line, column, s).map(Some)
    }
}

/// Reads a table written by [`write_results_csv`]; timing columns are optional.
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    for name in CSV_COLUMNS.iter().filter(|c| !TIMING_COLUMNS.contains(c)) {
        if col(name).is_none() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: 0,
                message: format!("missing column `{name}`"),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        let get = |name: &str| col(name).and_then(|c| rec.get(c)).unwrap_or("");
        let bw: f64 = parse_field(path, line, "bandwidth", get("bandwidth"))?;
        rows.push(ResultRow {
            model: parse_field(path, line, "model", get("model"))?,
            task: parse_field(path, line, "task", get("task"))?,
            family: parse_field(path, line, "family", get("family"))?,
            dim: parse_field(path, line, "dim", get("dim"))?,
            resolution: parse_field(path, line, "resolution", get("resolution"))?,
            budget: parse_field(path, line, "budget", get("budget"))?,
            bandwidth: Bandwidth::new(bw).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                offset: line,
                message: e.to_string(),
            })?,
            seed: parse_field(path, line, "seed", get("seed"))?,
            param_count: parse_opt(path, line, "param_count", get("param_count"))?,
            psnr_db: parse_opt(path, line, "psnr_db", get("psnr_db"))?,
            ssim: parse_opt(path, line, "ssim", get("ssim"))?,
            iou: parse_opt(path, line, "iou", get("iou"))?,
            train_s: parse_opt(path, line, "train_s", get("train_s"))?,
            infer_s: parse_opt(path, line, "infer_s", get("infer_s"))?,
            status: parse_field(path, line, "status", get("status"))?,
        });
    }
    Ok(rows)
}

/// Mean and sample standard deviation; the deviation needs two values.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

type GroupKey = (&'static str, &'static str, usize, u8);

/// Mean ± std over seeds of ok cells, one line per (model, task, budget,
/// bandwidth).
pub fn write_summary_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut groups: BTreeMap<GroupKey, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.model.name(), r.task.name(), r.budget, r.bandwidth.index()))
            .or_default()
            .push(r);
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "model",
        "task",
        "family",
        "dim",
        "resolution",
        "budget",
        "bandwidth",
        "seeds",
        "ok",
        "psnr_mean",
        "psnr_std",
        "ssim_mean",
        "ssim_std",
        "iou_mean",
        "iou_std",
    ])
    .map_err(|e| csv_err(path, e))?;
    for group in groups.values() {
        let first = group[0];
        let ok: Vec<&ResultRow> = group.iter().copied().filter(|r| r.status == CellStatus::Ok).collect();
        let mut record = vec![
            first.model.name().to_string(),
            first.task.name().to_string(),
            first.family.name().to_string(),
            first.dim.to_string(),
            first.resolution.to_string(),
            first.budget.to_string(),
            fmt_float(first.bandwidth.value()),
            group.len().to_string(),
            ok.len().to_string(),
        ];
        for metric in [Metric::Psnr, Metric::Ssim, Metric::Iou] {
            let values: Vec<f64> = ok.iter().filter_map(|r| metric.of(r)).collect();
            let (mean, std) = mean_std(&values);
            record.push(fmt_opt(mean));
            record.push(fmt_opt(std));
        }
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the results, canonical and summary tables into `dir`.
pub fn write_tables(dir: &Path, results: &[CellResult]) -> Result<()> {
    let rows = sorted_rows(results);
    write_results_csv(&rows, &dir.join(RESULTS_CSV), true)?;
    write_results_csv(&rows, &dir.join(CANONICAL_CSV), false)?;
    write_summary_csv(&rows, &dir.join(SUMMARY_CSV))
}
