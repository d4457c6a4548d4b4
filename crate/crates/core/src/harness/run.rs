use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldmodels::{build, count_params, ModelConfig, ModelKind};
use crate::metrics::{score, MetricsRecord};
use crate::signals::{gen_star_target, generate, Bandwidth, Family, RingMask, SampledSignal, STAR_WEDGES};
use crate::tasks::{build_dataset, train, TaskKind, TrainConfig};

use super::config::{CellKey, ExperimentMatrix};

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const MATRIX_FILE: &str = "matrix.json";
/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "INRB_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Diverged,
    /// The cell could not be built, e.g. an infeasible budget.
    Skipped,
}

impl CellStatus {
    pub fn name(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Diverged => "diverged",
            CellStatus::Skipped => "skipped",
        }
    }
}

impl std::str::FromStr for CellStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [CellStatus::Ok, CellStatus::Diverged, CellStatus::Skipped]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::build(format!("unknown cell status `{s}`")))
    }
}

/// Outcome of one cell; `metrics` is present exactly when `status` is ok.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config_hash: String,
    pub model: ModelKind,
    pub task: TaskKind,
    pub family: Family,
    pub dim: usize,
    pub resolution: usize,
    pub budget: usize,
    pub bandwidth: Bandwidth,
    pub seed: u64,
    pub status: CellStatus,
    pub metrics: Option<MetricsRecord>,
    pub note: Option<String>,
}

impl CellResult {
    pub fn key(&self) -> CellKey {
        CellKey {
            model: self.model,
            budget: self.budget,
            bandwidth: self.bandwidth,
            seed: self.seed,
        }
    }
}

/// Ground-truth signal of a cell, with ring masks for star targets.
fn cell_signal(m: &ExperimentMatrix, cell: &CellKey) -> Result<(SampledSignal, Option<Vec<RingMask>>)> {
    if m.family == Family::Star {
        let (s, rings) = gen_star_target(&m.lattice(), STAR_WEDGES)?;
        return Ok((s, Some(rings)));
    }
    Ok((generate(m.family, m.dim, m.resolution, cell.bandwidth, cell.seed)?, None))
}

/// Training settings of a cell: per-model defaults, then the matrix overrides.
pub fn cell_train_config(m: &ExperimentMatrix, cell: &CellKey) -> TrainConfig {
    let mut tc = TrainConfig::defaults(cell.model, m.task);
    let o = &m.train;
    if let Some(v) = o.iterations {
        tc.iterations = v;
    }
    if let Some(v) = o.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = o.tv_weight {
        tc.tv_weight = v;
    }
    if let Some(v) = o.lr {
        tc.lr = v;
    }
    tc.seed = cell.seed;
    tc
}

/// Trains and scores one cell. Divergence and infeasible budgets are recorded
/// in the status; only failures of the harness itself are errors.
pub fn run_cell(m: &ExperimentMatrix, cell: &CellKey) -> Result<CellResult> {
    let config_hash = m.cell_hash(cell);
    let mut result = CellResult {
        config_hash: config_hash.clone(),
        model: cell.model,
        task: m.task,
        family: m.family,
        dim: m.dim,
        resolution: m.resolution,
        budget: cell.budget,
        bandwidth: cell.bandwidth,
        seed: cell.seed,
        status: CellStatus::Skipped,
        metrics: None,
        note: None,
    };
    let (signal, rings) = cell_signal(m, cell)?;
    let mut args = m.task_args.clone();
    args.noise_seed = cell.seed;
    let data = build_dataset(&signal, m.task, &args)?;
    let config = match ModelConfig::for_budget(cell.model, cell.budget, &data.eval_resolution(), data.channels()) {
        Ok(c) => c,
        Err(e @ (Error::BudgetInfeasible { .. } | Error::Unsupported(_))) => {
            result.note = Some(e.to_string());
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    let mut model = build(&config, cell.seed)?;
    let outcome = match train(model.as_mut(), &data, &cell_train_config(m, cell)) {
        Ok(o) => o,
        Err(e @ Error::TrainingDiverged { .. }) => {
            result.status = CellStatus::Diverged;
            result.note = Some(e.to_string());
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    let s = score(&outcome.render, &data.eval_signal, rings.as_deref())?;
    result.status = CellStatus::Ok;
    result.metrics = Some(MetricsRecord {
        psnr_db: s.psnr_db,
        ssim: s.ssim,
        iou: s.iou,
        per_ring_psnr: s.per_ring_psnr,
        param_count: count_params(model.as_ref()),
        train_s: outcome.trace.train_seconds,
        infer_s: outcome.trace.infer_seconds,
        seed: cell.seed,
        config_hash,
    });
    if outcome.trace.clamped > 0 {
        result.note = Some(format!("{} rendered samples clamped to [0, 1]", outcome.trace.clamped));
    }
    Ok(result)
}

/// Worker count: explicit request, then `INRB_WORKERS`, then the config
/// file, then 1.
pub fn resolve_workers(explicit: Option<usize>, configured: Option<usize>) -> Result<usize> {
    let env = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(WORKERS_ENV, format!("expected a positive integer, got `{v}`")))?,
        ),
        Err(_) => None,
    };
    let n = explicit.or(env).or(configured).unwrap_or(1);
    if n == 0 {
        return Err(Error::config("workers", "must be positive"));
    }
    Ok(n)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub workers: usize,
    /// Stop after attempting this many pending cells.
    pub max_cells: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    /// Completed cells of the matrix in canonical order.
    pub results: Vec<CellResult>,
    /// Cells found complete in the ledger before this run.
    pub resumed: usize,
    /// Cells attempted by this run.
    pub attempted: usize,
    /// Cells still missing.
    pub pending: usize,
}

impl RunReport {
    pub fn is_complete(&self) -> bool {
        self.pending == 0
    }
}

/// Reads every well-formed ledger line; a torn final line is ignored.
pub fn read_ledger(path: &Path) -> Result<Vec<CellResult>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CellResult>(&line) {
            Ok(r) => out.push(r),
            Err(e) => log::warn!("{}: ignoring malformed ledger line {}: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

/// Opens the ledger for appending, terminating a torn last line first.
fn open_ledger(path: &Path) -> Result<File> {
    let mut f = OpenOptions::new().create(true).read(true).append(true).open(path)?;
    let len = f.metadata()?.len();
    if len > 0 {
        let mut last = [0u8; 1];
        f.seek(SeekFrom::End(-1))?;
        f.read_exact(&mut last)?;
        if last[0] != b'\n' {
            f.write_all(b"\n")?;
        }
    }
    Ok(f)
}

/// Runs every cell not yet recorded in `out_dir`'s ledger.
///
/// Cells are claimed in canonical order by `workers` threads; the calling
/// thread is the only ledger writer and flushes after every line.
pub fn run_matrix(matrix: &ExperimentMatrix, out_dir: &Path, opts: &RunOptions) -> Result<RunReport> {
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(matrix).map_err(|e| Error::build(e.to_string()))?;
    fs::write(out_dir.join(MATRIX_FILE), json)?;
    let ledger_path = out_dir.join(LEDGER_FILE);

    let cells = matrix.cells();
    let hashes: Vec<String> = cells.iter().map(|c| matrix.cell_hash(c)).collect();
    let mut done: HashMap<String, CellResult> = HashMap::new();
    for r in read_ledger(&ledger_path)? {
        done.insert(r.config_hash.clone(), r);
    }
    let resumed = hashes.iter().filter(|h| done.contains_key(*h)).count();
    let mut pending: Vec<CellKey> = cells
        .iter()
        .zip(&hashes)
        .filter(|(_, h)| !done.contains_key(*h))
        .map(|(c, _)| *c)
        .collect();
    if let Some(limit) = opts.max_cells {
        pending.truncate(limit);
    }
    let attempted = pending.len();

    let mut ledger = open_ledger(&ledger_path)?;
    let next = AtomicUsize::new(0);
    let workers = opts.workers.max(1).min(pending.len().max(1));
    let (tx, rx) = mpsc::channel::<Result<CellResult>>();
    let mut first_error: Option<Error> = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = pending.get(i) else { break };
                let outcome = run_cell(matrix, cell);
                let failed = outcome.is_err();
                if tx.send(outcome).is_err() || failed {
                    break;
                }
            });
        }
        drop(tx);
        for outcome in rx {
            match outcome {
                Ok(r) => {
                    log::info!(
                        "{} budget={} b={} seed={}: {}",
                        r.model,
                        r.budget,
                        r.bandwidth.value(),
                        r.seed,
                        r.status.name()
                    );
                    let line = serde_json::to_string(&r).map_err(|e| Error::build(e.to_string()));
                    let written = line.and_then(|l| {
                        writeln!(ledger, "{l}")?;
                        ledger.flush()?;
                        Ok(())
                    });
                    if let Err(e) = written {
                        first_error.get_or_insert(e);
                        next.store(usize::MAX / 2, Ordering::SeqCst);
                    }
                    done.insert(r.config_hash.clone(), r);
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                    next.store(usize::MAX / 2, Ordering::SeqCst);
                }
            }
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }
    let results: Vec<CellResult> = hashes.iter().filter_map(|h| done.get(h).cloned()).collect();
    let pending = cells.len() - results.len();
    Ok(RunReport {
        results,
        resumed,
        attempted,
        pending,
    })
}
