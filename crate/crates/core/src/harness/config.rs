use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::fieldmodels::{ModelKind, STANDARD_BUDGETS};
use crate::signals::{generate, Bandwidth, Family};
use crate::tasks::{build_dataset, TaskArgs, TaskKind};

pub const DEFAULT_SEED: u64 = 1234;
pub const DEFAULT_RESOLUTION_2D: usize = 128;
pub const DEFAULT_RESOLUTION_3D: usize = 32;

/// Optional overrides of the per-model training defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOverrides {
    pub iterations: Option<usize>,
    pub batch_size: Option<usize>,
    pub tv_weight: Option<f64>,
    pub lr: Option<f64>,
}

/// A validated sweep over model × budget × bandwidth × seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMatrix {
    pub models: Vec<ModelKind>,
    pub budgets: Vec<usize>,
    pub bandwidths: Vec<Bandwidth>,
    pub family: Family,
    pub dim: usize,
    pub resolution: usize,
    pub seeds: Vec<u64>,
    pub task: TaskKind,
    pub task_args: TaskArgs,
    pub train: TrainOverrides,
    /// Reference model of the gap heatmaps.
    pub baseline: ModelKind,
    /// Worker count requested by the file; see [`super::resolve_workers`].
    pub workers: Option<usize>,
}

/// Coordinates of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub model: ModelKind,
    pub budget: usize,
    pub bandwidth: Bandwidth,
    pub seed: u64,
}

impl CellKey {
    /// Canonical order: model name, budget, bandwidth, seed.
    pub fn sort_key(&self) -> (&'static str, usize, u8, u64) {
        (self.model.name(), self.budget, self.bandwidth.index(), self.seed)
    }
}

#[derive(Serialize)]
struct HashedCell<'a> {
    family: Family,
    dim: usize,
    resolution: usize,
    task: TaskKind,
    task_args: &'a TaskArgs,
    train: &'a TrainOverrides,
    cell: &'a CellKey,
}

impl ExperimentMatrix {
    /// Every cell in canonical order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for &model in &self.models {
            for &budget in &self.budgets {
                for &bandwidth in &self.bandwidths {
                    for &seed in &self.seeds {
                        cells.push(CellKey {
                            model,
                            budget,
                            bandwidth,
                            seed,
                        });
                    }
                }
            }
        }
        cells.sort_by_key(|c| c.sort_key());
        cells
    }

    /// First 16 hex digits of the SHA-256 of everything that determines the
    /// cell's outcome.
    pub fn cell_hash(&self, cell: &CellKey) -> String {
        let h = HashedCell {
            family: self.family,
            dim: self.dim,
            resolution: self.resolution,
            task: self.task,
            task_args: &self.task_args,
            train: &self.train,
            cell,
        };
        let json = serde_json::to_string(&h).expect("plain data serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lattice(&self) -> Vec<usize> {
        vec![self.resolution; self.dim]
    }
}

const TOP_KEYS: [&str; 12] = [
    "models",
    "budgets",
    "bandwidths",
    "family",
    "dim",
    "resolution",
    "seeds",
    "task",
    "baseline",
    "workers",
    "task_args",
    "train",
];
const TASK_ARG_KEYS: [&str; 3] = ["eps", "factor", "angles"];
const TRAIN_KEYS: [&str; 4] = ["iterations", "batch_size", "tv_weight", "lr"];

pub fn parse_config(path: &Path) -> Result<ExperimentMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Parses and validates a TOML matrix description; absent keys take defaults.
pub fn parse_config_str(text: &str) -> Result<ExperimentMatrix> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
    check_keys(&table, &TOP_KEYS, "")?;

    let dim = match table.get("dim") {
        Some(v) => as_usize(v, "dim")?,
        None => 2,
    };
    if !(2..=3).contains(&dim) {
        return Err(Error::config("dim", format!("must be 2 or 3, got {dim}")));
    }
    let family: Family = match table.get("family") {
        Some(v) => parse_name(v, "family")?,
        None => Family::Bandlimited,
    };
    if !family.supports_dim(dim) {
        return Err(Error::config("family", format!("{family} signals are not available in {dim}D")));
    }
    let task: TaskKind = match table.get("task") {
        Some(v) => parse_name(v, "task")?,
        None => TaskKind::Overfit,
    };
    if !task.supports_dim(dim) {
        return Err(Error::config("task", format!("{task} is not available in {dim}D")));
    }
    let resolution = match table.get("resolution") {
        Some(v) => as_usize(v, "resolution")?,
        None if dim == 2 => DEFAULT_RESOLUTION_2D,
        None => DEFAULT_RESOLUTION_3D,
    };
    if resolution < 2 {
        return Err(Error::config("resolution", "must be at least 2"));
    }

    let models = match table.get("models") {
        Some(v) => {
            let models: Vec<ModelKind> = parse_list(v, "models", |v, p| parse_name(v, p))?;
            for (i, m) in models.iter().enumerate() {
                if !m.supports_dim(dim) {
                    return Err(Error::config(format!("models[{i}]"), format!("{m} is not available in {dim}D")));
                }
            }
            models
        }
        None => ModelKind::ALL.into_iter().filter(|m| m.supports_dim(dim)).collect(),
    };
    let budgets = match table.get("budgets") {
        Some(v) => parse_list(v, "budgets", as_usize)?,
        None => STANDARD_BUDGETS.to_vec(),
    };
    let bandwidths: Vec<Bandwidth> = match table.get("bandwidths") {
        Some(v) => parse_list(v, "bandwidths", |v, p| {
            Bandwidth::new(as_f64(v, p)?).map_err(|_| Error::config(p, format!("must be one of 0.1, 0.2, …, 0.9, got {v}")))
        })?,
        None => Bandwidth::ALL.to_vec(),
    };
    let seeds = match table.get("seeds") {
        Some(v) => parse_list(v, "seeds", as_u64)?,
        None => vec![DEFAULT_SEED],
    };
    let baseline: ModelKind = match table.get("baseline") {
        Some(v) => parse_name(v, "baseline")?,
        None => ModelKind::Grid,
    };
    if !baseline.supports_dim(dim) {
        return Err(Error::config("baseline", format!("{baseline} is not available in {dim}D")));
    }
    let workers = match table.get("workers") {
        Some(v) => Some(as_usize(v, "workers")?),
        None => None,
    };

    let mut task_args = TaskArgs::default();
    if let Some(v) = table.get("task_args") {
        let t = as_table(v, "task_args")?;
        check_keys(t, &TASK_ARG_KEYS, "task_args.")?;
        if let Some(v) = t.get("eps") {
            task_args.eps = as_f64(v, "task_args.eps")?;
            if !(task_args.eps >= 0.0) || !task_args.eps.is_finite() {
                return Err(Error::config("task_args.eps", "must be finite and >= 0"));
            }
        }
        if let Some(v) = t.get("factor") {
            task_args.factor = Some(as_usize(v, "task_args.factor")?);
        }
        if let Some(v) = t.get("angles") {
            task_args.angles = as_usize(v, "task_args.angles")?;
        }
    }

    let mut train = TrainOverrides::default();
    if let Some(v) = table.get("train") {
        let t = as_table(v, "train")?;
        check_keys(t, &TRAIN_KEYS, "train.")?;
        if let Some(v) = t.get("iterations") {
            train.iterations = Some(as_usize(v, "train.iterations")?);
        }
        if let Some(v) = t.get("batch_size") {
            train.batch_size = Some(as_usize(v, "train.batch_size")?);
        }
        if let Some(v) = t.get("tv_weight") {
            let w = as_f64(v, "train.tv_weight")?;
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::config("train.tv_weight", "must be finite and >= 0"));
            }
            train.tv_weight = Some(w);
        }
        if let Some(v) = t.get("lr") {
            let lr = as_f64(v, "train.lr")?;
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(Error::config("train.lr", "must be finite and > 0"));
            }
            train.lr = Some(lr);
        }
    }

    let matrix = ExperimentMatrix {
        models,
        budgets,
        bandwidths,
        family,
        dim,
        resolution,
        seeds,
        task,
        task_args,
        train,
        baseline,
        workers,
    };
    check_task_args(&matrix)?;
    Ok(matrix)
}

/// Builds one dataset so that task arguments incompatible with the lattice
/// fail at parse time rather than in every cell.
fn check_task_args(m: &ExperimentMatrix) -> Result<()> {
    let signal = generate(m.family, m.dim, m.resolution, m.bandwidths[0], m.seeds[0]).map_err(|e| Error::config("resolution", e.to_string()))?;
    build_dataset(&signal, m.task, &m.task_args).map_err(|e| Error::config("task_args", e.to_string()))?;
    Ok(())
}

fn check_keys(t: &Table, allowed: &[&str], prefix: &str) -> Result<()> {
    for key in t.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::config(format!("{prefix}{key}"), "unknown key"));
        }
    }
    Ok(())
}

fn parse_list<T: PartialEq>(v: &Value, path: &str, f: impl Fn(&Value, &str) -> Result<T>) -> Result<Vec<T>> {
    let items = v
        .as_array()
        .ok_or_else(|| Error::config(path, format!("expected a list, got {}", v.type_str())))?;
    if items.is_empty() {
        return Err(Error::config(path, "must not be empty"));
    }
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let x = f(item, &p)?;
        if out.contains(&x) {
            return Err(Error::config(p, "duplicate entry"));
        }
        out.push(x);
    }
    Ok(out)
}

fn parse_name<T: std::str::FromStr>(v: &Value, path: &str) -> Result<T> {
    let s = v
        .as_str()
        .ok_or_else(|| Error::config(path, format!("expected a string, got {}", v.type_str())))?;
    s.parse().map_err(|_| Error::config(path, format!("unknown name `{s}`")))
}

fn as_table<'a>(v: &'a Value, path: &str) -> Result<&'a Table> {
    v.as_table()
        .ok_or_else(|| Error::config(path, format!("expected a table, got {}", v.type_str())))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::config(path, format!("expected a number, got {}", v.type_str()))),
    }
}

/// Non-negative integer; floats such as `1e4` are accepted when integral.
fn as_u64(v: &Value, path: &str) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Float(f) if *f >= 0.0 && f.fract() == 0.0 && *f < 9.007_199_254_740_992e15 => Ok(*f as u64),
        _ => Err(Error::config(path, format!("expected a non-negative integer, got {v}"))),
    }
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    let x = as_u64(v, path)?;
    if x == 0 {
        return Err(Error::config(path, "must be positive"));
    }
    Ok(x as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn empty_file_gives_the_full_default_matrix() {
        let m = parse_config_str("").unwrap();
        assert_eq!(m.models.len(), 8);
        assert_eq!(m.budgets, STANDARD_BUDGETS.to_vec());
        assert_eq!(m.bandwidths.len(), 9);
        assert_eq!(m.seeds, vec![1234]);
        assert_eq!(m.cells().len(), 8 * 6 * 9);
        assert_eq!((m.family, m.task, m.baseline), (Family::Bandlimited, TaskKind::Overfit, ModelKind::Grid));
    }

    #[test]
    fn subset_matrix() {
        let m = parse_config_str("models = [\"grid\", \"siren\"]\nbudgets = [1e4]\n").unwrap();
        assert_eq!(m.models, vec![ModelKind::Grid, ModelKind::Siren]);
        assert_eq!(m.budgets, vec![10_000]);
        assert_eq!(m.cells().len(), 2 * 9);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(parse_config_str("bandwidths = [0.5, 0.95]").unwrap_err()), "bandwidths[1]");
        assert_eq!(key_of(parse_config_str("models = [\"grid\", \"mlp\"]").unwrap_err()), "models[1]");
        assert_eq!(key_of(parse_config_str("task = \"inpaint\"").unwrap_err()), "task");
        assert_eq!(key_of(parse_config_str("[train]\nsteps = 3").unwrap_err()), "train.steps");
        assert_eq!(key_of(parse_config_str("budgets = []").unwrap_err()), "budgets");
        assert_eq!(key_of(parse_config_str("budgets = [1.5e3, 2.5]").unwrap_err()), "budgets[1]");
        assert_eq!(key_of(parse_config_str("seeds = [1, 1]").unwrap_err()), "seeds[1]");
    }

    #[test]
    fn three_d_drops_splatting() {
        let m = parse_config_str("dim = 3").unwrap();
        assert!(!m.models.contains(&ModelKind::GSplat2d));
        assert_eq!((m.models.len(), m.resolution), (7, 32));
        let e = parse_config_str("dim = 3\nmodels = [\"grid\", \"gsplat2d\"]").unwrap_err();
        assert_eq!(key_of(e), "models[1]");
        assert_eq!(key_of(parse_config_str("dim = 3\ntask = \"ct\"").unwrap_err()), "task");
    }

    #[test]
    fn cells_are_canonically_ordered_and_hashes_distinct() {
        let m = parse_config_str("models = [\"siren\", \"grid\"]\nbudgets = [300, 100]\nbandwidths = [0.5, 0.2]\nseeds = [2, 1]").unwrap();
        let cells = m.cells();
        assert_eq!(cells[0].model, ModelKind::Grid);
        assert!(cells.windows(2).all(|w| w[0].sort_key() < w[1].sort_key()));
        let hashes: HashSet<String> = cells.iter().map(|c| m.cell_hash(c)).collect();
        assert_eq!(hashes.len(), cells.len());
        assert_eq!(m.cell_hash(&cells[3]), m.clone().cell_hash(&cells[3]));
    }

    #[test]
    fn workers_are_not_part_of_the_hash() {
        let a = parse_config_str("models = [\"grid\"]").unwrap();
        let b = parse_config_str("models = [\"grid\"]\nworkers = 3").unwrap();
        let c = a.cells()[0];
        assert_eq!(a.cell_hash(&c), b.cell_hash(&c));
        let d = parse_config_str("models = [\"grid\"]\n[train]\niterations = 5").unwrap();
        assert_ne!(a.cell_hash(&c), d.cell_hash(&c));
    }
}
