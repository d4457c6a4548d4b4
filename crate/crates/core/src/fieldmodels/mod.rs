//! The representation families behind one [`FieldModel`] contract, plus the
//! budget rules that size each of them to a target parameter count.
//!
//! A model maps normalized coordinates in `[-1, 1)^d` to `d_out` values. Its
//! trainable tensors live in [`FieldModel::params`]; a forward pass records
//! onto a [`Tape`] against [`Var`]s bound to those tensors, so the same code
//! serves training, gradient checking and plain evaluation.

mod bacon;
pub mod budget;
mod checkpoint;
mod ffn;
mod gaplanes;
mod grid;
mod gsplat;
mod hashgrid;
pub mod interp;
mod layers;
mod siren;
mod wire;

use std::any::Any;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub use bacon::{BaconConfig, BaconModel};
pub use budget::{
    gaplanes_features, grid_side, gsplat_count, hash_log2_table, solve_hidden_width, ParameterBudget,
    STANDARD_BUDGETS,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use ffn::{FfnConfig, FfnModel};
pub use gaplanes::{GaPlanesConfig, GaPlanesModel};
pub use grid::{GridConfig, GridModel};
pub use gsplat::{gaussian_naive_render, GSplatConfig, GSplatModel};
pub use hashgrid::{hash_index, HashGridConfig, HashGridModel, HASH_PRIMES};
pub use interp::{grid_eval_bicubic, grid_eval_trilinear, Kernel};
pub use siren::{SirenConfig, SirenModel};
pub use wire::{wire_activation, WireConfig, WireModel};

/// The eight representation families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Grid,
    Ffn,
    Siren,
    Wire,
    GaPlanes,
    HashGrid,
    GSplat2d,
    Bacon,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Grid,
        ModelKind::Ffn,
        ModelKind::Siren,
        ModelKind::Wire,
        ModelKind::GaPlanes,
        ModelKind::HashGrid,
        ModelKind::GSplat2d,
        ModelKind::Bacon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Grid => "grid",
            ModelKind::Ffn => "ffn",
            ModelKind::Siren => "siren",
            ModelKind::Wire => "wire",
            ModelKind::GaPlanes => "gaplanes",
            ModelKind::HashGrid => "hashgrid",
            ModelKind::GSplat2d => "gsplat2d",
            ModelKind::Bacon => "bacon",
        }
    }

    /// Default Adam learning rate.
    pub fn default_lr(self) -> f64 {
        match self {
            ModelKind::Grid => 1e-1,
            ModelKind::Ffn => 1e-3,
            ModelKind::Siren => 1e-4,
            ModelKind::Wire => 5e-4,
            ModelKind::GaPlanes => 1e-2,
            ModelKind::HashGrid => 1e-2,
            ModelKind::GSplat2d => 5e-2,
            ModelKind::Bacon => 5e-2,
        }
    }

    pub fn supports_dim(self, dim: usize) -> bool {
        match self {
            ModelKind::GSplat2d => dim == 2,
            _ => dim == 2 || dim == 3,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::build(format!("unknown model kind `{s}`")))
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Structural knobs of one model instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Grid(GridConfig),
    Ffn(FfnConfig),
    Siren(SirenConfig),
    Wire(WireConfig),
    GaPlanes(GaPlanesConfig),
    HashGrid(HashGridConfig),
    GSplat2d(GSplatConfig),
    Bacon(BaconConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Grid(_) => ModelKind::Grid,
            ModelConfig::Ffn(_) => ModelKind::Ffn,
            ModelConfig::Siren(_) => ModelKind::Siren,
            ModelConfig::Wire(_) => ModelKind::Wire,
            ModelConfig::GaPlanes(_) => ModelKind::GaPlanes,
            ModelConfig::HashGrid(_) => ModelKind::HashGrid,
            ModelConfig::GSplat2d(_) => ModelKind::GSplat2d,
            ModelConfig::Bacon(_) => ModelKind::Bacon,
        }
    }

    pub fn d_in(&self) -> usize {
        match self {
            ModelConfig::Grid(c) => c.resolution.len(),
            ModelConfig::Ffn(c) => c.d_in,
            ModelConfig::Siren(c) => c.d_in,
            ModelConfig::Wire(c) => c.d_in,
            ModelConfig::GaPlanes(c) => c.dim,
            ModelConfig::HashGrid(c) => c.dim,
            ModelConfig::GSplat2d(_) => 2,
            ModelConfig::Bacon(c) => c.d_in,
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            ModelConfig::Grid(c) => c.channels,
            ModelConfig::Ffn(c) => c.d_out,
            ModelConfig::Siren(c) => c.d_out,
            ModelConfig::Wire(c) => c.d_out,
            ModelConfig::GaPlanes(c) => c.d_out,
            ModelConfig::HashGrid(c) => c.d_out,
            ModelConfig::GSplat2d(c) => c.d_out,
            ModelConfig::Bacon(c) => c.d_out,
        }
    }

    /// Sizes a model of `kind` to `budget` for a signal of `resolution` ×
    /// `channels`.
    pub fn for_budget(kind: ModelKind, budget: usize, resolution: &[usize], channels: usize) -> Result<ModelConfig> {
        let dim = resolution.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::build(format!("models take 2D or 3D coordinates, got {dim}")));
        }
        if !kind.supports_dim(dim) {
            return Err(Error::Unsupported(format!("{kind} in {dim}D")));
        }
        Ok(match kind {
            ModelKind::Grid => ModelConfig::Grid(GridConfig::for_budget(budget, dim, channels)?),
            ModelKind::Ffn => ModelConfig::Ffn(FfnConfig::for_budget(budget, dim, channels)?),
            ModelKind::Siren => ModelConfig::Siren(SirenConfig::for_budget(budget, dim, channels)?),
            ModelKind::Wire => ModelConfig::Wire(WireConfig::for_budget(budget, dim, channels)?),
            ModelKind::GaPlanes => ModelConfig::GaPlanes(GaPlanesConfig::for_budget(budget, resolution, channels)?),
            ModelKind::HashGrid => ModelConfig::HashGrid(HashGridConfig::for_budget(budget, resolution, channels)?),
            ModelKind::GSplat2d => ModelConfig::GSplat2d(GSplatConfig::for_budget(budget, resolution, channels)?),
            ModelKind::Bacon => ModelConfig::Bacon(BaconConfig::for_budget(budget, resolution, channels)?),
        })
    }

    /// Frozen entries charged against the budget on top of the trainable count.
    pub fn budget_charged_frozen(&self) -> usize {
        match self {
            ModelConfig::Ffn(c) => c.frozen_charge(),
            _ => 0,
        }
    }
}

/// Query coordinates plus a per-batch cache of coordinate-only quantities
/// (interpolation matrices, frozen encodings) reused across training steps.
pub struct CoordBatch {
    coords: Tensor,
    cache: Mutex<HashMap<String, Arc<dyn Any + Send + Sync>>>,
}

impl CoordBatch {
    /// `coords` is `[n, d]`.
    pub fn new(coords: Tensor) -> Result<Self> {
        coords.dims2()?;
        Ok(CoordBatch {
            coords,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn coords(&self) -> &Tensor {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.shape()[1]
    }

    /// Value under `key`, computing it with `f` on first use.
    pub fn cached<T: Any + Send + Sync>(&self, key: String, f: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
        let mut cache = self.cache.lock().expect("coordinate cache poisoned");
        if let Some(v) = cache.get(&key) {
            if let Ok(t) = v.clone().downcast::<T>() {
                return Ok(t);
            }
        }
        let v = Arc::new(f()?);
        cache.insert(key, v.clone());
        Ok(v)
    }
}

/// A trainable continuous field.
pub trait FieldModel: Send + Sync {
    fn config(&self) -> &ModelConfig;

    /// Seed the model was initialized from.
    fn seed(&self) -> u64;

    /// Trainable tensors, in a fixed order.
    fn params(&self) -> &[Tensor];

    fn params_mut(&mut self) -> &mut [Tensor];

    fn param_names(&self) -> Vec<String>;

    /// Non-trainable tensors, by name.
    fn frozen(&self) -> Vec<(String, Tensor)> {
        Vec::new()
    }

    /// Records an evaluation at `batch` returning `[n, d_out]`; `params` are
    /// the tape variables bound to [`FieldModel::params`] in order.
    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &CoordBatch) -> Result<Var>;

    /// Index and extents of a parameter that is a value lattice, if any.
    fn lattice(&self) -> Option<(usize, Vec<usize>)> {
        None
    }

    fn kind(&self) -> ModelKind {
        self.config().kind()
    }

    fn d_in(&self) -> usize {
        self.config().d_in()
    }

    fn d_out(&self) -> usize {
        self.config().d_out()
    }
}

/// Sum of trainable tensor sizes.
pub fn count_params(model: &dyn FieldModel) -> usize {
    model.params().iter().map(Tensor::len).sum()
}

/// Trainable count plus frozen entries charged against the budget.
pub fn budget_count(model: &dyn FieldModel) -> usize {
    count_params(model) + model.config().budget_charged_frozen()
}

/// Instantiates `config` with parameters drawn from `seed`.
pub fn build(config: &ModelConfig, seed: u64) -> Result<Box<dyn FieldModel>> {
    Ok(match config {
        ModelConfig::Grid(c) => Box::new(GridModel::new(c.clone(), seed)?),
        ModelConfig::Ffn(c) => Box::new(FfnModel::new(c.clone(), seed)?),
        ModelConfig::Siren(c) => Box::new(SirenModel::new(c.clone(), seed)?),
        ModelConfig::Wire(c) => Box::new(WireModel::new(c.clone(), seed)?),
        ModelConfig::GaPlanes(c) => Box::new(GaPlanesModel::new(c.clone(), seed)?),
        ModelConfig::HashGrid(c) => Box::new(HashGridModel::new(c.clone(), seed)?),
        ModelConfig::GSplat2d(c) => Box::new(GSplatModel::new(c.clone(), seed)?),
        ModelConfig::Bacon(c) => Box::new(BaconModel::new(c.clone(), seed)?),
    })
}

/// Rows per chunk when evaluating outside of training.
pub const EVAL_CHUNK: usize = 4096;

/// Evaluates `model` at `[n, d]` coordinates without recording gradients.
pub fn evaluate(model: &dyn FieldModel, coords: &Tensor) -> Result<Tensor> {
    let (n, d) = coords.dims2()?;
    if d != model.d_in() {
        return Err(Error::build(format!("{} expects {}-D coordinates, got {d}", model.kind(), model.d_in())));
    }
    let d_out = model.d_out();
    let mut out = Vec::with_capacity(n * d_out);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let chunk = Tensor::new(vec![end - start, d], coords.data()[start * d..end * d].to_vec())?;
        let batch = CoordBatch::new(chunk)?;
        out.extend_from_slice(evaluate_batch(model, &batch)?.data());
        start = end;
    }
    Tensor::new(vec![n, d_out], out)
}

/// Evaluates at a prepared batch, reusing its cache.
pub fn evaluate_batch(model: &dyn FieldModel, batch: &CoordBatch) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = model.params().iter().map(|p| tape.constant(p.clone())).collect();
    let out = model.forward(&mut tape, &vars, batch)?;
    Ok(tape.value(out).clone())
}

/// Cache key prefix unique to a model's frozen state.
pub(crate) fn cache_tag(config: &ModelConfig, seed: u64) -> String {
    format!("{}:{seed}:{}", config.kind(), serde_json::to_string(config).unwrap_or_default())
}

pub(crate) fn check_param_vars(model: &dyn FieldModel, params: &[Var]) -> Result<()> {
    if params.len() != model.params().len() {
        return Err(Error::build(format!(
            "{} needs {} parameter variables, got {}",
            model.kind(),
            model.params().len(),
            params.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_coords(batch: &CoordBatch, d_in: usize) -> Result<()> {
    if batch.dim() != d_in {
        return Err(Error::build(format!("expected {d_in}-D coordinates, got {}", batch.dim())));
    }
    Ok(())
}
