use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffcore::{SparseMatrix, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::interp::{interp_matrix, Kernel};
use super::{budget, check_coords, check_param_vars, CoordBatch, FieldModel, ModelConfig};

/// Value lattice, bicubic in 2D and trilinear in 3D.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub resolution: Vec<usize>,
    pub channels: usize,
}

impl GridConfig {
    pub fn for_budget(budget: usize, dim: usize, channels: usize) -> Result<Self> {
        let s = budget::grid_side(budget, dim, channels)?;
        Ok(GridConfig {
            resolution: vec![s; dim],
            channels,
        })
    }

    pub fn kernel(&self) -> Kernel {
        if self.resolution.len() == 2 {
            Kernel::Cubic
        } else {
            Kernel::Linear
        }
    }
}

pub struct GridModel {
    config: ModelConfig,
    seed: u64,
    params: Vec<Tensor>,
}

impl GridModel {
    /// Zero-initialized lattice.
    pub fn new(config: GridConfig, seed: u64) -> Result<Self> {
        if !(2..=3).contains(&config.resolution.len()) || config.resolution.iter().any(|&n| n == 0) {
            return Err(Error::build(format!("invalid grid resolution {:?}", config.resolution)));
        }
        let cells: usize = config.resolution.iter().product();
        Ok(GridModel {
            params: vec![Tensor::zeros(&[cells, config.channels])],
            config: ModelConfig::Grid(config),
            seed,
        })
    }

    fn cfg(&self) -> &GridConfig {
        match &self.config {
            ModelConfig::Grid(c) => c,
            _ => unreachable!(),
        }
    }
}

impl FieldModel for GridModel {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn params(&self) -> &[Tensor] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn param_names(&self) -> Vec<String> {
        vec!["values".into()]
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &CoordBatch) -> Result<Var> {
        check_param_vars(self, params)?;
        let c = self.cfg();
        check_coords(batch, c.resolution.len())?;
        let axes: Vec<usize> = (0..c.resolution.len()).collect();
        let key = format!("interp:{:?}:{:?}", c.kernel(), c.resolution);
        let m: Arc<Arc<SparseMatrix>> = batch.cached(key, || {
            Ok(Arc::new(interp_matrix(batch.coords(), &axes, &c.resolution, c.kernel())?))
        })?;
        tape.sparse((*m).clone(), params[0])
    }

    fn lattice(&self) -> Option<(usize, Vec<usize>)> {
        Some((0, self.cfg().resolution.clone()))
    }
}
