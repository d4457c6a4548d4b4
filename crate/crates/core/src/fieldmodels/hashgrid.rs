use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{SparseMatrix, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::layers::{default_dense, linear, uniform};
use super::{budget, check_coords, check_param_vars, CoordBatch, FieldModel, ModelConfig};

/// Per-axis multipliers of the spatial hash.
pub const HASH_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

/// XOR-folded spatial hash of a lattice corner, modulo `table_size`.
pub fn hash_index(corner: &[u32], table_size: usize) -> usize {
    let h = corner
        .iter()
        .zip(HASH_PRIMES)
        .fold(0u32, |acc, (&c, p)| acc ^ c.wrapping_mul(p));
    h as usize % table_size
}

/// Multiresolution hash encoding with a `levels·features -> 64 -> d_out`
/// ReLU decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashGridConfig {
    pub dim: usize,
    pub d_out: usize,
    pub levels: usize,
    pub features: usize,
    pub log2_table: u32,
    pub n_min: usize,
    pub n_max: usize,
}

impl HashGridConfig {
    pub fn for_budget(budget: usize, resolution: &[usize], d_out: usize) -> Result<Self> {
        let (levels, features) = (16, 2);
        Ok(HashGridConfig {
            dim: resolution.len(),
            d_out,
            levels,
            features,
            log2_table: budget::hash_log2_table(budget, levels, features, d_out)?,
            n_min: 16,
            n_max: *resolution.iter().max().unwrap_or(&16),
        })
    }

    pub fn table_size(&self) -> usize {
        1usize << self.log2_table
    }

    /// Geometric level resolutions from `n_min` to `max(n_min, n_max)`.
    pub fn level_resolution(&self, level: usize) -> usize {
        let hi = self.n_max.max(self.n_min) as f64;
        let lo = self.n_min as f64;
        if self.levels <= 1 {
            return self.n_min;
        }
        let growth = ((hi.ln() - lo.ln()) / (self.levels - 1) as f64).exp();
        (lo * growth.powi(level as i32) + 1e-9).floor() as usize
    }

    /// Whether `level` addresses its table densely (no collisions possible).
    pub fn is_dense(&self, level: usize) -> bool {
        (self.level_resolution(level) + 1).pow(self.dim as u32) <= self.table_size()
    }

    pub fn param_count(&self) -> usize {
        self.levels * self.features * self.table_size() + budget::hash_decoder_params(self.levels, self.features, self.d_out)
    }
}

pub struct HashGridModel {
    config: ModelConfig,
    seed: u64,
    /// `levels` tables of `[T, F]`, then the decoder.
    params: Vec<Tensor>,
}

impl HashGridModel {
    /// Tables `U(-1e-4, 1e-4)`.
    pub fn new(c: HashGridConfig, seed: u64) -> Result<Self> {
        if !(2..=3).contains(&c.dim) || c.levels == 0 || c.features == 0 || c.n_min == 0 {
            return Err(Error::build(format!("invalid hash-grid config {c:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = c.table_size();
        let mut params: Vec<Tensor> = (0..c.levels)
            .map(|_| uniform(&mut rng, &[t, c.features], -1e-4, 1e-4))
            .collect();
        params.extend(default_dense(&mut rng, c.levels * c.features, 64));
        params.extend(default_dense(&mut rng, 64, c.d_out));
        Ok(HashGridModel {
            config: ModelConfig::HashGrid(c),
            seed,
            params,
        })
    }

    fn cfg(&self) -> &HashGridConfig {
        match &self.config {
            ModelConfig::HashGrid(c) => c,
            _ => unreachable!(),
        }
    }

    /// Sparse `[n, T]` blend matrix of one level.
    pub fn level_matrix(&self, coords: &Tensor, level: usize) -> Result<SparseMatrix> {
        let c = self.cfg();
        let (rows, d) = coords.dims2()?;
        let n = c.level_resolution(level);
        let t = c.table_size();
        let dense = c.is_dense(level);
        let corners = 1usize << d;
        let mut entries = Vec::with_capacity(rows * corners);
        let mut base = [0u32; 3];
        let mut frac = [0f64; 3];
        let mut corner = [0u32; 3];
        for r in 0..rows {
            for a in 0..d {
                let u = (coords.data()[r * d + a].clamp(-1.0, 1.0) + 1.0) / 2.0 * n as f64;
                let i0 = (u.floor() as usize).min(n.saturating_sub(1));
                base[a] = i0 as u32;
                frac[a] = u - i0 as f64;
            }
            for k in 0..corners {
                let mut w = 1.0;
                for a in 0..d {
                    let bit = (k >> (d - 1 - a)) & 1;
                    corner[a] = base[a] + bit as u32;
                    w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                }
                let idx = if dense {
                    corner[..d].iter().fold(0usize, |acc, &ci| acc * (n + 1) + ci as usize)
                } else {
                    hash_index(&corner[..d], t)
                };
                entries.push((r, idx, w));
            }
        }
        SparseMatrix::from_triplets(rows, t, entries)
    }
}

impl FieldModel for HashGridModel {
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
        let mut names: Vec<String> = (0..self.cfg().levels).map(|l| format!("table{l}")).collect();
        names.extend(["w0", "b0", "w1", "b1"].map(String::from));
        names
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &CoordBatch) -> Result<Var> {
        check_param_vars(self, params)?;
        let c = self.cfg();
        check_coords(batch, c.dim)?;
        let mut feats = Vec::with_capacity(c.levels);
        for l in 0..c.levels {
            let key = format!("hash:{}:{}:{}:{}:{l}", c.n_min, c.n_max, c.levels, c.log2_table);
            let m: Arc<Arc<SparseMatrix>> = batch.cached(key, || Ok(Arc::new(self.level_matrix(batch.coords(), l)?)))?;
            feats.push(tape.sparse((*m).clone(), params[l])?);
        }
        let e = tape.concat_cols(&feats)?;
        let k = c.levels;
        let h = linear(tape, e, params[k], params[k + 1])?;
        let h = tape.relu(h);
        linear(tape, h, params[k + 2], params[k + 3])
    }
}
