use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{trig, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::layers::{default_dense, dense, linear};
use super::{budget, cache_tag, check_coords, check_param_vars, CoordBatch, FieldModel, ModelConfig};

/// Multiplicative filter network with frozen integer-frequency sine filters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaconConfig {
    pub d_in: usize,
    pub d_out: usize,
    pub width: usize,
    /// Number of sine filters; there are `filters - 1` hidden linear layers.
    pub filters: usize,
    /// Per-filter frequency bound per axis, in cycles over the unit period.
    pub band: i64,
}

impl BaconConfig {
    /// Filters split the per-axis Nyquist band equally: `band = floor(R/8)`
    /// with four filters.
    pub fn for_budget(budget: usize, resolution: &[usize], d_out: usize) -> Result<Self> {
        let filters = 4;
        let width = budget::solve_hidden_width(&budget::ParameterBudget {
            target: budget,
            layers: filters - 1,
            d_in: 0,
            d_enc: 0,
            d_out,
            params_enc: 0,
        })?;
        let r = *resolution.iter().min().unwrap_or(&8);
        Ok(BaconConfig {
            d_in: resolution.len(),
            d_out,
            width,
            filters,
            band: (r / (2 * filters)) as i64,
        })
    }

    /// Per-axis bound on output frequencies: the sum of the filter bands.
    pub fn cumulative_band(&self) -> i64 {
        self.band * self.filters as i64
    }

    pub fn param_count(&self) -> usize {
        let x = self.width;
        (self.filters - 1) * (x * x + x) + x * self.d_out + self.d_out
    }
}

pub struct BaconModel {
    config: ModelConfig,
    seed: u64,
    /// Per filter: integer frequencies `[d_in, width]` and phases `[width]`.
    filters: Vec<(Tensor, Tensor)>,
    params: Vec<Tensor>,
    tag: String,
}

impl BaconModel {
    pub fn new(c: BaconConfig, seed: u64) -> Result<Self> {
        if c.width == 0 || c.filters < 1 || c.d_in == 0 || c.d_out == 0 || c.band < 0 {
            return Err(Error::build(format!("invalid BACON config {c:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let filters = (0..c.filters)
            .map(|_| {
                let f = Tensor::from_fn(&[c.d_in, c.width], |_| rng.random_range(-c.band..=c.band) as f64);
                let phi = Tensor::from_fn(&[c.width], |_| rng.random_range(-PI..PI));
                (f, phi)
            })
            .collect();
        let mut params = Vec::new();
        let bound = (6.0 / c.width as f64).sqrt();
        for _ in 1..c.filters {
            params.extend(dense(&mut rng, c.width, c.width, bound, 1.0 / (c.width as f64).sqrt()));
        }
        params.extend(default_dense(&mut rng, c.width, c.d_out));
        let config = ModelConfig::Bacon(c);
        Ok(BaconModel {
            tag: cache_tag(&config, seed),
            config,
            seed,
            filters,
            params,
        })
    }

    fn cfg(&self) -> &BaconConfig {
        match &self.config {
            ModelConfig::Bacon(c) => c,
            _ => unreachable!(),
        }
    }

    /// `sin(2π⟨f, q/2⟩ + φ)` for filter `i`, `[n, width]`.
    pub fn filter_response(&self, coords: &Tensor, i: usize) -> Result<Tensor> {
        let (n, d) = coords.dims2()?;
        let (f, phi) = &self.filters[i];
        let w = self.cfg().width;
        let mut out = vec![0.0; n * w];
        for r in 0..n {
            let q = &coords.data()[r * d..(r + 1) * d];
            for k in 0..w {
                let arg: f64 = (0..d).map(|a| 0.5 * q[a] * f.data()[a * w + k]).sum();
                out[r * w + k] = trig::sin(TAU * arg + phi.data()[k]);
            }
        }
        Tensor::new(vec![n, w], out)
    }
}

impl FieldModel for BaconModel {
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
        let n = self.params.len() / 2;
        (0..n).flat_map(|i| [format!("w{i}"), format!("b{i}")]).collect()
    }

    fn frozen(&self) -> Vec<(String, Tensor)> {
        self.filters
            .iter()
            .enumerate()
            .flat_map(|(i, (f, p))| [(format!("freq{i}"), f.clone()), (format!("phase{i}"), p.clone())])
            .collect()
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &CoordBatch) -> Result<Var> {
        check_param_vars(self, params)?;
        let c = self.cfg();
        check_coords(batch, c.d_in)?;
        let mut gs = Vec::with_capacity(c.filters);
        for i in 0..c.filters {
            let g: Arc<Tensor> = batch.cached(format!("{}:filter{i}", self.tag), || self.filter_response(batch.coords(), i))?;
            gs.push(tape.constant((*g).clone()));
        }
        let mut z = gs[0];
        for i in 1..c.filters {
            let h = linear(tape, z, params[2 * (i - 1)], params[2 * (i - 1) + 1])?;
            z = tape.mul(h, gs[i])?;
        }
        let k = params.len() - 2;
        linear(tape, z, params[k], params[k + 1])
    }
}
