use std::f64::consts::TAU;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{trig, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::layers::{default_dense, linear, mlp_params};
use super::{budget, cache_tag, check_coords, check_param_vars, CoordBatch, FieldModel, ModelConfig};

/// Linear-term offset of the FFN width quadratic.
pub const FFN_WIDTH_OFFSET: usize = 7;

/// Random Fourier features `[cos 2πqB, sin 2πqB]` decoded by a ReLU MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfnConfig {
    pub d_in: usize,
    pub d_out: usize,
    /// Number of frequencies; the embedding has `2m` features.
    pub m: usize,
    pub sigma: f64,
    pub width: usize,
    /// Hidden `width -> width` layers after the first.
    pub layers: usize,
}

impl FfnConfig {
    pub fn for_budget(budget: usize, d_in: usize, d_out: usize) -> Result<Self> {
        let m = 1000;
        let layers = 2;
        let width = budget::solve_hidden_width(&budget::ParameterBudget {
            target: budget,
            layers,
            d_in,
            d_enc: 2 * m + FFN_WIDTH_OFFSET,
            d_out,
            params_enc: m * d_in,
        })?;
        Ok(FfnConfig {
            d_in,
            d_out,
            m,
            sigma: 20.0,
            width,
            layers,
        })
    }

    /// Frozen frequency entries charged against the budget.
    pub fn frozen_charge(&self) -> usize {
        self.m * self.d_in
    }

    pub fn param_count(&self) -> usize {
        mlp_params(2 * self.m, self.width, self.layers, self.d_out)
    }
}

pub struct FfnModel {
    config: ModelConfig,
    seed: u64,
    /// `[d_in, m]`, entries `N(0, σ²)`.
    freqs: Tensor,
    params: Vec<Tensor>,
    tag: String,
}

impl FfnModel {
    pub fn new(c: FfnConfig, seed: u64) -> Result<Self> {
        if c.m == 0 || c.width == 0 || c.d_in == 0 || c.d_out == 0 || !(c.sigma > 0.0) {
            return Err(Error::build(format!("invalid FFN config {c:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, c.sigma).map_err(|e| Error::build(e.to_string()))?;
        let freqs = Tensor::from_fn(&[c.d_in, c.m], |_| normal.sample(&mut rng));
        let mut params = Vec::new();
        params.extend(default_dense(&mut rng, 2 * c.m, c.width));
        for _ in 0..c.layers {
            params.extend(default_dense(&mut rng, c.width, c.width));
        }
        params.extend(default_dense(&mut rng, c.width, c.d_out));
        let config = ModelConfig::Ffn(c);
        Ok(FfnModel {
            tag: cache_tag(&config, seed),
            config,
            seed,
            freqs,
            params,
        })
    }

    fn cfg(&self) -> &FfnConfig {
        match &self.config {
            ModelConfig::Ffn(c) => c,
            _ => unreachable!(),
        }
    }

    /// Fourier embedding `[n, 2m]`: cosines then sines, unit amplitudes.
    pub fn encode(&self, coords: &Tensor) -> Result<Tensor> {
        let c = self.cfg();
        let (n, d) = coords.dims2()?;
        if d != c.d_in {
            return Err(Error::build(format!("FFN expects {}-D coordinates, got {d}", c.d_in)));
        }
        let m = c.m;
        let b = self.freqs.data();
        let mut out = vec![0.0; n * 2 * m];
        for r in 0..n {
            let q = &coords.data()[r * d..(r + 1) * d];
            let row = &mut out[r * 2 * m..(r + 1) * 2 * m];
            for k in 0..m {
                let phase: f64 = (0..d).map(|a| q[a] * b[a * m + k]).sum::<f64>() * TAU;
                let (s, co) = (trig::sin(phase), trig::cos(phase));
                row[k] = co;
                row[m + k] = s;
            }
        }
        Tensor::new(vec![n, 2 * m], out)
    }
}

impl FieldModel for FfnModel {
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
        vec![("freqs".into(), self.freqs.clone())]
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &CoordBatch) -> Result<Var> {
        check_param_vars(self, params)?;
        check_coords(batch, self.cfg().d_in)?;
        let enc: Arc<Tensor> = batch.cached(format!("{}:enc", self.tag), || self.encode(batch.coords()))?;
        let mut h = tape.constant((*enc).clone());
        let n_layers = params.len() / 2;
        for i in 0..n_layers {
            h = linear(tape, h, params[2 * i], params[2 * i + 1])?;
            if i + 1 < n_layers {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_at_origin() {
        let m = FfnModel::new(FfnConfig::for_budget(10_000, 2, 1).unwrap(), 3).unwrap();
        let e = m.encode(&Tensor::zeros(&[1, 2])).unwrap();
        assert!(e.data()[..1000].iter().all(|&v| v == 1.0));
        assert!(e.data()[1000..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn width_table() {
        let w: Vec<usize> = budget::STANDARD_BUDGETS
            .iter()
            .map(|&p| FfnConfig::for_budget(p, 2, 1).unwrap().width)
            .collect();
        assert_eq!(w, [3, 13, 46, 131, 364, 820]);
    }
}
