use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::layers::{dense, linear, mlp_params};
use super::{budget, check_coords, check_param_vars, CoordBatch, FieldModel, ModelConfig};

/// Sine-activated MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirenConfig {
    pub d_in: usize,
    pub d_out: usize,
    pub width: usize,
    /// Hidden `width -> width` layers after the first.
    pub layers: usize,
    pub omega: f64,
}

impl SirenConfig {
    pub fn for_budget(budget: usize, d_in: usize, d_out: usize) -> Result<Self> {
        let layers = 3;
        let width = budget::solve_hidden_width(&budget::ParameterBudget {
            target: budget,
            layers,
            d_in,
            d_enc: d_in,
            d_out,
            params_enc: 0,
        })?;
        Ok(SirenConfig {
            d_in,
            d_out,
            width,
            layers,
            omega: 90.0,
        })
    }

    pub fn param_count(&self) -> usize {
        mlp_params(self.d_in, self.width, self.layers, self.d_out)
    }
}

pub struct SirenModel {
    config: ModelConfig,
    seed: u64,
    params: Vec<Tensor>,
}

impl SirenModel {
    /// First layer `U(±1/d_in)`, later weights `U(±√(6/fan_in)/ω)`, biases
    /// `U(±1/√fan_in)`.
    pub fn new(c: SirenConfig, seed: u64) -> Result<Self> {
        if c.width == 0 || c.d_in == 0 || c.d_out == 0 || !(c.omega > 0.0) {
            return Err(Error::build(format!("invalid SIREN config {c:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let bias = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        params.extend(dense(&mut rng, c.d_in, c.width, 1.0 / c.d_in as f64, bias(c.d_in)));
        let hidden = (6.0 / c.width as f64).sqrt() / c.omega;
        for _ in 0..c.layers {
            params.extend(dense(&mut rng, c.width, c.width, hidden, bias(c.width)));
        }
        params.extend(dense(&mut rng, c.width, c.d_out, hidden, bias(c.width)));
        Ok(SirenModel {
            config: ModelConfig::Siren(c),
            seed,
            params,
        })
    }

    fn cfg(&self) -> &SirenConfig {
        match &self.config {
            ModelConfig::Siren(c) => c,
            _ => unreachable!(),
        }
    }
}

impl FieldModel for SirenModel {
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

    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &CoordBatch) -> Result<Var> {
        check_param_vars(self, params)?;
        let c = self.cfg();
        check_coords(batch, c.d_in)?;
        let mut h = tape.constant(batch.coords().clone());
        let n_layers = params.len() / 2;
        for i in 0..n_layers {
            h = linear(tape, h, params[2 * i], params[2 * i + 1])?;
            if i + 1 < n_layers {
                h = tape.sin_scaled(h, c.omega);
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldmodels::evaluate;

    #[test]
    fn width_table_with_floor_rule() {
        let w: Vec<usize> = budget::STANDARD_BUDGETS
            .iter()
            .map(|&p| SirenConfig::for_budget(p, 2, 1).unwrap().width)
            .collect();
        // 3e6 solves to exactly 999 under the floor rule
        assert_eq!(w, [56, 99, 181, 315, 576, 999]);
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut m = SirenModel::new(SirenConfig::for_budget(10_000, 2, 1).unwrap(), 1).unwrap();
        let n = m.params.len();
        for (i, p) in m.params_mut().iter_mut().enumerate() {
            let v = if i == n - 1 { 0.25 } else { 0.0 };
            p.data_mut().iter_mut().for_each(|x| *x = v);
        }
        let q = Tensor::new(vec![2, 2], vec![0.3, -0.2, 0.9, 0.1]).unwrap();
        assert_eq!(evaluate(&m, &q).unwrap().data(), &[0.25, 0.25]);
    }
}
