use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{SparseMatrix, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::interp::{interp_matrix, Kernel};
use super::layers::{default_dense, linear, uniform};
use super::{budget, check_coords, check_param_vars, CoordBatch, FieldModel, ModelConfig};

/// Line, plane and (3D) volume feature grids combined multiplicatively and
/// decoded by a `f -> f -> d_out` ReLU head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaPlanesConfig {
    pub dim: usize,
    pub d_out: usize,
    pub features: usize,
    pub line_res: usize,
    pub plane_res: usize,
    /// Unused in 2D.
    pub volume_res: usize,
}

impl GaPlanesConfig {
    /// Line resolution equals the signal extent, planes 20, volume 5; the
    /// feature width absorbs the budget.
    pub fn for_budget(budget: usize, resolution: &[usize], d_out: usize) -> Result<Self> {
        let dim = resolution.len();
        let mut c = GaPlanesConfig {
            dim,
            d_out,
            features: 0,
            line_res: *resolution.iter().max().unwrap_or(&1),
            plane_res: 20,
            volume_res: 5,
        };
        c.features = budget::gaplanes_features(budget, c.cells_per_feature(), d_out)?;
        Ok(c)
    }

    pub fn cells_per_feature(&self) -> usize {
        if self.dim == 2 {
            2 * self.line_res + self.plane_res.pow(2)
        } else {
            3 * self.line_res + 3 * self.plane_res.pow(2) + self.volume_res.pow(3)
        }
    }

    pub fn param_count(&self) -> usize {
        let f = self.features;
        self.cells_per_feature() * f + f * f + f + f * self.d_out + self.d_out
    }
}

pub struct GaPlanesModel {
    config: ModelConfig,
    seed: u64,
    params: Vec<Tensor>,
}

/// Plane axis pairs in 3D, ordered so plane `k` is orthogonal to axis `k`.
const PLANES_3D: [[usize; 2]; 3] = [[1, 2], [0, 2], [0, 1]];

impl GaPlanesModel {
    /// Lines `U(0.1, 0.5)`, planes and volume `U(-0.1, 0.1)`.
    pub fn new(c: GaPlanesConfig, seed: u64) -> Result<Self> {
        if !(2..=3).contains(&c.dim) || c.features == 0 || c.line_res == 0 || c.plane_res == 0 || c.volume_res == 0 {
            return Err(Error::build(format!("invalid GA-Planes config {c:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = c.features;
        let mut params = Vec::new();
        for _ in 0..c.dim {
            params.push(uniform(&mut rng, &[c.line_res, f], 0.1, 0.5));
        }
        let planes = if c.dim == 2 { 1 } else { 3 };
        for _ in 0..planes {
            params.push(uniform(&mut rng, &[c.plane_res * c.plane_res, f], -0.1, 0.1));
        }
        if c.dim == 3 {
            params.push(uniform(&mut rng, &[c.volume_res.pow(3), f], -0.1, 0.1));
        }
        params.extend(default_dense(&mut rng, f, f));
        params.extend(default_dense(&mut rng, f, c.d_out));
        Ok(GaPlanesModel {
            config: ModelConfig::GaPlanes(c),
            seed,
            params,
        })
    }

    fn cfg(&self) -> &GaPlanesConfig {
        match &self.config {
            ModelConfig::GaPlanes(c) => c,
            _ => unreachable!(),
        }
    }
}

fn sample(tape: &mut Tape, batch: &CoordBatch, grid: Var, axes: &[usize], extents: &[usize]) -> Result<Var> {
    let key = format!("interp:Linear:{axes:?}:{extents:?}");
    let m: Arc<Arc<SparseMatrix>> = batch.cached(key, || {
        Ok(Arc::new(interp_matrix(batch.coords(), axes, extents, Kernel::Linear)?))
    })?;
    tape.sparse((*m).clone(), grid)
}

impl FieldModel for GaPlanesModel {
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
        let mut names: Vec<String> = Vec::new();
        let d = self.cfg().dim;
        for a in 0..d {
            names.push(format!("line{a}"));
        }
        if d == 2 {
            names.push("plane01".into());
        } else {
            for [a, b] in PLANES_3D {
                names.push(format!("plane{a}{b}"));
            }
            names.push("volume".into());
        }
        names.extend(["w0", "b0", "w1", "b1"].map(String::from));
        names
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &CoordBatch) -> Result<Var> {
        check_param_vars(self, params)?;
        let c = self.cfg();
        check_coords(batch, c.dim)?;
        let (lr, pr) = (c.line_res, c.plane_res);
        let e = if c.dim == 2 {
            let lx = sample(tape, batch, params[0], &[0], &[lr])?;
            let ly = sample(tape, batch, params[1], &[1], &[lr])?;
            let p = sample(tape, batch, params[2], &[0, 1], &[pr, pr])?;
            let ll = tape.mul(lx, ly)?;
            tape.add(ll, p)?
        } else {
            let l: Vec<Var> = (0..3)
                .map(|a| sample(tape, batch, params[a], &[a], &[lr]))
                .collect::<Result<_>>()?;
            let lxy = tape.mul(l[0], l[1])?;
            let mut e = tape.mul(lxy, l[2])?;
            for (k, axes) in PLANES_3D.iter().enumerate() {
                let p = sample(tape, batch, params[3 + k], axes, &[pr, pr])?;
                let lp = tape.mul(l[k], p)?;
                e = tape.add(e, lp)?;
            }
            let vr = c.volume_res;
            let v = sample(tape, batch, params[6], &[0, 1, 2], &[vr, vr, vr])?;
            tape.add(e, v)?
        };
        let k = params.len() - 4;
        let h = linear(tape, e, params[k], params[k + 1])?;
        let h = tape.relu(h);
        linear(tape, h, params[k + 2], params[k + 3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldmodels::evaluate;

    #[test]
    fn constant_features_give_decoder_of_sum() {
        let c = GaPlanesConfig {
            dim: 3,
            d_out: 1,
            features: 2,
            line_res: 4,
            plane_res: 3,
            volume_res: 2,
        };
        let mut m = GaPlanesModel::new(c, 0).unwrap();
        for p in m.params_mut().iter_mut().take(7) {
            p.data_mut().iter_mut().for_each(|x| *x = 1.0);
        }
        // e = 1 + 3 + 1 = 5 per feature
        let w0 = m.params[7].data().to_vec();
        let b0 = m.params[8].data().to_vec();
        let w1 = m.params[9].data().to_vec();
        let b1 = m.params[10].data()[0];
        let h: Vec<f64> = (0..2).map(|j| (5.0 * (w0[j] + w0[2 + j]) + b0[j]).max(0.0)).collect();
        let oracle = h[0] * w1[0] + h[1] * w1[1] + b1;
        let q = Tensor::new(vec![2, 3], vec![0.1, -0.3, 0.7, -0.9, 0.0, 0.5]).unwrap();
        let out = evaluate(&m, &q).unwrap();
        for v in out.data() {
            assert!((v - oracle).abs() < 1e-12);
        }
    }
}
