use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{gemm, trig, CustomOp, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::layers::{default_dense, mlp_params};
use super::{budget, check_coords, check_param_vars, CoordBatch, FieldModel, ModelConfig};

/// Complex Gabor-wavelet MLP with weights stored as real/imaginary pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireConfig {
    pub d_in: usize,
    pub d_out: usize,
    pub width: usize,
    /// Hidden `width -> width` layers after the first.
    pub layers: usize,
    pub omega: f64,
    pub s: f64,
}

impl WireConfig {
    /// Every complex entry counts as two real parameters, so the width solves
    /// the quadratic at half the budget.
    pub fn for_budget(budget: usize, d_in: usize, d_out: usize) -> Result<Self> {
        let layers = 2;
        let width = budget::solve_hidden_width(&budget::ParameterBudget {
            target: budget / 2,
            layers,
            d_in,
            d_enc: d_in,
            d_out,
            params_enc: 0,
        })?;
        Ok(WireConfig {
            d_in,
            d_out,
            width,
            layers,
            omega: 15.0,
            s: 10.0,
        })
    }

    pub fn param_count(&self) -> usize {
        2 * mlp_params(self.d_in, self.width, self.layers, self.d_out)
    }
}

/// `ψ(a + jb) = exp(jω z) exp(-|s z|²)` as `(re, im)`.
pub fn wire_activation(a: f64, b: f64, omega: f64, s: f64) -> (f64, f64) {
    let env = (-omega * b - s * s * (a * a + b * b)).exp();
    let (sn, cs) = trig::sin_cos(omega * a);
    (env * cs, env * sn)
}

pub struct WireModel {
    config: ModelConfig,
    seed: u64,
    /// Per layer: `w_re, w_im, b_re, b_im`.
    params: Vec<Tensor>,
}

impl WireModel {
    pub fn new(c: WireConfig, seed: u64) -> Result<Self> {
        if c.width == 0 || c.d_in == 0 || c.d_out == 0 {
            return Err(Error::build(format!("invalid WIRE config {c:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut push = |rng: &mut ChaCha8Rng, fi: usize, fo: usize| {
            let [wr, br] = default_dense(rng, fi, fo);
            let [wi, bi] = default_dense(rng, fi, fo);
            params.extend([wr, wi, br, bi]);
        };
        push(&mut rng, c.d_in, c.width);
        for _ in 0..c.layers {
            push(&mut rng, c.width, c.width);
        }
        push(&mut rng, c.width, c.d_out);
        Ok(WireModel {
            config: ModelConfig::Wire(c),
            seed,
            params,
        })
    }

    fn cfg(&self) -> &WireConfig {
        match &self.config {
            ModelConfig::Wire(c) => c,
            _ => unreachable!(),
        }
    }
}

/// A complex linear layer on `[re | im]` column blocks, lowered to one real
/// product with the block matrix `[[Wr, Wi], [-Wi, Wr]]`.
///
/// Inputs are `h, w_re, w_im, b_re, b_im`. A real input carries only the `re`
/// block; a real output keeps only the real part.
struct ComplexLinear {
    real_input: bool,
    real_output: bool,
}

impl ComplexLinear {
    fn block(&self, wr: &Tensor, wi: &Tensor) -> Result<(Vec<f64>, usize, usize)> {
        let (fi, fo) = wr.dims2()?;
        let rows = if self.real_input { fi } else { 2 * fi };
        let cols = if self.real_output { fo } else { 2 * fo };
        let mut m = vec![0.0; rows * cols];
        for i in 0..fi {
            for j in 0..fo {
                let (r, im) = (wr.data()[i * fo + j], wi.data()[i * fo + j]);
                m[i * cols + j] = r;
                if !self.real_output {
                    m[i * cols + fo + j] = im;
                }
                if !self.real_input {
                    m[(fi + i) * cols + j] = -im;
                    if !self.real_output {
                        m[(fi + i) * cols + fo + j] = r;
                    }
                }
            }
        }
        Ok((m, rows, cols))
    }

    fn forward(&self, h: &Tensor, wr: &Tensor, wi: &Tensor, br: &Tensor, bi: &Tensor) -> Result<Tensor> {
        let (n, hc) = h.dims2()?;
        let (m, rows, cols) = self.block(wr, wi)?;
        if hc != rows {
            return Err(Error::build(format!("complex layer expects {rows} input columns, got {hc}")));
        }
        let mut out = gemm(h.data(), (n, hc), false, &m, (rows, cols), false);
        let fo = br.len();
        for row in out.chunks_mut(cols) {
            for j in 0..fo {
                row[j] += br.data()[j];
                if !self.real_output {
                    row[fo + j] += bi.data()[j];
                }
            }
        }
        Tensor::new(vec![n, cols], out)
    }
}

impl CustomOp for ComplexLinear {
    fn name(&self) -> &'static str {
        "complex_linear"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let (h, wr, wi) = (inputs[0], inputs[1], inputs[2]);
        let (n, hc) = h.dims2()?;
        let (fi, fo) = wr.dims2()?;
        let (m, rows, cols) = self.block(wr, wi)?;
        let gh = needs[0].then(|| Tensor::new(vec![n, hc], gemm(g.data(), (n, cols), false, &m, (rows, cols), true)));
        let gm = gemm(h.data(), (n, hc), true, g.data(), (n, cols), false);
        let at = |r: usize, c: usize| gm[r * cols + c];
        let mut gwr = vec![0.0; fi * fo];
        let mut gwi = vec![0.0; fi * fo];
        for i in 0..fi {
            for j in 0..fo {
                let mut r = at(i, j);
                let mut im = 0.0;
                if !self.real_output {
                    im += at(i, fo + j);
                }
                if !self.real_input {
                    im -= at(fi + i, j);
                    if !self.real_output {
                        r += at(fi + i, fo + j);
                    }
                }
                gwr[i * fo + j] = r;
                gwi[i * fo + j] = im;
            }
        }
        let mut gbr = vec![0.0; fo];
        let mut gbi = vec![0.0; fo];
        for row in g.data().chunks(cols) {
            for j in 0..fo {
                gbr[j] += row[j];
                if !self.real_output {
                    gbi[j] += row[fo + j];
                }
            }
        }
        Ok(vec![
            gh.transpose()?,
            Some(Tensor::new(vec![fi, fo], gwr)?),
            Some(Tensor::new(vec![fi, fo], gwi)?),
            Some(Tensor::new(vec![fo], gbr)?),
            Some(Tensor::new(vec![fo], gbi)?),
        ])
    }
}

/// Elementwise Gabor wavelet on `[re | im]` column blocks.
struct Gabor {
    omega: f64,
    s: f64,
}

impl Gabor {
    fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let (n, c) = z.dims2()?;
        let w = c / 2;
        let mut out = vec![0.0; n * c];
        for r in 0..n {
            let (zi, yo) = (&z.data()[r * c..(r + 1) * c], &mut out[r * c..(r + 1) * c]);
            for j in 0..w {
                let (re, im) = wire_activation(zi[j], zi[w + j], self.omega, self.s);
                yo[j] = re;
                yo[w + j] = im;
            }
        }
        Tensor::new(vec![n, c], out)
    }
}

impl CustomOp for Gabor {
    fn name(&self) -> &'static str {
        "gabor"
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, g: &Tensor, _needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let z = inputs[0];
        let (n, c) = z.dims2()?;
        let w = c / 2;
        let (om, s2) = (self.omega, self.s * self.s);
        let mut gz = vec![0.0; n * c];
        for r in 0..n {
            let span = r * c..(r + 1) * c;
            let (zi, y, gy) = (&z.data()[span.clone()], &output.data()[span.clone()], &g.data()[span]);
            for j in 0..w {
                let (a, b) = (zi[j], zi[w + j]);
                let (yr, yi) = (y[j], y[w + j]);
                let (gr, gi) = (gy[j], gy[w + j]);
                gz[r * c + j] = gr * (-2.0 * s2 * a * yr - om * yi) + gi * (-2.0 * s2 * a * yi + om * yr);
                gz[r * c + w + j] = (-om - 2.0 * s2 * b) * (gr * yr + gi * yi);
            }
        }
        Ok(vec![Some(Tensor::new(vec![n, c], gz)?)])
    }
}

fn complex_layer(tape: &mut Tape, op: ComplexLinear, h: Var, p: [Var; 4]) -> Result<Var> {
    let out = op.forward(tape.value(h), tape.value(p[0]), tape.value(p[1]), tape.value(p[2]), tape.value(p[3]))?;
    Ok(tape.custom(Box::new(op), &[h, p[0], p[1], p[2], p[3]], out))
}

fn gabor(tape: &mut Tape, z: Var, omega: f64, s: f64) -> Result<Var> {
    let op = Gabor { omega, s };
    let out = op.forward(tape.value(z))?;
    Ok(tape.custom(Box::new(op), &[z], out))
}

impl FieldModel for WireModel {
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
        let n = self.params.len() / 4;
        (0..n)
            .flat_map(|i| [format!("w{i}_re"), format!("w{i}_im"), format!("b{i}_re"), format!("b{i}_im")])
            .collect()
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &CoordBatch) -> Result<Var> {
        check_param_vars(self, params)?;
        let c = self.cfg();
        check_coords(batch, c.d_in)?;
        let q = tape.constant(batch.coords().clone());
        let n_layers = params.len() / 4;
        let p = |i: usize| [params[4 * i], params[4 * i + 1], params[4 * i + 2], params[4 * i + 3]];
        let mut h = q;
        for i in 0..n_layers {
            let last = i + 1 == n_layers;
            let op = ComplexLinear {
                real_input: i == 0,
                real_output: last,
            };
            let z = complex_layer(tape, op, h, p(i))?;
            if last {
                return Ok(z);
            }
            h = gabor(tape, z, c.omega, c.s)?;
        }
        unreachable!("WIRE always has an output layer")
    }
}
