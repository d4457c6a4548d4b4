use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffcore::{CustomOp, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::{budget, check_coords, check_param_vars, CoordBatch, FieldModel, ModelConfig};

/// Anisotropic Gaussians with 3D means, scales and rotations, projected
/// orthographically onto the image plane and alpha-composited front to back
/// in depth order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GSplatConfig {
    pub d_out: usize,
    pub count: usize,
    /// Isotropic variance added to every projected covariance.
    pub dilation: f64,
    /// Upper clamp on per-pixel alpha.
    pub alpha_max: f64,
    /// Contributions with `α·G` below this are skipped.
    pub cull: f64,
    /// Tiles per axis for binning splats.
    pub tiles: usize,
}

impl GSplatConfig {
    pub fn for_budget(budget: usize, resolution: &[usize], d_out: usize) -> Result<Self> {
        if resolution.len() != 2 {
            return Err(Error::Unsupported("Gaussian splatting is 2D only".into()));
        }
        let px = 2.0 / *resolution.iter().max().unwrap() as f64;
        Ok(GSplatConfig {
            d_out,
            count: budget::gsplat_count(budget, d_out)?,
            dilation: 0.3 * px * px,
            alpha_max: 0.99,
            cull: 1e-10,
            tiles: 16,
        })
    }

    pub fn param_count(&self) -> usize {
        self.count * budget::gsplat_params_per_gaussian(self.d_out)
    }
}

/// Parameter tensor order.
const MEANS: usize = 0;
const LOG_SCALES: usize = 1;
const QUATS: usize = 2;
const OPACITY: usize = 3;
const COLORS: usize = 4;

pub struct GSplatModel {
    config: ModelConfig,
    seed: u64,
    params: Vec<Tensor>,
}

impl GSplatModel {
    /// Means uniform in `[-1, 1]^3`, scales `1/√N`, random unit rotations,
    /// opacity 0.5, colors `U(0, 1)`.
    pub fn new(c: GSplatConfig, seed: u64) -> Result<Self> {
        if c.count == 0 || c.d_out == 0 || c.tiles == 0 || !(c.alpha_max > 0.0 && c.alpha_max < 1.0) {
            return Err(Error::build(format!("invalid splat config {c:?}")));
        }
        let n = c.count;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = Tensor::from_fn(&[n, 3], |_| rng.random_range(-1.0..1.0));
        let ls = -0.5 * (n as f64).ln();
        let log_scales = Tensor::full(&[n, 3], ls);
        let mut quats = Tensor::zeros(&[n, 4]);
        for row in quats.data_mut().chunks_mut(4) {
            let mut norm = 0.0;
            while norm < 1e-6 {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let opacity = Tensor::zeros(&[n, 1]);
        let colors = Tensor::from_fn(&[n, c.d_out], |_| rng.random_range(0.0..1.0));
        Ok(GSplatModel {
            config: ModelConfig::GSplat2d(c),
            seed,
            params: vec![means, log_scales, quats, opacity, colors],
        })
    }

    fn cfg(&self) -> &GSplatConfig {
        match &self.config {
            ModelConfig::GSplat2d(c) => c,
            _ => unreachable!(),
        }
    }
}

#[derive(Clone, Debug)]
struct Splat {
    mu: [f64; 2],
    conic: [f64; 3],
    alpha: f64,
    rot: [[f64; 3]; 3],
    scale2: [f64; 3],
    qhat: [f64; 4],
    qnorm: f64,
    half: [f64; 2],
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn rotation(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn project(c: &GSplatConfig, params: &[&Tensor]) -> Result<Vec<Splat>> {
    let n = c.count;
    let m = params[MEANS].data();
    let ls = params[LOG_SCALES].data();
    let qs = params[QUATS].data();
    let op = params[OPACITY].data();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let q = [qs[4 * i], qs[4 * i + 1], qs[4 * i + 2], qs[4 * i + 3]];
        let qnorm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(qnorm > 1e-12) {
            return Err(Error::build(format!("splat {i} has a degenerate quaternion")));
        }
        let qhat = q.map(|v| v / qnorm);
        let rot = rotation(qhat);
        let scale2 = [0, 1, 2].map(|k| (2.0 * ls[3 * i + k]).exp());
        let cov = |a: usize, b: usize| (0..3).map(|k| rot[a][k] * rot[b][k] * scale2[k]).sum::<f64>();
        let s00 = cov(0, 0) + c.dilation;
        let s01 = cov(0, 1);
        let s11 = cov(1, 1) + c.dilation;
        let det = s00 * s11 - s01 * s01;
        let alpha = sigmoid(op[i]);
        let k = if alpha > c.cull { 2.0 * (alpha / c.cull).ln() } else { 0.0 };
        out.push(Splat {
            mu: [m[3 * i], m[3 * i + 1]],
            conic: [s11 / det, -s01 / det, s00 / det],
            alpha,
            rot,
            scale2,
            qhat,
            qnorm,
            half: [(k * s00).sqrt(), (k * s11).sqrt()],
        });
    }
    Ok(out)
}

/// Splats projected and binned into tiles, in depth order.
struct Raster {
    splats: Vec<Splat>,
    tiles: Vec<Vec<usize>>,
    b: usize,
}

fn tile_coord(x: f64, b: usize) -> usize {
    (((x + 1.0) / 2.0 * b as f64).floor().max(0.0) as usize).min(b - 1)
}

impl Raster {
    fn new(c: &GSplatConfig, params: &[&Tensor]) -> Result<Raster> {
        let splats = project(c, params)?;
        let depth = params[MEANS].data();
        let mut order: Vec<usize> = (0..c.count).collect();
        order.sort_by(|&a, &b| depth[3 * a + 2].total_cmp(&depth[3 * b + 2]).then(a.cmp(&b)));
        let b = c.tiles;
        let mut tiles = vec![Vec::new(); b * b];
        for &i in &order {
            let s = &splats[i];
            if s.alpha <= c.cull {
                continue;
            }
            let lo = [tile_coord(s.mu[0] - s.half[0], b), tile_coord(s.mu[1] - s.half[1], b)];
            let hi = [tile_coord(s.mu[0] + s.half[0], b), tile_coord(s.mu[1] + s.half[1], b)];
            for t0 in lo[0]..=hi[0] {
                for t1 in lo[1]..=hi[1] {
                    tiles[t0 * b + t1].push(i);
                }
            }
        }
        Ok(Raster { splats, tiles, b })
    }

    /// Contributions `(splat, G, a, clamped)` at `p`, front to back.
    fn contributions(&self, c: &GSplatConfig, p: [f64; 2], out: &mut Vec<(usize, f64, f64, bool)>) {
        out.clear();
        let t = tile_coord(p[0], self.b) * self.b + tile_coord(p[1], self.b);
        for &i in &self.tiles[t] {
            let s = &self.splats[i];
            let d = [p[0] - s.mu[0], p[1] - s.mu[1]];
            let power = -0.5 * (s.conic[0] * d[0] * d[0] + 2.0 * s.conic[1] * d[0] * d[1] + s.conic[2] * d[1] * d[1]);
            let g = power.exp();
            let a = s.alpha * g;
            if a < c.cull {
                continue;
            }
            if a > c.alpha_max {
                out.push((i, g, c.alpha_max, true));
            } else {
                out.push((i, g, a, false));
            }
        }
    }
}

fn render(c: &GSplatConfig, raster: &Raster, colors: &Tensor, coords: &Tensor) -> Tensor {
    let (n, _) = coords.dims2().expect("2D coordinates");
    let ch = c.d_out;
    let col = colors.data();
    let mut out = vec![0.0; n * ch];
    let mut buf = Vec::new();
    for r in 0..n {
        let p = [coords.data()[2 * r], coords.data()[2 * r + 1]];
        raster.contributions(c, p, &mut buf);
        let mut t = 1.0;
        for &(i, _, a, _) in &buf {
            for k in 0..ch {
                out[r * ch + k] += col[i * ch + k] * a * t;
            }
            t *= 1.0 - a;
        }
    }
    Tensor::new(vec![n, ch], out).expect("render shape")
}

/// Per-pixel loop over every splat in depth order with no tiling or culling.
pub fn gaussian_naive_render(config: &GSplatConfig, params: &[Tensor], coords: &Tensor) -> Result<Tensor> {
    let refs: Vec<&Tensor> = params.iter().collect();
    let splats = project(config, &refs)?;
    let depth = params[MEANS].data();
    let mut order: Vec<usize> = (0..config.count).collect();
    order.sort_by(|&a, &b| depth[3 * a + 2].total_cmp(&depth[3 * b + 2]).then(a.cmp(&b)));
    let (n, _) = coords.dims2()?;
    let ch = config.d_out;
    let col = params[COLORS].data();
    let mut out = vec![0.0; n * ch];
    for r in 0..n {
        let (py, px) = (coords.data()[2 * r], coords.data()[2 * r + 1]);
        let mut t = 1.0;
        for &i in &order {
            let s = &splats[i];
            let d = [py - s.mu[0], px - s.mu[1]];
            let q = s.conic[0] * d[0] * d[0] + 2.0 * s.conic[1] * d[0] * d[1] + s.conic[2] * d[1] * d[1];
            let a = (s.alpha * (-0.5 * q).exp()).min(config.alpha_max);
            for k in 0..ch {
                out[r * ch + k] += col[i * ch + k] * a * t;
            }
            t *= 1.0 - a;
        }
    }
    Tensor::new(vec![n, ch], out)
}

struct RasterizeOp {
    config: GSplatConfig,
    raster: Raster,
    coords: Tensor,
}

impl CustomOp for RasterizeOp {
    fn name(&self) -> &'static str {
        "gsplat_rasterize"
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad_output: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let c = &self.config;
        let n = c.count;
        let ch = c.d_out;
        let col = inputs[COLORS].data();
        let mut d_mu = vec![[0.0f64; 2]; n];
        let mut d_conic = vec![[0.0f64; 3]; n];
        let mut d_alpha = vec![0.0f64; n];
        let mut d_col = vec![0.0f64; n * ch];
        let rows = self.coords.shape()[0];
        let mut buf = Vec::new();
        let mut ts = Vec::new();
        let mut acc = vec![0.0; ch];
        for r in 0..rows {
            let g = &grad_output.data()[r * ch..(r + 1) * ch];
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let p = [self.coords.data()[2 * r], self.coords.data()[2 * r + 1]];
            self.raster.contributions(c, p, &mut buf);
            ts.clear();
            let mut t = 1.0;
            for &(_, _, a, _) in &buf {
                ts.push(t);
                t *= 1.0 - a;
            }
            acc.iter_mut().for_each(|v| *v = 0.0);
            for (k, &(i, gv, a, clamped)) in buf.iter().enumerate().rev() {
                let tk = ts[k];
                let mut dl_da = 0.0;
                for j in 0..ch {
                    let cij = col[i * ch + j];
                    d_col[i * ch + j] += g[j] * a * tk;
                    dl_da += g[j] * (cij * tk - acc[j] / (1.0 - a));
                    acc[j] += cij * a * tk;
                }
                if clamped {
                    continue;
                }
                let s = &self.raster.splats[i];
                d_alpha[i] += dl_da * gv;
                let dg = dl_da * s.alpha * gv;
                let d = [p[0] - s.mu[0], p[1] - s.mu[1]];
                d_mu[i][0] += dg * (s.conic[0] * d[0] + s.conic[1] * d[1]);
                d_mu[i][1] += dg * (s.conic[1] * d[0] + s.conic[2] * d[1]);
                d_conic[i][0] += dg * (-0.5 * d[0] * d[0]);
                d_conic[i][1] += dg * (-d[0] * d[1]);
                d_conic[i][2] += dg * (-0.5 * d[1] * d[1]);
            }
        }

        let mut g_means = Tensor::zeros(&[n, 3]);
        let mut g_ls = Tensor::zeros(&[n, 3]);
        let mut g_q = Tensor::zeros(&[n, 4]);
        let mut g_op = Tensor::zeros(&[n, 1]);
        for i in 0..n {
            let s = &self.raster.splats[i];
            g_means.data_mut()[3 * i] = d_mu[i][0];
            g_means.data_mut()[3 * i + 1] = d_mu[i][1];
            g_op.data_mut()[i] = d_alpha[i] * s.alpha * (1.0 - s.alpha);

            // conic = inverse of the 2x2 covariance
            let a = [[s.conic[0], s.conic[1]], [s.conic[1], s.conic[2]]];
            let ga = [[d_conic[i][0], 0.5 * d_conic[i][1]], [0.5 * d_conic[i][1], d_conic[i][2]]];
            let mut gs = [[0.0; 2]; 2];
            for u in 0..2 {
                for v in 0..2 {
                    let mut sum = 0.0;
                    for x in 0..2 {
                        for y in 0..2 {
                            sum += a[u][x] * ga[x][y] * a[y][v];
                        }
                    }
                    gs[u][v] = -sum;
                }
            }
            // covariance = top-left of R diag(scale2) R^T
            let mut g3 = [[0.0; 3]; 3];
            g3[0][0] = gs[0][0];
            g3[0][1] = gs[0][1];
            g3[1][0] = gs[1][0];
            g3[1][1] = gs[1][1];
            let r = &s.rot;
            for k in 0..3 {
                let mut dd = 0.0;
                for u in 0..3 {
                    for v in 0..3 {
                        dd += g3[u][v] * r[u][k] * r[v][k];
                    }
                }
                g_ls.data_mut()[3 * i + k] = dd * 2.0 * s.scale2[k];
            }
            let mut gr = [[0.0; 3]; 3];
            for u in 0..3 {
                for k in 0..3 {
                    gr[u][k] = 2.0 * (0..3).map(|v| g3[u][v] * r[v][k]).sum::<f64>() * s.scale2[k];
                }
            }
            let [w, x, y, z] = s.qhat;
            let dw = [[0.0, -2.0 * z, 2.0 * y], [2.0 * z, 0.0, -2.0 * x], [-2.0 * y, 2.0 * x, 0.0]];
            let dx = [[0.0, 2.0 * y, 2.0 * z], [2.0 * y, -4.0 * x, -2.0 * w], [2.0 * z, 2.0 * w, -4.0 * x]];
            let dy = [[-4.0 * y, 2.0 * x, 2.0 * w], [2.0 * x, 0.0, 2.0 * z], [-2.0 * w, 2.0 * z, -4.0 * y]];
            let dz = [[-4.0 * z, -2.0 * w, 2.0 * x], [2.0 * w, -4.0 * z, 2.0 * y], [2.0 * x, 2.0 * y, 0.0]];
            let contract = |m: &[[f64; 3]; 3]| -> f64 {
                (0..3).map(|u| (0..3).map(|v| gr[u][v] * m[u][v]).sum::<f64>()).sum()
            };
            let gh = [contract(&dw), contract(&dx), contract(&dy), contract(&dz)];
            let dot: f64 = gh.iter().zip(&s.qhat).map(|(a, b)| a * b).sum();
            for k in 0..4 {
                g_q.data_mut()[4 * i + k] = (gh[k] - s.qhat[k] * dot) / s.qnorm;
            }
        }
        Ok(vec![
            Some(g_means),
            Some(g_ls),
            Some(g_q),
            Some(g_op),
            Some(Tensor::new(vec![n, ch], d_col)?),
        ])
    }
}

impl FieldModel for GSplatModel {
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
        ["means", "log_scales", "quaternions", "opacity_logits", "colors"].map(String::from).to_vec()
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], batch: &CoordBatch) -> Result<Var> {
        check_param_vars(self, params)?;
        check_coords(batch, 2)?;
        let c = self.cfg().clone();
        let values: Vec<&Tensor> = params.iter().map(|&v| tape.value(v)).collect();
        let raster = Raster::new(&c, &values)?;
        let out = render(&c, &raster, values[COLORS], batch.coords());
        let op = RasterizeOp {
            config: c,
            raster,
            coords: batch.coords().clone(),
        };
        Ok(tape.custom(Box::new(op), params, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldmodels::evaluate;
    use crate::signals::lattice_coords;

    fn small(count: usize) -> GSplatModel {
        let c = GSplatConfig {
            d_out: 3,
            count,
            dilation: 1e-4,
            alpha_max: 0.99,
            cull: 1e-10,
            tiles: 4,
        };
        GSplatModel::new(c, 9).unwrap()
    }

    #[test]
    fn matches_naive_render() {
        let mut m = small(40);
        for v in m.params[LOG_SCALES].data_mut() {
            *v = (0.2f64).ln();
        }
        let q = lattice_coords(&[24, 24]);
        let fast = evaluate(&m, &q).unwrap();
        let slow = gaussian_naive_render(m.cfg(), m.params(), &q).unwrap();
        let err = fast.data().iter().zip(slow.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn zero_opacity_is_black() {
        let mut m = small(10);
        m.params[OPACITY].data_mut().iter_mut().for_each(|v| *v = -60.0);
        let out = evaluate(&m, &lattice_coords(&[8, 8])).unwrap();
        assert!(out.data().iter().all(|&v| v.abs() < 1e-20));
    }

    #[test]
    fn single_splat_peaks_at_its_mean() {
        let mut m = small(1);
        m.params[MEANS].data_mut().copy_from_slice(&[0.25, -0.25, 0.0]);
        m.params[OPACITY].data_mut()[0] = 3.0;
        m.params[COLORS].data_mut().copy_from_slice(&[1.0, 1.0, 1.0]);
        let q = Tensor::new(vec![2, 2], vec![0.25, -0.25, 0.3, -0.25]).unwrap();
        let out = evaluate(&m, &q).unwrap();
        assert!((out.data()[0] - sigmoid(3.0)).abs() < 1e-12);
        assert!(out.data()[3] < out.data()[0]);
    }
}
