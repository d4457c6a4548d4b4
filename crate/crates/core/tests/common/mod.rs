#![allow(dead_code)]

use inrbench::diffcore::{finite_diff_check, GradCheck, Probe, Tensor};
use inrbench::fieldmodels::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_coords(n: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[n, d], |_| rng.random_range(-0.95..0.95))
}

/// Small instances of every model kind with non-trivial parameters.
pub fn small_models() -> Vec<Box<dyn FieldModel>> {
    let configs = vec![
        ModelConfig::Grid(GridConfig { resolution: vec![6, 5], channels: 2 }),
        ModelConfig::Grid(GridConfig { resolution: vec![3, 4, 3], channels: 1 }),
        ModelConfig::Ffn(FfnConfig { d_in: 2, d_out: 1, m: 8, sigma: 2.0, width: 4, layers: 2 }),
        ModelConfig::Siren(SirenConfig { d_in: 2, d_out: 1, width: 6, layers: 3, omega: 90.0 }),
        ModelConfig::Wire(WireConfig { d_in: 2, d_out: 1, width: 4, layers: 2, omega: 15.0, s: 10.0 }),
        ModelConfig::GaPlanes(GaPlanesConfig { dim: 2, d_out: 1, features: 3, line_res: 7, plane_res: 4, volume_res: 2 }),
        ModelConfig::GaPlanes(GaPlanesConfig { dim: 3, d_out: 2, features: 2, line_res: 5, plane_res: 3, volume_res: 2 }),
        ModelConfig::HashGrid(HashGridConfig { dim: 2, d_out: 1, levels: 4, features: 2, log2_table: 5, n_min: 2, n_max: 12 }),
        ModelConfig::GSplat2d(GSplatConfig { d_out: 3, count: 6, dilation: 1e-3, alpha_max: 0.99, cull: 1e-10, tiles: 2 }),
        ModelConfig::Bacon(BaconConfig { d_in: 2, d_out: 1, width: 4, filters: 4, band: 2 }),
    ];
    configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut m = build(c, 100 + i as u64).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7 + i as u64);
            match c.kind() {
                ModelKind::Grid => {
                    for p in m.params_mut() {
                        p.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
                    }
                }
                ModelKind::GSplat2d => {
                    // wide splats keep every pixel inside several footprints
                    for v in m.params_mut()[1].data_mut() {
                        *v = rng.random_range(-1.2..-0.6);
                    }
                    for v in m.params_mut()[3].data_mut() {
                        *v = rng.random_range(-1.5..0.5);
                    }
                }
                ModelKind::Wire => {
                    // keep pre-activations inside the Gaussian envelope
                    for p in m.params_mut() {
                        p.data_mut().iter_mut().for_each(|v| *v *= 0.15);
                    }
                }
                _ => {}
            }
            m
        })
        .collect()
}

/// Finite-difference check of `sum(w ⊙ model(coords))` with random readout weights.
pub fn grad_check_model(model: &dyn FieldModel, coords: &Tensor, probe: Probe) -> GradCheck {
    let batch = CoordBatch::new(coords.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let readout = Tensor::from_fn(&[coords.shape()[0], model.d_out()], |_| rng.random_range(-1.0..1.0));
    finite_diff_check(
        |tape, vars| {
            let out = model.forward(tape, vars, &batch)?;
            let w = tape.constant(readout.clone());
            let prod = tape.mul(out, w)?;
            Ok(tape.sum(prod))
        },
        model.params(),
        1e-4,
        probe,
    )
    .unwrap()
}
