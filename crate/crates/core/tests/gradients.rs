mod common;

use inrbench::diffcore::{value_and_grad, Probe, Tensor};
use inrbench::fieldmodels::*;

#[test]
fn every_model_matches_central_differences() {
    for m in common::small_models() {
        let coords = common::random_coords(12, m.d_in(), 5);
        let r = common::grad_check_model(m.as_ref(), &coords, Probe::All);
        println!("{:<9} {:>5} params  max rel err {:.3e}", m.kind().name(), r.probed, r.max_rel_error);
        assert!(r.max_rel_error <= 1e-3, "{}: {:?}", m.kind(), r);
    }
}

#[test]
fn wire_on_three_coordinates() {
    let m = build(
        &ModelConfig::Wire(WireConfig { d_in: 2, d_out: 1, width: 5, layers: 2, omega: 15.0, s: 10.0 }),
        3,
    )
    .unwrap();
    let mut m = m;
    for p in m.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v *= 0.15);
    }
    let coords = Tensor::new(vec![3, 2], vec![0.05, -0.02, 0.1, 0.03, -0.04, 0.08]).unwrap();
    let r = common::grad_check_model(m.as_ref(), &coords, Probe::All);
    assert!(r.max_rel_error < 1e-3, "{r:?}");
}

#[test]
fn random_siren_five_probes() {
    let m = build(
        &ModelConfig::Siren(SirenConfig { d_in: 2, d_out: 1, width: 8, layers: 1, omega: 90.0 }),
        11,
    )
    .unwrap();
    let coords = common::random_coords(6, 2, 1);
    let r = common::grad_check_model(m.as_ref(), &coords, Probe::PerTensor(5, 3));
    assert!(r.max_rel_error < 1e-3, "{r:?}");
}

#[test]
fn hash_gradient_touches_only_blended_rows() {
    let m = build(
        &ModelConfig::HashGrid(HashGridConfig { dim: 2, d_out: 1, levels: 3, features: 2, log2_table: 6, n_min: 4, n_max: 16 }),
        2,
    )
    .unwrap();
    let q = Tensor::new(vec![1, 2], vec![0.31, -0.47]).unwrap();
    let batch = CoordBatch::new(q.clone()).unwrap();
    let (_, grads) = value_and_grad(m.params(), |tape, vars| {
        let out = m.forward(tape, vars, &batch)?;
        Ok(tape.sum(out))
    })
    .unwrap();
    for level in 0..3 {
        let g = &grads[level];
        let touched: Vec<usize> = (0..g.shape()[0])
            .filter(|&r| g.data()[2 * r] != 0.0 || g.data()[2 * r + 1] != 0.0)
            .collect();
        assert!(!touched.is_empty() && touched.len() <= 4, "level {level}: {touched:?}");
    }
}
