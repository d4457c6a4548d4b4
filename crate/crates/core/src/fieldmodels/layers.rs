use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::Result;

pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    if lo == hi {
        return Tensor::full(shape, lo);
    }
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Weight `[fan_in, fan_out]` and bias `[fan_out]` drawn from `U(-bound, bound)`.
pub(crate) fn dense(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, w_bound: f64, b_bound: f64) -> [Tensor; 2] {
    [
        uniform(rng, &[fan_in, fan_out], -w_bound, w_bound),
        uniform(rng, &[fan_out], -b_bound, b_bound),
    ]
}

/// Dense layer with the usual `U(±1/√fan_in)` initialization.
pub(crate) fn default_dense(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> [Tensor; 2] {
    let k = 1.0 / (fan_in as f64).sqrt();
    dense(rng, fan_in, fan_out, k, k)
}

pub(crate) fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    tape.affine(x, w, b)
}

/// Parameter count of an MLP `d_first -> x (-> x) × layers -> d_out`.
pub(crate) fn mlp_params(d_first: usize, width: usize, layers: usize, d_out: usize) -> usize {
    d_first * width + width + layers * (width * width + width) + width * d_out + d_out
}
