use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{SparseMatrix, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Tv,
}

/// A weighted term of the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub kind: LossKind,
    pub weight: f64,
}

impl LossTerm {
    pub fn new(kind: LossKind, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) {
            return Err(Error::build(format!("loss weight must be >= 0, got {weight}")));
        }
        Ok(LossTerm { kind, weight })
    }
}

/// Mean squared error between a recorded prediction and a fixed target.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: &Tensor) -> Result<Var> {
    tape.value(pred).same_shape(target, "mse_loss")?;
    let t = tape.constant(target.clone());
    let d = tape.sub(pred, t)?;
    let sq = tape.square(d);
    tape.mean(sq)
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    pred.same_shape(target, "mse")?;
    if pred.is_empty() {
        return Err(Error::build("mse of empty tensors"));
    }
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / pred.len() as f64)
}

/// Forward-difference operators, one per lattice axis with extent >= 2.
///
/// The lattice is row-major over `extents`; each operator maps `[cells]` to
/// `[differences along that axis]`.
pub fn difference_operators(extents: &[usize]) -> Result<Vec<Arc<SparseMatrix>>> {
    let cells: usize = extents.iter().product();
    let mut ops = Vec::new();
    for axis in 0..extents.len() {
        let n = extents[axis];
        if n < 2 {
            continue;
        }
        let stride: usize = extents[axis + 1..].iter().product();
        let mut entries = Vec::new();
        let mut row = 0;
        for cell in 0..cells {
            let coord = (cell / stride) % n;
            if coord + 1 < n {
                entries.push((row, cell + stride, 1.0));
                entries.push((row, cell, -1.0));
                row += 1;
            }
        }
        ops.push(Arc::new(SparseMatrix::from_triplets(row, cells, entries)?));
    }
    Ok(ops)
}

/// Anisotropic total variation of a lattice stored as `[cells, channels]`:
/// the sum over axes of the mean absolute forward difference.
pub fn tv_penalty(tape: &mut Tape, grid: Var, ops: &[Arc<SparseMatrix>]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for op in ops {
        let d = tape.sparse(op.clone(), grid)?;
        let a = tape.abs(d);
        let m = tape.mean(a)?;
        total = Some(match total {
            Some(t) => tape.add(t, m)?,
            None => m,
        });
    }
    Ok(match total {
        Some(t) => t,
        None => tape.constant(Tensor::scalar(0.0)),
    })
}

/// Value-only total variation of a `[cells]` or `[cells, channels]` lattice.
pub fn tv(grid: &Tensor, extents: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let g = tape.constant(grid.clone());
    let ops = difference_operators(extents)?;
    let v = tv_penalty(&mut tape, g, &ops)?;
    Ok(tape.value(v).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn mse_of_equal_is_zero() {
        let a = rand_tensor(&[5, 2], 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mse_of_constant_offset() {
        let a = rand_tensor(&[10], 2);
        let b = a.map(|x| x + 0.1);
        assert!((mse(&b, &a).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn mse_matches_loop_oracle() {
        let a = rand_tensor(&[7, 3], 3);
        let b = rand_tensor(&[7, 3], 4);
        let mut acc = 0.0;
        for i in 0..a.len() {
            let d = a.data()[i] - b.data()[i];
            acc += d * d;
        }
        let oracle = acc / a.len() as f64;
        let mut tape = Tape::new();
        let p = tape.param(a.clone());
        let l = mse_loss(&mut tape, p, &b).unwrap();
        assert!((tape.value(l).item() - oracle).abs() < 1e-12);
        assert!((mse(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn mse_shape_mismatch() {
        assert!(matches!(
            mse(&Tensor::zeros(&[2]), &Tensor::zeros(&[3])),
            Err(Error::Build(_))
        ));
    }

    #[test]
    fn tv_of_constant_is_zero() {
        let g = Tensor::full(&[16], 0.7);
        assert_eq!(tv(&g, &[4, 4]).unwrap(), 0.0);
    }

    #[test]
    fn tv_of_ramp_telescopes() {
        let n = 11;
        let g = Tensor::from_fn(&[n], |i| i as f64 / (n - 1) as f64);
        assert!((tv(&g, &[n]).unwrap() - 1.0 / (n - 1) as f64).abs() < 1e-12);
    }

    #[test]
    fn tv_degenerate_axis_contributes_nothing() {
        let g = Tensor::from_fn(&[5], |i| i as f64);
        assert!((tv(&g, &[1, 5]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tv_matches_double_loop() {
        let (h, w) = (8, 8);
        let g = rand_tensor(&[h * w], 9);
        let v = |i: usize, j: usize| g.data()[i * w + j];
        let mut dy = 0.0;
        for i in 0..h - 1 {
            for j in 0..w {
                dy += (v(i + 1, j) - v(i, j)).abs();
            }
        }
        let mut dx = 0.0;
        for i in 0..h {
            for j in 0..w - 1 {
                dx += (v(i, j + 1) - v(i, j)).abs();
            }
        }
        let oracle = dy / ((h - 1) * w) as f64 + dx / (h * (w - 1)) as f64;
        assert!((tv(&g, &[h, w]).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn composed_loss_is_linear() {
        let grid = rand_tensor(&[36, 1], 5);
        let target = rand_tensor(&[36, 1], 6);
        let lambda = 0.37;
        let ops = difference_operators(&[6, 6]).unwrap();
        let mut tape = Tape::new();
        let g = tape.param(grid.clone());
        let m = mse_loss(&mut tape, g, &target).unwrap();
        let t = tv_penalty(&mut tape, g, &ops).unwrap();
        let tl = tape.scale(t, lambda);
        let total = tape.add(m, tl).unwrap();
        let lhs = tape.value(total).item();
        let rhs = mse(&grid, &target).unwrap() + lambda * tv(&grid, &[6, 6]).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(LossTerm::new(LossKind::Tv, -1.0).is_err());
        assert!(LossTerm::new(LossKind::Tv, 0.0).is_ok());
    }
}
