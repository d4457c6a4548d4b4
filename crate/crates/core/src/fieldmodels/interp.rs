use smallvec::SmallVec;

use crate::diffcore::{SparseMatrix, Tensor};
use crate::error::{Error, Result};

/// Catmull-Rom parameter of the cubic convolution kernel.
pub const CUBIC_A: f64 = -0.5;

/// 1D interpolation kernel along each lattice axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    /// Two taps, weights `1 - |x - x_i|`.
    Linear,
    /// Four taps of the cubic convolution kernel with `a = -0.5`.
    Cubic,
}

/// Cubic convolution kernel.
pub fn cubic_kernel(t: f64) -> f64 {
    let x = t.abs();
    let a = CUBIC_A;
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Continuous lattice index of normalized coordinate `q` on an `n`-cell axis;
/// lattice centers map to integers. `q` is clamped to [-1, 1].
pub fn continuous_index(q: f64, n: usize) -> f64 {
    let u = ((q.clamp(-1.0, 1.0) + 1.0) * n as f64 - 1.0) / 2.0;
    let r = u.round();
    if (u - r).abs() < 1e-9 {
        r
    } else {
        u
    }
}

pub(crate) type Taps = SmallVec<[(usize, f64); 4]>;

/// Clamped-index taps of one axis.
pub(crate) fn axis_taps(q: f64, n: usize, kernel: Kernel) -> Taps {
    let u = continuous_index(q, n);
    let i0 = u.floor();
    let t = u - i0;
    let i0 = i0 as i64;
    let clamp = |i: i64| i.clamp(0, n as i64 - 1) as usize;
    let mut taps = Taps::new();
    match kernel {
        Kernel::Linear => {
            taps.push((clamp(i0), 1.0 - t));
            if t > 0.0 {
                taps.push((clamp(i0 + 1), t));
            }
        }
        Kernel::Cubic => {
            if t == 0.0 {
                taps.push((clamp(i0), 1.0));
            } else {
                taps.push((clamp(i0 - 1), cubic_kernel(1.0 + t)));
                taps.push((clamp(i0), cubic_kernel(t)));
                taps.push((clamp(i0 + 1), cubic_kernel(1.0 - t)));
                taps.push((clamp(i0 + 2), cubic_kernel(2.0 - t)));
            }
        }
    }
    taps
}

/// Sparse `[rows, cells]` matrix sampling a row-major lattice of `extents`
/// at the coordinate columns `axes` of `coords`.
pub fn interp_matrix(coords: &Tensor, axes: &[usize], extents: &[usize], kernel: Kernel) -> Result<SparseMatrix> {
    let (rows, d) = coords.dims2()?;
    if axes.len() != extents.len() || axes.iter().any(|&a| a >= d) {
        return Err(Error::build(format!(
            "interp axes {axes:?} do not match extents {extents:?} for {d}-D coordinates"
        )));
    }
    let cells: usize = extents.iter().product();
    let mut entries = Vec::with_capacity(rows * 4usize.pow(axes.len() as u32));
    let q = coords.data();
    let mut per_axis: Vec<Taps> = Vec::with_capacity(axes.len());
    for r in 0..rows {
        per_axis.clear();
        for (&a, &n) in axes.iter().zip(extents) {
            per_axis.push(axis_taps(q[r * d + a], n, kernel));
        }
        push_products(&per_axis, extents, r, &mut entries);
    }
    SparseMatrix::from_triplets(rows, cells, entries)
}

fn push_products(per_axis: &[Taps], extents: &[usize], row: usize, out: &mut Vec<(usize, usize, f64)>) {
    fn rec(per_axis: &[Taps], extents: &[usize], axis: usize, idx: usize, w: f64, row: usize, out: &mut Vec<(usize, usize, f64)>) {
        if axis == per_axis.len() {
            out.push((row, idx, w));
            return;
        }
        for &(i, wi) in &per_axis[axis] {
            rec(per_axis, extents, axis + 1, idx * extents[axis] + i, w * wi, row, out);
        }
    }
    rec(per_axis, extents, 0, 0, 1.0, row, out);
}

/// Bicubic evaluation of a `[h*w, channels]` lattice at `[n, 2]` coordinates.
pub fn grid_eval_bicubic(grid: &Tensor, extents: [usize; 2], q: &Tensor) -> Result<Tensor> {
    interp_matrix(q, &[0, 1], &extents, Kernel::Cubic)?.apply(grid)
}

/// Trilinear evaluation of a `[d*h*w, channels]` lattice at `[n, 3]` coordinates.
pub fn grid_eval_trilinear(grid: &Tensor, extents: [usize; 3], q: &Tensor) -> Result<Tensor> {
    interp_matrix(q, &[0, 1, 2], &extents, Kernel::Linear)?.apply(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_partition_at_integers() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        for t in [0.1, 0.37, 0.5, 0.93] {
            let s = cubic_kernel(1.0 + t) + cubic_kernel(t) + cubic_kernel(1.0 - t) + cubic_kernel(2.0 - t);
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn centers_map_to_integers() {
        for n in [3, 7, 128] {
            for i in 0..n {
                let q = -1.0 + (2 * i + 1) as f64 / n as f64;
                assert_eq!(continuous_index(q, n), i as f64);
            }
        }
    }

    #[test]
    fn edge_midpoint_is_mean() {
        let g = Tensor::new(vec![8, 1], vec![0., 1., 2., 3., 4., 5., 6., 7.]).unwrap();
        // midpoint between lattice (0,0,0) and (0,0,1) of a 2x2x2 volume
        let q = Tensor::new(vec![1, 3], vec![-0.5, -0.5, 0.0]).unwrap();
        let v = grid_eval_trilinear(&g, [2, 2, 2], &q).unwrap();
        assert!((v.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_grid_is_constant() {
        let g = Tensor::full(&[25, 1], 0.3);
        let q = Tensor::new(vec![3, 2], vec![-0.99, 0.2, 0.0, 0.0, 0.77, -0.41]).unwrap();
        let v = grid_eval_bicubic(&g, [5, 5], &q).unwrap();
        assert!(v.data().iter().all(|x| (x - 0.3).abs() < 1e-14));
    }
}
