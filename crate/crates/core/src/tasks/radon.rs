use std::f64::consts::PI;
use std::sync::Arc;

use crate::diffcore::{SparseMatrix, Tensor};
use crate::error::{Error, Result};
use crate::signals::SampledSignal;

/// Parallel-beam projector over a 2D lattice stored row-major as `[cells, C]`.
///
/// Pixel `(r, c)` has center `x = c + 0.5 - W/2`, `y = H/2 - r - 0.5`. The
/// ray for angle `θ` and detector `k` visits `p = t·(cos θ, sin θ) +
/// s·(-sin θ, cos θ)` at `S = ceil(√2·max(H, W))` unit-spaced `s`, sampling
/// the lattice bilinearly with zero outside it.
#[derive(Clone, Debug)]
pub struct RadonOperator {
    pub height: usize,
    pub width: usize,
    pub n_angles: usize,
    pub n_detectors: usize,
    pub samples: usize,
    matrix: Arc<SparseMatrix>,
}

/// Projection angle `a` of `n` uniformly spaced in `[0, π)`.
pub fn angle(a: usize, n: usize) -> f64 {
    PI * a as f64 / n as f64
}

/// Detector offset `k` of `n`, in pixels from the rotation center.
pub fn detector_offset(k: usize, n: usize) -> f64 {
    k as f64 + 0.5 - n as f64 / 2.0
}

pub fn ray_samples(height: usize, width: usize) -> usize {
    (2f64.sqrt() * height.max(width) as f64).ceil() as usize
}

impl RadonOperator {
    pub fn new(resolution: &[usize], n_angles: usize, n_detectors: usize) -> Result<Self> {
        let &[h, w] = resolution else {
            return Err(Error::Unsupported(format!(
                "CT projection needs a 2D lattice, got {}D",
                resolution.len()
            )));
        };
        if h == 0 || w == 0 || n_angles == 0 || n_detectors == 0 {
            return Err(Error::build("CT geometry needs nonzero extents, angles and detectors"));
        }
        let s_count = ray_samples(h, w);
        let mut entries = Vec::with_capacity(n_angles * n_detectors * s_count * 4);
        for a in 0..n_angles {
            let (sn, cs) = angle(a, n_angles).sin_cos();
            for k in 0..n_detectors {
                let row = a * n_detectors + k;
                let t = detector_offset(k, n_detectors);
                for j in 0..s_count {
                    let s = detector_offset(j, s_count);
                    let x = t * cs - s * sn;
                    let y = t * sn + s * cs;
                    push_bilinear(&mut entries, row, h, w, x, y);
                }
            }
        }
        let matrix = SparseMatrix::from_triplets(n_angles * n_detectors, h * w, entries)?;
        Ok(RadonOperator {
            height: h,
            width: w,
            n_angles,
            n_detectors,
            samples: s_count,
            matrix: Arc::new(matrix),
        })
    }

    /// Angles × detectors with one detector per image column.
    pub fn for_signal(resolution: &[usize], n_angles: usize) -> Result<Self> {
        let w = resolution.get(1).copied().unwrap_or(0);
        Self::new(resolution, n_angles, w)
    }

    pub fn matrix(&self) -> &Arc<SparseMatrix> {
        &self.matrix
    }

    /// Sinogram `[angles·detectors, C]` (row `a·detectors + k`).
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        self.matrix.apply(image)
    }

    /// Back-projection, the exact transpose of [`RadonOperator::forward`].
    pub fn adjoint(&self, sinogram: &Tensor) -> Result<Tensor> {
        self.matrix.apply_transpose(sinogram)
    }
}

fn push_bilinear(entries: &mut Vec<(usize, usize, f64)>, row: usize, h: usize, w: usize, x: f64, y: f64) {
    let u = x + w as f64 / 2.0 - 0.5;
    let v = h as f64 / 2.0 - 0.5 - y;
    let (u0, v0) = (u.floor(), v.floor());
    let (fu, fv) = (u - u0, v - v0);
    for (dv, wv) in [(0, 1.0 - fv), (1, fv)] {
        for (du, wu) in [(0, 1.0 - fu), (1, fu)] {
            let (r, c) = (v0 as i64 + dv, u0 as i64 + du);
            let wt = wu * wv;
            if wt != 0.0 && r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                entries.push((row, r as usize * w + c as usize, wt));
            }
        }
    }
}

/// Sinogram of a 2D signal with `n_angles` uniform angles in `[0, π)`.
pub fn radon_forward(signal: &SampledSignal, n_angles: usize, n_detectors: usize) -> Result<Tensor> {
    RadonOperator::new(signal.resolution(), n_angles, n_detectors)?.forward(&signal.to_tensor())
}
