use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::lattice::{ravel, unravel};
use super::SampledSignal;

/// Adds i.i.d. `N(0, eps^2)` noise and clamps to [0, 1].
pub fn add_gaussian_noise(signal: &SampledSignal, eps: f64, seed: u64) -> Result<SampledSignal> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::build(format!("noise level must be >= 0, got {eps}")));
    }
    let mut out = signal.clone();
    if eps == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, eps).map_err(|e| Error::build(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.values_mut() {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Block-mean downsampling by an integer factor along every axis.
pub fn downsample(signal: &SampledSignal, factor: usize) -> Result<SampledSignal> {
    if factor == 0 {
        return Err(Error::build("downsample factor must be >= 1"));
    }
    let res = signal.resolution();
    if let Some(&bad) = res.iter().find(|&&n| n % factor != 0) {
        return Err(Error::build(format!(
            "downsample factor {factor} does not divide extent {bad}"
        )));
    }
    let out_res: Vec<usize> = res.iter().map(|&n| n / factor).collect();
    let ch = signal.channels();
    let d = res.len();
    let block = factor.pow(d as u32) as f64;
    let mut values = vec![0.0; out_res.iter().product::<usize>() * ch];
    let mut idx = vec![0usize; d];
    let mut oidx = vec![0usize; d];
    for cell in 0..signal.cells() {
        unravel(cell, res, &mut idx);
        for a in 0..d {
            oidx[a] = idx[a] / factor;
        }
        let o = ravel(&oidx, &out_res);
        for c in 0..ch {
            values[o * ch + c] += signal.values()[cell * ch + c];
        }
    }
    for v in &mut values {
        *v /= block;
    }
    SampledSignal::new(out_res, ch, values)
}

/// Overlap weights of source cells onto `m` target cells spanning the same
/// extent as `n` source cells: `(target, source, weight)` with rows summing to 1.
fn box_weights(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    let mut rows = vec![Vec::new(); m];
    for (j, row) in rows.iter_mut().enumerate() {
        let lo = j as f64 * n as f64 / m as f64;
        let hi = (j + 1) as f64 * n as f64 / m as f64;
        let mut i = lo.floor() as usize;
        while (i as f64) < hi && i < n {
            let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
            if overlap > 0.0 {
                row.push((i, overlap / (hi - lo)));
            }
            i += 1;
        }
    }
    rows
}

/// Area-weighted resampling onto an arbitrary coarser lattice.
pub fn downsample_to(signal: &SampledSignal, target: &[usize]) -> Result<SampledSignal> {
    let res = signal.resolution();
    if target.len() != res.len() || target.iter().zip(res).any(|(&m, &n)| m == 0 || m > n) {
        return Err(Error::build(format!(
            "cannot downsample {res:?} onto {target:?}"
        )));
    }
    let ch = signal.channels();
    let mut cur_res = res.to_vec();
    let mut cur = signal.values().to_vec();
    for axis in 0..res.len() {
        let (n, m) = (cur_res[axis], target[axis]);
        if n == m {
            continue;
        }
        let w = box_weights(n, m);
        let stride: usize = cur_res[axis + 1..].iter().product::<usize>() * ch;
        let outer: usize = cur_res[..axis].iter().product();
        let mut next = vec![0.0; outer * m * stride];
        for o in 0..outer {
            for (j, row) in w.iter().enumerate() {
                let dst = (o * m + j) * stride;
                for &(i, wt) in row {
                    let src = (o * n + i) * stride;
                    for s in 0..stride {
                        next[dst + s] += wt * cur[src + s];
                    }
                }
            }
        }
        cur = next;
        cur_res[axis] = m;
    }
    SampledSignal::new(cur_res, ch, cur)
}

/// Per-axis training resolution that halves the voxel count of a 3D lattice.
pub fn half_voxel_resolution(n: usize) -> usize {
    ((n as f64) / 2f64.cbrt()).round().max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let s = SampledSignal::from_fn(&[8, 8], 1, |i, _| (i[0] + i[1]) as f64 / 14.0).unwrap();
        assert_eq!(add_gaussian_noise(&s, 0.0, 1).unwrap(), s);
        assert!(add_gaussian_noise(&s, -0.1, 1).is_err());
    }

    #[test]
    fn checkerboard_block_mean() {
        let s = SampledSignal::from_fn(&[4, 4], 1, |i, _| ((i[0] + i[1]) % 2) as f64).unwrap();
        let d = downsample(&s, 4).unwrap();
        assert_eq!(d.resolution(), &[1, 1]);
        assert_eq!(d.values(), &[0.5]);
    }

    #[test]
    fn non_divisible_factor_rejected() {
        let s = SampledSignal::new(vec![6, 6], 1, vec![0.0; 36]).unwrap();
        assert!(downsample(&s, 4).is_err());
    }

    #[test]
    fn downsample_to_matches_block_mean_on_divisible() {
        let s = SampledSignal::from_fn(&[8, 8, 8], 1, |i, _| (i[0] * 64 + i[1] * 8 + i[2]) as f64 / 511.0).unwrap();
        let a = downsample(&s, 2).unwrap();
        let b = downsample_to(&s, &[4, 4, 4]).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn downsample_to_preserves_mean() {
        let s = SampledSignal::from_fn(&[32, 32, 32], 1, |i, _| ((i[0] * 7 + i[1] * 3 + i[2]) % 11) as f64 / 10.0).unwrap();
        let m = half_voxel_resolution(32);
        assert_eq!(m, 25);
        let d = downsample_to(&s, &[m, m, m]).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(s.values()) - mean(d.values())).abs() < 1e-12);
    }
}
