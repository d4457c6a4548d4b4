use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::lattice::unravel;
use super::Bandwidth;

/// In-place N-dimensional DFT of a row-major complex array (unnormalized in
/// both directions).
pub fn fft_nd(data: &mut [Complex<f64>], extents: &[usize], inverse: bool) {
    let total: usize = extents.iter().product();
    assert_eq!(total, data.len(), "fft_nd extents do not match the buffer");
    let mut planner = FftPlanner::<f64>::new();
    let mut line = Vec::new();
    for axis in 0..extents.len() {
        let n = extents[axis];
        if n < 2 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let stride: usize = extents[axis + 1..].iter().product();
        let outer = total / (n * stride);
        line.resize(n, Complex::new(0.0, 0.0));
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for k in 0..n {
                    line[k] = data[base + k * stride];
                }
                fft.process(&mut line);
                for k in 0..n {
                    data[base + k * stride] = line[k];
                }
            }
        }
    }
}

/// Signed frequency of DFT bin `k` out of `n`, in cycles per domain.
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Radial frequency of every bin of an `extents` lattice, row-major.
pub fn radial_frequencies(extents: &[usize]) -> Vec<f64> {
    let total: usize = extents.iter().product();
    let mut idx = vec![0usize; extents.len()];
    (0..total)
        .map(|cell| {
            unravel(cell, extents, &mut idx);
            idx.iter()
                .zip(extents)
                .map(|(&k, &n)| bin_frequency(k, n).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Nyquist frequency of an `n`-sample axis in cycles per domain.
pub fn nyquist(n: usize) -> f64 {
    n as f64 / 2.0
}

/// Radial cutoff for bandwidth label `b` on an `n`-sample axis.
///
/// Nine geometrically spaced cutoffs from `max(nyquist / 256, 1)` up to the
/// Nyquist frequency; the lower end never drops below one cycle.
pub fn cutoff(b: Bandwidth, n: usize) -> f64 {
    let f_nyq = nyquist(n);
    let f_min = (f_nyq / 256.0).max(1.0).min(f_nyq);
    let t = (b.index() as f64 - 1.0) / 8.0;
    f_min * (f_nyq / f_min).powf(t)
}

/// Fraction of spectral energy (DC excluded) at radial frequency above `fc`.
pub fn energy_above(values: &[f64], extents: &[usize], fc: f64) -> f64 {
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_nd(&mut buf, extents, false);
    let radii = radial_frequencies(extents);
    let mut above = 0.0;
    let mut total = 0.0;
    for (c, &r) in buf.iter().zip(&radii) {
        let e = c.norm_sqr();
        total += e;
        if r > fc + 1e-9 {
            above += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        above / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let ext = [4, 6];
        let orig: Vec<Complex<f64>> = (0..24).map(|i| Complex::new(i as f64 * 0.3, 0.0)).collect();
        let mut buf = orig.clone();
        fft_nd(&mut buf, &ext, false);
        fft_nd(&mut buf, &ext, true);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a / 24.0 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn cutoff_is_increasing_and_ends_at_nyquist() {
        for n in [16, 128, 512, 1024] {
            let c: Vec<f64> = Bandwidth::ALL.iter().map(|&b| cutoff(b, n)).collect();
            assert!(c.windows(2).all(|w| w[1] > w[0]), "{c:?}");
            assert_eq!(c[8], nyquist(n));
        }
        let b = Bandwidth::new(0.5).unwrap();
        assert!((cutoff(b, 1024) - 512.0 * 2f64.powi(-4)).abs() < 1e-9);
    }

    #[test]
    fn bin_frequencies_are_signed() {
        assert_eq!(bin_frequency(0, 8), 0.0);
        assert_eq!(bin_frequency(4, 8), 4.0);
        assert_eq!(bin_frequency(5, 8), -3.0);
    }
}
