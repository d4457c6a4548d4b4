use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::lattice::{center_coord, unravel};
use super::spectrum::{cutoff, fft_nd, radial_frequencies};
use super::{Bandwidth, SampledSignal};

/// Synthetic signal families with a bandwidth dial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Bandlimited,
    Spheres,
    Sierpinski,
    Star,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Bandlimited, Family::Spheres, Family::Sierpinski, Family::Star];

    pub fn name(self) -> &'static str {
        match self {
            Family::Bandlimited => "bandlimited",
            Family::Spheres => "spheres",
            Family::Sierpinski => "sierpinski",
            Family::Star => "star",
        }
    }

    pub fn supports_dim(self, dim: usize) -> bool {
        match self {
            Family::Bandlimited | Family::Spheres => dim == 2 || dim == 3,
            Family::Sierpinski | Family::Star => dim == 2,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::build(format!("unknown signal family `{s}`")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Default wedge count of the star target.
pub const STAR_WEDGES: usize = 32;

/// Generates a member of `family` on a uniform `res^dim` lattice.
pub fn generate(family: Family, dim: usize, res: usize, b: Bandwidth, seed: u64) -> Result<SampledSignal> {
    if !family.supports_dim(dim) {
        return Err(Error::Unsupported(format!("{family} signals in {dim}D")));
    }
    let resolution = vec![res; dim];
    match family {
        Family::Bandlimited => gen_bandlimited(&resolution, b, seed),
        Family::Spheres => gen_spheres(&resolution, b, seed),
        Family::Sierpinski => gen_sierpinski(&resolution, b),
        Family::Star => gen_star_target(&resolution, STAR_WEDGES).map(|(s, _)| s),
    }
}

fn check_lattice(resolution: &[usize]) -> Result<()> {
    if !(2..=3).contains(&resolution.len()) {
        return Err(Error::build(format!("signals are 2D or 3D, got {resolution:?}")));
    }
    Ok(())
}

fn nondegenerate(s: &SampledSignal, what: &str) -> Result<()> {
    let v = s.values();
    let first = v[0];
    if v.iter().all(|&x| x == first) {
        return Err(Error::DegenerateSignal(format!("{what} produced a constant signal")));
    }
    Ok(())
}

/// Uniform noise low-passed by an ideal radial mask at `cutoff(b)`, then
/// min-max normalized.
pub fn gen_bandlimited(resolution: &[usize], b: Bandwidth, seed: u64) -> Result<SampledSignal> {
    check_lattice(resolution)?;
    let n = resolution[0];
    if resolution.iter().any(|&r| r != n) {
        return Err(Error::build(format!("bandlimited signals need equal extents, got {resolution:?}")));
    }
    if n < 8 {
        return Err(Error::build(format!("bandlimited signals need >= 8 samples per axis, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = resolution.iter().product();
    let mut buf: Vec<Complex<f64>> = (0..total).map(|_| Complex::new(rng.random::<f64>(), 0.0)).collect();
    fft_nd(&mut buf, resolution, false);
    let fc = cutoff(b, n);
    for (c, r) in buf.iter_mut().zip(radial_frequencies(resolution)) {
        if r > fc + 1e-9 {
            *c = Complex::new(0.0, 0.0);
        }
    }
    fft_nd(&mut buf, resolution, true);
    let values = buf.iter().map(|c| c.re / total as f64).collect();
    let s = SampledSignal::new(resolution.to_vec(), 1, values)?.normalize_min_max()?;
    Ok(s.with_labels(Some(b), Some(seed)))
}

/// Number of shapes for label `b`: `round(2^(9b))`.
pub fn sphere_count(b: Bandwidth) -> usize {
    2f64.powf(9.0 * b.value()).round() as usize
}

/// Union of `sphere_count(b)` discs or balls of radius `0.35 n^(-1/d)` with
/// uniformly placed centers in the unit cube.
pub fn gen_spheres(resolution: &[usize], b: Bandwidth, seed: u64) -> Result<SampledSignal> {
    check_lattice(resolution)?;
    let d = resolution.len();
    let n = sphere_count(b);
    let r = 0.35 * (n as f64).powf(-1.0 / d as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let r2 = r * r;
    let s = SampledSignal::from_fn(resolution, 1, |idx, _| {
        let p: Vec<f64> = idx
            .iter()
            .zip(resolution)
            .map(|(&i, &m)| (i as f64 + 0.5) / m as f64)
            .collect();
        let hit = centers
            .iter()
            .any(|c| c.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2);
        if hit {
            1.0
        } else {
            0.0
        }
    })?;
    nondegenerate(&s, "gen_spheres")?;
    Ok(s.with_labels(Some(b), Some(seed)))
}

/// Fractal depth for label `b`: `round(9b)` clipped to [1, 8].
pub fn sierpinski_depth(b: Bandwidth) -> u32 {
    (9.0 * b.value()).round().clamp(1.0, 8.0) as u32
}

/// Vertices of the base triangle in unit image coordinates (x right, y down).
pub const SIERPINSKI_TRIANGLE: [[f64; 2]; 3] = [[0.5, 0.1103], [0.05, 0.8897], [0.95, 0.8897]];

/// Membership of a point in the depth-`depth` Sierpinski set over the base
/// triangle.
pub fn sierpinski_contains(p: [f64; 2], depth: u32) -> bool {
    let [a, b, c] = SIERPINSKI_TRIANGLE;
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    let mut l1 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
    let mut l2 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
    let mut l3 = 1.0 - l1 - l2;
    if l1 < 0.0 || l2 < 0.0 || l3 < 0.0 {
        return false;
    }
    for _ in 0..depth {
        if l1 >= 0.5 {
            l1 = 2.0 * l1 - 1.0;
            l2 *= 2.0;
            l3 *= 2.0;
        } else if l2 >= 0.5 {
            l2 = 2.0 * l2 - 1.0;
            l1 *= 2.0;
            l3 *= 2.0;
        } else if l3 >= 0.5 {
            l3 = 2.0 * l3 - 1.0;
            l1 *= 2.0;
            l2 *= 2.0;
        } else {
            return false;
        }
    }
    true
}

/// Binary rasterization of the Sierpinski triangle at depth `sierpinski_depth(b)`.
pub fn gen_sierpinski(resolution: &[usize], b: Bandwidth) -> Result<SampledSignal> {
    if resolution.len() != 2 {
        return Err(Error::Unsupported("sierpinski signals are 2D only".into()));
    }
    let depth = sierpinski_depth(b);
    let (h, w) = (resolution[0], resolution[1]);
    let s = SampledSignal::from_fn(resolution, 1, |idx, _| {
        let p = [(idx[1] as f64 + 0.5) / w as f64, (idx[0] as f64 + 0.5) / h as f64];
        if sierpinski_contains(p, depth) {
            1.0
        } else {
            0.0
        }
    })?;
    nondegenerate(&s, "gen_sierpinski")?;
    Ok(s.with_labels(Some(b), None))
}

/// Pixel membership for one of the 9 concentric star-target rings.
#[derive(Clone, Debug, PartialEq)]
pub struct RingMask {
    /// 1 is the outermost annulus, 9 the center disk.
    pub ring_index: u8,
    pub mask: Vec<bool>,
}

impl RingMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Bandwidth label associated with the ring (0.1 outermost).
    pub fn bandwidth(&self) -> Bandwidth {
        Bandwidth::from_index(self.ring_index).expect("ring index in 1..=9")
    }
}

/// Ring index of normalized radius `r`, or `None` outside the unit disk.
pub fn ring_of_radius(r: f64) -> Option<u8> {
    if r > 1.0 {
        return None;
    }
    let k = ((r * 9.0).floor() as i64).min(8);
    Some((9 - k) as u8)
}

/// Alternating binary wedges inside the unit disk, plus the 9 annular masks.
pub fn gen_star_target(resolution: &[usize], wedges: usize) -> Result<(SampledSignal, Vec<RingMask>)> {
    if resolution.len() != 2 {
        return Err(Error::Unsupported("star targets are 2D only".into()));
    }
    if wedges == 0 || wedges % 2 != 0 {
        return Err(Error::build(format!("star target needs an even wedge count, got {wedges}")));
    }
    let (h, w) = (resolution[0], resolution[1]);
    let cells = h * w;
    let mut masks: Vec<RingMask> = (1..=9)
        .map(|k| RingMask {
            ring_index: k,
            mask: vec![false; cells],
        })
        .collect();
    let mut values = vec![0.0; cells];
    let mut idx = [0usize; 2];
    for cell in 0..cells {
        unravel(cell, resolution, &mut idx);
        let x = center_coord(idx[1], w);
        let y = center_coord(idx[0], h);
        let r = (x * x + y * y).sqrt();
        if let Some(k) = ring_of_radius(r) {
            masks[(k - 1) as usize].mask[cell] = true;
            values[cell] = star_value(x, y, wedges);
        }
    }
    let s = SampledSignal::new(resolution.to_vec(), 1, values)?;
    Ok((s, masks))
}

/// Star-target value at a point inside the disk.
pub fn star_value(x: f64, y: f64, wedges: usize) -> f64 {
    let theta = y.atan2(x).rem_euclid(std::f64::consts::TAU);
    let sector = (theta * wedges as f64 / std::f64::consts::TAU).floor() as usize % wedges;
    if sector % 2 == 0 {
        1.0
    } else {
        0.0
    }
}
