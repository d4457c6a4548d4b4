use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Effective-bandwidth label in `{0.1, 0.2, …, 0.9}`, stored as its index 1..=9.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Bandwidth(u8);

impl Bandwidth {
    pub const ALL: [Bandwidth; 9] = [
        Bandwidth(1),
        Bandwidth(2),
        Bandwidth(3),
        Bandwidth(4),
        Bandwidth(5),
        Bandwidth(6),
        Bandwidth(7),
        Bandwidth(8),
        Bandwidth(9),
    ];

    pub fn from_index(k: u8) -> Result<Self> {
        if (1..=9).contains(&k) {
            Ok(Bandwidth(k))
        } else {
            Err(Error::build(format!("bandwidth index must be 1..=9, got {k}")))
        }
    }

    pub fn new(value: f64) -> Result<Self> {
        let k = (value * 10.0).round();
        if !(1.0..=9.0).contains(&k) || (value * 10.0 - k).abs() > 1e-9 {
            return Err(Error::build(format!("bandwidth must be one of 0.1..0.9, got {value}")));
        }
        Ok(Bandwidth(k as u8))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl TryFrom<f64> for Bandwidth {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Bandwidth::new(v)
    }
}

impl From<Bandwidth> for f64 {
    fn from(b: Bandwidth) -> f64 {
        b.value()
    }
}

impl std::fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

/// Values on a regular 2D or 3D lattice, row-major over axes with channels
/// interleaved last.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSignal {
    resolution: Vec<usize>,
    channels: usize,
    values: Vec<f64>,
    pub bandwidth: Option<Bandwidth>,
    pub seed: Option<u64>,
}

impl SampledSignal {
    pub fn new(resolution: Vec<usize>, channels: usize, values: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&resolution.len()) {
            return Err(Error::build(format!(
                "signals are 2D or 3D, got resolution {resolution:?}"
            )));
        }
        if resolution.contains(&0) {
            return Err(Error::build(format!("empty axis in {resolution:?}")));
        }
        if !(channels == 1 || channels == 3) {
            return Err(Error::build(format!("signals have 1 or 3 channels, got {channels}")));
        }
        let n = resolution.iter().product::<usize>() * channels;
        if n != values.len() {
            return Err(Error::build(format!(
                "resolution {resolution:?} x {channels} channels needs {n} values, got {}",
                values.len()
            )));
        }
        Ok(SampledSignal {
            resolution,
            channels,
            values,
            bandwidth: None,
            seed: None,
        })
    }

    pub fn from_fn(resolution: &[usize], channels: usize, f: impl Fn(&[usize], usize) -> f64) -> Result<Self> {
        let cells: usize = resolution.iter().product();
        let mut values = Vec::with_capacity(cells * channels);
        let mut idx = vec![0usize; resolution.len()];
        for cell in 0..cells {
            unravel(cell, resolution, &mut idx);
            for c in 0..channels {
                values.push(f(&idx, c));
            }
        }
        SampledSignal::new(resolution.to_vec(), channels, values)
    }

    pub fn with_labels(mut self, bandwidth: Option<Bandwidth>, seed: Option<u64>) -> Self {
        self.bandwidth = bandwidth;
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cells(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: &[usize], channel: usize) -> f64 {
        self.values[ravel(idx, &self.resolution) * self.channels + channel]
    }

    /// Values as a `[cells, channels]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.cells(), self.channels], self.values.clone())
            .expect("signal invariant")
    }

    pub fn from_tensor(resolution: &[usize], t: &Tensor) -> Result<Self> {
        let (cells, ch) = t.dims2()?;
        if cells != resolution.iter().product::<usize>() {
            return Err(Error::build(format!(
                "{cells} rows do not fill a {resolution:?} lattice"
            )));
        }
        SampledSignal::new(resolution.to_vec(), ch, t.data().to_vec())
    }

    pub fn clamp_unit(mut self) -> Self {
        for v in &mut self.values {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn same_layout(&self, other: &SampledSignal) -> Result<()> {
        if self.resolution != other.resolution || self.channels != other.channels {
            return Err(Error::build(format!(
                "signal layout {:?}x{} does not match {:?}x{}",
                self.resolution, self.channels, other.resolution, other.channels
            )));
        }
        Ok(())
    }

    /// Rescales values linearly onto [0, 1].
    pub fn normalize_min_max(mut self) -> Result<Self> {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = hi - lo;
        if !(span > 1e-12 * hi.abs().max(1.0)) {
            return Err(Error::DegenerateSignal(format!(
                "constant signal (min {lo}, max {hi}) cannot be normalized"
            )));
        }
        for v in &mut self.values {
            *v = (*v - lo) / span;
        }
        Ok(self)
    }
}

pub(crate) fn unravel(mut cell: usize, extents: &[usize], out: &mut [usize]) {
    for axis in (0..extents.len()).rev() {
        out[axis] = cell % extents[axis];
        cell /= extents[axis];
    }
}

pub(crate) fn ravel(idx: &[usize], extents: &[usize]) -> usize {
    idx.iter().zip(extents).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// Normalized coordinate of lattice center `i` out of `n`: `-1 + (2i + 1) / n`.
pub fn center_coord(i: usize, n: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

/// All lattice centers of `resolution` as a `[cells, dim]` tensor in [-1, 1).
pub fn lattice_coords(resolution: &[usize]) -> Tensor {
    let d = resolution.len();
    let cells: usize = resolution.iter().product();
    let mut data = Vec::with_capacity(cells * d);
    let mut idx = vec![0usize; d];
    for cell in 0..cells {
        unravel(cell, resolution, &mut idx);
        for axis in 0..d {
            data.push(center_coord(idx[axis], resolution[axis]));
        }
    }
    Tensor::new(vec![cells, d], data).expect("lattice shape")
}
