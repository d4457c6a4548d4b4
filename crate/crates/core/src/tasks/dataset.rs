use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffcore::{SparseMatrix, Tensor};
use crate::error::{Error, Result};
use crate::signals::{add_gaussian_noise, downsample, downsample_to, half_voxel_resolution, lattice_coords, SampledSignal};

use super::radon::RadonOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Overfit,
    Denoise,
    Superres,
    Ct,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Overfit, TaskKind::Denoise, TaskKind::Superres, TaskKind::Ct];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Overfit => "overfit",
            TaskKind::Denoise => "denoise",
            TaskKind::Superres => "superres",
            TaskKind::Ct => "ct",
        }
    }

    pub fn supports_dim(self, dim: usize) -> bool {
        match self {
            TaskKind::Ct => dim == 2,
            _ => (2..=3).contains(&dim),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown task `{s}`")))
    }
}

/// Corruption and acquisition parameters; unused fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskArgs {
    /// Noise standard deviation for denoising.
    pub eps: f64,
    /// Per-axis downsampling factor for super-resolution; `None` selects 4 in
    /// 2D and half the voxel count in 3D.
    pub factor: Option<usize>,
    /// Projection count for CT.
    pub angles: usize,
    pub noise_seed: u64,
}

impl Default for TaskArgs {
    fn default() -> Self {
        TaskArgs {
            eps: 0.1,
            factor: None,
            angles: 100,
            noise_seed: 0,
        }
    }
}

/// Training data for one task: coordinates, targets and an optional linear
/// measurement operator applied to the model's lattice render.
#[derive(Clone, Debug)]
pub struct TaskDataset {
    pub kind: TaskKind,
    /// `[n, d]` training coordinates in `[-1, 1)`.
    pub coords: Tensor,
    /// Lattice the training coordinates are the centers of.
    pub train_resolution: Vec<usize>,
    /// `[n, C]` values, or `[angles·detectors, C]` sinogram rows for CT.
    pub targets: Tensor,
    /// Maps `[cells, C]` model samples at `coords` to measurement rows.
    pub operator: Option<Arc<SparseMatrix>>,
    /// `(angles, detectors)` for CT.
    pub sinogram_shape: Option<(usize, usize)>,
    /// Clean ground truth the render is scored against.
    pub eval_signal: SampledSignal,
}

impl TaskDataset {
    pub fn eval_resolution(&self) -> &[usize] {
        self.eval_signal.resolution()
    }

    pub fn channels(&self) -> usize {
        self.eval_signal.channels()
    }

    pub fn dim(&self) -> usize {
        self.eval_signal.dim()
    }
}

fn pointwise(kind: TaskKind, train: &SampledSignal, eval: SampledSignal) -> TaskDataset {
    TaskDataset {
        kind,
        coords: lattice_coords(train.resolution()),
        train_resolution: train.resolution().to_vec(),
        targets: train.to_tensor(),
        operator: None,
        sinogram_shape: None,
        eval_signal: eval,
    }
}

pub fn build_dataset(signal: &SampledSignal, kind: TaskKind, args: &TaskArgs) -> Result<TaskDataset> {
    if !kind.supports_dim(signal.dim()) {
        return Err(Error::Unsupported(format!("task {kind} on a {}D signal", signal.dim())));
    }
    Ok(match kind {
        TaskKind::Overfit => pointwise(kind, signal, signal.clone()),
        TaskKind::Denoise => {
            let noisy = add_gaussian_noise(signal, args.eps, args.noise_seed)?;
            pointwise(kind, &noisy, signal.clone())
        }
        TaskKind::Superres => {
            let low = match args.factor {
                Some(f) => downsample(signal, f)?,
                None if signal.dim() == 2 => downsample(signal, 4)?,
                None => {
                    let target: Vec<usize> = signal.resolution().iter().map(|&n| half_voxel_resolution(n)).collect();
                    downsample_to(signal, &target)?
                }
            };
            pointwise(kind, &low, signal.clone())
        }
        TaskKind::Ct => {
            let op = RadonOperator::for_signal(signal.resolution(), args.angles)?;
            TaskDataset {
                kind,
                coords: lattice_coords(signal.resolution()),
                train_resolution: signal.resolution().to_vec(),
                targets: op.forward(&signal.to_tensor())?,
                sinogram_shape: Some((op.n_angles, op.n_detectors)),
                operator: Some(op.matrix().clone()),
                eval_signal: signal.clone(),
            }
        }
    })
}
