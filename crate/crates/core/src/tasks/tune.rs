use crate::error::Result;
use crate::fieldmodels::{build, GridConfig, ModelConfig, ModelKind};
use crate::metrics::psnr;
use crate::signals::SampledSignal;

use super::dataset::{build_dataset, TaskArgs, TaskKind};
use super::train::{train, TrainConfig};

/// Log-spaced TV weights tried by [`tune_tv_weight`].
pub const TV_SWEEP: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Reconstructs `phantom` from `angles` projections with a full-resolution
/// grid for each weight and returns `(weight, PSNR)` pairs.
pub fn tune_tv_weight(
    phantom: &SampledSignal,
    angles: usize,
    weights: &[f64],
    iterations: usize,
) -> Result<Vec<(f64, f64)>> {
    let data = build_dataset(
        phantom,
        TaskKind::Ct,
        &TaskArgs {
            angles,
            ..TaskArgs::default()
        },
    )?;
    let config = ModelConfig::Grid(GridConfig {
        resolution: phantom.resolution().to_vec(),
        channels: phantom.channels(),
    });
    weights
        .iter()
        .map(|&w| {
            let mut model = build(&config, 0)?;
            let cfg = TrainConfig {
                iterations,
                tv_weight: w,
                ..TrainConfig::defaults(ModelKind::Grid, TaskKind::Ct)
            };
            let out = train(model.as_mut(), &data, &cfg)?;
            Ok((w, psnr(&out.render, phantom)?))
        })
        .collect()
}
