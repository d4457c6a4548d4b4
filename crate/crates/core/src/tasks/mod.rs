//! Task datasets, the CT projector and the training loop.

mod dataset;
pub mod radon;
mod train;
mod tune;

pub use dataset::{build_dataset, TaskArgs, TaskDataset, TaskKind};
pub use radon::{radon_forward, RadonOperator};
pub use train::{
    render_field, render_raw, train, Render, TrainConfig, TrainOutcome, TrainingTrace, CT_ITERATIONS,
    DEFAULT_ITERATIONS, DEFAULT_TV_WEIGHT, LOG_EVERY, MAX_BATCH,
};
pub use tune::{tune_tv_weight, TV_SWEEP};
