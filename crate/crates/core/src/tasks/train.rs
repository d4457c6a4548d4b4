use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{adam_step, difference_operators, mse_loss, tv_penalty, value_and_grad, AdamState, Tensor};
use crate::error::{Error, Result};
use crate::fieldmodels::{evaluate, CoordBatch, FieldModel, ModelKind};
use crate::signals::{lattice_coords, SampledSignal};

use super::dataset::{TaskDataset, TaskKind};

pub const DEFAULT_ITERATIONS: usize = 2000;
pub const CT_ITERATIONS: usize = 5000;
/// Largest full batch; bigger training sets draw random minibatches.
pub const MAX_BATCH: usize = 1 << 16;
pub const LOG_EVERY: usize = 50;
/// TV weight for grid CT reconstructions, from [`super::tune_tv_weight`] on a
/// 128² phantom with 60 angles.
pub const DEFAULT_TV_WEIGHT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: usize,
    /// Weight of the TV penalty on lattice parameters; ignored by models
    /// without a value lattice.
    pub tv_weight: f64,
    /// Seeds minibatch sampling.
    pub seed: u64,
    pub log_every: usize,
}

impl TrainConfig {
    /// Per-model learning rate, 2000 steps (5000 for CT), TV on grid CT only.
    pub fn defaults(model: ModelKind, task: TaskKind) -> Self {
        let ct = task == TaskKind::Ct;
        TrainConfig {
            lr: model.default_lr(),
            iterations: if ct { CT_ITERATIONS } else { DEFAULT_ITERATIONS },
            batch_size: MAX_BATCH,
            tv_weight: if ct && model == ModelKind::Grid { DEFAULT_TV_WEIGHT } else { 0.0 },
            seed: 0,
            log_every: LOG_EVERY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::build(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(self.tv_weight >= 0.0) {
            return Err(Error::build(format!("TV weight must be >= 0, got {}", self.tv_weight)));
        }
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::build("batch size and log cadence must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// `(step, loss)` before the update at that step, every `log_every`
    /// steps and at the last step.
    pub losses: Vec<(usize, f64)>,
    /// Wall time of each optimization step.
    pub step_seconds: Vec<f64>,
    pub train_seconds: f64,
    /// Wall time of one full-lattice render.
    pub infer_seconds: f64,
    /// Render samples pulled into `[0, 1]`.
    pub clamped: usize,
}

impl TrainingTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().map(|&(_, l)| l)
    }
}

pub struct TrainOutcome {
    pub trace: TrainingTrace,
    /// Clamped render at the evaluation lattice.
    pub render: SampledSignal,
}

fn check_compatible(model: &dyn FieldModel, data: &TaskDataset) -> Result<()> {
    if model.d_in() != data.dim() || model.d_out() != data.channels() {
        return Err(Error::build(format!(
            "{} maps {}D -> {} channels, task has {}D signals with {} channels",
            model.kind(),
            model.d_in(),
            model.d_out(),
            data.dim(),
            data.channels()
        )));
    }
    Ok(())
}

fn gather_rows(t: &Tensor, rows: &[usize]) -> Tensor {
    let w = t.shape()[1];
    let mut out = Vec::with_capacity(rows.len() * w);
    for &r in rows {
        out.extend_from_slice(&t.data()[r * w..(r + 1) * w]);
    }
    Tensor::new(vec![rows.len(), w], out).expect("row gather keeps width")
}

/// Fits `model` to `data` with Adam and renders the result.
///
/// The objective is `mse(model(coords), targets)`, or `mse(A·model(coords),
/// targets)` when the task carries an operator `A`, plus `tv_weight` times
/// the anisotropic TV of the model's value lattice if it has one.
pub fn train(model: &mut dyn FieldModel, data: &TaskDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    check_compatible(model, data)?;
    let n = data.coords.shape()[0];
    let tv_ops = match model.lattice() {
        Some((_, extents)) if config.tv_weight > 0.0 => Some(difference_operators(&extents)?),
        _ => None,
    };
    let lattice_param = model.lattice().map(|(i, _)| i);
    let minibatch = data.operator.is_none() && n > config.batch_size;
    let full = if minibatch { None } else { Some(CoordBatch::new(data.coords.clone())?) };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(model.params(), config.lr);
    let mut trace = TrainingTrace::default();

    let start = Instant::now();
    for step in 0..config.iterations {
        let t0 = Instant::now();
        let sub;
        let (batch, targets) = match &full {
            Some(b) => (b, &data.targets),
            None => {
                let rows = sample(&mut rng, n, config.batch_size).into_vec();
                sub = (CoordBatch::new(gather_rows(&data.coords, &rows))?, gather_rows(&data.targets, &rows));
                (&sub.0, &sub.1)
            }
        };
        let m: &dyn FieldModel = model;
        let result = value_and_grad(m.params(), |tape, vars| {
            let out = m.forward(tape, vars, batch)?;
            let pred = match &data.operator {
                Some(op) => tape.sparse(op.clone(), out)?,
                None => out,
            };
            let mut loss = mse_loss(tape, pred, targets)?;
            if let (Some(ops), Some(i)) = (&tv_ops, lattice_param) {
                let tv = tv_penalty(tape, vars[i], ops)?;
                let tv = tape.scale(tv, config.tv_weight);
                loss = tape.add(loss, tv)?;
            }
            Ok(loss)
        });
        let (loss, grads) = match result {
            Err(Error::TrainingDiverged { loss, .. }) => return Err(Error::TrainingDiverged { step, loss }),
            r => r?,
        };
        if step % config.log_every == 0 || step + 1 == config.iterations {
            trace.losses.push((step, loss));
        }
        adam_step(model.params_mut(), &grads, &mut adam)?;
        trace.step_seconds.push(t0.elapsed().as_secs_f64());
    }
    trace.train_seconds = start.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let rendered = render_field(model, data.eval_resolution())?;
    trace.infer_seconds = t0.elapsed().as_secs_f64();
    trace.clamped = rendered.clamped;
    Ok(TrainOutcome {
        trace,
        render: rendered.signal,
    })
}

pub struct Render {
    pub signal: SampledSignal,
    /// Samples that fell outside `[0, 1]` before clamping.
    pub clamped: usize,
}

/// Evaluates `model` at every lattice center of `resolution`, clamped to `[0, 1]`.
pub fn render_field(model: &dyn FieldModel, resolution: &[usize]) -> Result<Render> {
    let raw = render_raw(model, resolution)?;
    let clamped = raw.values().iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    Ok(Render {
        signal: raw.clamp_unit(),
        clamped,
    })
}

/// Unclamped lattice render.
pub fn render_raw(model: &dyn FieldModel, resolution: &[usize]) -> Result<SampledSignal> {
    let out = evaluate(model, &lattice_coords(resolution))?;
    SampledSignal::from_tensor(resolution, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldmodels::{build, GridConfig, ModelConfig};
    use crate::signals::SampledSignal;
    use crate::tasks::{build_dataset, TaskArgs};

    fn signal() -> SampledSignal {
        SampledSignal::from_fn(&[8, 8], 1, |i, _| ((i[0] * 3 + i[1] * 5) % 7) as f64 / 6.0).unwrap()
    }

    fn grid(res: usize) -> Box<dyn FieldModel> {
        build(
            &ModelConfig::Grid(GridConfig {
                resolution: vec![res, res],
                channels: 1,
            }),
            0,
        )
        .unwrap()
    }

    #[test]
    fn zero_iterations_leave_the_model_alone() {
        let data = build_dataset(&signal(), TaskKind::Overfit, &TaskArgs::default()).unwrap();
        let mut m = grid(8);
        let before = m.params().to_vec();
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::defaults(ModelKind::Grid, TaskKind::Overfit)
        };
        let out = train(m.as_mut(), &data, &cfg).unwrap();
        assert!(out.trace.losses.is_empty() && out.trace.step_seconds.is_empty());
        assert_eq!(m.params(), &before[..]);
    }

    #[test]
    fn losses_are_logged_on_cadence() {
        let data = build_dataset(&signal(), TaskKind::Overfit, &TaskArgs::default()).unwrap();
        let mut m = grid(8);
        let cfg = TrainConfig {
            iterations: 120,
            ..TrainConfig::defaults(ModelKind::Grid, TaskKind::Overfit)
        };
        let out = train(m.as_mut(), &data, &cfg).unwrap();
        let steps: Vec<usize> = out.trace.losses.iter().map(|l| l.0).collect();
        assert_eq!(steps, [0, 50, 100, 119]);
        assert_eq!(out.trace.step_seconds.len(), 120);
    }

    #[test]
    fn grid_render_at_own_resolution_is_the_lattice() {
        let mut m = grid(8);
        let s = signal();
        m.params_mut()[0].data_mut().copy_from_slice(s.values());
        let r = render_field(m.as_ref(), &[8, 8]).unwrap();
        assert_eq!(r.signal.values(), s.values());
        assert_eq!(r.clamped, 0);
    }

    #[test]
    fn minibatches_are_deterministic() {
        let data = build_dataset(&signal(), TaskKind::Overfit, &TaskArgs::default()).unwrap();
        let cfg = TrainConfig {
            iterations: 30,
            batch_size: 20,
            seed: 9,
            ..TrainConfig::defaults(ModelKind::Grid, TaskKind::Overfit)
        };
        let run = || {
            let mut m = grid(6);
            train(m.as_mut(), &data, &cfg).unwrap().trace.final_loss().unwrap()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn divergence_reports_the_step() {
        let data = build_dataset(&signal(), TaskKind::Overfit, &TaskArgs::default()).unwrap();
        let mut m = grid(8);
        m.params_mut()[0].data_mut()[3] = f64::NAN;
        let cfg = TrainConfig::defaults(ModelKind::Grid, TaskKind::Overfit);
        assert!(matches!(
            train(m.as_mut(), &data, &cfg),
            Err(Error::TrainingDiverged { step: 0, .. })
        ));
    }
}
