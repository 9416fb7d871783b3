//! Synthetic-pretraining loop shared by the inverse model and the forward
//! baseline.
//!
//! Each iteration draws `batch_functions` fresh episodes, averages their
//! per-episode losses and gradients, and applies one AdamW step at the
//! scheduled learning rate. Episodes, dropout masks, and latent-noise nonces
//! all come from dedicated streams keyed by (seed, iteration, batch index),
//! and gradient accumulation runs over [`GRAD_CHUNKS`] fixed chunks folded in
//! index order — so a run is bitwise-reproducible regardless of worker count
//! or the `parallel` feature.

use crate::nncore::layers::{BoundParams, DropoutCtx};
use crate::nncore::{adamw_step, lr_at, AdamHyper, LrSchedule, NodeId, OptimizerState, ParamRegistry, Real, Tape, Tensor};
use crate::par::{chunk_range, map_chunks, GRAD_CHUNKS};
use crate::synthfn::{draw_episode, sample_generator, Episode, GeneratorConfig, GeneratorFamily};

use super::{ExPTModel, ModelError};
use rand::Rng;

/// A model the pretraining loop can drive: it exposes its parameters and
/// builds a scalar training loss for one episode.
pub trait PretrainableModel<T: Real>: Sync {
    fn params(&self) -> &ParamRegistry<T>;
    fn params_mut(&mut self) -> &mut ParamRegistry<T>;
    /// Tag written into checkpoints ("expt" or "tnp-ed").
    fn model_kind(&self) -> &'static str;
    /// Dropout rate used during training passes.
    fn dropout_rate(&self) -> f64;
    fn episode_loss(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        episode: &Episode,
        noise_nonce: u64,
        dropout: &mut DropoutCtx,
    ) -> NodeId;
}

impl<T: Real> PretrainableModel<T> for super::ExPTModel<T> {
    fn params(&self) -> &ParamRegistry<T> {
        ExPTModel::params(self)
    }

    fn params_mut(&mut self) -> &mut ParamRegistry<T> {
        ExPTModel::params_mut(self)
    }

    fn model_kind(&self) -> &'static str {
        "expt"
    }

    fn dropout_rate(&self) -> f64 {
        self.config().encoder.dropout
    }

    fn episode_loss(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        episode: &Episode,
        noise_nonce: u64,
        dropout: &mut DropoutCtx,
    ) -> NodeId {
        self.pretrain_loss_on_tape(tape, bound, episode, noise_nonce, dropout)
    }
}

/// Knobs for one pretraining run.
#[derive(Clone, Copy, Debug)]
pub struct PretrainOptions {
    pub iterations: u64,
    pub batch_functions: usize,
    /// Emit a checkpoint whenever the completed-step count is a multiple of
    /// this (0 = final checkpoint only). The final step always emits.
    pub checkpoint_every: u64,
    pub seed: u64,
    pub family: GeneratorFamily,
    pub hyper: AdamHyper,
    pub schedule: LrSchedule,
}

/// What a finished (or zero-iteration) run reports back.
#[derive(Debug)]
pub struct PretrainReport {
    /// Batch-mean loss per iteration.
    pub losses: Vec<f64>,
    /// Completed optimizer steps.
    pub final_step: u64,
}

/// Sum of per-episode losses and gradients over one chunk of the batch.
struct ChunkAccum<T: Real> {
    loss: f64,
    grads: Vec<Tensor<T>>,
}

fn run_chunk<T: Real, M: PretrainableModel<T>>(
    model: &M,
    gen_config: &GeneratorConfig,
    pool: Option<&Tensor<f64>>,
    opts: &PretrainOptions,
    step: u64,
    range: std::ops::Range<usize>,
) -> Result<ChunkAccum<T>, ModelError> {
    let mut acc = ChunkAccum {
        loss: 0.0,
        grads: model
            .params()
            .iter()
            .map(|(_, _, v)| Tensor::zeros(v.rows(), v.cols()))
            .collect(),
    };
    for idx in range {
        let indices = [step, idx as u64];
        let mut episode_rng = crate::rng::stream(opts.seed, "episode", &indices);
        let generator = sample_generator(gen_config, opts.family, &mut episode_rng);
        let episode = draw_episode(gen_config, &generator, pool, &mut episode_rng)?;

        let nonce = crate::rng::stream(opts.seed, "elbo-noise", &indices).gen::<u64>();
        let rate = model.dropout_rate();
        let mut dropout = if rate > 0.0 {
            DropoutCtx::train(rate, crate::rng::stream(opts.seed, "dropout", &indices))
        } else {
            DropoutCtx::eval()
        };

        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let loss = model.episode_loss(&mut tape, &bound, &episode, nonce, &mut dropout);
        let loss_value = tape.value(loss).item().to_f64();
        tape.backward(loss).map_err(|e| ModelError::TrainingDiverged {
            iteration: step,
            seed: opts.seed,
            detail: e.to_string(),
        })?;

        acc.loss += loss_value;
        for (slot, grad) in bound.grads(&tape).into_iter().enumerate() {
            acc.grads[slot].add_assign(&grad);
        }
    }
    Ok(acc)
}

/// Run the loop, invoking `on_checkpoint(completed_steps, model, optimizer)`
/// at every emission point. With `iterations = 0` the initialization itself
/// is checkpointed and no step is taken.
pub fn pretrain<T: Real, M: PretrainableModel<T>>(
    model: &mut M,
    gen_config: &GeneratorConfig,
    pool: Option<&Tensor<f64>>,
    opts: &PretrainOptions,
    mut on_checkpoint: impl FnMut(u64, &M, &OptimizerState<T>) -> Result<(), ModelError>,
) -> Result<PretrainReport, ModelError> {
    if opts.batch_functions == 0 {
        return Err(ModelError::InvalidConfig("batch_functions must be at least 1".into()));
    }
    gen_config.validate(pool)?;

    let mut optimizer = OptimizerState::new(model.params());
    let mut losses = Vec::with_capacity(opts.iterations as usize);

    if opts.iterations == 0 {
        on_checkpoint(0, model, &optimizer)?;
        return Ok(PretrainReport { losses, final_step: 0 });
    }

    let batch = opts.batch_functions;
    for step in 0..opts.iterations {
        let chunks = {
            let model_ref: &M = &*model;
            map_chunks(GRAD_CHUNKS, |c| {
                run_chunk(
                    model_ref,
                    gen_config,
                    pool,
                    opts,
                    step,
                    chunk_range(batch, GRAD_CHUNKS, c),
                )
            })
        };

        let mut grads: Vec<Tensor<T>> = model
            .params()
            .iter()
            .map(|(_, _, v)| Tensor::zeros(v.rows(), v.cols()))
            .collect();
        let mut loss_sum = 0.0;
        for chunk in chunks {
            let chunk = chunk?;
            loss_sum += chunk.loss;
            for (slot, grad) in chunk.grads.iter().enumerate() {
                grads[slot].add_assign(grad);
            }
        }
        let mean_loss = loss_sum / batch as f64;
        if !mean_loss.is_finite() {
            return Err(ModelError::TrainingDiverged {
                iteration: step,
                seed: opts.seed,
                detail: format!("batch-mean loss is {mean_loss}"),
            });
        }
        let inv_batch = T::from_f64(1.0 / batch as f64);
        for grad in &mut grads {
            for g in grad.data_mut() {
                *g *= inv_batch;
            }
        }

        let lr = lr_at(step, &opts.schedule);
        adamw_step(model.params_mut(), &grads, &mut optimizer, &opts.hyper, lr);
        losses.push(mean_loss);

        let completed = step + 1;
        let scheduled = opts.checkpoint_every != 0 && completed % opts.checkpoint_every == 0;
        if scheduled || completed == opts.iterations {
            on_checkpoint(completed, model, &optimizer)?;
        }
    }

    Ok(PretrainReport { losses, final_step: opts.iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::checkpoint::{load_model_checkpoint, save_model_checkpoint};
    use crate::model::{EncoderConfig, ExPTConfig, VaeConfig};
    use crate::synthfn::{InputSource, KernelKind, SplitMode};

    fn micro_config() -> ExPTConfig {
        ExPTConfig {
            input_dim: 2,
            encoder: EncoderConfig { layers: 1, dim: 8, heads: 2, dropout: 0.1 },
            vae: VaeConfig { enc_layers: 2, dec_layers: 2, hidden: 8, latent: 2 },
            kl_weight: 1.0,
            recon_variance: 1.0,
            ln_eps: 1e-5,
        }
    }

    fn micro_generator() -> GeneratorConfig {
        GeneratorConfig {
            dimension: 2,
            points_per_function: 12,
            context_size: 6,
            lengthscale_range: (5.0, 10.0),
            scale_range: (1.0, 2.0),
            input_source: InputSource::UniformBox { lo: -3.0, hi: 3.0 },
            input_noise_std: 0.0,
            split_mode: SplitMode::Random,
            pool_subsample_ratio: 1.0,
        }
    }

    fn micro_options(iterations: u64) -> PretrainOptions {
        PretrainOptions {
            iterations,
            batch_functions: 4,
            checkpoint_every: 2,
            seed: 17,
            family: GeneratorFamily::Gp(KernelKind::Rbf),
            hyper: AdamHyper::default(),
            schedule: LrSchedule { peak: 1e-3, warmup: 2, anneal: 10 },
        }
    }

    fn init_model(seed: u64) -> ExPTModel<f32> {
        let mut rng = crate::rng::stream(seed, "model-init", &[]);
        ExPTModel::init(&micro_config(), &mut rng).unwrap()
    }

    #[test]
    fn zero_iterations_checkpoints_the_initialization_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("init.ckpt");
        let mut model = init_model(3);
        let before: Vec<Vec<f32>> = model
            .params()
            .iter()
            .map(|(_, _, v)| v.data().to_vec())
            .collect();

        let mut calls = Vec::new();
        let report = pretrain(
            &mut model,
            &micro_generator(),
            None,
            &micro_options(0),
            |step, m, opt| {
                calls.push(step);
                save_model_checkpoint(&path, m.params(), Some(opt), "expt", "hash", step)
                    .map_err(ModelError::from)
            },
        )
        .unwrap();

        assert_eq!(calls, [0]);
        assert_eq!(report.final_step, 0);
        assert!(report.losses.is_empty());

        let mut reloaded = init_model(999); // different values, same shape
        let loaded = load_model_checkpoint(&path, reloaded.params_mut()).unwrap();
        assert_eq!(loaded.step, 0);
        for ((_, _, v), orig) in reloaded.params().iter().zip(&before) {
            assert_eq!(v.data(), &orig[..], "checkpoint differs from initialization");
        }
    }

    #[test]
    fn short_run_takes_steps_and_checkpoints_on_schedule() {
        let mut model = init_model(4);
        let before: Vec<f32> = model.params().iter().flat_map(|(_, _, v)| v.data().to_vec()).collect();
        let mut seen = Vec::new();
        let report = pretrain(
            &mut model,
            &micro_generator(),
            None,
            &micro_options(3),
            |step, _, _| {
                seen.push(step);
                Ok(())
            },
        )
        .unwrap();

        assert_eq!(seen, [2, 3], "multiples of checkpoint_every plus the final step");
        assert_eq!(report.losses.len(), 3);
        assert!(report.losses.iter().all(|l| l.is_finite()));
        let after: Vec<f32> = model.params().iter().flat_map(|(_, _, v)| v.data().to_vec()).collect();
        assert_ne!(before, after, "training left parameters untouched");
    }

    #[test]
    fn identical_seeds_reproduce_parameters_bitwise() {
        let run = || {
            let mut model = init_model(5);
            pretrain(&mut model, &micro_generator(), None, &micro_options(3), |_, _, _| Ok(()))
                .unwrap();
            model
                .params()
                .iter()
                .flat_map(|(_, _, v)| v.data().to_vec())
                .collect::<Vec<f32>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_reports_iteration_and_seed() {
        let mut model = init_model(6);
        let mut opts = micro_options(6);
        opts.schedule = LrSchedule { peak: 1e14, warmup: 0, anneal: 6 };
        let err = pretrain(&mut model, &micro_generator(), None, &opts, |_, _, _| Ok(()))
            .unwrap_err();
        match err {
            ModelError::TrainingDiverged { seed, .. } => assert_eq!(seed, 17),
            other => panic!("expected divergence, got {other}"),
        }
    }
}
