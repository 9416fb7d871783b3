//! Forward-modeling counterpart to the inverse model.
//!
//! Same masked encoder over the same episode tokens, except target tokens
//! carry the *input* x (not its value), and a 1-layer head predicts ŷ from
//! each target's hidden row. Training minimizes mean squared error over
//! targets; adaptation runs gradient ascent on candidate inputs through the
//! frozen predictor.

use rand_chacha::ChaCha8Rng;

use crate::model::{build_mask, ExPTConfig, ModelError};
use crate::nncore::layers::{
    transformer_layer, Activation, BoundParams, DropoutCtx, MlpParams, TransformerLayerParams,
};
use crate::nncore::{NodeId, ParamId, ParamRegistry, Real, Tape, Tensor};
use crate::synthfn::Episode;

/// Transformer encoder with a scalar prediction head.
///
/// Shares [`ExPTConfig`] with the inverse model so pretraining budgets stay
/// matched; the `vae`, `kl_weight`, and `recon_variance` fields are unused —
/// the conditional decoder is replaced by the 1-layer head.
pub struct TnpEdModel<T: Real> {
    config: ExPTConfig,
    params: ParamRegistry<T>,
    pair_embedder: MlpParams,
    target_embedder: MlpParams,
    encoder: Vec<TransformerLayerParams>,
    final_ln_g: ParamId,
    final_ln_b: ParamId,
    head: MlpParams,
}

impl<T: Real> TnpEdModel<T> {
    pub fn init(config: &ExPTConfig, rng: &mut ChaCha8Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.encoder.dim;
        let mut params = ParamRegistry::new();
        let pair_embedder = MlpParams::init(
            &mut params,
            rng,
            "embed/pair",
            &[1 + config.input_dim, d],
            Activation::Identity,
        );
        let target_embedder = MlpParams::init(
            &mut params,
            rng,
            "embed/target",
            &[config.input_dim, d],
            Activation::Identity,
        );
        let encoder = (0..config.encoder.layers)
            .map(|i| TransformerLayerParams::init(&mut params, rng, &format!("encoder/{i}"), d))
            .collect();
        let final_ln_g = params.register("encoder/final_ln/g", Tensor::full(1, d, T::ONE));
        let final_ln_b = params.register("encoder/final_ln/b", Tensor::zeros(1, d));
        let head = MlpParams::init(&mut params, rng, "head", &[d, 1], Activation::Identity);
        Ok(TnpEdModel {
            config: *config,
            params,
            pair_embedder,
            target_embedder,
            encoder,
            final_ln_g,
            final_ln_b,
            head,
        })
    }

    pub fn config(&self) -> &ExPTConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamRegistry<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamRegistry<T> {
        &mut self.params
    }

    /// Predicted ŷ (`[t, 1]`) for target inputs already on the tape, so
    /// gradients can flow back into `target_x` during ascent.
    pub fn predict_on_tape(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        context_x: &Tensor<f64>,
        context_y: &[f64],
        target_x: NodeId,
        dropout: &mut DropoutCtx,
    ) -> NodeId {
        let m = context_y.len();
        let t = tape.value(target_x).rows();
        assert!(m > 0 && t > 0, "need at least one context and one target token");
        assert_eq!(context_x.rows(), m, "context x/y length mismatch");
        assert_eq!(context_x.cols(), self.config.input_dim, "context input width mismatch");
        assert_eq!(
            tape.value(target_x).cols(),
            self.config.input_dim,
            "target input width mismatch"
        );

        let pairs = tape.leaf(Tensor::from_fn(m, 1 + self.config.input_dim, |i, j| {
            T::from_f64(if j == 0 { context_y[i] } else { context_x.get(i, j - 1) })
        }));
        let pair_emb = self.pair_embedder.forward(tape, bound, pairs);
        let target_emb = self.target_embedder.forward(tape, bound, target_x);

        let mut tokens = tape.concat_rows(pair_emb, target_emb);
        let bias = build_mask(m, m + t).bias::<T>();
        let ln_eps = T::from_f64(self.config.ln_eps);
        for layer in &self.encoder {
            tokens = transformer_layer(
                tape,
                bound,
                layer,
                tokens,
                &bias,
                self.config.encoder.heads,
                ln_eps,
                dropout,
            );
        }
        let final_g = bound.node(self.final_ln_g);
        let final_b = bound.node(self.final_ln_b);
        tokens = tape.layernorm_rows(tokens, final_g, final_b, ln_eps);
        let h = tape.slice_rows(tokens, m, m + t);
        self.head.forward(tape, bound, h)
    }

    /// Evaluation-mode predictions for a batch of query inputs.
    pub fn predict_values(
        &self,
        context_x: &Tensor<f64>,
        context_y: &[f64],
        query_x: &Tensor<f64>,
    ) -> Vec<f64> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let target = tape.leaf(query_x.cast::<T>());
        let yhat = self.predict_on_tape(
            &mut tape,
            &bound,
            context_x,
            context_y,
            target,
            &mut DropoutCtx::eval(),
        );
        let v = tape.value(yhat);
        (0..v.rows()).map(|i| v.get(i, 0).to_f64()).collect()
    }

    /// Mean squared prediction error over the episode's targets.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        episode: &Episode,
        dropout: &mut DropoutCtx,
    ) -> NodeId {
        let target = tape.leaf(episode.target_x.cast::<T>());
        let yhat = self.predict_on_tape(
            tape,
            bound,
            &episode.context_x,
            &episode.context_y,
            target,
            dropout,
        );
        let truth = tape.leaf(Tensor::from_fn(episode.target_y.len(), 1, |i, _| {
            T::from_f64(episode.target_y[i])
        }));
        let diff = tape.sub(yhat, truth);
        let sq = tape.mul(diff, diff);
        tape.mean_all(sq)
    }

    /// Evaluation-mode episode loss.
    pub fn tnp_ed_loss(&self, episode: &Episode) -> T {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let loss = self.loss_on_tape(&mut tape, &bound, episode, &mut DropoutCtx::eval());
        tape.value(loss).item()
    }
}

impl<T: Real> crate::model::PretrainableModel<T> for TnpEdModel<T> {
    fn params(&self) -> &ParamRegistry<T> {
        TnpEdModel::params(self)
    }

    fn params_mut(&mut self) -> &mut ParamRegistry<T> {
        TnpEdModel::params_mut(self)
    }

    fn model_kind(&self) -> &'static str {
        "tnp-ed"
    }

    fn dropout_rate(&self) -> f64 {
        self.config.encoder.dropout
    }

    fn episode_loss(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        episode: &Episode,
        _noise_nonce: u64,
        dropout: &mut DropoutCtx,
    ) -> NodeId {
        self.loss_on_tape(tape, bound, episode, dropout)
    }
}

/// Candidate seeds for ascent: the few-shot inputs ordered by descending
/// value (ties by index), cycled until `q` rows are filled.
pub fn top_q_init(few_shot_x: &Tensor<f64>, few_shot_y: &[f64], q: usize) -> Tensor<f64> {
    assert!(!few_shot_y.is_empty(), "need at least one few-shot pair");
    assert_eq!(few_shot_x.rows(), few_shot_y.len(), "few-shot x/y length mismatch");
    assert!(q > 0, "need at least one candidate");
    let mut order: Vec<usize> = (0..few_shot_y.len()).collect();
    order.sort_by(|&a, &b| few_shot_y[b].total_cmp(&few_shot_y[a]).then(a.cmp(&b)));
    Tensor::from_fn(q, few_shot_x.cols(), |i, j| few_shot_x.get(order[i % order.len()], j))
}

/// Gradient ascent on candidate inputs through the frozen model, with the
/// few-shot pairs as context. Candidates start from [`top_q_init`] and are
/// clipped to `domain` after every step.
pub fn tnp_ed_optimize<T: Real>(
    model: &TnpEdModel<T>,
    few_shot_x: &Tensor<f64>,
    few_shot_y: &[f64],
    steps: usize,
    step_size: f64,
    q: usize,
    domain: Option<(f64, f64)>,
) -> Result<Tensor<f64>, ModelError> {
    let mut candidates = top_q_init(few_shot_x, few_shot_y, q);
    for _ in 0..steps {
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let x_node = tape.leaf(candidates.cast::<T>());
        let yhat = model.predict_on_tape(
            &mut tape,
            &bound,
            few_shot_x,
            few_shot_y,
            x_node,
            &mut DropoutCtx::eval(),
        );
        // Targets are masked off from one another, so the gradient of the
        // summed predictions splits into per-candidate gradients.
        let total = tape.sum_all(yhat);
        tape.backward(total)?;
        let grad = tape.grad(x_node).expect("candidate leaf is on the loss path");
        for i in 0..q {
            for j in 0..candidates.cols() {
                let mut v = candidates.get(i, j) + step_size * grad.get(i, j).to_f64();
                if let Some((lo, hi)) = domain {
                    v = v.clamp(lo, hi);
                }
                candidates.set(i, j, v);
            }
        }
    }
    Ok(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EncoderConfig, VaeConfig};
    use crate::nncore::gradcheck::max_rel_err;
    use crate::synthfn::{
        draw_episode, GeneratorConfig, GeneratorKind, InputSource, KernelKind, KernelSpec,
        SplitMode,
    };

    fn tiny_config() -> ExPTConfig {
        ExPTConfig {
            input_dim: 3,
            encoder: EncoderConfig { layers: 1, dim: 8, heads: 2, dropout: 0.0 },
            vae: VaeConfig { enc_layers: 1, dec_layers: 1, hidden: 8, latent: 2 },
            kl_weight: 1.0,
            recon_variance: 1.0,
            ln_eps: 1e-5,
        }
    }

    fn tiny_episode(dim: usize, context: usize, targets: usize, seed: u64) -> Episode {
        let config = GeneratorConfig {
            dimension: dim,
            points_per_function: context + targets,
            context_size: context,
            lengthscale_range: (5.0, 10.0),
            scale_range: (1.0, 2.0),
            input_source: InputSource::UniformBox { lo: -3.0, hi: 3.0 },
            input_noise_std: 0.0,
            split_mode: SplitMode::Random,
            pool_subsample_ratio: 1.0,
        };
        let spec = KernelSpec::new(KernelKind::Rbf, 6.0, 1.0);
        let mut rng = crate::rng::stream(seed, "tiny-episode", &[]);
        draw_episode(&config, &GeneratorKind::Gp(spec), None, &mut rng).unwrap()
    }

    fn init_model(seed: u64) -> TnpEdModel<f64> {
        let mut rng = crate::rng::stream(seed, "tnp-init", &[]);
        TnpEdModel::init(&tiny_config(), &mut rng).unwrap()
    }

    #[test]
    fn rigged_head_gives_zero_loss() {
        let mut model = init_model(1);
        // Zero the head weights and pin its bias to the constant the targets
        // take, so every prediction is exactly right.
        let w = model.params().find("head/0/w").unwrap();
        let shape = model.params().value(w).shape();
        *model.params_mut().value_mut(w) = Tensor::zeros(shape.0, shape.1);
        let b = model.params().find("head/0/b").unwrap();
        *model.params_mut().value_mut(b) = Tensor::full(1, 1, 0.75);

        let mut ep = tiny_episode(3, 4, 3, 2);
        ep.target_y = vec![0.75; 3];
        let loss = model.tnp_ed_loss(&ep);
        assert!(loss.abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn zero_head_on_standardized_targets_charges_their_variance() {
        let mut model = init_model(2);
        for name in ["head/0/w", "head/0/b"] {
            let id = model.params().find(name).unwrap();
            let shape = model.params().value(id).shape();
            *model.params_mut().value_mut(id) = Tensor::zeros(shape.0, shape.1);
        }

        let mut ep = tiny_episode(3, 4, 8, 3);
        let n = ep.target_y.len() as f64;
        let mean = ep.target_y.iter().sum::<f64>() / n;
        let var = ep.target_y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        for y in &mut ep.target_y {
            *y = (*y - mean) / var.sqrt();
        }
        let loss = model.tnp_ed_loss(&ep);
        assert!((loss - 1.0).abs() < 1e-10, "loss {loss} should equal Var(y) = 1");
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let cfg = ExPTConfig {
            input_dim: 4,
            encoder: EncoderConfig { layers: 2, dim: 16, heads: 2, dropout: 0.0 },
            vae: VaeConfig { enc_layers: 1, dec_layers: 1, hidden: 8, latent: 4 },
            kl_weight: 1.0,
            recon_variance: 1.0,
            ln_eps: 1e-5,
        };
        let mut rng = crate::rng::stream(0, "tnp-init", &[]);
        let mut model = TnpEdModel::<f64>::init(&cfg, &mut rng).unwrap();
        let ep = tiny_episode(4, 3, 2, 4);

        let loss_of = |model: &TnpEdModel<f64>| -> f64 {
            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape);
            let loss = model.loss_on_tape(&mut tape, &bound, &ep, &mut DropoutCtx::eval());
            tape.value(loss).item()
        };

        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let loss = model.loss_on_tape(&mut tape, &bound, &ep, &mut DropoutCtx::eval());
        tape.backward(loss).unwrap();
        let analytic = bound.grads(&tape);

        let h = 1e-5;
        let ids: Vec<ParamId> = model.params().ids().collect();
        let mut fd_all = Vec::with_capacity(ids.len());
        for id in &ids {
            let shape = model.params().value(*id).shape();
            let mut fd = Tensor::zeros(shape.0, shape.1);
            for e in 0..fd.len() {
                let orig = model.params().value(*id).data()[e];
                model.params_mut().value_mut(*id).data_mut()[e] = orig + h;
                let up = loss_of(&model);
                model.params_mut().value_mut(*id).data_mut()[e] = orig - h;
                let down = loss_of(&model);
                model.params_mut().value_mut(*id).data_mut()[e] = orig;
                fd.data_mut()[e] = (up - down) / (2.0 * h);
            }
            fd_all.push(fd);
        }
        let worst = max_rel_err(&analytic, &fd_all);
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn perturbing_one_target_leaves_other_predictions_unchanged() {
        let model = init_model(5);
        let ep = tiny_episode(3, 4, 4, 6);
        let base = model.predict_values(&ep.context_x, &ep.context_y, &ep.target_x);
        for j in 0..ep.target_x.rows() {
            let mut bumped = ep.target_x.clone();
            for c in 0..bumped.cols() {
                bumped.set(j, c, bumped.get(j, c) + 5.0);
            }
            let out = model.predict_values(&ep.context_x, &ep.context_y, &bumped);
            for i in 0..base.len() {
                if i != j {
                    assert_eq!(base[i], out[i], "prediction {i} moved when target {j} did");
                }
            }
        }
    }

    #[test]
    fn top_q_cycles_best_inputs() {
        let x = Tensor::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let y = [0.5, 2.0, 1.0];
        let init = top_q_init(&x, &y, 5);
        // Descending-value order is rows 1, 2, 0; cycling gives 1, 2, 0, 1, 2.
        let expect_rows = [1usize, 2, 0, 1, 2];
        for (i, &r) in expect_rows.iter().enumerate() {
            assert_eq!(init.row(i), x.row(r), "candidate {i}");
        }
    }

    #[test]
    fn zero_steps_returns_the_initialization_exactly() {
        let model = init_model(7);
        let ep = tiny_episode(3, 5, 1, 8);
        let out = tnp_ed_optimize(&model, &ep.context_x, &ep.context_y, 0, 1e-2, 7, Some((-3.0, 3.0)))
            .unwrap();
        let init = top_q_init(&ep.context_x, &ep.context_y, 7);
        assert_eq!(out.data(), init.data());
    }

    #[test]
    fn small_step_ascent_never_worsens_predicted_value() {
        let model = init_model(9);
        let ep = tiny_episode(3, 5, 1, 10);
        let q = 4;
        let init = top_q_init(&ep.context_x, &ep.context_y, q);
        let out = tnp_ed_optimize(&model, &ep.context_x, &ep.context_y, 25, 1e-3, q, Some((-3.0, 3.0)))
            .unwrap();

        let before = model.predict_values(&ep.context_x, &ep.context_y, &init);
        let after = model.predict_values(&ep.context_x, &ep.context_y, &out);
        for i in 0..q {
            assert!(
                after[i] + 1e-12 >= before[i],
                "candidate {i}: {} -> {}",
                before[i],
                after[i]
            );
        }
    }

    #[test]
    fn ascent_respects_the_domain_box() {
        let model = init_model(11);
        let ep = tiny_episode(3, 5, 1, 12);
        let out = tnp_ed_optimize(&model, &ep.context_x, &ep.context_y, 40, 0.5, 6, Some((-1.0, 1.0)))
            .unwrap();
        for v in out.data() {
            assert!(*v >= -1.0 && *v <= 1.0);
        }
    }
}
