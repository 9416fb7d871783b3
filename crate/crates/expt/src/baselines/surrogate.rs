//! Ensemble-of-MLPs surrogate and gradient ascent over it.
//!
//! Each member fits the few-shot pairs directly (no pretraining, no context
//! conditioning); the optimizer then climbs the reduced ensemble prediction.
//! Targets are standardized per training set so the fixed learning rate works
//! across value scales; predictions map back through the stored moments.

use crate::model::ModelError;
use crate::nncore::layers::{Activation, MlpParams};
use crate::nncore::{adamw_step, AdamHyper, OptimizerState, ParamRegistry, Tape, Tensor};

use super::top_q_init;

/// Floor on the target standard deviation so degenerate (constant-value)
/// training sets stay finite; predictions then collapse to the shared mean.
pub const TARGET_STD_FLOOR: f64 = 1e-6;

/// How member predictions combine into the ascent objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceMode {
    /// The lone member's prediction; requires exactly one member.
    Single,
    /// Elementwise minimum over members (pessimistic ensemble).
    Min,
    /// Average over members.
    Mean,
}

#[derive(Clone, Copy, Debug)]
pub struct SurrogateConfig {
    pub members: usize,
    pub reduce: ReduceMode,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig { members: 5, reduce: ReduceMode::Mean, hidden: 256, epochs: 500, lr: 1e-3 }
    }
}

struct SurrogateMember {
    params: ParamRegistry<f64>,
    net: MlpParams,
}

impl SurrogateMember {
    /// Predictions (standardized units) and input gradients of their sum.
    fn predict_with_grad(&self, x: &Tensor<f64>) -> (Vec<f64>, Tensor<f64>) {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let leaf = tape.leaf(x.clone());
        let out = self.net.forward(&mut tape, &bound, leaf);
        let total = tape.sum_all(out);
        tape.backward(total).expect("surrogate forward is differentiable");
        let preds = (0..x.rows()).map(|i| tape.value(out).get(i, 0)).collect();
        let grad = tape.grad(leaf).expect("input leaf is on the loss path").clone();
        (preds, grad)
    }
}

/// Trained ensemble plus the target moments used to (de)standardize.
pub struct SurrogateEnsemble {
    members: Vec<SurrogateMember>,
    reduce: ReduceMode,
    y_mean: f64,
    y_std: f64,
}

/// Per-member final training losses (standardized units) and whether the
/// training targets were all equal, in which case the caller should warn but
/// proceed — the ensemble degenerates to predicting the shared value.
#[derive(Clone, Debug)]
pub struct SurrogateTrainReport {
    pub member_losses: Vec<f64>,
    pub degenerate_targets: bool,
}

impl SurrogateEnsemble {
    pub fn reduce(&self) -> ReduceMode {
        self.reduce
    }

    /// Reduced predictions in raw target units.
    pub fn predict(&self, x: &Tensor<f64>) -> Vec<f64> {
        let per_member: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|m| m.predict_with_grad(x).0)
            .collect();
        (0..x.rows())
            .map(|i| {
                let reduced = match self.reduce {
                    ReduceMode::Single => per_member[0][i],
                    ReduceMode::Min => per_member
                        .iter()
                        .map(|p| p[i])
                        .fold(f64::INFINITY, f64::min),
                    ReduceMode::Mean => {
                        per_member.iter().map(|p| p[i]).sum::<f64>() / per_member.len() as f64
                    }
                };
                self.y_mean + self.y_std * reduced
            })
            .collect()
    }

    /// Ascent direction at each row of `x`: the input gradient of the reduced
    /// prediction, in raw target units. For `Min` the gradient follows the
    /// active (minimal) member at each row, ties to the lowest member index.
    fn objective_grad(&self, x: &Tensor<f64>) -> Tensor<f64> {
        let evals: Vec<(Vec<f64>, Tensor<f64>)> =
            self.members.iter().map(|m| m.predict_with_grad(x)).collect();
        let mut grad = Tensor::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            match self.reduce {
                ReduceMode::Single => {
                    for j in 0..x.cols() {
                        grad.set(i, j, evals[0].1.get(i, j));
                    }
                }
                ReduceMode::Min => {
                    let mut active = 0;
                    for (m, (preds, _)) in evals.iter().enumerate() {
                        if preds[i] < evals[active].0[i] {
                            active = m;
                        }
                    }
                    for j in 0..x.cols() {
                        grad.set(i, j, evals[active].1.get(i, j));
                    }
                }
                ReduceMode::Mean => {
                    for j in 0..x.cols() {
                        let sum: f64 = evals.iter().map(|(_, g)| g.get(i, j)).sum();
                        grad.set(i, j, sum / evals.len() as f64);
                    }
                }
            }
        }
        for v in grad.data_mut() {
            *v *= self.y_std;
        }
        grad
    }
}

/// Fits `config.members` MLPs (two hidden layers, tanh) to the few-shot
/// pairs, full-batch AdamW at a fixed learning rate, one seed stream per
/// member so initializations are pairwise distinct.
pub fn surrogate_train(
    few_shot_x: &Tensor<f64>,
    few_shot_y: &[f64],
    config: &SurrogateConfig,
    seed: u64,
) -> Result<(SurrogateEnsemble, SurrogateTrainReport), ModelError> {
    if few_shot_y.len() < 2 {
        return Err(ModelError::InvalidConfig(format!(
            "surrogate training needs at least 2 few-shot points, got {}",
            few_shot_y.len()
        )));
    }
    if few_shot_x.rows() != few_shot_y.len() {
        return Err(ModelError::InvalidConfig("few-shot x/y length mismatch".into()));
    }
    if config.members == 0 {
        return Err(ModelError::InvalidConfig("ensemble needs at least one member".into()));
    }
    if config.reduce == ReduceMode::Single && config.members != 1 {
        return Err(ModelError::InvalidConfig(format!(
            "Single reduction requires exactly one member, got {}",
            config.members
        )));
    }
    if config.hidden == 0 || config.lr <= 0.0 || !config.lr.is_finite() {
        return Err(ModelError::InvalidConfig("surrogate hidden size and lr must be positive".into()));
    }

    let n = few_shot_y.len();
    let d = few_shot_x.cols();
    let y_mean = few_shot_y.iter().sum::<f64>() / n as f64;
    let var = few_shot_y.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
    let degenerate_targets = var.sqrt() < TARGET_STD_FLOOR;
    let y_std = var.sqrt().max(TARGET_STD_FLOOR);

    let standardized = Tensor::from_fn(n, 1, |i, _| (few_shot_y[i] - y_mean) / y_std);
    let dims = [d, config.hidden, config.hidden, 1];
    let hyper = AdamHyper::default();

    let mut members = Vec::with_capacity(config.members);
    let mut member_losses = Vec::with_capacity(config.members);
    for e in 0..config.members {
        let mut rng = crate::rng::stream(seed, "surrogate-member", &[e as u64]);
        let mut params = ParamRegistry::new();
        let net = MlpParams::init(&mut params, &mut rng, "net", &dims, Activation::Tanh);
        let mut opt = OptimizerState::new(&params);
        for _ in 0..config.epochs {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let x = tape.leaf(few_shot_x.clone());
            let out = net.forward(&mut tape, &bound, x);
            let truth = tape.leaf(standardized.clone());
            let diff = tape.sub(out, truth);
            let sq = tape.mul(diff, diff);
            let loss = tape.mean_all(sq);
            tape.backward(loss)?;
            let grads = bound.grads(&tape);
            adamw_step(&mut params, &grads, &mut opt, &hyper, config.lr);
        }
        // Final loss evaluated after the last update so the report reflects
        // the parameters the ensemble actually keeps.
        let member = SurrogateMember { params, net };
        let preds = member.predict_with_grad(few_shot_x).0;
        let loss = preds
            .iter()
            .zip(standardized.data())
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / n as f64;
        member_losses.push(loss);
        members.push(member);
    }

    let ensemble = SurrogateEnsemble { members, reduce: config.reduce, y_mean, y_std };
    Ok((ensemble, SurrogateTrainReport { member_losses, degenerate_targets }))
}

/// Iterative box-clipped ascent: `x += step_size * grad_fn(x)` for `steps`
/// rounds, clamping every coordinate to `domain` after each update.
pub fn ascend_with(
    mut x: Tensor<f64>,
    steps: usize,
    step_size: f64,
    domain: Option<(f64, f64)>,
    mut grad_fn: impl FnMut(&Tensor<f64>) -> Tensor<f64>,
) -> Tensor<f64> {
    for _ in 0..steps {
        let grad = grad_fn(&x);
        assert_eq!(grad.shape(), x.shape(), "gradient shape mismatch");
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let mut v = x.get(i, j) + step_size * grad.get(i, j);
                if let Some((lo, hi)) = domain {
                    v = v.clamp(lo, hi);
                }
                x.set(i, j, v);
            }
        }
    }
    x
}

/// Gradient ascent on the reduced ensemble prediction, seeded from the best
/// few-shot inputs ([`top_q_init`]) and clipped to `domain` each step.
pub fn grad_ascent_optimize(
    ensemble: &SurrogateEnsemble,
    few_shot_x: &Tensor<f64>,
    few_shot_y: &[f64],
    steps: usize,
    step_size: f64,
    q: usize,
    domain: Option<(f64, f64)>,
) -> Tensor<f64> {
    let init = top_q_init(few_shot_x, few_shot_y, q);
    ascend_with(init, steps, step_size, domain, |x| ensemble.objective_grad(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn uniform_samples(n: usize, d: usize, lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
        let mut rng = crate::rng::stream(seed, "surrogate-test-x", &[]);
        Tensor::from_fn(n, d, |_, _| rng.gen_range(lo..hi))
    }

    #[test]
    fn single_reduction_rejects_extra_members() {
        let x = uniform_samples(4, 2, -1.0, 1.0, 0);
        let y = [0.0, 1.0, 2.0, 3.0];
        let config = SurrogateConfig { members: 2, reduce: ReduceMode::Single, ..Default::default() };
        assert!(surrogate_train(&x, &y, &config, 0).is_err());
    }

    #[test]
    fn training_needs_two_points() {
        let x = uniform_samples(1, 2, -1.0, 1.0, 1);
        let config = SurrogateConfig::default();
        assert!(surrogate_train(&x, &[1.0], &config, 0).is_err());
    }

    #[test]
    fn constant_targets_fit_to_the_shared_value() {
        let x = uniform_samples(20, 2, -3.0, 3.0, 2);
        let y = vec![3.0; 20];
        let config = SurrogateConfig { members: 1, reduce: ReduceMode::Single, ..Default::default() };
        let (ensemble, report) = surrogate_train(&x, &y, &config, 3).unwrap();
        assert!(report.degenerate_targets);
        for p in ensemble.predict(&x) {
            assert!((p - 3.0).abs() < 1e-2, "prediction {p}");
        }
    }

    #[test]
    fn five_members_start_pairwise_distinct() {
        let x = uniform_samples(6, 2, -1.0, 1.0, 4);
        let y = [0.1, -0.4, 0.9, 0.3, -0.2, 0.6];
        let config = SurrogateConfig { members: 5, epochs: 0, ..Default::default() };
        let (ensemble, report) = surrogate_train(&x, &y, &config, 5).unwrap();
        assert!(!report.degenerate_targets);
        for a in 0..5 {
            for b in (a + 1)..5 {
                let wa = ensemble.members[a].params.value(
                    ensemble.members[a].params.find("net/0/w").unwrap(),
                );
                let wb = ensemble.members[b].params.value(
                    ensemble.members[b].params.find("net/0/w").unwrap(),
                );
                assert_ne!(wa.data(), wb.data(), "members {a} and {b} share an init");
            }
        }
    }

    #[test]
    fn min_reduction_follows_a_dominating_member() {
        let x = uniform_samples(12, 2, -2.0, 2.0, 6);
        let y: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let config = SurrogateConfig { members: 3, reduce: ReduceMode::Min, epochs: 50, ..Default::default() };
        let (mut ensemble, _) = surrogate_train(&x, &y, &config, 7).unwrap();

        // Shift member 1's output bias far down: it keeps its shape (and
        // gradients) but always wins the minimum.
        let bias = ensemble.members[1].params.find("net/2/b").unwrap();
        ensemble.members[1]
            .params
            .value_mut(bias)
            .data_mut()[0] = -1e6;

        let joint = grad_ascent_optimize(&ensemble, &x, &y, 30, 1e-2, 4, Some((-2.0, 2.0)));

        let lone = SurrogateEnsemble {
            members: vec![ensemble.members.remove(1)],
            reduce: ReduceMode::Single,
            y_mean: ensemble.y_mean,
            y_std: ensemble.y_std,
        };
        let alone = grad_ascent_optimize(&lone, &x, &y, 30, 1e-2, 4, Some((-2.0, 2.0)));
        assert_eq!(joint.data(), alone.data());
    }

    #[test]
    fn mean_of_identical_members_matches_single() {
        let x = uniform_samples(10, 2, -2.0, 2.0, 8);
        let y: Vec<f64> = (0..10).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let single_cfg = SurrogateConfig { members: 1, reduce: ReduceMode::Single, epochs: 40, ..Default::default() };
        let (a, _) = surrogate_train(&x, &y, &single_cfg, 9).unwrap();
        let (b, _) = surrogate_train(&x, &y, &single_cfg, 9).unwrap();
        let (c, _) = surrogate_train(&x, &y, &single_cfg, 9).unwrap();

        let mut twin_members = a.members;
        twin_members.extend(b.members);
        let twins = SurrogateEnsemble {
            members: twin_members,
            reduce: ReduceMode::Mean,
            y_mean: a.y_mean,
            y_std: a.y_std,
        };

        let mean_path = grad_ascent_optimize(&twins, &x, &y, 25, 1e-2, 3, Some((-2.0, 2.0)));
        let single_path = grad_ascent_optimize(&c, &x, &y, 25, 1e-2, 3, Some((-2.0, 2.0)));
        assert_eq!(mean_path.data(), single_path.data());
    }

    #[test]
    fn ascent_on_fitted_concave_bowl_reaches_the_origin() {
        let x = uniform_samples(200, 2, -3.0, 3.0, 10);
        let y: Vec<f64> = (0..200)
            .map(|i| -(x.get(i, 0).powi(2) + x.get(i, 1).powi(2)))
            .collect();
        let config = SurrogateConfig { members: 1, reduce: ReduceMode::Single, ..Default::default() };
        let (ensemble, report) = surrogate_train(&x, &y, &config, 11).unwrap();
        assert!(report.member_losses[0] < 0.05, "fit loss {}", report.member_losses[0]);

        let start = Tensor::from_fn(1, 2, |_, _| 2.0);
        let out = grad_ascent_optimize(&ensemble, &start, &[-8.0], 200, 1e-2, 1, Some((-3.0, 3.0)));
        let dist = (out.get(0, 0).powi(2) + out.get(0, 1).powi(2)).sqrt();
        assert!(dist < 0.5, "ended at ({}, {}), {dist} from origin", out.get(0, 0), out.get(0, 1));
    }

    #[test]
    fn small_steps_track_continuous_gradient_flow_on_quadratics() {
        // f(x) = -a (x - c)^2 has gradient flow x(t) = c + (x0 - c) e^{-2at}.
        for &(a, c, x0) in &[(1.0, 1.0, 3.0), (2.5, -0.5, -2.0)] {
            let tau = 0.5;
            let step = 1e-4;
            let steps = (tau / step) as usize;
            let out = ascend_with(
                Tensor::from_fn(1, 1, |_, _| x0),
                steps,
                step,
                None,
                |x| Tensor::from_fn(1, 1, |_, _| -2.0 * a * (x.get(0, 0) - c)),
            );
            let exact = c + (x0 - c) * (-2.0 * a * tau).exp();
            let err = (out.get(0, 0) - exact).abs();
            assert!(
                err < 0.05 * (x0 - c).abs(),
                "a={a}: discrete {} vs flow {exact}",
                out.get(0, 0)
            );
        }
    }

    #[test]
    fn huge_steps_stay_inside_the_box() {
        let x = uniform_samples(8, 2, -1.0, 1.0, 12);
        let y: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let config = SurrogateConfig { members: 2, epochs: 30, ..Default::default() };
        let (ensemble, _) = surrogate_train(&x, &y, &config, 13).unwrap();
        let out = grad_ascent_optimize(&ensemble, &x, &y, 20, 10.0, 5, Some((-1.5, 1.5)));
        for v in out.data() {
            assert!(*v >= -1.5 && *v <= 1.5);
        }
    }
}
