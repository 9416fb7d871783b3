//! Candidate scoring and the two evaluation protocols.
//!
//! Simultaneous adaptation proposes a whole batch against the few-shot
//! context; sequential adaptation proposes one point per round and folds the
//! oracle's answer back into the context before the next. Both spend exactly
//! `q` ground-truth queries and summarize normalized scores the same way.

use crate::baselines::{grad_ascent_optimize, tnp_ed_optimize, SurrogateEnsemble, TnpEdModel};
use crate::model::ExPTModel;
use crate::nncore::{Real, Tensor};
use crate::par::{chunk_range, map_chunks, GRAD_CHUNKS};

use super::{EvalError, FewShotDataset, Oracle};

/// Ground-truth queries per adaptation run.
pub const DEFAULT_Q: usize = 256;

/// Run identity stamped into every report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportMeta {
    pub seed: u64,
    pub checkpoint_step: u64,
    pub config_hash: String,
}

/// Scores and summary statistics for one adaptation run. The statistics are
/// recomputable from `scores_norm`: `median` is the lower-middle order
/// statistic, `max` and `mean` are over the same vector.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub scores_raw: Vec<f64>,
    pub scores_norm: Vec<f64>,
    pub median: f64,
    pub max: f64,
    pub mean: f64,
    pub few_shot_best_norm: f64,
    pub seed: u64,
    pub checkpoint_step: u64,
    pub config_hash: String,
}

/// The adaptation strategy to score.
pub enum AdaptMethod<'a, T: Real> {
    /// Condition the pretrained inverse model on the oracle's target value
    /// and decode candidates.
    ExPT { model: &'a ExPTModel<T>, match_scale: f64 },
    /// Gradient-ascend candidate inputs through the pretrained forward
    /// model, few-shot pairs as context.
    TnpEd { model: &'a TnpEdModel<T>, steps: usize, step_size: f64 },
    /// Gradient-ascend the from-scratch surrogate ensemble.
    GradAscent { ensemble: &'a SurrogateEnsemble, steps: usize, step_size: f64 },
}

fn summarize(
    scores_raw: Vec<f64>,
    oracle: &Oracle,
    few_shot_best: f64,
    meta: &ReportMeta,
) -> EvalReport {
    let q = scores_raw.len();
    let scores_norm: Vec<f64> = scores_raw.iter().map(|&y| oracle.normalize(y)).collect();
    let mut sorted = scores_norm.clone();
    sorted.sort_by(f64::total_cmp);
    EvalReport {
        median: sorted[(q - 1) / 2],
        max: sorted[q - 1],
        mean: scores_norm.iter().sum::<f64>() / q as f64,
        few_shot_best_norm: oracle.normalize(few_shot_best),
        scores_raw,
        scores_norm,
        seed: meta.seed,
        checkpoint_step: meta.checkpoint_step,
        config_hash: meta.config_hash.clone(),
    }
}

/// Score a candidate batch against the oracle: exactly one ground-truth
/// query per row, all rows checked against the domain box first.
pub fn evaluate_candidates(
    candidates: &Tensor<f64>,
    oracle: &Oracle,
    few_shot_best: f64,
    meta: &ReportMeta,
) -> Result<EvalReport, EvalError> {
    let q = candidates.rows();
    if q == 0 {
        return Err(EvalError::NoCandidates);
    }
    if candidates.cols() != oracle.dim() {
        return Err(EvalError::InvalidSelection(format!(
            "candidates have {} coordinates but the oracle expects {}",
            candidates.cols(),
            oracle.dim()
        )));
    }
    let (lo, hi) = oracle.domain();
    for i in 0..q {
        for j in 0..candidates.cols() {
            let v = candidates.get(i, j);
            if !(v >= lo && v <= hi) {
                return Err(EvalError::OutOfBox { row: i, coord: j, value: v, lo, hi });
            }
        }
    }

    let chunks = map_chunks(GRAD_CHUNKS, |c| {
        chunk_range(q, GRAD_CHUNKS, c)
            .map(|i| oracle.evaluate(candidates.row(i)))
            .collect::<Vec<f64>>()
    });
    let scores_raw: Vec<f64> = chunks.into_iter().flatten().collect();
    Ok(summarize(scores_raw, oracle, few_shot_best, meta))
}

/// Propose `q` candidates in one shot from the few-shot context and score
/// them. The inverse model conditions on the oracle's `y_star`.
pub fn run_adaptation<T: Real>(
    method: &AdaptMethod<'_, T>,
    few_shot: &FewShotDataset,
    oracle: &Oracle,
    q: usize,
    meta: &ReportMeta,
) -> Result<EvalReport, EvalError> {
    if few_shot.is_empty() {
        return Err(EvalError::EmptySource);
    }
    let domain = oracle.domain();
    let candidates = match method {
        AdaptMethod::ExPT { model, match_scale } => {
            let mut rng = crate::rng::stream(meta.seed, "candidate", &[0]);
            model.generate_candidates(
                &few_shot.x,
                &few_shot.y,
                oracle.y_star(),
                q,
                *match_scale,
                Some(domain),
                &mut rng,
            )
        }
        AdaptMethod::TnpEd { model, steps, step_size } => {
            tnp_ed_optimize(model, &few_shot.x, &few_shot.y, *steps, *step_size, q, Some(domain))?
        }
        AdaptMethod::GradAscent { ensemble, steps, step_size } => {
            grad_ascent_optimize(ensemble, &few_shot.x, &few_shot.y, *steps, *step_size, q, Some(domain))
        }
    };
    evaluate_candidates(&candidates, oracle, few_shot.best_y(), meta)
}

/// Propose and score one candidate per round, appending each oracle answer
/// to the context before the next proposal. Spends the same `q` queries as
/// [`run_adaptation`] and reuses its per-round candidate streams, so one
/// round of each is identical. Strictly serialized by construction.
pub fn run_sequential<T: Real>(
    model: &ExPTModel<T>,
    match_scale: f64,
    few_shot: &FewShotDataset,
    oracle: &Oracle,
    q: usize,
    meta: &ReportMeta,
) -> Result<EvalReport, EvalError> {
    if few_shot.is_empty() {
        return Err(EvalError::EmptySource);
    }
    if q == 0 {
        return Err(EvalError::NoCandidates);
    }
    let domain = oracle.domain();
    let d = few_shot.x.cols();
    let mut ctx_x = few_shot.x.clone();
    let mut ctx_y = few_shot.y.clone();
    let mut scores_raw = Vec::with_capacity(q);
    for round in 0..q {
        let mut rng = crate::rng::stream(meta.seed, "candidate", &[round as u64]);
        let cand = model.generate_candidates(
            &ctx_x,
            &ctx_y,
            oracle.y_star(),
            1,
            match_scale,
            Some(domain),
            &mut rng,
        );
        let x = cand.row(0);
        for (j, &v) in x.iter().enumerate() {
            if !(v >= domain.0 && v <= domain.1) {
                return Err(EvalError::OutOfBox {
                    row: round,
                    coord: j,
                    value: v,
                    lo: domain.0,
                    hi: domain.1,
                });
            }
        }
        let y = oracle.evaluate(x);
        scores_raw.push(y);
        let grown = Tensor::from_fn(ctx_x.rows() + 1, d, |i, j| {
            if i < ctx_x.rows() {
                ctx_x.get(i, j)
            } else {
                x[j]
            }
        });
        ctx_x = grown;
        ctx_y.push(y);
    }
    debug_assert_eq!(ctx_y.len(), few_shot.len() + q);
    Ok(summarize(scores_raw, oracle, few_shot.best_y(), meta))
}
