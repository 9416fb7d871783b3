//! Few-shot context construction from a reference dataset.
//!
//! Selection is seeded and recorded in the dataset's provenance so a report
//! can name exactly which slice of the source the method saw. The
//! below-percentile mode mirrors the usual offline-optimization protocol:
//! condition only on points strictly worse than a value cutoff.

use rand::seq::index::sample;

use crate::nncore::Tensor;

use super::EvalError;

/// How the few-shot pairs were chosen from the source dataset.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum SelectionMode {
    /// `⌈p·n⌉` points uniformly without replacement, `0 < p ≤ 1`.
    RandomFraction(f64),
    /// The `⌈p·n⌉` lowest-valued points, ties broken by index.
    PoorestFraction(f64),
    /// `count` points sampled uniformly among those with values strictly
    /// below the nearest-rank `pct`-th percentile.
    BelowPercentile { count: usize, pct: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FewShotProvenance {
    pub mode: SelectionMode,
    pub source_size: usize,
    pub seed: u64,
}

/// The pairs a method is allowed to condition on.
#[derive(Clone, Debug)]
pub struct FewShotDataset {
    pub x: Tensor<f64>,
    pub y: Vec<f64>,
    pub provenance: FewShotProvenance,
}

impl FewShotDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// The best value seen in the context.
    pub fn best_y(&self) -> f64 {
        self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Nearest-rank percentile: the smallest value with at least `pct` percent
/// of the data at or below it.
fn nearest_rank_percentile(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = ((pct / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Select few-shot pairs from `(source_x, source_y)` under `mode`, seeded so
/// the same arguments always pick the same subset.
pub fn make_few_shot(
    source_x: &Tensor<f64>,
    source_y: &[f64],
    mode: SelectionMode,
    seed: u64,
) -> Result<FewShotDataset, EvalError> {
    let n = source_y.len();
    if n == 0 {
        return Err(EvalError::EmptySource);
    }
    if source_x.rows() != n {
        return Err(EvalError::InvalidSelection(format!(
            "source has {} input rows but {} values",
            source_x.rows(),
            n
        )));
    }

    let mut rng = crate::rng::stream(seed, "few-shot", &[]);
    let indices: Vec<usize> = match mode {
        SelectionMode::RandomFraction(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(EvalError::InvalidSelection(format!(
                    "random fraction must be in (0, 1], got {p}"
                )));
            }
            let k = (p * n as f64).ceil() as usize;
            let mut picked = sample(&mut rng, n, k).into_vec();
            picked.sort_unstable();
            picked
        }
        SelectionMode::PoorestFraction(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(EvalError::InvalidSelection(format!(
                    "poorest fraction must be in (0, 1], got {p}"
                )));
            }
            let k = (p * n as f64).ceil() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| source_y[a].total_cmp(&source_y[b]).then(a.cmp(&b)));
            order.truncate(k);
            order
        }
        SelectionMode::BelowPercentile { count, pct } => {
            if count == 0 {
                return Err(EvalError::InvalidSelection("count must be positive".into()));
            }
            if !(0.0..=100.0).contains(&pct) {
                return Err(EvalError::InvalidSelection(format!(
                    "percentile must be in [0, 100], got {pct}"
                )));
            }
            let mut sorted = source_y.to_vec();
            sorted.sort_by(f64::total_cmp);
            let threshold = nearest_rank_percentile(&sorted, pct);
            let eligible: Vec<usize> = (0..n).filter(|&i| source_y[i] < threshold).collect();
            if eligible.len() < count {
                return Err(EvalError::InsufficientEligible {
                    eligible: eligible.len(),
                    requested: count,
                });
            }
            let mut picked: Vec<usize> = sample(&mut rng, eligible.len(), count)
                .iter()
                .map(|j| eligible[j])
                .collect();
            picked.sort_unstable();
            picked
        }
    };

    let x = Tensor::from_fn(indices.len(), source_x.cols(), |i, j| source_x.get(indices[i], j));
    let y = indices.iter().map(|&i| source_y[i]).collect();
    Ok(FewShotDataset {
        x,
        y,
        provenance: FewShotProvenance { mode, source_size: n, seed },
    })
}
