//! Episode assembly: sample inputs, evaluate a generated function, split into
//! context and target sets.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gp::sample_gp_values;
use super::kernel::{KernelKind, KernelSpec};
use super::mlp::{mlp_function_values, MlpGeneratorSpec};
use super::SynthError;
use crate::nncore::tensor::Tensor;

/// Where episode inputs come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InputSource {
    /// Every coordinate i.i.d. U[lo, hi].
    UniformBox { lo: f64, hi: f64 },
    /// Rows drawn with replacement from a design pool, plus per-coordinate
    /// Gaussian noise.
    Pool { pool_id: String },
}

/// How sampled points are split into context and target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Uniform permutation; first m points become context.
    Random,
    /// The m lowest-y points become context, so targets always improve on
    /// the context — mirrors adaptation, where y★ exceeds the few-shot set.
    Sorted,
}

/// Parameters of the synthetic-episode distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub dimension: usize,
    /// N_total: points sampled per function.
    pub points_per_function: usize,
    /// m: how many of them form the context.
    pub context_size: usize,
    pub lengthscale_range: (f64, f64),
    pub scale_range: (f64, f64),
    pub input_source: InputSource,
    pub input_noise_std: f64,
    pub split_mode: SplitMode,
    /// Fraction of the pool available for input sampling (Pool mode).
    pub pool_subsample_ratio: f64,
}

impl GeneratorConfig {
    pub fn validate(&self, pool: Option<&Tensor<f64>>) -> Result<(), SynthError> {
        if self.dimension == 0 {
            return Err(SynthError::InvalidSpec("dimension must be positive".into()));
        }
        if self.context_size == 0 || self.context_size >= self.points_per_function {
            return Err(SynthError::InvalidSpec(format!(
                "need 0 < context_size < points_per_function, got {} / {}",
                self.context_size, self.points_per_function
            )));
        }
        let (llo, lhi) = self.lengthscale_range;
        if !(llo > 0.0 && llo <= lhi && lhi.is_finite()) {
            return Err(SynthError::InvalidSpec(format!(
                "lengthscale_range must satisfy 0 < lo ≤ hi, got [{llo}, {lhi}]"
            )));
        }
        let (slo, shi) = self.scale_range;
        if !(slo >= 0.0 && slo <= shi && shi.is_finite()) {
            return Err(SynthError::InvalidSpec(format!(
                "scale_range must satisfy 0 ≤ lo ≤ hi, got [{slo}, {shi}]"
            )));
        }
        if !(self.input_noise_std >= 0.0) || !self.input_noise_std.is_finite() {
            return Err(SynthError::InvalidSpec(format!(
                "input_noise_std must be non-negative, got {}",
                self.input_noise_std
            )));
        }
        if !(self.pool_subsample_ratio > 0.0 && self.pool_subsample_ratio <= 1.0) {
            return Err(SynthError::InvalidSpec(format!(
                "pool_subsample_ratio must be in (0, 1], got {}",
                self.pool_subsample_ratio
            )));
        }
        if let InputSource::UniformBox { lo, hi } = self.input_source {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(SynthError::InvalidSpec(format!(
                    "uniform box must satisfy lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        if matches!(self.input_source, InputSource::Pool { .. }) {
            let pool = pool.ok_or(SynthError::EmptyPool)?;
            if pool.rows() == 0 {
                return Err(SynthError::EmptyPool);
            }
            if pool.cols() != self.dimension {
                return Err(SynthError::InvalidSpec(format!(
                    "pool dimension {} does not match config dimension {}",
                    pool.cols(),
                    self.dimension
                )));
            }
        }
        Ok(())
    }
}

/// Which function family an episode is drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GeneratorKind {
    Gp(KernelSpec),
    Mlp(MlpGeneratorSpec),
}

/// One sampled function's points, split for in-context training.
#[derive(Clone, Debug)]
pub struct Episode {
    pub context_x: Tensor<f64>,
    pub context_y: Vec<f64>,
    pub target_x: Tensor<f64>,
    pub target_y: Vec<f64>,
    pub provenance: GeneratorKind,
}

impl Episode {
    pub fn context_size(&self) -> usize {
        self.context_y.len()
    }

    pub fn target_size(&self) -> usize {
        self.target_y.len()
    }

    pub fn dimension(&self) -> usize {
        self.context_x.cols()
    }
}

/// Keep a uniformly chosen `ratio` fraction of the pool (without
/// replacement, at least implied by floor(ratio·P) ≥ 1). Run-level callers
/// apply this once with a dedicated stream so the restricted pool is fixed
/// for the whole run.
pub fn subsample_pool(
    pool: &Tensor<f64>,
    ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<f64>, SynthError> {
    if pool.rows() == 0 {
        return Err(SynthError::EmptyPool);
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(SynthError::InvalidSpec(format!(
            "subsample ratio must be in (0, 1], got {ratio}"
        )));
    }
    let keep = (ratio * pool.rows() as f64).floor() as usize;
    if keep == 0 {
        return Err(SynthError::SubsampleTooSmall {
            ratio,
            rows: pool.rows(),
        });
    }
    if keep == pool.rows() {
        return Ok(pool.clone());
    }
    let mut idx: Vec<usize> = (0..pool.rows()).collect();
    idx.shuffle(rng);
    idx.truncate(keep);
    idx.sort_unstable();
    let mut out = Tensor::zeros(keep, pool.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(pool.row(i));
    }
    Ok(out)
}

/// Sample N_total input rows per the config. UniformBox coordinates are
/// exact box draws (no noise); Pool rows are drawn with replacement from the
/// subsampled pool and then perturbed by N(0, input_noise_std²) noise.
pub fn sample_inputs(
    config: &GeneratorConfig,
    pool: Option<&Tensor<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<f64>, SynthError> {
    config.validate(pool)?;
    let n = config.points_per_function;
    let d = config.dimension;
    match &config.input_source {
        InputSource::UniformBox { lo, hi } => {
            Ok(Tensor::from_fn(n, d, |_, _| rng.gen_range(*lo..*hi)))
        }
        InputSource::Pool { .. } => {
            let pool = pool.expect("validated above");
            let effective = subsample_pool(pool, config.pool_subsample_ratio, rng)?;
            let mut out = Tensor::zeros(n, d);
            for r in 0..n {
                let i = rng.gen_range(0..effective.rows());
                out.row_mut(r).copy_from_slice(effective.row(i));
            }
            if config.input_noise_std > 0.0 {
                let sd = config.input_noise_std;
                for v in out.data_mut() {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    *v += z * sd;
                }
            }
            Ok(out)
        }
    }
}

/// Draw a kernel spec from the config's ℓ/σ ranges (`Gp` families) or a
/// random MLP spec from the menus.
pub fn sample_generator(
    config: &GeneratorConfig,
    family: GeneratorFamily,
    rng: &mut ChaCha8Rng,
) -> GeneratorKind {
    match family {
        GeneratorFamily::Gp(kind) => {
            let (llo, lhi) = config.lengthscale_range;
            let (slo, shi) = config.scale_range;
            let ell = if llo == lhi { llo } else { rng.gen_range(llo..lhi) };
            let sigma = if slo == shi { slo } else { rng.gen_range(slo..shi) };
            GeneratorKind::Gp(KernelSpec::new(kind, ell, sigma))
        }
        GeneratorFamily::Mlp => GeneratorKind::Mlp(MlpGeneratorSpec::sample(rng)),
    }
}

/// Function family selector for pretraining streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorFamily {
    Gp(KernelKind),
    Mlp,
}

/// Sample one full episode: inputs → function values → context/target split.
pub fn draw_episode(
    config: &GeneratorConfig,
    generator: &GeneratorKind,
    pool: Option<&Tensor<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<Episode, SynthError> {
    let x = sample_inputs(config, pool, rng)?;
    let y = match generator {
        GeneratorKind::Gp(spec) => sample_gp_values(&x, spec, rng)?,
        GeneratorKind::Mlp(spec) => mlp_function_values(&x, spec)?,
    };

    let n = config.points_per_function;
    let m = config.context_size;
    let order: Vec<usize> = match config.split_mode {
        SplitMode::Random => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx
        }
        SplitMode::Sorted => {
            // Ascending by y (ties broken by index): the m lowest go to
            // context, so max(context_y) ≤ min(target_y).
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
            idx
        }
    };

    let d = config.dimension;
    let gather = |ix: &[usize]| {
        let mut gx = Tensor::zeros(ix.len(), d);
        let mut gy = Vec::with_capacity(ix.len());
        for (r, &i) in ix.iter().enumerate() {
            gx.row_mut(r).copy_from_slice(x.row(i));
            gy.push(y[i]);
        }
        (gx, gy)
    };
    let (context_x, context_y) = gather(&order[..m]);
    let (target_x, target_y) = gather(&order[m..]);

    Ok(Episode {
        context_x,
        context_y,
        target_x,
        target_y,
        provenance: generator.clone(),
    })
}
