//! Run configuration: one TOML file reproduces one experiment.
//!
//! A file may start from a named `preset` and override any subset of keys;
//! the merged result must deserialize cleanly (unknown keys are rejected by
//! name) and then passes semantic validation. The canonical hash covers the
//! fully resolved configuration, so it is invariant to key order, comments,
//! and whitespace in the source file, but changes whenever any effective
//! value does.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{ReduceMode, SurrogateConfig};
use crate::eval::SelectionMode;
use crate::model::{EncoderConfig, ExPTConfig, VaeConfig};
use crate::nncore::{AdamHyper, LrSchedule};
use crate::synthfn::{
    GeneratorConfig, GeneratorFamily, InputSource, KernelKind, KernelSpec, SplitMode,
};

use super::PipelineError;

/// Which architecture a checkpoint holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Expt,
    TnpEd,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Expt => "expt",
            ModelKind::TnpEd => "tnp-ed",
        }
    }

    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        match s {
            "expt" => Ok(ModelKind::Expt),
            "tnp-ed" => Ok(ModelKind::TnpEd),
            other => Err(PipelineError::Config(format!(
                "model.kind: expected \"expt\" or \"tnp-ed\", got {other:?}"
            ))),
        }
    }
}

/// The adaptation strategy named in `adapt.method`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodName {
    Expt,
    TnpEd,
    GradAscent,
    GradAscentMin,
    GradAscentMean,
}

impl MethodName {
    pub fn name(self) -> &'static str {
        match self {
            MethodName::Expt => "expt",
            MethodName::TnpEd => "tnp-ed",
            MethodName::GradAscent => "grad-ascent",
            MethodName::GradAscentMin => "grad-ascent-min",
            MethodName::GradAscentMean => "grad-ascent-mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        match s {
            "expt" => Ok(MethodName::Expt),
            "tnp-ed" => Ok(MethodName::TnpEd),
            "grad-ascent" => Ok(MethodName::GradAscent),
            "grad-ascent-min" => Ok(MethodName::GradAscentMin),
            "grad-ascent-mean" => Ok(MethodName::GradAscentMean),
            other => Err(PipelineError::Config(format!(
                "adapt.method: unknown method {other:?} (expected expt, tnp-ed, \
                 grad-ascent, grad-ascent-min, or grad-ascent-mean)"
            ))),
        }
    }

    /// Whether the method needs a pretrained checkpoint.
    pub fn needs_checkpoint(self) -> bool {
        matches!(self, MethodName::Expt | MethodName::TnpEd)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// "expt" (inverse model) or "tnp-ed" (forward baseline).
    pub kind: String,
    pub input_dim: usize,
    pub kl_weight: f64,
    pub recon_variance: f64,
    pub ln_eps: f64,
    pub encoder: EncoderConfig,
    pub vae: VaeConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        let arch = ExPTConfig::default();
        ModelSection {
            kind: "expt".into(),
            input_dim: arch.input_dim,
            kl_weight: arch.kl_weight,
            recon_variance: arch.recon_variance,
            ln_eps: arch.ln_eps,
            encoder: arch.encoder,
            vae: arch.vae,
        }
    }
}

impl ModelSection {
    pub fn arch(&self) -> ExPTConfig {
        ExPTConfig {
            input_dim: self.input_dim,
            encoder: self.encoder,
            vae: self.vae,
            kl_weight: self.kl_weight,
            recon_variance: self.recon_variance,
            ln_eps: self.ln_eps,
        }
    }

    pub fn model_kind(&self) -> Result<ModelKind, PipelineError> {
        ModelKind::parse(&self.kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    /// "gp" draws kernel hyperparameters per episode; "mlp" draws random
    /// network generators.
    pub family: String,
    pub kernel: KernelKind,
    pub dimension: usize,
    pub points_per_function: usize,
    pub context_size: usize,
    pub lengthscale_range: (f64, f64),
    pub scale_range: (f64, f64),
    pub box_lo: f64,
    pub box_hi: f64,
    pub input_noise_std: f64,
    pub split_mode: SplitMode,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        GeneratorSection {
            family: "gp".into(),
            kernel: KernelKind::Rbf,
            dimension: 32,
            points_per_function: 228,
            context_size: 100,
            lengthscale_range: (5.0, 10.0),
            scale_range: (1.0, 10.0),
            box_lo: -3.0,
            box_hi: 3.0,
            input_noise_std: 0.0,
            split_mode: SplitMode::Random,
        }
    }
}

impl GeneratorSection {
    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            dimension: self.dimension,
            points_per_function: self.points_per_function,
            context_size: self.context_size,
            lengthscale_range: self.lengthscale_range,
            scale_range: self.scale_range,
            input_source: InputSource::UniformBox { lo: self.box_lo, hi: self.box_hi },
            input_noise_std: self.input_noise_std,
            split_mode: self.split_mode,
            pool_subsample_ratio: 1.0,
        }
    }

    pub fn generator_family(&self) -> Result<GeneratorFamily, PipelineError> {
        match self.family.as_str() {
            "gp" => Ok(GeneratorFamily::Gp(self.kernel)),
            "mlp" => Ok(GeneratorFamily::Mlp),
            other => Err(PipelineError::Config(format!(
                "generator.family: expected \"gp\" or \"mlp\", got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub iterations: u64,
    pub batch_functions: usize,
    /// Save a checkpoint every this many steps (0 = final only).
    pub checkpoint_every: u64,
    pub peak_lr: f64,
    pub warmup: u64,
    pub anneal: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let hyper = AdamHyper::default();
        let schedule = LrSchedule::default();
        PretrainSection {
            iterations: 2000,
            batch_functions: 128,
            checkpoint_every: 200,
            peak_lr: schedule.peak,
            warmup: schedule.warmup,
            anneal: schedule.anneal,
            beta1: hyper.beta1,
            beta2: hyper.beta2,
            adam_eps: hyper.eps,
            weight_decay: hyper.weight_decay,
        }
    }
}

impl PretrainSection {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { peak: self.peak_lr, warmup: self.warmup, anneal: self.anneal }
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewShotSection {
    /// "random-fraction", "poorest-fraction", or "below-percentile".
    pub mode: String,
    pub fraction: f64,
    pub count: usize,
    pub pct: f64,
    /// Selection seed — fixed independently of the run seed so every method
    /// and seed sees the same few-shot set on a given task.
    pub seed: u64,
}

impl Default for FewShotSection {
    fn default() -> Self {
        FewShotSection { mode: "below-percentile".into(), fraction: 0.01, count: 100, pct: 20.0, seed: 0 }
    }
}

impl FewShotSection {
    pub fn selection_mode(&self) -> Result<SelectionMode, PipelineError> {
        match self.mode.as_str() {
            "random-fraction" => Ok(SelectionMode::RandomFraction(self.fraction)),
            "poorest-fraction" => Ok(SelectionMode::PoorestFraction(self.fraction)),
            "below-percentile" => {
                Ok(SelectionMode::BelowPercentile { count: self.count, pct: self.pct })
            }
            other => Err(PipelineError::Config(format!(
                "adapt.few_shot.mode: unknown mode {other:?} (expected random-fraction, \
                 poorest-fraction, or below-percentile)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub lengthscale: f64,
    pub scale: f64,
    /// Reference table size.
    pub points: usize,
    /// Spectral features of the sampled function.
    pub features: usize,
    /// Evaluate the underlying draw instead of snapping to the table.
    pub exact: bool,
    /// Function/table seed — fixed independently of the run seed so every
    /// method sees the same task.
    pub seed: u64,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            lengthscale: 7.5,
            scale: 1.0,
            points: 20_000,
            features: 2048,
            exact: false,
            seed: 0,
        }
    }
}

impl OracleSection {
    pub fn kernel_spec(&self, kernel: KernelKind) -> KernelSpec {
        KernelSpec::new(kernel, self.lengthscale, self.scale)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSection {
    pub members: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        let c = SurrogateConfig::default();
        SurrogateSection { members: c.members, hidden: c.hidden, epochs: c.epochs, lr: c.lr }
    }
}

impl SurrogateSection {
    /// The ensemble configuration for a gradient-ascent method variant.
    pub fn surrogate_config(&self, method: MethodName) -> SurrogateConfig {
        let (members, reduce) = match method {
            MethodName::GradAscent => (1, ReduceMode::Single),
            MethodName::GradAscentMin => (self.members, ReduceMode::Min),
            _ => (self.members, ReduceMode::Mean),
        };
        SurrogateConfig {
            members,
            reduce,
            hidden: self.hidden,
            epochs: self.epochs,
            lr: self.lr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSection {
    /// Candidates proposed (and ground-truth queries spent) per run.
    pub q: usize,
    pub method: String,
    /// Multiplier on the standardized target value the inverse model
    /// conditions on.
    pub match_scale: f64,
    pub ascent_steps: usize,
    pub ascent_step_size: f64,
    pub few_shot: FewShotSection,
    pub oracle: OracleSection,
    pub surrogate: SurrogateSection,
}

impl Default for AdaptSection {
    fn default() -> Self {
        AdaptSection {
            q: crate::eval::DEFAULT_Q,
            method: "expt".into(),
            match_scale: 1.0,
            ascent_steps: 200,
            ascent_step_size: 1e-2,
            few_shot: FewShotSection::default(),
            oracle: OracleSection::default(),
            surrogate: SurrogateSection::default(),
        }
    }
}

impl AdaptSection {
    pub fn method_name(&self) -> Result<MethodName, PipelineError> {
        MethodName::parse(&self.method)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub seeds: Vec<u64>,
    pub kernels: Vec<KernelKind>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            seeds: vec![0, 1, 2],
            kernels: vec![
                KernelKind::Matern52,
                KernelKind::Linear,
                KernelKind::Cosine,
                KernelKind::Periodic,
            ],
        }
    }
}

/// Fully resolved experiment configuration. Field defaults are the
/// paper-scale synthetic setup; the `desk-micro` preset shrinks everything
/// to a single-core footprint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub out_dir: String,
    /// Checkpoint steps the sweep evaluates (empty = final only).
    pub eval_checkpoints: Vec<u64>,
    pub model: ModelSection,
    pub generator: GeneratorSection,
    pub pretrain: PretrainSection,
    pub adapt: AdaptSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: "paper-synthetic".into(),
            seed: 0,
            out_dir: "runs".into(),
            eval_checkpoints: Vec::new(),
            model: ModelSection::default(),
            generator: GeneratorSection::default(),
            pretrain: PretrainSection::default(),
            adapt: AdaptSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Single-core-sized preset: 8-D functions, a small encoder, and a short
/// schedule, with sweep checkpoints at 10% and 100% of training.
pub fn desk_micro() -> RunConfig {
    RunConfig {
        run_id: "desk-micro".into(),
        eval_checkpoints: vec![50, 500],
        model: ModelSection {
            input_dim: 8,
            encoder: EncoderConfig { layers: 2, dim: 64, heads: 4, dropout: 0.1 },
            // A narrow latent (k << d) keeps the posterior from copying x
            // through z wholesale; at this scale a wide latent lets the
            // decoder ignore the conditioning embedding entirely.
            vae: VaeConfig { enc_layers: 2, dec_layers: 2, hidden: 128, latent: 2 },
            ..ModelSection::default()
        },
        generator: GeneratorSection {
            dimension: 8,
            points_per_function: 64,
            context_size: 32,
            ..GeneratorSection::default()
        },
        pretrain: PretrainSection {
            iterations: 500,
            batch_functions: 64,
            checkpoint_every: 50,
            peak_lr: 1e-3,
            warmup: 50,
            anneal: 450,
            ..PretrainSection::default()
        },
        adapt: AdaptSection {
            // Test functions a bit rougher than the pretraining prior's
            // smoothest draws, so adaptation quality actually separates
            // models trained on sensible vs. degenerate lengthscales.
            oracle: OracleSection { lengthscale: 4.0, ..OracleSection::default() },
            ..AdaptSection::default()
        },
        ..RunConfig::default()
    }
}

fn preset_by_name(name: &str) -> Result<RunConfig, PipelineError> {
    match name {
        "paper-synthetic" => Ok(RunConfig::default()),
        "desk-micro" => Ok(desk_micro()),
        other => Err(PipelineError::Config(format!(
            "preset: unknown preset {other:?} (expected paper-synthetic or desk-micro)"
        ))),
    }
}

/// Recursively overlay `over` onto `base`: tables merge keywise, everything
/// else (including arrays) replaces.
fn merge_value(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_value(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parse a configuration document: apply its `preset` (if any), overlay the
/// explicit keys, reject unknown ones by name, and validate.
pub fn parse_config(text: &str) -> Result<RunConfig, PipelineError> {
    let mut doc: toml::Table =
        toml::from_str(text).map_err(|e| PipelineError::Config(format!("config parse: {e}")))?;
    let base = match doc.remove("preset") {
        None => RunConfig::default(),
        Some(toml::Value::String(name)) => preset_by_name(&name)?,
        Some(other) => {
            return Err(PipelineError::Config(format!(
                "preset: expected a string, got {other}"
            )))
        }
    };
    let mut merged = toml::Value::try_from(&base)
        .map_err(|e| PipelineError::Config(format!("config encode: {e}")))?;
    merge_value(&mut merged, toml::Value::Table(doc));
    let config: RunConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| PipelineError::Config(format!("config: {e}")))?;
    config.validate()?;
    Ok(config)
}

/// Read and parse a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(PipelineError::Config(format!(
                "run_id: must be a non-empty name without path separators, got {:?}",
                self.run_id
            )));
        }
        self.model.model_kind()?;
        self.model
            .arch()
            .validate()
            .map_err(|e| PipelineError::Config(format!("model: {e}")))?;
        self.generator.generator_family()?;
        self.generator
            .generator_config()
            .validate(None)
            .map_err(|e| PipelineError::Config(format!("generator: {e}")))?;
        if self.model.input_dim != self.generator.dimension {
            return Err(PipelineError::Config(format!(
                "model.input_dim = {} must match generator.dimension = {}",
                self.model.input_dim, self.generator.dimension
            )));
        }
        if self.pretrain.batch_functions == 0 {
            return Err(PipelineError::Config(
                "pretrain.batch_functions: must be at least 1".into(),
            ));
        }
        if !(self.pretrain.peak_lr > 0.0 && self.pretrain.peak_lr.is_finite()) {
            return Err(PipelineError::Config(format!(
                "pretrain.peak_lr: must be positive and finite, got {}",
                self.pretrain.peak_lr
            )));
        }
        if self.adapt.q == 0 {
            return Err(PipelineError::Config("adapt.q: must be at least 1".into()));
        }
        self.adapt.method_name()?;
        self.adapt.few_shot.selection_mode()?;
        if self.adapt.oracle.points < 2 {
            return Err(PipelineError::Config(format!(
                "adapt.oracle.points: reference table needs at least 2 points, got {}",
                self.adapt.oracle.points
            )));
        }
        if self.adapt.oracle.features == 0 {
            return Err(PipelineError::Config(
                "adapt.oracle.features: must be at least 1".into(),
            ));
        }
        if !(self.adapt.oracle.lengthscale > 0.0) || !(self.adapt.oracle.scale > 0.0) {
            return Err(PipelineError::Config(
                "adapt.oracle: lengthscale and scale must be positive".into(),
            ));
        }
        if self.adapt.surrogate.members == 0 {
            return Err(PipelineError::Config(
                "adapt.surrogate.members: must be at least 1".into(),
            ));
        }
        if self.sweep.seeds.is_empty() || self.sweep.kernels.is_empty() {
            return Err(PipelineError::Config(
                "sweep: seeds and kernels must be non-empty".into(),
            ));
        }
        Ok(())
    }

    /// Hash of the fully resolved configuration (canonical serialization, so
    /// source-file key order and whitespace do not matter).
    pub fn config_hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        hex_sha256(canonical.as_bytes())
    }

    /// Hash of everything that determines which functions and tasks a run
    /// sees: the episode generator plus the oracle construction (kernel kind
    /// excluded — it is the sweep axis and lands in the task column).
    pub fn generator_hash(&self) -> String {
        let generator = toml::to_string(&self.generator).expect("section serializes");
        let o = &self.adapt.oracle;
        let oracle_part = format!(
            "points={} features={} exact={} seed={} lengthscale={} scale={}",
            o.points,
            o.features,
            o.exact,
            o.seed,
            o.lengthscale.to_bits(),
            o.scale.to_bits(),
        );
        hex_sha256(format!("{generator}\n{oracle_part}").as_bytes())
    }

    /// Directory all of this run's artifacts live in, named by the config
    /// hash so stale outputs can never be mistaken for the current setup.
    pub fn run_dir(&self) -> std::path::PathBuf {
        let hash = self.config_hash();
        std::path::Path::new(&self.out_dir).join(format!("{}-{}", self.run_id, &hash[..8]))
    }
}

fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
