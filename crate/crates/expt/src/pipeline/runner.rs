//! Command implementations behind the CLI.
//!
//! `pretrain` trains whichever architecture the config names and drops
//! checkpoints plus a loss curve into the run directory. `adapt` scores one
//! task with one method and appends a metrics row. `sweep` crosses the
//! configured seeds and kernels against the pretrained checkpoints, and
//! `report` aggregates ledgers into per-group summaries.
//!
//! The pipeline trains and evaluates in single precision; the double-
//! precision path exists for the gradient checks in the test suite.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::baselines::{surrogate_train, TnpEdModel};
use crate::eval::{
    make_few_shot, run_adaptation, run_sequential, AdaptMethod, EvalReport, FewShotDataset,
    Oracle, ReportMeta,
};
use crate::model::{
    load_model_checkpoint, pretrain, save_model_checkpoint, ExPTModel, PretrainOptions,
    PretrainableModel,
};
use crate::nncore::lr_at;
use crate::synthfn::KernelKind;

use super::config::{MethodName, ModelKind, RunConfig};
use super::metrics::{emit_metrics, read_metrics, summarize_rows, MetricsRow};
use super::PipelineError;

/// Whether `adapt` proposes the whole batch at once or one candidate per
/// round with oracle feedback in between.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdaptationMode {
    Simultaneous,
    Sequential,
}

/// Canonical checkpoint filename for a step within a run directory.
pub fn checkpoint_path(run_dir: &Path, step: u64) -> PathBuf {
    run_dir.join(format!("ckpt-{step:06}.expt"))
}

fn write_loss_csv(
    dir: &Path,
    losses: &[f64],
    config: &RunConfig,
) -> Result<(), PipelineError> {
    let schedule = config.pretrain.schedule();
    let mut text = String::from("step,loss,lr\n");
    for (i, loss) in losses.iter().enumerate() {
        let step = i as u64 + 1;
        text.push_str(&format!("{step},{loss},{}\n", lr_at(step, &schedule)));
    }
    std::fs::write(dir.join("loss.csv"), text)?;
    Ok(())
}

fn pretrain_into_dir<M: PretrainableModel<f32>>(
    model: &mut M,
    config: &RunConfig,
    dir: &Path,
) -> Result<PathBuf, PipelineError> {
    let hash = config.config_hash();
    let opts = PretrainOptions {
        iterations: config.pretrain.iterations,
        batch_functions: config.pretrain.batch_functions,
        checkpoint_every: config.pretrain.checkpoint_every,
        seed: config.seed,
        family: config.generator.generator_family()?,
        hyper: config.pretrain.hyper(),
        schedule: config.pretrain.schedule(),
    };
    let gen_config = config.generator.generator_config();
    let report = pretrain(model, &gen_config, None, &opts, |step, m, opt| {
        save_model_checkpoint(
            &checkpoint_path(dir, step),
            PretrainableModel::params(m),
            Some(opt),
            m.model_kind(),
            &hash,
            step,
        )?;
        Ok(())
    })?;
    write_loss_csv(dir, &report.losses, config)?;
    Ok(checkpoint_path(dir, report.final_step))
}

/// Train the configured model from scratch. Returns the final checkpoint
/// path; intermediate checkpoints land on the configured cadence. A seed
/// override replaces `config.seed` before anything (including the run
/// directory name) is derived from it.
pub fn cmd_pretrain(
    config: &RunConfig,
    seed_override: Option<u64>,
) -> Result<PathBuf, PipelineError> {
    let mut config = config.clone();
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    config.validate()?;
    let dir = config.run_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(
        dir.join("config.toml"),
        toml::to_string(&config).expect("config serializes"),
    )?;

    let mut rng = crate::rng::stream(config.seed, "model-init", &[]);
    let final_path = match config.model.model_kind()? {
        ModelKind::Expt => {
            let mut model = ExPTModel::<f32>::init(&config.model.arch(), &mut rng)?;
            pretrain_into_dir(&mut model, &config, &dir)?
        }
        ModelKind::TnpEd => {
            let mut model = TnpEdModel::<f32>::init(&config.model.arch(), &mut rng)?;
            pretrain_into_dir(&mut model, &config, &dir)?
        }
    };
    println!(
        "pretrained {} for {} steps -> {}",
        config.model.kind,
        config.pretrain.iterations,
        final_path.display()
    );
    Ok(final_path)
}

/// The oracle for a task name: either a kernel name (a synthetic function
/// drawn from that prior) or a path to a reference-table CSV.
fn build_oracle(config: &RunConfig, task: &str) -> Result<(Oracle, String), PipelineError> {
    let o = &config.adapt.oracle;
    if let Ok(kernel) = KernelKind::parse(task) {
        let spec = o.kernel_spec(kernel);
        let oracle = Oracle::synthetic_gp(
            &spec,
            config.generator.dimension,
            o.points,
            (config.generator.box_lo, config.generator.box_hi),
            o.features,
            o.seed,
            o.exact,
        )?;
        return Ok((oracle, kernel.name().to_string()));
    }
    if task.ends_with(".csv") {
        let oracle = Oracle::load_table(Path::new(task))?;
        if oracle.dim() != config.model.input_dim {
            return Err(PipelineError::Config(format!(
                "table task has {} coordinates but model.input_dim = {}",
                oracle.dim(),
                config.model.input_dim
            )));
        }
        return Ok((oracle, "table".to_string()));
    }
    Err(PipelineError::Config(format!(
        "task: expected a kernel name (rbf, matern52, linear, cosine, periodic) \
         or a .csv table path, got {task:?}"
    )))
}

fn few_shot_for(config: &RunConfig, oracle: &Oracle) -> Result<FewShotDataset, PipelineError> {
    let (x, y) = oracle.reference().ok_or_else(|| {
        PipelineError::Config("this oracle has no reference dataset to select few-shot pairs from".into())
    })?;
    let mode = config.adapt.few_shot.selection_mode()?;
    Ok(make_few_shot(x, y, mode, config.adapt.few_shot.seed)?)
}

fn load_expt(config: &RunConfig, path: &Path) -> Result<(ExPTModel<f32>, u64), PipelineError> {
    let mut rng = crate::rng::stream(0, "model-init", &[]);
    let mut model = ExPTModel::<f32>::init(&config.model.arch(), &mut rng)?;
    let loaded = load_model_checkpoint(path, model.params_mut())?;
    if loaded.model_kind != "expt" {
        return Err(PipelineError::Config(format!(
            "{} holds a {} model, but adapt.method = \"expt\"",
            path.display(),
            loaded.model_kind
        )));
    }
    warn_on_hash_mismatch(config, path, &loaded.config_hash);
    Ok((model, loaded.step))
}

fn load_tnp(config: &RunConfig, path: &Path) -> Result<(TnpEdModel<f32>, u64), PipelineError> {
    let mut rng = crate::rng::stream(0, "model-init", &[]);
    let mut model = TnpEdModel::<f32>::init(&config.model.arch(), &mut rng)?;
    let loaded = load_model_checkpoint(path, model.params_mut())?;
    if loaded.model_kind != "tnp-ed" {
        return Err(PipelineError::Config(format!(
            "{} holds a {} model, but adapt.method = \"tnp-ed\"",
            path.display(),
            loaded.model_kind
        )));
    }
    warn_on_hash_mismatch(config, path, &loaded.config_hash);
    Ok((model, loaded.step))
}

fn warn_on_hash_mismatch(config: &RunConfig, path: &Path, stored: &str) {
    let current = config.config_hash();
    if stored != current {
        eprintln!(
            "warning: {} was trained under config {}, evaluating under {}",
            path.display(),
            &stored[..stored.len().min(8)],
            &current[..current.len().min(8)],
        );
    }
}

/// Run one adaptation: build the task oracle, select the few-shot context,
/// propose and score candidates, and append the row to the shared ledger.
pub fn cmd_adapt(
    config: &RunConfig,
    checkpoint: Option<&Path>,
    task: &str,
    mode: AdaptationMode,
    seed_override: Option<u64>,
) -> Result<MetricsRow, PipelineError> {
    config.validate()?;
    let eval_seed = seed_override.unwrap_or(config.seed);
    let method = config.adapt.method_name()?;
    if method.needs_checkpoint() && checkpoint.is_none() {
        return Err(PipelineError::Config(format!(
            "adapt.method = \"{}\" requires --checkpoint",
            method.name()
        )));
    }
    if !method.needs_checkpoint() && checkpoint.is_some() {
        return Err(PipelineError::Config(format!(
            "adapt.method = \"{}\" trains from scratch and takes no --checkpoint",
            method.name()
        )));
    }
    if mode == AdaptationMode::Sequential && method != MethodName::Expt {
        return Err(PipelineError::Config(
            "sequential adaptation is only defined for the inverse model (adapt.method = \"expt\")"
                .into(),
        ));
    }

    let (oracle, kernel_kind) = build_oracle(config, task)?;
    let few_shot = few_shot_for(config, &oracle)?;
    let q = config.adapt.q;
    let started = Instant::now();

    let (report, checkpoint_step): (EvalReport, u64) = match method {
        MethodName::Expt => {
            let (model, step) = load_expt(config, checkpoint.expect("checked above"))?;
            let meta = ReportMeta {
                seed: eval_seed,
                checkpoint_step: step,
                config_hash: config.config_hash(),
            };
            let report = match mode {
                AdaptationMode::Simultaneous => {
                    let m = AdaptMethod::ExPT { model: &model, match_scale: config.adapt.match_scale };
                    run_adaptation(&m, &few_shot, &oracle, q, &meta)?
                }
                AdaptationMode::Sequential => run_sequential(
                    &model,
                    config.adapt.match_scale,
                    &few_shot,
                    &oracle,
                    q,
                    &meta,
                )?,
            };
            (report, step)
        }
        MethodName::TnpEd => {
            let (model, step) = load_tnp(config, checkpoint.expect("checked above"))?;
            let meta = ReportMeta {
                seed: eval_seed,
                checkpoint_step: step,
                config_hash: config.config_hash(),
            };
            let m = AdaptMethod::<f32>::TnpEd {
                model: &model,
                steps: config.adapt.ascent_steps,
                step_size: config.adapt.ascent_step_size,
            };
            (run_adaptation(&m, &few_shot, &oracle, q, &meta)?, step)
        }
        MethodName::GradAscent | MethodName::GradAscentMin | MethodName::GradAscentMean => {
            let surrogate_config = config.adapt.surrogate.surrogate_config(method);
            let (ensemble, train_report) =
                surrogate_train(&few_shot.x, &few_shot.y, &surrogate_config, eval_seed)?;
            if train_report.degenerate_targets {
                eprintln!(
                    "warning: all few-shot values are equal; the surrogate ensemble \
                     degenerates to a constant"
                );
            }
            let meta = ReportMeta {
                seed: eval_seed,
                checkpoint_step: 0,
                config_hash: config.config_hash(),
            };
            let m = AdaptMethod::<f32>::GradAscent {
                ensemble: &ensemble,
                steps: config.adapt.ascent_steps,
                step_size: config.adapt.ascent_step_size,
            };
            (run_adaptation(&m, &few_shot, &oracle, q, &meta)?, 0)
        }
    };
    let wall_time_s = started.elapsed().as_secs_f64();

    let dir = config.run_dir();
    std::fs::create_dir_all(&dir)?;
    let suffix = if mode == AdaptationMode::Sequential { "-seq" } else { "" };
    let report_path = dir.join(format!("report-{task}-s{eval_seed}{suffix}.json"));
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;

    let row = MetricsRow {
        run_id: format!("{}{suffix}/{task}-s{eval_seed}", method.name()),
        task: task.to_string(),
        kernel_kind,
        seed: eval_seed,
        checkpoint_step,
        q,
        score_median: report.median,
        score_max: report.max,
        score_mean: report.mean,
        few_shot_best: report.few_shot_best_norm,
        wall_time_s,
    };
    emit_metrics(
        &Path::new(&config.out_dir).join("metrics.csv"),
        &row,
        &config.generator_hash(),
    )?;
    println!(
        "{}: median {:.3} max {:.3} mean {:.3} (few-shot best {:.3}) in {:.1}s",
        row.run_id, row.score_median, row.score_max, row.score_mean, row.few_shot_best, wall_time_s
    );
    Ok(row)
}

/// Cross the configured sweep seeds and kernels (and, for checkpointed
/// methods, every step in `eval_checkpoints`) against the pretrained runs.
/// Each seed names both the pretraining run directory and the evaluation
/// streams, so pretraining must have been run once per sweep seed.
pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<MetricsRow>, PipelineError> {
    config.validate()?;
    let method = config.adapt.method_name()?;
    let steps: Vec<u64> = if method.needs_checkpoint() {
        if config.eval_checkpoints.is_empty() {
            vec![config.pretrain.iterations]
        } else {
            config.eval_checkpoints.clone()
        }
    } else {
        vec![0]
    };

    let mut rows = Vec::new();
    for &seed in &config.sweep.seeds {
        let mut seeded = config.clone();
        seeded.seed = seed;
        let dir = seeded.run_dir();
        for &step in &steps {
            let checkpoint = if method.needs_checkpoint() {
                let path = checkpoint_path(&dir, step);
                if !path.exists() {
                    return Err(PipelineError::Io(format!(
                        "missing checkpoint {} — run `expt pretrain` with seed {seed} first",
                        path.display()
                    )));
                }
                Some(path)
            } else {
                None
            };
            for &kernel in &config.sweep.kernels {
                rows.push(cmd_adapt(
                    &seeded,
                    checkpoint.as_deref(),
                    kernel.name(),
                    AdaptationMode::Simultaneous,
                    Some(seed),
                )?);
            }
        }
    }
    Ok(rows)
}

/// Aggregate one or more metrics ledgers into per-group summaries. Ledgers
/// with different generator hashes describe different task distributions and
/// are refused unless `force` is set.
pub fn cmd_report(metrics: &[PathBuf], force: bool) -> Result<String, PipelineError> {
    if metrics.is_empty() {
        return Err(PipelineError::Config("report needs at least one --metrics file".into()));
    }
    let mut all_rows = Vec::new();
    let mut hashes: Vec<(String, PathBuf)> = Vec::new();
    for path in metrics {
        let (hash, rows) = read_metrics(path)?;
        if !hashes.iter().any(|(h, _)| *h == hash) {
            hashes.push((hash, path.clone()));
        }
        all_rows.extend(rows);
    }
    if hashes.len() > 1 && !force {
        let listing: Vec<String> = hashes
            .iter()
            .map(|(h, p)| format!("{} ({})", &h[..h.len().min(8)], p.display()))
            .collect();
        return Err(PipelineError::Config(format!(
            "refusing to aggregate ledgers with different generator hashes: {} \
             (pass --force to override)",
            listing.join(", ")
        )));
    }
    let summary = summarize_rows(&all_rows);
    print!("{summary}");
    Ok(summary)
}
