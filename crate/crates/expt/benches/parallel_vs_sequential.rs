//! Chunked-parallel hot paths vs. the sequential fallback.
//!
//! The work split never changes with the worker count (see `par`), so the
//! two builds compute bitwise-identical numbers; this suite measures what
//! the `parallel` feature costs or buys in wall time. Run
//!
//! ```text
//! cargo bench --bench parallel_vs_sequential
//! cargo bench --bench parallel_vs_sequential --no-default-features
//! ```
//!
//! and compare the same benchmark names across the two reports; the
//! `parallel`/`sequential` id records which build produced each number.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use expt::eval::{
    make_few_shot, run_adaptation, AdaptMethod, Oracle, ReportMeta, SelectionMode,
};
use expt::model::{
    pretrain, EncoderConfig, ExPTConfig, ExPTModel, PretrainOptions, VaeConfig,
};
use expt::nncore::optim::{AdamHyper, LrSchedule};
use expt::synthfn::{
    GeneratorConfig, GeneratorFamily, InputSource, KernelKind, KernelSpec, SplitMode,
};

const MODE: &str = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };

fn micro_config() -> ExPTConfig {
    ExPTConfig {
        input_dim: 8,
        encoder: EncoderConfig { layers: 2, dim: 64, heads: 4, dropout: 0.1 },
        vae: VaeConfig { enc_layers: 2, dec_layers: 2, hidden: 128, latent: 2 },
        ..ExPTConfig::default()
    }
}

fn micro_generator() -> GeneratorConfig {
    GeneratorConfig {
        dimension: 8,
        points_per_function: 64,
        context_size: 32,
        lengthscale_range: (5.0, 10.0),
        scale_range: (1.0, 10.0),
        input_source: InputSource::UniformBox { lo: -3.0, hi: 3.0 },
        input_noise_std: 0.0,
        split_mode: SplitMode::Sorted,
        pool_subsample_ratio: 1.0,
    }
}

/// One optimizer step: the per-episode losses and gradients of a full batch
/// are computed in fixed chunks (the parallel section) and then folded.
fn bench_pretrain_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("pretrain-step");
    group.sample_size(10);

    for &batch in &[16usize, 64] {
        let mut model = {
            let mut rng = expt::rng::stream(7, "model-init", &[]);
            ExPTModel::<f32>::init(&micro_config(), &mut rng).unwrap()
        };
        let generator = micro_generator();
        let opts = PretrainOptions {
            iterations: 1,
            batch_functions: batch,
            checkpoint_every: 0,
            seed: 7,
            family: GeneratorFamily::Gp(KernelKind::Rbf),
            hyper: AdamHyper::default(),
            schedule: LrSchedule { peak: 1e-3, warmup: 50, anneal: 450 },
        };
        group.bench_function(BenchmarkId::new(MODE, format!("batch-{batch}")), |b| {
            b.iter(|| {
                pretrain(&mut model, &generator, None, &opts, |_, _, _| Ok(())).unwrap()
            })
        });
    }
    group.finish();
}

/// One adaptation: decode Q candidates from the inverse model and score them
/// against the oracle in fixed chunks (the parallel section).
fn bench_candidate_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("candidate-eval");
    group.sample_size(10);

    let model = {
        let mut rng = expt::rng::stream(7, "model-init", &[]);
        ExPTModel::<f32>::init(&micro_config(), &mut rng).unwrap()
    };
    let spec = KernelSpec::new(KernelKind::Matern52, 4.0, 1.0);
    let oracle = Oracle::synthetic_gp(&spec, 8, 2000, (-3.0, 3.0), 512, 0, false).unwrap();
    let (x, y) = oracle.reference().unwrap();
    let few_shot =
        make_few_shot(x, y, SelectionMode::BelowPercentile { count: 100, pct: 20.0 }, 0).unwrap();
    let meta = ReportMeta { seed: 0, checkpoint_step: 0, config_hash: "bench".into() };
    let method = AdaptMethod::ExPT { model: &model, match_scale: 1.0 };

    for &q in &[64usize, 256] {
        group.bench_function(BenchmarkId::new(MODE, format!("q-{q}")), |b| {
            b.iter(|| run_adaptation(&method, &few_shot, &oracle, q, &meta).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_pretrain_step, bench_candidate_eval);
criterion_main!(benches);
