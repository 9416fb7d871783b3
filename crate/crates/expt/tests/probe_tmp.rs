//! Temporary calibration probe — deleted before release.

use expt::eval::{make_few_shot, Oracle, SelectionMode};
use expt::model::{load_model_checkpoint, ExPTModel};
use expt::synthfn::{KernelKind, KernelSpec};
use expt::nncore::Tensor;

#[test]
#[ignore]
fn probe_conditioning() {
    let ckpt = std::env::var("PROBE_CKPT").unwrap();
    let spec = KernelSpec::new(KernelKind::Matern52, 7.5, 1.0);
    let oracle =
        Oracle::synthetic_gp(&spec, 8, 20_000, (-3.0, 3.0), 2048, 0, false).unwrap();
    let (sx, sy) = oracle.reference().unwrap();
    let few = make_few_shot(sx, sy, SelectionMode::BelowPercentile { count: 100, pct: 20.0 }, 0)
        .unwrap();

    let mut rng = expt::rng::stream(0, "model-init", &[]);
    let mut model = ExPTModel::<f32>::init(
        &probe_arch(),
        &mut rng,
    )
    .unwrap();
    load_model_checkpoint(std::path::Path::new(&ckpt), model.params_mut()).unwrap();

    let mu = few.y.iter().sum::<f64>() / few.y.len() as f64;
    let var = few.y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / few.y.len() as f64;
    let z_star = (oracle.y_star() - mu) / var.sqrt();
    println!("few-shot mean {mu:.3} std {:.3}; y* z-score {z_star:.2}", var.sqrt());
    println!("few-shot best norm {:.3}", oracle.normalize(few.best_y()));

    for (label, y_star) in [
        ("y* = few-shot max", few.best_y()),
        ("y* = few-shot max + 1 std", few.best_y() + var.sqrt()),
        ("y* = dataset max", oracle.y_star()),
        ("y* = dataset max x 2", 2.0 * oracle.y_star() - mu),
    ] {
        let mut rng = expt::rng::stream(7, "candidate", &[0]);
        let cands = model.generate_candidates(
            &few.x, &few.y, y_star, 256, 1.0, Some((-3.0, 3.0)), &mut rng,
        );
        let scores: Vec<f64> =
            (0..cands.rows()).map(|i| oracle.normalize(oracle.evaluate(cands.row(i)))).collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // per-coordinate spread of candidates
        let mut sd = 0.0;
        for j in 0..8 {
            let col: Vec<f64> = (0..cands.rows()).map(|i| cands.get(i, j)).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            sd += (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        }
        println!("{label:26}: mean {mean:.3} max {max:.3} cand-sd {:.2}", sd / 8.0);
    }

    // Oracle landscape reference: uniform random candidates.
    let mut rng = expt::rng::stream(99, "candidate", &[0]);
    use rand::Rng;
    let uni = Tensor::from_fn(256, 8, |_, _| rng.gen_range(-3.0..3.0));
    let scores: Vec<f64> =
        (0..uni.rows()).map(|i| oracle.normalize(oracle.evaluate(uni.row(i)))).collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("uniform random            : mean {mean:.3} max {max:.3} cand-sd 1.73");
}

fn probe_arch() -> expt::model::ExPTConfig {
    let mut section = expt::pipeline::desk_micro().model;
    if let Ok(k) = std::env::var("PROBE_LATENT") {
        section.vae.latent = k.parse().unwrap();
    }
    section.arch()
}
