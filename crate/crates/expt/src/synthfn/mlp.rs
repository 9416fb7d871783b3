//! Randomly initialized MLPs as an alternative synthetic-function family.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::nncore::tensor::{matmul, Tensor};
use crate::rng::stream;

/// Weight-initialization menu. Semantics follow the common deep-learning
/// library defaults: `uniform` is U[0,1), `normal` is N(0,1), the Xavier
/// variants scale by fan_in+fan_out, the Kaiming variants by fan_in with
/// rectifier gain √2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    Uniform,
    Normal,
    XavierUniform,
    XavierNormal,
    KaimingUniform,
    KaimingNormal,
}

impl InitMethod {
    pub const ALL: [InitMethod; 6] = [
        InitMethod::Uniform,
        InitMethod::Normal,
        InitMethod::XavierUniform,
        InitMethod::XavierNormal,
        InitMethod::KaimingUniform,
        InitMethod::KaimingNormal,
    ];

    fn draw(self, rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor<f64> {
        let (fi, fo) = (fan_in as f64, fan_out as f64);
        match self {
            InitMethod::Uniform => Tensor::from_fn(fan_in, fan_out, |_, _| rng.gen::<f64>()),
            InitMethod::Normal => Tensor::from_fn(fan_in, fan_out, |_, _| {
                rng.sample(rand_distr::StandardNormal)
            }),
            InitMethod::XavierUniform => {
                let a = (6.0 / (fi + fo)).sqrt();
                Tensor::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-a..a))
            }
            InitMethod::XavierNormal => {
                let sd = (2.0 / (fi + fo)).sqrt();
                Tensor::from_fn(fan_in, fan_out, |_, _| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal) * sd
                })
            }
            InitMethod::KaimingUniform => {
                let b = (6.0 / fi).sqrt();
                Tensor::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-b..b))
            }
            InitMethod::KaimingNormal => {
                let sd = (2.0 / fi).sqrt();
                Tensor::from_fn(fan_in, fan_out, |_, _| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal) * sd
                })
            }
        }
    }
}

/// Allowed hidden widths and depths for random-MLP generators.
pub const MLP_HIDDEN_CHOICES: [usize; 7] = [16, 32, 64, 128, 256, 512, 1024];
pub const MLP_DEPTH_CHOICES: [usize; 5] = [2, 3, 4, 5, 6];

/// Fully determines one random MLP: `depth` tanh layers of `hidden_size`
/// units plus a scalar head, weights drawn by `init_method` from `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpGeneratorSpec {
    pub init_method: InitMethod,
    pub hidden_size: usize,
    pub depth: usize,
    pub seed: u64,
}

impl MlpGeneratorSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !MLP_HIDDEN_CHOICES.contains(&self.hidden_size) {
            return Err(SynthError::InvalidSpec(format!(
                "hidden_size {} not in {MLP_HIDDEN_CHOICES:?}",
                self.hidden_size
            )));
        }
        if !MLP_DEPTH_CHOICES.contains(&self.depth) {
            return Err(SynthError::InvalidSpec(format!(
                "depth {} not in {MLP_DEPTH_CHOICES:?}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Draw one spec uniformly from the menus.
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        MlpGeneratorSpec {
            init_method: *InitMethod::ALL.choose(rng).expect("non-empty"),
            hidden_size: *MLP_HIDDEN_CHOICES.choose(rng).expect("non-empty"),
            depth: *MLP_DEPTH_CHOICES.choose(rng).expect("non-empty"),
            seed: rng.gen(),
        }
    }
}

/// Evaluate one random MLP at the rows of `x`, standardized to zero mean and
/// unit (population) variance over the N points. Raw random-network outputs
/// vary over orders of magnitude across the init menu; standardization keeps
/// episode y-scales compatible with the GP families. A constant output
/// (zero variance) standardizes to all zeros.
pub fn mlp_function_values(x: &Tensor<f64>, spec: &MlpGeneratorSpec) -> Result<Vec<f64>, SynthError> {
    spec.validate()?;
    let n = x.rows();
    assert!(n >= 1, "need at least one point");
    let d = x.cols();
    let mut rng = stream(spec.seed, "mlp-gen", &[]);

    // Layer dims: d → hidden ×depth → 1. Biases follow the common dense-layer
    // default U[−1/√fan_in, 1/√fan_in] regardless of the weight scheme.
    let mut dims = vec![d];
    dims.extend(std::iter::repeat(spec.hidden_size).take(spec.depth));
    dims.push(1);

    let mut h = x.clone();
    for (li, w) in dims.windows(2).enumerate() {
        let (fi, fo) = (w[0], w[1]);
        let weight = spec.init_method.draw(&mut rng, fi, fo);
        let bb = 1.0 / (fi as f64).sqrt();
        let bias: Vec<f64> = (0..fo).map(|_| rng.gen_range(-bb..bb)).collect();
        let mut z = matmul(&h, false, &weight, false);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&bias) {
                *v += b;
            }
        }
        if li + 2 < dims.len() {
            z = z.map(|v| v.tanh());
        }
        h = z;
    }

    let raw: Vec<f64> = (0..n).map(|i| h.get(i, 0)).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    if sd < 1e-12 {
        return Ok(vec![0.0; n]);
    }
    Ok(raw.iter().map(|v| (v - mean) / sd).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_spec(seed: u64) -> MlpGeneratorSpec {
        MlpGeneratorSpec {
            init_method: InitMethod::XavierNormal,
            hidden_size: 32,
            depth: 3,
            seed,
        }
    }

    #[test]
    fn same_spec_and_inputs_reproduce_values() {
        let x = Tensor::from_fn(20, 4, |i, j| ((i * 4 + j) as f64 * 0.23).sin());
        let a = mlp_function_values(&x, &demo_spec(5)).unwrap();
        let b = mlp_function_values(&x, &demo_spec(5)).unwrap();
        assert_eq!(a, b);
        let c = mlp_function_values(&x, &demo_spec(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn outputs_are_standardized() {
        let x = Tensor::from_fn(64, 8, |i, j| ((i * 8 + j) as f64 * 0.17).cos() * 2.0);
        for (mi, method) in InitMethod::ALL.into_iter().enumerate() {
            let spec = MlpGeneratorSpec {
                init_method: method,
                hidden_size: 64,
                depth: 2,
                seed: 100 + mi as u64,
            };
            let y = mlp_function_values(&x, &spec).unwrap();
            let n = y.len() as f64;
            let mean = y.iter().sum::<f64>() / n;
            let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6, "{method:?}: mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-6, "{method:?}: std {}", var.sqrt());
        }
    }

    #[test]
    fn out_of_menu_dimensions_are_config_errors() {
        let x = Tensor::from_fn(4, 2, |i, j| (i + j) as f64);
        let bad_depth = MlpGeneratorSpec { depth: 7, ..demo_spec(0) };
        assert!(matches!(
            mlp_function_values(&x, &bad_depth),
            Err(SynthError::InvalidSpec(_))
        ));
        let bad_hidden = MlpGeneratorSpec { hidden_size: 48, ..demo_spec(0) };
        assert!(matches!(
            mlp_function_values(&x, &bad_hidden),
            Err(SynthError::InvalidSpec(_))
        ));
    }

    #[test]
    fn sampled_specs_stay_on_the_menus() {
        let mut rng = crate::rng::stream(0, "mlp-menu", &[]);
        for _ in 0..200 {
            let spec = MlpGeneratorSpec::sample(&mut rng);
            spec.validate().unwrap();
        }
    }
}
