//! Random-feature function draws for evaluating GP samples at arbitrary
//! points.
//!
//! Exact joint sampling (Cholesky over all query points) is cubic in the
//! point count — fine for a few hundred episode points, hopeless for the
//! 20,000-point evaluation tables. For stationary kernels, Bochner's theorem
//! gives K(δ) = σ²·E_{ω∼ρ}[cos(ωᵀδ)], and
//!
//!   f(x) = σ·√(2/F)·Σ_f cos(ω_fᵀx + b_f),   ω_f ∼ ρ,  b_f ∼ U[0, 2π)
//!
//! is a function whose covariance averages to K exactly over (ω, b) draws.
//! One such draw is cheap to evaluate anywhere, which is exactly what a
//! ground-truth oracle needs. The Linear kernel is not stationary but has the
//! exact finite representation f(x) = σ·wᵀx with w ∼ N(0, I).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::kernel::{KernelKind, KernelSpec};
use super::SynthError;
use crate::nncore::tensor::{matmul, Tensor};

/// Default feature count for oracle draws.
pub const DEFAULT_FEATURES: usize = 4096;

/// One function drawn from a kernel's prior, evaluable at any point.
#[derive(Clone, Debug)]
pub enum FunctionDraw {
    /// σ·√(2/F)·Σ cos(Ω x + b) with per-kernel spectral frequencies Ω [F, d].
    Fourier {
        omega: Tensor<f64>,
        phase: Vec<f64>,
        amp: f64,
    },
    /// σ·wᵀx — the Linear kernel's exact weight-space form.
    Linear { w: Vec<f64>, scale: f64 },
}

impl FunctionDraw {
    /// Draw one function from `spec`'s prior on d-dimensional inputs.
    pub fn sample(
        spec: &KernelSpec,
        d: usize,
        features: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, SynthError> {
        spec.validate()?;
        assert!(d >= 1, "dimension must be positive");
        assert!(features >= 1, "need at least one feature");
        if spec.kind == KernelKind::Linear {
            let w = (0..d)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            return Ok(FunctionDraw::Linear { w, scale: spec.scale });
        }
        let ell = spec.lengthscale;
        let omega = match spec.kind {
            // exp(−‖δ‖²/2ℓ²) ⇒ ω ~ N(0, I/ℓ²)
            KernelKind::Rbf => Tensor::from_fn(features, d, |_, _| {
                rng.sample::<f64, _>(rand_distr::StandardNormal) / ell
            }),
            // Matern-5/2 spectral density is a multivariate Student-t with
            // 2ν = 5 dof: ω = z·√(5/g)/ℓ, z ~ N(0, I), g ~ χ²₅ per feature.
            KernelKind::Matern52 => {
                let chi2 = rand_distr::ChiSquared::new(5.0).expect("dof > 0");
                let mut t = Tensor::zeros(features, d);
                for f in 0..features {
                    let g: f64 = rng.sample(chi2);
                    let s = (5.0 / g).sqrt() / ell;
                    for j in 0..d {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        t.set(f, j, z * s);
                    }
                }
                t
            }
            // Π cos(δᵢ/ℓ) = E[cos(Σ sᵢδᵢ/ℓ)] over independent signs sᵢ = ±1
            // (product-to-sum identity applied coordinatewise).
            KernelKind::Cosine => Tensor::from_fn(features, d, |_, _| {
                if rng.gen::<bool>() {
                    1.0 / ell
                } else {
                    -1.0 / ell
                }
            }),
            // Each coordinate factor exp(−2sin²(πδ/p)/ℓ²) expands over the
            // modified Bessel series into a distribution on the discrete
            // frequencies 2πn/p; see `periodic_harmonic_weights`.
            KernelKind::Periodic => {
                let p = spec.period_or_default();
                let weights = periodic_harmonic_weights(1.0 / (ell * ell));
                Tensor::from_fn(features, d, |_, _| {
                    let n = sample_symmetric_integer(&weights, rng);
                    2.0 * std::f64::consts::PI * n as f64 / p
                })
            }
            KernelKind::Linear => unreachable!("handled above"),
        };
        let phase = (0..features)
            .map(|_| rng.gen_range(0.0..2.0 * std::f64::consts::PI))
            .collect();
        let amp = spec.scale * (2.0 / features as f64).sqrt();
        Ok(FunctionDraw::Fourier { omega, phase, amp })
    }

    pub fn dimension(&self) -> usize {
        match self {
            FunctionDraw::Fourier { omega, .. } => omega.cols(),
            FunctionDraw::Linear { w, .. } => w.len(),
        }
    }

    /// Evaluate at a single point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FunctionDraw::Fourier { omega, phase, amp } => {
                debug_assert_eq!(x.len(), omega.cols());
                let mut s = 0.0;
                for f in 0..omega.rows() {
                    let dot: f64 = omega.row(f).iter().zip(x).map(|(w, v)| w * v).sum();
                    s += (dot + phase[f]).cos();
                }
                amp * s
            }
            FunctionDraw::Linear { w, scale } => {
                debug_assert_eq!(x.len(), w.len());
                scale * w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            }
        }
    }

    /// Evaluate at every row of `xs`, chunked so the [chunk, F] projection
    /// buffer stays small even for 20k-row tables.
    pub fn eval_rows(&self, xs: &Tensor<f64>) -> Vec<f64> {
        match self {
            FunctionDraw::Linear { .. } => (0..xs.rows()).map(|i| self.eval(xs.row(i))).collect(),
            FunctionDraw::Fourier { omega, phase, amp } => {
                assert_eq!(xs.cols(), omega.cols(), "dimension mismatch");
                let mut out = Vec::with_capacity(xs.rows());
                let chunk = 2048;
                let mut lo = 0;
                while lo < xs.rows() {
                    let hi = (lo + chunk).min(xs.rows());
                    let block = Tensor::from_vec(
                        hi - lo,
                        xs.cols(),
                        xs.data()[lo * xs.cols()..hi * xs.cols()].to_vec(),
                    );
                    let proj = matmul(&block, false, omega, true); // [hi−lo, F]
                    for r in 0..proj.rows() {
                        let mut s = 0.0;
                        for (f, &v) in proj.row(r).iter().enumerate() {
                            s += (v + phase[f]).cos();
                        }
                        out.push(amp * s);
                    }
                    lo = hi;
                }
                out
            }
        }
    }
}

/// Modified Bessel function of the first kind Iₙ(x) for integer n ≥ 0,
/// by the ascending power series with a log-space leading term (robust for
/// the x = 1/ℓ² ≤ ~10⁴ range the sweeps use).
pub fn bessel_i(n: u32, x: f64) -> f64 {
    assert!(x >= 0.0 && x.is_finite());
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let half = x / 2.0;
    // term₀ = (x/2)ⁿ / n!
    let mut ln_t0 = n as f64 * half.ln();
    for k in 1..=n {
        ln_t0 -= (k as f64).ln();
    }
    let mut term = ln_t0.exp();
    let mut sum = term;
    for k in 1..500 {
        term *= half * half / (k as f64 * (k as f64 + n as f64));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Probability weights for the Periodic kernel's harmonic index:
/// P(n) = e^(−x)·I_|n|(x) on n ∈ ℤ (x = 1/ℓ²), returned as the one-sided
/// list [P(0), P(1), P(2), …] truncated once the symmetric total reaches
/// 1 − 10⁻¹². The identity Σ_{n∈ℤ} Iₙ(x) = eˣ makes these sum to 1.
pub fn periodic_harmonic_weights(x: f64) -> Vec<f64> {
    assert!(x > 0.0 && x.is_finite());
    let mut weights = Vec::new();
    let mut total = 0.0;
    for n in 0..100_000u32 {
        // e^(−x)·Iₙ(x) evaluated stably: fold e^(−x) into the series start.
        let w = scaled_bessel_i(n, x);
        weights.push(w);
        total += if n == 0 { w } else { 2.0 * w };
        if total >= 1.0 - 1e-12 {
            break;
        }
    }
    weights
}

/// e^(−x)·Iₙ(x) with the exponential folded into the log-space leading term,
/// so large x never overflows.
fn scaled_bessel_i(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let half = x / 2.0;
    let mut ln_t0 = n as f64 * half.ln() - x;
    for k in 1..=n {
        ln_t0 -= (k as f64).ln();
    }
    let mut term = ln_t0.exp();
    let mut sum = term;
    for k in 1..100_000 {
        term *= half * half / (k as f64 * (k as f64 + n as f64));
        sum += term;
        if term < sum * 1e-17 && k as f64 > half {
            break;
        }
    }
    sum
}

/// Sample n ∈ ℤ with P(|n|) given by one-sided `weights` (P(0) unsplit,
/// P(n) counted once per sign for n ≥ 1).
fn sample_symmetric_integer(weights: &[f64], rng: &mut ChaCha8Rng) -> i64 {
    let u: f64 = rng.gen();
    let mut acc = weights[0];
    if u < acc {
        return 0;
    }
    for (n, &w) in weights.iter().enumerate().skip(1) {
        acc += 2.0 * w;
        if u < acc {
            return if rng.gen::<bool>() { n as i64 } else { -(n as i64) };
        }
    }
    // Truncated tail (< 10⁻¹² mass): clamp to the largest retained harmonic.
    let n = (weights.len() - 1) as i64;
    if rng.gen::<bool>() {
        n
    } else {
        -n
    }
}
