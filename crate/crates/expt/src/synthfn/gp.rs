//! Exact GP function draws at a finite point set via Cholesky factorization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::kernel::{kernel_matrix, KernelSpec};
use super::SynthError;
use crate::nncore::tensor::Tensor;

/// In-place lower-triangular Cholesky of a symmetric matrix. On failure
/// returns the pivot index whose diagonal went non-positive.
fn cholesky_lower(a: &mut Tensor<f64>) -> Result<(), usize> {
    let n = a.rows();
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            let l = a.get(j, k);
            d -= l * l;
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        a.set(j, j, d);
        for i in (j + 1)..n {
            let mut v = a.get(i, j);
            for k in 0..j {
                v -= a.get(i, k) * a.get(j, k);
            }
            a.set(i, j, v / d);
        }
        // Zero the upper triangle so the factor is usable as-is.
        for k in (j + 1)..n {
            a.set(j, k, 0.0);
        }
    }
    Ok(())
}

/// One draw f ~ N(0, K(X)) at the rows of `x`.
///
/// The standard-normal vector is drawn *before* any factorization attempt, so
/// the result is a pure function of (x, spec, rng state) no matter how much
/// jitter the kernel matrix ends up needing. Jitter starts at 10⁻⁶·max(σ², 1)
/// and escalates tenfold up to 10⁻²·max(σ², 1); duplicated rows (pool inputs
/// repeat under subsampling) are the usual reason K is singular.
pub fn sample_gp_values(
    x: &Tensor<f64>,
    spec: &KernelSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, SynthError> {
    let n = x.rows();
    assert!(n >= 1, "need at least one point to sample");
    let k = kernel_matrix(x, spec)?;
    let z: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();

    let unit = spec.scale * spec.scale;
    let base = 1e-6 * unit.max(1.0);
    let mut jitter = base;
    for attempt in 0..5 {
        jitter = base * 10f64.powi(attempt);
        let mut l = k.clone();
        for i in 0..n {
            l.set(i, i, l.get(i, i) + jitter);
        }
        if cholesky_lower(&mut l).is_ok() {
            let mut f = vec![0.0; n];
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..=i {
                    s += l.get(i, j) * z[j];
                }
                f[i] = s;
            }
            return Ok(f);
        }
    }
    Err(SynthError::DegenerateKernel { final_jitter: jitter })
}
