//! Central finite-difference gradient verification.
//!
//! Only meaningful in 64-bit: the default step h = 10⁻⁵ gives truncation
//! error ~h² and roundoff ~ε·|loss|/h, both far below the 10⁻⁴ relative
//! tolerance in f64 but not in f32.

use super::layers::ParamRegistry;
use super::tensor::Tensor;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Finite-difference gradients of `loss` w.r.t. every registry parameter,
/// element by element: (loss(θ+h) − loss(θ−h)) / 2h. The registry is restored
/// exactly after each probe. `loss` must be a deterministic function of the
/// parameter values (fixed inputs, fixed noise, dropout off).
pub fn finite_diff_grads<F>(
    reg: &mut ParamRegistry<f64>,
    mut loss: F,
    h: f64,
) -> Vec<Tensor<f64>>
where
    F: FnMut(&ParamRegistry<f64>) -> f64,
{
    let ids: Vec<_> = reg.ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let (rows, cols) = reg.value(id).shape();
        let mut g = Tensor::zeros(rows, cols);
        for i in 0..rows * cols {
            let orig = reg.value(id).data()[i];
            reg.value_mut(id).data_mut()[i] = orig + h;
            let up = loss(reg);
            reg.value_mut(id).data_mut()[i] = orig - h;
            let down = loss(reg);
            reg.value_mut(id).data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Worst elementwise relative error between two aligned gradient sets:
/// `|a − f| / max(|a|, |f|, 0.001)`. The floor turns the comparison absolute
/// for near-zero entries, where finite-difference noise (~10⁻⁹ here) would
/// otherwise dominate a pure ratio; at the floor the effective absolute
/// tolerance is still two orders above that noise.
pub fn max_rel_err(analytic: &[Tensor<f64>], fd: &[Tensor<f64>]) -> f64 {
    assert_eq!(analytic.len(), fd.len(), "gradient set length mismatch");
    let mut worst: f64 = 0.0;
    for (a, f) in analytic.iter().zip(fd) {
        assert_eq!(a.shape(), f.shape(), "gradient shape mismatch");
        for (&av, &fv) in a.data().iter().zip(f.data()) {
            let denom = av.abs().max(fv.abs()).max(1e-3);
            worst = worst.max((av - fv).abs() / denom);
        }
    }
    worst
}
