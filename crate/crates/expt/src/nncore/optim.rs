//! AdamW with decoupled weight decay, and the warmup–cosine learning-rate
//! schedule. The learning rate is an explicit argument to each step so the
//! schedule stays a pure function of the step counter.

use serde::{Deserialize, Serialize};

use super::layers::{ParamId, ParamRegistry};
use super::tensor::{Real, Tensor};

/// Adam hyperparameters excluding the learning rate (which the schedule
/// supplies per step).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// First/second moment accumulators plus the step counter, aligned with a
/// [`ParamRegistry`] by index.
#[derive(Clone, Debug)]
pub struct OptimizerState<T: Real> {
    t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(reg: &ParamRegistry<T>) -> Self {
        let zeros: Vec<_> = reg
            .iter()
            .map(|(_, _, val)| Tensor::zeros(val.rows(), val.cols()))
            .collect();
        OptimizerState {
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Rebuild from checkpointed moments.
    pub fn from_parts(t: u64, m: Vec<Tensor<T>>, v: Vec<Tensor<T>>) -> Self {
        assert_eq!(m.len(), v.len(), "moment vectors must align");
        for (mm, vv) in m.iter().zip(&v) {
            assert_eq!(mm.shape(), vv.shape(), "moment shapes must align");
        }
        OptimizerState { t, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, id: ParamId) -> &Tensor<T> {
        &self.m[id.index()]
    }

    pub fn second_moment(&self, id: ParamId) -> &Tensor<T> {
        &self.v[id.index()]
    }

    /// Moments in registry order, for checkpointing.
    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }
}

/// One AdamW step over every parameter. Decoupled decay first
/// (θ ← θ·(1 − lr·wd)), then the bias-corrected Adam update
/// θ ← θ − lr·m̂/(√v̂ + eps). `lr` comes from [`lr_at`] at the caller's step.
pub fn adamw_step<T: Real>(
    reg: &mut ParamRegistry<T>,
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
    hyper: &AdamHyper,
    lr: f64,
) {
    assert_eq!(grads.len(), reg.len(), "one gradient per parameter");
    assert_eq!(state.m.len(), reg.len(), "optimizer state does not match registry");
    state.t += 1;
    let t = state.t;
    let b1 = T::from_f64(hyper.beta1);
    let b2 = T::from_f64(hyper.beta2);
    let one_m_b1 = T::from_f64(1.0 - hyper.beta1);
    let one_m_b2 = T::from_f64(1.0 - hyper.beta2);
    let bias1 = T::from_f64(1.0 / (1.0 - hyper.beta1.powi(t as i32)));
    let bias2 = T::from_f64(1.0 / (1.0 - hyper.beta2.powi(t as i32)));
    let lr_t = T::from_f64(lr);
    let eps = T::from_f64(hyper.eps);
    let decay = T::from_f64(1.0 - lr * hyper.weight_decay);

    for (idx, id) in reg.ids().enumerate() {
        let g = &grads[idx];
        let theta = reg.value_mut(id);
        assert_eq!(g.shape(), theta.shape(), "gradient shape mismatch at #{idx}");
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        for i in 0..theta.len() {
            let gi = g.data()[i];
            let mi = b1 * m.data()[i] + one_m_b1 * gi;
            let vi = b2 * v.data()[i] + one_m_b2 * gi * gi;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi * bias1;
            let v_hat = vi * bias2;
            let th = theta.data()[i] * decay;
            theta.data_mut()[i] = th - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Learning-rate schedule: linear warmup to `peak`, cosine anneal to zero,
/// zero afterwards.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup: u64,
    pub anneal: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            peak: 5e-4,
            warmup: 1000,
            anneal: 9000,
        }
    }
}

/// Schedule value at `step`. Continuous at the warmup boundary (both sides
/// equal `peak`); step 0 is 0; steps past warmup+anneal are 0.
pub fn lr_at(step: u64, s: &LrSchedule) -> f64 {
    if step < s.warmup {
        return s.peak * step as f64 / s.warmup as f64;
    }
    let t = step - s.warmup;
    if t <= s.anneal {
        if s.anneal == 0 {
            return s.peak;
        }
        let progress = t as f64 / s.anneal as f64;
        return s.peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    }
    0.0
}
