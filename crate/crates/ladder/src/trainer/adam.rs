//! Bias-corrected adaptive-moment optimizer.

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// First-moment decay.
pub const ADAM_BETA1: f64 = 0.9;
/// Second-moment decay.
pub const ADAM_BETA2: f64 = 0.999;
/// Denominator stabilizer.
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter moment estimates plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState<S: Scalar> {
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
    t: u64,
}

impl<S: Scalar> AdamState<S> {
    /// Zeroed moments, one pair per parameter shape.
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|(r, c)| (Tensor::zeros(r, c), Tensor::zeros(r, c)))
            .unzip();
        Self { m, v, t: 0 }
    }

    /// Number of steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Apply one optimizer step across all parameters.
///
/// `grads[i]` of `None` marks a parameter absent from the current graph; its
/// moments still decay, so it keeps coasting on any momentum it accumulated
/// (and stays put if it never received gradient). Non-finite gradients abort
/// with the parameter's name.
pub fn adam_step<S: Scalar>(
    params: &mut [&mut Tensor<S>],
    grads: &[Option<Tensor<S>>],
    names: &[String],
    state: &mut AdamState<S>,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != names.len()
    {
        return Err(Error::Config(format!(
            "optimizer saw {} parameters, {} gradients, {} moment pairs, {} names",
            params.len(),
            grads.len(),
            state.m.len(),
            names.len()
        )));
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::Config(format!("learning rate {lr} must be finite and nonnegative")));
    }
    state.t += 1;
    let t = state.t;
    let b1 = S::from_f64(ADAM_BETA1);
    let b2 = S::from_f64(ADAM_BETA2);
    let one = S::one();
    let bc1 = S::from_f64(1.0 - ADAM_BETA1.powi(t as i32));
    let bc2 = S::from_f64(1.0 - ADAM_BETA2.powi(t as i32));
    let eps = S::from_f64(ADAM_EPS);
    let alpha = S::from_f64(lr);

    for i in 0..params.len() {
        if let Some(g) = &grads[i] {
            if g.shape() != params[i].shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    detail: format!(
                        "parameter {} is {:?} but its gradient is {:?}",
                        names[i],
                        params[i].shape(),
                        g.shape()
                    ),
                });
            }
            if g.data().iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient { name: names[i].clone(), step: t });
            }
        }
        let zero = S::zero();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params[i].data_mut();
        for j in 0..p.len() {
            let gj = grads[i].as_ref().map_or(zero, |g| g.data()[j]);
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] = p[j] - alpha * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
