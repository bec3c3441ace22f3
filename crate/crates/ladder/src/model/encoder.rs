//! Encoder forward pass in its three modes.
//!
//! Each weight layer computes `z_pre = h_prev * W`, normalizes per column,
//! optionally injects Gaussian noise (noisy mode), then applies
//! `phi(gamma * (z + beta))`, softmax at the top. Training modes normalize
//! with the current batch's statistics; evaluation mode uses the running
//! averages accumulated from clean training passes.

use super::{EncoderIds, LadderSpec, RunningStats};
use crate::error::{Error, Result};
use crate::numerics::{RngStream, Scalar, Tape, Tensor, ValueId, STD_EPS};

/// How the encoder is being evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderMode {
    /// Corrupted pass: additive input and pre-activation noise.
    Noisy,
    /// Clean pass with batch statistics (reconstruction targets).
    CleanTrain,
    /// Clean pass with running statistics (prediction).
    CleanEval,
}

/// Pre-drawn noise tensors for one noisy pass, one per layer 0..=L.
///
/// Drawing happens outside the graph builder so a pass is a pure function of
/// its inputs; layers whose effective noise is zero hold empty placeholders.
pub struct NoiseDraws<S: Scalar> {
    per_layer: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> NoiseDraws<S> {
    /// No-op draws (every layer noise-free), for callers that want a noisy-
    /// mode graph without corruption.
    pub fn zeros(spec: &LadderSpec) -> Self {
        Self { per_layer: vec![None; spec.depth() + 1] }
    }

    /// The draw for layer `l`, or `None` when that layer is noise-free.
    pub fn layer(&self, l: usize) -> Option<&Tensor<S>> {
        self.per_layer[l].as_ref()
    }
}

/// Draw one noisy pass worth of noise for a batch of `batch` rows.
///
/// Layer `l` draws from the substream `l{l}` of `rng` iff its effective noise
/// std is positive, so ablation variants that silence a layer leave every
/// other layer's draws unchanged.
pub fn draw_noise<S: Scalar>(
    spec: &LadderSpec,
    rng: &RngStream,
    batch: usize,
) -> Result<NoiseDraws<S>> {
    let mut per_layer = Vec::with_capacity(spec.depth() + 1);
    for l in 0..=spec.depth() {
        let sigma = spec.effective_sigma(l);
        if sigma > 0.0 {
            let t = rng
                .substream(&format!("l{l}"))
                .normal_tensor(batch, spec.width(l), sigma)?;
            per_layer.push(Some(t));
        } else {
            per_layer.push(None);
        }
    }
    Ok(NoiseDraws { per_layer })
}

/// Nodes produced while normalizing one layer.
pub(crate) struct BnNodes {
    pub mean: ValueId,
    pub std_raw: ValueId,
    pub std_safe: ValueId,
    pub z: ValueId,
}

/// Batch normalization from the batch's own statistics (no scale/shift).
pub(crate) fn batchnorm<S: Scalar>(tape: &mut Tape<S>, x: ValueId) -> Result<BnNodes> {
    let mean = tape.mean_rows(x)?;
    let centered = tape.sub_row(x, mean)?;
    let sq = tape.mul(centered, centered)?;
    let var = tape.mean_rows(sq)?;
    let std_raw = tape.sqrt(var)?;
    let std_safe = tape.clamp(std_raw, S::from_f64(STD_EPS), S::infinity())?;
    let z = tape.div_row(centered, std_safe)?;
    Ok(BnNodes { mean, std_raw, std_safe, z })
}

/// Per-layer nodes recorded during an encoder pass.
#[derive(Clone, Copy, Debug)]
pub struct LayerTrace {
    /// Pre-normalization projection `h_prev * W`.
    pub z_pre: ValueId,
    /// `1 x d_l` mean used for normalization.
    pub mean: ValueId,
    /// `1 x d_l` raw standard deviation used for normalization.
    pub std_raw: ValueId,
    /// Std clamped away from zero (what the division actually used).
    pub std_safe: ValueId,
    /// Normalized pre-activation, including noise in noisy mode.
    pub z: ValueId,
    /// Layer output after scale/shift and activation.
    pub h: ValueId,
}

/// All nodes of one encoder pass.
pub struct EncoderTrace {
    /// The layer-0 signal: input plus noise in noisy mode, else the input.
    pub x: ValueId,
    /// Layers 1..=L at index `l - 1`.
    pub layers: Vec<LayerTrace>,
    /// Softmax output (same node as the top layer's `h`).
    pub y: ValueId,
}

/// Run one encoder pass over `x` (a `batch x d0` node already on the tape).
///
/// `noise` must be `Some` exactly in noisy mode. Evaluation mode reads
/// `running`; the training modes ignore it.
pub fn encoder_forward<S: Scalar>(
    tape: &mut Tape<S>,
    ids: &EncoderIds,
    spec: &LadderSpec,
    x: ValueId,
    noise: Option<&NoiseDraws<S>>,
    running: &RunningStats<S>,
    mode: EncoderMode,
) -> Result<EncoderTrace> {
    match (mode, noise.is_some()) {
        (EncoderMode::Noisy, false) => {
            return Err(Error::Config("noisy encoder pass needs noise draws".into()))
        }
        (EncoderMode::CleanTrain | EncoderMode::CleanEval, true) => {
            return Err(Error::Config("clean encoder pass must not receive noise".into()))
        }
        _ => {}
    }
    let (batch, d0) = tape.value(x).shape();
    if d0 != spec.width(0) {
        return Err(Error::ShapeMismatch {
            op: "encoder_forward",
            detail: format!("input width {d0}, spec wants {}", spec.width(0)),
        });
    }

    let x0 = match noise.and_then(|n| n.layer(0)) {
        Some(n0) => {
            if n0.shape() != (batch, d0) {
                return Err(Error::ShapeMismatch {
                    op: "encoder_forward",
                    detail: format!("input noise shape {:?}", n0.shape()),
                });
            }
            let n = tape.leaf(n0.clone());
            tape.add(x, n)?
        }
        None => x,
    };

    let mut layers = Vec::with_capacity(spec.depth());
    let mut h_prev = x0;
    for l in 1..=spec.depth() {
        let (w, gamma, beta) = ids.layers[l - 1];
        let z_pre = tape.matmul(h_prev, w)?;

        let (mean, std_raw, std_safe, z_norm) = match mode {
            EncoderMode::Noisy | EncoderMode::CleanTrain => {
                let bn = batchnorm(tape, z_pre)?;
                (bn.mean, bn.std_raw, bn.std_safe, bn.z)
            }
            EncoderMode::CleanEval => {
                let (m, s) = running.eval_stats(l);
                let mean = tape.leaf(m);
                let std = tape.leaf(s);
                let centered = tape.sub_row(z_pre, mean)?;
                let z = tape.div_row(centered, std)?;
                (mean, std, std, z)
            }
        };

        let z = match noise.and_then(|n| n.layer(l)) {
            Some(nl) => {
                if nl.shape() != (batch, spec.width(l)) {
                    return Err(Error::ShapeMismatch {
                        op: "encoder_forward",
                        detail: format!("layer {l} noise shape {:?}", nl.shape()),
                    });
                }
                let n = tape.leaf(nl.clone());
                tape.add(z_norm, n)?
            }
            None => z_norm,
        };

        // h = phi(gamma * (z + beta)), softmax at the top.
        let shifted = tape.add_row(z, beta)?;
        let scaled = tape.mul_row(shifted, gamma)?;
        let h = if l == spec.depth() {
            tape.softmax(scaled)?
        } else {
            spec.activation.apply(tape, scaled)?
        };

        layers.push(LayerTrace { z_pre, mean, std_raw, std_safe, z, h });
        h_prev = h;
    }

    Ok(EncoderTrace { x: x0, layers, y: h_prev })
}
