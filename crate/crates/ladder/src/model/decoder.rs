//! Decoder forward pass.
//!
//! The decoder walks from the softmax output back to the input. At the top it
//! normalizes the noisy class probabilities into `u_L`; at every layer it
//! combines the noisy encoder's lateral signal with the top-down `u_l` through
//! the configured combinator, then projects the reconstruction down one layer
//! and normalizes it to form the next `u`.

use super::encoder::batchnorm;
use super::{DecoderIds, EncoderTrace, LadderSpec};
use crate::combinators;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, ValueId};

/// Nodes of one decoder pass.
pub struct DecoderTrace {
    /// Reconstruction of each layer's normalized pre-activation, index 0..=L
    /// (layer 0 reconstructs the input signal itself).
    pub z_hat: Vec<ValueId>,
    /// Top-down signals, index 0..=L.
    pub u: Vec<ValueId>,
}

/// Run the decoder against a noisy encoder trace.
///
/// The lateral input at layer `l >= 1` is the noisy normalized pre-activation
/// `z`; at layer 0 it is the noisy input itself. With `no_lateral` set, every
/// lateral is replaced by zeros so the reconstruction depends on the top-down
/// path alone.
pub fn decoder_forward<S: Scalar>(
    tape: &mut Tape<S>,
    ids: &DecoderIds,
    spec: &LadderSpec,
    noisy: &EncoderTrace,
) -> Result<DecoderTrace> {
    let depth = spec.depth();
    if noisy.layers.len() != depth {
        return Err(Error::ShapeMismatch {
            op: "decoder_forward",
            detail: format!("trace has {} layers, spec wants {depth}", noisy.layers.len()),
        });
    }
    let batch = tape.value(noisy.y).rows();

    let mut z_hat = vec![None; depth + 1];
    let mut u = vec![None; depth + 1];

    let mut u_cur = batchnorm(tape, noisy.y)?.z;
    for l in (0..=depth).rev() {
        u[l] = Some(u_cur);
        let lateral = if spec.flags.no_lateral {
            tape.zeros(batch, spec.width(l))
        } else if l == 0 {
            noisy.x
        } else {
            noisy.layers[l - 1].z
        };
        let rec = combinators::apply(tape, &spec.combinator, &ids.comb_layer[l], lateral, u_cur)?;
        z_hat[l] = Some(rec);
        if l > 0 {
            let projected = tape.matmul(rec, ids.v[l - 1])?;
            u_cur = batchnorm(tape, projected)?.z;
        }
    }

    Ok(DecoderTrace {
        z_hat: z_hat.into_iter().map(|v| v.expect("filled")).collect(),
        u: u.into_iter().map(|v| v.expect("filled")).collect(),
    })
}
