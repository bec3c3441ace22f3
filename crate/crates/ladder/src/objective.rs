//! The full training objective.
//!
//! One evaluation builds up to three encoder passes on a single tape — noisy
//! over the labeled batch (classification), noisy and clean over the
//! reconstruction batch (denoising) — plus the decoder, and sums mean
//! cross-entropy with the weighted per-layer reconstruction errors. The clean
//! pass supplies both the denoising targets and the batch statistics that
//! feed the running averages used at evaluation time. When no reconstruction
//! batch is given (fully supervised data), the labeled pass doubles as the
//! reconstruction pass.

use crate::error::{Error, Result};
use crate::model::{
    decoder_forward, encoder_forward, EncoderMode, EncoderTrace, LadderSpec, ModelIds, NoiseDraws,
    RunningStats,
};
use crate::numerics::{Scalar, Tape, Tensor, ValueId};
use serde::Serialize;

/// Node ids and extracted statistics of one objective evaluation.
#[derive(Debug)]
pub struct ObjectiveNodes<S: Scalar> {
    /// Total cost, `1 x 1`.
    pub total: ValueId,
    /// Mean cross-entropy of the noisy labeled pass, `1 x 1`.
    pub ce: ValueId,
    /// Weighted reconstruction cost per layer 0..=L; `None` where the
    /// effective weight is zero.
    pub recon: Vec<Option<ValueId>>,
    /// Softmax output of the noisy labeled pass.
    pub y_noisy: ValueId,
    /// Clean-pass batch statistics (mean, raw std) per layer 1..=L, for
    /// running-average updates.
    pub clean_stats: Vec<(Tensor<S>, Tensor<S>)>,
}

/// Scalar summary of an evaluated objective.
#[derive(Clone, Debug, Serialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub ce: f64,
    /// Weighted reconstruction contribution per layer 0..=L (zero where
    /// inactive).
    pub recon: Vec<f64>,
    /// Softmax probabilities clamped inside the cross-entropy term.
    pub ce_clamped: usize,
}

/// Build the objective graph for one step.
///
/// `x_recon`/`noise_rc` must be given together; passing neither reuses the
/// labeled batch (and its noise) for reconstruction. The reconstruction pass
/// only exists when some effective reconstruction weight is positive;
/// otherwise a clean pass still runs so `clean_stats` stays populated.
pub fn build_objective<S: Scalar>(
    tape: &mut Tape<S>,
    ids: &ModelIds,
    spec: &LadderSpec,
    running: &RunningStats<S>,
    x_labeled: &Tensor<S>,
    targets: &[usize],
    x_recon: Option<&Tensor<S>>,
    noise_ce: &NoiseDraws<S>,
    noise_rc: Option<&NoiseDraws<S>>,
) -> Result<ObjectiveNodes<S>> {
    if targets.len() != x_labeled.rows() {
        return Err(Error::ShapeMismatch {
            op: "build_objective",
            detail: format!("{} labeled rows but {} targets", x_labeled.rows(), targets.len()),
        });
    }
    if x_recon.is_some() != noise_rc.is_some() {
        return Err(Error::Config(
            "reconstruction batch and its noise draws must be given together".into(),
        ));
    }
    if x_recon.is_some() && !spec.uses_decoder() {
        return Err(Error::Config(
            "reconstruction batch given but every reconstruction weight is zero".into(),
        ));
    }

    let x_lab = tape.leaf(x_labeled.clone());
    let noisy_lab = encoder_forward(tape, &ids.enc, spec, x_lab, Some(noise_ce), running, EncoderMode::Noisy)?;
    let ce = tape.cross_entropy_mean(noisy_lab.y, targets)?;
    let y_noisy = noisy_lab.y;

    // The reconstruction side: which batch, which noisy trace.
    let separate_trace: Option<EncoderTrace>;
    let (x_rc_id, noisy_rc): (ValueId, &EncoderTrace) = match (x_recon, noise_rc) {
        (Some(xr), Some(nr)) => {
            let id = tape.leaf(xr.clone());
            separate_trace =
                Some(encoder_forward(tape, &ids.enc, spec, id, Some(nr), running, EncoderMode::Noisy)?);
            (id, separate_trace.as_ref().expect("just set"))
        }
        _ => (x_lab, &noisy_lab),
    };

    let clean = encoder_forward(tape, &ids.enc, spec, x_rc_id, None, running, EncoderMode::CleanTrain)?;
    let clean_stats = clean
        .layers
        .iter()
        .map(|layer| (tape.value(layer.mean).clone(), tape.value(layer.std_raw).clone()))
        .collect();

    let mut recon = vec![None; spec.depth() + 1];
    let mut total = ce;
    if spec.uses_decoder() {
        let dec_ids = ids
            .dec
            .as_ref()
            .ok_or_else(|| Error::Config("spec needs a decoder but none was registered".into()))?;
        let dtrace = decoder_forward(tape, dec_ids, spec, noisy_rc)?;
        for l in 0..=spec.depth() {
            let lambda = spec.effective_lambda(l);
            if lambda == 0.0 {
                continue;
            }
            let z_hat = dtrace.z_hat[l];
            // Normalize the reconstruction with the clean pass's statistics;
            // layer 0 compares raw signals (identity statistics).
            let (z_hat_bn, target) = if l == 0 {
                (z_hat, x_rc_id)
            } else {
                let layer = &clean.layers[l - 1];
                let centered = tape.sub_row(z_hat, layer.mean)?;
                (tape.div_row(centered, layer.std_safe)?, layer.z)
            };
            let diff = tape.sub(z_hat_bn, target)?;
            let sq = tape.mul(diff, diff)?;
            let mean = tape.mean_all(sq)?;
            let weighted = tape.scale(mean, S::from_f64(lambda))?;
            recon[l] = Some(weighted);
            total = tape.add(total, weighted)?;
        }
    }

    Ok(ObjectiveNodes { total, ce, recon, y_noisy, clean_stats })
}

/// Read the evaluated cost components off the tape.
pub fn extract_breakdown<S: Scalar>(tape: &Tape<S>, nodes: &ObjectiveNodes<S>) -> CostBreakdown {
    CostBreakdown {
        total: tape.value(nodes.total).get(0, 0).as_f64(),
        ce: tape.value(nodes.ce).get(0, 0).as_f64(),
        recon: nodes
            .recon
            .iter()
            .map(|r| r.map_or(0.0, |id| tape.value(id).get(0, 0).as_f64()))
            .collect(),
        ce_clamped: tape.ce_clamped_count(nodes.ce).unwrap_or(0),
    }
}
