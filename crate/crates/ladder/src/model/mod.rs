//! Model definition: architecture spec, parameters, and forward passes.
//!
//! A ladder model is a feedforward classifier encoder evaluated in three
//! modes (noisy, clean-training, clean-evaluation) plus an optional decoder
//! that reconstructs each layer's pre-activation from the layer above. The
//! two encoder evaluations share one set of weights; the noisy pass feeds the
//! classification cost and the decoder's lateral inputs, the clean pass
//! provides reconstruction targets and normalization statistics.

mod checkpoint;
mod decoder;
mod encoder;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use decoder::{decoder_forward, DecoderTrace};
pub use encoder::{draw_noise, encoder_forward, EncoderMode, EncoderTrace, LayerTrace, NoiseDraws};

use crate::combinators::{CombInit, CombParams, CombinatorKind};
use crate::error::{Error, Result};
use crate::numerics::{RngStream, Scalar, Tape, Tensor, ValueId, STD_EPS};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Hidden-layer activation; the output layer is always softmax.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Lrelu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub(crate) fn apply<S: Scalar>(self, tape: &mut Tape<S>, x: ValueId) -> Result<ValueId> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Lrelu => tape.lrelu(x, S::from_f64(0.1)),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Linear => Ok(x),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Relu => "relu",
            Activation::Lrelu => "lrelu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "lrelu" => Ok(Activation::Lrelu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" => Ok(Activation::Linear),
            _ => Err(Error::Config(format!("unrecognized activation '{s}'"))),
        }
    }
}

/// Structural ablation switches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantFlags {
    /// Inject noise at the input layer only (layers >= 1 get none).
    #[serde(default)]
    pub first_noise_only: bool,
    /// Count reconstruction cost at the input layer only.
    #[serde(default)]
    pub first_recons_only: bool,
    /// Feed the decoder all-zero lateral signals; requires both flags above.
    #[serde(default)]
    pub no_lateral: bool,
}

/// Full architecture and objective description of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    /// Layer widths `[d0, ..., dL]`: input, hiddens, classes.
    pub layer_sizes: Vec<usize>,
    /// Hidden activation (output is softmax).
    pub activation: Activation,
    /// Additive Gaussian noise std per layer, length `L + 1`.
    pub noise_sigma: Vec<f64>,
    /// Reconstruction weight per layer, length `L + 1`.
    pub lambda: Vec<f64>,
    /// Decoder combinator form.
    pub combinator: CombinatorKind,
    /// Combinator weight init scheme.
    pub comb_init: CombInit,
    /// Weight std for MLP combinators (and RandInit).
    pub comb_eta: f64,
    /// Share one MLP combinator across all decoder layers instead of one per
    /// layer; valid for MLP forms only.
    #[serde(default)]
    pub mlp_shared_across_layers: bool,
    /// Ablation switches.
    #[serde(default)]
    pub flags: VariantFlags,
}

impl LadderSpec {
    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Width of layer `l` (0-based, input is layer 0).
    pub fn width(&self, l: usize) -> usize {
        self.layer_sizes[l]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    /// Noise std actually applied at layer `l`, after ablation flags.
    pub fn effective_sigma(&self, l: usize) -> f64 {
        if self.flags.first_noise_only && l >= 1 {
            0.0
        } else {
            self.noise_sigma[l]
        }
    }

    /// Reconstruction weight actually applied at layer `l`, after flags.
    pub fn effective_lambda(&self, l: usize) -> f64 {
        if self.flags.first_recons_only && l >= 1 {
            0.0
        } else {
            self.lambda[l]
        }
    }

    /// Whether any reconstruction weight is live (decoder needed at all).
    pub fn uses_decoder(&self) -> bool {
        (0..=self.depth()).any(|l| self.effective_lambda(l) > 0.0)
    }

    /// Check every structural precondition.
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "need at least input and output layers, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.iter().any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let want = self.depth() + 1;
        if self.noise_sigma.len() != want {
            return Err(Error::Config(format!(
                "noise_sigma needs one entry per layer ({want}), got {}",
                self.noise_sigma.len()
            )));
        }
        if self.lambda.len() != want {
            return Err(Error::Config(format!(
                "lambda needs one entry per layer ({want}), got {}",
                self.lambda.len()
            )));
        }
        if self.noise_sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Config(format!(
                "noise_sigma entries must be finite and non-negative, got {:?}",
                self.noise_sigma
            )));
        }
        if self.lambda.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Config(format!(
                "lambda entries must be finite and non-negative, got {:?}",
                self.lambda
            )));
        }
        self.combinator.validate()?;
        if self.comb_init != CombInit::Standard && self.combinator != CombinatorKind::Vanilla {
            return Err(Error::Config(format!(
                "init scheme {} only applies to the vanilla combinator",
                self.comb_init
            )));
        }
        if self.mlp_shared_across_layers
            && !matches!(self.combinator, CombinatorKind::Mlp(_) | CombinatorKind::Amlp(_))
        {
            return Err(Error::Config(
                "mlp_shared_across_layers requires an MLP combinator".into(),
            ));
        }
        if self.flags.no_lateral && !(self.flags.first_noise_only && self.flags.first_recons_only) {
            return Err(Error::Config(
                "no_lateral requires first_noise_only and first_recons_only".into(),
            ));
        }
        if !self.comb_eta.is_finite() {
            return Err(Error::Config(format!("comb_eta must be finite, got {}", self.comb_eta)));
        }
        Ok(())
    }
}

/// Weights of one encoder layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct EncoderLayer<S: Scalar> {
    /// `d_{l-1} x d_l` weight matrix.
    pub w: Tensor<S>,
    /// `1 x d_l` batch-norm scale.
    pub gamma: Tensor<S>,
    /// `1 x d_l` batch-norm shift.
    pub beta: Tensor<S>,
}

/// All encoder parameters (shared by the noisy and clean passes).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct EncoderParams<S: Scalar> {
    /// Layers 1..=L, index `l - 1`.
    pub layers: Vec<EncoderLayer<S>>,
}

/// All decoder parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct DecoderParams<S: Scalar> {
    /// Projections `v[l]`: `d_{l+1} x d_l`, mapping layer `l+1` down to `l`.
    pub v: Vec<Tensor<S>>,
    /// Combinator per layer 0..=L, or a single shared entry for MLP sharing.
    pub comb: Vec<CombParams<S>>,
}

/// Exponential moving averages of clean-pass batch statistics, used by the
/// evaluation-mode encoder.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct RunningStats<S: Scalar> {
    /// Per layer 1..=L (index `l - 1`), shape `1 x d_l`.
    pub mean: Vec<Tensor<S>>,
    /// Same layout; raw standard deviations.
    pub std: Vec<Tensor<S>>,
    /// Decay of the moving average per update.
    pub decay: f64,
}

impl<S: Scalar> RunningStats<S> {
    /// Fresh stats: mean 0, std 1.
    pub fn init(spec: &LadderSpec, decay: f64) -> Self {
        let mean = (1..=spec.depth()).map(|l| Tensor::zeros(1, spec.width(l))).collect();
        let std = (1..=spec.depth())
            .map(|l| Tensor::from_raw(1, spec.width(l), vec![S::one(); spec.width(l)]))
            .collect();
        Self { mean, std, decay }
    }

    /// Blend in one batch's statistics for layer `l` (1-based).
    pub fn update(&mut self, l: usize, batch_mean: &Tensor<S>, batch_std: &Tensor<S>) -> Result<()> {
        let idx = l - 1;
        if self.mean[idx].shape() != batch_mean.shape() || self.std[idx].shape() != batch_std.shape() {
            return Err(Error::ShapeMismatch {
                op: "RunningStats::update",
                detail: format!("layer {l}"),
            });
        }
        let d = S::from_f64(self.decay);
        let om = S::one() - d;
        for (old, new) in self.mean[idx].data_mut().iter_mut().zip(batch_mean.data()) {
            *old = d * *old + om * *new;
        }
        for (old, new) in self.std[idx].data_mut().iter_mut().zip(batch_std.data()) {
            *old = d * *old + om * *new;
        }
        Ok(())
    }

    /// Mean and clamped std for layer `l` (1-based), for evaluation mode.
    pub(crate) fn eval_stats(&self, l: usize) -> (Tensor<S>, Tensor<S>) {
        let idx = l - 1;
        let eps = S::from_f64(STD_EPS);
        let std = Tensor::from_raw(
            1,
            self.std[idx].cols(),
            self.std[idx].data().iter().map(|&s| if s > eps { s } else { eps }).collect(),
        );
        (self.mean[idx].clone(), std)
    }
}

/// A complete model: spec, weights, and evaluation statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Model<S: Scalar> {
    pub spec: LadderSpec,
    pub encoder: EncoderParams<S>,
    /// Present iff any reconstruction weight is live.
    pub decoder: Option<DecoderParams<S>>,
    pub running: RunningStats<S>,
}

/// Default decay for running batch-norm statistics.
pub const RUNNING_STATS_DECAY: f64 = 0.99;

/// Tape ids of registered encoder parameters.
pub struct EncoderIds {
    pub layers: Vec<(ValueId, ValueId, ValueId)>, // (w, gamma, beta) per layer
}

/// Tape ids of registered decoder parameters.
pub struct DecoderIds {
    pub v: Vec<ValueId>,
    /// Block ids per layer 0..=L; with sharing, every layer aliases the same ids.
    pub comb_layer: Vec<Vec<ValueId>>,
    /// Each distinct combinator block exactly once (for gradient collection).
    comb_flat: Vec<ValueId>,
}

/// Tape ids of all registered parameters for one step.
pub struct ModelIds {
    pub enc: EncoderIds,
    pub dec: Option<DecoderIds>,
}

impl ModelIds {
    /// All distinct parameter ids, in the same order as
    /// [`Model::named_params`].
    pub fn flat(&self) -> Vec<ValueId> {
        let mut out = Vec::new();
        for &(w, g, b) in &self.enc.layers {
            out.push(w);
            out.push(g);
            out.push(b);
        }
        if let Some(dec) = &self.dec {
            out.extend_from_slice(&dec.v);
            out.extend_from_slice(&dec.comb_flat);
        }
        out
    }
}

impl<S: Scalar> Model<S> {
    /// Initialize a model from its spec and a seed.
    ///
    /// Weights draw from `N(0, 1/sqrt(fan_in))`; batch-norm scale starts at 1
    /// and shift at 0. Every tensor uses its own substream, so variants that
    /// skip the decoder leave the encoder draws untouched.
    pub fn init(spec: &LadderSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let root = RngStream::new(seed);
        let l_count = spec.depth();

        let mut layers = Vec::with_capacity(l_count);
        for l in 1..=l_count {
            let fan_in = spec.width(l - 1);
            let mut w = vec![S::zero(); fan_in * spec.width(l)];
            root.substream(&format!("init/enc/w{l}"))
                .fill_normal(&mut w, 0.0, 1.0 / (fan_in as f64).sqrt());
            layers.push(EncoderLayer {
                w: Tensor::new(fan_in, spec.width(l), w)?,
                gamma: Tensor::filled(1, spec.width(l), S::one())?,
                beta: Tensor::zeros(1, spec.width(l)),
            });
        }

        let decoder = if spec.uses_decoder() {
            let mut v = Vec::with_capacity(l_count);
            for l in 0..l_count {
                let fan_in = spec.width(l + 1);
                let mut data = vec![S::zero(); fan_in * spec.width(l)];
                root.substream(&format!("init/dec/v{l}"))
                    .fill_normal(&mut data, 0.0, 1.0 / (fan_in as f64).sqrt());
                v.push(Tensor::new(fan_in, spec.width(l), data)?);
            }
            let comb = if spec.mlp_shared_across_layers {
                vec![CombParams::init(
                    &spec.combinator,
                    spec.comb_init,
                    1,
                    spec.comb_eta,
                    &mut root.substream("init/dec/comb"),
                )?]
            } else {
                (0..=l_count)
                    .map(|l| {
                        CombParams::init(
                            &spec.combinator,
                            spec.comb_init,
                            spec.width(l),
                            spec.comb_eta,
                            &mut root.substream(&format!("init/dec/comb{l}")),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            Some(DecoderParams { v, comb })
        } else {
            None
        };

        Ok(Self {
            spec: spec.clone(),
            encoder: EncoderParams { layers },
            decoder,
            running: RunningStats::init(spec, RUNNING_STATS_DECAY),
        })
    }

    /// Register every parameter on a tape for one training step.
    pub fn register(&self, tape: &mut Tape<S>) -> ModelIds {
        let enc = EncoderIds {
            layers: self
                .encoder
                .layers
                .iter()
                .map(|layer| {
                    (tape.param(&layer.w), tape.param(&layer.gamma), tape.param(&layer.beta))
                })
                .collect(),
        };
        let dec = self.decoder.as_ref().map(|d| {
            let v = d.v.iter().map(|t| tape.param(t)).collect();
            let (comb_layer, comb_flat) = if self.spec.mlp_shared_across_layers {
                let ids = d.comb[0].register(tape);
                (vec![ids.clone(); self.spec.depth() + 1], ids)
            } else {
                let per_layer: Vec<Vec<ValueId>> =
                    d.comb.iter().map(|c| c.register(tape)).collect();
                let flat = per_layer.iter().flatten().copied().collect();
                (per_layer, flat)
            };
            DecoderIds { v, comb_layer, comb_flat }
        });
        ModelIds { enc, dec }
    }

    /// Rebuild the registered-id structure from a flat list in
    /// [`Model::named_params`] order; used by gradient checks that register
    /// perturbed copies of the parameters themselves.
    pub fn ids_from_flat(&self, flat: &[ValueId]) -> Result<ModelIds> {
        let mut it = flat.iter().copied();
        let mut next = |what: &str| {
            it.next().ok_or_else(|| Error::Config(format!("ids_from_flat: missing id for {what}")))
        };
        let mut layers = Vec::with_capacity(self.encoder.layers.len());
        for _ in &self.encoder.layers {
            layers.push((next("enc/w")?, next("enc/gamma")?, next("enc/beta")?));
        }
        let dec = match &self.decoder {
            Some(d) => {
                let v = d.v.iter().map(|_| next("dec/v")).collect::<Result<Vec<_>>>()?;
                let mut per_comb = Vec::with_capacity(d.comb.len());
                for comb in &d.comb {
                    let ids = (0..comb.blocks().len())
                        .map(|_| next("dec/comb"))
                        .collect::<Result<Vec<_>>>()?;
                    per_comb.push(ids);
                }
                let (comb_layer, comb_flat) = if self.spec.mlp_shared_across_layers {
                    let ids = per_comb.remove(0);
                    (vec![ids.clone(); self.spec.depth() + 1], ids)
                } else {
                    let flat = per_comb.iter().flatten().copied().collect();
                    (per_comb, flat)
                };
                Some(DecoderIds { v, comb_layer, comb_flat })
            }
            None => None,
        };
        if it.next().is_some() {
            return Err(Error::Config("ids_from_flat: too many ids".into()));
        }
        Ok(ModelIds { enc: EncoderIds { layers }, dec })
    }

    /// Every distinct parameter with a stable name, in registration order.
    pub fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for (i, layer) in self.encoder.layers.iter().enumerate() {
            let l = i + 1;
            out.push((format!("enc/w{l}"), &layer.w));
            out.push((format!("enc/gamma{l}"), &layer.gamma));
            out.push((format!("enc/beta{l}"), &layer.beta));
        }
        if let Some(dec) = &self.decoder {
            for (l, v) in dec.v.iter().enumerate() {
                out.push((format!("dec/v{l}"), v));
            }
            for (ci, comb) in dec.comb.iter().enumerate() {
                let prefix = if self.spec.mlp_shared_across_layers {
                    "dec/comb".to_string()
                } else {
                    format!("dec/comb{ci}")
                };
                for (bname, t) in comb.blocks() {
                    out.push((format!("{prefix}/{bname}"), t));
                }
            }
        }
        out
    }

    /// Mutable view over the same parameters, same order as `named_params`.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out: Vec<&mut Tensor<S>> = Vec::new();
        for layer in self.encoder.layers.iter_mut() {
            out.push(&mut layer.w);
            out.push(&mut layer.gamma);
            out.push(&mut layer.beta);
        }
        if let Some(dec) = self.decoder.as_mut() {
            for v in dec.v.iter_mut() {
                out.push(v);
            }
            for comb in dec.comb.iter_mut() {
                for (_, t) in comb.blocks_mut() {
                    out.push(t);
                }
            }
        }
        out
    }

    /// Classify rows of `x` by the evaluation-mode encoder; ties resolve to
    /// the lowest class index.
    pub fn predict(&self, x: &Tensor<S>) -> Result<Vec<usize>> {
        if x.cols() != self.spec.width(0) {
            return Err(Error::ShapeMismatch {
                op: "predict",
                detail: format!("input width {} but model expects {}", x.cols(), self.spec.width(0)),
            });
        }
        let mut tape = Tape::new();
        let ids = self.register(&mut tape);
        let x_id = tape.leaf(x.clone());
        let trace = encoder_forward(
            &mut tape,
            &ids.enc,
            &self.spec,
            x_id,
            None,
            &self.running,
            EncoderMode::CleanEval,
        )?;
        let y = tape.value(trace.y);
        let mut out = Vec::with_capacity(y.rows());
        for i in 0..y.rows() {
            let row = y.row_slice(i);
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            out.push(best);
        }
        Ok(out)
    }

    /// Validate internal consistency (spec, shapes, finiteness); used after
    /// deserialization.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let l_count = self.spec.depth();
        if self.encoder.layers.len() != l_count {
            return Err(Error::Config(format!(
                "encoder has {} layers, spec wants {l_count}",
                self.encoder.layers.len()
            )));
        }
        for (i, layer) in self.encoder.layers.iter().enumerate() {
            let l = i + 1;
            let want_w = (self.spec.width(l - 1), self.spec.width(l));
            if layer.w.shape() != want_w {
                return Err(Error::Config(format!(
                    "enc/w{l} shape {:?}, want {want_w:?}",
                    layer.w.shape()
                )));
            }
            for t in [&layer.w, &layer.gamma, &layer.beta] {
                t.validate()?;
            }
            if layer.gamma.shape() != (1, self.spec.width(l)) || layer.beta.shape() != (1, self.spec.width(l)) {
                return Err(Error::Config(format!("enc layer {l} gamma/beta shape mismatch")));
            }
        }
        match (&self.decoder, self.spec.uses_decoder()) {
            (None, true) => {
                return Err(Error::Config("spec has live reconstruction weights but no decoder".into()))
            }
            (Some(_), false) => {
                return Err(Error::Config("decoder present but every reconstruction weight is zero".into()))
            }
            _ => {}
        }
        if let Some(dec) = &self.decoder {
            if dec.v.len() != l_count {
                return Err(Error::Config(format!(
                    "decoder has {} projections, want {l_count}",
                    dec.v.len()
                )));
            }
            for (l, v) in dec.v.iter().enumerate() {
                let want = (self.spec.width(l + 1), self.spec.width(l));
                if v.shape() != want {
                    return Err(Error::Config(format!("dec/v{l} shape {:?}, want {want:?}", v.shape())));
                }
                v.validate()?;
            }
            let want_combs = if self.spec.mlp_shared_across_layers { 1 } else { l_count + 1 };
            if dec.comb.len() != want_combs {
                return Err(Error::Config(format!(
                    "decoder has {} combinators, want {want_combs}",
                    dec.comb.len()
                )));
            }
            for (ci, comb) in dec.comb.iter().enumerate() {
                if comb.kind() != &self.spec.combinator {
                    return Err(Error::Config(format!(
                        "combinator {ci} is {}, spec wants {}",
                        comb.kind(),
                        self.spec.combinator
                    )));
                }
                let width = if self.spec.mlp_shared_across_layers { 1 } else { self.spec.width(ci) };
                comb.check_layout(width)?;
            }
        }
        if self.running.mean.len() != l_count || self.running.std.len() != l_count {
            return Err(Error::Config("running stats layer count mismatch".into()));
        }
        for l in 1..=l_count {
            let want = (1, self.spec.width(l));
            if self.running.mean[l - 1].shape() != want || self.running.std[l - 1].shape() != want {
                return Err(Error::Config(format!("running stats shape mismatch at layer {l}")));
            }
            self.running.mean[l - 1].validate()?;
            self.running.std[l - 1].validate()?;
        }
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }
}
