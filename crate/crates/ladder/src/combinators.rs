//! Decoder combinator functions.
//!
//! A combinator merges the lateral signal `z_tilde` (the noisy encoder's
//! pre-activation at the same layer) with the vertical signal `u` (the
//! normalized projection from the decoder layer above), one output per unit.
//! The vanilla form is an affine mix of `z_tilde`, `u`, their product, and a
//! sigmoid gate; the remaining forms ablate pieces of it or replace it with
//! Gaussian-style or small-MLP parameterizations.
//!
//! Per-unit parameters are `1 x width` row vectors broadcast over the batch.
//! MLP forms instead share one tiny network across all units of a layer and
//! apply it elementwise, so their parameters are width-independent scalars.

use crate::error::{Error, Result};
use crate::numerics::{grad_check, GradCheckReport, RngStream, Scalar, Tape, Tensor, ValueId};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Leak slope for the rectifier inside MLP combinators.
pub const MLP_LRELU_SLOPE: f64 = 0.1;

/// Which combinator function the decoder uses.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CombinatorKind {
    /// Affine mix of `z`, `u`, `z*u` plus a weighted sigmoid of a second mix.
    Vanilla,
    /// Vanilla without the sigmoid term.
    NoSig,
    /// Vanilla without the multiplicative `z*u` terms (both occurrences).
    NoMult,
    /// Plain affine mix of `z` and `u` only.
    Linear,
    /// Convex-style mix `nu(u) * z + (1 - nu(u)) * mu(u)` with affine-plus-
    /// sigmoid `mu` and `nu`; `nu` is unconstrained.
    Gaussian,
    /// Gaussian with `nu` forced through a sigmoid gate, strictly in (0, 1).
    GatedGauss,
    /// Per-element MLP on `(u, z)` with the given hidden sizes.
    Mlp(Vec<usize>),
    /// Per-element MLP on the augmented input `(u, z, u*z)`.
    Amlp(Vec<usize>),
}

impl CombinatorKind {
    /// The ten standard forms studied in the experiments.
    pub fn all_forms() -> Vec<CombinatorKind> {
        vec![
            CombinatorKind::Vanilla,
            CombinatorKind::NoSig,
            CombinatorKind::NoMult,
            CombinatorKind::Linear,
            CombinatorKind::Gaussian,
            CombinatorKind::GatedGauss,
            CombinatorKind::Mlp(vec![4]),
            CombinatorKind::Mlp(vec![2, 2]),
            CombinatorKind::Mlp(vec![2, 2, 2]),
            CombinatorKind::Amlp(vec![4]),
            CombinatorKind::Amlp(vec![2, 2]),
            CombinatorKind::Amlp(vec![2, 2, 2]),
        ]
    }

    fn mlp_sizes(&self) -> Option<(&[usize], usize)> {
        match self {
            CombinatorKind::Mlp(s) => Some((s, 2)),
            CombinatorKind::Amlp(s) => Some((s, 3)),
            _ => None,
        }
    }

    /// Validate structural preconditions (hidden sizes nonzero, etc.).
    pub fn validate(&self) -> Result<()> {
        if let Some((sizes, _)) = self.mlp_sizes() {
            if sizes.is_empty() {
                return Err(Error::Config("mlp combinator needs at least one hidden layer".into()));
            }
            if sizes.iter().any(|&s| s == 0) {
                return Err(Error::Config("mlp combinator hidden sizes must be positive".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for CombinatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CombinatorKind::Vanilla => write!(f, "vanilla"),
            CombinatorKind::NoSig => write!(f, "nosig"),
            CombinatorKind::NoMult => write!(f, "nomult"),
            CombinatorKind::Linear => write!(f, "linear"),
            CombinatorKind::Gaussian => write!(f, "gaussian"),
            CombinatorKind::GatedGauss => write!(f, "gatedgauss"),
            CombinatorKind::Mlp(s) | CombinatorKind::Amlp(s) => {
                let tag = if matches!(self, CombinatorKind::Mlp(_)) { "mlp" } else { "amlp" };
                let sizes: Vec<String> = s.iter().map(usize::to_string).collect();
                write!(f, "{tag}[{}]", sizes.join(","))
            }
        }
    }
}

impl FromStr for CombinatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.to_ascii_lowercase().replace([' ', '-', '_'], "");
        let parse_sizes = |body: &str| -> Result<Vec<usize>> {
            let sizes: std::result::Result<Vec<usize>, _> =
                body.split(',').map(str::parse::<usize>).collect();
            sizes.map_err(|_| Error::Config(format!("unrecognized combinator '{s}'")))
        };
        let kind = if let Some(body) = norm.strip_prefix("amlp[").and_then(|b| b.strip_suffix(']')) {
            CombinatorKind::Amlp(parse_sizes(body)?)
        } else if let Some(body) = norm.strip_prefix("mlp[").and_then(|b| b.strip_suffix(']')) {
            CombinatorKind::Mlp(parse_sizes(body)?)
        } else {
            match norm.as_str() {
                "vanilla" => CombinatorKind::Vanilla,
                "nosig" => CombinatorKind::NoSig,
                "nomult" => CombinatorKind::NoMult,
                "linear" => CombinatorKind::Linear,
                "gaussian" => CombinatorKind::Gaussian,
                "gatedgauss" => CombinatorKind::GatedGauss,
                _ => return Err(Error::Config(format!("unrecognized combinator '{s}'"))),
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl Serialize for CombinatorKind {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> std::result::Result<Z::Ok, Z::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CombinatorKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// How combinator parameters are initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombInit {
    /// Identity-flavored init: pass the lateral signal through unchanged.
    Standard,
    /// Every weight drawn from N(0, 0.2^2); vanilla form only.
    RandInit,
    /// Identity on the vertical path instead of the lateral one; vanilla only.
    RevInit,
}

impl fmt::Display for CombInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CombInit::Standard => write!(f, "standard"),
            CombInit::RandInit => write!(f, "randinit"),
            CombInit::RevInit => write!(f, "revinit"),
        }
    }
}

impl FromStr for CombInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "standard" => Ok(CombInit::Standard),
            "randinit" => Ok(CombInit::RandInit),
            "revinit" => Ok(CombInit::RevInit),
            _ => Err(Error::Config(format!("unrecognized combinator init '{s}'"))),
        }
    }
}

/// Standard deviation used by the `RandInit` scheme.
pub const RANDINIT_STD: f64 = 0.2;

/// Parameters of one combinator instance (one decoder layer, width `w`).
///
/// Blocks are stored in a fixed per-kind order; `apply` indexes them
/// positionally and the names exist for reports and optimizer diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct CombParams<S: Scalar> {
    kind: CombinatorKind,
    blocks: Vec<(String, Tensor<S>)>,
}

/// Block names for the per-unit (non-MLP) kinds, in layout order.
fn per_unit_layout(kind: &CombinatorKind) -> &'static [&'static str] {
    match kind {
        CombinatorKind::Vanilla => {
            &["b0", "w0z", "w0u", "w0zu", "wsig", "b1", "w1z", "w1u", "w1zu"]
        }
        CombinatorKind::NoSig => &["b0", "w0z", "w0u", "w0zu"],
        CombinatorKind::NoMult => &["b0", "w0z", "w0u", "wsig", "b1", "w1z", "w1u"],
        CombinatorKind::Linear => &["b", "wz", "wu"],
        CombinatorKind::Gaussian => {
            &["w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9", "w10"]
        }
        CombinatorKind::GatedGauss => &["w1", "w2", "w3", "w4", "w5", "w6", "w7"],
        CombinatorKind::Mlp(_) | CombinatorKind::Amlp(_) => &[],
    }
}

/// Identity-flavored defaults: names absent from the map start at zero.
fn standard_values(kind: &CombinatorKind) -> &'static [(&'static str, f64)] {
    match kind {
        // Lateral pass-through in both the linear and the sigmoid mix.
        CombinatorKind::Vanilla => &[("w0z", 1.0), ("wsig", 1.0), ("w1z", 1.0)],
        CombinatorKind::NoSig => &[("w0z", 1.0)],
        CombinatorKind::NoMult => &[("w0z", 1.0), ("wsig", 1.0), ("w1z", 1.0)],
        CombinatorKind::Linear => &[("wz", 1.0)],
        // mu(u) starts at 0, nu(u) starts at sigmoid(u).
        CombinatorKind::Gaussian => &[("w2", 1.0), ("w6", 1.0), ("w7", 1.0)],
        CombinatorKind::GatedGauss => &[("w2", 1.0), ("w6", 1.0)],
        CombinatorKind::Mlp(_) | CombinatorKind::Amlp(_) => &[],
    }
}

/// Vertical pass-through instead: `u` flows, `z` starts ignored.
fn revinit_values() -> &'static [(&'static str, f64)] {
    &[("w0u", 1.0), ("wsig", 1.0), ("w1u", 1.0)]
}

impl<S: Scalar> CombParams<S> {
    /// Initialize parameters for `kind` at the given layer width.
    ///
    /// `eta` is the weight standard deviation for MLP forms and must be
    /// positive for them and for `RandInit`. `RandInit`/`RevInit` apply to
    /// the vanilla form only.
    pub fn init(
        kind: &CombinatorKind,
        scheme: CombInit,
        width: usize,
        eta: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        kind.validate()?;
        if width == 0 {
            return Err(Error::Config("combinator width must be positive".into()));
        }
        if scheme != CombInit::Standard && *kind != CombinatorKind::Vanilla {
            return Err(Error::Config(format!(
                "init scheme {scheme} only applies to the vanilla combinator, got {kind}"
            )));
        }
        let needs_eta =
            matches!(kind, CombinatorKind::Mlp(_) | CombinatorKind::Amlp(_)) || scheme == CombInit::RandInit;
        if needs_eta && !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!(
                "combinator init for {kind}/{scheme} needs a positive eta, got {eta}"
            )));
        }

        if let Some((sizes, arity)) = kind.mlp_sizes() {
            let mut blocks = Vec::new();
            let mut fan_in = arity;
            for (i, &h) in sizes.iter().enumerate() {
                let mut w = vec![S::zero(); fan_in * h];
                rng.substream(&format!("w{}", i + 1)).fill_normal(&mut w, 0.0, eta);
                blocks.push((format!("w{}", i + 1), Tensor::new(fan_in, h, w)?));
                blocks.push((format!("b{}", i + 1), Tensor::zeros(1, h)));
                fan_in = h;
            }
            let mut w = vec![S::zero(); fan_in];
            rng.substream("wout").fill_normal(&mut w, 0.0, eta);
            blocks.push(("wout".to_string(), Tensor::new(fan_in, 1, w)?));
            blocks.push(("bout".to_string(), Tensor::zeros(1, 1)));
            return Ok(Self { kind: kind.clone(), blocks });
        }

        let names = per_unit_layout(kind);
        let blocks = match scheme {
            CombInit::Standard | CombInit::RevInit => {
                let values = if scheme == CombInit::Standard {
                    standard_values(kind)
                } else {
                    revinit_values()
                };
                names
                    .iter()
                    .map(|&name| {
                        let v = values
                            .iter()
                            .find(|(n, _)| *n == name)
                            .map_or(0.0, |(_, v)| *v);
                        Ok((name.to_string(), Tensor::filled(1, width, S::from_f64(v))?))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            CombInit::RandInit => names
                .iter()
                .map(|&name| {
                    let mut data = vec![S::zero(); width];
                    rng.substream(name).fill_normal(&mut data, 0.0, RANDINIT_STD);
                    Ok((name.to_string(), Tensor::new(1, width, data)?))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Self { kind: kind.clone(), blocks })
    }

    pub fn kind(&self) -> &CombinatorKind {
        &self.kind
    }

    pub fn blocks(&self) -> &[(String, Tensor<S>)] {
        &self.blocks
    }

    pub(crate) fn blocks_mut(&mut self) -> &mut [(String, Tensor<S>)] {
        &mut self.blocks
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|(_, t)| t.len()).sum()
    }

    /// Put every block on the tape, returning ids in layout order.
    pub fn register(&self, tape: &mut Tape<S>) -> Vec<ValueId> {
        self.blocks.iter().map(|(_, t)| tape.param(t)).collect()
    }

    /// Check block names and shapes against the expected layout for `width`
    /// (used after deserialization).
    pub fn check_layout(&self, width: usize) -> Result<()> {
        let fresh: CombParams<S> = CombParams::init(
            &self.kind,
            CombInit::Standard,
            width,
            1.0,
            &mut RngStream::new(0),
        )?;
        if fresh.blocks.len() != self.blocks.len() {
            return Err(Error::Config(format!(
                "combinator {}: expected {} blocks, found {}",
                self.kind,
                fresh.blocks.len(),
                self.blocks.len()
            )));
        }
        for ((name, t), (want_name, want_t)) in self.blocks.iter().zip(fresh.blocks.iter()) {
            if name != want_name || t.shape() != want_t.shape() {
                return Err(Error::Config(format!(
                    "combinator {}: block {name} {}x{} does not match layout {want_name} {}x{}",
                    self.kind,
                    t.shape().0,
                    t.shape().1,
                    want_t.shape().0,
                    want_t.shape().1
                )));
            }
            t.validate()?;
        }
        Ok(())
    }
}

/// Sigmoid clamped into the open interval (0, 1) at machine precision.
///
/// Sigmoid itself rounds to exactly 1.0 for moderately large inputs (f32
/// saturates near x = 17, f64 near x = 37); the clamp keeps gate values
/// strictly interior so convex-mix invariants hold in floating point.
fn sigmoid_strict<S: Scalar>(tape: &mut Tape<S>, x: ValueId) -> Result<ValueId> {
    let s = tape.sigmoid(x)?;
    let lo = S::min_positive_value();
    let hi = S::one() - S::epsilon() * S::from_f64(0.5);
    tape.clamp(s, lo, hi)
}

/// `bias + sum_i row_weight_i (*) term_i` with per-unit row vectors.
fn per_unit_mix<S: Scalar>(
    tape: &mut Tape<S>,
    bias: ValueId,
    terms: &[(ValueId, ValueId)],
) -> Result<ValueId> {
    let mut acc: Option<ValueId> = None;
    for &(term, weight) in terms {
        let wt = tape.mul_row(term, weight)?;
        acc = Some(match acc {
            None => wt,
            Some(a) => tape.add(a, wt)?,
        });
    }
    let acc = acc.expect("per_unit_mix needs at least one term");
    tape.add_row(acc, bias)
}

/// Affine-plus-sigmoid expression used by the Gaussian forms:
/// `a * sigmoid(b * u + c) + d * u + e` (all per-unit row vectors).
fn gauss_expr<S: Scalar>(
    tape: &mut Tape<S>,
    u: ValueId,
    a: ValueId,
    b: ValueId,
    c: ValueId,
    d: ValueId,
    e: ValueId,
) -> Result<ValueId> {
    let bu = tape.mul_row(u, b)?;
    let pre = tape.add_row(bu, c)?;
    let sig = tape.sigmoid(pre)?;
    let asig = tape.mul_row(sig, a)?;
    let du = tape.mul_row(u, d)?;
    let lin = tape.add_row(du, e)?;
    tape.add(asig, lin)
}

/// Elementwise MLP: inputs are whole `batch x width` tensors treated as
/// parallel scalars; weights enter via 1x1 entry nodes broadcast across the
/// tensor, so one tiny network is shared by every unit of the layer.
fn mlp_forward<S: Scalar>(
    tape: &mut Tape<S>,
    ids: &[ValueId],
    sizes: &[usize],
    inputs: Vec<ValueId>,
) -> Result<ValueId> {
    let mut units = inputs;
    let mut block = 0usize;
    for (li, &h) in sizes.iter().enumerate() {
        let w = ids[block];
        let b = ids[block + 1];
        block += 2;
        let mut next = Vec::with_capacity(h);
        for j in 0..h {
            let mut acc: Option<ValueId> = None;
            for (i, &unit) in units.iter().enumerate() {
                let wij = tape.entry(w, i, j)?;
                let term = tape.mul_scalar(unit, wij)?;
                acc = Some(match acc {
                    None => term,
                    Some(a) => tape.add(a, term)?,
                });
            }
            let bj = tape.entry(b, 0, j)?;
            let pre = tape.add_scalar(acc.expect("mlp layer has inputs"), bj)?;
            next.push(tape.lrelu(pre, S::from_f64(MLP_LRELU_SLOPE))?);
        }
        units = next;
        let _ = li;
    }
    let w = ids[block];
    let b = ids[block + 1];
    let mut acc: Option<ValueId> = None;
    for (i, &unit) in units.iter().enumerate() {
        let wi = tape.entry(w, i, 0)?;
        let term = tape.mul_scalar(unit, wi)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    let bout = tape.entry(b, 0, 0)?;
    tape.add_scalar(acc.expect("mlp output has inputs"), bout)
}

/// Evaluate combinator `kind` with registered parameter ids on the lateral
/// signal `z_tilde` and vertical signal `u` (both `batch x width`).
pub fn apply<S: Scalar>(
    tape: &mut Tape<S>,
    kind: &CombinatorKind,
    ids: &[ValueId],
    z_tilde: ValueId,
    u: ValueId,
) -> Result<ValueId> {
    let expected = match kind.mlp_sizes() {
        Some((sizes, _)) => 2 * (sizes.len() + 1),
        None => per_unit_layout(kind).len(),
    };
    if ids.len() != expected {
        return Err(Error::Config(format!(
            "combinator {kind} expects {expected} parameter blocks, got {}",
            ids.len()
        )));
    }
    match kind {
        CombinatorKind::Vanilla => {
            let (b0, w0z, w0u, w0zu, wsig, b1, w1z, w1u, w1zu) =
                (ids[0], ids[1], ids[2], ids[3], ids[4], ids[5], ids[6], ids[7], ids[8]);
            let zu = tape.mul(z_tilde, u)?;
            let lin = per_unit_mix(tape, b0, &[(z_tilde, w0z), (u, w0u), (zu, w0zu)])?;
            let pre = per_unit_mix(tape, b1, &[(z_tilde, w1z), (u, w1u), (zu, w1zu)])?;
            let sig = tape.sigmoid(pre)?;
            let gated = tape.mul_row(sig, wsig)?;
            tape.add(lin, gated)
        }
        CombinatorKind::NoSig => {
            let (b0, w0z, w0u, w0zu) = (ids[0], ids[1], ids[2], ids[3]);
            let zu = tape.mul(z_tilde, u)?;
            per_unit_mix(tape, b0, &[(z_tilde, w0z), (u, w0u), (zu, w0zu)])
        }
        CombinatorKind::NoMult => {
            let (b0, w0z, w0u, wsig, b1, w1z, w1u) =
                (ids[0], ids[1], ids[2], ids[3], ids[4], ids[5], ids[6]);
            let lin = per_unit_mix(tape, b0, &[(z_tilde, w0z), (u, w0u)])?;
            let pre = per_unit_mix(tape, b1, &[(z_tilde, w1z), (u, w1u)])?;
            let sig = tape.sigmoid(pre)?;
            let gated = tape.mul_row(sig, wsig)?;
            tape.add(lin, gated)
        }
        CombinatorKind::Linear => {
            let (b, wz, wu) = (ids[0], ids[1], ids[2]);
            per_unit_mix(tape, b, &[(z_tilde, wz), (u, wu)])
        }
        CombinatorKind::Gaussian => {
            let mu = gauss_expr(tape, u, ids[0], ids[1], ids[2], ids[3], ids[4])?;
            let nu = gauss_expr(tape, u, ids[5], ids[6], ids[7], ids[8], ids[9])?;
            // nu*z + (1 - nu)*mu, written as (z - mu)*nu + mu.
            let zm = tape.sub(z_tilde, mu)?;
            let mixed = tape.mul(zm, nu)?;
            tape.add(mixed, mu)
        }
        CombinatorKind::GatedGauss => {
            let mu = gauss_expr(tape, u, ids[0], ids[1], ids[2], ids[3], ids[4])?;
            let nu = gated_gauss_gate(tape, ids, u)?;
            let zm = tape.sub(z_tilde, mu)?;
            let mixed = tape.mul(zm, nu)?;
            tape.add(mixed, mu)
        }
        CombinatorKind::Mlp(sizes) => {
            mlp_forward(tape, ids, sizes, vec![u, z_tilde])
        }
        CombinatorKind::Amlp(sizes) => {
            let uz = tape.mul(u, z_tilde)?;
            mlp_forward(tape, ids, sizes, vec![u, z_tilde, uz])
        }
    }
}

/// The gating signal `nu(u)` of [`CombinatorKind::GatedGauss`], clamped to
/// the open interval `(0, 1)`. `ids` is the full 7-block parameter slice.
pub fn gated_gauss_gate<S: Scalar>(
    tape: &mut Tape<S>,
    ids: &[ValueId],
    u: ValueId,
) -> Result<ValueId> {
    if ids.len() != 7 {
        return Err(Error::Config(format!(
            "gated gaussian gate expects 7 parameter blocks, got {}",
            ids.len()
        )));
    }
    let wu = tape.mul_row(u, ids[5])?;
    let pre = tape.add_row(wu, ids[6])?;
    sigmoid_strict(tape, pre)
}

/// Run a finite-difference check of every combinator form (and the vanilla
/// init variants) at a small width, verifying gradients w.r.t. parameters
/// and both inputs. Returns one report per form.
pub fn gradcheck_all(width: usize, seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut out = Vec::new();
    let mut forms: Vec<(String, CombinatorKind, CombInit)> = CombinatorKind::all_forms()
        .into_iter()
        .map(|k| (k.to_string(), k, CombInit::Standard))
        .collect();
    forms.push(("vanilla+randinit".into(), CombinatorKind::Vanilla, CombInit::RandInit));
    forms.push(("vanilla+revinit".into(), CombinatorKind::Vanilla, CombInit::RevInit));

    for (name, kind, scheme) in forms {
        let rng = RngStream::new(seed).substream(&format!("gradcheck/{name}"));
        let base: CombParams<f64> =
            CombParams::init(&kind, scheme, width, 0.3, &mut rng.substream("init"))?;

        // Jitter parameters off their exact init (identity inits sit on round
        // values; perturbing makes the check generic) and draw random inputs.
        let mut params: Vec<(String, Tensor<f64>)> = Vec::new();
        let mut jitter = rng.substream("jitter");
        for (bname, t) in base.blocks() {
            let mut data = t.data().to_vec();
            for v in data.iter_mut() {
                *v += 0.1 * jitter.normal_f64();
            }
            params.push((bname.clone(), Tensor::new(t.shape().0, t.shape().1, data)?));
        }
        let batch = 3usize;
        let mut inputs = rng.substream("inputs");
        let mut z = vec![0.0f64; batch * width];
        let mut u = vec![0.0f64; batch * width];
        inputs.fill_normal(&mut z, 0.0, 1.0);
        inputs.fill_normal(&mut u, 0.0, 1.0);
        params.push(("z_tilde".into(), Tensor::new(batch, width, z)?));
        params.push(("u".into(), Tensor::new(batch, width, u)?));

        let mut target = vec![0.0f64; batch * width];
        rng.substream("target").fill_normal(&mut target, 0.0, 1.0);
        let target = Tensor::new(batch, width, target)?;

        let kind_c = kind.clone();
        let n_blocks = params.len() - 2;
        let report = grad_check(
            move |tape, ids| {
                let block_ids = &ids[..n_blocks];
                let z_id = ids[n_blocks];
                let u_id = ids[n_blocks + 1];
                let g = apply(tape, &kind_c, block_ids, z_id, u_id)?;
                let t = tape.leaf(target.clone());
                let diff = tape.sub(g, t)?;
                let sq = tape.mul(diff, diff)?;
                tape.mean_all(sq)
            },
            &params,
            crate::numerics::DEFAULT_H,
            crate::numerics::DEFAULT_TOL,
        )?;
        out.push((name, report));
    }
    Ok(out)
}
