//! The experiment catalog: every study variant as a named recipe.
//!
//! A [`Variant`] picks the combinator form, its init scheme, and the ablation
//! flags; [`Variant::spec`] assembles a full [`LadderSpec`] from it once the
//! architecture and hyperparameters are fixed. Names parse leniently
//! (case-insensitive, spaces ignored) but the catalog itself is closed —
//! unknown names fail with the full list of valid ones.

use crate::combinators::{CombInit, CombinatorKind};
use crate::error::{Error, Result};
use crate::model::{Activation, LadderSpec, VariantFlags};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// One row of the experiment grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Plain feed-forward classifier: no noise, no reconstruction.
    Baseline,
    /// The same classifier with additive noise at every layer.
    BaselineNoise,
    /// The full ladder with the original combinator.
    Vanilla,
    /// Noise only at the input layer.
    FirstNoise,
    /// Reconstruction penalty only at the input layer.
    FirstRecons,
    /// Both restrictions at once.
    FirstNR,
    /// All lateral connections removed on top of the previous restrictions;
    /// encoder and decoder meet only at the top.
    NoLateral,
    /// Vanilla form with every combinator weight drawn at random.
    RandInit,
    /// Vanilla form initialized to pass the vertical signal instead of the
    /// lateral one.
    RevInit,
    /// Vanilla without the sigmoid term.
    NoSig,
    /// Vanilla without the multiplicative terms.
    NoMult,
    /// Plain affine combination of the two signals.
    Linear,
    /// The probabilistically motivated convex combination.
    Gaussian,
    /// Gaussian with the mixing weight forced into (0, 1).
    GatedGauss,
    /// Per-element MLP combinator with the given hidden sizes.
    Mlp(Vec<usize>),
    /// MLP combinator with the product term as an extra input.
    Amlp(Vec<usize>),
}

/// The hidden-size lists studied for the MLP family.
const MLP_SIZES: [&[usize]; 3] = [&[4], &[2, 2], &[2, 2, 2]];

impl Variant {
    /// Every catalog entry, in table order.
    pub fn all() -> Vec<Variant> {
        let mut out = vec![
            Variant::Baseline,
            Variant::BaselineNoise,
            Variant::Vanilla,
            Variant::FirstNoise,
            Variant::FirstRecons,
            Variant::FirstNR,
            Variant::NoLateral,
            Variant::RandInit,
            Variant::RevInit,
            Variant::NoSig,
            Variant::NoMult,
            Variant::Linear,
            Variant::Gaussian,
            Variant::GatedGauss,
        ];
        for sizes in MLP_SIZES {
            out.push(Variant::Mlp(sizes.to_vec()));
        }
        for sizes in MLP_SIZES {
            out.push(Variant::Amlp(sizes.to_vec()));
        }
        out
    }

    /// Combinator form and weight-init scheme of this recipe.
    pub fn combinator(&self) -> (CombinatorKind, CombInit) {
        match self {
            Variant::RandInit => (CombinatorKind::Vanilla, CombInit::RandInit),
            Variant::RevInit => (CombinatorKind::Vanilla, CombInit::RevInit),
            Variant::NoSig => (CombinatorKind::NoSig, CombInit::Standard),
            Variant::NoMult => (CombinatorKind::NoMult, CombInit::Standard),
            Variant::Linear => (CombinatorKind::Linear, CombInit::Standard),
            Variant::Gaussian => (CombinatorKind::Gaussian, CombInit::Standard),
            Variant::GatedGauss => (CombinatorKind::GatedGauss, CombInit::Standard),
            Variant::Mlp(sizes) => (CombinatorKind::Mlp(sizes.clone()), CombInit::Standard),
            Variant::Amlp(sizes) => (CombinatorKind::Amlp(sizes.clone()), CombInit::Standard),
            // The baselines never build a decoder; the form is irrelevant.
            _ => (CombinatorKind::Vanilla, CombInit::Standard),
        }
    }

    /// Ablation switches of this recipe.
    pub fn flags(&self) -> VariantFlags {
        match self {
            Variant::FirstNoise => VariantFlags { first_noise_only: true, ..Default::default() },
            Variant::FirstRecons => {
                VariantFlags { first_recons_only: true, ..Default::default() }
            }
            Variant::FirstNR => VariantFlags {
                first_noise_only: true,
                first_recons_only: true,
                no_lateral: false,
            },
            Variant::NoLateral => VariantFlags {
                first_noise_only: true,
                first_recons_only: true,
                no_lateral: true,
            },
            _ => VariantFlags::default(),
        }
    }

    /// Whether this recipe injects noise at all.
    pub fn uses_noise(&self) -> bool {
        !matches!(self, Variant::Baseline)
    }

    /// Whether this recipe trains a decoder (any reconstruction weight).
    pub fn uses_reconstruction(&self) -> bool {
        !matches!(self, Variant::Baseline | Variant::BaselineNoise)
    }

    /// Assemble the full model spec for an architecture and hyperparameters.
    pub fn spec(
        &self,
        layer_sizes: &[usize],
        activation: Activation,
        hyper: &Hyper,
    ) -> Result<LadderSpec> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "need at least input and output widths, got {layer_sizes:?}"
            )));
        }
        let levels = layer_sizes.len(); // L + 1 entries: input plus every layer
        let noise_sigma = if self.uses_noise() {
            vec![hyper.sigma; levels]
        } else {
            vec![0.0; levels]
        };
        let lambda = if self.uses_reconstruction() {
            (0..levels)
                .map(|l| match l {
                    0 => hyper.lambda0,
                    1 => hyper.lambda1,
                    _ => hyper.lambda_rest,
                })
                .collect()
        } else {
            vec![0.0; levels]
        };
        let (combinator, comb_init) = self.combinator();
        let spec = LadderSpec {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            noise_sigma,
            lambda,
            combinator,
            comb_init,
            comb_eta: hyper.eta,
            mlp_shared_across_layers: false,
            flags: self.flags(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn format_sizes(sizes: &[usize]) -> String {
    let inner: Vec<String> = sizes.iter().map(usize::to_string).collect();
    format!("[{}]", inner.join(","))
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Baseline => write!(f, "baseline"),
            Variant::BaselineNoise => write!(f, "baseline+noise"),
            Variant::Vanilla => write!(f, "vanilla"),
            Variant::FirstNoise => write!(f, "firstnoise"),
            Variant::FirstRecons => write!(f, "firstrecons"),
            Variant::FirstNR => write!(f, "firstn&r"),
            Variant::NoLateral => write!(f, "nolateral"),
            Variant::RandInit => write!(f, "randinit"),
            Variant::RevInit => write!(f, "revinit"),
            Variant::NoSig => write!(f, "nosig"),
            Variant::NoMult => write!(f, "nomult"),
            Variant::Linear => write!(f, "linear"),
            Variant::Gaussian => write!(f, "gaussian"),
            Variant::GatedGauss => write!(f, "gatedgauss"),
            Variant::Mlp(s) => write!(f, "mlp{}", format_sizes(s)),
            Variant::Amlp(s) => write!(f, "amlp{}", format_sizes(s)),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // Case, whitespace, and -/_/+ separators are ignored.
        let norm: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !c.is_whitespace() && !matches!(c, '-' | '_' | '+'))
            .collect();
        let found = Variant::all().into_iter().find(|v| {
            let squeezed: String =
                v.to_string().chars().filter(|c| !matches!(c, '+')).collect();
            norm == squeezed
                || norm == squeezed.replace('&', "")
                || norm == squeezed.replace('&', "and")
        });
        found.ok_or_else(|| {
            let names: Vec<String> = Variant::all().iter().map(Variant::to_string).collect();
            Error::Config(format!("unknown variant `{s}`; valid names: {}", names.join(", ")))
        })
    }
}

impl Serialize for Variant {
    fn serialize<Se: serde::Serializer>(&self, ser: Se) -> std::result::Result<Se::Ok, Se::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tunable hyperparameters a search can override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Noise std, applied at every noisy layer.
    pub sigma: f64,
    /// Input-layer reconstruction weight.
    pub lambda0: f64,
    /// First hidden layer reconstruction weight.
    pub lambda1: f64,
    /// Shared reconstruction weight for layers two and up.
    pub lambda_rest: f64,
    /// Init std for MLP-family combinator weights.
    pub eta: f64,
}

impl Hyper {
    /// Working defaults for the semi-supervised label counts.
    pub fn default_semi() -> Self {
        Self { sigma: 0.3, lambda0: 1000.0, lambda1: 10.0, lambda_rest: 0.1, eta: 0.1 }
    }

    /// Working defaults for full supervision: reconstruction only at the
    /// input pays off there.
    pub fn default_full() -> Self {
        Self { sigma: 0.3, lambda0: 1000.0, lambda1: 0.0, lambda_rest: 0.0, eta: 0.1 }
    }

    /// Pick defaults for a label count (60000 means fully supervised).
    pub fn default_for(n_labeled: usize) -> Self {
        if n_labeled >= 60_000 {
            Self::default_full()
        } else {
            Self::default_semi()
        }
    }
}
