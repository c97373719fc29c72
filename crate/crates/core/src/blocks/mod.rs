//! The fourteen parameterized filter blocks that make up the pipeline instruction set.
//!
//! Each block is a pure `Plane -> Plane` function with a declared parameter
//! space. Parameters are validated when a [`BlockInstance`] is built, so
//! [`apply_block`] cannot fail.

mod clahe;
mod filters;
mod laplacian;
mod median;

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{GrayImage, PadMode, Plane};
use crate::scalar::Scalar;

pub use clahe::{clahe, clip_histogram, CLAHE_CLIP_LIMIT};
pub use filters::{equalize_lut, hist_eq, stretch_limits};
pub use median::{median_filter, median_filter_ref};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockError {
    #[error("unknown block id `{0}`")]
    UnknownBlock(String),
    #[error("{block} takes {expected} parameter(s), got {got}")]
    Arity {
        block: BlockId,
        expected: usize,
        got: usize,
    },
    #[error("{block}.{param}: expected {expected}, got {got}")]
    Type {
        block: BlockId,
        param: &'static str,
        expected: &'static str,
        got: String,
    },
    #[error("{block}.{param}: value {value} outside {range}")]
    OutOfRange {
        block: BlockId,
        param: &'static str,
        value: String,
        range: String,
    },
}

/// Stable block identifiers. The lowercase names are the DSL keywords.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockId {
    Identity,
    ContrastStretch,
    HistEq,
    AdaptiveHistEq,
    LocalBrighten,
    UnsharpMask,
    MedianFilter,
    GaussianFilter,
    LocalLaplacian,
    FlatField,
    WienerAdaptive,
    BilateralFilter,
    RichardsonLucy,
    MorphOpen,
}

impl BlockId {
    pub const ALL: [BlockId; 14] = [
        BlockId::Identity,
        BlockId::ContrastStretch,
        BlockId::HistEq,
        BlockId::AdaptiveHistEq,
        BlockId::LocalBrighten,
        BlockId::UnsharpMask,
        BlockId::MedianFilter,
        BlockId::GaussianFilter,
        BlockId::LocalLaplacian,
        BlockId::FlatField,
        BlockId::WienerAdaptive,
        BlockId::BilateralFilter,
        BlockId::RichardsonLucy,
        BlockId::MorphOpen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockId::Identity => "identity",
            BlockId::ContrastStretch => "contrast_stretch",
            BlockId::HistEq => "hist_eq",
            BlockId::AdaptiveHistEq => "adaptive_hist_eq",
            BlockId::LocalBrighten => "local_brighten",
            BlockId::UnsharpMask => "unsharp_mask",
            BlockId::MedianFilter => "median_filter",
            BlockId::GaussianFilter => "gaussian_filter",
            BlockId::LocalLaplacian => "local_laplacian",
            BlockId::FlatField => "flat_field",
            BlockId::WienerAdaptive => "wiener_adaptive",
            BlockId::BilateralFilter => "bilateral_filter",
            BlockId::RichardsonLucy => "richardson_lucy",
            BlockId::MorphOpen => "morph_open",
        }
    }

    /// Function name used by the MATLAB-like code dialect.
    pub fn matlab_name(self) -> &'static str {
        match self {
            BlockId::Identity => "identity",
            BlockId::ContrastStretch => "imadjust",
            BlockId::HistEq => "histeq",
            BlockId::AdaptiveHistEq => "adapthisteq",
            BlockId::LocalBrighten => "imlocalbrighten",
            BlockId::UnsharpMask => "imsharpen",
            BlockId::MedianFilter => "medfilt2",
            BlockId::GaussianFilter => "imgaussfilt_square",
            BlockId::LocalLaplacian => "locallapfilt",
            BlockId::FlatField => "imflatfield",
            BlockId::WienerAdaptive => "wiener2",
            BlockId::BilateralFilter => "imbilatfilt",
            BlockId::RichardsonLucy => "deconvlucy",
            BlockId::MorphOpen => "imopen",
        }
    }

    pub fn from_name(s: &str) -> Result<Self, BlockError> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| BlockError::UnknownBlock(s.to_owned()))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn spec(self) -> &'static BlockSpec {
        &LIBRARY[self.index()]
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Type and search range of one block parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamKind {
    /// Real in `[min, max]`, or `(min, max]` when `min_exclusive`.
    Real {
        min: f64,
        max: f64,
        min_exclusive: bool,
    },
    Integer {
        min: i64,
        max: i64,
    },
    /// Odd integers in `[min, max]`; both bounds are odd.
    OddInteger {
        min: i64,
        max: i64,
    },
    Boolean,
    Enum {
        choices: &'static [&'static str],
    },
}

/// A concrete parameter value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ParamValue {
    Real(f64),
    Int(i64),
    Bool(bool),
    /// Index into the parameter's choice set.
    Choice(usize),
}

impl ParamValue {
    /// Numeric view used for parameter statistics.
    pub fn as_f64(self) -> f64 {
        match self {
            ParamValue::Real(v) => v,
            ParamValue::Int(v) => v as f64,
            ParamValue::Bool(b) => b as u8 as f64,
            ParamValue::Choice(i) => i as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: ParamValue,
}

#[derive(Debug, PartialEq)]
pub struct BlockSpec {
    pub id: BlockId,
    pub params: &'static [ParamSpec],
    /// Relative compute weight, roughly nanoseconds per pixel for default parameters.
    pub cost_hint: f64,
}

const PAD_CHOICES: &[&str] = &["zeros", "replicate", "symmetric"];

const fn real(name: &'static str, min: f64, max: f64, default: f64) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Real {
            min,
            max,
            min_exclusive: false,
        },
        default: ParamValue::Real(default),
    }
}

const fn real_pos(name: &'static str, max: f64, default: f64) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Real {
            min: 0.0,
            max,
            min_exclusive: true,
        },
        default: ParamValue::Real(default),
    }
}

const fn int(name: &'static str, min: i64, max: i64, default: i64) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Integer { min, max },
        default: ParamValue::Int(default),
    }
}

const fn odd(name: &'static str, min: i64, max: i64, default: i64) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::OddInteger { min, max },
        default: ParamValue::Int(default),
    }
}

const fn boolean(name: &'static str, default: bool) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Boolean,
        default: ParamValue::Bool(default),
    }
}

const fn pad_choice(name: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Enum {
            choices: PAD_CHOICES,
        },
        default: ParamValue::Choice(0),
    }
}

static LIBRARY: [BlockSpec; 14] = [
    BlockSpec {
        id: BlockId::Identity,
        params: &[],
        cost_hint: 0.0,
    },
    BlockSpec {
        id: BlockId::ContrastStretch,
        params: &[],
        cost_hint: 4.0,
    },
    BlockSpec {
        id: BlockId::HistEq,
        params: &[],
        cost_hint: 4.0,
    },
    BlockSpec {
        id: BlockId::AdaptiveHistEq,
        params: &[int("tile_w", 2, 64, 8), int("tile_h", 2, 64, 8)],
        cost_hint: 20.0,
    },
    BlockSpec {
        id: BlockId::LocalBrighten,
        params: &[real("amount", 0.0, 1.0, 0.5), boolean("alpha_blend", false)],
        cost_hint: 10.0,
    },
    BlockSpec {
        id: BlockId::UnsharpMask,
        params: &[
            real_pos("radius", 50.0, 1.0),
            real("amount", 0.0, 5.0, 0.8),
            real("threshold", 0.0, 1.0, 0.0),
        ],
        cost_hint: 10.0,
    },
    BlockSpec {
        id: BlockId::MedianFilter,
        params: &[odd("h", 1, 15, 3), odd("w", 1, 15, 3), pad_choice("pad")],
        cost_hint: 8.0,
    },
    BlockSpec {
        id: BlockId::GaussianFilter,
        params: &[real_pos("sigma", 10.0, 0.5)],
        cost_hint: 6.0,
    },
    BlockSpec {
        id: BlockId::LocalLaplacian,
        params: &[real_pos("sigma", 1.0, 0.4), real_pos("alpha", 10.0, 0.5)],
        cost_hint: 150.0,
    },
    BlockSpec {
        id: BlockId::FlatField,
        params: &[real_pos("sigma", 200.0, 30.0)],
        cost_hint: 10.0,
    },
    BlockSpec {
        id: BlockId::WienerAdaptive,
        params: &[odd("h", 1, 15, 3), odd("w", 1, 15, 3)],
        cost_hint: 15.0,
    },
    BlockSpec {
        id: BlockId::BilateralFilter,
        params: &[real_pos("sigma_s", 10.0, 2.0), real_pos("sigma_r", 1.0, 0.1)],
        cost_hint: 4.0,
    },
    BlockSpec {
        id: BlockId::RichardsonLucy,
        params: &[real_pos("sigma_psf", 10.0, 1.0), int("iters", 1, 20, 10)],
        cost_hint: 10.0,
    },
    BlockSpec {
        id: BlockId::MorphOpen,
        params: &[int("radius", 1, 9, 2)],
        cost_hint: 6.0,
    },
];

/// The full block library, indexed by [`BlockId::index`].
pub fn library() -> &'static [BlockSpec] {
    &LIBRARY
}

/// Static parameter space of a block, looked up by DSL name.
pub fn param_space(name: &str) -> Result<&'static BlockSpec, BlockError> {
    BlockId::from_name(name).map(BlockId::spec)
}

impl ParamKind {
    /// Smallest admissible real value.
    fn real_floor(min: f64, min_exclusive: bool) -> f64 {
        if min_exclusive {
            min.next_up()
        } else {
            min
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            ParamKind::Real {
                min,
                max,
                min_exclusive,
            } => format!("{}{min}, {max}]", if min_exclusive { "(" } else { "[" }),
            ParamKind::Integer { min, max } => format!("integer [{min}, {max}]"),
            ParamKind::OddInteger { min, max } => format!("odd integer [{min}, {max}]"),
            ParamKind::Boolean => "boolean".into(),
            ParamKind::Enum { choices } => format!("{{{}}}", choices.join(", ")),
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            ParamKind::Real { .. } => "real",
            ParamKind::Integer { .. } => "integer",
            ParamKind::OddInteger { .. } => "odd integer",
            ParamKind::Boolean => "boolean",
            ParamKind::Enum { .. } => "enum",
        }
    }
}

impl ParamSpec {
    pub fn check(&self, block: BlockId, v: ParamValue) -> Result<(), BlockError> {
        let out_of_range = |value: String| BlockError::OutOfRange {
            block,
            param: self.name,
            value,
            range: self.kind.describe(),
        };
        let type_err = || BlockError::Type {
            block,
            param: self.name,
            expected: self.kind.type_name(),
            got: format!("{v:?}"),
        };
        match (self.kind, v) {
            (
                ParamKind::Real {
                    min,
                    max,
                    min_exclusive,
                },
                ParamValue::Real(x),
            ) => {
                let ok = x.is_finite() && x <= max && if min_exclusive { x > min } else { x >= min };
                if ok {
                    Ok(())
                } else {
                    Err(out_of_range(x.to_string()))
                }
            }
            (ParamKind::Integer { min, max }, ParamValue::Int(x)) => {
                if (min..=max).contains(&x) {
                    Ok(())
                } else {
                    Err(out_of_range(x.to_string()))
                }
            }
            (ParamKind::OddInteger { min, max }, ParamValue::Int(x)) => {
                if (min..=max).contains(&x) && x.rem_euclid(2) == 1 {
                    Ok(())
                } else {
                    Err(out_of_range(x.to_string()))
                }
            }
            (ParamKind::Boolean, ParamValue::Bool(_)) => Ok(()),
            (ParamKind::Enum { choices }, ParamValue::Choice(i)) => {
                if i < choices.len() {
                    Ok(())
                } else {
                    Err(out_of_range(i.to_string()))
                }
            }
            _ => Err(type_err()),
        }
    }

    /// Uniform draw over the admissible set.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match self.kind {
            ParamKind::Real {
                min,
                max,
                min_exclusive,
            } => {
                let lo = ParamKind::real_floor(min, min_exclusive);
                ParamValue::Real(rng.random_range(lo..=max))
            }
            ParamKind::Integer { min, max } => ParamValue::Int(rng.random_range(min..=max)),
            ParamKind::OddInteger { min, max } => {
                let k = rng.random_range(0..=(max - min) / 2);
                ParamValue::Int(min + 2 * k)
            }
            ParamKind::Boolean => ParamValue::Bool(rng.random()),
            ParamKind::Enum { choices } => ParamValue::Choice(rng.random_range(0..choices.len())),
        }
    }

    /// Gaussian step of `sigma_fraction` times the range width for numeric kinds,
    /// clamped (and rounded) back into range; uniform resample otherwise.
    pub fn perturb<R: Rng + ?Sized>(
        &self,
        v: ParamValue,
        sigma_fraction: f64,
        rng: &mut R,
    ) -> ParamValue {
        let step = |rng: &mut R, width: f64| -> f64 {
            if width <= 0.0 || sigma_fraction <= 0.0 {
                return 0.0;
            }
            Normal::new(0.0, sigma_fraction * width)
                .map(|n| n.sample(rng))
                .unwrap_or(0.0)
        };
        match (self.kind, v) {
            (
                ParamKind::Real {
                    min,
                    max,
                    min_exclusive,
                },
                ParamValue::Real(x),
            ) => {
                let lo = ParamKind::real_floor(min, min_exclusive);
                ParamValue::Real((x + step(rng, max - min)).clamp(lo, max))
            }
            (ParamKind::Integer { min, max }, ParamValue::Int(x)) => {
                let y = (x as f64 + step(rng, (max - min) as f64)).round() as i64;
                ParamValue::Int(y.clamp(min, max))
            }
            (ParamKind::OddInteger { min, max }, ParamValue::Int(x)) => {
                let y = x as f64 + step(rng, (max - min) as f64);
                let odd = 2 * ((y - 1.0) / 2.0).round() as i64 + 1;
                ParamValue::Int(odd.clamp(min, max))
            }
            _ => self.sample(rng),
        }
    }
}

/// A block together with one validated value per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct BlockInstance {
    id: BlockId,
    params: Vec<ParamValue>,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    id: BlockId,
    params: Vec<ParamValue>,
}

impl TryFrom<RawInstance> for BlockInstance {
    type Error = BlockError;
    fn try_from(r: RawInstance) -> Result<Self, BlockError> {
        BlockInstance::new(r.id, r.params)
    }
}

impl From<BlockInstance> for RawInstance {
    fn from(b: BlockInstance) -> Self {
        RawInstance {
            id: b.id,
            params: b.params,
        }
    }
}

impl BlockInstance {
    pub fn new(id: BlockId, params: Vec<ParamValue>) -> Result<Self, BlockError> {
        let spec = id.spec();
        if params.len() != spec.params.len() {
            return Err(BlockError::Arity {
                block: id,
                expected: spec.params.len(),
                got: params.len(),
            });
        }
        for (p, &v) in spec.params.iter().zip(&params) {
            p.check(id, v)?;
        }
        Ok(Self { id, params })
    }

    pub fn identity() -> Self {
        Self {
            id: BlockId::Identity,
            params: Vec::new(),
        }
    }

    /// Instance with every parameter at its declared default.
    pub fn with_defaults(id: BlockId) -> Self {
        Self {
            id,
            params: id.spec().params.iter().map(|p| p.default).collect(),
        }
    }

    pub fn id(&self) -> BlockId {
        self.id
    }

    pub fn params(&self) -> &[ParamValue] {
        &self.params
    }

    pub fn is_identity(&self) -> bool {
        self.id == BlockId::Identity
    }

    fn real(&self, i: usize) -> f64 {
        match self.params[i] {
            ParamValue::Real(v) => v,
            other => unreachable!("validated instance holds {other:?} at real slot {i}"),
        }
    }

    fn int(&self, i: usize) -> i64 {
        match self.params[i] {
            ParamValue::Int(v) => v,
            other => unreachable!("validated instance holds {other:?} at integer slot {i}"),
        }
    }

    fn flag(&self, i: usize) -> bool {
        match self.params[i] {
            ParamValue::Bool(v) => v,
            other => unreachable!("validated instance holds {other:?} at boolean slot {i}"),
        }
    }

    fn pad_mode(&self, i: usize) -> PadMode {
        match self.params[i] {
            ParamValue::Choice(c) => PadMode::ALL[c],
            other => unreachable!("validated instance holds {other:?} at enum slot {i}"),
        }
    }

    /// Rough single-threaded cost in nanoseconds per pixel, used by the
    /// deterministic time model.
    pub fn cost_per_pixel(&self, width: usize, height: usize) -> f64 {
        let base = self.id.spec().cost_hint;
        let blur_taps = |sigma: f64| 2.0 * (2.0 * (3.0 * sigma).ceil() + 1.0);
        match self.id {
            BlockId::LocalBrighten => {
                base + 0.6 * blur_taps(width.min(height) as f64 / 16.0)
            }
            BlockId::UnsharpMask => base + 0.6 * blur_taps(self.real(0)),
            BlockId::GaussianFilter => base + 0.6 * blur_taps(self.real(0)),
            BlockId::FlatField => base + 0.6 * blur_taps(self.real(0)),
            BlockId::MedianFilter => base + 1.5 * (self.int(0) * self.int(1)) as f64,
            BlockId::WienerAdaptive => base + 0.6 * (self.int(0) + self.int(1)) as f64,
            BlockId::BilateralFilter => {
                let r = (2.0 * self.real(0)).ceil();
                base + 2.0 * 3.5 * (2.0 * r + 1.0)
            }
            BlockId::RichardsonLucy => {
                base + self.int(1) as f64 * (8.0 + 1.2 * blur_taps(self.real(0)))
            }
            BlockId::MorphOpen => base + 4.0 * self.int(0) as f64,
            _ => base,
        }
    }
}

impl fmt::Display for BlockInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.id)?;
        for (i, (v, spec)) in self.params.iter().zip(self.id.spec().params).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write_param(f, *v, spec, false)?;
        }
        f.write_str(")")
    }
}

/// Renders a parameter literal; reals use the shortest round-trip decimal form.
pub(crate) fn write_param(
    f: &mut impl fmt::Write,
    v: ParamValue,
    spec: &ParamSpec,
    quote_enums: bool,
) -> fmt::Result {
    match v {
        // shortest round-trip digits; exponent form keeps extremes short
        ParamValue::Real(x) if x != 0.0 && !(1e-5..1e16).contains(&x.abs()) => write!(f, "{x:e}"),
        ParamValue::Real(x) => write!(f, "{x}"),
        ParamValue::Int(x) => write!(f, "{x}"),
        ParamValue::Bool(b) => write!(f, "{b}"),
        ParamValue::Choice(i) => {
            let name = match spec.kind {
                ParamKind::Enum { choices } => choices[i],
                _ => "?",
            };
            if quote_enums {
                write!(f, "'{name}'")
            } else {
                f.write_str(name)
            }
        }
    }
}

/// Uniformly random parameters for the given block.
pub fn random_instance<R: Rng + ?Sized>(id: BlockId, rng: &mut R) -> BlockInstance {
    BlockInstance {
        id,
        params: id.spec().params.iter().map(|p| p.sample(rng)).collect(),
    }
}

/// Applies one block. The output has the input's dimensions and lies in `[0, 1]`.
pub fn apply_block<T: Scalar>(b: &BlockInstance, img: &Plane<T>) -> Plane<T> {
    let out = match b.id {
        BlockId::Identity => return img.clone(),
        BlockId::ContrastStretch => filters::contrast_stretch(img),
        BlockId::HistEq => filters::hist_eq(img),
        BlockId::AdaptiveHistEq => clahe::clahe(
            img,
            b.int(0) as usize,
            b.int(1) as usize,
            clahe::CLAHE_CLIP_LIMIT,
        ),
        BlockId::LocalBrighten => filters::local_brighten(img, b.real(0), b.flag(1)),
        BlockId::UnsharpMask => filters::unsharp_mask(img, b.real(0), b.real(1), b.real(2)),
        BlockId::MedianFilter => {
            median::median_filter(img, b.int(0) as usize, b.int(1) as usize, b.pad_mode(2))
        }
        BlockId::GaussianFilter => filters::gaussian_filter(img, b.real(0)),
        BlockId::LocalLaplacian => laplacian::local_laplacian(img, b.real(0), b.real(1)),
        BlockId::FlatField => filters::flat_field(img, b.real(0)),
        BlockId::WienerAdaptive => {
            filters::wiener_adaptive(img, b.int(0) as usize, b.int(1) as usize)
        }
        BlockId::BilateralFilter => filters::bilateral(img, b.real(0), b.real(1)),
        BlockId::RichardsonLucy => filters::richardson_lucy(img, b.real(0), b.int(1) as usize),
        BlockId::MorphOpen => filters::morph_open(img, b.int(0) as usize),
    };
    out.clamp_unit()
}

/// 8-bit convenience wrapper around [`apply_block`].
pub fn apply_block_gray<T: Scalar>(b: &BlockInstance, img: &GrayImage) -> GrayImage {
    if b.is_identity() {
        return img.clone();
    }
    apply_block(b, &img.to_plane::<T>()).to_gray()
}

#[cfg(test)]
mod tests;
