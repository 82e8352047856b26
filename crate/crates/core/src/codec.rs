//! Discretization of 7-dimensional robot actions into language-model tokens.
//!
//! Every dimension is quantized into `bins` uniform bins (256 by default) and
//! the bin index is offset by `base_vocab`, so action tokens are appended
//! after the base vocabulary instead of overwriting existing ids.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

/// Names of the seven token positions, in wire order.
pub const DIM_NAMES: [&str; 7] = ["stop", "dx", "dy", "dyaw", "du", "dv", "gripper"];

pub const DEFAULT_BINS: u32 = 256;
pub const DEFAULT_BASE_VOCAB: u32 = 32000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("non-finite value {value} for dimension {dim}")]
    NonFinite { dim: &'static str, value: f64 },
    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("bin count must be at least 2, got {0}")]
    TooFewBins(u32),
    #[error("bin {bin} out of range for {bins} bins")]
    BinOutOfRange { bin: u32, bins: u32 },
    #[error("token {token} at position {position} ({dim}) is outside the action vocabulary [{lo}, {hi})")]
    TokenOutOfRange {
        position: usize,
        dim: &'static str,
        token: u32,
        lo: u32,
        hi: u32,
    },
    #[error("expected 7 action tokens, got {0}")]
    WrongLength(usize),
    #[error("no action frames to fit ranges from")]
    Empty,
    #[error("base vocabulary must be non-zero")]
    ZeroBaseVocab,
}

/// One robot action: stop flag, chassis deltas, end-effector deltas, gripper.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action7 {
    pub stop: bool,
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
    pub du: f64,
    pub dv: f64,
    /// `true` means closed.
    pub gripper: bool,
}

impl Action7 {
    pub const fn zero() -> Self {
        Action7 {
            stop: false,
            dx: 0.0,
            dy: 0.0,
            dyaw: 0.0,
            du: 0.0,
            dv: 0.0,
            gripper: false,
        }
    }

    pub fn continuous(&self) -> [f64; 5] {
        [self.dx, self.dy, self.dyaw, self.du, self.dv]
    }

    pub fn set_continuous(&mut self, v: [f64; 5]) {
        self.dx = v[0];
        self.dy = v[1];
        self.dyaw = v[2];
        self.du = v[3];
        self.dv = v[4];
    }

    pub fn is_finite(&self) -> bool {
        self.continuous().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Meters,
    Radians,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimRange {
    pub lo: f64,
    pub hi: f64,
    pub units: Units,
}

impl DimRange {
    pub const fn new(lo: f64, hi: f64, units: Units) -> Self {
        DimRange { lo, hi, units }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi {
            Ok(())
        } else {
            Err(CodecError::InvalidRange {
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    /// Width of one bin.
    pub fn bin_width(&self, bins: u32) -> f64 {
        self.span() / bins as f64
    }
}

/// Ranges for the five continuous dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionRanges {
    pub dx: DimRange,
    pub dy: DimRange,
    pub dyaw: DimRange,
    pub du: DimRange,
    pub dv: DimRange,
}

impl ActionRanges {
    pub fn as_array(&self) -> [DimRange; 5] {
        [self.dx, self.dy, self.dyaw, self.du, self.dv]
    }

    pub fn from_array(r: [DimRange; 5]) -> Self {
        ActionRanges {
            dx: r[0],
            dy: r[1],
            dyaw: r[2],
            du: r[3],
            dv: r[4],
        }
    }
}

impl Default for ActionRanges {
    fn default() -> Self {
        ActionRanges {
            dx: DimRange::new(-0.5, 0.5, Units::Meters),
            dy: DimRange::new(-0.5, 0.5, Units::Meters),
            dyaw: DimRange::new(-0.5, 0.5, Units::Radians),
            du: DimRange::new(-0.1, 0.1, Units::Meters),
            dv: DimRange::new(-0.1, 0.1, Units::Meters),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub bins: u32,
    pub base_vocab: u32,
    pub ranges: ActionRanges,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            bins: DEFAULT_BINS,
            base_vocab: DEFAULT_BASE_VOCAB,
            ranges: ActionRanges::default(),
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.bins < 2 {
            return Err(CodecError::TooFewBins(self.bins));
        }
        if self.base_vocab == 0 {
            return Err(CodecError::ZeroBaseVocab);
        }
        for r in self.ranges.as_array() {
            r.validate()?;
        }
        Ok(())
    }

    /// First id of the action vocabulary.
    pub fn first_token(&self) -> u32 {
        self.base_vocab
    }

    /// One past the last id of the action vocabulary.
    pub fn end_token(&self) -> u32 {
        self.base_vocab + self.bins
    }

    /// Largest round-trip error for each continuous dimension.
    pub fn half_bin_widths(&self) -> [f64; 5] {
        self.ranges
            .as_array()
            .map(|r| r.span() / (2.0 * self.bins as f64))
    }
}

/// Seven token ids in the order stop, dx, dy, dyaw, du, dv, gripper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(pub [u32; 7]);

impl TokenSeq {
    /// Builds a sequence from an arbitrary-length slice, as received off the wire.
    pub fn from_slice(ids: &[u32]) -> Result<Self, CodecError> {
        let arr: [u32; 7] = ids
            .try_into()
            .map_err(|_| CodecError::WrongLength(ids.len()))?;
        Ok(TokenSeq(arr))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

pub fn encode_dim(value: f64, range: &DimRange, bins: u32) -> Result<u32, CodecError> {
    if bins < 2 {
        return Err(CodecError::TooFewBins(bins));
    }
    range.validate()?;
    if !value.is_finite() {
        return Err(CodecError::NonFinite { dim: "value", value });
    }
    let scaled = math::floor((value - range.lo) / range.span() * bins as f64);
    Ok(scaled.clamp(0.0, (bins - 1) as f64) as u32)
}

pub fn decode_dim(bin: u32, range: &DimRange, bins: u32) -> Result<f64, CodecError> {
    if bins < 2 {
        return Err(CodecError::TooFewBins(bins));
    }
    if bin >= bins {
        return Err(CodecError::BinOutOfRange { bin, bins });
    }
    range.validate()?;
    Ok(range.lo + (bin as f64 + 0.5) * range.span() / bins as f64)
}

fn bool_bin(b: bool, bins: u32) -> u32 {
    if b {
        bins - 1
    } else {
        0
    }
}

pub fn encode_action(a: &Action7, cfg: &CodecConfig) -> Result<TokenSeq, CodecError> {
    cfg.validate()?;
    let mut out = [0u32; 7];
    out[0] = bool_bin(a.stop, cfg.bins);
    for (i, (v, r)) in a
        .continuous()
        .iter()
        .zip(cfg.ranges.as_array().iter())
        .enumerate()
    {
        if !v.is_finite() {
            return Err(CodecError::NonFinite {
                dim: DIM_NAMES[i + 1],
                value: *v,
            });
        }
        out[i + 1] = encode_dim(*v, r, cfg.bins)?;
    }
    out[6] = bool_bin(a.gripper, cfg.bins);
    for t in out.iter_mut() {
        *t += cfg.base_vocab;
    }
    Ok(TokenSeq(out))
}

pub fn decode_action(t: &TokenSeq, cfg: &CodecConfig) -> Result<Action7, CodecError> {
    cfg.validate()?;
    let (lo, hi) = (cfg.first_token(), cfg.end_token());
    let mut bins = [0u32; 7];
    for (pos, &tok) in t.0.iter().enumerate() {
        if tok < lo || tok >= hi {
            return Err(CodecError::TokenOutOfRange {
                position: pos,
                dim: DIM_NAMES[pos],
                token: tok,
                lo,
                hi,
            });
        }
        bins[pos] = tok - lo;
    }
    let threshold = cfg.bins / 2;
    let ranges = cfg.ranges.as_array();
    let mut cont = [0.0; 5];
    for i in 0..5 {
        cont[i] = decode_dim(bins[i + 1], &ranges[i], cfg.bins)?;
    }
    let mut a = Action7 {
        stop: bins[0] >= threshold,
        gripper: bins[6] >= threshold,
        ..Action7::zero()
    };
    a.set_continuous(cont);
    Ok(a)
}

/// Span used when a dimension never varies in the data.
pub const DEGENERATE_SPAN: f64 = 0.01;
/// Fraction of the trimmed span added on each side.
pub const FIT_MARGIN: f64 = 0.05;

/// Fits per-dimension ranges to the 1st..99th percentile of observed actions.
pub fn fit_ranges<'a, I>(actions: I) -> Result<CodecConfig, CodecError>
where
    I: IntoIterator<Item = &'a Action7>,
{
    let mut cols: [Vec<f64>; 5] = Default::default();
    for a in actions {
        for (i, v) in a.continuous().iter().enumerate() {
            if !v.is_finite() {
                return Err(CodecError::NonFinite {
                    dim: DIM_NAMES[i + 1],
                    value: *v,
                });
            }
            cols[i].push(*v);
        }
    }
    if cols[0].is_empty() {
        return Err(CodecError::Empty);
    }
    let defaults = ActionRanges::default().as_array();
    let mut ranges = defaults;
    for (i, col) in cols.iter_mut().enumerate() {
        col.sort_by(f64::total_cmp);
        let lo = math::percentile_sorted(col, 0.01);
        let hi = math::percentile_sorted(col, 0.99);
        let span = hi - lo;
        let (lo, hi) = if span <= 0.0 {
            let mid = 0.5 * (lo + hi);
            (mid - DEGENERATE_SPAN / 2.0, mid + DEGENERATE_SPAN / 2.0)
        } else {
            (lo - FIT_MARGIN * span, hi + FIT_MARGIN * span)
        };
        ranges[i] = DimRange::new(lo, hi, defaults[i].units);
    }
    Ok(CodecConfig {
        bins: DEFAULT_BINS,
        base_vocab: DEFAULT_BASE_VOCAB,
        ranges: ActionRanges::from_array(ranges),
    })
}
