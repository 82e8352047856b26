//! Open-vocabulary detector interface over symbolic snapshots.

use alloc::string::String;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sim::{Detection, SceneSnapshot};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    /// The detector could not be reached; callers may retry.
    #[error("detector unavailable: {0}")]
    Transport(String),
}

/// Lowercases, collapses whitespace and drops a leading article.
pub fn normalize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for (i, word) in name.split_whitespace().enumerate() {
        let w = word.to_lowercase();
        if i == 0 && (w == "the" || w == "a" || w == "an") {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&w);
    }
    out
}

pub trait Detector {
    /// Looks up `name` among the snapshot's detections. Absence is `Ok(None)`.
    fn detect(&mut self, name: &str, snapshot: &SceneSnapshot) -> Result<Option<Detection>, DetectorError>;
}

/// Matches names exactly (after normalization) against simulator ground truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruthDetector;

impl Detector for GroundTruthDetector {
    fn detect(&mut self, name: &str, snapshot: &SceneSnapshot) -> Result<Option<Detection>, DetectorError> {
        let want = normalize_name(name);
        if want.is_empty() {
            return Ok(None);
        }
        Ok(snapshot
            .detections
            .iter()
            .filter(|d| normalize_name(&d.name) == want)
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
            .cloned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseModel {
    pub miss_probability: f64,
    /// Half-width of the uniform bbox jitter, in pixels.
    pub jitter_px: f64,
}

impl NoiseModel {
    pub fn is_noiseless(&self) -> bool {
        self.miss_probability <= 0.0 && self.jitter_px <= 0.0
    }
}

/// Ground-truth detector with seeded misses and bbox jitter.
#[derive(Debug, Clone)]
pub struct NoisyDetector {
    noise: NoiseModel,
    rng: ChaCha8Rng,
}

impl NoisyDetector {
    pub fn new(noise: NoiseModel, seed: u64) -> Self {
        NoisyDetector {
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Detector for NoisyDetector {
    fn detect(&mut self, name: &str, snapshot: &SceneSnapshot) -> Result<Option<Detection>, DetectorError> {
        let found = GroundTruthDetector.detect(name, snapshot)?;
        let Some(mut d) = found else { return Ok(None) };
        if self.noise.miss_probability > 0.0 && self.rng.random_bool(self.noise.miss_probability.min(1.0)) {
            return Ok(None);
        }
        let j = self.noise.jitter_px;
        if j > 0.0 {
            let ox = self.rng.random_range(-j..=j);
            let oy = self.rng.random_range(-j..=j);
            d.bbox.x0 += ox;
            d.bbox.x1 += ox;
            d.bbox.y0 += oy;
            d.bbox.y1 += oy;
        }
        Ok(Some(d))
    }
}

impl<D: Detector + ?Sized> Detector for &mut D {
    fn detect(&mut self, name: &str, snapshot: &SceneSnapshot) -> Result<Option<Detection>, DetectorError> {
        (**self).detect(name, snapshot)
    }
}
