//! Ramp and platform height field.

use serde::{Deserialize, Serialize};

use crate::math;

/// A straight ramp rising along `heading` from its foot at (`x`, `y`),
/// followed by a flat platform at the ramp's top height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Horizontal length of the inclined part.
    pub length: f64,
    pub width: f64,
    /// Incline angle in radians.
    pub angle: f64,
    pub platform_length: f64,
}

impl Ramp {
    pub fn top_height(&self) -> f64 {
        self.length * math::tan(self.angle)
    }

    /// Along-axis and lateral coordinates of a point relative to the foot.
    pub fn local(&self, x: f64, y: f64) -> (f64, f64) {
        math::rotate(x - self.x, y - self.y, -self.heading)
    }

    fn within_width(&self, lateral: f64) -> bool {
        lateral.abs() <= self.width / 2.0
    }

    /// Ground height at a point.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let (s, t) = self.local(x, y);
        if !self.within_width(t) {
            return 0.0;
        }
        if s > 0.0 && s < self.length {
            s * math::tan(self.angle)
        } else if s >= self.length && s <= self.length + self.platform_length {
            self.top_height()
        } else {
            0.0
        }
    }

    /// Whether a point lies on the inclined section (open interval).
    pub fn on_incline(&self, x: f64, y: f64) -> bool {
        let (s, t) = self.local(x, y);
        self.within_width(t) && s > 0.0 && s < self.length
    }

    pub fn on_platform(&self, x: f64, y: f64) -> bool {
        let (s, t) = self.local(x, y);
        self.within_width(t) && s >= self.length && s <= self.length + self.platform_length
    }

    /// Whether the segment between two contact points crosses the incline.
    pub fn segment_overlaps_incline(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let (sa, ta) = self.local(a.0, a.1);
        let (sb, tb) = self.local(b.0, b.1);
        if !(self.within_width(ta) || self.within_width(tb)) {
            return false;
        }
        let (lo, hi) = if sa < sb { (sa, sb) } else { (sb, sa) };
        hi > 0.0 && lo < self.length
    }
}
