//! Small numeric helpers shared across modules.
//!
//! All trigonometry goes through `libm` so that results are bit-identical
//! across targets, which the simulator's determinism contract relies on.

use core::f64::consts::PI;

pub const TAU: f64 = 2.0 * PI;

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn tan(x: f64) -> f64 {
    libm::tan(x)
}

#[inline]
pub fn atan(x: f64) -> f64 {
    libm::atan(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn deg(x: f64) -> f64 {
    x * PI / 180.0
}

/// Wraps an angle into `(-PI, PI]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = libm::fmod(a + PI, TAU);
    if r < 0.0 {
        r += TAU;
    }
    let w = r - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Rotates a planar vector by `angle`.
#[inline]
pub fn rotate(x: f64, y: f64, angle: f64) -> (f64, f64) {
    let (s, c) = (sin(angle), cos(angle));
    (c * x - s * y, s * x + c * y)
}

#[inline]
pub fn clamp_abs(v: f64, limit: f64) -> f64 {
    v.clamp(-limit, limit)
}

/// Linear-interpolated percentile (`q` in `[0, 1]`) of an already sorted slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
        let d = wrap_angle(-PI + 0.01 - (PI - 0.01));
        assert!((d - 0.02).abs() < 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&v, 0.5), 2.0);
        assert!((percentile_sorted(&v, 0.99) - 3.96).abs() < 1e-12);
        assert_eq!(percentile_sorted(&[7.0], 0.3), 7.0);
    }
}
