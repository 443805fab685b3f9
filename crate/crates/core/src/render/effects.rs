//! Colour-only weather effects. Nothing here touches depth, instance or flow.

use rand::Rng;

use crate::scene::Weather;
use crate::streams::stream;

pub const RAIN_MAX_STREAKS: f64 = 400.0;
pub const RAIN_ALPHA: f64 = 0.35;
pub const RAIN_MIN_LEN: f64 = 8.0;
pub const RAIN_MAX_LEN: f64 = 25.0;
pub const RAIN_MAX_TILT_DEG: f64 = 10.0;
const RAIN_COLOR: [f64; 3] = [0.82, 0.84, 0.88];

/// Fraction of surface radiance surviving `depth` meters of fog.
pub fn fog_transmittance(fog_beta: f64, depth: f64) -> f64 {
    if fog_beta <= 0.0 {
        1.0
    } else {
        (-fog_beta * depth).exp()
    }
}

/// Exponential-extinction fog: `v * color + (1 - v) * fog_color` with `v = exp(-beta * depth)`.
pub fn apply_fog(color: [f64; 3], depth: f64, weather: &Weather) -> [f64; 3] {
    if weather.fog_beta <= 0.0 {
        return color;
    }
    let v = fog_transmittance(weather.fog_beta, depth);
    std::array::from_fn(|c| v * color[c] + (1.0 - v) * weather.fog_color[c])
}

/// Overlays `round(intensity * 400)` translucent near-vertical streaks onto `color`.
///
/// The pattern depends only on `(seed, frame)`. Returns the number of streaks drawn.
pub fn apply_rain(
    color: &mut [[f32; 3]],
    width: usize,
    height: usize,
    rain_intensity: f64,
    seed: u64,
    frame: usize,
) -> usize {
    let n = (rain_intensity.clamp(0.0, 1.0) * RAIN_MAX_STREAKS).round() as usize;
    if n == 0 {
        return 0;
    }
    let mut rng = stream(seed, &[0x7261_696e, frame as u64]);
    for _ in 0..n {
        let x0: f64 = rng.random_range(0.0..width as f64);
        let y0: f64 = rng.random_range(-RAIN_MAX_LEN..height as f64);
        let len: f64 = rng.random_range(RAIN_MIN_LEN..=RAIN_MAX_LEN);
        let tilt = rng.random_range(-RAIN_MAX_TILT_DEG..=RAIN_MAX_TILT_DEG).to_radians();
        let (dx, dy) = (tilt.sin(), tilt.cos());
        let steps = len.ceil() as usize;
        let mut last = usize::MAX;
        for s in 0..=steps {
            let t = len * s as f64 / steps as f64;
            let (x, y) = (x0 + dx * t, y0 + dy * t);
            if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                continue;
            }
            let idx = y as usize * width + x as usize;
            if idx == last {
                continue;
            }
            last = idx;
            let px = &mut color[idx];
            for c in 0..3 {
                px[c] = ((1.0 - RAIN_ALPHA) * px[c] as f64 + RAIN_ALPHA * RAIN_COLOR[c]) as f32;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fog(beta: f64) -> Weather {
        Weather { fog_beta: beta, fog_color: [0.7, 0.75, 0.8], rain_intensity: 0.0 }
    }

    #[test]
    fn no_fog_is_identity() {
        let c = [0.1, 0.5, 0.9];
        assert_eq!(apply_fog(c, 30.0, &fog(0.0)), c);
        assert_eq!(apply_fog(c, f64::INFINITY, &fog(0.0)), c);
    }

    #[test]
    fn infinite_depth_is_fog_color() {
        assert_eq!(apply_fog([0.1, 0.5, 0.9], f64::INFINITY, &fog(0.03)), [0.7, 0.75, 0.8]);
    }

    #[test]
    fn fog_at_fifty_meters() {
        let v = (-1.5f64).exp();
        assert_close!(v, 0.2231, 1e-4);
        let c = [0.1, 0.5, 0.9];
        let out = apply_fog(c, 50.0, &fog(0.03));
        let f = [0.7, 0.75, 0.8];
        for ch in 0..3 {
            assert_close!(out[ch], v * c[ch] + (1.0 - v) * f[ch], 1e-6);
        }
    }

    #[test]
    fn rain_draws_exact_streak_count_deterministically() {
        let (w, h) = (200, 100);
        let base = vec![[0.2f32; 3]; w * h];
        let mut none = base.clone();
        assert_eq!(apply_rain(&mut none, w, h, 0.0, 5, 3), 0);
        assert_eq!(none, base);

        let mut a = base.clone();
        assert_eq!(apply_rain(&mut a, w, h, 1.0, 5, 3), 400);
        let diff = a.iter().zip(&base).filter(|(p, q)| p != q).count();
        assert!(diff > 0);
        let mut b = base.clone();
        apply_rain(&mut b, w, h, 1.0, 5, 3);
        assert_eq!(a, b);
        let mut c = base.clone();
        apply_rain(&mut c, w, h, 1.0, 5, 4);
        assert_ne!(a, c);
        let mut half = base.clone();
        assert_eq!(apply_rain(&mut half, w, h, 0.7, 5, 3), 280);
    }
}
