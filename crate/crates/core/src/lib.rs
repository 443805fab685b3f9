//! Procedurally cloned driving scenes with automatic pixel-level ground truth,
//! a min-cost-flow multi-object tracker, CLEAR MOT scoring and a
//! real-versus-clone gap calibration harness.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{} = {} vs {} = {} (tol {})", stringify!($a), a, stringify!($b), b, $tol);
    }};
}

pub mod annotate;
pub mod calibrate;
pub mod detsim;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod motmetrics;
pub mod pipeline;
pub mod render;
pub mod scene;
mod streams;
pub mod track;

pub use error::{Error, Result};
