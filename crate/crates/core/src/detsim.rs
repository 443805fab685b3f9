//! Seeded stochastic detector: turns ground truth into noisy scored detections whose
//! miss rate grows with occlusion, truncation, fog and small size.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::GtBox2D;
use crate::geometry::Box2D;
use crate::scene::CameraIntrinsics;
use crate::streams::stream;
use crate::{Error, Result};

const ROLE_MISS: u64 = 1;
const ROLE_JITTER: u64 = 2;
const ROLE_SCORE: u64 = 3;
const ROLE_FALSE_POSITIVE: u64 = 4;

const FP_MIN_HEIGHT: f64 = 15.0;
const FP_MAX_HEIGHT: f64 = 150.0;
const FP_ASPECT_MEAN: f64 = 1.6;
const FP_ASPECT_SIGMA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: usize,
    #[serde(flatten)]
    pub bbox: Box2D,
    pub score: f64,
    /// Track id of the ground-truth box this detection was drawn from; `None` for false
    /// positives and for detections read back from files.
    #[serde(skip)]
    pub origin: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorModel {
    pub miss_base: f64,
    pub occlusion_weight: f64,
    pub truncation_weight: f64,
    pub fog_weight: f64,
    /// Box height (px) below which small-object misses kick in.
    pub size_scale: f64,
    /// Per-edge jitter standard deviation as a fraction of the box size.
    pub jitter_sigma: f64,
    /// Expected false positives per frame.
    pub fp_rate: f64,
    pub score_noise_sigma: f64,
    pub seed: u64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            miss_base: 0.02,
            occlusion_weight: 0.6,
            truncation_weight: 0.4,
            fog_weight: 0.8,
            size_scale: 40.0,
            jitter_sigma: 0.03,
            fp_rate: 0.2,
            score_noise_sigma: 0.08,
            seed: 0,
        }
    }
}

impl DetectorModel {
    /// A noiseless detector that returns every ground-truth box unchanged.
    pub fn ideal(seed: u64) -> Self {
        Self {
            miss_base: 0.0,
            occlusion_weight: 0.0,
            truncation_weight: 0.0,
            fog_weight: 0.0,
            size_scale: 0.0,
            jitter_sigma: 0.0,
            fp_rate: 0.0,
            score_noise_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("miss_base", self.miss_base),
            ("occlusion_weight", self.occlusion_weight),
            ("truncation_weight", self.truncation_weight),
            ("fog_weight", self.fog_weight),
            ("size_scale", self.size_scale),
            ("jitter_sigma", self.jitter_sigma),
            ("fp_rate", self.fp_rate),
            ("score_noise_sigma", self.score_noise_sigma),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("detector.{name}"), format!("{v} must be finite and >= 0")));
            }
        }
        if self.miss_base > 1.0 {
            return Err(Error::invalid("detector.miss_base", "must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn miss_probability(&self, gt: &GtBox2D) -> f64 {
        let small = if self.size_scale > 0.0 { (1.0 - gt.bbox.height() / self.size_scale).max(0.0) } else { 0.0 };
        (self.miss_base
            + self.occlusion_weight * (1.0 - gt.occupancy)
            + self.truncation_weight * gt.truncation
            + self.fog_weight * (1.0 - gt.visibility)
            + small)
            .clamp(0.0, 1.0)
    }

    fn detect(&self, gt: &GtBox2D, image: &Box2D) -> Option<Detection> {
        let key = |role| [gt.frame as u64, role, u64::from(gt.track_id)];
        let u: f64 = stream(self.seed, &key(ROLE_MISS)).random();
        if u < self.miss_probability(gt) {
            return None;
        }
        let b = gt.bbox;
        let bbox = if self.jitter_sigma > 0.0 {
            let mut rng = stream(self.seed, &key(ROLE_JITTER));
            let mut edge = |size: f64| {
                let n: f64 = rng.sample(rand_distr::StandardNormal);
                n * self.jitter_sigma * size
            };
            let (w, h) = (b.width(), b.height());
            Box2D::new(b.left + edge(w), b.top + edge(h), b.right + edge(w), b.bottom + edge(h)).intersect(image)
        } else {
            b
        };
        if bbox.is_empty() {
            return None;
        }
        let noise = if self.score_noise_sigma > 0.0 {
            let n: f64 = stream(self.seed, &key(ROLE_SCORE)).sample(rand_distr::StandardNormal);
            (n * self.score_noise_sigma).abs()
        } else {
            0.0
        };
        Some(Detection {
            frame: gt.frame,
            bbox,
            score: (0.5 + 0.5 * gt.occupancy * gt.visibility - noise).clamp(0.0, 1.0),
            origin: Some(gt.track_id),
        })
    }

    fn false_positives(&self, frame: usize, image: &Box2D) -> Vec<Detection> {
        if self.fp_rate <= 0.0 {
            return Vec::new();
        }
        let mut rng = stream(self.seed, &[frame as u64, ROLE_FALSE_POSITIVE]);
        let count = Poisson::new(self.fp_rate).expect("positive rate").sample(&mut rng) as usize;
        let aspect = Normal::new(FP_ASPECT_MEAN, FP_ASPECT_SIGMA).unwrap();
        let score = Beta::new(2.0, 5.0).unwrap();
        let (lo, hi) = (FP_MIN_HEIGHT.ln(), FP_MAX_HEIGHT.ln());
        (0..count)
            .filter_map(|_| {
                let h = rng.random_range(lo..hi).exp();
                let w = h * aspect.sample(&mut rng).max(0.3);
                let left = rng.random_range(0.0..1.0) * (image.right - w).max(0.0);
                let top = rng.random_range(0.0..1.0) * (image.bottom - h).max(0.0);
                let s: f64 = score.sample(&mut rng);
                let bbox = Box2D::new(left, top, left + w, top + h).intersect(image);
                (!bbox.is_empty()).then_some(Detection { frame, bbox, score: s, origin: None })
            })
            .collect()
    }
}

fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        a.frame
            .cmp(&b.frame)
            .then(b.score.total_cmp(&a.score))
            .then(a.bbox.left.total_cmp(&b.bbox.left))
            .then(a.bbox.top.total_cmp(&b.bbox.top))
    });
}

/// Detections for frames `0..frame_count`, sorted by `(frame, score desc)`.
///
/// Every random draw comes from a stream keyed by `(seed, frame, role, track id)`, so the
/// output is identical however the frames are scheduled.
pub fn simulate_detections(
    gt: &[GtBox2D],
    model: &DetectorModel,
    intrinsics: &CameraIntrinsics,
    frame_count: usize,
) -> Vec<Detection> {
    let image = Box2D::new(0.0, 0.0, intrinsics.width as f64, intrinsics.height as f64);
    let mut per_frame: Vec<Vec<&GtBox2D>> = vec![Vec::new(); frame_count];
    for g in gt.iter().filter(|g| g.frame < frame_count) {
        per_frame[g.frame].push(g);
    }
    let mut out: Vec<Detection> = per_frame
        .par_iter()
        .enumerate()
        .flat_map_iter(|(frame, boxes)| {
            let mut dets: Vec<Detection> = boxes.iter().filter_map(|g| model.detect(g, &image)).collect();
            dets.extend(model.false_positives(frame, &image));
            dets
        })
        .collect();
    sort_detections(&mut out);
    out
}

/// `frame left top right bottom score`, one detection per line.
pub fn write_detections(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        let b = &d.bbox;
        writeln!(s, "{} {:.6} {:.6} {:.6} {:.6} {:.6}", d.frame, b.left, b.top, b.right, b.bottom, d.score).unwrap();
    }
    s
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err =
            |column: usize, message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, column, message };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 6 {
            return Err(err(1, format!("expected 6 fields, found {}", tokens.len())));
        }
        let col = |t: &str| t.as_ptr() as usize - line.as_ptr() as usize + 1;
        let frame = tokens[0].parse().map_err(|_| err(1, format!("bad frame {:?}", tokens[0])))?;
        let mut v = [0.0; 5];
        for (k, t) in tokens[1..].iter().enumerate() {
            v[k] = t.parse().map_err(|_| err(col(t), format!("bad number {t:?}")))?;
        }
        let bbox = Box2D::new(v[0], v[1], v[2], v[3]);
        if bbox.is_empty() || !(0.0..=1.0).contains(&v[4]) {
            return Err(err(1, "empty box or score outside [0, 1]".into()));
        }
        out.push(Detection { frame, bbox, score: v[4], origin: None });
    }
    sort_detections(&mut out);
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, path)
}
