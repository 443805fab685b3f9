//! Render → annotate → detect → track → evaluate, wired end to end.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::annotate::{annotate_frame, write_gt_files, EvalFilter, GtBox2D};
use crate::detsim::{simulate_detections, Detection, DetectorModel};
use crate::motmetrics::{evaluate, MotReport};
use crate::render::io::Pass;
use crate::render::render_frame;
use crate::scene::SceneDescription;
use crate::track::{track_detections, HyperParams, Track};
use crate::{Error, Result};

/// Ground truth and simulated detections of one rendered sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frame_count: usize,
    pub gt: Vec<GtBox2D>,
    pub detections: Vec<Detection>,
}

/// The scene's own evaluation thresholds when it carries them, `fallback` otherwise.
pub fn effective_filter(scene: &SceneDescription, fallback: &EvalFilter) -> EvalFilter {
    scene.eval_filter.unwrap_or(*fallback)
}

/// Renders and annotates every frame in parallel, keeping only the annotations.
pub fn annotate_scene(scene: &SceneDescription, filter: &EvalFilter) -> Result<Vec<GtBox2D>> {
    scene.validate()?;
    let filter = effective_filter(scene, filter);
    filter.validate()?;
    let frames: Vec<Vec<GtBox2D>> = (0..scene.frame_count)
        .into_par_iter()
        .map(|t| annotate_frame(scene, &render_frame(scene, t)?, &filter))
        .collect::<Result<_>>()?;
    Ok(frames.into_iter().flatten().collect())
}

pub fn prepare_sequence(
    name: impl Into<String>,
    scene: &SceneDescription,
    filter: &EvalFilter,
    detector: &DetectorModel,
) -> Result<Sequence> {
    detector.validate()?;
    let gt = annotate_scene(scene, filter)?;
    let detections = simulate_detections(&gt, detector, &scene.intrinsics, scene.frame_count);
    Ok(Sequence { name: name.into(), frame_count: scene.frame_count, gt, detections })
}

pub fn evaluate_sequence(seq: &Sequence, h: &HyperParams, iou_threshold: f64) -> Result<(Vec<Track>, MotReport)> {
    h.validate()?;
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::invalid("iou_threshold", "must be in (0, 1]"));
    }
    let tracks = track_detections(&seq.detections, h);
    let report = evaluate(&seq.gt, &tracks, seq.frame_count, iou_threshold)?;
    Ok((tracks, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSummary {
    pub frames: usize,
    pub seconds: f64,
    pub gt: Vec<GtBox2D>,
}

impl RenderSummary {
    pub fn fps(&self) -> f64 {
        if self.seconds > 0.0 {
            self.frames as f64 / self.seconds
        } else {
            f64::INFINITY
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `pass/{color,depth,instance,flow}/NNNNNN.*` and `gt/gt.txt` + `gt/gt.meta` under `dir`.
///
/// The timing covers rendering, annotation and file output.
pub fn render_to_dir(scene: &SceneDescription, filter: &EvalFilter, dir: &Path) -> Result<RenderSummary> {
    scene.validate()?;
    let filter = effective_filter(scene, filter);
    filter.validate()?;
    let pass_dir = dir.join("pass");
    for p in Pass::ALL {
        create_dir(&pass_dir.join(p.dir()))?;
    }
    create_dir(&dir.join("gt"))?;

    let start = Instant::now();
    let frames: Vec<Vec<GtBox2D>> = (0..scene.frame_count)
        .into_par_iter()
        .map(|t| {
            let fb = render_frame(scene, t)?;
            for p in Pass::ALL {
                write_file(&pass_dir.join(p.file_name(t)), &p.encode(&fb))?;
            }
            annotate_frame(scene, &fb, &filter)
        })
        .collect::<Result<_>>()?;
    let gt: Vec<GtBox2D> = frames.into_iter().flatten().collect();
    write_gt_files(&gt, &dir.join("gt").join("gt.txt"))?;
    Ok(RenderSummary { frames: scene.frame_count, seconds: start.elapsed().as_secs_f64(), gt })
}
