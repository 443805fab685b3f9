//! 2D tracking ground truth derived from scene geometry and the rendered instance buffer.

mod format;
mod project;

pub use format::{read_gt, read_gt_files, write_gt, write_gt_files, write_meta};
pub use project::{center_depth, frustum_planes, project_box, truncation_rate};

use serde::{Deserialize, Serialize};

use crate::geometry::{transform_point, Box2D, Vec3};
use crate::render::{compute_camera_matrices, fog_transmittance, CameraMatrices, FrameBuffers};
use crate::scene::{ObjectTrack, SceneDescription, Weather};
use crate::{Error, Result};

/// Thresholds deciding which ground-truth boxes are excluded from scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalFilter {
    pub min_height_px: f64,
    pub max_truncation: f64,
    pub min_occupancy: f64,
    pub min_visibility: f64,
}

impl Default for EvalFilter {
    fn default() -> Self {
        Self { min_height_px: 25.0, max_truncation: 0.5, min_occupancy: 0.25, min_visibility: 0.25 }
    }
}

impl EvalFilter {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_height_px.is_finite() && self.min_height_px >= 0.0) {
            return Err(Error::invalid("eval_filter.min_height_px", "must be finite and >= 0"));
        }
        for (name, v) in [
            ("max_truncation", self.max_truncation),
            ("min_occupancy", self.min_occupancy),
            ("min_visibility", self.min_visibility),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("eval_filter.{name}"), format!("{v} not in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn ignores(&self, gt: &GtBox2D) -> bool {
        gt.bbox.height() < self.min_height_px
            || gt.truncation > self.max_truncation
            || gt.occupancy < self.min_occupancy
            || gt.visibility < self.min_visibility
    }
}

/// KITTI-style 3D description of a box in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Object3D {
    /// Observation angle, `rotation_y - atan2(x, z)` wrapped to `[-pi, pi]`.
    pub alpha: f64,
    /// `(height, width, length)` in meters.
    pub dimensions: [f64; 3],
    /// Bottom-centre in camera coordinates (y down).
    pub location: [f64; 3],
    /// Heading about the camera y axis; 0 points along camera +x.
    pub rotation_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox2D {
    pub frame: usize,
    pub track_id: u32,
    #[serde(flatten)]
    pub bbox: Box2D,
    pub truncation: f64,
    pub occupancy: f64,
    pub visibility: f64,
    pub ignore: bool,
    pub object: Object3D,
}

impl GtBox2D {
    /// Three-level occlusion code: 0 mostly visible, 1 partly occluded, 2 largely occluded.
    pub fn occlusion_level(&self) -> u8 {
        if self.occupancy > 0.75 {
            0
        } else if self.occupancy >= 0.25 {
            1
        } else {
            2
        }
    }
}

/// Fraction of `bbox`'s pixels (by centre) that carry `track_id` in the instance map.
pub fn occupancy_rate(instance: &[u16], width: usize, height: usize, track_id: u32, bbox: &Box2D) -> f64 {
    let (cols, rows) = (bbox.columns(width), bbox.rows(height));
    let area = cols.len() * rows.len();
    if area == 0 {
        return 0.0;
    }
    let hits: usize = rows
        .map(|v| {
            let row = &instance[v * width..(v + 1) * width];
            row[cols.clone()].iter().filter(|&&i| u32::from(i) == track_id).count()
        })
        .sum();
    hits as f64 / area as f64
}

/// Fog transmittance at the object's centre depth; the same term the colour pass uses.
pub fn fog_visibility(center_depth: f64, weather: &Weather) -> f64 {
    fog_transmittance(weather.fog_beta, center_depth.max(0.0))
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + std::f64::consts::TAU
    } else {
        w
    }
}

fn object_3d(obj: &ObjectTrack, frame: usize, cam: &CameraMatrices) -> Option<Object3D> {
    let pose = obj.pose_at(frame)?;
    let model = pose.matrix();
    let loc = cam.to_camera(&pose.position);
    let fwd = transform_point(&model, &Vec3::z()) - pose.position;
    let heading = cam.rotation() * fwd;
    let rotation_y = wrap_angle((-heading.z).atan2(heading.x));
    let [l, w, h] = obj.extents;
    Some(Object3D {
        alpha: wrap_angle(rotation_y - loc.x.atan2(loc.z)),
        dimensions: [h, w, l],
        location: [loc.x, loc.y, loc.z],
        rotation_y,
    })
}

/// Ground truth for one rendered frame, sorted by track id.
pub fn annotate_frame(scene: &SceneDescription, fb: &FrameBuffers, filter: &EvalFilter) -> Result<Vec<GtBox2D>> {
    let t = fb.frame;
    if t >= scene.frame_count {
        return Err(Error::FrameOutOfRange { frame: t, frame_count: scene.frame_count });
    }
    let k = &scene.intrinsics;
    if fb.width != k.width || fb.height != k.height {
        return Err(Error::Mismatch(format!(
            "frame {t} buffers are {}x{} but the scene camera is {}x{}",
            fb.width, fb.height, k.width, k.height
        )));
    }
    let cam = compute_camera_matrices(&scene.camera_poses[t], k);
    let mut out = Vec::new();
    for obj in &scene.objects {
        let Some(pose) = obj.pose_at(t) else { continue };
        let Some(bbox) = project_box(pose, obj.extents, &cam) else {
            continue;
        };
        let Some(object) = object_3d(obj, t, &cam) else {
            continue;
        };
        let mut gt = GtBox2D {
            frame: t,
            track_id: obj.track_id,
            bbox,
            truncation: truncation_rate(pose, obj.extents, &cam),
            occupancy: occupancy_rate(&fb.instance, fb.width, fb.height, obj.track_id, &bbox),
            visibility: fog_visibility(center_depth(pose, obj.extents, &cam), &scene.weather),
            ignore: false,
            object,
        };
        gt.ignore = filter.ignores(&gt);
        out.push(gt);
    }
    out.sort_by_key(|g| g.track_id);
    Ok(out)
}

/// Ground truth for a whole sequence; `buffers` must hold exactly one entry per frame, in order.
pub fn annotate_sequence(
    scene: &SceneDescription,
    buffers: &[FrameBuffers],
    filter: &EvalFilter,
) -> Result<Vec<GtBox2D>> {
    if buffers.len() != scene.frame_count {
        return Err(Error::Mismatch(format!(
            "{} rendered frames for a scene of {} frames",
            buffers.len(),
            scene.frame_count
        )));
    }
    let mut out = Vec::new();
    for (t, fb) in buffers.iter().enumerate() {
        if fb.frame != t {
            return Err(Error::Mismatch(format!("buffer {t} holds frame {}", fb.frame)));
        }
        out.extend(annotate_frame(scene, fb, filter)?);
    }
    Ok(out)
}

/// Re-applies `filter` to existing annotations.
pub fn refilter(gt: &mut [GtBox2D], filter: &EvalFilter) {
    for g in gt {
        g.ignore = filter.ignores(g);
    }
}
