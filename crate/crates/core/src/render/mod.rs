//! Deterministic CPU renderer producing shaded colour, metric depth, instance ids
//! and forward optical flow for one frame of a scene.

mod camera;
mod effects;
pub mod io;
mod raster;

pub use camera::{compute_camera_matrices, CameraMatrices, Z_FAR, Z_NEAR};
pub use effects::{apply_fog, apply_rain, fog_transmittance};

use crate::geometry::{cuboid_corners, Mat4, Vec3};
use crate::scene::{CameraIntrinsics, Lighting, SceneDescription, PROP_ID_BASE};
use crate::{Error, Result};
use raster::{clip_near, in_image, raster_polygon, Canvas, RasterVertex, Surface};

/// The four per-frame ground-truth rasters, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    pub frame: usize,
    pub width: usize,
    pub height: usize,
    /// Linear RGB in `[0, 1]` after fog and rain.
    pub color: Vec<[f32; 3]>,
    /// Camera-space z in meters; `+inf` for sky.
    pub depth: Vec<f32>,
    /// 0 = background, track id for cars, `60000..=65000` for static props.
    pub instance: Vec<u16>,
    /// Forward flow `t -> t+1` in pixels.
    pub flow: Vec<[f32; 2]>,
    pub flow_valid: Vec<bool>,
    /// Camera-space z at t+1 of the surface point seen at each pixel (`+inf` when invalid).
    pub flow_depth: Vec<f32>,
}

impl FrameBuffers {
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }
}

/// Face corner indices (into [`cuboid_corners`]) and outward local normals.
const FACES: [([usize; 4], [f64; 3]); 6] = [
    ([0, 2, 6, 4], [-1.0, 0.0, 0.0]),
    ([1, 3, 7, 5], [1.0, 0.0, 0.0]),
    ([0, 1, 5, 4], [0.0, -1.0, 0.0]),
    ([2, 3, 7, 6], [0.0, 1.0, 0.0]),
    ([0, 1, 3, 2], [0.0, 0.0, -1.0]),
    ([4, 5, 7, 6], [0.0, 0.0, 1.0]),
];

const SKY_CLEAR: [f64; 3] = [0.53, 0.71, 0.92];
const SKY_GREY: [f64; 3] = [0.74, 0.75, 0.78];

/// Flat Lambertian shading: `albedo * (ambient + sun * max(0, n.l) * sun_color)`, clamped.
pub fn shade(albedo: [f64; 3], normal: &Vec3, lighting: &Lighting) -> [f64; 3] {
    let lambert = normal.dot(&lighting.sun_vec()).max(0.0) * lighting.sun_intensity;
    std::array::from_fn(|c| {
        (albedo[c] * (lighting.ambient_intensity + lambert * lighting.sun_color[c])).clamp(0.0, 1.0)
    })
}

fn sky_color(lighting: &Lighting) -> [f64; 3] {
    let (i, a) = (lighting.sun_intensity, lighting.ambient_intensity);
    let clear = if i + a > 0.0 { i / (i + a) } else { 0.0 };
    let brightness = (a + 0.8 * i).min(1.1);
    std::array::from_fn(|c| {
        let base = SKY_GREY[c] + (SKY_CLEAR[c] - SKY_GREY[c]) * clear;
        (base * brightness * (0.7 + 0.3 * lighting.sun_color[c])).clamp(0.0, 1.0)
    })
}

fn to_f32(c: [f64; 3]) -> [f32; 3] {
    c.map(|v| v as f32)
}

struct FrameContext<'a> {
    scene: &'a SceneDescription,
    k: CameraIntrinsics,
    cam: CameraMatrices,
    next_cam: Option<CameraMatrices>,
}

impl FrameContext<'_> {
    fn background(&self, canvas: &mut Canvas) {
        let ground = &self.scene.ground_plane;
        let ground_color = to_f32(shade(ground.albedo, &Vec3::y(), &self.scene.lighting));
        let sky = to_f32(sky_color(&self.scene.lighting));
        let origin = self.cam.center();
        let rot_t = self.cam.rotation().transpose();
        let (w, h) = (canvas.width as f64, canvas.height as f64);
        for j in 0..canvas.height {
            let py = j as f64 + 0.5;
            for i in 0..canvas.width {
                let px = i as f64 + 0.5;
                let idx = j * canvas.width + i;
                let dir = rot_t * Vec3::new((px - self.k.cx) / self.k.fx, (py - self.k.cy) / self.k.fy, 1.0);
                let t = if dir.y != 0.0 { (ground.height - origin.y) / dir.y } else { -1.0 };
                if (Z_NEAR..=Z_FAR).contains(&t) {
                    canvas.depth[idx] = t;
                    canvas.color[idx] = ground_color;
                    if let Some(next) = &self.next_cam {
                        let p1 = next.to_camera(&(origin + dir * t));
                        let (u1, v1) = next.pixel_of(&p1);
                        if p1.z > Z_NEAR && in_image(u1, v1, w, h) {
                            canvas.flow[idx] = [(u1 - px) as f32, (v1 - py) as f32];
                            canvas.flow_valid[idx] = true;
                            canvas.flow_depth[idx] = p1.z as f32;
                        }
                    }
                } else {
                    canvas.color[idx] = sky;
                }
            }
        }
    }

    /// Draws one cuboid part given its object-to-world transforms at t and t+1.
    #[allow(clippy::too_many_arguments)]
    fn draw_cuboid(
        &self,
        canvas: &mut Canvas,
        model: &Mat4,
        next_model: Option<&Mat4>,
        offset: Vec3,
        extents: [f64; 3],
        albedo: [f64; 3],
        instance: u16,
    ) {
        let mv = self.cam.view * model;
        let next_mv = match (next_model, &self.next_cam) {
            (Some(m), Some(c)) => Some(c.view * m),
            _ => None,
        };
        let corners = cuboid_corners(extents).map(|c| c + offset);
        let cam_pts = corners.map(|c| crate::geometry::transform_point(&mv, &c));
        let next_pts = next_mv.map(|m| corners.map(|c| crate::geometry::transform_point(&m, &c)));
        let model_rot = model.fixed_view::<3, 3>(0, 0).into_owned();
        let mv_rot = mv.fixed_view::<3, 3>(0, 0).into_owned();
        for (idx, n) in FACES.iter() {
            let n_local = Vec3::from(*n);
            let n_cam = mv_rot * n_local;
            if n_cam.dot(&cam_pts[idx[0]]) >= 0.0 {
                continue;
            }
            let n_world = model_rot * n_local;
            let surface = Surface {
                instance,
                color: to_f32(shade(albedo, &n_world, &self.scene.lighting)),
                has_next: next_pts.is_some(),
            };
            let poly: Vec<RasterVertex> = idx
                .iter()
                .map(|&c| RasterVertex { cam: cam_pts[c], next: next_pts.map_or(Vec3::zeros(), |p| p[c]) })
                .collect();
            let clipped = clip_near(&poly);
            raster_polygon(canvas, &self.k, &clipped, &surface);
        }
    }
}

/// Renders all four passes of frame `t`; colour effects follow the scene's weather.
pub fn render_frame(scene: &SceneDescription, t: usize) -> Result<FrameBuffers> {
    if t >= scene.frame_count {
        return Err(Error::FrameOutOfRange { frame: t, frame_count: scene.frame_count });
    }
    let k = scene.intrinsics;
    let ctx = FrameContext {
        scene,
        k,
        cam: compute_camera_matrices(&scene.camera_poses[t], &k),
        next_cam: (t + 1 < scene.frame_count).then(|| compute_camera_matrices(&scene.camera_poses[t + 1], &k)),
    };
    let mut canvas = Canvas::new(k.width, k.height);
    ctx.background(&mut canvas);

    for (i, prop) in scene.static_props.iter().enumerate() {
        let m = prop.pose.matrix();
        ctx.draw_cuboid(
            &mut canvas,
            &m,
            Some(&m),
            Vec3::zeros(),
            prop.extents,
            prop.albedo,
            (PROP_ID_BASE as usize + i) as u16,
        );
    }
    for obj in &scene.objects {
        let Some(pose) = obj.pose_at(t) else { continue };
        let model = pose.matrix();
        let next_model = obj.pose_at(t + 1).map(|p| p.matrix());
        for (offset, extents) in obj.shape.parts(obj.extents) {
            ctx.draw_cuboid(&mut canvas, &model, next_model.as_ref(), offset, extents, obj.albedo, obj.track_id as u16);
        }
    }

    let weather = &scene.weather;
    let mut color = canvas.color;
    if weather.fog_beta > 0.0 {
        for (c, &d) in color.iter_mut().zip(&canvas.depth) {
            *c = to_f32(apply_fog(c.map(f64::from), d, weather));
        }
    }
    apply_rain(&mut color, k.width, k.height, weather.rain_intensity, scene.seed, t);

    Ok(FrameBuffers {
        frame: t,
        width: k.width,
        height: k.height,
        color,
        depth: canvas.depth.iter().map(|&d| d as f32).collect(),
        instance: canvas.instance,
        flow: canvas.flow,
        flow_valid: canvas.flow_valid,
        flow_depth: canvas.flow_depth,
    })
}

/// Forward flow `t -> t+1` and its validity mask.
pub fn flow_pass(scene: &SceneDescription, t: usize) -> Result<(Vec<[f32; 2]>, Vec<bool>)> {
    let fb = render_frame(scene, t)?;
    Ok((fb.flow, fb.flow_valid))
}
