//! Scanline-free edge-function rasterizer for convex cuboid faces.
//!
//! Sampling at pixel centres with a top-left fill rule and no anti-aliasing, so
//! every covered pixel has exactly one owning surface.

use super::camera::{Z_FAR, Z_NEAR};
use crate::geometry::Vec3;
use crate::scene::CameraIntrinsics;

/// Camera-space position at frame t and of the same surface point at t+1.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RasterVertex {
    pub cam: Vec3,
    pub next: Vec3,
}

impl RasterVertex {
    fn lerp(&self, other: &RasterVertex, t: f64) -> RasterVertex {
        RasterVertex { cam: self.cam + (other.cam - self.cam) * t, next: self.next + (other.next - self.next) * t }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Surface {
    pub instance: u16,
    pub color: [f32; 3],
    /// Whether the surface still exists at t+1 (flow can be computed).
    pub has_next: bool,
}

/// Working buffers; depth stays f64 until the frame is finished.
pub(crate) struct Canvas {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub instance: Vec<u16>,
    pub color: Vec<[f32; 3]>,
    pub flow: Vec<[f32; 2]>,
    pub flow_valid: Vec<bool>,
    pub flow_depth: Vec<f32>,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            depth: vec![f64::INFINITY; n],
            instance: vec![0; n],
            color: vec![[0.0; 3]; n],
            flow: vec![[0.0; 2]; n],
            flow_valid: vec![false; n],
            flow_depth: vec![f32::INFINITY; n],
        }
    }
}

/// Clips a convex polygon to `z >= Z_NEAR`, interpolating both attribute sets.
pub(crate) fn clip_near(poly: &[RasterVertex]) -> Vec<RasterVertex> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        let (da, db) = (a.cam.z - Z_NEAR, b.cam.z - Z_NEAR);
        if da >= 0.0 {
            out.push(*a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            out.push(a.lerp(b, da / (da - db)));
        }
    }
    out
}

struct ScreenVertex {
    x: f64,
    y: f64,
    inv_z: f64,
    next_over_z: Vec3,
}

/// Edge function, evaluated with the endpoints in a canonical order so that a shared
/// edge gives exactly opposite values for the two triangles using it.
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    if (ax, ay) > (bx, by) {
        return -edge(bx, by, ax, ay, px, py);
    }
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Whether a continuous pixel position lies on the image.
pub(crate) fn in_image(u: f64, v: f64, width: f64, height: f64) -> bool {
    u >= 0.0 && v >= 0.0 && u < width && v < height
}

fn is_top_left(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let (dx, dy) = (bx - ax, by - ay);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// Rasterizes a convex polygon (already near-clipped) as a triangle fan.
pub(crate) fn raster_polygon(canvas: &mut Canvas, k: &CameraIntrinsics, poly: &[RasterVertex], surface: &Surface) {
    if poly.len() < 3 {
        return;
    }
    let sv: Vec<ScreenVertex> = poly
        .iter()
        .map(|v| {
            let inv_z = 1.0 / v.cam.z;
            ScreenVertex {
                x: k.fx * v.cam.x * inv_z + k.cx,
                y: k.fy * v.cam.y * inv_z + k.cy,
                inv_z,
                next_over_z: v.next * inv_z,
            }
        })
        .collect();
    for i in 1..sv.len() - 1 {
        raster_triangle(canvas, k, [&sv[0], &sv[i], &sv[i + 1]], surface);
    }
}

fn raster_triangle(canvas: &mut Canvas, k: &CameraIntrinsics, tri: [&ScreenVertex; 3], surface: &Surface) {
    let [v0, mut v1, mut v2] = tri;
    let mut area = edge(v0.x, v0.y, v1.x, v1.y, v2.x, v2.y);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    if area < 0.0 {
        std::mem::swap(&mut v1, &mut v2);
        area = -area;
    }
    let min_x = v0.x.min(v1.x).min(v2.x);
    let max_x = v0.x.max(v1.x).max(v2.x);
    let min_y = v0.y.min(v1.y).min(v2.y);
    let max_y = v0.y.max(v1.y).max(v2.y);
    let (w, h) = (canvas.width as f64, canvas.height as f64);
    if max_x < 0.0 || max_y < 0.0 || min_x > w || min_y > h {
        return;
    }
    let i0 = (min_x - 0.5).ceil().max(0.0) as usize;
    let i1 = ((max_x - 0.5).floor()).min(w - 1.0);
    let j0 = (min_y - 0.5).ceil().max(0.0) as usize;
    let j1 = ((max_y - 0.5).floor()).min(h - 1.0);
    if i1 < 0.0 || j1 < 0.0 {
        return;
    }
    let (i1, j1) = (i1 as usize, j1 as usize);

    let tl12 = is_top_left(v1.x, v1.y, v2.x, v2.y);
    let tl20 = is_top_left(v2.x, v2.y, v0.x, v0.y);
    let tl01 = is_top_left(v0.x, v0.y, v1.x, v1.y);
    let inv_area = 1.0 / area;
    let inside = |e: f64, tl: bool| e > 0.0 || (e == 0.0 && tl);

    for j in j0..=j1 {
        let py = j as f64 + 0.5;
        let row = j * canvas.width;
        for i in i0..=i1 {
            let px = i as f64 + 0.5;
            let e12 = edge(v1.x, v1.y, v2.x, v2.y, px, py);
            let e20 = edge(v2.x, v2.y, v0.x, v0.y, px, py);
            let e01 = edge(v0.x, v0.y, v1.x, v1.y, px, py);
            if !(inside(e12, tl12) && inside(e20, tl20) && inside(e01, tl01)) {
                continue;
            }
            let (l0, l1, l2) = (e12 * inv_area, e20 * inv_area, e01 * inv_area);
            let inv_z = l0 * v0.inv_z + l1 * v1.inv_z + l2 * v2.inv_z;
            let z = 1.0 / inv_z;
            let idx = row + i;
            if !(Z_NEAR * (1.0 - 1e-9)..=Z_FAR).contains(&z) || z >= canvas.depth[idx] {
                continue;
            }
            canvas.depth[idx] = z;
            canvas.instance[idx] = surface.instance;
            canvas.color[idx] = surface.color;
            let mut valid = false;
            if surface.has_next {
                let next = (v0.next_over_z * l0 + v1.next_over_z * l1 + v2.next_over_z * l2) * z;
                if next.z > Z_NEAR {
                    let u1 = k.fx * next.x / next.z + k.cx;
                    let w1 = k.fy * next.y / next.z + k.cy;
                    if in_image(u1, w1, w, h) {
                        canvas.flow[idx] = [(u1 - px) as f32, (w1 - py) as f32];
                        canvas.flow_depth[idx] = next.z as f32;
                        valid = true;
                    }
                }
            }
            if !valid {
                canvas.flow[idx] = [0.0, 0.0];
                canvas.flow_depth[idx] = f32::INFINITY;
            }
            canvas.flow_valid[idx] = valid;
        }
    }
}
