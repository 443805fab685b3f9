//! Small geometric toolkit shared by the renderer and the annotator.
//!
//! World frame: x right, y up, z forward at zero yaw. Object local frame uses the
//! same axes: x spans the width, y the height (0 at the ground contact), z the length.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;

/// Rotation composed as yaw about world up, then pitch about the object's right axis,
/// then roll about its forward axis.
///
/// Positive yaw swings the forward axis (+z) towards +x (to the right), positive pitch
/// raises the nose, positive roll lifts the right side.
pub fn rotation_ypr(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = (-pitch).sin_cos();
    let (sr, cr) = roll.sin_cos();
    let r_yaw = Mat3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let r_pitch = Mat3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let r_roll = Mat3::new(cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0);
    r_yaw * r_pitch * r_roll
}

/// Homogeneous rigid transform `p -> rotation * p + translation`.
pub fn rigid(rotation: &Mat3, translation: &Vec3) -> Mat4 {
    let mut m = Mat4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
    m
}

pub fn transform_point(m: &Mat4, p: &Vec3) -> Vec3 {
    let h = m * p.push(1.0);
    Vec3::new(h.x, h.y, h.z)
}

/// Axis-aligned pixel rectangle in continuous image coordinates.
///
/// Pixel `i` covers `[i, i + 1)`, so its centre sits at `i + 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl Box2D {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self { left, top, right, bottom }
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        !(self.right > self.left && self.bottom > self.top)
    }

    pub fn intersect(&self, other: &Box2D) -> Box2D {
        Box2D {
            left: self.left.max(other.left),
            top: self.top.max(other.top),
            right: self.right.min(other.right),
            bottom: self.bottom.min(other.bottom),
        }
    }

    /// Intersection over union; 0 when either box is empty.
    pub fn iou(&self, other: &Box2D) -> f64 {
        let inter = self.intersect(other).area();
        if inter <= 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Range of pixel indices whose centres fall inside `[lo, hi)`.
    pub fn pixel_span(lo: f64, hi: f64, limit: usize) -> std::ops::Range<usize> {
        let start = (lo - 0.5).ceil().max(0.0);
        let end = (hi - 0.5).ceil().max(0.0).min(limit as f64);
        let start = start.min(end);
        start as usize..end as usize
    }

    pub fn columns(&self, width: usize) -> std::ops::Range<usize> {
        Self::pixel_span(self.left, self.right, width)
    }

    pub fn rows(&self, height: usize) -> std::ops::Range<usize> {
        Self::pixel_span(self.top, self.bottom, height)
    }

    pub fn lerp(&self, other: &Box2D, t: f64) -> Box2D {
        let l = |a: f64, b: f64| a + (b - a) * t;
        Box2D {
            left: l(self.left, other.left),
            top: l(self.top, other.top),
            right: l(self.right, other.right),
            bottom: l(self.bottom, other.bottom),
        }
    }
}

/// Half-space `normal · p + offset >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        Self { normal, offset }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) + self.offset
    }

    /// Re-expresses the plane in a frame where points map as `p_old = m * p_new`.
    pub fn pulled_back(&self, m: &Mat4) -> Plane {
        let rot = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t = Vec3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
        Plane { normal: rot.transpose() * self.normal, offset: self.normal.dot(&t) + self.offset }
    }
}

/// Local corners of a cuboid with the given extents `(length, width, height)`.
///
/// The origin sits at the centre of the bottom face.
pub fn cuboid_corners(extents: [f64; 3]) -> [Vec3; 8] {
    let [l, w, h] = extents;
    let (hx, hz) = (w / 2.0, l / 2.0);
    let mut out = [Vec3::zeros(); 8];
    for (i, c) in out.iter_mut().enumerate() {
        let x = if i & 1 == 0 { -hx } else { hx };
        let y = if i & 2 == 0 { 0.0 } else { h };
        let z = if i & 4 == 0 { -hz } else { hz };
        *c = Vec3::new(x, y, z);
    }
    out
}

/// Pairs of corner indices (as laid out by [`cuboid_corners`]) forming the 12 edges.
pub const CUBOID_EDGES: [(usize, usize); 12] =
    [(0, 1), (2, 3), (4, 5), (6, 7), (0, 2), (1, 3), (4, 6), (5, 7), (0, 4), (1, 5), (2, 6), (3, 7)];

/// Convex polyhedron stored as a list of planar convex faces.
#[derive(Debug, Clone, Default)]
pub struct Polyhedron {
    pub faces: Vec<Vec<Vec3>>,
}

impl Polyhedron {
    pub fn aabb(min: Vec3, max: Vec3) -> Self {
        let c = |x: usize, y: usize, z: usize| {
            Vec3::new(
                if x == 0 { min.x } else { max.x },
                if y == 0 { min.y } else { max.y },
                if z == 0 { min.z } else { max.z },
            )
        };
        let faces = vec![
            vec![c(0, 0, 0), c(0, 0, 1), c(0, 1, 1), c(0, 1, 0)],
            vec![c(1, 0, 0), c(1, 1, 0), c(1, 1, 1), c(1, 0, 1)],
            vec![c(0, 0, 0), c(1, 0, 0), c(1, 0, 1), c(0, 0, 1)],
            vec![c(0, 1, 0), c(0, 1, 1), c(1, 1, 1), c(1, 1, 0)],
            vec![c(0, 0, 0), c(0, 1, 0), c(1, 1, 0), c(1, 0, 0)],
            vec![c(0, 0, 1), c(1, 0, 1), c(1, 1, 1), c(0, 1, 1)],
        ];
        Polyhedron { faces }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vec3> {
        self.faces.iter().flatten()
    }

    /// Keeps the part of the polyhedron inside `plane`, closing the cut with a cap face.
    pub fn clip(&self, plane: &Plane) -> Polyhedron {
        const EPS: f64 = 1e-12;
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut cap: Vec<Vec3> = Vec::new();
        for face in &self.faces {
            let mut out = Vec::with_capacity(face.len() + 2);
            for i in 0..face.len() {
                let a = face[i];
                let b = face[(i + 1) % face.len()];
                let da = plane.signed_distance(&a);
                let db = plane.signed_distance(&b);
                if da >= -EPS {
                    out.push(a);
                    if da.abs() <= EPS {
                        cap.push(a);
                    }
                }
                if (da > EPS && db < -EPS) || (da < -EPS && db > EPS) {
                    let t = da / (da - db);
                    let p = a + (b - a) * t;
                    out.push(p);
                    cap.push(p);
                }
            }
            if out.len() >= 3 {
                faces.push(out);
            }
        }
        if faces.is_empty() {
            return Polyhedron::default();
        }
        if let Some(cap_face) = order_cap(cap, &plane.normal) {
            faces.push(cap_face);
        }
        Polyhedron { faces }
    }

    /// Axis-aligned bounds of all vertices, or `None` when empty.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.vertices();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
    }
}

fn order_cap(mut pts: Vec<Vec3>, normal: &Vec3) -> Option<Vec<Vec3>> {
    let mut uniq: Vec<Vec3> = Vec::with_capacity(pts.len());
    for p in pts.drain(..) {
        if !uniq.iter().any(|q| (q - p).norm() < 1e-9) {
            uniq.push(p);
        }
    }
    if uniq.len() < 3 {
        return None;
    }
    let centroid = uniq.iter().sum::<Vec3>() / uniq.len() as f64;
    let n = normal.normalize();
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    uniq.sort_by(|a, b| {
        let (da, db) = (a - centroid, b - centroid);
        let ta = da.dot(&v).atan2(da.dot(&u));
        let tb = db.dot(&v).atan2(db.dot(&u));
        ta.total_cmp(&tb)
    });
    Some(uniq)
}

/// Oriented box for overlap tests: centre, orthonormal axes (columns) and half-sizes.
#[derive(Debug, Clone, Copy)]
pub struct OrientedBox {
    pub center: Vec3,
    pub axes: Mat3,
    pub half: Vec3,
}

impl OrientedBox {
    /// Separating-axis test over the 15 candidate axes.
    pub fn intersects(&self, other: &OrientedBox) -> bool {
        let d = other.center - self.center;
        let mut axes: Vec<Vec3> = Vec::with_capacity(15);
        for i in 0..3 {
            axes.push(self.axes.column(i).into_owned());
            axes.push(other.axes.column(i).into_owned());
        }
        for i in 0..3 {
            for j in 0..3 {
                let c = self.axes.column(i).cross(&other.axes.column(j));
                if c.norm_squared() > 1e-12 {
                    axes.push(c.normalize());
                }
            }
        }
        axes.iter().all(|axis| {
            let ra: f64 = (0..3).map(|i| self.half[i] * self.axes.column(i).dot(axis).abs()).sum();
            let rb: f64 = (0..3).map(|i| other.half[i] * other.axes.column(i).dot(axis).abs()).sum();
            d.dot(axis).abs() <= ra + rb
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    #[test]
    fn yaw_swings_forward_to_the_right() {
        let r = rotation_ypr(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let f = r * Vec3::z();
        assert_close!(f.x, 1.0, 1e-12);
        assert_close!(f.z, 0.0, 1e-12);
        let p = rotation_ypr(0.0, 0.3, 0.0) * Vec3::z();
        assert!(p.y > 0.0, "positive pitch raises the nose");
        let r = rotation_ypr(0.0, 0.0, 0.3) * Vec3::x();
        assert!(r.y > 0.0, "positive roll lifts the right side");
    }

    #[test]
    fn rotation_is_orthonormal() {
        let r = rotation_ypr(0.4, -0.2, 1.1);
        assert!((r * r.transpose() - Mat3::identity()).norm() < 1e-12);
        assert_close!(r.determinant(), 1.0, 1e-12);
    }

    #[test]
    fn iou_hand_values() {
        let a = Box2D::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&Box2D::new(20.0, 0.0, 30.0, 10.0)), 0.0);
        assert_close!(a.iou(&Box2D::new(5.0, 0.0, 15.0, 10.0)), 1.0 / 3.0, 1e-12);
    }

    #[test]
    fn pixel_span_uses_centres() {
        assert_eq!(Box2D::pixel_span(0.0, 10.0, 100), 0..10);
        assert_eq!(Box2D::pixel_span(0.6, 2.4, 100), 1..2);
        assert_eq!(Box2D::pixel_span(-5.0, 200.0, 100), 0..100);
    }

    #[test]
    fn clipping_a_cube_in_half() {
        let cube = Polyhedron::aabb(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
        let half = cube.clip(&Plane::new(Vec3::new(1.0, 0.0, 0.0), 0.0));
        let (lo, hi) = half.bounds().unwrap();
        assert_close!(lo.x, 0.0, 1e-12);
        assert_close!(hi.x, 1.0, 1e-12);
        // A second, oblique cut still sees the first cap.
        let corner = half.clip(&Plane::new(Vec3::new(-1.0, -1.0, 0.0), 0.5));
        let (lo, hi) = corner.bounds().unwrap();
        assert_close!(lo.x, 0.0, 1e-12);
        assert_close!(hi.x, 1.0, 1e-12);
        assert_close!(lo.y, -1.0, 1e-12);
        assert_close!(hi.y, 0.5, 1e-12);
        let gone = cube.clip(&Plane::new(Vec3::new(1.0, 0.0, 0.0), -5.0));
        assert!(gone.is_empty());
    }

    #[test]
    fn plane_pull_back_matches_point_transform() {
        let m = rigid(&rotation_ypr(0.7, 0.1, -0.2), &Vec3::new(3.0, -1.0, 2.0));
        let plane = Plane::new(Vec3::new(0.3, -0.5, 0.8), 1.5);
        let local = plane.pulled_back(&m);
        for p in [Vec3::new(1.0, 2.0, 3.0), Vec3::new(-4.0, 0.5, 0.0)] {
            assert_close!(local.signed_distance(&p), plane.signed_distance(&transform_point(&m, &p)), 1e-12);
        }
    }

    #[test]
    fn separating_axis_test() {
        let make = |c: Vec3, yaw: f64| OrientedBox {
            center: c,
            axes: rotation_ypr(yaw, 0.0, 0.0),
            half: Vec3::new(1.0, 1.0, 2.0),
        };
        assert!(make(Vec3::zeros(), 0.0).intersects(&make(Vec3::new(1.5, 0.0, 0.0), 0.3)));
        assert!(!make(Vec3::zeros(), 0.0).intersects(&make(Vec3::new(2.05, 0.0, 0.0), 0.0)));
        // Rotated by 45 degrees the corner reaches further out.
        assert!(make(Vec3::zeros(), 0.0).intersects(&make(Vec3::new(2.3, 0.0, 0.0), std::f64::consts::FRAC_PI_4)));
        assert!(!make(Vec3::zeros(), 0.0).intersects(&make(Vec3::new(4.0, 0.0, 0.0), 0.9)));
    }
}
