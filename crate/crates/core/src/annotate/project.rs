use crate::geometry::{cuboid_corners, transform_point, Box2D, Plane, Polyhedron, Vec3, CUBOID_EDGES};
use crate::render::{CameraMatrices, Z_FAR, Z_NEAR};
use crate::scene::Pose;

fn camera_corners(pose: &Pose, extents: [f64; 3], cam: &CameraMatrices) -> [Vec3; 8] {
    let mv = cam.view * pose.matrix();
    cuboid_corners(extents).map(|c| transform_point(&mv, &c))
}

/// Tight 2D box of the projected 3D bounding box, clipped to the image.
///
/// Corners behind the near plane are replaced by the points where the cuboid's edges
/// cross it. `None` when nothing lies in front of the camera or the hull misses the image.
pub fn project_box(pose: &Pose, extents: [f64; 3], cam: &CameraMatrices) -> Option<Box2D> {
    let corners = camera_corners(pose, extents, cam);
    let mut pts: Vec<Vec3> = corners.iter().copied().filter(|c| c.z >= Z_NEAR).collect();
    for (a, b) in CUBOID_EDGES {
        let (pa, pb) = (corners[a], corners[b]);
        let (da, db) = (pa.z - Z_NEAR, pb.z - Z_NEAR);
        if (da < 0.0) != (db < 0.0) {
            pts.push(pa + (pb - pa) * (da / (da - db)));
        }
    }
    if pts.is_empty() {
        return None;
    }
    let k = &cam.intrinsics;
    let mut hull = Box2D::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        let (u, v) = (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
        hull.left = hull.left.min(u);
        hull.right = hull.right.max(u);
        hull.top = hull.top.min(v);
        hull.bottom = hull.bottom.max(v);
    }
    let clipped = hull.intersect(&Box2D::new(0.0, 0.0, k.width as f64, k.height as f64));
    (!clipped.is_empty()).then_some(clipped)
}

/// The six view-frustum half-spaces in camera coordinates (inside is positive).
pub fn frustum_planes(cam: &CameraMatrices) -> [Plane; 6] {
    let k = &cam.intrinsics;
    let (w, h) = (k.width as f64, k.height as f64);
    let p = |n: Vec3, d: f64| {
        let len = n.norm();
        Plane::new(n / len, d / len)
    };
    [
        p(Vec3::new(0.0, 0.0, 1.0), -Z_NEAR),
        p(Vec3::new(0.0, 0.0, -1.0), Z_FAR),
        p(Vec3::new(k.fx, 0.0, k.cx), 0.0),
        p(Vec3::new(-k.fx, 0.0, w - k.cx), 0.0),
        p(Vec3::new(0.0, k.fy, k.cy), 0.0),
        p(Vec3::new(0.0, -k.fy, h - k.cy), 0.0),
    ]
}

/// `1 - vol(local bounds of the visible part) / vol(cuboid)`, clamped to `[0, 1]`.
///
/// The cuboid is clipped against each frustum plane in turn, in object coordinates.
pub fn truncation_rate(pose: &Pose, extents: [f64; 3], cam: &CameraMatrices) -> f64 {
    let mv = cam.view * pose.matrix();
    let [l, w, h] = extents;
    let mut poly = Polyhedron::aabb(Vec3::new(-w / 2.0, 0.0, -l / 2.0), Vec3::new(w / 2.0, h, l / 2.0));
    for plane in frustum_planes(cam) {
        poly = poly.clip(&plane.pulled_back(&mv));
        if poly.is_empty() {
            return 1.0;
        }
    }
    let Some((lo, hi)) = poly.bounds() else {
        return 1.0;
    };
    let d = hi - lo;
    let visible = d.x.max(0.0) * d.y.max(0.0) * d.z.max(0.0);
    (1.0 - visible / (l * w * h)).clamp(0.0, 1.0)
}

/// Camera-space depth of the 3D box centre.
pub fn center_depth(pose: &Pose, extents: [f64; 3], cam: &CameraMatrices) -> f64 {
    let center = transform_point(&pose.matrix(), &Vec3::new(0.0, extents[2] / 2.0, 0.0));
    cam.to_camera(&center).z
}
