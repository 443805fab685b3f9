use crate::geometry::{Mat3, Mat4, Vec3};
use crate::scene::{CameraIntrinsics, Pose};

pub const Z_NEAR: f64 = 0.1;
pub const Z_FAR: f64 = 1000.0;

/// World-to-camera and camera-to-clip transforms for one frame.
///
/// Camera coordinates are x right, y down, z along the optical axis. The world is
/// y-up, so the view contains an axis flip and its rotation block has determinant -1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMatrices {
    pub view: Mat4,
    pub projection: Mat4,
    pub intrinsics: CameraIntrinsics,
}

const FLIP_Y: Mat3 = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);

pub fn compute_camera_matrices(camera_pose: &Pose, intrinsics: &CameraIntrinsics) -> CameraMatrices {
    let rot = FLIP_Y * camera_pose.rotation().transpose();
    let t = -(rot * camera_pose.position);
    let mut view = Mat4::identity();
    view.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
    view.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);

    let CameraIntrinsics { fx, fy, cx, cy, .. } = *intrinsics;
    let a = Z_FAR / (Z_FAR - Z_NEAR);
    let b = -Z_FAR * Z_NEAR / (Z_FAR - Z_NEAR);
    #[rustfmt::skip]
    let projection = Mat4::new(
        fx, 0.0, cx, 0.0,
        0.0, fy, cy, 0.0,
        0.0, 0.0, a, b,
        0.0, 0.0, 1.0, 0.0,
    );
    CameraMatrices { view, projection, intrinsics: *intrinsics }
}

impl CameraMatrices {
    pub fn rotation(&self) -> Mat3 {
        self.view.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.view[(0, 3)], self.view[(1, 3)], self.view[(2, 3)])
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation() * world + self.translation()
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation().transpose() * self.translation())
    }

    /// Pinhole projection of a camera-space point; `None` at or behind the near plane.
    pub fn project_camera(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= Z_NEAR {
            return None;
        }
        Some(self.pixel_of(p))
    }

    pub(crate) fn pixel_of(&self, p: &Vec3) -> (f64, f64) {
        let k = &self.intrinsics;
        (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy)
    }

    /// Full model-view-projection route through homogeneous clip space.
    pub fn project_world_via_clip(&self, world: &Vec3) -> Option<(f64, f64, f64)> {
        let clip = self.projection * self.view * world.push(1.0);
        if clip.w <= Z_NEAR {
            return None;
        }
        Some((clip.x / clip.w, clip.y / clip.w, clip.w))
    }

    /// World-space direction of the ray through continuous pixel `(u, v)`, scaled so
    /// its camera-space z component is 1.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        let k = &self.intrinsics;
        let d = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        self.rotation().transpose() * d
    }
}
