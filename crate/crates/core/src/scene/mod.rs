//! Virtual-world data model: camera path, object trajectories, lighting and weather.

mod generate;
mod variation;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::EvalFilter;
use crate::geometry::{rigid, rotation_ypr, Mat3, Mat4, Vec3};
use crate::{Error, Result};

pub use generate::{generate_seed_scene, MotionStyle, SeedParams, MAX_PLACEMENT_ATTEMPTS};
pub use variation::{
    apply_variation, LightingPreset, VariationKind, VariationOverrides, VariationSpec, CANONICAL_FOG_BETA,
    CANONICAL_RAIN_INTENSITY,
};

/// First instance id of the band reserved for static props.
pub const PROP_ID_BASE: u32 = 60_000;
/// Last instance id usable by a static prop.
pub const PROP_ID_MAX: u32 = 65_000;

/// Position plus yaw/pitch/roll. Angles are radians in memory and degrees on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    position: [f64; 3],
    yaw: f64,
    pitch: f64,
    roll: f64,
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        Pose {
            position: Vec3::from(r.position),
            yaw: r.yaw.to_radians(),
            pitch: r.pitch.to_radians(),
            roll: r.roll.to_radians(),
        }
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            position: p.position.into(),
            yaw: p.yaw.to_degrees(),
            pitch: p.pitch.to_degrees(),
            roll: p.roll.to_degrees(),
        }
    }
}

impl Pose {
    pub fn new(position: Vec3, yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { position, yaw, pitch, roll }
    }

    pub fn at(position: Vec3) -> Self {
        Self::new(position, 0.0, 0.0, 0.0)
    }

    pub fn identity() -> Self {
        Self::at(Vec3::zeros())
    }

    pub fn rotation(&self) -> Mat3 {
        rotation_ypr(self.yaw, self.pitch, self.roll)
    }

    /// Local-to-world transform.
    pub fn matrix(&self) -> Mat4 {
        rigid(&self.rotation(), &self.position)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.yaw.is_finite()
            && self.pitch.is_finite()
            && self.roll.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    /// KITTI-like calibration at 1242×375.
    fn default() -> Self {
        Self { fx: 721.5377, fy: 721.5377, cx: 609.5593, cy: 172.854, width: 1242, height: 375 }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, field: &str, msg: &str| {
            if c {
                Ok(())
            } else {
                Err(Error::invalid(format!("intrinsics.{field}"), msg))
            }
        };
        ok(self.fx > 0.0 && self.fx.is_finite(), "fx", "must be > 0")?;
        ok(self.fy > 0.0 && self.fy.is_finite(), "fy", "must be > 0")?;
        ok(self.width >= 16, "width", "must be >= 16")?;
        ok(self.height >= 16, "height", "must be >= 16")?;
        ok(self.cx > 0.0 && self.cx < self.width as f64, "cx", "must lie strictly inside the image")?;
        ok(self.cy > 0.0 && self.cy < self.height as f64, "cy", "must lie strictly inside the image")
    }

    /// Same camera resampled to a new image size.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self { fx: self.fx * sx, fy: self.fy * sy, cx: self.cx * sx, cy: self.cy * sy, width, height }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Cuboid,
    /// Body plus cabin, both scaled to the object's extents.
    CarLowpoly,
}

impl Shape {
    /// Component cuboids as `(offset of bottom centre, extents)` in object coordinates.
    pub fn parts(&self, extents: [f64; 3]) -> Vec<(Vec3, [f64; 3])> {
        let [l, w, h] = extents;
        match self {
            Shape::Cuboid => vec![(Vec3::zeros(), extents)],
            Shape::CarLowpoly => vec![
                (Vec3::zeros(), [l, w, 0.6 * h]),
                (Vec3::new(0.0, 0.6 * h, -0.08 * l), [0.55 * l, 0.9 * w, 0.4 * h]),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTrack {
    pub track_id: u32,
    /// `(length, width, height)` in meters.
    pub extents: [f64; 3],
    pub shape: Shape,
    pub albedo: [f64; 3],
    #[serde(with = "frame_poses")]
    pub poses: BTreeMap<usize, Pose>,
}

impl ObjectTrack {
    pub fn pose_at(&self, frame: usize) -> Option<&Pose> {
        self.poses.get(&frame)
    }
}

mod frame_poses {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct FramePose {
        frame: usize,
        #[serde(flatten)]
        pose: PoseFields,
    }

    #[derive(Serialize, Deserialize)]
    struct PoseFields {
        position: [f64; 3],
        yaw: f64,
        pitch: f64,
        roll: f64,
    }

    pub fn serialize<S: Serializer>(poses: &BTreeMap<usize, Pose>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let list: Vec<FramePose> = poses
            .iter()
            .map(|(&frame, p)| {
                let r = PoseRepr::from(*p);
                FramePose { frame, pose: PoseFields { position: r.position, yaw: r.yaw, pitch: r.pitch, roll: r.roll } }
            })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<usize, Pose>, D::Error> {
        let list = Vec::<FramePose>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for fp in list {
            let pose = Pose::from(PoseRepr {
                position: fp.pose.position,
                yaw: fp.pose.yaw,
                pitch: fp.pose.pitch,
                roll: fp.pose.roll,
            });
            if out.insert(fp.frame, pose).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate pose for frame {}", fp.frame)));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lighting {
    /// Unit vector pointing from the scene towards the sun.
    pub sun_direction: [f64; 3],
    pub sun_intensity: f64,
    pub sun_color: [f64; 3],
    pub ambient_intensity: f64,
    pub preset: LightingPreset,
}

impl Default for Lighting {
    fn default() -> Self {
        LightingPreset::Clone.lighting()
    }
}

impl Lighting {
    pub fn sun_vec(&self) -> Vec3 {
        Vec3::from(self.sun_direction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weather {
    /// Extinction coefficient in 1/m; 0 disables fog.
    pub fog_beta: f64,
    pub fog_color: [f64; 3],
    pub rain_intensity: f64,
}

impl Default for Weather {
    fn default() -> Self {
        Self { fog_beta: 0.0, fog_color: [0.78, 0.8, 0.82], rain_intensity: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticProp {
    pub extents: [f64; 3],
    pub pose: Pose,
    pub albedo: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundPlane {
    /// World y of the ground.
    pub height: f64,
    pub albedo: [f64; 3],
}

impl Default for GroundPlane {
    fn default() -> Self {
        Self { height: 0.0, albedo: [0.35, 0.35, 0.33] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    /// Seeds the per-frame rain particles.
    #[serde(default)]
    pub seed: u64,
    pub frame_count: usize,
    pub fps: f64,
    pub intrinsics: CameraIntrinsics,
    pub camera_poses: Vec<Pose>,
    pub objects: Vec<ObjectTrack>,
    #[serde(default)]
    pub static_props: Vec<StaticProp>,
    #[serde(default)]
    pub ground_plane: GroundPlane,
    #[serde(default)]
    pub lighting: Lighting,
    #[serde(default)]
    pub weather: Weather,
    /// Per-scene override of the evaluation thresholds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_filter: Option<EvalFilter>,
}

fn check_unit_rgb(field: &str, c: &[f64; 3]) -> Result<()> {
    if c.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::invalid(field, "channels must lie in [0, 1]"))
    }
}

fn check_extents(field: &str, e: &[f64; 3]) -> Result<()> {
    if e.iter().all(|v| *v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(field, "extents must be strictly positive"))
    }
}

impl SceneDescription {
    /// Smallest legal scene: one frame, identity camera at 1.5 m, no objects.
    pub fn minimal() -> Self {
        Self {
            seed: 0,
            frame_count: 1,
            fps: 10.0,
            intrinsics: CameraIntrinsics::default(),
            camera_poses: vec![Pose::at(Vec3::new(0.0, 1.5, 0.0))],
            objects: Vec::new(),
            static_props: Vec::new(),
            ground_plane: GroundPlane::default(),
            lighting: Lighting::default(),
            weather: Weather::default(),
            eval_filter: None,
        }
    }

    pub fn object(&self, track_id: u32) -> Option<&ObjectTrack> {
        self.objects.iter().find(|o| o.track_id == track_id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_count == 0 {
            return Err(Error::invalid("frame_count", "must be positive"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::invalid("fps", "must be positive"));
        }
        self.intrinsics.validate()?;
        if self.camera_poses.len() != self.frame_count {
            return Err(Error::invalid(
                "camera_poses",
                format!("has {} entries but frame_count is {}", self.camera_poses.len(), self.frame_count),
            ));
        }
        if let Some(i) = self.camera_poses.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("camera_poses[{i}]"), "not finite"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for obj in &self.objects {
            let field = |f: &str| format!("objects[track_id={}].{f}", obj.track_id);
            if obj.track_id == 0 || obj.track_id >= PROP_ID_BASE {
                return Err(Error::invalid(
                    field("track_id"),
                    format!("must lie in 1..{PROP_ID_BASE} (0 is background)"),
                ));
            }
            if !seen.insert(obj.track_id) {
                return Err(Error::invalid(field("track_id"), "duplicate track_id"));
            }
            check_extents(&field("extents"), &obj.extents)?;
            check_unit_rgb(&field("albedo"), &obj.albedo)?;
            for (&frame, pose) in &obj.poses {
                if frame >= self.frame_count {
                    return Err(Error::invalid(
                        field("poses"),
                        format!("pose at frame {frame} but frame_count is {}", self.frame_count),
                    ));
                }
                if !pose.is_finite() {
                    return Err(Error::invalid(field("poses"), format!("non-finite pose at frame {frame}")));
                }
            }
        }
        if self.static_props.len() > (PROP_ID_MAX - PROP_ID_BASE + 1) as usize {
            return Err(Error::invalid("static_props", "too many props for the id band"));
        }
        for (i, prop) in self.static_props.iter().enumerate() {
            check_extents(&format!("static_props[{i}].extents"), &prop.extents)?;
            check_unit_rgb(&format!("static_props[{i}].albedo"), &prop.albedo)?;
            if !prop.pose.is_finite() {
                return Err(Error::invalid(format!("static_props[{i}].pose"), "not finite"));
            }
        }
        check_unit_rgb("ground_plane.albedo", &self.ground_plane.albedo)?;
        if !self.ground_plane.height.is_finite() {
            return Err(Error::invalid("ground_plane.height", "not finite"));
        }
        let l = &self.lighting;
        if (l.sun_vec().norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("lighting.sun_direction", "must be a unit vector"));
        }
        if !(l.sun_intensity >= 0.0 && l.sun_intensity.is_finite()) {
            return Err(Error::invalid("lighting.sun_intensity", "must be >= 0"));
        }
        if !(l.ambient_intensity >= 0.0 && l.ambient_intensity.is_finite()) {
            return Err(Error::invalid("lighting.ambient_intensity", "must be >= 0"));
        }
        check_unit_rgb("lighting.sun_color", &l.sun_color)?;
        let w = &self.weather;
        if !(w.fog_beta >= 0.0 && w.fog_beta.is_finite()) {
            return Err(Error::invalid("weather.fog_beta", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&w.rain_intensity) {
            return Err(Error::invalid("weather.rain_intensity", "must lie in [0, 1]"));
        }
        check_unit_rgb("weather.fog_color", &w.fog_color)?;
        if let Some(f) = &self.eval_filter {
            f.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let scene: SceneDescription = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        scene.validate()?;
        Ok(scene)
    }
}

/// Reads and validates a scene file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneDescription> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SceneDescription::from_json(&text, path)
}

pub fn save_scene(scene: &SceneDescription, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    scene.validate()?;
    fs::write(path, scene.to_json()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx_eq(a: &SceneDescription, b: &SceneDescription) -> bool {
        let pose_eq = |p: &Pose, q: &Pose| {
            (p.position - q.position).norm() < 1e-9
                && (p.yaw - q.yaw).abs() < 1e-9
                && (p.pitch - q.pitch).abs() < 1e-9
                && (p.roll - q.roll).abs() < 1e-9
        };
        a.frame_count == b.frame_count
            && a.intrinsics == b.intrinsics
            && a.camera_poses.len() == b.camera_poses.len()
            && a.camera_poses.iter().zip(&b.camera_poses).all(|(p, q)| pose_eq(p, q))
            && a.objects.len() == b.objects.len()
            && a.objects.iter().zip(&b.objects).all(|(o, q)| {
                o.track_id == q.track_id
                    && o.extents == q.extents
                    && o.poses.len() == q.poses.len()
                    && o.poses.iter().zip(&q.poses).all(|((f, p), (g, r))| f == g && pose_eq(p, r))
            })
            && a.lighting == b.lighting
            && a.weather == b.weather
    }

    #[test]
    fn minimal_scene_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("min.scene");
        let s = SceneDescription::minimal();
        save_scene(&s, &path).unwrap();
        let back = load_scene(&path).unwrap();
        assert_eq!(back.frame_count, 1);
        assert!(approx_eq(&s, &back));
    }

    #[test]
    fn pose_beyond_frame_count_names_track() {
        let mut s = SceneDescription::minimal();
        s.frame_count = 50;
        s.camera_poses = vec![Pose::identity(); 50];
        s.objects.push(ObjectTrack {
            track_id: 7,
            extents: [4.0, 1.8, 1.5],
            shape: Shape::Cuboid,
            albedo: [0.5; 3],
            poses: [(99, Pose::identity())].into_iter().collect(),
        });
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("track_id=7"), "{err}");
        assert!(err.contains("99"), "{err}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = SceneDescription::from_json("{\n  \"frame_count\": \"x\"\n}", Path::new("a.scene")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_background_track_id_and_bad_sun() {
        let mut s = SceneDescription::minimal();
        s.objects.push(ObjectTrack {
            track_id: 0,
            extents: [1.0; 3],
            shape: Shape::Cuboid,
            albedo: [0.5; 3],
            poses: BTreeMap::new(),
        });
        assert!(s.validate().is_err());
        let mut s = SceneDescription::minimal();
        s.lighting.sun_direction = [0.0, 2.0, 0.0];
        assert!(matches!(s.validate(), Err(Error::Invalid { field, .. }) if field == "lighting.sun_direction"));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = save_scene(&SceneDescription::minimal(), "/nonexistent-dir/x/y.scene").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn angles_are_degrees_on_disk() {
        let mut s = SceneDescription::minimal();
        s.camera_poses[0].yaw = std::f64::consts::FRAC_PI_2;
        let json = s.to_json();
        assert!(json.contains("\"yaw\": 90.0"), "{json}");
    }
}
