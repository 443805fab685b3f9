use serde::{Deserialize, Serialize};

use super::{Lighting, SceneDescription};
use crate::{Error, Result};

pub const CANONICAL_FOG_BETA: f64 = 0.03;
pub const CANONICAL_RAIN_INTENSITY: f64 = 0.7;
const CANONICAL_ROTATION_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightingPreset {
    Clone,
    Morning,
    Sunset,
    Overcast,
}

fn sun_from(elevation_deg: f64, azimuth_deg: f64) -> [f64; 3] {
    let (el, az) = (elevation_deg.to_radians(), azimuth_deg.to_radians());
    [el.cos() * az.sin(), el.sin(), el.cos() * az.cos()]
}

impl LightingPreset {
    pub fn lighting(self) -> Lighting {
        let (dir, intensity, color, ambient) = match self {
            LightingPreset::Clone => (sun_from(45.0, 30.0), 0.75, [1.0, 1.0, 1.0], 0.35),
            LightingPreset::Morning => (sun_from(15.0, -60.0), 0.8, [1.0, 0.9, 0.7], 0.3),
            LightingPreset::Sunset => (sun_from(8.0, 120.0), 0.6, [1.0, 0.6, 0.4], 0.25),
            LightingPreset::Overcast => ([0.0, 1.0, 0.0], 0.0, [1.0, 1.0, 1.0], 0.8),
        };
        Lighting {
            sun_direction: dir,
            sun_intensity: intensity,
            sun_color: color,
            ambient_intensity: ambient,
            preset: self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationKind {
    Clone,
    #[serde(rename = "rotate_right_15")]
    RotateRight15,
    #[serde(rename = "rotate_left_15")]
    RotateLeft15,
    Morning,
    Sunset,
    Overcast,
    Fog,
    Rain,
    Custom,
}

impl VariationKind {
    /// The seven canonical variations applied to a clone, in reporting order.
    pub const CANONICAL: [VariationKind; 7] = [
        VariationKind::RotateRight15,
        VariationKind::RotateLeft15,
        VariationKind::Morning,
        VariationKind::Sunset,
        VariationKind::Overcast,
        VariationKind::Fog,
        VariationKind::Rain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariationKind::Clone => "clone",
            VariationKind::RotateRight15 => "rotate_right_15",
            VariationKind::RotateLeft15 => "rotate_left_15",
            VariationKind::Morning => "morning",
            VariationKind::Sunset => "sunset",
            VariationKind::Overcast => "overcast",
            VariationKind::Fog => "fog",
            VariationKind::Rain => "rain",
            VariationKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fog_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rain_intensity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sun_direction: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sun_intensity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sun_color: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient_intensity: Option<f64>,
}

impl VariationOverrides {
    fn has_lighting(&self) -> bool {
        self.sun_direction.is_some()
            || self.sun_intensity.is_some()
            || self.sun_color.is_some()
            || self.ambient_intensity.is_some()
    }

    fn is_empty(&self) -> bool {
        self.rotation_deg.is_none() && self.fog_beta.is_none() && self.rain_intensity.is_none() && !self.has_lighting()
    }

    fn apply_lighting(&self, l: &mut Lighting) {
        if let Some(d) = self.sun_direction {
            l.sun_direction = d;
        }
        if let Some(v) = self.sun_intensity {
            l.sun_intensity = v;
        }
        if let Some(c) = self.sun_color {
            l.sun_color = c;
        }
        if let Some(v) = self.ambient_intensity {
            l.ambient_intensity = v;
        }
    }
}

/// On disk either a bare kind name (`"fog"`) or `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, from = "VariationRepr")]
pub struct VariationSpec {
    pub kind: VariationKind,
    #[serde(default, skip_serializing_if = "VariationOverrides::is_empty")]
    pub params: VariationOverrides,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VariationFields {
    kind: VariationKind,
    #[serde(default)]
    params: VariationOverrides,
}

#[derive(Deserialize)]
#[serde(untagged, expecting = "a variation name or an object with `kind` and optional `params`")]
enum VariationRepr {
    Name(VariationKind),
    Spec(VariationFields),
}

impl From<VariationRepr> for VariationSpec {
    fn from(r: VariationRepr) -> Self {
        match r {
            VariationRepr::Name(kind) => VariationSpec::new(kind),
            VariationRepr::Spec(f) => VariationSpec { kind: f.kind, params: f.params },
        }
    }
}

impl VariationSpec {
    pub fn new(kind: VariationKind) -> Self {
        Self { kind, params: VariationOverrides::default() }
    }

    pub fn clone_variation() -> Self {
        Self::new(VariationKind::Clone)
    }

    /// Directory-friendly label, e.g. `fog` or `custom`.
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn check_applicable(&self) -> Result<()> {
        use VariationKind::*;
        let p = &self.params;
        let allowed = match self.kind {
            Clone => p.is_empty(),
            RotateRight15 | RotateLeft15 => p.fog_beta.is_none() && p.rain_intensity.is_none() && !p.has_lighting(),
            Morning | Sunset | Overcast => {
                p.rotation_deg.is_none() && p.fog_beta.is_none() && p.rain_intensity.is_none()
            }
            Fog => p.rotation_deg.is_none() && p.rain_intensity.is_none() && !p.has_lighting(),
            Rain => p.rotation_deg.is_none() && p.fog_beta.is_none() && !p.has_lighting(),
            Custom => {
                if p.is_empty() {
                    return Err(Error::EmptyCustomVariation);
                }
                true
            }
        };
        if allowed {
            Ok(())
        } else {
            Err(Error::invalid("variation.params", format!("override not applicable to `{}`", self.name())))
        }
    }
}

fn rotate_camera(scene: &mut SceneDescription, degrees: f64) {
    let delta = degrees.to_radians();
    for pose in &mut scene.camera_poses {
        pose.yaw += delta;
    }
}

/// Returns a copy of `scene` with one controlled change applied; everything the
/// variation does not target is left untouched.
pub fn apply_variation(scene: &SceneDescription, v: &VariationSpec) -> Result<SceneDescription> {
    use VariationKind::*;
    v.check_applicable()?;
    let mut out = scene.clone();
    let p = &v.params;
    match v.kind {
        Clone => {}
        RotateRight15 => rotate_camera(&mut out, p.rotation_deg.unwrap_or(CANONICAL_ROTATION_DEG)),
        RotateLeft15 => rotate_camera(&mut out, -p.rotation_deg.unwrap_or(CANONICAL_ROTATION_DEG)),
        Morning | Sunset | Overcast => {
            let preset = match v.kind {
                Morning => LightingPreset::Morning,
                Sunset => LightingPreset::Sunset,
                _ => LightingPreset::Overcast,
            };
            out.lighting = preset.lighting();
            p.apply_lighting(&mut out.lighting);
        }
        Fog => out.weather.fog_beta = p.fog_beta.unwrap_or(CANONICAL_FOG_BETA),
        Rain => out.weather.rain_intensity = p.rain_intensity.unwrap_or(CANONICAL_RAIN_INTENSITY),
        Custom => {
            if let Some(deg) = p.rotation_deg {
                rotate_camera(&mut out, deg);
            }
            if let Some(b) = p.fog_beta {
                out.weather.fog_beta = b;
            }
            if let Some(r) = p.rain_intensity {
                out.weather.rain_intensity = r;
            }
            p.apply_lighting(&mut out.lighting);
        }
    }
    out.validate()?;
    Ok(out)
}
