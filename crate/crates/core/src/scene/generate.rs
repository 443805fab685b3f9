//! Procedural seed scenes, one motion style per kind of real-world driving sequence.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, GroundPlane, Lighting, ObjectTrack, Pose, SceneDescription, Shape, StaticProp, Weather};
use crate::geometry::Vec3;
use crate::{Error, Result};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

const FPS: f64 = 10.0;
const CAMERA_HEIGHT: f64 = 1.65;
const CLEARANCE: f64 = 0.3;
const MAX_YAW_RATE: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MotionStyle {
    /// Crowded street with parked, leading and oncoming cars.
    Urban,
    /// Slow approach to a junction with crossing and turning traffic.
    Intersection,
    /// Fast ego motion with same-direction traffic in adjacent lanes.
    Highway,
    /// Fixed camera watching crossing traffic.
    StaticCamera,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedParams {
    pub n_objects: usize,
    pub frame_count: usize,
    pub style: MotionStyle,
}

/// Ground footprint used for overlap rejection.
#[derive(Debug, Clone, Copy)]
struct Footprint {
    x: f64,
    z: f64,
    yaw: f64,
    half_len: f64,
    half_wid: f64,
}

impl Footprint {
    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.yaw.sin_cos();
        // forward (length) and right (width) directions in the x-z plane
        [(s, c), (c, -s)]
    }

    fn overlaps(&self, other: &Footprint) -> bool {
        let (dx, dz) = (other.x - self.x, other.z - self.z);
        let (a, b) = (self.axes(), other.axes());
        let radius = |f: &Footprint, ax: &[(f64, f64); 2], axis: (f64, f64)| {
            (f.half_len + CLEARANCE) * (ax[0].0 * axis.0 + ax[0].1 * axis.1).abs()
                + (f.half_wid + CLEARANCE) * (ax[1].0 * axis.0 + ax[1].1 * axis.1).abs()
        };
        a.iter().chain(b.iter()).all(|&axis| {
            let d = (dx * axis.0 + dz * axis.1).abs();
            d <= radius(self, &a, axis) + radius(other, &b, axis)
        })
    }
}

/// Constant-speed motion with piecewise-constant yaw rate.
struct Agent {
    x: f64,
    z: f64,
    yaw: f64,
    speed: f64,
    /// `(start_time_s, yaw_rate)` switch points, sorted by time.
    turns: Vec<(f64, f64)>,
}

impl Agent {
    fn straight(x: f64, z: f64, yaw: f64, speed: f64) -> Self {
        Self { x, z, yaw, speed, turns: Vec::new() }
    }

    fn simulate(&self, frames: usize) -> Vec<(f64, f64, f64)> {
        let dt = 1.0 / FPS;
        let (mut x, mut z, mut yaw) = (self.x, self.z, self.yaw);
        let mut out = Vec::with_capacity(frames);
        for f in 0..frames {
            out.push((x, z, yaw));
            let t = f as f64 * dt;
            let rate = self.turns.iter().rev().find(|(start, _)| *start <= t).map_or(0.0, |(_, r)| *r);
            // midpoint integration keeps arcs smooth
            let mid = yaw + 0.5 * rate * dt;
            x += self.speed * mid.sin() * dt;
            z += self.speed * mid.cos() * dt;
            yaw += rate * dt;
        }
        out
    }
}

fn camera_path(style: MotionStyle, frames: usize, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let dt = 1.0 / FPS;
    let sway_amp: f64 = rng.random_range(0.01..0.04);
    let sway_period: f64 = rng.random_range(8.0..14.0);
    let mut pos = Vec3::new(0.0, CAMERA_HEIGHT, 0.0);
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let t = f as f64 * dt;
        let (speed, yaw) = match style {
            MotionStyle::Urban => (4.0, sway_amp * (2.0 * PI * t / sway_period).sin()),
            MotionStyle::Intersection => {
                let stop = 6.0;
                (3.0 * (1.0 - t / stop).max(0.0), 0.0)
            }
            MotionStyle::Highway => (20.0, 0.5 * sway_amp * (2.0 * PI * t / sway_period).sin()),
            MotionStyle::StaticCamera => (0.0, 0.0),
        };
        out.push(Pose::new(pos, yaw, 0.0, 0.0));
        pos.x += speed * yaw.sin() * dt;
        pos.z += speed * yaw.cos() * dt;
    }
    out
}

fn ego_footprints(cams: &[Pose], style: MotionStyle) -> Vec<Footprint> {
    cams.iter()
        .map(|p| {
            let back = if style == MotionStyle::StaticCamera { 0.0 } else { 1.8 };
            Footprint {
                x: p.position.x - back * p.yaw.sin(),
                z: p.position.z - back * p.yaw.cos(),
                yaw: p.yaw,
                half_len: 2.4,
                half_wid: 1.0,
            }
        })
        .collect()
}

/// Street-side props; buildings stay out of the `clear` z band, where cross traffic runs.
fn sample_props(style: MotionStyle, path_len: f64, clear: Option<(f64, f64)>, rng: &mut ChaCha8Rng) -> Vec<StaticProp> {
    let mut props = Vec::new();
    match style {
        MotionStyle::Highway => {
            for side in [-1.0, 1.0] {
                let mut z = rng.random_range(5.0..20.0);
                while z < path_len + 120.0 {
                    let len = rng.random_range(20.0..40.0);
                    props.push(StaticProp {
                        extents: [len, 0.5, 0.9],
                        pose: Pose::at(Vec3::new(side * 8.5, 0.0, z + len / 2.0)),
                        albedo: [0.6, 0.6, 0.62],
                    });
                    z += len + rng.random_range(5.0..30.0);
                }
            }
        }
        _ => {
            for side in [-1.0, 1.0] {
                let mut z = rng.random_range(-5.0..10.0);
                while z < path_len + 90.0 {
                    let len = rng.random_range(8.0..20.0);
                    let wid = rng.random_range(6.0..10.0);
                    let shade = rng.random_range(0.4..0.8);
                    if let Some((lo, hi)) = clear {
                        if z < hi && z + len > lo {
                            z = hi + rng.random_range(0.0..3.0);
                            continue;
                        }
                    }
                    props.push(StaticProp {
                        extents: [len, wid, rng.random_range(6.0..15.0)],
                        pose: Pose::at(Vec3::new(
                            side * (rng.random_range(11.0..14.0) + wid / 2.0),
                            0.0,
                            z + len / 2.0,
                        )),
                        albedo: [shade, shade * 0.95, shade * 0.9],
                    });
                    z += len + rng.random_range(3.0..15.0);
                }
            }
        }
    }
    props
}

fn prop_footprint(p: &StaticProp) -> Footprint {
    Footprint {
        x: p.pose.position.x,
        z: p.pose.position.z,
        yaw: p.pose.yaw,
        half_len: p.extents[0] / 2.0,
        half_wid: p.extents[1] / 2.0,
    }
}

fn sample_agent(style: MotionStyle, cams: &[Pose], rng: &mut ChaCha8Rng) -> Agent {
    let cam0 = cams[0].position;
    let cam_end = cams[cams.len() - 1].position;
    let path_len = cam_end.z - cam0.z;
    let roll: f64 = rng.random();
    match style {
        MotionStyle::Urban => {
            if roll < 0.35 {
                let side = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
                let heading = if rng.random_bool(0.7) { 0.0 } else { PI };
                Agent::straight(
                    side * rng.random_range(5.0..6.5),
                    cam0.z + rng.random_range(6.0..path_len + 45.0),
                    heading + rng.random_range(-0.05..0.05),
                    0.0,
                )
            } else if roll < 0.7 {
                Agent::straight(
                    rng.random_range(-0.3..0.3),
                    cam0.z + rng.random_range(8.0..35.0),
                    0.0,
                    4.0 * rng.random_range(0.8..1.25),
                )
            } else {
                Agent::straight(
                    -3.5 + rng.random_range(-0.3..0.3),
                    cam0.z + rng.random_range(15.0..path_len + 70.0),
                    PI,
                    rng.random_range(3.0..8.0),
                )
            }
        }
        MotionStyle::Intersection | MotionStyle::StaticCamera => {
            let cross_z = if style == MotionStyle::Intersection {
                cam_end.z + rng.random_range(12.0..30.0)
            } else {
                cam0.z + rng.random_range(10.0..40.0)
            };
            let from_left = rng.random_bool(0.5);
            let dir = if from_left { 1.0 } else { -1.0 };
            let speed = rng.random_range(3.0..8.0);
            let mut agent = Agent::straight(-dir * rng.random_range(8.0..25.0), cross_z, dir * FRAC_PI_2, speed);
            if roll < 0.3 {
                let start = rng.random_range(0.5..4.0);
                let rate = rng.random_range(0.2..MAX_YAW_RATE) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let duration = rng.random_range(1.0..3.0);
                agent.turns = vec![(start, rate), (start + duration, 0.0)];
            }
            agent
        }
        MotionStyle::Highway => {
            let lane = [-3.7, 0.0, 3.7][rng.random_range(0..3)];
            let mut agent = Agent::straight(
                lane + rng.random_range(-0.3..0.3),
                cam0.z + rng.random_range(10.0..70.0),
                0.0,
                20.0 * rng.random_range(0.85..1.15),
            );
            if roll < 0.25 {
                // gentle lane change: out and back
                let start = rng.random_range(1.0..6.0);
                let rate = rng.random_range(0.03..0.08) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                agent.turns = vec![(start, rate), (start + 1.0, -rate), (start + 2.0, 0.0)];
            }
            agent
        }
    }
}

fn random_albedo(rng: &mut ChaCha8Rng) -> [f64; 3] {
    const PALETTE: [[f64; 3]; 6] =
        [[0.8, 0.1, 0.1], [0.1, 0.2, 0.7], [0.85, 0.85, 0.85], [0.15, 0.15, 0.15], [0.2, 0.5, 0.25], [0.75, 0.65, 0.2]];
    let base = PALETTE[rng.random_range(0..PALETTE.len())];
    base.map(|c: f64| (c + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0))
}

/// Builds a deterministic scene for `(seed, params)`.
///
/// Objects are placed by rejection sampling: each candidate trajectory is checked
/// against the ego vehicle, the static props and every accepted object at every frame.
pub fn generate_seed_scene(seed: u64, params: &SeedParams) -> Result<SceneDescription> {
    if params.frame_count == 0 {
        return Err(Error::invalid("frame_count", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = params.frame_count;
    let cams = camera_path(params.style, frames, &mut rng);
    let path_len = cams[frames - 1].position.z - cams[0].position.z;
    let clear = match params.style {
        MotionStyle::Intersection => Some((cams[frames - 1].position.z + 6.0, cams[frames - 1].position.z + 36.0)),
        MotionStyle::StaticCamera => Some((cams[0].position.z + 4.0, cams[0].position.z + 46.0)),
        _ => None,
    };
    let props = sample_props(params.style, path_len, clear, &mut rng);

    let ego = ego_footprints(&cams, params.style);
    let static_obstacles: Vec<Footprint> = props.iter().map(prop_footprint).collect();
    let mut placed: Vec<Vec<Footprint>> = Vec::new();
    let mut objects = Vec::with_capacity(params.n_objects);

    for k in 0..params.n_objects {
        let mut accepted = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let extents = [rng.random_range(3.6..4.6), rng.random_range(1.6..1.85), rng.random_range(1.35..1.6)];
            let agent = sample_agent(params.style, &cams, &mut rng);
            let states = agent.simulate(frames);
            let prints: Vec<Footprint> = states
                .iter()
                .map(|&(x, z, yaw)| Footprint { x, z, yaw, half_len: extents[0] / 2.0, half_wid: extents[1] / 2.0 })
                .collect();
            let clash = prints.iter().enumerate().any(|(f, fp)| {
                fp.overlaps(&ego[f])
                    || static_obstacles.iter().any(|o| fp.overlaps(o))
                    || placed.iter().any(|other| fp.overlaps(&other[f]))
            });
            if !clash {
                accepted = Some((extents, states, prints));
                break;
            }
        }
        let Some((extents, states, prints)) = accepted else {
            return Err(Error::InfeasiblePacking {
                object: k,
                n_objects: params.n_objects,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        };
        let poses: BTreeMap<usize, Pose> = states
            .iter()
            .enumerate()
            .map(|(f, &(x, z, yaw))| (f, Pose::new(Vec3::new(x, 0.0, z), yaw, 0.0, 0.0)))
            .collect();
        objects.push(ObjectTrack {
            track_id: k as u32 + 1,
            extents,
            shape: Shape::CarLowpoly,
            albedo: random_albedo(&mut rng),
            poses,
        });
        placed.push(prints);
    }

    let scene = SceneDescription {
        seed,
        frame_count: frames,
        fps: FPS,
        intrinsics: CameraIntrinsics::default(),
        camera_poses: cams,
        objects,
        static_props: props,
        ground_plane: GroundPlane::default(),
        lighting: Lighting::default(),
        weather: Weather::default(),
        eval_filter: None,
    };
    scene.validate()?;
    Ok(scene)
}
