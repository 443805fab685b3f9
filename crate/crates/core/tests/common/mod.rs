//! Independent oracles and criterion checks shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synthclone::annotate::{project_box, truncation_rate, EvalFilter, GtBox2D, Object3D};
use synthclone::calibrate::{optimize, run_gap_protocol, ParamKind, ParamSpace, ParamSpec, Strategy};
use synthclone::detsim::{Detection, DetectorModel};
use synthclone::geometry::{Box2D, Vec3};
use synthclone::motmetrics::{evaluate, MetricRow, MotReport};
use synthclone::pipeline::{prepare_sequence, Sequence};
use synthclone::render::{compute_camera_matrices, render_frame, FrameBuffers, Z_FAR, Z_NEAR};
use synthclone::scene::{
    apply_variation, generate_seed_scene, CameraIntrinsics, GroundPlane, MotionStyle, ObjectTrack, Pose,
    SceneDescription, SeedParams, Shape, VariationKind, VariationSpec, PROP_ID_BASE,
};
use synthclone::track::{build_flow_graph, extract_paths, HyperParams, Track, TrackBox};

/// Outcome of one acceptance criterion: pass flag plus a one-line measurement.
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Check { pass, detail: detail.into() }
    }
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_synthclone"))
}

/// Runs the CLI; returns `(exit code, stdout, stderr)`.
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(bin()).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn seed_scene(seed: u64, n_objects: usize, frames: usize, style: MotionStyle) -> SceneDescription {
    let params = SeedParams { n_objects, frame_count: frames, style };
    generate_seed_scene(seed, &params).unwrap()
}

// ---------------------------------------------------------------- geometry oracles

/// Reference IoU from the box definition.
pub fn iou_ref(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    inter / (area(a) + area(b) - inter)
}

pub fn k(fx: f64, cx: f64, cy: f64, width: usize, height: usize) -> CameraIntrinsics {
    CameraIntrinsics { fx, fy: fx, cx, cy, width, height }
}

/// Pinhole projection of the 8 corners of a world-axis-aligned box, camera at the origin
/// looking down +z with y up in the world (image v grows downwards).
pub fn corner_hull(center: [f64; 3], half: [f64; 3], fx: f64, cx: f64, cy: f64) -> [f64; 4] {
    let mut hull = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let (x, y, z) = (center[0] + sx * half[0], center[1] + sy * half[1], center[2] + sz * half[2]);
                let (u, v) = (fx * x / z + cx, -fx * y / z + cy);
                hull = [hull[0].min(u), hull[1].min(v), hull[2].max(u), hull[3].max(v)];
            }
        }
    }
    hull
}

/// Fraction of points sampled uniformly in an axis-aligned world box that project inside
/// the image with depth in `[Z_NEAR, Z_FAR]` (camera at the origin, identity pose).
pub fn monte_carlo_inside(lo: [f64; 3], hi: [f64; 3], kk: &CameraIntrinsics, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside = 0usize;
    for _ in 0..samples {
        let p: [f64; 3] = std::array::from_fn(|i| rng.random_range(lo[i]..hi[i]));
        let (x, y, z) = (p[0], -p[1], p[2]);
        if !(Z_NEAR..=Z_FAR).contains(&z) {
            continue;
        }
        let (u, v) = (kk.fx * x / z + kk.cx, kk.fy * y / z + kk.cy);
        if (0.0..=kk.width as f64).contains(&u) && (0.0..=kk.height as f64).contains(&v) {
            inside += 1;
        }
    }
    inside as f64 / samples as f64
}

/// The analytic projection, truncation and IoU examples; returns the first mismatch.
pub fn geometry_examples() -> Result<(), String> {
    let close = |name: &str, got: f64, want: f64, tol: f64| {
        if (got - want).abs() <= tol {
            Ok(())
        } else {
            Err(format!("{name}: got {got}, want {want}"))
        }
    };
    let cam = compute_camera_matrices(&Pose::identity(), &k(100.0, 50.0, 50.0, 100, 100));
    let cube = [2.0, 2.0, 2.0];

    let b = project_box(&Pose::at(Vec3::new(0.0, -1.0, 10.0)), cube, &cam).ok_or("centred cube not projected")?;
    let want = corner_hull([0.0, 0.0, 10.0], [1.0; 3], 100.0, 50.0, 50.0);
    for (got, want) in [b.left, b.top, b.right, b.bottom].into_iter().zip(want) {
        close("centred cube", got, want, 1e-6)?;
    }
    close("centred cube left", b.left, 50.0 - 100.0 / 9.0, 1e-6)?;

    if project_box(&Pose::at(Vec3::new(0.0, -1.0, -10.0)), cube, &cam).is_some() {
        return Err("box behind the camera was projected".into());
    }
    let edge = project_box(&Pose::at(Vec3::new(-5.0, -1.0, 10.0)), cube, &cam).ok_or("edge cube not projected")?;
    if edge.left != 0.0 {
        return Err(format!("straddling box left = {}", edge.left));
    }

    close("inside", truncation_rate(&Pose::at(Vec3::new(0.0, -1.0, 10.0)), cube, &cam), 0.0, 1e-6)?;
    close("outside", truncation_rate(&Pose::at(Vec3::new(0.0, -1.0, -10.0)), cube, &cam), 1.0, 1e-6)?;
    // cx = 0 puts the left frustum plane at x = 0
    let kk = k(100.0, 0.0, 50.0, 100, 100);
    let half_cam = compute_camera_matrices(&Pose::identity(), &kk);
    let half = truncation_rate(&Pose::at(Vec3::new(0.0, -1.0, 10.0)), cube, &half_cam);
    close("bisected", half, 0.5, 1e-6)?;
    let mc = 1.0 - monte_carlo_inside([-1.0, -1.0, 9.0], [1.0, 1.0, 11.0], &kk, 1_000_000, 5);
    close("bisected vs monte carlo", half, mc, 2e-3)?;

    let a = Box2D::new(0.0, 0.0, 10.0, 10.0);
    close("identical", a.iou(&a), 1.0, 1e-6)?;
    close("disjoint", a.iou(&Box2D::new(20.0, 0.0, 30.0, 10.0)), 0.0, 1e-6)?;
    close("half shift", a.iou(&Box2D::new(5.0, 0.0, 15.0, 10.0)), 1.0 / 3.0, 1e-6)?;
    close(
        "oracle",
        a.iou(&Box2D::new(3.0, 2.0, 9.0, 17.0)),
        iou_ref([0.0, 0.0, 10.0, 10.0], [3.0, 2.0, 9.0, 17.0]),
        1e-12,
    )?;
    Ok(())
}

// ---------------------------------------------------------------- render oracles

/// Ray through the centre of pixel `(u, v)`: world origin and a world direction whose
/// camera-space z component is 1, so the ray parameter equals camera depth.
pub fn pixel_ray(scene: &SceneDescription, t: usize, u: usize, v: usize) -> (Vec3, Vec3) {
    let pose = &scene.camera_poses[t];
    let kk = &scene.intrinsics;
    let x = (u as f64 + 0.5 - kk.cx) / kk.fx;
    let y = (v as f64 + 0.5 - kk.cy) / kk.fy;
    // camera y points down, world y up
    (pose.position, pose.rotation() * Vec3::new(x, -y, 1.0))
}

/// Entry parameter of a ray into a posed box `x in [-w/2, w/2], y in [0, h], z in [-l/2, l/2]`
/// shifted by `offset`, via the slab method in the box frame.
pub fn ray_box(origin: &Vec3, dir: &Vec3, pose: &Pose, offset: Vec3, extents: [f64; 3]) -> Option<f64> {
    let rt = pose.rotation().transpose();
    let o = rt * (origin - pose.position) - offset;
    let d = rt * dir;
    let [l, w, h] = extents;
    let lo = [-w / 2.0, 0.0, -l / 2.0];
    let hi = [w / 2.0, h, l / 2.0];
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i] < lo[i] || o[i] > hi[i] {
                return None;
            }
            continue;
        }
        let (a, b) = ((lo[i] - o[i]) / d[i], (hi[i] - o[i]) / d[i]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1 && t0 >= Z_NEAR).then_some(t0)
}

/// Nearest surface along the ray of pixel `(u, v)`: `(depth, instance id)`, sky is `(inf, 0)`.
pub fn ray_cast(scene: &SceneDescription, t: usize, u: usize, v: usize) -> (f64, u16) {
    let (o, d) = pixel_ray(scene, t, u, v);
    let mut best = (f64::INFINITY, 0u16);
    let g = scene.ground_plane.height;
    if d.y != 0.0 {
        let tg = (g - o.y) / d.y;
        if (Z_NEAR..=Z_FAR).contains(&tg) {
            best = (tg, 0);
        }
    }
    for (i, p) in scene.static_props.iter().enumerate() {
        if let Some(tb) = ray_box(&o, &d, &p.pose, Vec3::zeros(), p.extents) {
            if tb < best.0 {
                best = (tb, (PROP_ID_BASE as usize + i) as u16);
            }
        }
    }
    for obj in &scene.objects {
        let Some(pose) = obj.pose_at(t) else { continue };
        for (offset, ext) in obj.shape.parts(obj.extents) {
            if let Some(tb) = ray_box(&o, &d, pose, offset, ext) {
                if tb < best.0 {
                    best = (tb, obj.track_id as u16);
                }
            }
        }
    }
    best
}

/// Random scene with up to three cuboids in front of a slightly tilted camera.
pub fn random_cuboid_scene(seed: u64) -> SceneDescription {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SceneDescription::minimal();
    s.intrinsics = k(120.0, 80.0, 60.0, 160, 120);
    s.camera_poses = vec![Pose::new(
        Vec3::new(0.0, 1.5, 0.0),
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.1..0.1),
        rng.random_range(-0.05..0.05),
    )];
    s.ground_plane = GroundPlane { height: 0.0, ..GroundPlane::default() };
    let n = rng.random_range(1..=3);
    for id in 1..=n {
        let pose = Pose::new(
            Vec3::new(rng.random_range(-6.0..6.0), rng.random_range(0.0..1.0), rng.random_range(6.0..30.0)),
            rng.random_range(-3.0..3.0),
            0.0,
            0.0,
        );
        s.objects.push(ObjectTrack {
            track_id: id,
            extents: [rng.random_range(1.0..5.0), rng.random_range(1.0..3.0), rng.random_range(1.0..3.0)],
            shape: if rng.random_bool(0.5) { Shape::Cuboid } else { Shape::CarLowpoly },
            albedo: [0.5, 0.4, 0.3],
            poses: BTreeMap::from([(0, pose)]),
        });
    }
    s.validate().unwrap();
    s
}

/// Pixels whose 3x3 neighbourhood all share one oracle id, paired with the oracle result.
pub fn interior_oracle(scene: &SceneDescription) -> Vec<((usize, usize), (f64, u16))> {
    let kk = scene.intrinsics;
    let ids: Vec<(f64, u16)> = (0..kk.height)
        .flat_map(|v| (0..kk.width).map(move |u| (u, v)))
        .map(|(u, v)| ray_cast(scene, 0, u, v))
        .collect();
    let mut out = Vec::new();
    for v in 1..kk.height - 1 {
        for u in 1..kk.width - 1 {
            let id = ids[v * kk.width + u].1;
            let same = (v - 1..=v + 1).all(|vv| (u - 1..=u + 1).all(|uu| ids[vv * kk.width + uu].1 == id));
            if same {
                out.push(((u, v), ids[v * kk.width + u]));
            }
        }
    }
    out
}

/// Agreement of the renderer with the ray caster on off-silhouette pixels:
/// `(pixels compared, worst depth error, id mismatches)`.
pub fn zbuffer_agreement(scene: &SceneDescription) -> (usize, f64, usize) {
    let fb = render_frame(scene, 0).unwrap();
    let mut worst: f64 = 0.0;
    let mut wrong = 0;
    let oracle = interior_oracle(scene);
    for &((u, v), (depth, id)) in &oracle {
        let i = v * fb.width + u;
        if fb.instance[i] != id {
            wrong += 1;
        }
        let got = fb.depth[i] as f64;
        let err = if depth.is_infinite() && got.is_infinite() { 0.0 } else { (got - depth).abs() };
        worst = worst.max(err);
    }
    (oracle.len(), worst, wrong)
}

/// Flow-warp consistency over `t -> t+1` pairs: `(consistent, checked)` over valid,
/// non-occluded pixels; occlusion uses 0.1 m depth slack.
pub fn flow_warp_counts(scene: &SceneDescription) -> (usize, usize) {
    let frames: Vec<FrameBuffers> = (0..scene.frame_count).map(|t| render_frame(scene, t).unwrap()).collect();
    let (mut ok, mut checked) = (0, 0);
    for t in 0..scene.frame_count - 1 {
        let (a, b) = (&frames[t], &frames[t + 1]);
        for v in 0..a.height {
            for u in 0..a.width {
                let i = v * a.width + u;
                if !a.flow_valid[i] {
                    continue;
                }
                let x = u as f64 + 0.5 + a.flow[i][0] as f64;
                let y = v as f64 + 0.5 + a.flow[i][1] as f64;
                let (qu, qv) = (x.floor(), y.floor());
                if qu < 0.0 || qv < 0.0 || qu >= a.width as f64 || qv >= a.height as f64 {
                    continue;
                }
                let j = qv as usize * a.width + qu as usize;
                if (b.depth[j] as f64) < a.flow_depth[i] as f64 - 0.1 {
                    continue;
                }
                checked += 1;
                if b.instance[j] == a.instance[i] {
                    ok += 1;
                }
            }
        }
    }
    (ok, checked)
}

/// Whether depth, instance and flow buffers are bitwise identical.
pub fn gt_buffers_equal(a: &FrameBuffers, b: &FrameBuffers) -> bool {
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let flow_bits = |v: &[[f32; 2]]| v.iter().map(|x| [x[0].to_bits(), x[1].to_bits()]).collect::<Vec<_>>();
    bits(&a.depth) == bits(&b.depth)
        && a.instance == b.instance
        && flow_bits(&a.flow) == flow_bits(&b.flow)
        && a.flow_valid == b.flow_valid
        && bits(&a.flow_depth) == bits(&b.flow_depth)
}

pub const COLOR_ONLY_VARIATIONS: [VariationKind; 5] =
    [VariationKind::Morning, VariationKind::Sunset, VariationKind::Overcast, VariationKind::Fog, VariationKind::Rain];

/// Number of (variation, frame) renders whose ground-truth buffers differ from the clone's,
/// plus the number of renders whose colour did change.
pub fn lighting_invariance(scene: &SceneDescription, frames: usize) -> (usize, usize) {
    let (mut differing, mut recoloured) = (0, 0);
    for t in 0..frames {
        let base = render_frame(scene, t).unwrap();
        for kind in COLOR_ONLY_VARIATIONS {
            let varied = apply_variation(scene, &VariationSpec::new(kind)).unwrap();
            let fb = render_frame(&varied, t).unwrap();
            if !gt_buffers_equal(&base, &fb) {
                differing += 1;
            }
            if fb.color != base.color {
                recoloured += 1;
            }
        }
    }
    (differing, recoloured)
}

// ---------------------------------------------------------------- tracker oracle

pub fn random_detections(rng: &mut impl Rng) -> Vec<Detection> {
    let n = rng.random_range(1..=8);
    let objects: Vec<f64> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(0.0..40.0)).collect();
    (0..n)
        .map(|_| {
            let o = objects[rng.random_range(0..objects.len())];
            Detection {
                frame: rng.random_range(0..4),
                bbox: Box2D::new(o + rng.random_range(-3.0..3.0), 0.0, o + 10.0 + rng.random_range(-3.0..3.0), 10.0),
                score: rng.random_range(0.3..1.0),
                origin: None,
            }
        })
        .collect()
}

/// Minimum total cost over every set of vertex-disjoint source-to-sink paths, with edge
/// costs computed from scratch.
pub fn exhaustive_track_cost(dets: &[Detection], h: &HyperParams) -> f64 {
    let mut nodes: Vec<&Detection> = dets.iter().filter(|d| d.score >= h.score_threshold).collect();
    nodes.sort_by_key(|d| d.frame);
    let n = nodes.len();
    let edges: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let gap = nodes[j].frame as i64 - nodes[i].frame as i64;
                    if gap < 1 || gap > h.max_skip as i64 {
                        return None;
                    }
                    let (a, b) = (&nodes[i].bbox, &nodes[j].bbox);
                    let s = iou_ref([a.left, a.top, a.right, a.bottom], [b.left, b.top, b.right, b.bottom])
                        * h.skip_decay.powi(gap as i32 - 1);
                    (s >= h.min_iou).then(|| -s.ln())
                })
                .collect()
        })
        .collect();
    let mut search = PathSetSearch {
        edges,
        node_cost: nodes.iter().map(|d| h.detection_cost_scale * (0.5 - d.score)).collect(),
        entry: h.entry_cost,
        exit: h.exit_cost,
        used: vec![false; n],
        has_succ: vec![false; n],
        best: 0.0,
    };
    search.visit(0, 0.0);
    search.best
}

struct PathSetSearch {
    edges: Vec<Vec<Option<f64>>>,
    node_cost: Vec<f64>,
    entry: f64,
    exit: f64,
    used: Vec<bool>,
    has_succ: Vec<bool>,
    best: f64,
}

impl PathSetSearch {
    /// Each node is either unused, a path start, or the successor of an earlier path end.
    fn visit(&mut self, j: usize, acc: f64) {
        let n = self.node_cost.len();
        if j == n {
            let ends = (0..n).filter(|&i| self.used[i] && !self.has_succ[i]).count();
            self.best = self.best.min(acc + ends as f64 * self.exit);
            return;
        }
        self.visit(j + 1, acc);
        self.used[j] = true;
        self.visit(j + 1, acc + self.entry + self.node_cost[j]);
        for i in 0..j {
            if let (true, false, Some(c)) = (self.used[i], self.has_succ[i], self.edges[i][j]) {
                self.has_succ[i] = true;
                self.visit(j + 1, acc + c + self.node_cost[j]);
                self.has_succ[i] = false;
            }
        }
        self.used[j] = false;
    }
}

/// `(instances where DP equals the optimum, instances where DP is below it)` over 200 cases.
pub fn tracker_optimality(seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = HyperParams::default();
    let (mut equal, mut below) = (0, 0);
    for _ in 0..200 {
        let dets = random_detections(&mut rng);
        let dp: f64 = extract_paths(&build_flow_graph(&dets, &h)).iter().map(|p| p.cost).sum();
        let opt = exhaustive_track_cost(&dets, &h);
        if dp < opt - 1e-9 {
            below += 1;
        } else if dp <= opt + 1e-9 {
            equal += 1;
        }
    }
    (equal, below)
}

// ---------------------------------------------------------------- metric fixtures

pub fn gt_box(frame: usize, id: u32, bbox: Box2D) -> GtBox2D {
    GtBox2D {
        frame,
        track_id: id,
        bbox,
        truncation: 0.0,
        occupancy: 1.0,
        visibility: 1.0,
        ignore: false,
        object: Object3D { alpha: 0.0, dimensions: [1.5, 1.6, 4.0], location: [0.0, 1.5, 10.0], rotation_y: 0.0 },
    }
}

pub fn track(id: u32, boxes: impl IntoIterator<Item = (usize, Box2D)>) -> Track {
    Track {
        id,
        boxes: boxes
            .into_iter()
            .map(|(frame, bbox)| TrackBox { frame, bbox, score: 1.0, interpolated: false })
            .collect(),
    }
}

/// The three hand-checked evaluation examples; returns a description of the first mismatch.
pub fn mot_examples() -> Result<(), String> {
    let b = Box2D::new(10.0, 10.0, 60.0, 50.0);
    let gt: Vec<GtBox2D> = (0..10).map(|f| gt_box(f, 1, b)).collect();

    let perfect = evaluate(&gt, &[track(7, (0..10).map(|f| (f, b)))], 10, 0.5).map_err(|e| e.to_string())?;
    let ok = perfect.mota == 1.0
        && perfect.motp == 1.0
        && perfect.mostly_tracked == 1.0
        && perfect.id_switches == 0
        && perfect.fragmentations == 0;
    if !ok {
        return Err(format!("perfect tracker: {perfect:?}"));
    }

    let empty = evaluate(&gt, &[], 10, 0.5).map_err(|e| e.to_string())?;
    if !(empty.mota == 0.0 && empty.recall == 0.0 && empty.mostly_lost == 1.0) {
        return Err(format!("empty hypotheses: {empty:?}"));
    }

    let handover = [track(1, (0..5).map(|f| (f, b))), track(2, (5..10).map(|f| (f, b)))];
    let r = evaluate(&gt, &handover, 10, 0.5).map_err(|e| e.to_string())?;
    let ok = (r.mota - 0.9).abs() < 1e-12 && r.id_switches == 1 && r.fragmentations == 0 && r.mostly_tracked == 1.0;
    if !ok {
        return Err(format!("id switch: {r:?}"));
    }
    Ok(())
}

/// Random ground truth and noisy, sometimes swapped hypotheses.
pub fn random_mot_sequence(seed: u64) -> (Vec<GtBox2D>, Vec<Track>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = rng.random_range(5..20);
    let n_gt = rng.random_range(1..6);
    let mut gt = Vec::new();
    let mut hyp: BTreeMap<u32, Vec<(usize, Box2D)>> = BTreeMap::new();
    for id in 1..=n_gt {
        let x0 = rng.random_range(0.0..200.0);
        let start = rng.random_range(0..frames);
        let end = rng.random_range(start..frames);
        for f in start..=end {
            let x = x0 + 3.0 * f as f64;
            let b = Box2D::new(x, 20.0, x + 40.0, 60.0);
            let mut g = gt_box(f, id, b);
            g.ignore = rng.random_bool(0.1);
            gt.push(g);
            if rng.random_bool(0.85) {
                let j = rng.random_range(-6.0..6.0);
                let hid = if rng.random_bool(0.1) { rng.random_range(1..=n_gt + 2) } else { id };
                hyp.entry(hid).or_default().push((f, Box2D::new(x + j, 20.0, x + 40.0 + j, 60.0)));
            }
        }
    }
    for _ in 0..rng.random_range(0..4) {
        let f = rng.random_range(0..frames);
        let x = rng.random_range(0.0..300.0);
        hyp.entry(100 + f as u32).or_default().push((f, Box2D::new(x, 100.0, x + 30.0, 130.0)));
    }
    let tracks: Vec<Track> = hyp
        .into_iter()
        .map(|(id, mut boxes)| {
            boxes.sort_by_key(|b| b.0);
            boxes.dedup_by_key(|b| b.0);
            track(id, boxes)
        })
        .collect();
    (gt, tracks, frames)
}

/// Sequences (out of 50) whose report changes when hypothesis ids are permuted.
pub fn permutation_failures() -> usize {
    let mut failures = 0;
    for seed in 0..50 {
        let (gt, tracks, frames) = random_mot_sequence(seed);
        let base = evaluate(&gt, &tracks, frames, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut ids: Vec<u32> = (1..=tracks.len() as u32).map(|i| i * 7 + 3).collect();
        for i in (1..ids.len()).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let mut relabelled: Vec<Track> =
            tracks.iter().zip(&ids).map(|(t, &id)| Track { id, boxes: t.boxes.clone() }).collect();
        relabelled.reverse();
        if evaluate(&gt, &relabelled, frames, 0.5).unwrap() != base {
            failures += 1;
        }
    }
    failures
}

// ---------------------------------------------------------------- optimizer benchmark

pub fn one_dim_space() -> ParamSpace {
    ParamSpace { params: vec![ParamSpec { name: "min_iou".into(), kind: ParamKind::Linear { min: 0.0, max: 1.0 } }] }
}

/// `(seeds with SMBO best x within 0.05 of 0.3, median SMBO best, median random best)`.
pub fn optimizer_benchmark() -> (usize, f64, f64) {
    let f = |x: &[f64]| Ok(-(x[0] - 0.3).powi(2));
    let (mut near, mut smbo, mut random) = (0, Vec::new(), Vec::new());
    for seed in 0..20 {
        let a = optimize(&one_dim_space(), 60, Strategy::Smbo, seed, f).unwrap();
        let b = optimize(&one_dim_space(), 60, Strategy::Random, seed, f).unwrap();
        if (a.best[0] - 0.3).abs() <= 0.05 {
            near += 1;
        }
        smbo.push(a.best_objective);
        random.push(b.best_objective);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[9] + v[10]) / 2.0
    };
    (near, median(&mut smbo), median(&mut random))
}

// ---------------------------------------------------------------- gap protocol

pub fn sequence_for(scene: &SceneDescription, kind: VariationKind, detector: &DetectorModel) -> Sequence {
    let varied = apply_variation(scene, &VariationSpec::new(kind)).unwrap();
    prepare_sequence(kind.name(), &varied, &EvalFilter::default(), detector).unwrap()
}

pub struct GapFindings {
    pub self_zero: bool,
    pub self_objective_exact: bool,
    pub fog_mota: f64,
    pub fog_recall: f64,
    /// R delta per canonical variation, from one shared parameter vector.
    pub recall_deltas: Vec<(String, f64)>,
    pub fog_pair_seconds: f64,
}

pub fn gap_protocol_findings(scene: &SceneDescription, budget: usize) -> GapFindings {
    let detector = DetectorModel::default();
    let space = ParamSpace::default();
    let base = HyperParams::default();
    let start = Instant::now();
    let clone = sequence_for(scene, VariationKind::Clone, &detector);
    let clone_seconds = start.elapsed().as_secs_f64();

    let self_report =
        run_gap_protocol(&[(clone.clone(), clone.clone())], &base, &space, budget, Strategy::Smbo, 3, 0.5).unwrap();
    let p = &self_report.pairs[0];
    let self_zero = p.delta == MetricRow::default() && self_report.aggregate_delta == MetricRow::default();
    let self_objective_exact = self_report.objective == p.a.mota + p.b.mota;

    let start = Instant::now();
    let fog = sequence_for(scene, VariationKind::Fog, &detector);
    let fog_report = run_gap_protocol(&[(clone.clone(), fog)], &base, &space, budget, Strategy::Smbo, 3, 0.5).unwrap();
    let fog_pair_seconds = clone_seconds + start.elapsed().as_secs_f64();

    let pairs: Vec<(Sequence, Sequence)> =
        VariationKind::CANONICAL.iter().map(|&kind| (clone.clone(), sequence_for(scene, kind, &detector))).collect();
    let global = run_gap_protocol(&pairs, &base, &space, budget, Strategy::Smbo, 3, 0.5).unwrap();
    let recall_deltas = global.pairs.iter().map(|p| (p.name_b.clone(), p.delta.recall)).collect();

    GapFindings {
        self_zero,
        self_objective_exact,
        fog_mota: fog_report.pairs[0].delta.mota,
        fog_recall: fog_report.pairs[0].delta.recall,
        recall_deltas,
        fog_pair_seconds,
    }
}

pub fn report_rows(reports: &[(String, MotReport)]) -> Vec<(String, MetricRow)> {
    reports.iter().map(|(n, r)| (n.clone(), MetricRow::from(r))).collect()
}

// ---------------------------------------------------------------- files

/// Every regular file under `root`, as relative path -> bytes, skipping `*.resolved.json`.
pub fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".resolved.json") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
