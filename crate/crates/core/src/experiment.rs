//! Experiment configuration and the commands behind the CLI.
//!
//! Every command is described by a [`RunRecord`]; running one writes the record, with all
//! defaults expanded and paths made absolute, next to its outputs so it can be replayed.
//!
//! Output layout: `{out}/{scene}/{variation}/{pass,gt,det,tracks,reports}/...`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{read_gt_files, EvalFilter};
use crate::calibrate::{run_gap_protocol, GapReport, ParamSpace, Strategy};
use crate::detsim::{read_detections, simulate_detections, write_detections, DetectorModel};
use crate::motmetrics::{evaluate, write_table, MetricRow, MotReport};
use crate::pipeline::{create_dir, evaluate_sequence, prepare_sequence, render_to_dir, Sequence};
use crate::scene::{
    apply_variation, generate_seed_scene, load_scene, save_scene, MotionStyle, SceneDescription, SeedParams,
    VariationKind, VariationSpec,
};
use crate::track::{track_detections, write_tracks, HyperParams};
use crate::{Error, Result};

/// Whether calibration searches one parameter vector per sequence pair or one for all pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    #[default]
    PerPair,
    Global,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_variations() -> Vec<VariationSpec> {
    std::iter::once(VariationKind::Clone).chain(VariationKind::CANONICAL).map(VariationSpec::new).collect()
}

fn default_budget() -> usize {
    40
}

fn default_iou() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scene files; relative paths are taken from the config file's directory.
    pub scenes: Vec<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_variations")]
    pub variations: Vec<VariationSpec>,
    #[serde(default)]
    pub detector: DetectorModel,
    /// Fixed tracker parameters for sweeps; the base that calibration overwrites.
    #[serde(default)]
    pub tracker: HyperParams,
    #[serde(default)]
    pub param_space: ParamSpace,
    #[serde(default)]
    pub filter: EvalFilter,
    /// Optimizer seed.
    #[serde(default)]
    pub seed: u64,
    /// `[width, height]` overriding every scene's camera.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub mode: CalibrationMode,
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Reads a JSON file into `T`.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, path)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    write_text(path, &s)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)))
    }
}

/// Directory label of a scene: its file stem.
pub fn scene_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scene".to_owned(), |s| s.to_string_lossy().into_owned())
}

fn check_resolution(resolution: Option<[usize; 2]>) -> Result<()> {
    match resolution {
        Some([w, h]) if w == 0 || h == 0 => Err(Error::invalid("resolution", "width and height must be positive")),
        _ => Ok(()),
    }
}

fn check_iou(iou: f64) -> Result<()> {
    if iou > 0.0 && iou <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("iou_threshold", "must be in (0, 1]"))
    }
}

/// Loads a scene and applies a resolution override.
pub fn load_scene_at(path: &Path, resolution: Option<[usize; 2]>) -> Result<SceneDescription> {
    let mut scene = load_scene(path)?;
    if let Some([w, h]) = resolution {
        scene.intrinsics = scene.intrinsics.resized(w, h);
        scene.validate()?;
    }
    Ok(scene)
}

impl ExperimentConfig {
    pub fn new(scenes: Vec<PathBuf>) -> Self {
        Self {
            scenes,
            output: default_output(),
            variations: default_variations(),
            detector: DetectorModel::default(),
            tracker: HyperParams::default(),
            param_space: ParamSpace::default(),
            filter: EvalFilter::default(),
            seed: 0,
            resolution: None,
            budget: default_budget(),
            strategy: Strategy::default(),
            mode: CalibrationMode::default(),
            iou_threshold: default_iou(),
        }
    }

    /// Parses, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = read_json(path)?;
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = absolute(parent)?;
        for s in &mut cfg.scenes {
            *s = base.join(&*s);
        }
        cfg.output = base.join(&cfg.output);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() {
            return Err(Error::invalid("scenes", "at least one scene is required"));
        }
        for s in &self.scenes {
            require_file(s)?;
        }
        let mut names: Vec<String> = self.scenes.iter().map(|s| scene_name(s)).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("scenes", "scene file stems must be distinct"));
        }
        if self.variations.is_empty() {
            return Err(Error::invalid("variations", "at least one variation is required"));
        }
        for (i, v) in self.variations.iter().enumerate() {
            if self.variations[..i].iter().any(|w| w.name() == v.name()) {
                return Err(Error::invalid("variations", format!("`{}` listed twice", v.name())));
            }
            apply_variation(&SceneDescription::minimal(), v)?;
        }
        self.detector.validate()?;
        self.tracker.validate()?;
        self.param_space.validate()?;
        self.filter.validate()?;
        check_resolution(self.resolution)?;
        check_iou(self.iou_threshold)?;
        if self.budget == 0 {
            return Err(Error::invalid("budget", "must be at least 1"));
        }
        Ok(())
    }

    fn absolutized(&self) -> Result<Self> {
        let mut cfg = self.clone();
        for s in &mut cfg.scenes {
            *s = absolute(s)?;
        }
        cfg.output = absolute(&cfg.output)?;
        Ok(cfg)
    }

    /// Configured variations with the clone first, added if missing.
    fn variations_with_clone(&self) -> Vec<VariationSpec> {
        let clone = VariationSpec::clone_variation();
        std::iter::once(clone.clone()).chain(self.variations.iter().filter(|v| **v != clone).cloned()).collect()
    }

    fn sequence(&self, scene_path: &Path, variation: &VariationSpec) -> Result<Sequence> {
        let scene = load_scene_at(scene_path, self.resolution)?;
        let varied = apply_variation(&scene, variation)?;
        let name = format!("{}/{}", scene_name(scene_path), variation.name());
        prepare_sequence(name, &varied, &self.filter, &self.detector)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenRun {
    pub seed: u64,
    pub style: MotionStyle,
    pub n_objects: usize,
    pub frames: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRun {
    pub scene: PathBuf,
    pub variation: VariationSpec,
    #[serde(default)]
    pub filter: EvalFilter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
    /// Output root; files go under `{out}/{scene}/{variation}/`.
    pub out: PathBuf,
}

/// Where detections come from: a file, or simulation from the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectionSource {
    File(PathBuf),
    /// The scene supplies the image size and frame count.
    Simulate {
        detector: DetectorModel,
        scene: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackEvalRun {
    /// Label file; its `.meta` sibling must exist.
    pub gt: PathBuf,
    pub detections: DetectionSource,
    #[serde(default)]
    pub tracker: HyperParams,
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
    /// Frame count when no scene is given; otherwise inferred from the inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunRecord {
    Gen(GenRun),
    Render(RenderRun),
    TrackEval(TrackEvalRun),
    Sweep(ExperimentConfig),
    Calibrate(ExperimentConfig),
}

impl RunRecord {
    /// Same run with every path absolute, so the record no longer depends on the working directory.
    pub fn resolved(&self) -> Result<RunRecord> {
        Ok(match self {
            RunRecord::Gen(r) => RunRecord::Gen(GenRun { out: absolute(&r.out)?, ..r.clone() }),
            RunRecord::Render(r) => {
                RunRecord::Render(RenderRun { scene: absolute(&r.scene)?, out: absolute(&r.out)?, ..r.clone() })
            }
            RunRecord::TrackEval(r) => RunRecord::TrackEval(TrackEvalRun {
                gt: absolute(&r.gt)?,
                detections: match &r.detections {
                    DetectionSource::File(p) => DetectionSource::File(absolute(p)?),
                    DetectionSource::Simulate { detector, scene } => {
                        DetectionSource::Simulate { detector: *detector, scene: absolute(scene)? }
                    }
                },
                out: absolute(&r.out)?,
                ..r.clone()
            }),
            RunRecord::Sweep(c) => RunRecord::Sweep(c.absolutized()?),
            RunRecord::Calibrate(c) => RunRecord::Calibrate(c.absolutized()?),
        })
    }

    /// Runs the command and returns the summary printed by the CLI.
    pub fn execute(&self) -> Result<String> {
        let record = self.resolved()?;
        match &record {
            RunRecord::Gen(r) => run_gen(r, &record),
            RunRecord::Render(r) => run_render(r, &record),
            RunRecord::TrackEval(r) => run_track_eval(r, &record),
            RunRecord::Sweep(c) => run_sweep(c, &record),
            RunRecord::Calibrate(c) => run_calibrate(c, &record),
        }
    }
}

/// Replays a run from a record written by a previous invocation.
pub fn replay(path: &Path) -> Result<String> {
    let record: RunRecord = read_json(path)?;
    record.execute()
}

fn run_gen(r: &GenRun, record: &RunRecord) -> Result<String> {
    let params = SeedParams { n_objects: r.n_objects, frame_count: r.frames, style: r.style };
    let scene = generate_seed_scene(r.seed, &params)?;
    if let Some(dir) = r.out.parent() {
        create_dir(dir)?;
    }
    save_scene(&scene, &r.out)?;
    write_json(&r.out.with_extension("gen.resolved.json"), record)?;
    Ok(format!("wrote {} ({} frames, {} objects)\n", r.out.display(), scene.frame_count, scene.objects.len()))
}

fn run_render(r: &RenderRun, record: &RunRecord) -> Result<String> {
    check_resolution(r.resolution)?;
    r.filter.validate()?;
    let scene = apply_variation(&load_scene_at(&r.scene, r.resolution)?, &r.variation)?;
    let dir = r.out.join(scene_name(&r.scene)).join(r.variation.name());
    let summary = render_to_dir(&scene, &r.filter, &dir)?;
    write_json(&dir.join("render.resolved.json"), record)?;
    Ok(format!(
        "rendered {} frames at {}x{} in {:.3} s ({:.2} fps) -> {}\n",
        summary.frames,
        scene.intrinsics.width,
        scene.intrinsics.height,
        summary.seconds,
        summary.fps(),
        dir.display()
    ))
}

fn run_track_eval(r: &TrackEvalRun, record: &RunRecord) -> Result<String> {
    r.tracker.validate()?;
    check_iou(r.iou_threshold)?;
    check_resolution(r.resolution)?;
    let gt = read_gt_files(&r.gt)?;
    let (detections, scene_frames) = match &r.detections {
        DetectionSource::File(p) => (read_detections(p)?, None),
        DetectionSource::Simulate { detector, scene } => {
            detector.validate()?;
            let scene = load_scene_at(scene, r.resolution)?;
            let dets = simulate_detections(&gt, detector, &scene.intrinsics, scene.frame_count);
            write_text(&r.out.join("det").join("det.txt"), &write_detections(&dets))?;
            (dets, Some(scene.frame_count))
        }
    };
    let inferred = gt.iter().map(|g| g.frame + 1).chain(detections.iter().map(|d| d.frame + 1)).max().unwrap_or(0);
    let frame_count = scene_frames.or(r.frames).unwrap_or(inferred);
    let tracks = track_detections(&detections, &r.tracker);
    let report = evaluate(&gt, &tracks, frame_count, r.iou_threshold)?;
    write_text(&r.out.join("tracks").join("tracks.txt"), &write_tracks(&tracks))?;
    let table = write_table(&[("sequence".to_owned(), MetricRow::from(&report))], false);
    write_text(&r.out.join("reports").join("report.json"), &(report.to_json() + "\n"))?;
    write_text(&r.out.join("reports").join("report.txt"), &table)?;
    write_json(&r.out.join("track_eval.resolved.json"), record)?;
    Ok(table)
}

/// Per-variation reports of one scene under fixed tracker parameters.
pub fn sweep_scene(cfg: &ExperimentConfig, scene_path: &Path) -> Result<Vec<(String, MotReport)>> {
    let name = scene_name(scene_path);
    let variations = cfg.variations_with_clone();
    variations
        .par_iter()
        .map(|v| {
            let seq = cfg.sequence(scene_path, v)?;
            let (tracks, report) = evaluate_sequence(&seq, &cfg.tracker, cfg.iou_threshold)?;
            let dir = cfg.output.join(&name).join(v.name());
            write_text(&dir.join("det").join("det.txt"), &write_detections(&seq.detections))?;
            write_text(&dir.join("tracks").join("tracks.txt"), &write_tracks(&tracks))?;
            write_text(&dir.join("reports").join("report.json"), &(report.to_json() + "\n"))?;
            Ok((v.name().to_owned(), report))
        })
        .collect()
}

/// Rows of `reports` as signed deltas against the first (clone) row.
pub fn delta_rows(reports: &[(String, MotReport)]) -> Vec<(String, MetricRow)> {
    let base = MetricRow::from(&reports[0].1);
    reports.iter().map(|(n, r)| (n.clone(), MetricRow::from(r).delta(&base))).collect()
}

fn run_sweep(cfg: &ExperimentConfig, record: &RunRecord) -> Result<String> {
    cfg.validate()?;
    let mut summary = String::new();
    for scene_path in &cfg.scenes {
        let name = scene_name(scene_path);
        let reports = sweep_scene(cfg, scene_path)?;
        let absolute_rows: Vec<(String, MetricRow)> =
            reports.iter().map(|(n, r)| (n.clone(), MetricRow::from(r))).collect();
        let deltas = write_table(&delta_rows(&reports), true);
        let dir = cfg.output.join(&name).join("reports");
        write_text(&dir.join("sweep.txt"), &deltas)?;
        write_text(&dir.join("sweep_absolute.txt"), &write_table(&absolute_rows, false))?;
        writeln!(summary, "{name}\n{deltas}").unwrap();
    }
    write_json(&cfg.output.join("sweep.resolved.json"), record)?;
    Ok(summary)
}

/// `(clone, variation)` sequence pairs for every scene and configured non-clone variation.
pub fn calibration_pairs(cfg: &ExperimentConfig) -> Result<Vec<(Sequence, Sequence)>> {
    let mut keys: Vec<(usize, VariationSpec)> = Vec::new();
    for si in 0..cfg.scenes.len() {
        for v in cfg.variations_with_clone() {
            keys.push((si, v));
        }
    }
    let sequences: Vec<Sequence> =
        keys.par_iter().map(|(si, v)| cfg.sequence(&cfg.scenes[*si], v)).collect::<Result<_>>()?;
    let by_key: BTreeMap<(usize, &str), &Sequence> =
        keys.iter().zip(&sequences).map(|((si, v), s)| ((*si, v.name()), s)).collect();
    // the clone is only paired with itself when nothing else is configured
    let clone = VariationSpec::clone_variation();
    let mut targets: Vec<&VariationSpec> = cfg.variations.iter().filter(|v| **v != clone).collect();
    if targets.is_empty() {
        targets.push(&clone);
    }
    let mut pairs = Vec::new();
    for si in 0..cfg.scenes.len() {
        for v in &targets {
            pairs.push((by_key[&(si, "clone")].clone(), by_key[&(si, v.name())].clone()));
        }
    }
    Ok(pairs)
}

fn write_gap_report(dir: &Path, report: &GapReport) -> Result<()> {
    write_text(&dir.join("report.txt"), &report.to_text())?;
    write_text(&dir.join("history.csv"), &report.history_csv())?;
    write_json(&dir.join("best_params.json"), &report.params)?;
    write_json(&dir.join("report.json"), report)
}

/// Runs calibration in the configured mode; one report per pair, or a single global one.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<Vec<GapReport>> {
    cfg.validate()?;
    let pairs = calibration_pairs(cfg)?;
    let run = |p: &[(Sequence, Sequence)]| {
        run_gap_protocol(p, &cfg.tracker, &cfg.param_space, cfg.budget, cfg.strategy, cfg.seed, cfg.iou_threshold)
    };
    match cfg.mode {
        CalibrationMode::Global => Ok(vec![run(&pairs)?]),
        CalibrationMode::PerPair => pairs.chunks(1).map(run).collect(),
    }
}

fn run_calibrate(cfg: &ExperimentConfig, record: &RunRecord) -> Result<String> {
    let reports = calibrate(cfg)?;
    let dir = cfg.output.join("calibrate");
    let mut summary = String::new();
    match cfg.mode {
        CalibrationMode::Global => {
            write_gap_report(&dir, &reports[0])?;
            summary.push_str(&reports[0].to_text());
        }
        CalibrationMode::PerPair => {
            for r in &reports {
                let p = &r.pairs[0];
                let label = format!("{}_{}", p.name_a, p.name_b).replace('/', "_");
                write_gap_report(&dir.join(&label), r)?;
                writeln!(summary, "# {} vs {}\n{}", p.name_a, p.name_b, r.to_text()).unwrap();
            }
            write_text(&dir.join("report.txt"), &summary)?;
        }
    }
    write_json(&dir.join("calibrate.resolved.json"), record)?;
    Ok(summary)
}

/// Parses a variation given as a kind name (`fog`) or as a JSON object.
pub fn parse_variation(text: &str) -> Result<VariationSpec> {
    let path = Path::new("<variation>");
    let spec = if text.trim_start().starts_with('{') {
        parse_json(text, path)?
    } else {
        VariationSpec::new(parse_json(&format!("\"{}\"", text.trim()), path)?)
    };
    apply_variation(&SceneDescription::minimal(), &spec)?;
    Ok(spec)
}
