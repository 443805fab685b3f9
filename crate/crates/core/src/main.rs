use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use synthclone::annotate::EvalFilter;
use synthclone::calibrate::Strategy;
use synthclone::detsim::DetectorModel;
use synthclone::experiment::{
    parse_variation, read_json, replay, CalibrationMode, DetectionSource, ExperimentConfig, GenRun, RenderRun,
    RunRecord, TrackEvalRun,
};
use synthclone::scene::MotionStyle;
use synthclone::track::HyperParams;
use synthclone::{Error, Result};

/// Procedural driving-scene clones, ground truth, tracking and gap calibration.
#[derive(Parser)]
#[command(name = "synthclone", version)]
struct Cli {
    /// Worker threads (0 = one per core). Outputs do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seed scene file.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "urban")]
        style: MotionStyle,
        #[arg(long = "objects", default_value_t = 10)]
        n_objects: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render all passes and ground truth of one scene variation.
    Render {
        #[arg(long)]
        scene: PathBuf,
        /// Variation name (`clone`, `fog`, ...) or a JSON variation object.
        #[arg(long, default_value = "clone")]
        variation: String,
        #[command(flatten)]
        resolution: Resolution,
        /// JSON file with evaluation filter thresholds.
        #[arg(long)]
        filter: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track detections and score them against ground truth.
    TrackEval {
        /// Ground-truth label file (its `.meta` sibling is read too).
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, conflicts_with = "detector", required_unless_present = "detector")]
        detections: Option<PathBuf>,
        /// JSON detector model; detections are simulated from the ground truth.
        #[arg(long, requires = "scene")]
        detector: Option<PathBuf>,
        /// Scene the ground truth came from (image size and frame count).
        #[arg(long)]
        scene: Option<PathBuf>,
        /// JSON tracker parameters, e.g. a calibration's `best_params.json`.
        #[arg(long)]
        tracker: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long)]
        frames: Option<usize>,
        #[command(flatten)]
        resolution: Resolution,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every configured variation against the clone under fixed tracker parameters.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Search tracker parameters that minimise the clone-to-variation gap.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
        #[arg(long, value_enum)]
        mode: Option<CalibrationMode>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run a command from its `*.resolved.json` record.
    Replay { record: PathBuf },
}

#[derive(Args)]
struct Resolution {
    #[arg(long, requires = "height")]
    width: Option<usize>,
    #[arg(long, requires = "width")]
    height: Option<usize>,
}

impl Resolution {
    fn get(&self) -> Option<[usize; 2]> {
        Some([self.width?, self.height?])
    }
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output root, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        Ok(cfg)
    }
}

fn record(command: Command) -> Result<Option<RunRecord>> {
    Ok(Some(match command {
        Command::Gen { seed, style, n_objects, frames, out } => {
            RunRecord::Gen(GenRun { seed, style, n_objects, frames, out })
        }
        Command::Render { scene, variation, resolution, filter, out } => RunRecord::Render(RenderRun {
            scene,
            variation: parse_variation(&variation)?,
            filter: filter.map_or_else(|| Ok(EvalFilter::default()), |p| read_json(&p))?,
            resolution: resolution.get(),
            out,
        }),
        Command::TrackEval { gt, detections, detector, scene, tracker, iou, frames, resolution, out } => {
            let detections = match (detections, detector, scene) {
                (Some(p), _, _) => DetectionSource::File(p),
                (None, Some(d), Some(scene)) => {
                    DetectionSource::Simulate { detector: read_json::<DetectorModel>(&d)?, scene }
                }
                _ => return Err(Error::invalid("detections", "give --detections or --detector with --scene")),
            };
            RunRecord::TrackEval(TrackEvalRun {
                gt,
                detections,
                tracker: tracker.map_or_else(|| Ok(HyperParams::default()), |p| read_json(&p))?,
                iou_threshold: iou,
                resolution: resolution.get(),
                frames,
                out,
            })
        }
        Command::Sweep { config } => RunRecord::Sweep(config.load()?),
        Command::Calibrate { config, budget, strategy, mode, seed } => {
            let mut cfg = config.load()?;
            cfg.budget = budget.unwrap_or(cfg.budget);
            cfg.strategy = strategy.unwrap_or(cfg.strategy);
            cfg.mode = mode.unwrap_or(cfg.mode);
            cfg.seed = seed.unwrap_or(cfg.seed);
            RunRecord::Calibrate(cfg)
        }
        Command::Replay { .. } => return Ok(None),
    }))
}

fn run(command: Command) -> Result<String> {
    if let Command::Replay { record } = &command {
        return replay(record);
    }
    record(command)?.expect("replay handled above").execute()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| pool.install(|| run(cli.command))));
    match outcome {
        Ok(Ok(summary)) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
