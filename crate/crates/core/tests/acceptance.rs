//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use synthclone::scene::MotionStyle;

fn timed(limit: Duration, check: impl FnOnce() -> Check) -> Check {
    let start = Instant::now();
    let c = check();
    let elapsed = start.elapsed();
    Check::new(
        c.pass && elapsed < limit,
        format!("{} [{:.1} s, limit {} s]", c.detail, elapsed.as_secs_f64(), limit.as_secs()),
    )
}

fn geometry() -> Check {
    match geometry_examples() {
        Ok(()) => Check::new(true, "projection, truncation and IoU examples within tolerance"),
        Err(e) => Check::new(false, e),
    }
}

fn renderer() -> Check {
    let mut worst: f64 = 0.0;
    let (mut wrong, mut compared) = (0, 0);
    for seed in 0..20 {
        let (n, w, bad) = zbuffer_agreement(&random_cuboid_scene(seed));
        compared += n;
        worst = worst.max(w);
        wrong += bad;
    }
    let scene = seed_scene(2, 10, 30, MotionStyle::Urban);
    let (ok, checked) = flow_warp_counts(&scene);
    let flow_rate = ok as f64 / checked as f64;
    let (differing, recoloured) = lighting_invariance(&scene, 4);
    Check::new(
        worst <= 1e-4 && wrong == 0 && flow_rate >= 0.99 && differing == 0,
        format!(
            "z-buffer max err {worst:.2e} m, {wrong} id mismatches over {compared} px; \
             flow warp {:.2}% of {checked}; {differing} GT buffer changes ({recoloured} recoloured)",
            100.0 * flow_rate
        ),
    )
}

/// Frame rate reported by the `render` command.
fn cli_render_fps(scene: &Path, out: &Path, size: Option<[&str; 2]>) -> Option<f64> {
    let mut args = vec!["render", "--scene", s(scene), "--out", s(out)];
    if let Some([w, h]) = size {
        args.extend(["--width", w, "--height", h]);
    }
    let (code, stdout, _) = cli(&args);
    if code != 0 {
        return None;
    }
    let open = stdout.find('(')?;
    let close = stdout[open..].find(" fps)")?;
    stdout[open + 1..open + close].parse().ok()
}

fn throughput(work: &Path) -> Check {
    let scene = work.join("throughput.scene");
    let (code, _, _) = cli(&["gen", "--seed", "1", "--objects", "10", "--frames", "30", "--out", s(&scene)]);
    if code != 0 {
        return Check::new(false, "scene generation failed");
    }
    let half = cli_render_fps(&scene, &work.join("half"), Some(["621", "188"]));
    let full = cli_render_fps(&scene, &work.join("full"), None);
    let fmt = |f: Option<f64>| f.map_or("error".to_owned(), |f| format!("{f:.1} fps"));
    let stretch = if full.is_some_and(|f| f >= 5.0) { "met" } else { "not met" };
    Check::new(
        half.is_some_and(|f| f >= 5.0),
        format!("621x188: {}; 1242x375 stretch: {} ({stretch})", fmt(half), fmt(full)),
    )
}

fn tracker() -> Check {
    let (equal, below) = tracker_optimality(1);
    Check::new(equal >= 190 && below == 0, format!("DP equals exhaustive optimum on {equal}/200, below it on {below}"))
}

fn clear_mot() -> Check {
    let examples = mot_examples();
    let failures = permutation_failures();
    Check::new(
        examples.is_ok() && failures == 0,
        format!(
            "examples: {}; relabelling changed {failures}/50 reports",
            examples.err().unwrap_or_else(|| "exact".into())
        ),
    )
}

fn optimizer() -> Check {
    let (near, smbo, random) = optimizer_benchmark();
    Check::new(
        near >= 18 && smbo >= random,
        format!("{near}/20 seeds within 0.05; median best {smbo:.6} (SMBO) vs {random:.6} (random)"),
    )
}

fn gap_protocol() -> Check {
    let scene = seed_scene(5, 10, 120, MotionStyle::Urban);
    let f = gap_protocol_findings(&scene, 40);
    let most_negative =
        f.recall_deltas.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|(n, _)| n.clone()).unwrap_or_default();
    let deltas: Vec<String> = f.recall_deltas.iter().map(|(n, d)| format!("{n} {:+.3}", d)).collect();
    Check::new(
        f.self_zero
            && f.self_objective_exact
            && f.fog_mota < 0.0
            && f.fog_recall < 0.0
            && most_negative == "fog"
            && f.fog_pair_seconds < 600.0,
        format!(
            "self pair zero={} objective exact={}; fog dMOTA {:+.3} dR {:+.3} in {:.1} s; R deltas: {}",
            f.self_zero,
            f.self_objective_exact,
            f.fog_mota,
            f.fog_recall,
            f.fog_pair_seconds,
            deltas.join(", ")
        ),
    )
}

fn determinism(work: &Path) -> Check {
    let scene = work.join("det.scene");
    let (code, _, _) = cli(&["gen", "--seed", "9", "--objects", "8", "--frames", "40", "--out", s(&scene)]);
    if code != 0 {
        return Check::new(false, "scene generation failed");
    }
    let cfg = work.join("det.json");
    fs::write(&cfg, r#"{"scenes": ["det.scene"], "resolution": [621, 188]}"#).unwrap();
    let runs: Vec<_> = ["1", "1", "3"]
        .iter()
        .enumerate()
        .map(|(i, jobs)| {
            let out = work.join(format!("sweep{i}"));
            let (code, _, err) = cli(&["--jobs", jobs, "sweep", "--config", s(&cfg), "--out", s(&out)]);
            assert_eq!(code, 0, "{err}");
            tree_bytes(&out)
        })
        .collect();
    let reports = runs[0].keys().filter(|p| p.to_string_lossy().contains("reports")).count();
    Check::new(
        runs[0] == runs[1] && runs[0] == runs[2] && reports > 0,
        format!("{} files ({reports} reports) identical across --jobs 1, 1, 3", runs[0].len()),
    )
}

type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Check + 'a>);

fn main() {
    let work = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("1 geometry oracles", Box::new(|| timed(Duration::from_secs(5), geometry))),
        ("2 renderer correctness", Box::new(|| timed(Duration::from_secs(120), renderer))),
        ("3 rendering throughput", Box::new(|| throughput(work.path()))),
        ("4 tracker optimality", Box::new(|| timed(Duration::from_secs(60), tracker))),
        ("5 CLEAR MOT oracle", Box::new(clear_mot)),
        ("6 optimizer benchmark", Box::new(|| timed(Duration::from_secs(30), optimizer))),
        ("7 gap protocol", Box::new(gap_protocol)),
        ("8 end-to-end determinism", Box::new(|| determinism(work.path()))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let c = run();
        if !c.pass {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if c.pass { "PASS" } else { "FAIL" }, c.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
