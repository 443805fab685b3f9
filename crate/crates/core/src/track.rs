//! Min-cost-flow tracking by dynamic programming with successive shortest-path extraction.
//!
//! Each kept detection is a unit-capacity node. A path source → detections → sink is a
//! track; its cost is the entry cost, the detection and transition costs along it and the
//! exit cost. Paths with negative cost are pulled out one at a time, cheapest first.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detsim::Detection;
use crate::geometry::Box2D;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Detections scoring below this are dropped before graph construction.
    pub score_threshold: f64,
    pub entry_cost: f64,
    pub exit_cost: f64,
    /// Largest frame gap bridged by a transition edge.
    pub max_skip: usize,
    /// Affinity multiplier per skipped frame.
    pub skip_decay: f64,
    /// Transitions whose gap-adjusted IoU falls below this are not created.
    pub min_iou: f64,
    pub detection_cost_scale: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            score_threshold: 0.4,
            entry_cost: 1.0,
            exit_cost: 1.0,
            max_skip: 3,
            skip_decay: 0.9,
            min_iou: 0.3,
            detection_cost_scale: 4.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!("tracker.{field}"), msg))
            }
        };
        check((0.0..=1.0).contains(&self.score_threshold), "score_threshold", "must be in [0, 1]")?;
        check(self.entry_cost >= 0.0 && self.entry_cost.is_finite(), "entry_cost", "must be >= 0")?;
        check(self.exit_cost >= 0.0 && self.exit_cost.is_finite(), "exit_cost", "must be >= 0")?;
        check(self.max_skip >= 1, "max_skip", "must be >= 1")?;
        check(self.skip_decay > 0.0 && self.skip_decay <= 1.0, "skip_decay", "must be in (0, 1]")?;
        check(self.min_iou > 0.0 && self.min_iou < 1.0, "min_iou", "must be in (0, 1)")?;
        check(
            self.detection_cost_scale > 0.0 && self.detection_cost_scale.is_finite(),
            "detection_cost_scale",
            "must be > 0",
        )
    }

    pub fn detection_cost(&self, score: f64) -> f64 {
        self.detection_cost_scale * (0.5 - score)
    }
}

pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    a.iou(b)
}

/// `-log(iou * decay^(gap - 1))` when that affinity reaches `min_iou`.
pub fn transition_cost(from: &Detection, to: &Detection, h: &HyperParams) -> Option<f64> {
    let gap = to.frame.checked_sub(from.frame)?;
    if gap == 0 || gap > h.max_skip {
        return None;
    }
    let affinity = iou(&from.bbox, &to.bbox) * h.skip_decay.powi(gap as i32 - 1);
    (affinity >= h.min_iou).then(|| -affinity.ln())
}

/// The tracking network. Source and sink are implicit: every node has an entry and an
/// exit edge.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    /// Kept detections in frame order.
    pub nodes: Vec<Detection>,
    pub detection_costs: Vec<f64>,
    pub entry_cost: f64,
    pub exit_cost: f64,
    /// Outgoing transitions `(to, cost)` per node; targets are always in later frames.
    pub successors: Vec<Vec<(usize, f64)>>,
    /// Incoming transitions `(from, cost)` per node.
    pub predecessors: Vec<Vec<(usize, f64)>>,
}

impl FlowGraph {
    pub fn transition_count(&self) -> usize {
        self.successors.iter().map(Vec::len).sum()
    }

    /// Cost of a path through `nodes` (in order), or `None` if an edge is missing.
    pub fn path_cost(&self, nodes: &[usize]) -> Option<f64> {
        let first = *nodes.first()?;
        let mut cost = self.entry_cost + self.detection_costs[first] + self.exit_cost;
        for w in nodes.windows(2) {
            let (_, c) = self.successors[w[0]].iter().find(|(j, _)| *j == w[1])?;
            cost += c + self.detection_costs[w[1]];
        }
        Some(cost)
    }
}

pub fn build_flow_graph(detections: &[Detection], h: &HyperParams) -> FlowGraph {
    let mut nodes: Vec<Detection> = detections.iter().copied().filter(|d| d.score >= h.score_threshold).collect();
    nodes.sort_by_key(|d| d.frame);
    let n = nodes.len();
    let mut successors = vec![Vec::new(); n];
    let mut predecessors = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let gap = nodes[j].frame - nodes[i].frame;
            if gap > h.max_skip {
                break;
            }
            if let Some(c) = transition_cost(&nodes[i], &nodes[j], h) {
                successors[i].push((j, c));
                predecessors[j].push((i, c));
            }
        }
    }
    FlowGraph {
        detection_costs: nodes.iter().map(|d| h.detection_cost(d.score)).collect(),
        nodes,
        entry_cost: h.entry_cost,
        exit_cost: h.exit_cost,
        successors,
        predecessors,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackBox {
    pub frame: usize,
    #[serde(flatten)]
    pub bbox: Box2D,
    pub score: f64,
    pub interpolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u32,
    pub boxes: Vec<TrackBox>,
}

/// One extracted path before interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackPath {
    pub nodes: Vec<usize>,
    pub cost: f64,
}

#[derive(Clone, Copy)]
struct Label {
    cost: f64,
    start: usize,
    prev: Option<usize>,
}

fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Less => true,
        Ordering::Equal => a.1 < b.1,
        Ordering::Greater => false,
    }
}

/// Cheapest source-to-sink path over the nodes still `alive`; ties go to the path that
/// starts earliest (lowest node index), then ends earliest.
fn best_path(g: &FlowGraph, alive: &[bool]) -> Option<TrackPath> {
    let n = g.nodes.len();
    let mut labels: Vec<Option<Label>> = vec![None; n];
    let mut best: Option<(f64, usize, usize)> = None;
    for j in 0..n {
        if !alive[j] {
            continue;
        }
        let mut label = Label { cost: g.entry_cost + g.detection_costs[j], start: j, prev: None };
        for &(i, c) in &g.predecessors[j] {
            let Some(li) = labels[i] else { continue };
            let cand = li.cost + c + g.detection_costs[j];
            if better((cand, li.start), (label.cost, label.start)) {
                label = Label { cost: cand, start: li.start, prev: Some(i) };
            }
        }
        labels[j] = Some(label);
        let total = label.cost + g.exit_cost;
        if best.is_none_or(|(c, s, _)| better((total, label.start), (c, s))) {
            best = Some((total, label.start, j));
        }
    }
    let (cost, _, end) = best?;
    let mut nodes = vec![end];
    while let Some(p) = labels[*nodes.last().unwrap()].and_then(|l| l.prev) {
        nodes.push(p);
    }
    nodes.reverse();
    Some(TrackPath { nodes, cost })
}

/// Successive shortest-path extraction; returns paths in extraction order.
pub fn extract_paths(g: &FlowGraph) -> Vec<TrackPath> {
    let mut alive = vec![true; g.nodes.len()];
    let mut out = Vec::new();
    while let Some(path) = best_path(g, &alive) {
        if path.cost >= 0.0 {
            break;
        }
        for &i in &path.nodes {
            alive[i] = false;
        }
        out.push(path);
    }
    out
}

/// Linearly fills frame gaps between consecutive boxes.
pub fn interpolate_gaps(boxes: &[TrackBox]) -> Vec<TrackBox> {
    let mut out = Vec::with_capacity(boxes.len());
    for (k, b) in boxes.iter().enumerate() {
        if let Some(prev) = k.checked_sub(1).map(|p| boxes[p]) {
            let gap = b.frame - prev.frame;
            for step in 1..gap {
                let t = step as f64 / gap as f64;
                out.push(TrackBox {
                    frame: prev.frame + step,
                    bbox: prev.bbox.lerp(&b.bbox, t),
                    score: prev.score + (b.score - prev.score) * t,
                    interpolated: true,
                });
            }
        }
        out.push(*b);
    }
    out
}

/// Tracks from the graph, numbered from 1 in order of first frame, gaps interpolated.
pub fn solve_dp_mcf(g: &FlowGraph) -> Vec<Track> {
    let mut paths = extract_paths(g);
    paths.sort_by_key(|p| (g.nodes[p.nodes[0]].frame, p.nodes[0]));
    paths
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let raw: Vec<TrackBox> = p
                .nodes
                .iter()
                .map(|&i| TrackBox {
                    frame: g.nodes[i].frame,
                    bbox: g.nodes[i].bbox,
                    score: g.nodes[i].score,
                    interpolated: false,
                })
                .collect();
            Track { id: k as u32 + 1, boxes: interpolate_gaps(&raw) }
        })
        .collect()
}

pub fn track_detections(detections: &[Detection], h: &HyperParams) -> Vec<Track> {
    solve_dp_mcf(&build_flow_graph(detections, h))
}

/// `frame track_id left top right bottom score interpolated`, sorted by `(frame, track_id)`.
pub fn write_tracks(tracks: &[Track]) -> String {
    let mut rows: Vec<(usize, u32, &TrackBox)> =
        tracks.iter().flat_map(|t| t.boxes.iter().map(move |b| (b.frame, t.id, b))).collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut s = String::new();
    for (frame, id, b) in rows {
        let r = &b.bbox;
        writeln!(
            s,
            "{frame} {id} {:.6} {:.6} {:.6} {:.6} {:.6} {}",
            r.left, r.top, r.right, r.bottom, b.score, b.interpolated as u8
        )
        .unwrap();
    }
    s
}

pub fn parse_tracks(text: &str, path: &Path) -> Result<Vec<Track>> {
    let mut by_id: std::collections::BTreeMap<u32, Vec<TrackBox>> = Default::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, column: 1, message };
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", t.len())));
        }
        let num = |k: usize| t[k].parse::<f64>().map_err(|_| err(format!("bad number {:?}", t[k])));
        let frame = t[0].parse().map_err(|_| err(format!("bad frame {:?}", t[0])))?;
        let id = t[1].parse().map_err(|_| err(format!("bad track id {:?}", t[1])))?;
        by_id.entry(id).or_default().push(TrackBox {
            frame,
            bbox: Box2D::new(num(2)?, num(3)?, num(4)?, num(5)?),
            score: num(6)?,
            interpolated: t[7] == "1",
        });
    }
    Ok(by_id
        .into_iter()
        .map(|(id, mut boxes)| {
            boxes.sort_by_key(|b| b.frame);
            Track { id, boxes }
        })
        .collect())
}
