//! CLEAR MOT scoring with ignore regions: MOTA, MOTP, ID switches, fragmentations,
//! mostly tracked / mostly lost and detection-level precision and recall.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::GtBox2D;
use crate::geometry::Box2D;
use crate::track::Track;
use crate::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
const MOSTLY_TRACKED: f64 = 0.8;
const MOSTLY_LOST: f64 = 0.2;

/// Minimum-cost assignment on a rectangular matrix (Kuhn-Munkres with potentials).
///
/// Returns, for each row, the assigned column (or `None` when there are more rows than columns).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let transposed = rows > cols;
    let (n, m) = if transposed { (cols, rows) } else { (rows, cols) };
    let at = |i: usize, j: usize| if transposed { cost[j][i] } else { cost[i][j] };

    // 1-based potentials; p[j] = row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for (j, &pj) in p.iter().enumerate().skip(1) {
        if pj != 0 {
            let (r, c) = if transposed { (j - 1, pj - 1) } else { (pj - 1, j - 1) };
            out[r] = Some(c);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGt {
    pub id: u32,
    pub bbox: Box2D,
    pub ignore: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHyp {
    pub id: u32,
    pub bbox: Box2D,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatch {
    /// `(gt id, hyp id, iou)`
    pub matches: Vec<(u32, u32, f64)>,
    pub false_positives: Vec<u32>,
    pub misses: Vec<u32>,
    /// Hypotheses swallowed by ignored ground truth.
    pub absorbed: Vec<u32>,
}

fn geometry_order(a: &Box2D, b: &Box2D) -> std::cmp::Ordering {
    a.left
        .total_cmp(&b.left)
        .then(a.top.total_cmp(&b.top))
        .then(a.right.total_cmp(&b.right))
        .then(a.bottom.total_cmp(&b.bottom))
}

/// Correspondences for one frame.
///
/// Prior pairs that still overlap enough are kept; the rest is matched by maximum total
/// IoU; leftover hypotheses over ignored ground truth are dropped (one per ignored box).
pub fn match_frame(gt: &[FrameGt], hyp: &[FrameHyp], prior: &BTreeMap<u32, u32>, iou_threshold: f64) -> FrameMatch {
    let mut gt_open: Vec<&FrameGt> = gt.iter().filter(|g| !g.ignore).collect();
    let mut hyp_open: Vec<&FrameHyp> = hyp.iter().collect();
    hyp_open.sort_by(|a, b| geometry_order(&a.bbox, &b.bbox).then(a.id.cmp(&b.id)));
    let mut out = FrameMatch::default();

    gt_open.retain(|g| {
        let kept = prior.get(&g.id).and_then(|hid| {
            let k = hyp_open.iter().position(|h| h.id == *hid)?;
            let iou = g.bbox.iou(&hyp_open[k].bbox);
            (iou >= iou_threshold).then_some((k, iou))
        });
        match kept {
            Some((k, iou)) => {
                out.matches.push((g.id, hyp_open[k].id, iou));
                hyp_open.remove(k);
                false
            }
            None => true,
        }
    });

    let weights: Vec<Vec<f64>> = gt_open
        .iter()
        .map(|g| {
            hyp_open
                .iter()
                .map(|h| {
                    let iou = g.bbox.iou(&h.bbox);
                    if iou >= iou_threshold {
                        -iou
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let assignment = hungarian(&weights);
    let mut hyp_taken = vec![false; hyp_open.len()];
    for (gi, g) in gt_open.iter().enumerate() {
        match assignment[gi].filter(|&hj| weights[gi][hj] < 0.0) {
            Some(hj) => {
                hyp_taken[hj] = true;
                out.matches.push((g.id, hyp_open[hj].id, -weights[gi][hj]));
            }
            None => out.misses.push(g.id),
        }
    }

    let mut leftovers: Vec<&FrameHyp> =
        hyp_open.iter().zip(&hyp_taken).filter(|(_, t)| !**t).map(|(h, _)| *h).collect();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, g) in gt.iter().enumerate().filter(|(_, g)| g.ignore) {
        for (hi, h) in leftovers.iter().enumerate() {
            let iou = g.bbox.iou(&h.bbox);
            if iou >= iou_threshold {
                candidates.push((iou, gi, hi));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = BTreeSet::new();
    let mut hyp_used = BTreeSet::new();
    for (_, gi, hi) in candidates {
        if !gt_used.contains(&gi) && !hyp_used.contains(&hi) {
            gt_used.insert(gi);
            hyp_used.insert(hi);
        }
    }
    for (hi, h) in leftovers.drain(..).enumerate() {
        if hyp_used.contains(&hi) {
            out.absorbed.push(h.id);
        } else {
            out.false_positives.push(h.id);
        }
    }
    out.matches.sort_by_key(|m| m.0);
    out
}

/// Additive counts from which every ratio is recomputed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tallies {
    pub true_positives: u64,
    pub false_positives: u64,
    pub misses: u64,
    pub id_switches: u64,
    pub fragmentations: u64,
    pub total_gt: u64,
    pub iou_sum: f64,
    pub trajectories: u64,
    pub mostly_tracked: u64,
    pub mostly_lost: u64,
}

impl std::ops::Add for Tallies {
    type Output = Tallies;
    fn add(self, o: Tallies) -> Tallies {
        Tallies {
            true_positives: self.true_positives + o.true_positives,
            false_positives: self.false_positives + o.false_positives,
            misses: self.misses + o.misses,
            id_switches: self.id_switches + o.id_switches,
            fragmentations: self.fragmentations + o.fragmentations,
            total_gt: self.total_gt + o.total_gt,
            iou_sum: self.iou_sum + o.iou_sum,
            trajectories: self.trajectories + o.trajectories,
            mostly_tracked: self.mostly_tracked + o.mostly_tracked,
            mostly_lost: self.mostly_lost + o.mostly_lost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub mota: f64,
    pub motp: f64,
    pub mostly_tracked: f64,
    pub mostly_lost: f64,
    pub id_switches: u64,
    pub fragmentations: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tallies: Tallies,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl MotReport {
    pub fn from_tallies(t: Tallies) -> Self {
        let tp = t.true_positives as f64;
        let errors = (t.misses + t.false_positives + t.id_switches) as f64;
        let precision = ratio(tp, tp + t.false_positives as f64);
        let recall = ratio(tp, tp + t.misses as f64);
        MotReport {
            mota: 1.0 - errors / (t.total_gt.max(1) as f64),
            motp: ratio(t.iou_sum, tp),
            mostly_tracked: ratio(t.mostly_tracked as f64, t.trajectories as f64),
            mostly_lost: ratio(t.mostly_lost as f64, t.trajectories as f64),
            id_switches: t.id_switches,
            fragmentations: t.fragmentations,
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
            tallies: t,
        }
    }

    /// Micro-average: sums the tallies of every report, then recomputes the ratios.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a MotReport>) -> MotReport {
        MotReport::from_tallies(reports.into_iter().fold(Tallies::default(), |acc, r| acc + r.tallies))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-GT-trajectory state over its non-ignored frames.
#[derive(Default)]
struct TrajectoryState {
    frames: u64,
    tracked: u64,
    last_hyp: Option<u32>,
    was_tracked: bool,
    interrupted: bool,
}

/// Scores `hyp` against `gt` over frames `0..frame_count`.
pub fn evaluate(gt: &[GtBox2D], hyp: &[Track], frame_count: usize, iou_threshold: f64) -> Result<MotReport> {
    let mut gt_frames: Vec<Vec<FrameGt>> = vec![Vec::new(); frame_count];
    for g in gt {
        let slot = gt_frames
            .get_mut(g.frame)
            .ok_or_else(|| Error::Mismatch(format!("ground truth frame {} outside 0..{frame_count}", g.frame)))?;
        slot.push(FrameGt { id: g.track_id, bbox: g.bbox, ignore: g.ignore });
    }
    // Internal ids rank tracks by content, so every tie-break is independent of labels.
    let mut ranked: Vec<&Track> = hyp.iter().collect();
    ranked.sort_by(|a, b| {
        let key = |t: &Track| t.boxes.iter().map(|x| (x.frame, x.bbox)).collect::<Vec<_>>();
        let (ka, kb) = (key(a), key(b));
        ka.iter()
            .zip(&kb)
            .map(|(x, y)| x.0.cmp(&y.0).then(geometry_order(&x.1, &y.1)))
            .find(|o| o.is_ne())
            .unwrap_or(ka.len().cmp(&kb.len()))
    });
    let mut hyp_frames: Vec<Vec<FrameHyp>> = vec![Vec::new(); frame_count];
    for (rank, t) in ranked.iter().enumerate() {
        for b in &t.boxes {
            let slot = hyp_frames
                .get_mut(b.frame)
                .ok_or_else(|| Error::Mismatch(format!("hypothesis frame {} outside 0..{frame_count}", b.frame)))?;
            slot.push(FrameHyp { id: rank as u32, bbox: b.bbox });
        }
    }

    let mut tallies = Tallies::default();
    let mut prior: BTreeMap<u32, u32> = BTreeMap::new();
    let mut states: BTreeMap<u32, TrajectoryState> = BTreeMap::new();
    for (g, h) in gt_frames.iter().zip(&hyp_frames) {
        let m = match_frame(g, h, &prior, iou_threshold);
        tallies.true_positives += m.matches.len() as u64;
        tallies.false_positives += m.false_positives.len() as u64;
        tallies.misses += m.misses.len() as u64;
        tallies.total_gt += (m.matches.len() + m.misses.len()) as u64;
        tallies.iou_sum += m.matches.iter().map(|x| x.2).sum::<f64>();

        prior = m.matches.iter().map(|&(gid, hid, _)| (gid, hid)).collect();
        for &(gid, hid, _) in &m.matches {
            let s = states.entry(gid).or_default();
            s.frames += 1;
            s.tracked += 1;
            if s.last_hyp.is_some_and(|last| last != hid) {
                tallies.id_switches += 1;
            }
            if s.interrupted {
                tallies.fragmentations += 1;
                s.interrupted = false;
            }
            s.last_hyp = Some(hid);
            s.was_tracked = true;
        }
        for &gid in &m.misses {
            let s = states.entry(gid).or_default();
            s.frames += 1;
            if s.was_tracked {
                s.interrupted = true;
            }
        }
    }
    for s in states.values() {
        tallies.trajectories += 1;
        let frac = s.tracked as f64 / s.frames as f64;
        if frac >= MOSTLY_TRACKED {
            tallies.mostly_tracked += 1;
        } else if frac <= MOSTLY_LOST {
            tallies.mostly_lost += 1;
        }
    }
    Ok(MotReport::from_tallies(tallies))
}

/// The eight table columns, ratios in `[0, 1]` (or deltas thereof).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mota: f64,
    pub motp: f64,
    pub mt: f64,
    pub ml: f64,
    pub idsw: f64,
    pub frag: f64,
    pub precision: f64,
    pub recall: f64,
}

impl From<&MotReport> for MetricRow {
    fn from(r: &MotReport) -> Self {
        MetricRow {
            mota: r.mota,
            motp: r.motp,
            mt: r.mostly_tracked,
            ml: r.mostly_lost,
            idsw: r.id_switches as f64,
            frag: r.fragmentations as f64,
            precision: r.precision,
            recall: r.recall,
        }
    }
}

impl MetricRow {
    pub const HEADER: [&'static str; 8] = ["MOTA", "MOTP", "MT", "ML", "I", "F", "P", "R"];

    fn values(&self) -> [f64; 8] {
        [self.mota, self.motp, self.mt, self.ml, self.idsw, self.frag, self.precision, self.recall]
    }

    fn from_values(v: [f64; 8]) -> Self {
        MetricRow { mota: v[0], motp: v[1], mt: v[2], ml: v[3], idsw: v[4], frag: v[5], precision: v[6], recall: v[7] }
    }

    /// `self - base`, column by column.
    pub fn delta(&self, base: &MetricRow) -> MetricRow {
        let (a, b) = (self.values(), base.values());
        MetricRow::from_values(std::array::from_fn(|i| a[i] - b[i]))
    }
}

const COUNT_COLUMNS: [bool; 8] = [false, false, false, false, true, true, false, false];

/// Aligned plain-text table: a label column, then `MOTA MOTP MT ML I F P R`.
///
/// Ratios print as percentages with two decimals, counts as integers. Deltas carry a sign.
pub fn write_table(rows: &[(String, MetricRow)], signed: bool) -> String {
    let label_width = rows.iter().map(|r| r.0.len()).chain(["sequence".len()]).max().unwrap();
    let mut s = format!("{:<label_width$}", "sequence");
    for h in MetricRow::HEADER {
        write!(s, " {h:>9}").unwrap();
    }
    s.push('\n');
    for (label, row) in rows {
        write!(s, "{label:<label_width$}").unwrap();
        for (v, is_count) in row.values().iter().zip(COUNT_COLUMNS) {
            let cell = match (is_count, signed) {
                (true, false) => format!("{:.0}", v),
                (true, true) => format!("{:+.0}", v),
                (false, false) => format!("{:.2}", v * 100.0),
                (false, true) => format!("{:+.2}", v * 100.0),
            };
            write!(s, " {cell:>9}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Reads a table written by [`write_table`]; labels must not contain whitespace.
pub fn parse_table(text: &str, path: &Path) -> Result<Vec<(String, MetricRow)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, column: 1, message };
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty table".into()))?;
    let cols: Vec<&str> = header.split_whitespace().skip(1).collect();
    if cols != MetricRow::HEADER {
        return Err(err(1, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 9 {
            return Err(err(i + 1, format!("expected 9 fields, found {}", t.len())));
        }
        let mut v = [0.0; 8];
        for k in 0..8 {
            let x: f64 = t[k + 1].parse().map_err(|_| err(i + 1, format!("bad number {:?}", t[k + 1])))?;
            v[k] = if COUNT_COLUMNS[k] { x } else { x / 100.0 };
        }
        out.push((t[0].to_owned(), MetricRow::from_values(v)));
    }
    Ok(out)
}
