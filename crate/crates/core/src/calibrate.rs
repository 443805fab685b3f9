//! Paired real/clone calibration: the gap objective, a budgeted hyperparameter search
//! (random or tree-structured Parzen estimator) and the protocol tying them to the pipeline.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::motmetrics::{write_table, MetricRow, MotReport};
use crate::pipeline::{evaluate_sequence, Sequence};
use crate::streams::stream;
use crate::track::HyperParams;
use crate::{Error, Result};

/// Guard added to the mean absolute deviation in the gap objective's denominator.
pub const GAP_EPSILON: f64 = 1e-3;
pub const GAP_FORMULA: &str = "gap-v1: sum(MOTA_A + MOTA_B) - sum|MOTA_A - MOTA_B| / (1e-3 + D), \
D = mean over {MOTP, MT, ML, IDSW/GT, FRAG/GT, P, R} of mean_pairs |m_A - m_B|";

const ROLE_RANDOM: u64 = 1;
const ROLE_TPE: u64 = 2;
const TPE_CANDIDATES: usize = 24;
const TPE_GOOD_FRACTION: f64 = 0.25;
const TPE_MIN_BANDWIDTH: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Linear { min: f64, max: f64 },
    Log { min: f64, max: f64 },
    Integer { min: i64, max: i64 },
    Categorical { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl ParamSpec {
    /// Maps a unit-interval coordinate onto this parameter's domain.
    pub fn decode(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            ParamKind::Linear { min, max } => min + u * (max - min),
            ParamKind::Log { min, max } => (min.ln() + u * (max.ln() - min.ln())).exp(),
            ParamKind::Integer { min, max } => {
                let span = (max - min + 1) as f64;
                (*min + ((u * span).floor() as i64).min(max - min)) as f64
            }
            ParamKind::Categorical { values } => {
                values[((u * values.len() as f64).floor() as usize).min(values.len() - 1)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub params: Vec<ParamSpec>,
}

const TRACKER_FIELDS: [&str; 7] =
    ["score_threshold", "entry_cost", "exit_cost", "max_skip", "skip_decay", "min_iou", "detection_cost_scale"];

impl Default for ParamSpace {
    fn default() -> Self {
        let p = |name: &str, kind| ParamSpec { name: name.to_owned(), kind };
        ParamSpace {
            params: vec![
                p("score_threshold", ParamKind::Linear { min: 0.0, max: 1.0 }),
                p("entry_cost", ParamKind::Log { min: 1e-2, max: 10.0 }),
                p("exit_cost", ParamKind::Log { min: 1e-2, max: 10.0 }),
                p("max_skip", ParamKind::Integer { min: 1, max: 5 }),
                p("skip_decay", ParamKind::Linear { min: 0.5, max: 1.0 }),
                p("min_iou", ParamKind::Linear { min: 0.1, max: 0.7 }),
                p("detection_cost_scale", ParamKind::Log { min: 0.1, max: 10.0 }),
            ],
        }
    }
}

impl ParamSpace {
    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::invalid("param_space", "no parameters"));
        }
        for (i, p) in self.params.iter().enumerate() {
            let field = format!("param_space.{}", p.name);
            if !TRACKER_FIELDS.contains(&p.name.as_str()) {
                return Err(Error::invalid(field, "not a tracker hyperparameter"));
            }
            if self.params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::invalid(field, "listed twice"));
            }
            let ok = match &p.kind {
                ParamKind::Linear { min, max } => min.is_finite() && max.is_finite() && min <= max,
                ParamKind::Log { min, max } => *min > 0.0 && max.is_finite() && min <= max,
                ParamKind::Integer { min, max } => min <= max,
                ParamKind::Categorical { values } => !values.is_empty() && values.iter().all(|v| v.is_finite()),
            };
            if !ok {
                return Err(Error::invalid(field, "empty or malformed bounds"));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.params.len()
    }

    pub fn decode(&self, unit: &[f64]) -> Vec<f64> {
        self.params.iter().zip(unit).map(|(p, &u)| p.decode(u)).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    /// `base` with every parameter in the space overwritten by `values`.
    pub fn apply(&self, base: &HyperParams, values: &[f64]) -> HyperParams {
        let mut h = *base;
        for (p, &v) in self.params.iter().zip(values) {
            match p.name.as_str() {
                "score_threshold" => h.score_threshold = v,
                "entry_cost" => h.entry_cost = v,
                "exit_cost" => h.exit_cost = v,
                "max_skip" => h.max_skip = v.round().max(1.0) as usize,
                "skip_decay" => h.skip_decay = v,
                "min_iou" => h.min_iou = v,
                "detection_cost_scale" => h.detection_cost_scale = v,
                _ => {}
            }
        }
        h
    }

    pub fn format(&self, values: &[f64]) -> String {
        let parts: Vec<String> = self.params.iter().zip(values).map(|(p, v)| format!("{}={v}", p.name)).collect();
        format!("{{{}}}", parts.join(", "))
    }
}

/// Paired-report objective: joint MOTA minus the MOTA gap scaled by the typical gap of
/// the other metrics. Counts are normalized by the number of ground-truth boxes.
pub fn gap_objective(pairs: &[(MotReport, MotReport)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("pairs", "gap objective needs at least one pair"));
    }
    let normalized = |r: &MotReport| {
        let gt = r.tallies.total_gt.max(1) as f64;
        [
            r.motp,
            r.mostly_tracked,
            r.mostly_lost,
            r.id_switches as f64 / gt,
            r.fragmentations as f64 / gt,
            r.precision,
            r.recall,
        ]
    };
    let n = pairs.len() as f64;
    let mut mad = [0.0; 7];
    let mut joint = 0.0;
    let mut gap = 0.0;
    for (a, b) in pairs {
        joint += a.mota + b.mota;
        gap += (a.mota - b.mota).abs();
        let (ma, mb) = (normalized(a), normalized(b));
        for k in 0..7 {
            mad[k] += (ma[k] - mb[k]).abs() / n;
        }
    }
    let d = mad.iter().sum::<f64>() / mad.len() as f64;
    Ok(joint - gap / (GAP_EPSILON + d))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    #[default]
    Smbo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best: Vec<f64>,
    pub best_objective: f64,
    pub history: Vec<Trial>,
}

fn random_unit(seed: u64, dims: usize, iteration: usize) -> Vec<f64> {
    let mut rng = stream(seed, &[ROLE_RANDOM, iteration as u64]);
    (0..dims).map(|_| rng.random::<f64>()).collect()
}

/// One-dimensional adaptive Parzen density on `[0, 1]`: one Gaussian kernel per point,
/// each as wide as the larger gap to its sorted neighbours, plus a uniform prior component.
struct Parzen {
    points: Vec<f64>,
    bandwidths: Vec<f64>,
}

impl Parzen {
    fn fit(mut points: Vec<f64>) -> Self {
        points.sort_by(f64::total_cmp);
        let n = points.len();
        let min_bw = (1.0 / (n as f64 + 1.0).min(100.0)).max(TPE_MIN_BANDWIDTH);
        let bandwidths = (0..n)
            .map(|i| {
                let left = if i == 0 { 0.0 } else { points[i - 1] };
                let right = if i + 1 == n { 1.0 } else { points[i + 1] };
                (points[i] - left).max(right - points[i]).clamp(min_bw, 1.0)
            })
            .collect();
        Parzen { points, bandwidths }
    }

    fn pdf(&self, x: f64) -> f64 {
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let kernels: f64 = self
            .points
            .iter()
            .zip(&self.bandwidths)
            .map(|(p, h)| norm / h * (-0.5 * ((x - p) / h).powi(2)).exp())
            .sum();
        (kernels + 1.0) / (self.points.len() as f64 + 1.0)
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let k = rng.random_range(0..=self.points.len());
        if k == self.points.len() {
            return rng.random();
        }
        let x = Normal::new(self.points[k], self.bandwidths[k]).unwrap().sample(rng);
        x.clamp(0.0, 1.0)
    }
}

fn tpe_proposal(history: &[(Vec<f64>, f64)], dims: usize, seed: u64, iteration: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| history[b].1.total_cmp(&history[a].1).then(a.cmp(&b)));
    let n_good = ((history.len() as f64 * TPE_GOOD_FRACTION).ceil() as usize).clamp(1, history.len() - 1);
    let (good, bad) = order.split_at(n_good);
    let fit = |idx: &[usize], d: usize| Parzen::fit(idx.iter().map(|&i| history[i].0[d]).collect());
    let models: Vec<(Parzen, Parzen)> = (0..dims).map(|d| (fit(good, d), fit(bad, d))).collect();
    let mut rng = stream(seed, &[ROLE_TPE, iteration as u64]);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..TPE_CANDIDATES {
        let x: Vec<f64> = models.iter().map(|(l, _)| l.sample(&mut rng)).collect();
        let score: f64 = models.iter().zip(&x).map(|((l, g), &v)| l.pdf(v).ln() - g.pdf(v).ln()).sum();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, x));
        }
    }
    best.unwrap().1
}

/// Maximizes `objective` over `space` within `budget` evaluations.
///
/// Both strategies share the same random stream for their initial points, so a search
/// with a smaller budget is a prefix of one with a larger budget.
pub fn optimize<F>(
    space: &ParamSpace,
    budget: usize,
    strategy: Strategy,
    seed: u64,
    mut objective: F,
) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if budget == 0 {
        return Err(Error::invalid("budget", "must be at least 1"));
    }
    let dims = space.dims();
    let startup = match strategy {
        Strategy::Random => budget,
        Strategy::Smbo => budget.min((budget / 5).max(10)),
    };
    let mut unit_history: Vec<(Vec<f64>, f64)> = Vec::with_capacity(budget);
    let mut history = Vec::with_capacity(budget);
    let mut best: Option<(usize, f64)> = None;
    for it in 0..budget {
        let unit = if it < startup || unit_history.len() < 2 {
            random_unit(seed, dims, it)
        } else {
            tpe_proposal(&unit_history, dims, seed, it)
        };
        let params = space.decode(&unit);
        let value =
            objective(&params).map_err(|e| Error::Objective { params: space.format(&params), source: Box::new(e) })?;
        let value = if value.is_nan() { f64::NEG_INFINITY } else { value };
        if best.is_none_or(|(_, b)| value > b) {
            best = Some((it, value));
        }
        unit_history.push((unit, value));
        history.push(Trial { params, objective: value });
    }
    let (bi, best_objective) = best.unwrap();
    Ok(OptimizeResult { best: history[bi].params.clone(), best_objective, history })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub name_a: String,
    pub name_b: String,
    pub a: MotReport,
    pub b: MotReport,
    /// `b - a` per table column.
    pub delta: MetricRow,
}

impl PairReport {
    pub fn new(name_a: String, name_b: String, a: MotReport, b: MotReport) -> Self {
        let delta = MetricRow::from(&b).delta(&MetricRow::from(&a));
        PairReport { name_a, name_b, a, b, delta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub formula: String,
    pub objective: f64,
    pub params: HyperParams,
    pub pairs: Vec<PairReport>,
    /// `b - a` over micro-aggregated reports of every pair.
    pub aggregate_delta: MetricRow,
    pub param_names: Vec<String>,
    pub history: Vec<Trial>,
}

impl GapReport {
    /// Paired table rows followed by the aggregate delta, objective and parameters.
    pub fn to_text(&self) -> String {
        let mut rows = Vec::new();
        for p in &self.pairs {
            rows.push((p.name_a.clone(), MetricRow::from(&p.a)));
            rows.push((p.name_b.clone(), MetricRow::from(&p.b)));
        }
        let mut s = write_table(&rows, false);
        s.push('\n');
        let deltas: Vec<(String, MetricRow)> = self
            .pairs
            .iter()
            .map(|p| (format!("{}-{}", p.name_b, p.name_a), p.delta))
            .chain([("aggregate".to_owned(), self.aggregate_delta)])
            .collect();
        s.push_str(&write_table(&deltas, true));
        writeln!(s, "\nobjective {:.6}", self.objective).unwrap();
        writeln!(s, "formula {}", self.formula).unwrap();
        writeln!(s, "params {}", serde_json::to_string(&self.params).unwrap()).unwrap();
        s
    }

    /// `iteration,<param names>,objective`
    pub fn history_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["iteration".to_owned()];
        header.extend(self.param_names.iter().cloned());
        header.push("objective".to_owned());
        w.write_record(&header).unwrap();
        for (i, t) in self.history.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(t.params.iter().map(|v| v.to_string()));
            rec.push(t.objective.to_string());
            w.write_record(&rec).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Evaluation of one hyperparameter vector over every pair.
pub fn evaluate_pairs(
    pairs: &[(Sequence, Sequence)],
    h: &HyperParams,
    iou_threshold: f64,
) -> Result<Vec<(MotReport, MotReport)>> {
    use rayon::prelude::*;
    pairs
        .par_iter()
        .map(|(a, b)| Ok((evaluate_sequence(a, h, iou_threshold)?.1, evaluate_sequence(b, h, iou_threshold)?.1)))
        .collect()
}

/// Searches for one hyperparameter vector shared by every pair and reports at the optimum.
pub fn run_gap_protocol(
    pairs: &[(Sequence, Sequence)],
    base: &HyperParams,
    space: &ParamSpace,
    budget: usize,
    strategy: Strategy,
    seed: u64,
    iou_threshold: f64,
) -> Result<GapReport> {
    space.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("pairs", "at least one sequence pair is required"));
    }
    let result = optimize(space, budget, strategy, seed, |values| {
        let h = space.apply(base, values);
        h.validate()?;
        gap_objective(&evaluate_pairs(pairs, &h, iou_threshold)?)
    })?;
    let params = space.apply(base, &result.best);
    let reports = evaluate_pairs(pairs, &params, iou_threshold)?;
    let agg_a = MotReport::aggregate(reports.iter().map(|r| &r.0));
    let agg_b = MotReport::aggregate(reports.iter().map(|r| &r.1));
    Ok(GapReport {
        formula: GAP_FORMULA.to_owned(),
        objective: gap_objective(&reports)?,
        params,
        pairs: pairs
            .iter()
            .zip(reports)
            .map(|((a, b), (ra, rb))| PairReport::new(a.name.clone(), b.name.clone(), ra, rb))
            .collect(),
        aggregate_delta: MetricRow::from(&agg_b).delta(&MetricRow::from(&agg_a)),
        param_names: space.names().into_iter().map(str::to_owned).collect(),
        history: result.history,
    })
}
