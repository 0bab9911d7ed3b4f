//! Mode correctness, coverage and collapse; time-to-mode metrics; consistency;
//! corpus aggregates and displacement errors.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::homotopy::{homotopy_class, winding_angle, ClassSet, HomotopyClass};
use crate::types::{JointPredictionSet, MissingAgentPolicy, Scene, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("feasible class set is empty")]
    EmptyFeasibleSet,
    #[error("no evaluated pairs")]
    EmptyCorpus,
    #[error("frame {frame}: no prediction for agent {agent}")]
    MissingAgentPrediction { frame: usize, agent: String },
    #[error("frame {frame}: predicted agent {agent} is not in the scene")]
    UnknownAgent { frame: usize, agent: String },
}

/// Mode flags of one pair at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameModeFlags {
    pub frame: usize,
    pub h_gt: HomotopyClass,
    pub h_ml: HomotopyClass,
    pub h_pred: ClassSet,
    pub h_feas: ClassSet,
    pub correct: bool,
    pub covered: bool,
    pub collapse: bool,
}

impl FrameModeFlags {
    /// Same as [`frame_flags`] but accepts an empty feasible set, which never
    /// counts as collapse.
    pub fn evaluate(
        frame: usize,
        h_gt: HomotopyClass,
        h_ml: HomotopyClass,
        h_pred: ClassSet,
        h_feas: ClassSet,
    ) -> Self {
        Self {
            frame,
            h_gt,
            h_ml,
            h_pred,
            h_feas,
            correct: h_ml == h_gt,
            covered: h_pred.contains(h_gt),
            collapse: !h_feas.is_subset(h_pred),
        }
    }

    /// Frames counted in the collapse-rate denominator.
    pub fn collapse_eligible(&self) -> bool {
        self.h_feas.len() >= 2
    }
}

pub fn frame_flags(
    frame: usize,
    h_gt: HomotopyClass,
    h_ml: HomotopyClass,
    h_pred: ClassSet,
    h_feas: ClassSet,
) -> Result<FrameModeFlags, MetricsError> {
    if h_feas.is_empty() {
        return Err(MetricsError::EmptyFeasibleSet);
    }
    Ok(FrameModeFlags::evaluate(frame, h_gt, h_ml, h_pred, h_feas))
}

/// How long before the inevitable state a mode was (and stayed) right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "seconds")]
pub enum TimeToMode {
    /// Right at every frame of the interval.
    FromStart,
    /// Still wrong at the last evaluated frame.
    Never,
    Seconds(f64),
}

impl TimeToMode {
    /// Numeric value; zero for `Never`, none for `FromStart`.
    pub fn seconds(self) -> Option<f64> {
        match self {
            TimeToMode::FromStart => None,
            TimeToMode::Never => Some(0.0),
            TimeToMode::Seconds(s) => Some(s),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            TimeToMode::FromStart => "from_start",
            TimeToMode::Never => "never",
            TimeToMode::Seconds(_) => "timed",
        }
    }
}

fn time_to_mode(flags: &[FrameModeFlags], ok: impl Fn(&FrameModeFlags) -> bool, dt: f64) -> TimeToMode {
    let last = flags.last().expect("non-empty interval").frame;
    match flags.iter().rev().find(|f| !ok(f)) {
        None => TimeToMode::FromStart,
        Some(f) if f.frame == last => TimeToMode::Never,
        Some(f) => TimeToMode::Seconds((last - f.frame) as f64 * dt),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMetrics {
    pub dt_correct: TimeToMode,
    pub dt_covered: TimeToMode,
    pub consistent: bool,
    /// Number of times the most-likely class changed over the interval.
    pub ml_changes: usize,
    /// Fraction of two-feasible frames with collapse; `None` when there are none.
    pub collapse_rate: Option<f64>,
}

/// Per-pair metrics over the evaluation interval (frames in increasing order).
pub fn pair_time_metrics(flags: &[FrameModeFlags], dt: f64) -> PairMetrics {
    let ml_changes = flags.windows(2).filter(|w| w[0].h_ml != w[1].h_ml).count();
    let eligible: Vec<&FrameModeFlags> = flags.iter().filter(|f| f.collapse_eligible()).collect();
    let collapse_rate = (!eligible.is_empty())
        .then(|| eligible.iter().filter(|f| f.collapse).count() as f64 / eligible.len() as f64);
    PairMetrics {
        dt_correct: time_to_mode(flags, |f| f.correct, dt),
        dt_covered: time_to_mode(flags, |f| f.covered, dt),
        consistent: ml_changes <= 1,
        ml_changes,
        collapse_rate,
    }
}

/// Everything known about one evaluated pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub scene_id: String,
    pub agent_a: String,
    pub agent_b: String,
    pub dt: f64,
    pub collapse_frame: usize,
    pub flags: Vec<FrameModeFlags>,
    pub metrics: PairMetrics,
}

impl PairRecord {
    pub fn new(
        scene_id: impl Into<String>,
        agent_a: impl Into<String>,
        agent_b: impl Into<String>,
        dt: f64,
        collapse_frame: usize,
        flags: Vec<FrameModeFlags>,
    ) -> Self {
        let metrics = pair_time_metrics(&flags, dt);
        Self {
            scene_id: scene_id.into(),
            agent_a: agent_a.into(),
            agent_b: agent_b.into(),
            dt,
            collapse_frame,
            flags,
            metrics,
        }
    }

    /// Time from `frame` to the inevitable homotopy state, s.
    pub fn time_to_collapse(&self, frame: usize) -> f64 {
        (self.collapse_frame as f64 - frame as f64) * self.dt
    }
}

/// Rates as a function of time before the inevitable state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveBin {
    /// Bin center, s.
    pub dt_h_collapse: f64,
    pub frames: usize,
    pub correct_rate: f64,
    pub covered_rate: f64,
    /// `None` when the bin has no two-feasible frames.
    pub collapse_rate: Option<f64>,
}

/// Summary of one time-to-mode metric over pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSummary {
    /// Mean over pairs with a positive time; absent when there are none.
    pub mean: Option<f64>,
    pub pct_at_0s: f64,
    pub pct_at_tpred: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DisplacementMetrics {
    pub ml_ade: f64,
    pub ml_fde: f64,
    pub joint_min_ade: f64,
    pub joint_min_fde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub pairs: usize,
    pub frames: usize,
    pub collapse_frames: usize,
    pub mode_correct_rate: f64,
    pub mode_covered_rate: f64,
    /// `None` when no frame had two feasible classes.
    pub mode_collapse_rate: Option<f64>,
    pub dt_correct: TimeSummary,
    pub dt_covered: TimeSummary,
    pub consistency_rate: f64,
    pub displacement: Option<DisplacementMetrics>,
    pub curves: Vec<CurveBin>,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

fn summarize(values: impl Iterator<Item = TimeToMode>) -> TimeSummary {
    let (mut n, mut zero, mut start, mut sum, mut timed) = (0usize, 0usize, 0usize, 0.0, 0usize);
    for v in values {
        n += 1;
        match v {
            TimeToMode::FromStart => start += 1,
            TimeToMode::Never => zero += 1,
            TimeToMode::Seconds(s) => {
                sum += s;
                timed += 1;
            }
        }
    }
    TimeSummary {
        mean: (timed > 0).then(|| sum / timed as f64),
        pct_at_0s: pct(zero, n),
        pct_at_tpred: pct(start, n),
    }
}

/// Pools frame flags over all pairs and summarises the per-pair metrics.
/// Curves group frames by time to the inevitable state in bins of `bin` s.
pub fn aggregate(pairs: &[PairRecord], bin: f64) -> Result<AggregateReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let all: Vec<(&PairRecord, &FrameModeFlags)> =
        pairs.iter().flat_map(|p| p.flags.iter().map(move |f| (p, f))).collect();
    let frames = all.len();
    let correct = all.iter().filter(|(_, f)| f.correct).count();
    let covered = all.iter().filter(|(_, f)| f.covered).count();
    let eligible: Vec<&FrameModeFlags> = all.iter().map(|(_, f)| *f).filter(|f| f.collapse_eligible()).collect();
    let collapsed = eligible.iter().filter(|f| f.collapse).count();

    let mut bins: BTreeMap<i64, (usize, usize, usize, usize, usize)> = BTreeMap::new();
    for (p, f) in &all {
        let key = (p.time_to_collapse(f.frame) / bin).round() as i64;
        let e = bins.entry(key).or_default();
        e.0 += 1;
        e.1 += f.correct as usize;
        e.2 += f.covered as usize;
        if f.collapse_eligible() {
            e.3 += 1;
            e.4 += f.collapse as usize;
        }
    }
    let curves = bins
        .into_iter()
        .map(|(k, (n, c, v, e, x))| CurveBin {
            dt_h_collapse: k as f64 * bin,
            frames: n,
            correct_rate: pct(c, n),
            covered_rate: pct(v, n),
            collapse_rate: (e > 0).then(|| pct(x, e)),
        })
        .collect();

    Ok(AggregateReport {
        pairs: pairs.len(),
        frames,
        collapse_frames: eligible.len(),
        mode_correct_rate: pct(correct, frames),
        mode_covered_rate: pct(covered, frames),
        mode_collapse_rate: (!eligible.is_empty()).then(|| pct(collapsed, eligible.len())),
        dt_correct: summarize(pairs.iter().map(|p| p.metrics.dt_correct)),
        dt_covered: summarize(pairs.iter().map(|p| p.metrics.dt_covered)),
        consistency_rate: pct(pairs.iter().filter(|p| p.metrics.consistent).count(), pairs.len()),
        displacement: None,
        curves,
    })
}

/// Prepends the current position so the class reflects the first predicted step.
fn with_origin(origin: Vec2, future: &[Vec2]) -> Vec<Vec2> {
    let mut v = Vec::with_capacity(future.len() + 1);
    v.push(origin);
    v.extend_from_slice(future);
    v
}

/// Class of every joint sample for the pair `(a, b)`. Predicted futures are
/// prefixed with the current positions and cut to the shorter of the two.
/// Returns `None` when either agent is not predicted.
pub fn predicted_classes(
    set: &JointPredictionSet,
    a: &str,
    b: &str,
    origin_a: Vec2,
    origin_b: Vec2,
    theta_hat: f64,
) -> Option<Vec<HomotopyClass>> {
    set.samples
        .iter()
        .map(|s| {
            let fa = s.trajs.get(a)?;
            let fb = s.trajs.get(b)?;
            let n = fa.len().min(fb.len());
            let w = winding_angle(&with_origin(origin_a, &fa[..n]), &with_origin(origin_b, &fb[..n]))
                .expect("equal lengths");
            Some(homotopy_class(w.delta_theta, theta_hat))
        })
        .collect()
}

/// Fills agents the set does not predict according to `policy`. Agents listed in
/// `required` that are recorded at the frame are checked.
pub fn apply_missing_policy(
    set: &JointPredictionSet,
    scene: &Scene,
    required: &[&str],
    horizon_frames: usize,
    policy: MissingAgentPolicy,
) -> Result<Option<JointPredictionSet>, MetricsError> {
    let frame = set.frame;
    let missing: Vec<&str> = required
        .iter()
        .copied()
        .filter(|id| !set.predicts(id) && scene.agent(id).is_some_and(|a| a.is_present(frame)))
        .collect();
    if missing.is_empty() {
        return Ok(Some(set.clone()));
    }
    match policy {
        MissingAgentPolicy::Error => Err(MetricsError::MissingAgentPrediction {
            frame,
            agent: missing[0].to_string(),
        }),
        MissingAgentPolicy::Skip => Ok(None),
        MissingAgentPolicy::StaticGroundTruth => {
            let mut filled = set.clone();
            for id in missing {
                let p = scene.agent(id).and_then(|a| a.position_at(frame)).expect("checked above");
                for s in &mut filled.samples {
                    s.trajs.insert(id.to_string(), vec![p; horizon_frames]);
                }
            }
            Ok(Some(filled))
        }
    }
}

/// Errors of one sample: per agent, the displacement at each compared frame.
fn sample_errors(
    scene: &Scene,
    frame: usize,
    trajs: &BTreeMap<String, Vec<Vec2>>,
) -> Result<Vec<Vec<f64>>, MetricsError> {
    let mut out = Vec::new();
    for (id, future) in trajs {
        let agent = scene.agent(id).ok_or_else(|| MetricsError::UnknownAgent {
            frame,
            agent: id.clone(),
        })?;
        let errs: Vec<f64> = future
            .iter()
            .enumerate()
            .map_while(|(k, p)| agent.position_at(frame + k + 1).map(|g| g.distance(*p)))
            .collect();
        if !errs.is_empty() {
            out.push(errs);
        }
    }
    Ok(out)
}

/// Running sums of per-set displacement errors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisplacementTotals {
    pub sums: DisplacementMetrics,
    pub sets: usize,
}

impl DisplacementTotals {
    pub fn merge(&mut self, other: &DisplacementTotals) {
        self.sums.ml_ade += other.sums.ml_ade;
        self.sums.ml_fde += other.sums.ml_fde;
        self.sums.joint_min_ade += other.sums.joint_min_ade;
        self.sums.joint_min_fde += other.sums.joint_min_fde;
        self.sets += other.sets;
    }

    /// Averages over sets; all zero when there are none.
    pub fn mean(&self) -> DisplacementMetrics {
        if self.sets == 0 {
            return DisplacementMetrics::default();
        }
        let n = self.sets as f64;
        DisplacementMetrics {
            ml_ade: self.sums.ml_ade / n,
            ml_fde: self.sums.ml_fde / n,
            joint_min_ade: self.sums.joint_min_ade / n,
            joint_min_fde: self.sums.joint_min_fde / n,
        }
    }
}

pub fn displacement_totals<'a>(
    predictions: impl IntoIterator<Item = &'a JointPredictionSet>,
    scene: &Scene,
) -> Result<DisplacementTotals, MetricsError> {
    let mut acc = DisplacementTotals::default();
    for set in predictions {
        let mut per_sample = Vec::with_capacity(set.k());
        for s in &set.samples {
            let errs = sample_errors(scene, set.frame, &s.trajs)?;
            if errs.is_empty() {
                continue;
            }
            let count: usize = errs.iter().map(Vec::len).sum();
            let ade = errs.iter().flatten().sum::<f64>() / count as f64;
            let fde = errs.iter().map(|e| *e.last().unwrap()).sum::<f64>() / errs.len() as f64;
            per_sample.push((ade, fde));
        }
        if per_sample.is_empty() {
            continue;
        }
        acc.sets += 1;
        acc.sums.ml_ade += per_sample[0].0;
        acc.sums.ml_fde += per_sample[0].1;
        acc.sums.joint_min_ade += per_sample.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        acc.sums.joint_min_fde += per_sample.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    }
    Ok(acc)
}

/// Most-likely and joint-minimum ADE/FDE, averaged over prediction sets.
/// Predictions past the end of the ground truth are ignored. Sets with no
/// comparable future are skipped; with none left all four values are zero.
pub fn displacement_metrics(
    predictions: &[JointPredictionSet],
    scene: &Scene,
) -> Result<DisplacementMetrics, MetricsError> {
    displacement_totals(predictions, scene).map(|t| t.mean())
}
