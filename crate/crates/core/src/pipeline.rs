//! End-to-end runs over a directory of scenes and the files they write.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::baselines::{cv_predict, oracle_predict, BaselineError};
use crate::filter::{screen_scene, CriticalPair, PairScreening};
use crate::homotopy::{ClassSet, HomotopyClass};
use crate::io::{load_mode_table, load_predictions, load_scene, scene_files, LoadError, ModeRow, ScenePredictions};
use crate::metrics::{
    aggregate, apply_missing_policy, displacement_totals, predicted_classes, AggregateReport, DisplacementTotals,
    FrameModeFlags, MetricsError, PairRecord,
};
use crate::rollout::{evaluation_interval, interaction_timeline, EvalInterval, InteractionTimeline, TimelineError};
use crate::types::{EvalConfig, JointPredictionSet, JointSample, MissingAgentPolicy, Scene};

pub const TOOL_NAME: &str = "interaction-eval";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Heatmap cell size along the path-sharing time gap, s.
pub const HEATMAP_DT_BIN: f64 = 0.5;
/// Heatmap cell size along the closest distance, m.
pub const HEATMAP_DISTANCE_BIN: f64 = 0.5;
/// Default bin width of the rate curves, s.
pub const DEFAULT_CURVE_BIN: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{location}: {message}", file.display())]
    Parse {
        file: PathBuf,
        location: String,
        message: String,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("scene {scene}: {source}")]
    Metrics {
        scene: String,
        #[source]
        source: MetricsError,
    },
    #[error("scene {scene}: {source}")]
    Baseline {
        scene: String,
        #[source]
        source: BaselineError,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Parse { .. } | PipelineError::Metrics { .. } => 3,
            PipelineError::EmptyCorpus(_) => 4,
            PipelineError::Io { .. } | PipelineError::Baseline { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Io { .. } => "IoError",
            PipelineError::Parse { .. } => "ParseError",
            PipelineError::Config(_) => "ConfigError",
            PipelineError::EmptyCorpus(_) => "EmptyCorpus",
            PipelineError::Metrics { .. } => "MetricsError",
            PipelineError::Baseline { .. } => "BaselineError",
        }
    }

    /// One-line JSON summary for machine consumption.
    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<LoadError> for PipelineError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { path, source } => PipelineError::Io { path, source },
            LoadError::Parse {
                file,
                location,
                message,
            } => PipelineError::Parse {
                file,
                location,
                message,
            },
        }
    }
}

/// Where prediction sets come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionSource {
    /// One `<scene_id>.json` prediction file per scene.
    Directory(PathBuf),
    ConstantVelocity,
    Oracle { k: usize },
}

impl PredictionSource {
    pub fn describe(&self) -> String {
        match self {
            PredictionSource::Directory(p) => p.display().to_string(),
            PredictionSource::ConstantVelocity => "baseline:cv".into(),
            PredictionSource::Oracle { k } => format!("baseline:oracle(k={k})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub scene_dir: PathBuf,
    pub predictions: PredictionSource,
    pub out_dir: PathBuf,
    pub cfg: EvalConfig,
    pub missing: MissingAgentPolicy,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    pub curve_bin: f64,
}

impl RunOptions {
    pub fn new(scene_dir: impl Into<PathBuf>, predictions: PredictionSource, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            scene_dir: scene_dir.into(),
            predictions,
            out_dir: out_dir.into(),
            cfg: EvalConfig::default(),
            missing: MissingAgentPolicy::default(),
            jobs: None,
            curve_bin: DEFAULT_CURVE_BIN,
        }
    }
}

/// Runs `f` on a pool of `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(PipelineError::Config("jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| PipelineError::Config(e.to_string())),
    }
}

/// Loads and validates every scene file of a directory, sorted by file name.
pub fn load_corpus(dir: &Path, cfg: &EvalConfig) -> Result<Vec<(PathBuf, Scene)>, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let files = scene_files(dir)?;
    if files.is_empty() {
        return Err(PipelineError::EmptyCorpus(format!(
            "no scene files in {}",
            dir.display()
        )));
    }
    let scenes: Vec<(PathBuf, Scene)> = files
        .into_par_iter()
        .map(|f| load_scene(&f).map(|s| (f, s)))
        .collect::<Result<_, _>>()?;
    for (file, scene) in &scenes {
        cfg.validate_for_period(scene.dt)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", file.display())))?;
    }
    let mut ids = std::collections::BTreeSet::new();
    for (file, scene) in &scenes {
        if !ids.insert(scene.scene_id.as_str()) {
            return Err(PipelineError::Parse {
                file: file.clone(),
                location: "scene_id".into(),
                message: format!("scene id {} is used by more than one file", scene.scene_id),
            });
        }
    }
    Ok(scenes)
}

/// What happened to one critical pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Evaluated,
    NoCollapse,
    DegenerateInterval,
    NoPredictions,
}

impl PairStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PairStatus::Evaluated => "evaluated",
            PairStatus::NoCollapse => "no_collapse",
            PairStatus::DegenerateInterval => "degenerate_interval",
            PairStatus::NoPredictions => "no_predictions",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub pair: CriticalPair,
    pub status: PairStatus,
    pub timeline: Option<InteractionTimeline>,
    pub record: Option<PairRecord>,
}

#[derive(Debug, Clone)]
pub struct SceneOutcome {
    pub file: PathBuf,
    pub scene_id: String,
    pub agents: usize,
    pub screening: Vec<PairScreening>,
    pub pairs: Vec<PairOutcome>,
    pub displacement: DisplacementTotals,
}

fn critical_pairs(screening: &[PairScreening]) -> Vec<CriticalPair> {
    screening.iter().filter_map(PairScreening::critical).collect()
}

fn status_of(e: &TimelineError) -> PairStatus {
    match e {
        TimelineError::NoCollapse => PairStatus::NoCollapse,
        TimelineError::DegenerateInterval { .. } => PairStatus::DegenerateInterval,
    }
}

/// Feasibility timelines for every critical pair of a scene.
pub type PairTimeline = (CriticalPair, Result<InteractionTimeline, TimelineError>);

pub fn scene_timelines(
    scene: &Scene,
    cfg: &EvalConfig,
) -> (Vec<PairScreening>, Vec<PairTimeline>) {
    let screening = screen_scene(scene, cfg);
    let timelines = critical_pairs(&screening)
        .into_iter()
        .map(|p| {
            let t = interaction_timeline(scene, &p, cfg, None);
            (p, t)
        })
        .collect();
    (screening, timelines)
}

struct SetProvider<'a> {
    scene: &'a Scene,
    source: &'a PredictionSource,
    file_sets: Option<ScenePredictions>,
    critical: &'a [CriticalPair],
    cfg: &'a EvalConfig,
    policy: MissingAgentPolicy,
    baseline_cache: BTreeMap<usize, JointPredictionSet>,
    used: BTreeMap<usize, JointPredictionSet>,
}

impl SetProvider<'_> {
    fn first_frame(&self) -> Option<usize> {
        self.file_sets.as_ref().and_then(ScenePredictions::first_frame)
    }

    fn raw(&mut self, frame: usize) -> Result<Option<JointPredictionSet>, PipelineError> {
        let scene = self.scene;
        let wrap = |source| PipelineError::Baseline {
            scene: scene.scene_id.clone(),
            source,
        };
        match self.source {
            PredictionSource::Directory(_) => {
                Ok(self.file_sets.as_ref().and_then(|p| p.sets.get(&frame)).cloned())
            }
            PredictionSource::ConstantVelocity | PredictionSource::Oracle { .. } => {
                if let Some(s) = self.baseline_cache.get(&frame) {
                    return Ok(Some(s.clone()));
                }
                let set = match self.source {
                    PredictionSource::Oracle { k } => oracle_predict(scene, frame, self.critical, *k, self.cfg),
                    _ => cv_predict(scene, frame, self.cfg),
                }
                .map_err(wrap)?;
                self.baseline_cache.insert(frame, set.clone());
                Ok(Some(set))
            }
        }
    }

    /// The set used to score `pair` at `frame`, after the missing-agent policy.
    fn for_pair(&mut self, frame: usize, a: &str, b: &str) -> Result<Option<JointPredictionSet>, PipelineError> {
        let horizon_frames = self.cfg.horizon_frames(self.scene.dt);
        let set = match self.raw(frame)? {
            Some(s) => s,
            None => match self.policy {
                MissingAgentPolicy::Error => {
                    return Err(PipelineError::Metrics {
                        scene: self.scene.scene_id.clone(),
                        source: MetricsError::MissingAgentPrediction {
                            frame,
                            agent: a.to_string(),
                        },
                    })
                }
                MissingAgentPolicy::Skip => return Ok(None),
                MissingAgentPolicy::StaticGroundTruth => JointPredictionSet::new(
                    frame,
                    vec![JointSample {
                        probability: 1.0,
                        trajs: BTreeMap::new(),
                    }],
                )
                .expect("one certain sample"),
            },
        };
        let filled = apply_missing_policy(&set, self.scene, &[a, b], horizon_frames, self.policy).map_err(|e| {
            PipelineError::Metrics {
                scene: self.scene.scene_id.clone(),
                source: e,
            }
        })?;
        if let Some(s) = &filled {
            let entry = self.used.entry(frame).or_insert_with(|| s.clone());
            for sample in entry.samples.iter_mut().zip(&s.samples) {
                for (id, t) in &sample.1.trajs {
                    sample.0.trajs.entry(id.clone()).or_insert_with(|| t.clone());
                }
            }
        }
        Ok(filled)
    }
}

fn pair_flags(
    scene: &Scene,
    pair: &CriticalPair,
    timeline: &InteractionTimeline,
    provider: &mut SetProvider,
    cfg: &EvalConfig,
) -> Result<Vec<FrameModeFlags>, PipelineError> {
    let (a, b) = (&pair.agent_a, &pair.agent_b);
    let agent_a = scene.agent(a).expect("critical pair agents exist");
    let agent_b = scene.agent(b).expect("critical pair agents exist");
    let mut flags = Vec::new();
    for frame in timeline.interval.start..=timeline.interval.last {
        let Some(set) = provider.for_pair(frame, a, b)? else {
            continue;
        };
        let (Some(pa), Some(pb)) = (agent_a.position_at(frame), agent_b.position_at(frame)) else {
            continue;
        };
        let Some(classes) = predicted_classes(&set, a, b, pa, pb, cfg.theta_hat) else {
            continue;
        };
        let h_pred: ClassSet = classes.iter().copied().collect();
        let h_gt = timeline.gt_at(frame).expect("interval frames are co-observed");
        let h_feas = timeline.feasible_at(frame).expect("interval frames are co-observed");
        flags.push(FrameModeFlags::evaluate(frame, h_gt, classes[0], h_pred, h_feas));
    }
    Ok(flags)
}

/// Screens, simulates and scores one scene.
pub fn evaluate_scene(
    file: &Path,
    scene: &Scene,
    source: &PredictionSource,
    cfg: &EvalConfig,
    policy: MissingAgentPolicy,
) -> Result<SceneOutcome, PipelineError> {
    let screening = screen_scene(scene, cfg);
    let critical = critical_pairs(&screening);
    let file_sets = match source {
        PredictionSource::Directory(dir) => {
            let path = dir.join(format!("{}.json", scene.scene_id));
            let preds = load_predictions(&path)?;
            if preds.scene_id != scene.scene_id {
                return Err(PipelineError::Parse {
                    file: path,
                    location: "scene_id".into(),
                    message: format!("expected scene {}, found {}", scene.scene_id, preds.scene_id),
                });
            }
            Some(preds)
        }
        _ => None,
    };
    let mut provider = SetProvider {
        scene,
        source,
        file_sets,
        critical: &critical,
        cfg,
        policy,
        baseline_cache: BTreeMap::new(),
        used: BTreeMap::new(),
    };
    let first_prediction = provider.first_frame();

    let mut pairs = Vec::with_capacity(critical.len());
    for pair in &critical {
        let timeline = match interaction_timeline(scene, pair, cfg, first_prediction) {
            Ok(t) => t,
            Err(e) => {
                pairs.push(PairOutcome {
                    pair: pair.clone(),
                    status: status_of(&e),
                    timeline: None,
                    record: None,
                });
                continue;
            }
        };
        let flags = pair_flags(scene, pair, &timeline, &mut provider, cfg)?;
        let (status, record) = if flags.is_empty() {
            (PairStatus::NoPredictions, None)
        } else {
            let r = PairRecord::new(
                scene.scene_id.clone(),
                pair.agent_a.clone(),
                pair.agent_b.clone(),
                scene.dt,
                timeline.interval.collapse,
                flags,
            );
            (PairStatus::Evaluated, Some(r))
        };
        pairs.push(PairOutcome {
            pair: pair.clone(),
            status,
            timeline: Some(timeline),
            record,
        });
    }

    let displacement = displacement_totals(provider.used.values(), scene).map_err(|e| PipelineError::Metrics {
        scene: scene.scene_id.clone(),
        source: e,
    })?;
    Ok(SceneOutcome {
        file: file.to_path_buf(),
        scene_id: scene.scene_id.clone(),
        agents: scene.agents.len(),
        screening,
        pairs,
        displacement,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SceneSummary {
    pub scene_id: String,
    pub file: String,
    pub agents: usize,
    pub screened_pairs: usize,
    pub path_crossing_pairs: usize,
    pub critical_pairs: usize,
    pub evaluated_pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: EvalConfig,
    pub missing_agent_policy: MissingAgentPolicy,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub scenes: Vec<SceneSummary>,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    fn new(command: &str, cfg: &EvalConfig, policy: MissingAgentPolicy) -> Self {
        Self {
            tool: TOOL_NAME,
            version: VERSION,
            command: command.into(),
            config: *cfg,
            missing_agent_policy: policy,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            scenes: Vec::new(),
            elapsed_seconds: 0.0,
        }
    }
}

/// Report body written to `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ReportFile<'a> {
    pub manifest: &'static str,
    #[serde(flatten)]
    pub report: &'a AggregateReport,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, PipelineError> {
    let file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> PipelineError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => PipelineError::io(path, source),
        other => PipelineError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes rows (header first) to a CSV file.
pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

const PAIR_HEADER: &[&str] = &[
    "scene_id",
    "agent_a",
    "agent_b",
    "status",
    "t_ps_a",
    "t_ps_b",
    "dt_ps",
    "min_distance",
    "t_h_start",
    "t_h_final",
    "t_h_collapse",
    "h_gt_final",
    "frames",
    "dt_correct",
    "dt_correct_kind",
    "dt_covered",
    "dt_covered_kind",
    "consistent",
    "ml_changes",
    "collapse_rate",
];

#[derive(Serialize)]
struct PairRow<'a> {
    scene_id: &'a str,
    agent_a: &'a str,
    agent_b: &'a str,
    status: &'static str,
    t_ps_a: Option<f64>,
    t_ps_b: Option<f64>,
    dt_ps: Option<f64>,
    min_distance: Option<f64>,
    t_h_start: Option<f64>,
    t_h_final: Option<f64>,
    t_h_collapse: Option<f64>,
    h_gt_final: Option<&'static str>,
    frames: usize,
    dt_correct: Option<f64>,
    dt_correct_kind: Option<&'static str>,
    dt_covered: Option<f64>,
    dt_covered_kind: Option<&'static str>,
    consistent: Option<bool>,
    ml_changes: Option<usize>,
    /// Percent.
    collapse_rate: Option<f64>,
}

fn pair_row<'a>(
    scene_id: &'a str,
    agent_a: &'a str,
    agent_b: &'a str,
    status: PairStatus,
    pair: Option<&CriticalPair>,
    interval: Option<(EvalInterval, f64)>,
    record: Option<&PairRecord>,
) -> PairRow<'a> {
    let t = |f: usize| interval.map(|(_, dt)| f as f64 * dt);
    let m = record.map(|r| r.metrics);
    PairRow {
        scene_id,
        agent_a,
        agent_b,
        status: status.as_str(),
        t_ps_a: pair.and_then(|p| p.sharing.t_ps_a),
        t_ps_b: pair.and_then(|p| p.sharing.t_ps_b),
        dt_ps: pair.and_then(|p| p.sharing.dt_ps),
        min_distance: pair.map(|p| p.min_distance),
        t_h_start: interval.and_then(|(i, _)| t(i.start)),
        t_h_final: interval.and_then(|(i, _)| t(i.last)),
        t_h_collapse: interval.and_then(|(i, _)| t(i.collapse)),
        h_gt_final: interval.map(|(i, _)| i.gt_final.as_str()),
        frames: record.map_or(0, |r| r.flags.len()),
        dt_correct: m.and_then(|m| m.dt_correct.seconds()),
        dt_correct_kind: m.map(|m| m.dt_correct.tag()),
        dt_covered: m.and_then(|m| m.dt_covered.seconds()),
        dt_covered_kind: m.map(|m| m.dt_covered.tag()),
        consistent: m.map(|m| m.consistent),
        ml_changes: m.map(|m| m.ml_changes),
        collapse_rate: m.and_then(|m| m.collapse_rate).map(|r| 100.0 * r),
    }
}

const FRAME_HEADER: &[&str] = &[
    "scene_id",
    "agent_a",
    "agent_b",
    "frame",
    "t",
    "dt_h_collapse",
    "h_gt",
    "h_ml",
    "h_pred",
    "h_feas",
    "correct",
    "covered",
    "collapse",
];

fn write_frames(path: &Path, records: &[&PairRecord]) -> Result<(), PipelineError> {
    let rows = records.iter().flat_map(|r| {
        r.flags.iter().map(move |f| {
            (
                r.scene_id.as_str(),
                r.agent_a.as_str(),
                r.agent_b.as_str(),
                f.frame,
                f.frame as f64 * r.dt,
                r.time_to_collapse(f.frame),
                f.h_gt.as_str(),
                f.h_ml.as_str(),
                f.h_pred.to_string(),
                f.h_feas.to_string(),
                f.correct,
                f.covered,
                f.collapse,
            )
        })
    });
    write_csv(path, FRAME_HEADER, rows)
}

fn write_curves(path: &Path, report: &AggregateReport) -> Result<(), PipelineError> {
    write_csv(
        path,
        &["dt_h_collapse", "frames", "correct_rate", "covered_rate", "collapse_rate"],
        report
            .curves
            .iter()
            .map(|c| (c.dt_h_collapse, c.frames, c.correct_rate, c.covered_rate, c.collapse_rate)),
    )
}

const SCREENING_HEADER: &[&str] = &[
    "scene_id",
    "agent_a",
    "agent_b",
    "outcome",
    "first_frame",
    "last_frame",
    "t_ps_a",
    "t_ps_b",
    "dt_ps",
    "min_distance",
];

fn write_screening(path: &Path, scenes: &[(&str, &[PairScreening])]) -> Result<(), PipelineError> {
    let rows = scenes.iter().flat_map(|(id, list)| {
        list.iter().map(move |s| {
            (
                *id,
                s.agent_a.as_str(),
                s.agent_b.as_str(),
                match &s.outcome {
                    Ok(()) => "accepted".to_string(),
                    Err(r) => r.to_string(),
                },
                s.co_observed.map(|w| w.first),
                s.co_observed.map(|w| w.last),
                s.sharing.as_ref().and_then(|p| p.t_ps_a),
                s.sharing.as_ref().and_then(|p| p.t_ps_b),
                s.sharing.as_ref().and_then(|p| p.dt_ps),
                s.min_distance,
            )
        })
    });
    write_csv(path, SCREENING_HEADER, rows)
}

/// Start frame, last frame, collapse frame and frame period of an evaluation interval.
pub type IhsSpan = (EvalInterval, f64);

fn bin_key(value: f64, width: f64) -> i64 {
    (value / width + 1e-9).floor() as i64
}

/// Writes `heatmap.csv` and `ihs_hist.csv`.
///
/// The heatmap counts path-crossing pairs (including those later rejected for
/// their time gap) by path-sharing time gap and closest distance. The histogram
/// counts interval frames by time to the inevitable state, at the frame period.
pub fn emit_histograms<'a>(
    screenings: impl IntoIterator<Item = &'a PairScreening>,
    spans: impl IntoIterator<Item = IhsSpan>,
    out: &Path,
) -> Result<(), PipelineError> {
    let mut cells: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for s in screenings {
        if !s.path_crossing() {
            continue;
        }
        let (Some(dt_ps), Some(d)) = (s.sharing.as_ref().and_then(|p| p.dt_ps), s.min_distance) else {
            continue;
        };
        *cells
            .entry((bin_key(dt_ps, HEATMAP_DT_BIN), bin_key(d, HEATMAP_DISTANCE_BIN)))
            .or_default() += 1;
    }
    write_csv(
        &out.join("heatmap.csv"),
        &["dt_ps_lo", "dt_ps_hi", "min_distance_lo", "min_distance_hi", "count"],
        cells.into_iter().map(|((t, d), n)| {
            (
                t as f64 * HEATMAP_DT_BIN,
                (t + 1) as f64 * HEATMAP_DT_BIN,
                d as f64 * HEATMAP_DISTANCE_BIN,
                (d + 1) as f64 * HEATMAP_DISTANCE_BIN,
                n,
            )
        }),
    )?;

    // Keyed in microseconds so that equal offsets from different periods merge.
    let mut hist: BTreeMap<i64, usize> = BTreeMap::new();
    for (interval, dt) in spans {
        for frame in interval.start..=interval.last {
            let dt_h = (interval.collapse - frame) as f64 * dt;
            *hist.entry((dt_h * 1e6).round() as i64).or_default() += 1;
        }
    }
    write_csv(
        &out.join("ihs_hist.csv"),
        &["dt_h_collapse", "count"],
        hist.into_iter().map(|(k, n)| (k as f64 / 1e6, n)),
    )
}

/// Everything a finished evaluation produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub scenes: Vec<SceneOutcome>,
    pub report: AggregateReport,
}

/// Evaluates predictions for a directory of scenes and writes `manifest.json`,
/// `screening.csv`, `pairs.csv`, `frames.csv`, `report.json`, `curves.csv`,
/// `heatmap.csv` and `ihs_hist.csv` into the output directory.
///
/// When no pair can be evaluated everything except `report.json` and
/// `curves.csv` is still written and `EmptyCorpus` is returned.
pub fn run_pipeline(opts: &RunOptions) -> Result<RunResult, PipelineError> {
    let started = Instant::now();
    if !(opts.curve_bin.is_finite() && opts.curve_bin > 0.0) {
        return Err(PipelineError::Config(format!(
            "curve bin must be positive, got {}",
            opts.curve_bin
        )));
    }
    if let PredictionSource::Oracle { k: 0 } = opts.predictions {
        return Err(PipelineError::Config("oracle K must be at least 1".into()));
    }
    let scenes = with_jobs(opts.jobs, || -> Result<Vec<SceneOutcome>, PipelineError> {
        let corpus = load_corpus(&opts.scene_dir, &opts.cfg)?;
        corpus
            .par_iter()
            .map(|(file, scene)| evaluate_scene(file, scene, &opts.predictions, &opts.cfg, opts.missing))
            .collect()
    })??;

    ensure_dir(&opts.out_dir)?;
    let out = &opts.out_dir;
    let mut manifest = RunManifest::new("eval", &opts.cfg, opts.missing);
    manifest
        .inputs
        .insert("scene_dir".into(), opts.scene_dir.display().to_string());
    manifest
        .inputs
        .insert("predictions".into(), opts.predictions.describe());
    manifest.scenes = scenes
        .iter()
        .map(|s| SceneSummary {
            scene_id: s.scene_id.clone(),
            file: s.file.display().to_string(),
            agents: s.agents,
            screened_pairs: s.screening.len(),
            path_crossing_pairs: s.screening.iter().filter(|p| p.path_crossing()).count(),
            critical_pairs: s.pairs.len(),
            evaluated_pairs: s.pairs.iter().filter(|p| p.record.is_some()).count(),
        })
        .collect();

    let screening: Vec<(&str, &[PairScreening])> = scenes
        .iter()
        .map(|s| (s.scene_id.as_str(), s.screening.as_slice()))
        .collect();
    write_screening(&out.join("screening.csv"), &screening)?;

    let pair_rows = scenes.iter().flat_map(|s| {
        s.pairs.iter().map(move |p| {
            pair_row(
                &s.scene_id,
                &p.pair.agent_a,
                &p.pair.agent_b,
                p.status,
                Some(&p.pair),
                p.timeline.as_ref().map(|t| (t.interval, t.dt)),
                p.record.as_ref(),
            )
        })
    });
    write_csv(&out.join("pairs.csv"), PAIR_HEADER, pair_rows)?;

    let records: Vec<&PairRecord> = scenes
        .iter()
        .flat_map(|s| s.pairs.iter().filter_map(|p| p.record.as_ref()))
        .collect();
    write_frames(&out.join("frames.csv"), &records)?;

    emit_histograms(
        scenes.iter().flat_map(|s| s.screening.iter()),
        scenes
            .iter()
            .flat_map(|s| s.pairs.iter().filter_map(|p| p.timeline.as_ref().map(|t| (t.interval, t.dt)))),
        out,
    )?;

    let owned: Vec<PairRecord> = records.iter().map(|r| (*r).clone()).collect();
    let outcome = aggregate(&owned, opts.curve_bin);
    manifest.outputs = ["manifest.json", "screening.csv", "pairs.csv", "frames.csv", "heatmap.csv", "ihs_hist.csv"]
        .map(String::from)
        .to_vec();
    let mut report = match outcome {
        Ok(r) => r,
        Err(_) => {
            manifest.elapsed_seconds = started.elapsed().as_secs_f64();
            write_json(&out.join("manifest.json"), &manifest)?;
            return Err(PipelineError::EmptyCorpus(format!(
                "no evaluated pairs in {} scene(s)",
                scenes.len()
            )));
        }
    };
    let mut totals = DisplacementTotals::default();
    for s in &scenes {
        totals.merge(&s.displacement);
    }
    report.displacement = Some(totals.mean());

    write_json(
        &out.join("report.json"),
        &ReportFile {
            manifest: "manifest.json",
            report: &report,
        },
    )?;
    write_curves(&out.join("curves.csv"), &report)?;
    manifest.outputs.push("report.json".into());
    manifest.outputs.push("curves.csv".into());
    manifest.elapsed_seconds = started.elapsed().as_secs_f64();
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(RunResult {
        manifest,
        scenes,
        report,
    })
}

/// Screens every scene and writes `screening.csv`, `critical_pairs.json`,
/// `heatmap.csv` (and an empty-body `ihs_hist.csv`) plus `manifest.json`.
pub fn run_filter(
    scene_dir: &Path,
    out: &Path,
    cfg: &EvalConfig,
    jobs: Option<usize>,
) -> Result<Vec<(String, Vec<PairScreening>)>, PipelineError> {
    let started = Instant::now();
    let screened = with_jobs(jobs, || -> Result<Vec<(String, Vec<PairScreening>)>, PipelineError> {
        let corpus = load_corpus(scene_dir, cfg)?;
        Ok(corpus
            .par_iter()
            .map(|(_, s)| (s.scene_id.clone(), screen_scene(s, cfg)))
            .collect())
    })??;
    ensure_dir(out)?;
    let view: Vec<(&str, &[PairScreening])> = screened.iter().map(|(id, s)| (id.as_str(), s.as_slice())).collect();
    write_screening(&out.join("screening.csv"), &view)?;
    let critical: BTreeMap<&str, Vec<CriticalPair>> = screened
        .iter()
        .map(|(id, s)| (id.as_str(), critical_pairs(s)))
        .collect();
    write_json(&out.join("critical_pairs.json"), &critical)?;
    emit_histograms(screened.iter().flat_map(|(_, s)| s.iter()), std::iter::empty(), out)?;
    let mut manifest = RunManifest::new("filter", cfg, MissingAgentPolicy::default());
    manifest
        .inputs
        .insert("scene_dir".into(), scene_dir.display().to_string());
    manifest.outputs = ["manifest.json", "screening.csv", "critical_pairs.json", "heatmap.csv", "ihs_hist.csv"]
        .map(String::from)
        .to_vec();
    manifest.elapsed_seconds = started.elapsed().as_secs_f64();
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(screened)
}

/// Per-frame feasibility of every critical pair: writes `feasibility.csv`,
/// `timelines.csv`, `heatmap.csv`, `ihs_hist.csv` and `manifest.json`.
pub fn run_rollout(scene_dir: &Path, out: &Path, cfg: &EvalConfig, jobs: Option<usize>) -> Result<usize, PipelineError> {
    let started = Instant::now();
    type SceneTimelines = (Scene, Vec<PairScreening>, Vec<(CriticalPair, Result<InteractionTimeline, TimelineError>)>);
    let all = with_jobs(jobs, || -> Result<Vec<SceneTimelines>, PipelineError> {
        let corpus = load_corpus(scene_dir, cfg)?;
        Ok(corpus
            .into_par_iter()
            .map(|(_, s)| {
                let (screening, timelines) = scene_timelines(&s, cfg);
                (s, screening, timelines)
            })
            .collect())
    })??;
    ensure_dir(out)?;

    let mut feas_rows = Vec::new();
    let mut timeline_rows = Vec::new();
    for (scene, _, timelines) in &all {
        for (pair, result) in timelines {
            let (status, interval) = match result {
                Ok(t) => (PairStatus::Evaluated, Some(t.interval)),
                Err(e) => (status_of(e), None),
            };
            timeline_rows.push((
                scene.scene_id.clone(),
                pair.agent_a.clone(),
                pair.agent_b.clone(),
                if status == PairStatus::Evaluated { "ok" } else { status.as_str() },
                interval.map(|i| i.start as f64 * scene.dt),
                interval.map(|i| i.last as f64 * scene.dt),
                interval.map(|i| i.collapse as f64 * scene.dt),
                interval.map(|i| i.gt_final.as_str()),
            ));
            if let Ok(t) = result {
                for (f, g) in t.frames.iter().zip(&t.gt) {
                    feas_rows.push((
                        scene.scene_id.clone(),
                        pair.agent_a.clone(),
                        pair.agent_b.clone(),
                        f.frame,
                        f.frame as f64 * scene.dt,
                        f.classes.to_string(),
                        g.class.as_str(),
                        g.delta_theta,
                        f.frame >= t.interval.start && f.frame <= t.interval.last,
                    ));
                }
            }
        }
    }
    write_csv(
        &out.join("timelines.csv"),
        &["scene_id", "agent_a", "agent_b", "status", "t_h_start", "t_h_final", "t_h_collapse", "h_gt_final"],
        &timeline_rows,
    )?;
    write_csv(
        &out.join("feasibility.csv"),
        &["scene_id", "agent_a", "agent_b", "frame", "t", "h_feas", "h_gt", "delta_theta", "in_interval"],
        &feas_rows,
    )?;
    emit_histograms(
        all.iter().flat_map(|(_, s, _)| s.iter()),
        all.iter().flat_map(|(scene, _, ts)| {
            ts.iter()
                .filter_map(move |(_, t)| t.as_ref().ok().map(|t| (t.interval, scene.dt)))
        }),
        out,
    )?;
    let mut manifest = RunManifest::new("rollout", cfg, MissingAgentPolicy::default());
    manifest
        .inputs
        .insert("scene_dir".into(), scene_dir.display().to_string());
    manifest.outputs = ["manifest.json", "timelines.csv", "feasibility.csv", "heatmap.csv", "ihs_hist.csv"]
        .map(String::from)
        .to_vec();
    manifest.elapsed_seconds = started.elapsed().as_secs_f64();
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(timeline_rows.len())
}

/// Writes one baseline prediction file per scene, covering every frame of
/// the scene, into `out`.
pub fn run_baseline(
    scene_dir: &Path,
    source: &PredictionSource,
    out: &Path,
    cfg: &EvalConfig,
    jobs: Option<usize>,
) -> Result<usize, PipelineError> {
    if matches!(source, PredictionSource::Directory(_)) {
        return Err(PipelineError::Config("a baseline model is required".into()));
    }
    if let PredictionSource::Oracle { k: 0 } = source {
        return Err(PipelineError::Config("oracle K must be at least 1".into()));
    }
    let predictions = with_jobs(jobs, || -> Result<Vec<ScenePredictions>, PipelineError> {
        let corpus = load_corpus(scene_dir, cfg)?;
        corpus
            .par_iter()
            .map(|(_, scene)| {
                let critical = critical_pairs(&screen_scene(scene, cfg));
                let mut sets = BTreeMap::new();
                for frame in scene.first_frame()..=scene.last_frame() {
                    let set = match source {
                        PredictionSource::Oracle { k } => oracle_predict(scene, frame, &critical, *k, cfg),
                        _ => cv_predict(scene, frame, cfg),
                    };
                    match set {
                        Ok(s) => {
                            sets.insert(frame, s);
                        }
                        Err(BaselineError::NoAgents(_)) => {}
                        Err(source) => {
                            return Err(PipelineError::Baseline {
                                scene: scene.scene_id.clone(),
                                source,
                            })
                        }
                    }
                }
                Ok(ScenePredictions {
                    scene_id: scene.scene_id.clone(),
                    horizon: cfg.horizon,
                    sets,
                })
            })
            .collect()
    })??;
    ensure_dir(out)?;
    for p in &predictions {
        let path = out.join(format!("{}.json", p.scene_id));
        let text = serde_json::to_string(&p.to_record()).expect("serializable");
        fs::write(&path, text + "\n").map_err(|e| PipelineError::io(&path, e))?;
    }
    Ok(predictions.len())
}

/// The evaluation interval and flags of a pre-computed mode table.
pub fn fixture_record(
    rows: &[ModeRow],
    scene_id: &str,
    dt: f64,
    horizon_frames: usize,
) -> Result<(EvalInterval, PairRecord), TimelineError> {
    let sets: Vec<(usize, ClassSet)> = rows.iter().map(|r| (r.frame, r.feasible)).collect();
    let gt: Vec<(usize, HomotopyClass)> = rows.iter().map(|r| (r.frame, r.gt)).collect();
    let first = rows.first().map_or(0, |r| r.frame);
    let interval = evaluation_interval(&sets, &gt, horizon_frames, first)?;
    let flags = rows
        .iter()
        .filter(|r| r.frame >= interval.start && r.frame <= interval.last)
        .map(|r| FrameModeFlags::evaluate(r.frame, r.gt, r.ml, r.pred, r.feasible))
        .collect();
    Ok((interval, PairRecord::new(scene_id, "A", "B", dt, interval.collapse, flags)))
}

/// Scores pre-computed per-frame mode tables (one pair per file) and writes the
/// same report files as [`run_pipeline`].
pub fn run_fixture_report(tables: &[PathBuf], dt: f64, out: &Path, cfg: &EvalConfig) -> Result<AggregateReport, PipelineError> {
    let started = Instant::now();
    cfg.validate_for_period(dt)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    if tables.is_empty() {
        return Err(PipelineError::EmptyCorpus("no mode tables given".into()));
    }
    let mut records = Vec::new();
    let mut statuses = Vec::new();
    for path in tables {
        let rows = load_mode_table(path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match fixture_record(&rows, &id, dt, cfg.horizon_frames(dt)) {
            Ok((interval, record)) => {
                statuses.push((id, PairStatus::Evaluated, Some(interval)));
                records.push(record);
            }
            Err(e) => statuses.push((id, status_of(&e), None)),
        }
    }
    ensure_dir(out)?;
    let mut by_id: BTreeMap<&str, &PairRecord> = BTreeMap::new();
    for r in &records {
        by_id.insert(&r.scene_id, r);
    }
    write_csv(
        &out.join("pairs.csv"),
        PAIR_HEADER,
        statuses.iter().map(|(id, status, interval)| {
            pair_row(
                id,
                "A",
                "B",
                *status,
                None,
                interval.map(|i| (i, dt)),
                by_id.get(id.as_str()).copied(),
            )
        }),
    )?;
    let refs: Vec<&PairRecord> = records.iter().collect();
    write_frames(&out.join("frames.csv"), &refs)?;
    emit_histograms(
        std::iter::empty(),
        statuses.iter().filter_map(|(_, _, i)| i.map(|i| (i, dt))),
        out,
    )?;
    let report = aggregate(&records, dt).map_err(|_| PipelineError::EmptyCorpus("no evaluable mode table".into()))?;
    write_json(
        &out.join("report.json"),
        &ReportFile {
            manifest: "manifest.json",
            report: &report,
        },
    )?;
    write_curves(&out.join("curves.csv"), &report)?;
    let mut manifest = RunManifest::new("report", cfg, MissingAgentPolicy::default());
    for (i, t) in tables.iter().enumerate() {
        manifest
            .inputs
            .insert(format!("mode_table_{i}"), t.display().to_string());
    }
    manifest.inputs.insert("dt".into(), dt.to_string());
    manifest.outputs = [
        "manifest.json",
        "pairs.csv",
        "frames.csv",
        "report.json",
        "curves.csv",
        "heatmap.csv",
        "ihs_hist.csv",
    ]
    .map(String::from)
    .to_vec();
    manifest.elapsed_seconds = started.elapsed().as_secs_f64();
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(report)
}
