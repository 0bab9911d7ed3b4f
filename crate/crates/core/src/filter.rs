//! Path-sharing detection and safety-critical pair selection.
//!
//! Two agents share a path at a sample when some sample of the other agent,
//! at any time, lies closer than `d_collision`. A pair is kept when neither
//! agent is on the shared path at the start of the co-observed window, both
//! reach it later, and the two onsets are at most `dt_ps_max` apart.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::types::{resample_points, EvalConfig, Scene, Vec2};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("agent {0} is not in the scene")]
    UnknownAgent(String),
    #[error("agents {0} and {1} are never observed at the same time")]
    EmptyOverlap(String, String),
}

/// Inclusive range of scene frames during which both agents are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameWindow {
    pub first: usize,
    pub last: usize,
}

impl FrameWindow {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.first && frame <= self.last
    }

    pub fn frames(&self) -> impl Iterator<Item = usize> {
        self.first..=self.last
    }
}

/// Distances between every interpolated sample of A (rows) and of B (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDistanceField {
    n: usize,
    factor: usize,
    data: Vec<f64>,
}

impl PairwiseDistanceField {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn interp_factor(&self) -> usize {
        self.factor
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Smallest same-time distance (the diagonal).
    pub fn min_simultaneous(&self) -> f64 {
        (0..self.n)
            .map(|i| self.get(i, i))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Builds the distance field over two equally long, time-aligned windows.
pub fn pairwise_distance_matrix(
    a: &[Vec2],
    b: &[Vec2],
    interp_factor: usize,
) -> Result<PairwiseDistanceField, PairwiseError> {
    if a.is_empty() || b.is_empty() {
        return Err(PairwiseError::EmptyOverlap);
    }
    if a.len() != b.len() {
        return Err(PairwiseError::LengthMismatch(a.len(), b.len()));
    }
    let factor = interp_factor.max(1);
    let ra = resample_points(a, factor);
    let rb = resample_points(b, factor);
    let n = ra.len();
    let mut data = Vec::with_capacity(n * n);
    for pa in &ra {
        data.extend(rb.iter().map(|pb| pa.distance(*pb)));
    }
    Ok(PairwiseDistanceField { n, factor, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PairwiseError {
    #[error("no common observation window")]
    EmptyOverlap,
    #[error("windows differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Shared-path samples of both agents, as frame offsets into the window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSharingResult {
    pub i_ps_a: Vec<usize>,
    pub i_ps_b: Vec<usize>,
    pub t_ps_a: Option<f64>,
    pub t_ps_b: Option<f64>,
    pub dt_ps: Option<f64>,
}

impl PathSharingResult {
    pub fn swapped(&self) -> Self {
        Self {
            i_ps_a: self.i_ps_b.clone(),
            i_ps_b: self.i_ps_a.clone(),
            t_ps_a: self.t_ps_b,
            t_ps_b: self.t_ps_a,
            dt_ps: self.dt_ps,
        }
    }
}

/// Marks samples on the commonly shared path. Interpolated indices map back to
/// the frame at or before them. `start_time` and `dt` describe the original
/// (not interpolated) window.
pub fn path_sharing_sets(
    field: &PairwiseDistanceField,
    d_collision: f64,
    start_time: f64,
    dt: f64,
) -> PathSharingResult {
    let n = field.n();
    let factor = field.interp_factor();
    let mut row_hit = vec![false; n];
    let mut col_hit = vec![false; n];
    for (i, hit) in row_hit.iter_mut().enumerate() {
        for (j, d) in field.row(i).iter().enumerate() {
            if *d < d_collision {
                *hit = true;
                col_hit[j] = true;
            }
        }
    }
    let to_frames = |hits: &[bool]| {
        let mut frames: Vec<usize> = hits
            .iter()
            .enumerate()
            .filter(|(_, h)| **h)
            .map(|(k, _)| k / factor)
            .collect();
        frames.dedup();
        frames
    };
    let i_ps_a = to_frames(&row_hit);
    let i_ps_b = to_frames(&col_hit);
    let t_ps_a = i_ps_a.first().map(|&i| start_time + i as f64 * dt);
    let t_ps_b = i_ps_b.first().map(|&i| start_time + i as f64 * dt);
    let dt_ps = match (i_ps_a.first(), i_ps_b.first()) {
        (Some(&ia), Some(&ib)) => Some(ia.abs_diff(ib) as f64 * dt),
        _ => None,
    };
    PathSharingResult {
        i_ps_a,
        i_ps_b,
        t_ps_a,
        t_ps_b,
        dt_ps,
    }
}

/// Why a pair is not a safety-critical interaction.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", content = "detail")]
pub enum Rejection {
    NotCoObserved,
    NeverPathSharing,
    SharedFromStart(String),
    TimeGapTooLarge(f64),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::NotCoObserved => f.write_str("NotCoObserved"),
            Rejection::NeverPathSharing => f.write_str("NeverPathSharing"),
            Rejection::SharedFromStart(a) => write!(f, "SharedFromStart({a})"),
            Rejection::TimeGapTooLarge(dt) => write!(f, "TimeGapTooLarge({dt})"),
        }
    }
}

/// A pair that passed all three interaction criteria.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPair {
    pub agent_a: String,
    pub agent_b: String,
    pub sharing: PathSharingResult,
    pub co_observed: FrameWindow,
    /// Closest same-time distance over the window, on the interpolated grid.
    pub min_distance: f64,
}

/// Result of screening one unordered pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairScreening {
    pub agent_a: String,
    pub agent_b: String,
    pub co_observed: Option<FrameWindow>,
    pub sharing: Option<PathSharingResult>,
    pub min_distance: Option<f64>,
    pub outcome: Result<(), Rejection>,
}

impl PairScreening {
    pub fn critical(&self) -> Option<CriticalPair> {
        self.outcome.as_ref().ok()?;
        Some(CriticalPair {
            agent_a: self.agent_a.clone(),
            agent_b: self.agent_b.clone(),
            sharing: self.sharing.clone()?,
            co_observed: self.co_observed?,
            min_distance: self.min_distance?,
        })
    }

    /// True when the pair passed the two onset criteria, whatever its time gap.
    pub fn path_crossing(&self) -> bool {
        matches!(
            self.outcome,
            Ok(()) | Err(Rejection::TimeGapTooLarge(_))
        )
    }
}

pub fn co_observed_window(scene: &Scene, a: &str, b: &str) -> Result<Option<FrameWindow>, FilterError> {
    let aa = scene
        .agent(a)
        .ok_or_else(|| FilterError::UnknownAgent(a.to_string()))?;
    let ab = scene
        .agent(b)
        .ok_or_else(|| FilterError::UnknownAgent(b.to_string()))?;
    let first = aa.first_frame().max(ab.first_frame());
    let last = aa.last_frame().min(ab.last_frame());
    Ok((first <= last).then_some(FrameWindow { first, last }))
}

/// Screens one pair against the interaction criteria.
pub fn screen_pair(scene: &Scene, a: &str, b: &str, cfg: &EvalConfig) -> Result<PairScreening, FilterError> {
    let window = co_observed_window(scene, a, b)?;
    let mut out = PairScreening {
        agent_a: a.to_string(),
        agent_b: b.to_string(),
        co_observed: window,
        sharing: None,
        min_distance: None,
        outcome: Err(Rejection::NotCoObserved),
    };
    let Some(window) = window else {
        return Ok(out);
    };
    // Both agents exist, checked above.
    let pa = scene.agent(a).unwrap().window(window.first, window.last);
    let pb = scene.agent(b).unwrap().window(window.first, window.last);
    let field = pairwise_distance_matrix(pa, pb, cfg.interp_factor)
        .map_err(|_| FilterError::EmptyOverlap(a.to_string(), b.to_string()))?;
    let start_time = window.first as f64 * scene.dt;
    let sharing = path_sharing_sets(&field, cfg.d_collision, start_time, scene.dt);
    out.min_distance = Some(field.min_simultaneous());
    out.outcome = decide(&sharing, a, b, start_time, cfg);
    out.sharing = Some(sharing);
    Ok(out)
}

fn decide(sharing: &PathSharingResult, a: &str, b: &str, start_time: f64, cfg: &EvalConfig) -> Result<(), Rejection> {
    let (Some(ta), Some(tb), Some(dt_ps)) = (sharing.t_ps_a, sharing.t_ps_b, sharing.dt_ps) else {
        return Err(Rejection::NeverPathSharing);
    };
    let t_min = cfg.t_min.unwrap_or(start_time);
    if ta <= t_min {
        return Err(Rejection::SharedFromStart(a.to_string()));
    }
    if tb <= t_min {
        return Err(Rejection::SharedFromStart(b.to_string()));
    }
    if dt_ps > cfg.dt_ps_max {
        return Err(Rejection::TimeGapTooLarge(dt_ps));
    }
    Ok(())
}

/// Accepts or rejects the pair `(a, b)`.
pub fn classify_pair(
    scene: &Scene,
    a: &str,
    b: &str,
    cfg: &EvalConfig,
) -> Result<Result<CriticalPair, Rejection>, FilterError> {
    let s = screen_pair(scene, a, b, cfg)?;
    Ok(match s.outcome {
        Ok(()) => Ok(s.critical().expect("accepted pairs carry sharing data")),
        Err(r) => Err(r),
    })
}

/// Screens all unordered pairs, ordered by (smaller id, larger id).
pub fn screen_scene(scene: &Scene, cfg: &EvalConfig) -> Vec<PairScreening> {
    let mut ids: Vec<&str> = scene.agents.iter().map(|a| a.id.as_str()).collect();
    ids.sort_unstable();
    let pairs: Vec<(&str, &str)> = ids
        .iter()
        .enumerate()
        .flat_map(|(i, a)| ids[i + 1..].iter().map(move |b| (*a, *b)))
        .collect();
    pairs
        .par_iter()
        .map(|(a, b)| screen_pair(scene, a, b, cfg).expect("ids come from the scene"))
        .collect()
}

/// The safety-critical pairs of a scene in deterministic order.
pub fn filter_scene(scene: &Scene, cfg: &EvalConfig) -> Vec<CriticalPair> {
    screen_scene(scene, cfg)
        .iter()
        .filter_map(PairScreening::critical)
        .collect()
}
