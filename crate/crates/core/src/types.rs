//! Scenes, trajectories, prediction sets and evaluation settings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Displacements shorter than this are treated as "not moving".
pub const STATIONARY_EPS: f64 = 1e-9;

/// Relative tolerance on sample spacing, as a fraction of `dt`.
const SPACING_TOL: f64 = 1e-6;

/// A point or displacement in the ground plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Four-quadrant angle of the vector.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn lerp(self, other: Self, t: f64) -> Self {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn rotate(self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// One timestamped position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Problems with a single trajectory, before it is attached to an agent.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("trajectory has {0} samples, at least 2 are required")]
    Short(usize),
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample {index} breaks uniform spacing of {dt} s")]
    NonUniform { index: usize, dt: f64 },
    #[error("frame period must be positive and finite, got {0}")]
    BadPeriod(f64),
}

/// Uniformly sampled 2-D trajectory. Sample `i` is taken at `start_time + i * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    start_time: f64,
    dt: f64,
    points: Vec<Vec2>,
}

impl Trajectory {
    pub fn new(start_time: f64, dt: f64, points: Vec<Vec2>) -> Result<Self, TrajectoryError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(TrajectoryError::BadPeriod(dt));
        }
        if points.len() < 2 {
            return Err(TrajectoryError::Short(points.len()));
        }
        if !start_time.is_finite() {
            return Err(TrajectoryError::NonFinite { index: 0 });
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(TrajectoryError::NonFinite { index });
        }
        Ok(Self {
            start_time,
            dt,
            points,
        })
    }

    /// Builds a trajectory from timestamped samples, checking that the
    /// spacing matches `dt`.
    pub fn from_samples(samples: &[Sample], dt: f64) -> Result<Self, TrajectoryError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(TrajectoryError::BadPeriod(dt));
        }
        if samples.len() < 2 {
            return Err(TrajectoryError::Short(samples.len()));
        }
        for (index, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite()) {
                return Err(TrajectoryError::NonFinite { index });
            }
        }
        for (index, w) in samples.windows(2).enumerate() {
            if ((w[1].t - w[0].t) - dt).abs() > SPACING_TOL * dt {
                return Err(TrajectoryError::NonUniform {
                    index: index + 1,
                    dt,
                });
            }
        }
        let points = samples.iter().map(|s| Vec2::new(s.x, s.y)).collect();
        Self::new(samples[0].t, dt, points)
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_time + i as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.points.len() - 1)
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| Sample {
                t: self.time(i),
                x: p.x,
                y: p.y,
            })
            .collect()
    }

    /// Linear interpolation with `factor - 1` new points inside every segment.
    /// Original samples are kept bit-for-bit.
    pub fn resample(&self, factor: usize) -> Trajectory {
        assert!(factor >= 1, "resampling factor must be at least 1");
        Trajectory {
            start_time: self.start_time,
            dt: self.dt / factor as f64,
            points: resample_points(&self.points, factor),
        }
    }

    /// Heading (rad) and speed (m/s) at sample `i`.
    pub fn heading_and_speed(&self, i: usize) -> Result<(f64, f64), IndexOutOfRange> {
        if i >= self.points.len() {
            return Err(IndexOutOfRange {
                index: i,
                len: self.points.len(),
            });
        }
        let kin = kinematics(&self.points, self.dt, 0.0);
        Ok((kin[i].heading, kin[i].speed))
    }

    pub fn kinematics(&self) -> Vec<Kinematics> {
        kinematics(&self.points, self.dt, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("index {index} out of range for trajectory of length {len}")]
pub struct IndexOutOfRange {
    pub index: usize,
    pub len: usize,
}

/// Resamples a point sequence by linear interpolation. An empty or single-point
/// sequence is returned as is.
pub fn resample_points(points: &[Vec2], factor: usize) -> Vec<Vec2> {
    assert!(factor >= 1, "resampling factor must be at least 1");
    if factor == 1 || points.len() < 2 {
        return points.to_vec();
    }
    let mut out = Vec::with_capacity((points.len() - 1) * factor + 1);
    for w in points.windows(2) {
        out.push(w[0]);
        for j in 1..factor {
            out.push(w[0].lerp(w[1], j as f64 / factor as f64));
        }
    }
    out.push(points[points.len() - 1]);
    out
}

/// Finite-difference heading and speed at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub heading: f64,
    pub speed: f64,
}

/// Central differences inside, one-sided at the ends. When the displacement
/// vanishes the speed is zero and the last well-defined heading is carried
/// forward, starting from `initial_heading`.
pub fn kinematics(points: &[Vec2], dt: f64, initial_heading: f64) -> Vec<Kinematics> {
    let n = points.len();
    let mut out = Vec::with_capacity(n);
    let mut last_heading = initial_heading;
    for i in 0..n {
        let (disp, span) = match n {
            0 | 1 => (Vec2::default(), 1.0),
            _ if i == 0 => (points[1] - points[0], dt),
            _ if i == n - 1 => (points[n - 1] - points[n - 2], dt),
            _ => (points[i + 1] - points[i - 1], 2.0 * dt),
        };
        let norm = disp.norm();
        if norm < STATIONARY_EPS {
            out.push(Kinematics {
                heading: last_heading,
                speed: 0.0,
            });
        } else {
            last_heading = disp.angle();
            out.push(Kinematics {
                heading: last_heading,
                speed: norm / span,
            });
        }
    }
    out
}

/// Vehicle footprint, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

impl Footprint {
    pub fn new(length: f64, width: f64) -> Self {
        Self { length, width }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub width: f64,
    pub length: f64,
    pub trajectory: Trajectory,
}

impl Agent {
    pub fn new(id: impl Into<String>, width: f64, length: f64, trajectory: Trajectory) -> Self {
        Self {
            id: id.into(),
            width,
            length,
            trajectory,
        }
    }

    pub fn footprint(&self) -> Footprint {
        Footprint::new(self.length, self.width)
    }

    /// Scene frame index of the first sample.
    pub fn first_frame(&self) -> usize {
        frame_of(self.trajectory.start_time(), self.trajectory.dt())
    }

    /// Scene frame index of the last sample (inclusive).
    pub fn last_frame(&self) -> usize {
        self.first_frame() + self.trajectory.len() - 1
    }

    pub fn is_present(&self, frame: usize) -> bool {
        frame >= self.first_frame() && frame <= self.last_frame()
    }

    /// Position at a scene frame, if the agent was recorded then.
    pub fn position_at(&self, frame: usize) -> Option<Vec2> {
        self.is_present(frame)
            .then(|| self.trajectory.points()[frame - self.first_frame()])
    }

    /// Recorded positions over the inclusive frame range.
    pub fn window(&self, first: usize, last: usize) -> &[Vec2] {
        let f0 = self.first_frame();
        &self.trajectory.points()[first - f0..=last - f0]
    }
}

/// Scene frames count from time zero: frame `k` is at `k * dt`.
pub fn frame_of(t: f64, dt: f64) -> usize {
    (t / dt).round().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("scene has no agents")]
    NoAgents,
    #[error("scene frame period must be positive, got {0}")]
    BadPeriod(f64),
    #[error("agent {agent}: {detail}")]
    NonUniformSampling { agent: String, detail: String },
    #[error("agent {agent}: trajectory has {samples} samples, at least 2 are required")]
    ShortTrajectory { agent: String, samples: usize },
    #[error("agent id {0} appears more than once")]
    DuplicateAgentId(String),
    #[error("agent {agent}: non-finite value at sample {sample}")]
    NonFiniteCoordinate { agent: String, sample: usize },
    #[error("agent {agent}: invalid footprint (width {width}, length {length})")]
    InvalidDimensions {
        agent: String,
        width: f64,
        length: f64,
    },
}

impl SceneError {
    pub(crate) fn from_trajectory(agent: &str, err: TrajectoryError) -> Self {
        let agent = agent.to_string();
        match err {
            TrajectoryError::Short(samples) => SceneError::ShortTrajectory { agent, samples },
            TrajectoryError::NonFinite { index } => SceneError::NonFiniteCoordinate {
                agent,
                sample: index,
            },
            e @ (TrajectoryError::NonUniform { .. } | TrajectoryError::BadPeriod(_)) => {
                SceneError::NonUniformSampling {
                    agent,
                    detail: e.to_string(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub dt: f64,
    pub agents: Vec<Agent>,
}

impl Scene {
    pub fn agent(&self, id: &str) -> Option<&Agent> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn first_frame(&self) -> usize {
        self.agents.iter().map(Agent::first_frame).min().unwrap_or(0)
    }

    pub fn last_frame(&self) -> usize {
        self.agents.iter().map(Agent::last_frame).max().unwrap_or(0)
    }
}

/// Checks every scene invariant and hands the scene back untouched.
pub fn validate_scene(scene: Scene) -> Result<Scene, SceneError> {
    if !(scene.dt.is_finite() && scene.dt > 0.0) {
        return Err(SceneError::BadPeriod(scene.dt));
    }
    if scene.agents.is_empty() {
        return Err(SceneError::NoAgents);
    }
    let mut seen = BTreeSet::new();
    for agent in &scene.agents {
        if !seen.insert(agent.id.as_str()) {
            return Err(SceneError::DuplicateAgentId(agent.id.clone()));
        }
        let traj = &agent.trajectory;
        if traj.len() < 2 {
            return Err(SceneError::ShortTrajectory {
                agent: agent.id.clone(),
                samples: traj.len(),
            });
        }
        if let Some(sample) = traj.points().iter().position(|p| !p.is_finite()) {
            return Err(SceneError::NonFiniteCoordinate {
                agent: agent.id.clone(),
                sample,
            });
        }
        if (traj.dt() - scene.dt).abs() > SPACING_TOL * scene.dt {
            return Err(SceneError::NonUniformSampling {
                agent: agent.id.clone(),
                detail: format!(
                    "frame period {} s differs from scene period {} s",
                    traj.dt(),
                    scene.dt
                ),
            });
        }
        let k = traj.start_time() / scene.dt;
        if traj.start_time() < -SPACING_TOL * scene.dt || (k - k.round()).abs() > 1e-6 {
            return Err(SceneError::NonUniformSampling {
                agent: agent.id.clone(),
                detail: format!(
                    "start time {} s is not on the scene frame grid",
                    traj.start_time()
                ),
            });
        }
        let (w, l) = (agent.width, agent.length);
        if !(w.is_finite() && l.is_finite() && w > 0.0 && l >= w) {
            return Err(SceneError::InvalidDimensions {
                agent: agent.id.clone(),
                width: w,
                length: l,
            });
        }
    }
    Ok(scene)
}

/// One joint future for every predicted agent.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    pub probability: f64,
    /// Future positions at `frame + 1, frame + 2, ...`.
    pub trajs: BTreeMap<String, Vec<Vec2>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictionError {
    #[error("frame {frame}: prediction set has no samples")]
    Empty { frame: usize },
    #[error("frame {frame}: sample {index} probability {p} is outside [0, 1]")]
    BadProbability { frame: usize, index: usize, p: f64 },
    #[error("frame {frame}: samples are not ordered by non-increasing probability")]
    Unordered { frame: usize },
    #[error("frame {frame}: probabilities sum to {sum} (> 1)")]
    ProbabilitySum { frame: usize, sum: f64 },
    #[error("frame {frame}: sample {index} predicts a different set of agents")]
    AgentSetMismatch { frame: usize, index: usize },
    #[error("frame {frame}: agent {agent} has a non-finite predicted position")]
    NonFinite { frame: usize, agent: String },
}

/// K joint samples for one scene frame, most likely first.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPredictionSet {
    pub frame: usize,
    pub samples: Vec<JointSample>,
}

impl JointPredictionSet {
    pub fn new(frame: usize, samples: Vec<JointSample>) -> Result<Self, PredictionError> {
        if samples.is_empty() {
            return Err(PredictionError::Empty { frame });
        }
        for (index, s) in samples.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.probability) {
                return Err(PredictionError::BadProbability {
                    frame,
                    index,
                    p: s.probability,
                });
            }
            for (agent, traj) in &s.trajs {
                if traj.iter().any(|p| !p.is_finite()) {
                    return Err(PredictionError::NonFinite {
                        frame,
                        agent: agent.clone(),
                    });
                }
            }
        }
        if samples
            .windows(2)
            .any(|w| w[1].probability > w[0].probability)
        {
            return Err(PredictionError::Unordered { frame });
        }
        let sum: f64 = samples.iter().map(|s| s.probability).sum();
        if sum > 1.0 + 1e-6 {
            return Err(PredictionError::ProbabilitySum { frame, sum });
        }
        let ids: Vec<&String> = samples[0].trajs.keys().collect();
        for (index, s) in samples.iter().enumerate().skip(1) {
            if !s.trajs.keys().eq(ids.iter().copied()) {
                return Err(PredictionError::AgentSetMismatch { frame, index });
            }
        }
        Ok(Self { frame, samples })
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }

    pub fn most_likely(&self) -> &JointSample {
        &self.samples[0]
    }

    pub fn predicts(&self, agent: &str) -> bool {
        self.samples[0].trajs.contains_key(agent)
    }
}

/// What to do when a prediction set lacks an agent that is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingAgentPolicy {
    /// Report `MissingAgentPrediction`.
    #[default]
    Error,
    /// Hold the agent at its current ground-truth position for the horizon.
    StaticGroundTruth,
    /// Leave the agent (or the frame of a pair) out of the evaluation.
    Skip,
}

impl fmt::Display for MissingAgentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MissingAgentPolicy::Error => "error",
            MissingAgentPolicy::StaticGroundTruth => "static",
            MissingAgentPolicy::Skip => "skip",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("theta_hat must be non-negative and finite, got {0}")]
    NegativeThetaHat(f64),
    #[error("interp_factor must be at least 1")]
    ZeroInterpFactor,
    #[error("prediction horizon {horizon} s is not a multiple of the frame period {dt} s")]
    HorizonNotMultiple { horizon: f64, dt: f64 },
}

/// Evaluation thresholds and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Path-sharing distance threshold, m.
    pub d_collision: f64,
    /// Largest accepted gap between the two path-sharing onsets, s.
    pub dt_ps_max: f64,
    /// Longitudinal acceleration limit, m/s².
    pub a_lon_max: f64,
    /// Lateral acceleration limit, m/s².
    pub a_lat_max: f64,
    /// Prediction horizon, s.
    pub horizon: f64,
    /// Static-class half width, rad.
    pub theta_hat: f64,
    pub interp_factor: usize,
    /// Path sharing must start strictly after this time. `None` uses the
    /// first co-observed timestamp of each pair.
    pub t_min: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            d_collision: 1.5,
            dt_ps_max: 6.0,
            a_lon_max: 1.47,
            a_lat_max: 1.18,
            horizon: 6.0,
            theta_hat: 0.0,
            interp_factor: 4,
            t_min: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("d_collision", self.d_collision),
            ("dt_ps_max", self.dt_ps_max),
            ("a_lon_max", self.a_lon_max),
            ("a_lat_max", self.a_lat_max),
            ("horizon", self.horizon),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::NotPositive { name, value });
            }
        }
        if !(self.theta_hat.is_finite() && self.theta_hat >= 0.0) {
            return Err(ConfigError::NegativeThetaHat(self.theta_hat));
        }
        if self.interp_factor == 0 {
            return Err(ConfigError::ZeroInterpFactor);
        }
        Ok(())
    }

    /// Checks that the horizon is a whole number of frames for `dt`.
    pub fn validate_for_period(&self, dt: f64) -> Result<(), ConfigError> {
        self.validate()?;
        let k = self.horizon / dt;
        if (k - k.round()).abs() > 1e-6 || k.round() < 1.0 {
            return Err(ConfigError::HorizonNotMultiple {
                horizon: self.horizon,
                dt,
            });
        }
        Ok(())
    }

    /// Horizon length in frames.
    pub fn horizon_frames(&self, dt: f64) -> usize {
        (self.horizon / dt).round() as usize
    }
}
