//! Speed-profile rollouts along ground-truth paths, feasible homotopy classes
//! and the inevitable homotopy state.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::collision::{is_collision_poses, poses_from_points};
use crate::filter::{CriticalPair, FrameWindow};
use crate::homotopy::{gt_mode_sequence, homotopy_class, winding_angle, ClassSet, GtMode, HomotopyClass};
use crate::path::{Path, SpeedCap};
use crate::types::{frame_of, Agent, EvalConfig, Scene, Trajectory, Vec2};

/// Ordered so that ties in the oracle break Accel < ConstVel < Decel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ProfileKind {
    Accel,
    ConstVel,
    Decel,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 3] = [ProfileKind::Accel, ProfileKind::ConstVel, ProfileKind::Decel];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileKind::Accel => "accel",
            ProfileKind::ConstVel => "const",
            ProfileKind::Decel => "decel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedProfile {
    pub kind: ProfileKind,
    /// Signed longitudinal acceleration, m/s².
    pub a_lon: f64,
    pub v_max: f64,
    pub v0: f64,
}

impl SpeedProfile {
    pub fn new(kind: ProfileKind, v0: f64, v_max: f64, a_lon_max: f64) -> Self {
        let a_lon = match kind {
            ProfileKind::Accel => a_lon_max,
            ProfileKind::ConstVel => 0.0,
            ProfileKind::Decel => -a_lon_max,
        };
        Self {
            kind,
            a_lon,
            v_max,
            v0,
        }
    }

    fn target_speed(&self) -> f64 {
        match self.kind {
            ProfileKind::Accel => self.v_max,
            ProfileKind::ConstVel => self.v0.min(self.v_max),
            ProfileKind::Decel => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RolloutError {
    #[error("frame {frame} is outside the recording of agent {agent}")]
    FrameOutOfRange { agent: String, frame: usize },
}

/// A simulated future along an agent's path, starting at its current position.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub trajectory: Trajectory,
    /// Speed at each sample, m/s.
    pub speeds: Vec<f64>,
    /// Arc length travelled at each sample, m.
    pub arc_length: Vec<f64>,
    /// Heading used before the first motion.
    pub initial_heading: f64,
}

/// Ground-truth path of one agent from a given frame onward, ready for rollouts.
#[derive(Debug, Clone)]
pub struct AgentPath {
    pub path: Path,
    cap: SpeedCap,
    start_time: f64,
    /// Ground-truth speed at the start frame.
    pub v0: f64,
    /// Ground-truth heading at the start frame.
    pub heading: f64,
    a_lon_max: f64,
    v_max: f64,
}

impl AgentPath {
    pub fn new(agent: &Agent, start_frame: usize, v_max: f64, cfg: &EvalConfig) -> Result<Self, RolloutError> {
        if !agent.is_present(start_frame) {
            return Err(RolloutError::FrameOutOfRange {
                agent: agent.id.clone(),
                frame: start_frame,
            });
        }
        let kin = agent.trajectory.kinematics();
        let i0 = start_frame - agent.first_frame();
        let final_heading = kin.last().map_or(0.0, |k| k.heading);
        let path = Path::new(&agent.trajectory.points()[i0..], final_heading);
        let cap = SpeedCap::new(&path, v_max, cfg.a_lon_max, cfg.a_lat_max);
        Ok(Self {
            path,
            cap,
            start_time: agent.trajectory.time(i0),
            v0: kin[i0].speed.min(v_max),
            heading: kin[i0].heading,
            a_lon_max: cfg.a_lon_max,
            v_max,
        })
    }

    pub fn profile(&self, kind: ProfileKind) -> SpeedProfile {
        SpeedProfile::new(kind, self.v0, self.v_max, self.a_lon_max)
    }

    pub fn speed_cap2(&self, s: f64) -> f64 {
        self.cap.cap2_at(s)
    }

    /// Integrates the profile exactly over `steps` intervals of `sample_dt`.
    pub fn simulate(&self, profile: &SpeedProfile, sample_dt: f64, steps: usize) -> Rollout {
        let rate = self.a_lon_max;
        let mut v = profile.v0.max(0.0);
        let mut s = 0.0;
        let mut speeds = Vec::with_capacity(steps + 1);
        let mut arc = Vec::with_capacity(steps + 1);
        let mut points = Vec::with_capacity(steps + 1);
        speeds.push(v);
        arc.push(s);
        points.push(self.path.point_at(s));
        let target = profile.target_speed();
        for _ in 0..steps {
            let (v_next, ds) = self.step(v, s, target, rate, sample_dt);
            v = v_next;
            s += ds;
            speeds.push(v);
            arc.push(s);
            points.push(self.path.point_at(s));
        }
        Rollout {
            trajectory: Trajectory::new(self.start_time, sample_dt, pad_single(points))
                .expect("rollout samples are finite"),
            speeds,
            arc_length: arc,
            initial_heading: self.heading,
        }
    }

    /// One step toward `target`, backing off so the end speed stays under the cap.
    fn step(&self, v: f64, s: f64, target: f64, rate: f64, h: f64) -> (f64, f64) {
        let fits = |(ve, ds): (f64, f64)| ve * ve <= self.cap.cap2_at(s + ds) + 1e-12;
        let first = approach(v, target, rate, h);
        if fits(first) {
            return first;
        }
        // Full braking keeps the cap whenever the current speed is under it.
        let floor = (v - rate * h).max(0.0);
        let mut lo = floor;
        let mut hi = target.max(floor);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if fits(approach(v, mid, rate, h)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        approach(v, lo, rate, h)
    }
}

/// `Trajectory` needs two samples; a zero-step rollout repeats its start.
fn pad_single(mut points: Vec<Vec2>) -> Vec<Vec2> {
    if points.len() == 1 {
        points.push(points[0]);
    }
    points
}

/// Moves speed `v` toward `target` at `rate` for time `h`. Returns the end
/// speed and the exact distance covered.
fn approach(v: f64, target: f64, rate: f64, h: f64) -> (f64, f64) {
    let gap = target - v;
    if gap == 0.0 || rate <= 0.0 {
        return (v, v * h);
    }
    let t_reach = gap.abs() / rate;
    if t_reach >= h {
        let ve = v + gap.signum() * rate * h;
        (ve, 0.5 * (v + ve) * h)
    } else {
        (target, 0.5 * (v + target) * t_reach + target * (h - t_reach))
    }
}

/// Rollout sampled at the scene period for `steps` frames after `start_frame`.
pub fn rollout_trajectory(
    agent: &Agent,
    start_frame: usize,
    profile: &SpeedProfile,
    steps: usize,
    cfg: &EvalConfig,
) -> Result<Trajectory, RolloutError> {
    let path = AgentPath::new(agent, start_frame, profile.v_max, cfg)?;
    Ok(path.simulate(profile, agent.trajectory.dt(), steps).trajectory)
}

/// Largest finite-difference speed of any agent at any frame.
pub fn max_scene_speed(scene: &Scene) -> f64 {
    scene
        .agents
        .iter()
        .flat_map(|a| a.trajectory.kinematics())
        .map(|k| k.speed)
        .fold(0.0, f64::max)
}

/// Outcome of one rollout combination at a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RolloutCheck {
    pub profile_a: ProfileKind,
    pub profile_b: ProfileKind,
    pub collision: bool,
    pub delta_theta: f64,
    pub class: HomotopyClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityFrame {
    pub frame: usize,
    pub classes: ClassSet,
    pub checks: Vec<RolloutCheck>,
}

/// Simulates rollouts for one critical pair of a scene.
#[derive(Debug, Clone)]
pub struct PairSimulator<'a> {
    a: &'a Agent,
    b: &'a Agent,
    window: FrameWindow,
    v_max: f64,
    cfg: EvalConfig,
    dt: f64,
}

impl<'a> PairSimulator<'a> {
    pub fn new(scene: &'a Scene, pair: &CriticalPair, cfg: &EvalConfig) -> Option<Self> {
        Some(Self {
            a: scene.agent(&pair.agent_a)?,
            b: scene.agent(&pair.agent_b)?,
            window: pair.co_observed,
            v_max: max_scene_speed(scene),
            cfg: *cfg,
            dt: scene.dt,
        })
    }

    pub fn with_v_max(mut self, v_max: f64) -> Self {
        self.v_max = v_max;
        self
    }

    /// Both accelerate/decelerate combinations at `frame`, simulated until the
    /// end of the co-observed window on the interpolated time grid.
    pub fn rollouts(&self, frame: usize, combos: &[(ProfileKind, ProfileKind)]) -> Vec<(RolloutCheck, Rollout, Rollout)> {
        let pa = AgentPath::new(self.a, frame, self.v_max, &self.cfg).expect("frame inside window");
        let pb = AgentPath::new(self.b, frame, self.v_max, &self.cfg).expect("frame inside window");
        let factor = self.cfg.interp_factor.max(1);
        let steps = (self.window.last - frame) * factor;
        let h = self.dt / factor as f64;
        combos
            .iter()
            .map(|&(ka, kb)| {
                let ra = pa.simulate(&pa.profile(ka), h, steps);
                let rb = pb.simulate(&pb.profile(kb), h, steps);
                let poses_a = poses_from_points(ra.trajectory.points(), ra.initial_heading);
                let poses_b = poses_from_points(rb.trajectory.points(), rb.initial_heading);
                let collision = is_collision_poses(&poses_a, &poses_b, self.a.footprint(), self.b.footprint())
                    .expect("equal step counts");
                let w = winding_angle(ra.trajectory.points(), rb.trajectory.points()).expect("equal step counts");
                let check = RolloutCheck {
                    profile_a: ka,
                    profile_b: kb,
                    collision,
                    delta_theta: w.delta_theta,
                    class: homotopy_class(w.delta_theta, self.cfg.theta_hat),
                };
                (check, ra, rb)
            })
            .collect()
    }

    pub fn feasible_set(&self, frame: usize) -> FeasibilityFrame {
        let combos = [
            (ProfileKind::Decel, ProfileKind::Accel),
            (ProfileKind::Accel, ProfileKind::Decel),
        ];
        let checks: Vec<RolloutCheck> = self.rollouts(frame, &combos).into_iter().map(|(c, _, _)| c).collect();
        let classes = checks.iter().filter(|c| !c.collision).map(|c| c.class).collect();
        FeasibilityFrame { frame, classes, checks }
    }

    pub fn window(&self) -> FrameWindow {
        self.window
    }
}

/// Feasible homotopy classes of a critical pair at one frame.
pub fn feasible_homotopy_set(scene: &Scene, pair: &CriticalPair, frame: usize, cfg: &EvalConfig) -> ClassSet {
    match PairSimulator::new(scene, pair, cfg) {
        Some(sim) if pair.co_observed.contains(frame) => sim.feasible_set(frame).classes,
        _ => ClassSet::EMPTY,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimelineError {
    #[error("both classes stay feasible until the last co-observed frame")]
    NoCollapse,
    #[error("no frame with two feasible classes at or after the first prediction frame")]
    DegenerateInterval { collapse_frame: Option<usize> },
}

/// Collapse and last-two-feasible frames of a feasibility sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IhsFrames {
    /// First frame with a single feasible class after which two are never feasible again.
    pub collapse: Option<usize>,
    /// Last frame with two feasible classes.
    pub last_two: Option<usize>,
}

/// Locates the inevitable homotopy state. Frames must be in increasing order.
pub fn locate_ihs(sets: &[(usize, ClassSet)]) -> IhsFrames {
    let last_two = sets.iter().rev().find(|(_, s)| s.len() >= 2).map(|(f, _)| *f);
    let collapse = sets
        .iter()
        .filter(|(f, _)| last_two.is_none_or(|l| *f > l))
        .find(|(_, s)| s.len() == 1)
        .map(|(f, _)| *f);
    IhsFrames { collapse, last_two }
}

/// The evaluation interval of a pair, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EvalInterval {
    pub start: usize,
    pub last: usize,
    pub collapse: usize,
    pub gt_final: HomotopyClass,
}

/// Finds `[start, last]` from per-frame feasible sets and ground-truth classes.
/// `first_frame` is the earliest frame that may be evaluated.
pub fn evaluation_interval(
    sets: &[(usize, ClassSet)],
    gt: &[(usize, HomotopyClass)],
    horizon_frames: usize,
    first_frame: usize,
) -> Result<EvalInterval, TimelineError> {
    let ihs = locate_ihs(sets);
    let Some(last) = ihs.last_two else {
        return Err(TimelineError::DegenerateInterval {
            collapse_frame: ihs.collapse,
        });
    };
    let Some(collapse) = ihs.collapse else {
        return Err(TimelineError::NoCollapse);
    };
    if last < first_frame {
        return Err(TimelineError::DegenerateInterval {
            collapse_frame: Some(collapse),
        });
    }
    let class_at = |f: usize| gt.iter().find(|(g, _)| *g == f).map(|(_, c)| *c);
    let gt_final = class_at(last).ok_or(TimelineError::DegenerateInterval {
        collapse_frame: Some(collapse),
    })?;
    let lower = last.saturating_sub(horizon_frames).max(first_frame);
    let mut start = last;
    while start > lower && class_at(start - 1) == Some(gt_final) {
        start -= 1;
    }
    Ok(EvalInterval {
        start,
        last,
        collapse,
        gt_final,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionTimeline {
    pub agent_a: String,
    pub agent_b: String,
    pub dt: f64,
    pub frames: Vec<FeasibilityFrame>,
    pub gt: Vec<GtMode>,
    pub interval: EvalInterval,
    pub t_h_collapse: f64,
    pub t_h_final: f64,
    pub t_h_start: f64,
    pub h_gt_final: HomotopyClass,
}

impl InteractionTimeline {
    pub fn feasible_at(&self, frame: usize) -> Option<ClassSet> {
        self.frames.iter().find(|f| f.frame == frame).map(|f| f.classes)
    }

    pub fn gt_at(&self, frame: usize) -> Option<HomotopyClass> {
        self.gt.iter().find(|g| g.frame == frame).map(|g| g.class)
    }
}

/// Frame at which the first of the two agents enters the shared path. The
/// crossing order is settled from then on, so the inevitable state is searched
/// for at or before it.
pub fn shared_path_entry(pair: &CriticalPair, dt: f64) -> Option<usize> {
    let (a, b) = (pair.sharing.t_ps_a?, pair.sharing.t_ps_b?);
    Some(frame_of(a.min(b), dt))
}

/// Per-frame feasible sets for every co-observed frame.
pub fn feasibility_sequence(scene: &Scene, pair: &CriticalPair, cfg: &EvalConfig) -> Vec<FeasibilityFrame> {
    let Some(sim) = PairSimulator::new(scene, pair, cfg) else {
        return Vec::new();
    };
    let frames: Vec<usize> = pair.co_observed.frames().collect();
    frames.par_iter().map(|&f| sim.feasible_set(f)).collect()
}

/// Feasibility over the whole co-observed window, the inevitable homotopy state
/// and the evaluation interval. `first_prediction_frame` defaults to the first
/// co-observed frame.
pub fn interaction_timeline(
    scene: &Scene,
    pair: &CriticalPair,
    cfg: &EvalConfig,
    first_prediction_frame: Option<usize>,
) -> Result<InteractionTimeline, TimelineError> {
    let frames = feasibility_sequence(scene, pair, cfg);
    let gt = gt_mode_sequence(scene, pair, cfg);
    timeline_from_parts(scene, pair, cfg, frames, gt, first_prediction_frame)
}

pub fn timeline_from_parts(
    scene: &Scene,
    pair: &CriticalPair,
    cfg: &EvalConfig,
    frames: Vec<FeasibilityFrame>,
    gt: Vec<GtMode>,
    first_prediction_frame: Option<usize>,
) -> Result<InteractionTimeline, TimelineError> {
    let entry = shared_path_entry(pair, scene.dt);
    let sets: Vec<(usize, ClassSet)> = frames
        .iter()
        .filter(|f| entry.is_none_or(|e| f.frame <= e))
        .map(|f| (f.frame, f.classes))
        .collect();
    let gt_classes: Vec<(usize, HomotopyClass)> = gt.iter().map(|g| (g.frame, g.class)).collect();
    let first = first_prediction_frame
        .unwrap_or(pair.co_observed.first)
        .max(pair.co_observed.first);
    let interval = evaluation_interval(&sets, &gt_classes, cfg.horizon_frames(scene.dt), first)?;
    let t = |f: usize| f as f64 * scene.dt;
    Ok(InteractionTimeline {
        agent_a: pair.agent_a.clone(),
        agent_b: pair.agent_b.clone(),
        dt: scene.dt,
        frames,
        gt,
        t_h_collapse: t(interval.collapse),
        t_h_final: t(interval.last),
        t_h_start: t(interval.start),
        h_gt_final: interval.gt_final,
        interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Trajectory;

    fn straight_agent(n: usize, speed: f64, dt: f64) -> Agent {
        let pts = (0..n).map(|i| Vec2::new(i as f64 * speed * dt, 0.0)).collect();
        Agent::new("a", 2.0, 4.0, Trajectory::new(0.0, dt, pts).unwrap())
    }

    #[test]
    fn accel_from_rest_matches_closed_form() {
        let dt = 0.5;
        let agent = straight_agent(10, 1.0, dt);
        let cfg = EvalConfig::default();
        let path = AgentPath::new(&agent, 0, 10.0, &cfg).unwrap();
        let profile = SpeedProfile::new(ProfileKind::Accel, 0.0, 10.0, 1.47);
        let r = path.simulate(&profile, dt, 30);
        let t_star = 10.0 / 1.47;
        for (k, p) in r.trajectory.points().iter().enumerate() {
            let t = k as f64 * dt;
            let s = if t <= t_star {
                0.5 * 1.47 * t * t
            } else {
                0.5 * 1.47 * t_star * t_star + 10.0 * (t - t_star)
            };
            assert!((p.x - s).abs() < 1e-6, "k={k} x={} s={s}", p.x);
            assert!(p.y.abs() < 1e-12);
        }
    }

    #[test]
    fn braking_distance() {
        let dt = 0.5;
        let agent = straight_agent(10, 6.0, dt);
        let cfg = EvalConfig::default();
        let path = AgentPath::new(&agent, 0, 6.0, &cfg).unwrap();
        assert!((path.v0 - 6.0).abs() < 1e-12);
        let r = path.simulate(&path.profile(ProfileKind::Decel), dt, 20);
        let stop = 36.0 / (2.0 * 1.47);
        let last = r.trajectory.points().last().unwrap();
        assert!((last.x - stop).abs() < 1e-9);
        // Stopped from 4.08 s onward.
        assert_eq!(r.speeds[9], 0.0);
        assert!(r.speeds[8] > 0.0);
    }

    #[test]
    fn approach_exact() {
        assert_eq!(approach(2.0, 2.0, 1.0, 1.0), (2.0, 2.0));
        let (v, d) = approach(0.0, 1.0, 1.0, 2.0);
        assert_eq!(v, 1.0);
        assert!((d - 1.5).abs() < 1e-12);
    }

    #[test]
    fn locate_ihs_cases() {
        let two: ClassSet = "CW;CCW".parse().unwrap();
        let one: ClassSet = "CW".parse().unwrap();
        let seq = |v: &[ClassSet]| v.iter().enumerate().map(|(i, s)| (i, *s)).collect::<Vec<_>>();
        let r = locate_ihs(&seq(&[two, two, one, one]));
        assert_eq!((r.last_two, r.collapse), (Some(1), Some(2)));
        // Flicker: collapse counts only after the last two-class frame.
        let r = locate_ihs(&seq(&[two, one, two, one, one]));
        assert_eq!((r.last_two, r.collapse), (Some(2), Some(3)));
        let r = locate_ihs(&seq(&[two, two]));
        assert_eq!(r.collapse, None);
        let r = locate_ihs(&seq(&[one, one]));
        assert_eq!((r.last_two, r.collapse), (None, Some(0)));
    }

    #[test]
    fn interval_convergence_start() {
        use HomotopyClass::*;
        let two: ClassSet = "CW;CCW".parse().unwrap();
        let one: ClassSet = "CW".parse().unwrap();
        let sets: Vec<(usize, ClassSet)> = (0..10).map(|f| (f, if f < 8 { two } else { one })).collect();
        let gt: Vec<(usize, HomotopyClass)> = (0..10).map(|f| (f, if f < 3 { Ccw } else { Cw })).collect();
        let iv = evaluation_interval(&sets, &gt, 12, 0).unwrap();
        assert_eq!((iv.start, iv.last, iv.collapse, iv.gt_final), (3, 7, 8, Cw));
        // Horizon bounds the look-back.
        let iv = evaluation_interval(&sets, &gt, 2, 0).unwrap();
        assert_eq!(iv.start, 5);
        assert_eq!(
            evaluation_interval(&sets, &gt, 12, 9),
            Err(TimelineError::DegenerateInterval { collapse_frame: Some(8) })
        );
        let all_two: Vec<(usize, ClassSet)> = (0..10).map(|f| (f, two)).collect();
        assert_eq!(evaluation_interval(&all_two, &gt, 12, 0), Err(TimelineError::NoCollapse));
    }
}
