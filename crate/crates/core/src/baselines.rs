//! Reference predictors: constant velocity and the mode-covering oracle.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::collision::{is_collision_poses, poses_from_points, Pose};
use crate::filter::CriticalPair;
use crate::rollout::{max_scene_speed, AgentPath, ProfileKind};
use crate::types::{Agent, EvalConfig, JointPredictionSet, JointSample, Scene, Vec2};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("no agent is recorded at frame {0}")]
    NoAgents(usize),
    #[error("every profile combination collides at frame {0}")]
    NoFeasibleCombo(usize),
    #[error("K must be at least 1")]
    ZeroK,
}

fn present_agents(scene: &Scene, frame: usize) -> Vec<&Agent> {
    let mut agents: Vec<&Agent> = scene.agents.iter().filter(|a| a.is_present(frame)).collect();
    agents.sort_by(|a, b| a.id.cmp(&b.id));
    agents
}

/// Every agent keeps its current heading and speed for one horizon.
pub fn cv_predict(scene: &Scene, frame: usize, cfg: &EvalConfig) -> Result<JointPredictionSet, BaselineError> {
    let agents = present_agents(scene, frame);
    if agents.is_empty() {
        return Err(BaselineError::NoAgents(frame));
    }
    let steps = cfg.horizon_frames(scene.dt);
    let mut trajs = BTreeMap::new();
    for agent in agents {
        let i = frame - agent.first_frame();
        let (heading, speed) = agent.trajectory.heading_and_speed(i).expect("frame is recorded");
        let p0 = agent.trajectory.points()[i];
        let step = Vec2::from_angle(heading) * (speed * scene.dt);
        trajs.insert(
            agent.id.clone(),
            (1..=steps).map(|k| p0 + step * k as f64).collect(),
        );
    }
    Ok(JointPredictionSet::new(
        frame,
        vec![JointSample {
            probability: 1.0,
            trajs,
        }],
    )
    .expect("a single certain sample is valid"))
}

/// One assignment of speed profiles to the agents of a scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCombo {
    pub profiles: BTreeMap<String, ProfileKind>,
    /// Mean speed over all agents and the horizon, m/s.
    pub avg_speed: f64,
    pub colliding: bool,
}

struct AgentRollouts {
    id: String,
    /// Fine-grid poses per profile, in `ProfileKind::ALL` order.
    poses: Vec<Vec<Pose>>,
    /// Frame-rate future positions per profile.
    coarse: Vec<Vec<Vec2>>,
    distance: Vec<f64>,
}

struct OracleSetup {
    agents: Vec<AgentRollouts>,
    interacting: Vec<usize>,
    /// Pair index -> 3x3 collision table by profile.
    pair_tables: Vec<(usize, usize, [[bool; 3]; 3])>,
    horizon: f64,
}

fn profile_index(k: ProfileKind) -> usize {
    ProfileKind::ALL.iter().position(|p| *p == k).unwrap()
}

fn setup(scene: &Scene, frame: usize, pairs: &[CriticalPair], cfg: &EvalConfig) -> Result<OracleSetup, BaselineError> {
    let agents = present_agents(scene, frame);
    if agents.is_empty() {
        return Err(BaselineError::NoAgents(frame));
    }
    let v_max = max_scene_speed(scene);
    let steps = cfg.horizon_frames(scene.dt);
    let factor = cfg.interp_factor.max(1);
    let h = scene.dt / factor as f64;
    let index_of = |id: &str| agents.iter().position(|a| a.id == id);

    let active: Vec<(usize, usize)> = pairs
        .iter()
        .filter_map(|p| Some((index_of(&p.agent_a)?, index_of(&p.agent_b)?)))
        .collect();
    let mut interacting: Vec<usize> = active.iter().flat_map(|(a, b)| [*a, *b]).collect();
    interacting.sort_unstable();
    interacting.dedup();

    let rollouts: Vec<AgentRollouts> = agents
        .iter()
        .enumerate()
        .map(|(idx, agent)| {
            let path = AgentPath::new(agent, frame, v_max, cfg).expect("agent is present");
            let kinds: &[ProfileKind] = if interacting.contains(&idx) {
                &ProfileKind::ALL
            } else {
                &[ProfileKind::ConstVel]
            };
            let mut out = AgentRollouts {
                id: agent.id.clone(),
                poses: vec![Vec::new(); 3],
                coarse: vec![Vec::new(); 3],
                distance: vec![0.0; 3],
            };
            for &kind in kinds {
                let r = path.simulate(&path.profile(kind), h, steps * factor);
                let i = profile_index(kind);
                let pts = r.trajectory.points();
                out.coarse[i] = (1..=steps).map(|k| pts[k * factor]).collect();
                out.poses[i] = poses_from_points(&pts[..=steps * factor], r.initial_heading);
                out.distance[i] = r.arc_length[steps * factor];
            }
            out
        })
        .collect();

    let pair_tables = active
        .iter()
        .map(|&(a, b)| {
            let mut table = [[false; 3]; 3];
            for ka in ProfileKind::ALL {
                for kb in ProfileKind::ALL {
                    let (ia, ib) = (profile_index(ka), profile_index(kb));
                    table[ia][ib] = is_collision_poses(
                        &rollouts[a].poses[ia],
                        &rollouts[b].poses[ib],
                        agents[a].footprint(),
                        agents[b].footprint(),
                    )
                    .expect("equal horizons");
                }
            }
            (a, b, table)
        })
        .collect();

    Ok(OracleSetup {
        agents: rollouts,
        interacting,
        pair_tables,
        horizon: steps as f64 * scene.dt,
    })
}

impl OracleSetup {
    fn combos(&self) -> Vec<(Vec<usize>, OracleCombo)> {
        let m = self.interacting.len();
        let total = 3usize.pow(m as u32);
        let const_idx = profile_index(ProfileKind::ConstVel);
        (0..total)
            .map(|code| {
                let mut choice = vec![const_idx; self.agents.len()];
                let mut c = code;
                // Most significant digit first, so codes enumerate lexicographically.
                for slot in (0..m).rev() {
                    choice[self.interacting[slot]] = c % 3;
                    c /= 3;
                }
                let colliding = self
                    .pair_tables
                    .iter()
                    .any(|(a, b, t)| t[choice[*a]][choice[*b]]);
                let dist: f64 = self
                    .agents
                    .iter()
                    .zip(&choice)
                    .map(|(r, &k)| r.distance[k])
                    .sum();
                let avg_speed = dist / (self.agents.len() as f64 * self.horizon);
                let profiles = self
                    .agents
                    .iter()
                    .zip(&choice)
                    .map(|(r, &k)| (r.id.clone(), ProfileKind::ALL[k]))
                    .collect();
                (
                    choice,
                    OracleCombo {
                        profiles,
                        avg_speed,
                        colliding,
                    },
                )
            })
            .collect()
    }
}

/// All profile combinations at `frame`, colliding ones included, in
/// enumeration order.
pub fn oracle_combos(
    scene: &Scene,
    frame: usize,
    pairs: &[CriticalPair],
    cfg: &EvalConfig,
) -> Result<Vec<OracleCombo>, BaselineError> {
    Ok(setup(scene, frame, pairs, cfg)?
        .combos()
        .into_iter()
        .map(|(_, c)| c)
        .collect())
}

/// Top-K collision-free profile combinations ranked by mean speed.
pub fn oracle_predict(
    scene: &Scene,
    frame: usize,
    pairs: &[CriticalPair],
    k: usize,
    cfg: &EvalConfig,
) -> Result<JointPredictionSet, BaselineError> {
    if k == 0 {
        return Err(BaselineError::ZeroK);
    }
    let setup = setup(scene, frame, pairs, cfg)?;
    let mut feasible: Vec<(Vec<usize>, OracleCombo)> = setup
        .combos()
        .into_iter()
        .filter(|(_, c)| !c.colliding)
        .collect();
    if feasible.is_empty() {
        return Err(BaselineError::NoFeasibleCombo(frame));
    }
    // Stable sort keeps the lexicographic enumeration order among ties.
    feasible.sort_by(|a, b| b.1.avg_speed.total_cmp(&a.1.avg_speed));
    feasible.truncate(k);
    let weights: Vec<f64> = feasible.iter().map(|(_, c)| c.avg_speed).collect();
    let total: f64 = weights.iter().sum();
    let n = feasible.len() as f64;
    let samples = feasible
        .iter()
        .zip(&weights)
        .map(|((choice, _), w)| JointSample {
            probability: if total > 0.0 { w / total } else { 1.0 / n },
            trajs: setup
                .agents
                .iter()
                .zip(choice)
                .map(|(r, &k)| (r.id.clone(), r.coarse[k].clone()))
                .collect(),
        })
        .collect();
    Ok(JointPredictionSet::new(frame, samples).expect("oracle output is ordered and normalised"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Trajectory;

    fn scene_with(agents: Vec<Agent>) -> Scene {
        Scene {
            scene_id: "b".into(),
            dt: 0.5,
            agents,
        }
    }

    #[test]
    fn cv_linear_extrapolation() {
        let pts = (0..4).map(|i| Vec2::new(i as f64, 0.0)).collect();
        let s = scene_with(vec![Agent::new("a", 2.0, 4.0, Trajectory::new(0.0, 0.5, pts).unwrap())]);
        let cfg = EvalConfig {
            horizon: 1.5,
            ..EvalConfig::default()
        };
        // At frame 0 the agent is at the origin moving at 2 m/s along +x.
        let p = cv_predict(&s, 0, &cfg).unwrap();
        assert_eq!(p.k(), 1);
        assert_eq!(p.samples[0].probability, 1.0);
        assert_eq!(
            p.samples[0].trajs["a"],
            vec![Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(3.0, 0.0)]
        );
    }

    #[test]
    fn cv_stationary() {
        let s = scene_with(vec![Agent::new(
            "a",
            2.0,
            4.0,
            Trajectory::new(0.0, 0.5, vec![Vec2::new(4.0, 2.0); 3]).unwrap(),
        )]);
        let p = cv_predict(&s, 1, &EvalConfig::default()).unwrap();
        assert!(p.samples[0].trajs["a"].iter().all(|q| *q == Vec2::new(4.0, 2.0)));
        assert_eq!(cv_predict(&s, 9, &EvalConfig::default()), Err(BaselineError::NoAgents(9)));
    }

    #[test]
    fn oracle_without_pairs_is_const_velocity() {
        let pts = (0..20).map(|i| Vec2::new(i as f64 * 2.0, 0.0)).collect();
        let s = scene_with(vec![Agent::new("a", 2.0, 4.0, Trajectory::new(0.0, 0.5, pts).unwrap())]);
        let p = oracle_predict(&s, 0, &[], 5, &EvalConfig::default()).unwrap();
        assert_eq!(p.k(), 1);
        assert_eq!(p.samples[0].probability, 1.0);
        let cv = cv_predict(&s, 0, &EvalConfig::default()).unwrap();
        for (o, c) in p.samples[0].trajs["a"].iter().zip(&cv.samples[0].trajs["a"]) {
            assert!(o.distance(*c) < 1e-9);
        }
        assert_eq!(oracle_predict(&s, 0, &[], 0, &EvalConfig::default()), Err(BaselineError::ZeroK));
    }
}
