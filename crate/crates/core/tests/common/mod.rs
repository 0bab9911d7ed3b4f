#![allow(dead_code)]

use interaction_eval::types::{Agent, Scene, Trajectory, Vec2};

pub const WIDTH: f64 = 2.0;
pub const LENGTH: f64 = 4.5;

/// Straight constant-speed agent starting at `start` with direction `dir`.
pub fn straight(id: &str, start: Vec2, dir: Vec2, speed: f64, dt: f64, frames: usize, first_frame: usize) -> Agent {
    let pts = (0..frames).map(|k| start + dir * (speed * dt * k as f64)).collect();
    Agent::new(id, WIDTH, LENGTH, Trajectory::new(first_frame as f64 * dt, dt, pts).unwrap())
}

/// A drives +x along y = 0 and B drives +y along x = 0. Each starts `gap` metres
/// before the intersection.
pub fn crossing(speed_a: f64, gap_a: f64, speed_b: f64, gap_b: f64, dt: f64, duration: f64) -> Scene {
    let frames = (duration / dt).round() as usize + 1;
    Scene {
        scene_id: "crossing".into(),
        dt,
        agents: vec![
            straight("a", Vec2::new(-gap_a, 0.0), Vec2::new(1.0, 0.0), speed_a, dt, frames, 0),
            straight("b", Vec2::new(0.0, -gap_b), Vec2::new(0.0, 1.0), speed_b, dt, frames, 0),
        ],
    }
}
