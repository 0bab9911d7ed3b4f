//! Browser bindings for the interactive demo page in `www/`.
//!
//! Every export returns a JSON string; errors come back as a thrown string.

use interaction_eval::baselines::{cv_predict, oracle_predict};
use interaction_eval::homotopy::{homotopy_class, winding_angle, ClassSet};
use interaction_eval::metrics::{predicted_classes, FrameModeFlags, PairRecord};
use interaction_eval::rollout::{interaction_timeline, AgentPath, ProfileKind, TimelineError};
use interaction_eval::types::{Agent, EvalConfig, Scene, Trajectory, Vec2};
use interaction_eval::filter_scene;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const DT: f64 = 0.5;
const DURATION: f64 = 16.0;

fn straight(id: &str, start: Vec2, dir: Vec2, speed: f64, frames: usize) -> Agent {
    let pts = (0..frames).map(|k| start + dir * (speed * DT * k as f64)).collect();
    Agent::new(id, 2.0, 4.5, Trajectory::new(0.0, DT, pts).expect("regular samples"))
}

/// Two cars on perpendicular roads; B reaches the junction `delay` seconds
/// after A. A third, distant car sets the scene speed limit.
pub fn crossing_scene(speed_a: f64, gap_a: f64, speed_b: f64, delay: f64) -> Scene {
    let frames = (DURATION / DT) as usize + 1;
    let gap_b = (gap_a / speed_a + delay) * speed_b;
    Scene {
        scene_id: "demo".into(),
        dt: DT,
        agents: vec![
            straight("a", Vec2::new(-gap_a, 0.0), Vec2::new(1.0, 0.0), speed_a, frames),
            straight("b", Vec2::new(0.0, -gap_b), Vec2::new(0.0, 1.0), speed_b, frames),
            straight("z", Vec2::new(-200.0, 300.0), Vec2::new(1.0, 0.0), 12.0, frames),
        ],
    }
}

fn classes(set: ClassSet) -> Vec<&'static str> {
    set.iter().map(|c| c.as_str()).collect()
}

/// Feasible modes per frame of the demo crossing, scored for the constant
/// velocity and oracle baselines.
pub fn crossing_report(speed_a: f64, gap_a: f64, speed_b: f64, delay: f64, k: usize) -> Result<Value, String> {
    if ![speed_a, gap_a, speed_b, delay].iter().all(|v| v.is_finite() && *v > 0.0) || k == 0 {
        return Err("speeds, gap and delay must be positive and K at least 1".into());
    }
    let cfg = EvalConfig::default();
    let scene = crossing_scene(speed_a, gap_a, speed_b, delay);
    let pairs: Vec<_> = filter_scene(&scene, &cfg)
        .into_iter()
        .filter(|p| p.agent_a == "a" && p.agent_b == "b")
        .collect();
    let pair = pairs.first().ok_or("the two paths are not shared closely enough in time")?;
    let positions = |id: &str| -> Vec<[f64; 2]> {
        scene.agent(id).unwrap().trajectory.points().iter().map(|p| [p.x, p.y]).collect()
    };
    let timeline = match interaction_timeline(&scene, pair, &cfg, None) {
        Ok(t) => t,
        Err(TimelineError::NoCollapse) => return Err("both orders stay feasible to the end".into()),
        Err(e) => return Err(e.to_string()),
    };
    let (a, b) = (scene.agent("a").unwrap(), scene.agent("b").unwrap());
    let mut rows = Vec::new();
    let mut flags = [Vec::new(), Vec::new()];
    for f in &timeline.frames {
        let gt = timeline.gt_at(f.frame).unwrap();
        let in_interval = f.frame >= timeline.interval.start && f.frame <= timeline.interval.last;
        let mut row = json!({
            "frame": f.frame,
            "t": f.frame as f64 * DT,
            "feasible": classes(f.classes),
            "gt": gt.as_str(),
            "in_interval": in_interval,
        });
        if in_interval {
            let (pa, pb) = (a.position_at(f.frame).unwrap(), b.position_at(f.frame).unwrap());
            for (i, (name, set)) in [
                ("cv", cv_predict(&scene, f.frame, &cfg)),
                ("oracle", oracle_predict(&scene, f.frame, &pairs, k, &cfg)),
            ]
            .into_iter()
            .enumerate()
            {
                let set = set.map_err(|e| e.to_string())?;
                let cls = predicted_classes(&set, "a", "b", pa, pb, cfg.theta_hat).ok_or("missing prediction")?;
                let pred: ClassSet = cls.iter().copied().collect();
                let fl = FrameModeFlags::evaluate(f.frame, gt, cls[0], pred, f.classes);
                row[name] = json!({ "classes": classes(pred), "collapse": fl.collapse, "covered": fl.covered });
                flags[i].push(fl);
            }
        }
        rows.push(row);
    }
    let summary = |fl: Vec<FrameModeFlags>| {
        let r = PairRecord::new("demo", "a", "b", DT, timeline.interval.collapse, fl);
        json!({
            "collapse_rate": r.metrics.collapse_rate.map(|x| 100.0 * x),
            "dt_correct": r.metrics.dt_correct.seconds(),
            "dt_covered": r.metrics.dt_covered.seconds(),
            "consistent": r.metrics.consistent,
        })
    };
    let [cv, oracle] = flags;
    Ok(json!({
        "dt": DT,
        "a": positions("a"),
        "b": positions("b"),
        "t_ps_a": pair.sharing.t_ps_a,
        "t_ps_b": pair.sharing.t_ps_b,
        "interval": { "start": timeline.interval.start, "last": timeline.interval.last, "collapse": timeline.interval.collapse },
        "gt_final": timeline.h_gt_final.as_str(),
        "frames": rows,
        "cv": summary(cv),
        "oracle": summary(oracle),
    }))
}

/// Winding angle and class of two polylines given as `[[x, y], ...]` JSON arrays.
pub fn winding_report(a: &str, b: &str, theta_hat: f64) -> Result<Value, String> {
    let parse = |s: &str| -> Result<Vec<Vec2>, String> {
        let pts: Vec<[f64; 2]> = serde_json::from_str(s).map_err(|e| e.to_string())?;
        Ok(pts.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
    };
    let (a, b) = (parse(a)?, parse(b)?);
    let w = winding_angle(&a, &b).map_err(|e| e.to_string())?;
    let mut running = 0.0;
    let cumulative: Vec<f64> = w
        .per_step
        .iter()
        .map(|s| {
            running += s;
            running
        })
        .collect();
    Ok(json!({
        "delta_theta": w.delta_theta,
        "class": homotopy_class(w.delta_theta, theta_hat).as_str(),
        "cumulative": cumulative,
    }))
}

/// Speed over time of the three rollout profiles for a car on an arc of
/// `radius` metres (0 for a straight road).
pub fn profile_report(speed: f64, v_max: f64, radius: f64, horizon: f64) -> Result<Value, String> {
    if !(speed > 0.0 && v_max > 0.0 && horizon > 0.0 && radius >= 0.0) {
        return Err("speed, limit and horizon must be positive".into());
    }
    let cfg = EvalConfig::default();
    let frames = ((horizon / DT).ceil() as usize).max(1) + 1;
    let step = speed * DT;
    let pts: Vec<Vec2> = (0..frames + 80)
        .map(|k| {
            let s = step * k as f64;
            if radius > 0.0 {
                Vec2::new(radius * (s / radius).sin(), radius * (1.0 - (s / radius).cos()))
            } else {
                Vec2::new(s, 0.0)
            }
        })
        .collect();
    let agent = Agent::new("car", 2.0, 4.5, Trajectory::new(0.0, DT, pts).map_err(|e| e.to_string())?);
    let path = AgentPath::new(&agent, 0, v_max, &cfg).map_err(|e| e.to_string())?;
    let f = cfg.interp_factor;
    let steps = (horizon / DT).round() as usize * f;
    let mut out = json!({ "dt": DT / f as f64 });
    for kind in ProfileKind::ALL {
        let r = path.simulate(&path.profile(kind), DT / f as f64, steps);
        out[kind.as_str()] = json!({ "speed": r.speeds, "distance": r.arc_length });
    }
    Ok(out)
}

fn to_js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn crossing(speed_a: f64, gap_a: f64, speed_b: f64, delay: f64, k: usize) -> Result<String, JsValue> {
    to_js(crossing_report(speed_a, gap_a, speed_b, delay, k))
}

#[wasm_bindgen]
pub fn winding(a: &str, b: &str, theta_hat: f64) -> Result<String, JsValue> {
    to_js(winding_report(a, b, theta_hat))
}

#[wasm_bindgen]
pub fn profiles(speed: f64, v_max: f64, radius: f64, horizon: f64) -> Result<String, JsValue> {
    to_js(profile_report(speed, v_max, radius, horizon))
}
