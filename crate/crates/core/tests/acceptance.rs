//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::time::{Duration, Instant};

use interaction_eval::baselines::oracle_predict;
use interaction_eval::collision::{poses_collide, poses_from_points, is_collision_poses, DiskSet, Pose};
use interaction_eval::filter::{classify_pair, Rejection};
use interaction_eval::homotopy::{winding_angle, ClassSet, HomotopyClass};
use interaction_eval::io::parse_mode_table;
use interaction_eval::metrics::{
    aggregate, displacement_metrics, predicted_classes, FrameModeFlags, PairRecord, TimeToMode,
};
use interaction_eval::pipeline::{evaluate_scene, fixture_record, PredictionSource};
use interaction_eval::rollout::{interaction_timeline, max_scene_speed, AgentPath, ProfileKind, TimelineError};
use interaction_eval::types::{
    Agent, EvalConfig, Footprint, JointPredictionSet, JointSample, MissingAgentPolicy, Scene, Trajectory, Vec2,
};
use interaction_eval::filter_scene;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_TOLERANCE_PP: f64 = 0.1;
const GOLDEN_BUDGET: Duration = Duration::from_secs(1);
const LOOP_TOLERANCE: f64 = 1e-9;
const IDENTITY_TOLERANCE: f64 = 1e-12;
const WINDING_PAIRS: usize = 1000;
const WINDING_BUDGET: Duration = Duration::from_secs(5);
const ORACLE_K: usize = 5;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const IHS_MIN_SHARE: f64 = 0.95;
const IHS_BUDGET: Duration = Duration::from_secs(30);
const COLLISION_PAIRS: usize = 1000;
const COLLISION_BAND: f64 = 0.2;
const MC_POINTS: usize = 4000;
const DISPLACEMENT_TOLERANCE: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn golden_table() -> Outcome {
    let started = Instant::now();
    let text = include_str!("fixtures/golden_modes.csv");
    let rows = parse_mode_table(text, Path::new("golden_modes.csv")).expect("fixture parses");
    let cfg = EvalConfig::default();
    let (interval, record) = fixture_record(&rows, "golden", 0.5, cfg.horizon_frames(0.5)).expect("interval");
    let m = record.metrics;
    let rate = 100.0 * m.collapse_rate.unwrap_or(f64::NAN);
    let agg = aggregate(std::slice::from_ref(&record), 0.5).expect("one pair");
    let elapsed = started.elapsed();
    let pass = (interval.start, interval.last, interval.collapse) == (5, 15, 16)
        && m.dt_correct == TimeToMode::Seconds(1.5)
        && m.dt_covered == TimeToMode::FromStart
        && !m.consistent
        && (rate - 81.8).abs() <= GOLDEN_TOLERANCE_PP
        && agg.consistency_rate == 0.0
        && agg.dt_covered.pct_at_tpred == 100.0
        && elapsed < GOLDEN_BUDGET;
    outcome(
        pass,
        format!(
            "interval {}..{} collapse {}, dT_correct {:?}, dT_covered {:?}, consistent {}, collapse rate {rate:.3}% ({:?})",
            interval.start, interval.last, interval.collapse, m.dt_correct, m.dt_covered, m.consistent, elapsed
        ),
    )
}

fn random_walk(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec2> {
    let mut p = Vec2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
    let mut out = vec![p];
    for _ in 1..n {
        p = p + Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        out.push(p);
    }
    out
}

fn winding() -> Outcome {
    let started = Instant::now();
    let n = 400;
    let circle: Vec<Vec2> = (0..=n)
        .map(|k| Vec2::from_angle(TAU * k as f64 / n as f64) * 5.0)
        .collect();
    let origin = vec![Vec2::new(0.0, 0.0); circle.len()];
    let loop_err = (winding_angle(&circle, &origin).unwrap().delta_theta - TAU).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut anti_fail, mut concat_fail, mut worst_anti, mut worst_concat) = (0, 0, 0.0f64, 0.0f64);
    for _ in 0..WINDING_PAIRS {
        let len = rng.gen_range(3..40);
        let a = random_walk(&mut rng, len);
        let b = random_walk(&mut rng, len);
        let ab = winding_angle(&a, &b).unwrap().delta_theta;
        let ba = winding_angle(&b, &a).unwrap().delta_theta;
        let anti = (ab + ba).abs();
        worst_anti = worst_anti.max(anti);
        if anti > IDENTITY_TOLERANCE {
            anti_fail += 1;
        }
        let m = rng.gen_range(1..len - 1);
        let head = winding_angle(&a[..=m], &b[..=m]).unwrap().delta_theta;
        let tail = winding_angle(&a[m..], &b[m..]).unwrap().delta_theta;
        let concat = (head + tail - ab).abs();
        worst_concat = worst_concat.max(concat);
        if concat > IDENTITY_TOLERANCE {
            concat_fail += 1;
        }
    }
    let elapsed = started.elapsed();
    let pass = loop_err <= LOOP_TOLERANCE && anti_fail == 0 && concat_fail == 0 && elapsed < WINDING_BUDGET;
    outcome(
        pass,
        format!(
            "loop error {loop_err:.1e}; antisymmetry violated on {anti_fail}/{WINDING_PAIRS} pairs (worst {worst_anti:.3}); \
             concatenation violated on {concat_fail}/{WINDING_PAIRS} (worst {worst_concat:.1e}) ({elapsed:?})"
        ),
    )
}

/// Crossing scenes with a distant fast agent so interacting agents can accelerate.
fn crossing_corpus(seed: u64, count: usize) -> Vec<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let va = rng.gen_range(4.0..9.0);
            let vb = rng.gen_range(4.0..9.0);
            let ga = rng.gen_range(25.0..45.0);
            let delay = rng.gen_range(1.0..3.0);
            let gb = (ga / va + delay) * vb;
            let mut s = common::crossing(va, ga, vb, gb, 0.5, 16.0);
            s.scene_id = format!("crossing-{i}");
            s.agents.push(common::straight(
                "z",
                Vec2::new(-200.0, 300.0),
                Vec2::new(1.0, 0.0),
                10.0,
                0.5,
                33,
                0,
            ));
            s
        })
        .collect()
}

fn unimodal_collapse() -> Outcome {
    let cfg = EvalConfig::default();
    let mut records = Vec::new();
    for scene in crossing_corpus(11, 12) {
        let out = evaluate_scene(
            Path::new("synthetic"),
            &scene,
            &PredictionSource::ConstantVelocity,
            &cfg,
            MissingAgentPolicy::Error,
        )
        .expect("cv evaluation");
        records.extend(out.pairs.into_iter().filter_map(|p| p.record));
    }
    let two: Vec<&FrameModeFlags> = records
        .iter()
        .flat_map(|r| r.flags.iter())
        .filter(|f| f.h_feas.len() == 2)
        .collect();
    let collapsed = two.iter().filter(|f| f.collapse).count();
    let rate = aggregate(&records, 0.5).ok().and_then(|a| a.mode_collapse_rate);
    let pass = !two.is_empty() && collapsed == two.len() && rate == Some(100.0);
    outcome(
        pass,
        format!(
            "{} pairs, {collapsed}/{} two-feasible frames collapsed, corpus rate {rate:?}",
            records.len(),
            two.len()
        ),
    )
}

/// Profile combinations ranked by brute force: mean speed, then profile order.
fn exhaustive_top(scene: &Scene, frame: usize, interacting: &[&str], k: usize, cfg: &EvalConfig) -> Vec<BTreeMap<String, ProfileKind>> {
    let v_max = max_scene_speed(scene);
    let steps = cfg.horizon_frames(scene.dt);
    let factor = cfg.interp_factor;
    let h = scene.dt / factor as f64;
    let present: Vec<&Agent> = scene.agents.iter().filter(|a| a.is_present(frame)).collect();
    let mut runs: BTreeMap<(String, ProfileKind), (Vec<Pose>, f64)> = BTreeMap::new();
    for a in &present {
        let path = AgentPath::new(a, frame, v_max, cfg).unwrap();
        for kind in ProfileKind::ALL {
            let r = path.simulate(&path.profile(kind), h, steps * factor);
            let poses = poses_from_points(&r.trajectory.points()[..=steps * factor], r.initial_heading);
            runs.insert((a.id.clone(), kind), (poses, r.arc_length[steps * factor]));
        }
    }
    let mut combos: Vec<BTreeMap<String, ProfileKind>> = vec![BTreeMap::new()];
    for a in &present {
        let kinds: Vec<ProfileKind> = if interacting.contains(&a.id.as_str()) {
            ProfileKind::ALL.to_vec()
        } else {
            vec![ProfileKind::ConstVel]
        };
        combos = combos
            .into_iter()
            .flat_map(|c| {
                kinds.iter().map(move |k| {
                    let mut c = c.clone();
                    c.insert(a.id.clone(), *k);
                    c
                })
            })
            .collect();
    }
    let horizon = steps as f64 * scene.dt;
    let mut scored: Vec<(f64, Vec<ProfileKind>, BTreeMap<String, ProfileKind>)> = combos
        .into_iter()
        .filter(|c| {
            let ids: Vec<&String> = c.keys().filter(|id| interacting.contains(&id.as_str())).collect();
            ids.iter().enumerate().all(|(i, x)| {
                ids[i + 1..].iter().all(|y| {
                    let (px, _) = &runs[&((*x).clone(), c[*x])];
                    let (py, _) = &runs[&((*y).clone(), c[*y])];
                    let fx = scene.agent(x).unwrap().footprint();
                    let fy = scene.agent(y).unwrap().footprint();
                    !is_collision_poses(px, py, fx, fy).unwrap()
                })
            })
        })
        .map(|c| {
            let total: f64 = c.iter().map(|(id, k)| runs[&(id.clone(), *k)].1).sum();
            (total / (c.len() as f64 * horizon), c.values().copied().collect(), c)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|s| s.2).collect()
}

fn oracle_coverage() -> Outcome {
    let started = Instant::now();
    let cfg = EvalConfig::default();
    let mut scene = common::crossing(6.0, 40.0, 6.0, 50.0, 0.5, 16.0);
    scene
        .agents
        .push(common::straight("z", Vec2::new(-200.0, 300.0), Vec2::new(1.0, 0.0), 10.0, 0.5, 33, 0));
    let pairs = filter_scene(&scene, &cfg);
    let Some(pair) = pairs.first() else {
        return outcome(false, "crossing pair was not accepted");
    };
    let timeline = match interaction_timeline(&scene, pair, &cfg, None) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("no timeline: {e}")),
    };
    let (a, b) = (scene.agent("a").unwrap(), scene.agent("b").unwrap());
    let both: ClassSet = [HomotopyClass::Cw, HomotopyClass::Ccw].into_iter().collect();
    let mut flags = Vec::new();
    let mut enumeration_mismatch = 0;
    for frame in timeline.interval.start..=timeline.interval.last {
        let set = oracle_predict(&scene, frame, &pairs, ORACLE_K, &cfg).expect("oracle set");
        let classes = predicted_classes(&set, "a", "b", a.position_at(frame).unwrap(), b.position_at(frame).unwrap(), 0.0)
            .expect("both predicted");
        let h_pred: ClassSet = classes.iter().copied().collect();
        let h_feas = timeline.feasible_at(frame).unwrap();
        flags.push(FrameModeFlags::evaluate(frame, timeline.gt_at(frame).unwrap(), classes[0], h_pred, h_feas));

        let expected = exhaustive_top(&scene, frame, &["a", "b"], ORACLE_K, &cfg);
        let v_max = max_scene_speed(&scene);
        let matches = expected.len() == set.k()
            && expected.iter().zip(&set.samples).all(|(combo, sample)| {
                combo.iter().all(|(id, kind)| {
                    let agent = scene.agent(id).unwrap();
                    let path = AgentPath::new(agent, frame, v_max, &cfg).unwrap();
                    let f = cfg.interp_factor;
                    let r = path.simulate(&path.profile(*kind), scene.dt / f as f64, cfg.horizon_frames(scene.dt) * f);
                    let pts = r.trajectory.points();
                    sample.trajs[id]
                        .iter()
                        .enumerate()
                        .all(|(i, p)| p.distance(pts[(i + 1) * f]) < 1e-9)
                })
            });
        if !matches || !h_pred.is_subset(both) {
            enumeration_mismatch += 1;
        }
    }
    let record = PairRecord::new("crossing", "a", "b", 0.5, timeline.interval.collapse, flags);
    let covered = record.flags.iter().filter(|f| f.covered).count();
    let full = record.flags.iter().filter(|f| f.h_pred == both).count();
    let rate = record.metrics.collapse_rate;
    let elapsed = started.elapsed();
    let pass = full == record.flags.len()
        && covered == record.flags.len()
        && rate == Some(0.0)
        && enumeration_mismatch == 0
        && elapsed < ORACLE_BUDGET;
    outcome(
        pass,
        format!(
            "{} pre-IHS frames: both classes predicted at {full}, covered {covered}, collapse rate {rate:?}, \
             enumeration mismatches {enumeration_mismatch} ({elapsed:?})",
            record.flags.len()
        ),
    )
}

fn ihs_physics() -> Outcome {
    let started = Instant::now();
    let cfg = EvalConfig::default();
    let dt = 0.5;
    let (mut hits, mut total, mut misses) = (0usize, 0usize, Vec::new());
    for vi in 0..=12 {
        let v = 4.0 + 0.5 * vi as f64;
        for gi in 0..=12 {
            let gap = 10.0 + 2.5 * gi as f64;
            let stop = v * v / (2.0 * cfg.a_lon_max);
            // A starts `gap` metres before its last stopping point, B arrives 2.5 s after A.
            let start = gap + stop + cfg.d_collision;
            let scene = common::crossing(v, start, v, start + 2.5 * v, dt, 14.0);
            total += 1;
            let analytic = (0..)
                .find(|&k| (start - cfg.d_collision - v * dt * k as f64) < stop)
                .unwrap();
            let detected = filter_scene(&scene, &cfg).first().and_then(|pair| {
                match interaction_timeline(&scene, pair, &cfg, None) {
                    Ok(t) => Some(t.interval.collapse),
                    Err(TimelineError::DegenerateInterval { collapse_frame }) => collapse_frame,
                    Err(TimelineError::NoCollapse) => None,
                }
            });
            if detected.is_some_and(|d| d.abs_diff(analytic) <= 1) {
                hits += 1;
            } else {
                misses.push(format!("v={v} gap={gap}: {detected:?} vs {analytic}"));
            }
        }
    }
    let share = hits as f64 / total as f64;
    let elapsed = started.elapsed();
    let pass = share >= IHS_MIN_SHARE && elapsed < IHS_BUDGET;
    outcome(
        pass,
        format!(
            "{hits}/{total} grid points within one frame ({:.1}%){} ({elapsed:?})",
            100.0 * share,
            if misses.is_empty() { String::new() } else { format!("; misses: {}", misses.join(", ")) }
        ),
    )
}

#[derive(Debug, Clone, PartialEq)]
enum Verdict {
    Accept,
    Never,
    FromStart,
    Gap,
}

fn densify(p: &[Vec2], factor: usize) -> Vec<Vec2> {
    let mut out = Vec::new();
    for w in p.windows(2) {
        for k in 0..factor {
            let t = k as f64 / factor as f64;
            out.push(Vec2::new(w[0].x + (w[1].x - w[0].x) * t, w[0].y + (w[1].y - w[0].y) * t));
        }
    }
    out.push(*p.last().unwrap());
    out
}

/// Pair screening by exhaustive distance checks on the densified trajectories.
fn brute_force_verdict(a: &[Vec2], b: &[Vec2], dt: f64, cfg: &EvalConfig) -> Verdict {
    let f = cfg.interp_factor;
    let (da, db) = (densify(a, f), densify(b, f));
    let first = |x: &[Vec2], y: &[Vec2]| {
        x.iter()
            .position(|p| y.iter().any(|q| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt() < cfg.d_collision))
            .map(|k| k / f)
    };
    match (first(&da, &db), first(&db, &da)) {
        (Some(fa), Some(fb)) => {
            if fa == 0 || fb == 0 {
                Verdict::FromStart
            } else if fa.abs_diff(fb) as f64 * dt > cfg.dt_ps_max {
                Verdict::Gap
            } else {
                Verdict::Accept
            }
        }
        _ => Verdict::Never,
    }
}

fn verdict_of(r: &Result<interaction_eval::CriticalPair, Rejection>) -> Verdict {
    match r {
        Ok(_) => Verdict::Accept,
        Err(Rejection::NeverPathSharing) | Err(Rejection::NotCoObserved) => Verdict::Never,
        Err(Rejection::SharedFromStart(_)) => Verdict::FromStart,
        Err(Rejection::TimeGapTooLarge(_)) => Verdict::Gap,
    }
}

fn agent_from(id: &str, pts: Vec<Vec2>, dt: f64) -> Agent {
    Agent::new(id, common::WIDTH, common::LENGTH, Trajectory::new(0.0, dt, pts).unwrap())
}

fn filter_semantics() -> Outcome {
    let cfg = EvalConfig::default();
    let dt = 0.5;
    let n = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases: Vec<(&str, Verdict, Scene)> = Vec::new();
    for _ in 0..25 {
        let v = rng.gen_range(4.0..10.0);
        let line = |start: Vec2, dir: Vec2, speed: f64| -> Vec<Vec2> {
            (0..n).map(|k| start + dir * (speed * dt * k as f64)).collect()
        };
        // Crossing: perpendicular roads, B reaches the junction 1-3 s after A.
        let ga = rng.gen_range(20.0..40.0);
        let gb = (ga / v + rng.gen_range(1.0..3.0)) * v;
        let crossing = vec![
            agent_from("a", line(Vec2::new(-ga, 0.0), Vec2::new(1.0, 0.0), v), dt),
            agent_from("b", line(Vec2::new(0.0, -gb), Vec2::new(0.0, 1.0), v), dt),
        ];
        // Merging: B comes in on a ramp and joins A's lane behind it.
        let ramp = rng.gen_range(0.3..0.7f64);
        let lag = rng.gen_range(1.0..3.0);
        let merge_len = ga + lag * v;
        let dir = Vec2::new(ramp.cos(), ramp.sin());
        let b_start = Vec2::new(0.0, 0.0) - dir * merge_len;
        let b_pts: Vec<Vec2> = (0..n)
            .map(|k| {
                let s = v * dt * k as f64;
                if s <= merge_len {
                    b_start + dir * s
                } else {
                    Vec2::new(s - merge_len, 0.0)
                }
            })
            .collect();
        let merging = vec![
            agent_from("a", line(Vec2::new(-ga, 0.0), Vec2::new(1.0, 0.0), v), dt),
            agent_from("b", b_pts, dt),
        ];
        // Car following: same lane, B behind A.
        let headway = rng.gen_range(8.0..25.0);
        let following = vec![
            agent_from("a", line(Vec2::new(headway, 0.0), Vec2::new(1.0, 0.0), v), dt),
            agent_from("b", line(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), v), dt),
        ];
        // Parallel passing: adjacent lanes, opposite directions.
        let lane = rng.gen_range(3.0..4.0);
        let passing = vec![
            agent_from("a", line(Vec2::new(-30.0, 0.0), Vec2::new(1.0, 0.0), v), dt),
            agent_from("b", line(Vec2::new(30.0, lane), Vec2::new(-1.0, 0.0), v), dt),
        ];
        for (name, expected, agents) in [
            ("crossing", Verdict::Accept, crossing),
            ("merging", Verdict::Accept, merging),
            ("following", Verdict::FromStart, following),
            ("passing", Verdict::Never, passing),
        ] {
            cases.push((
                name,
                expected,
                Scene {
                    scene_id: name.into(),
                    dt,
                    agents,
                },
            ));
        }
    }
    let (mut agree, mut as_labelled) = (0, 0);
    let mut problems = Vec::new();
    for (name, expected, scene) in &cases {
        let got = verdict_of(&classify_pair(scene, "a", "b", &cfg).unwrap());
        let a = scene.agents[0].trajectory.points();
        let b = scene.agents[1].trajectory.points();
        let brute = brute_force_verdict(a, b, dt, &cfg);
        if got == brute {
            agree += 1;
        } else {
            problems.push(format!("{name}: {got:?} vs brute force {brute:?}"));
        }
        if got == *expected {
            as_labelled += 1;
        } else {
            problems.push(format!("{name}: {got:?}, expected {expected:?}"));
        }
    }
    let pass = agree == cases.len() && as_labelled == cases.len();
    outcome(
        pass,
        format!(
            "{agree}/{n} agree with brute force, {as_labelled}/{n} match their scenario{}",
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join(", ")) },
            n = cases.len()
        ),
    )
}

/// Oriented rectangle containment.
fn inside(p: Vec2, pose: Pose, fp: Footprint) -> bool {
    let d = p - pose.position;
    let u = Vec2::from_angle(pose.heading);
    let along = d.dot(u);
    let across = d.cross(u);
    along.abs() <= fp.length / 2.0 && across.abs() <= fp.width / 2.0
}

fn sample_in(rng: &mut ChaCha8Rng, pose: Pose, fp: Footprint) -> Vec2 {
    let along = rng.gen_range(-fp.length / 2.0..=fp.length / 2.0);
    let across = rng.gen_range(-fp.width / 2.0..=fp.width / 2.0);
    let u = Vec2::from_angle(pose.heading);
    let n = Vec2::new(-u.y, u.x);
    pose.position + u * along + n * across
}

fn collision_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut in_band, mut outside_band_disagree, mut overlaps) = (0, 0, 0);
    let mut examples = Vec::new();
    for _ in 0..COLLISION_PAIRS {
        let fa = Footprint::new(rng.gen_range(3.5..5.5), rng.gen_range(1.6..2.2));
        let fb = Footprint::new(rng.gen_range(3.5..5.5), rng.gen_range(1.6..2.2));
        let pa = Pose {
            position: Vec2::new(0.0, 0.0),
            heading: rng.gen_range(-PI..PI),
        };
        let pb = Pose {
            position: Vec2::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0)),
            heading: rng.gen_range(-PI..PI),
        };
        let disks = poses_collide(pa, fa, pb, fb);
        let mut mc = false;
        for _ in 0..MC_POINTS {
            if inside(sample_in(&mut rng, pa, fa), pb, fb) || inside(sample_in(&mut rng, pb, fb), pa, fa) {
                mc = true;
                break;
            }
        }
        overlaps += mc as usize;
        let (da, db) = (DiskSet::of(pa, fa), DiskSet::of(pb, fb));
        let margin = da.min_center_distance(&db) - (da.radius + db.radius);
        if margin.abs() < COLLISION_BAND {
            in_band += 1;
        } else if disks != mc {
            outside_band_disagree += 1;
            if examples.len() < 3 {
                examples.push(format!("margin {margin:.2} disks {disks} rectangles {mc}"));
            }
        }
    }
    outcome(
        outside_band_disagree == 0,
        format!(
            "{COLLISION_PAIRS} pose pairs ({overlaps} overlapping), {in_band} inside the {COLLISION_BAND} m band, \
             {outside_band_disagree} disagreements outside it{}",
            if examples.is_empty() { String::new() } else { format!(": {}", examples.join("; ")) }
        ),
    )
}

fn straight_scene(agents: usize, frames: usize) -> Scene {
    Scene {
        scene_id: "d".into(),
        dt: 0.5,
        agents: (0..agents)
            .map(|i| {
                let pts = (0..frames).map(|k| Vec2::new(k as f64 * 2.0, i as f64 * 4.0)).collect();
                agent_from(&format!("a{i}"), pts, 0.5)
            })
            .collect(),
    }
}

fn displacement() -> Outcome {
    let scene = straight_scene(2, 6);
    let offset_set = |frame: usize, dy: f64| -> BTreeMap<String, Vec<Vec2>> {
        scene
            .agents
            .iter()
            .map(|a| {
                let fut = (frame + 1..=frame + 4)
                    .map(|k| a.position_at(k).unwrap() + Vec2::new(0.0, dy))
                    .collect();
                (a.id.clone(), fut)
            })
            .collect()
    };
    let uniform = JointPredictionSet::new(
        1,
        vec![JointSample {
            probability: 1.0,
            trajs: offset_set(1, 1.0),
        }],
    )
    .unwrap();
    let u = displacement_metrics(&[uniform], &scene).unwrap();
    let uniform_ok = u.ml_ade == 1.0 && u.ml_fde == 1.0 && u.joint_min_ade == 1.0 && u.joint_min_fde == 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst, mut below_mix) = (0.0f64, 0usize);
    let trials = 200;
    for _ in 0..trials {
        let samples: Vec<BTreeMap<String, Vec<Vec2>>> = (0..3)
            .map(|_| {
                scene
                    .agents
                    .iter()
                    .map(|a| {
                        let fut = (2..=5)
                            .map(|k| a.position_at(k).unwrap() + Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                            .collect();
                        (a.id.clone(), fut)
                    })
                    .collect()
            })
            .collect();
        let set = JointPredictionSet::new(
            1,
            samples
                .iter()
                .map(|t| JointSample {
                    probability: 1.0 / 3.0,
                    trajs: t.clone(),
                })
                .collect(),
        )
        .unwrap();
        let got = displacement_metrics(&[set], &scene).unwrap();
        let errors = |t: &BTreeMap<String, Vec<Vec2>>, id: &str| -> Vec<f64> {
            let a = scene.agent(id).unwrap();
            t[id].iter().enumerate().map(|(k, p)| p.distance(a.position_at(k + 2).unwrap())).collect()
        };
        let ids: Vec<&str> = scene.agents.iter().map(|a| a.id.as_str()).collect();
        let scene_ade = |t: &BTreeMap<String, Vec<Vec2>>| {
            ids.iter().map(|id| errors(t, id).iter().sum::<f64>()).sum::<f64>() / (ids.len() * 4) as f64
        };
        let scene_fde = |t: &BTreeMap<String, Vec<Vec2>>| {
            ids.iter().map(|id| errors(t, id)[3]).sum::<f64>() / ids.len() as f64
        };
        let min_ade = samples.iter().map(scene_ade).fold(f64::INFINITY, f64::min);
        let min_fde = samples.iter().map(scene_fde).fold(f64::INFINITY, f64::min);
        worst = worst
            .max((got.joint_min_ade - min_ade).abs())
            .max((got.joint_min_fde - min_fde).abs());
        let mix_ade = ids
            .iter()
            .map(|id| samples.iter().map(|t| errors(t, id).iter().sum::<f64>() / 4.0).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / ids.len() as f64;
        let mix_fde = ids
            .iter()
            .map(|id| samples.iter().map(|t| errors(t, id)[3]).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / ids.len() as f64;
        if got.joint_min_ade + 1e-15 < mix_ade || got.joint_min_fde + 1e-15 < mix_fde {
            below_mix += 1;
        }
    }
    let pass = uniform_ok && worst <= DISPLACEMENT_TOLERANCE && below_mix == 0;
    outcome(
        pass,
        format!(
            "uniform offset ADE {} FDE {}; joint min vs brute force worst {worst:.1e} over {trials} sets; \
             {below_mix} below the per-agent minimum",
            u.ml_ade, u.ml_fde
        ),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 8] = [
        ("Golden mode table", golden_table),
        ("Winding identities", winding),
        ("Unimodal collapse", unimodal_collapse),
        ("Oracle coverage", oracle_coverage),
        ("IHS physics", ihs_physics),
        ("Filter semantics", filter_semantics),
        ("Collision oracle", collision_oracle),
        ("Displacement metrics", displacement),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
