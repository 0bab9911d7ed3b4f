//! Scene, prediction and mode-table file formats.
//!
//! Scene file:
//! `{"scene_id", "dt", "agents": [{"id", "width", "length", "states": [{"t", "x", "y"}]}]}`
//!
//! Prediction file, frames counted from time zero in steps of the scene period:
//! `{"scene_id", "horizon", "frames": [{"frame", "samples": [{"p", "trajs": {"<id>": [[x, y], ...]}}]}]}`

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homotopy::{ClassSet, HomotopyClass};
use crate::types::{
    validate_scene, Agent, JointPredictionSet, JointSample, PredictionError, Sample, Scene, SceneError, Trajectory,
    Vec2,
};

#[derive(Debug, Error)]
pub enum LoadError {
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
}

impl LoadError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        LoadError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(file: &Path, location: impl Into<String>, message: impl ToString) -> Self {
        LoadError::Parse {
            file: file.to_path_buf(),
            location: location.into(),
            message: message.to_string(),
        }
    }

    fn json(file: &Path, e: serde_json::Error) -> Self {
        Self::parse(file, format!("{}:{}", e.line(), e.column()), e)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: String,
    pub width: f64,
    pub length: f64,
    pub states: Vec<Sample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub dt: f64,
    pub agents: Vec<AgentRecord>,
}

impl SceneRecord {
    pub fn into_scene(self) -> Result<Scene, SceneError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SceneError::BadPeriod(self.dt));
        }
        let agents = self
            .agents
            .into_iter()
            .map(|a| {
                let traj = Trajectory::from_samples(&a.states, self.dt)
                    .map_err(|e| SceneError::from_trajectory(&a.id, e))?;
                Ok(Agent::new(a.id, a.width, a.length, traj))
            })
            .collect::<Result<Vec<_>, SceneError>>()?;
        validate_scene(Scene {
            scene_id: self.scene_id,
            dt: self.dt,
            agents,
        })
    }

    pub fn from_scene(scene: &Scene) -> Self {
        Self {
            scene_id: scene.scene_id.clone(),
            dt: scene.dt,
            agents: scene
                .agents
                .iter()
                .map(|a| AgentRecord {
                    id: a.id.clone(),
                    width: a.width,
                    length: a.length,
                    states: a.trajectory.samples(),
                })
                .collect(),
        }
    }
}

pub fn parse_scene(text: &str, file: &Path) -> Result<Scene, LoadError> {
    let record: SceneRecord = serde_json::from_str(text).map_err(|e| LoadError::json(file, e))?;
    record
        .into_scene()
        .map_err(|e| LoadError::parse(file, "scene", e))
}

pub fn load_scene(path: &Path) -> Result<Scene, LoadError> {
    let text = fs::read_to_string(path).map_err(|e| LoadError::io(path, e))?;
    parse_scene(&text, path)
}

/// All `*.json` files of a directory, sorted by file name.
pub fn scene_files(dir: &Path) -> Result<Vec<PathBuf>, LoadError> {
    let entries = fs::read_dir(dir).map_err(|e| LoadError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| LoadError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub p: f64,
    pub trajs: BTreeMap<String, Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub scene_id: String,
    pub horizon: f64,
    pub frames: Vec<FrameRecord>,
}

/// Predictions for one scene keyed by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePredictions {
    pub scene_id: String,
    pub horizon: f64,
    pub sets: BTreeMap<usize, JointPredictionSet>,
}

impl ScenePredictions {
    pub fn first_frame(&self) -> Option<usize> {
        self.sets.keys().next().copied()
    }

    pub fn to_record(&self) -> PredictionRecord {
        PredictionRecord {
            scene_id: self.scene_id.clone(),
            horizon: self.horizon,
            frames: self
                .sets
                .values()
                .map(|set| FrameRecord {
                    frame: set.frame,
                    samples: set
                        .samples
                        .iter()
                        .map(|s| SampleRecord {
                            p: s.probability,
                            trajs: s
                                .trajs
                                .iter()
                                .map(|(id, pts)| (id.clone(), pts.iter().map(|p| [p.x, p.y]).collect()))
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn set_from_record(frame: FrameRecord) -> Result<JointPredictionSet, PredictionError> {
    let samples = frame
        .samples
        .into_iter()
        .map(|s| JointSample {
            probability: s.p,
            trajs: s
                .trajs
                .into_iter()
                .map(|(id, pts)| (id, pts.into_iter().map(|[x, y]| Vec2::new(x, y)).collect()))
                .collect(),
        })
        .collect();
    JointPredictionSet::new(frame.frame, samples)
}

pub fn parse_predictions(text: &str, file: &Path) -> Result<ScenePredictions, LoadError> {
    let record: PredictionRecord = serde_json::from_str(text).map_err(|e| LoadError::json(file, e))?;
    let mut sets = BTreeMap::new();
    for (i, frame) in record.frames.into_iter().enumerate() {
        let number = frame.frame;
        let set = set_from_record(frame).map_err(|e| LoadError::parse(file, format!("frames[{i}]"), e))?;
        if sets.insert(number, set).is_some() {
            return Err(LoadError::parse(
                file,
                format!("frames[{i}]"),
                format!("frame {number} appears more than once"),
            ));
        }
    }
    Ok(ScenePredictions {
        scene_id: record.scene_id,
        horizon: record.horizon,
        sets,
    })
}

pub fn load_predictions(path: &Path) -> Result<ScenePredictions, LoadError> {
    let text = fs::read_to_string(path).map_err(|e| LoadError::io(path, e))?;
    parse_predictions(&text, path)
}

/// One row of a pre-computed mode table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRow {
    pub frame: usize,
    pub gt: HomotopyClass,
    pub ml: HomotopyClass,
    pub pred: ClassSet,
    pub feasible: ClassSet,
}

#[derive(Debug, Deserialize)]
struct RawModeRow {
    frame: usize,
    gt_mode: String,
    ml_mode: String,
    pred_modes: String,
    feasible_modes: String,
}

/// Reads a CSV with columns `frame,gt_mode,ml_mode,pred_modes,feasible_modes`.
/// Class sets are written like `CW;CCW`. Rows must have increasing frames.
pub fn parse_mode_table(text: &str, file: &Path) -> Result<Vec<ModeRow>, LoadError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows: Vec<ModeRow> = Vec::new();
    for (i, rec) in reader.deserialize::<RawModeRow>().enumerate() {
        let line = format!("line {}", i + 2);
        let raw = rec.map_err(|e| LoadError::parse(file, line.clone(), e))?;
        let row = ModeRow {
            frame: raw.frame,
            gt: raw.gt_mode.trim().parse().map_err(|e| LoadError::parse(file, line.clone(), e))?,
            ml: raw.ml_mode.trim().parse().map_err(|e| LoadError::parse(file, line.clone(), e))?,
            pred: raw.pred_modes.parse().map_err(|e| LoadError::parse(file, line.clone(), e))?,
            feasible: raw
                .feasible_modes
                .parse()
                .map_err(|e| LoadError::parse(file, line.clone(), e))?,
        };
        if rows.last().is_some_and(|p| p.frame >= row.frame) {
            return Err(LoadError::parse(file, line, "frames must increase"));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn load_mode_table(path: &Path) -> Result<Vec<ModeRow>, LoadError> {
    let text = fs::read_to_string(path).map_err(|e| LoadError::io(path, e))?;
    parse_mode_table(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENE: &str = r#"{"scene_id":"s","dt":0.5,"agents":[
        {"id":"a","width":2,"length":4,"states":[{"t":0.5,"x":0,"y":0},{"t":1.0,"x":1,"y":0}]}]}"#;

    #[test]
    fn scene_round_trip() {
        let s = parse_scene(SCENE, Path::new("s.json")).unwrap();
        assert_eq!(s.agents[0].first_frame(), 1);
        let back = SceneRecord::from_scene(&s).into_scene().unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = parse_scene("{\"scene_id\": 3}", Path::new("bad.json")).unwrap_err();
        match err {
            LoadError::Parse { file, location, .. } => {
                assert_eq!(file, PathBuf::from("bad.json"));
                assert!(location.starts_with("1:"));
            }
            other => panic!("{other}"),
        }
        let gap = SCENE.replace("\"t\":1.0", "\"t\":1.2");
        assert!(matches!(parse_scene(&gap, Path::new("g.json")), Err(LoadError::Parse { .. })));
    }

    #[test]
    fn prediction_round_trip() {
        let text = r#"{"scene_id":"s","horizon":1.0,"frames":[
            {"frame":2,"samples":[{"p":0.6,"trajs":{"a":[[1,0],[2,0]]}},{"p":0.4,"trajs":{"a":[[1,1],[2,2]]}}]}]}"#;
        let p = parse_predictions(text, Path::new("p.json")).unwrap();
        assert_eq!(p.first_frame(), Some(2));
        assert_eq!(p.sets[&2].k(), 2);
        let again = serde_json::to_string(&p.to_record()).unwrap();
        assert_eq!(parse_predictions(&again, Path::new("p.json")).unwrap(), p);
        let bad = text.replace("0.4", "0.7");
        assert!(parse_predictions(&bad, Path::new("p.json")).is_err());
    }

    #[test]
    fn mode_table() {
        let text = "frame,gt_mode,ml_mode,pred_modes,feasible_modes\n5,CW,CW,CW,CCW;CW\n6,CW,CCW,\"CCW,CW\",CW\n";
        let rows = parse_mode_table(text, Path::new("t.csv")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].pred.len(), 2);
        let bad = text.replace("6,CW,CCW", "4,CW,XX");
        assert!(parse_mode_table(&bad, Path::new("t.csv")).is_err());
    }
}
