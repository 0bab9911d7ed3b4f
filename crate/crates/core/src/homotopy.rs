//! Free-end homotopy classes from the winding of the relative position vector.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::CriticalPair;
use crate::types::{EvalConfig, Scene, Vec2, STATIONARY_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HomotopyClass {
    #[serde(rename = "CW")]
    Cw,
    #[serde(rename = "CCW")]
    Ccw,
    #[serde(rename = "S")]
    Static,
}

impl HomotopyClass {
    pub fn as_str(self) -> &'static str {
        match self {
            HomotopyClass::Cw => "CW",
            HomotopyClass::Ccw => "CCW",
            HomotopyClass::Static => "S",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            HomotopyClass::Cw => HomotopyClass::Ccw,
            HomotopyClass::Ccw => HomotopyClass::Cw,
            HomotopyClass::Static => HomotopyClass::Static,
        }
    }
}

impl fmt::Display for HomotopyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown homotopy class {0:?}")]
pub struct ParseClassError(pub String);

impl FromStr for HomotopyClass {
    type Err = ParseClassError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CW" => Ok(HomotopyClass::Cw),
            "CCW" => Ok(HomotopyClass::Ccw),
            "S" => Ok(HomotopyClass::Static),
            _ => Err(ParseClassError(s.to_string())),
        }
    }
}

/// A small set of homotopy classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ClassSet(u8);

impl ClassSet {
    pub const EMPTY: ClassSet = ClassSet(0);

    fn bit(c: HomotopyClass) -> u8 {
        match c {
            HomotopyClass::Cw => 1,
            HomotopyClass::Ccw => 2,
            HomotopyClass::Static => 4,
        }
    }

    pub fn insert(&mut self, c: HomotopyClass) {
        self.0 |= Self::bit(c);
    }

    pub fn contains(self, c: HomotopyClass) -> bool {
        self.0 & Self::bit(c) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: ClassSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Members in the order CW, CCW, S.
    pub fn iter(self) -> impl Iterator<Item = HomotopyClass> {
        [HomotopyClass::Cw, HomotopyClass::Ccw, HomotopyClass::Static]
            .into_iter()
            .filter(move |c| self.contains(*c))
    }
}

impl FromIterator<HomotopyClass> for ClassSet {
    fn from_iter<I: IntoIterator<Item = HomotopyClass>>(iter: I) -> Self {
        let mut s = ClassSet::EMPTY;
        for c in iter {
            s.insert(c);
        }
        s
    }
}

/// Written as members joined by `;`, e.g. `CW;CCW`. The empty set is `-`.
impl fmt::Display for ClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        let parts: Vec<&str> = self.iter().map(HomotopyClass::as_str).collect();
        f.write_str(&parts.join(";"))
    }
}

/// Accepts members separated by `;`, `,`, `|` or whitespace.
impl FromStr for ClassSet {
    type Err = ParseClassError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || t == "-" {
            return Ok(ClassSet::EMPTY);
        }
        t.split(|c: char| c == ';' || c == ',' || c == '|' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(HomotopyClass::from_str)
            .collect()
    }
}

impl Serialize for ClassSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HomotopyError {
    #[error("trajectories differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Cumulative winding of the relative position `A - B`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindingResult {
    pub delta_theta: f64,
    pub per_step: Vec<f64>,
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Sums the wrapped change in bearing of `A - B` between consecutive samples.
/// Frames where the agents coincide reuse the previous bearing.
pub fn winding_angle(a: &[Vec2], b: &[Vec2]) -> Result<WindingResult, HomotopyError> {
    if a.len() != b.len() {
        return Err(HomotopyError::LengthMismatch(a.len(), b.len()));
    }
    let mut per_step = Vec::with_capacity(a.len().saturating_sub(1));
    let mut prev: Option<f64> = None;
    for (i, (pa, pb)) in a.iter().zip(b).enumerate() {
        let rel = *pa - *pb;
        let bearing = (rel.norm() >= STATIONARY_EPS).then(|| rel.angle());
        if i > 0 {
            per_step.push(match (prev, bearing) {
                (Some(p), Some(c)) => wrap_angle(c - p),
                _ => 0.0,
            });
        }
        if bearing.is_some() {
            prev = bearing;
        }
    }
    Ok(WindingResult {
        delta_theta: per_step.iter().sum(),
        per_step,
    })
}

/// Maps a winding angle to a class with a symmetric static band of half-width
/// `theta_hat`. With `theta_hat = 0` a zero angle counts as CCW.
pub fn homotopy_class(delta_theta: f64, theta_hat: f64) -> HomotopyClass {
    if delta_theta < -theta_hat {
        HomotopyClass::Cw
    } else if delta_theta < theta_hat {
        HomotopyClass::Static
    } else {
        HomotopyClass::Ccw
    }
}

/// Class of a pair of equally long trajectories.
pub fn classify(a: &[Vec2], b: &[Vec2], theta_hat: f64) -> Result<HomotopyClass, HomotopyError> {
    Ok(homotopy_class(winding_angle(a, b)?.delta_theta, theta_hat))
}

/// Ground-truth class at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GtMode {
    pub frame: usize,
    pub delta_theta: f64,
    pub class: HomotopyClass,
}

/// Ground-truth class at every co-observed frame, each over the recorded future
/// starting at that frame, at most one horizon long.
pub fn gt_mode_sequence(scene: &Scene, pair: &CriticalPair, cfg: &EvalConfig) -> Vec<GtMode> {
    let (Some(a), Some(b)) = (scene.agent(&pair.agent_a), scene.agent(&pair.agent_b)) else {
        return Vec::new();
    };
    let window = pair.co_observed;
    let steps = cfg.horizon_frames(scene.dt);
    window
        .frames()
        .map(|frame| {
            let end = (frame + steps).min(window.last);
            let w = winding_angle(a.window(frame, end), b.window(frame, end))
                .expect("windows share bounds");
            GtMode {
                frame,
                delta_theta: w.delta_theta,
                class: homotopy_class(w.delta_theta, cfg.theta_hat),
            }
        })
        .collect()
}
