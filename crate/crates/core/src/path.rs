//! Arc-length parameterized ground-truth paths with curvature-aware speed caps.

use crate::types::Vec2;

/// Curvature never exceeds that of a 0.5 m radius circle.
pub const MAX_CURVATURE: f64 = 2.0;

/// Half-chord used when fitting the three-point circle for curvature, m.
pub const CURVATURE_BASE: f64 = 1.0;

/// Vertices closer than this are merged.
const MIN_SEGMENT: f64 = 1e-6;

/// Radius-inverse of the circle through three points; zero when collinear.
pub fn circumcircle_curvature(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let ab = a.distance(b);
    let bc = b.distance(c);
    let ca = c.distance(a);
    let denom = ab * bc * ca;
    if denom < 1e-18 {
        return 0.0;
    }
    2.0 * (b - a).cross(c - a).abs() / denom
}

/// A polyline path that continues as a straight ray past its last vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    vertices: Vec<Vec2>,
    arc: Vec<f64>,
    extension: Vec2,
    /// Curvature of each segment, the larger of its two end vertices.
    segment_curvature: Vec<f64>,
}

impl Path {
    /// `final_heading` orients the straight extension.
    pub fn new(points: &[Vec2], final_heading: f64) -> Self {
        assert!(!points.is_empty(), "a path needs at least one point");
        let mut vertices = vec![points[0]];
        for p in &points[1..] {
            if p.distance(*vertices.last().unwrap()) > MIN_SEGMENT {
                vertices.push(*p);
            }
        }
        let mut arc = Vec::with_capacity(vertices.len());
        let mut s = 0.0;
        arc.push(0.0);
        for w in vertices.windows(2) {
            s += w[0].distance(w[1]);
            arc.push(s);
        }
        let mut path = Path {
            vertices,
            arc,
            extension: Vec2::from_angle(final_heading),
            segment_curvature: Vec::new(),
        };
        let n = path.vertices.len();
        let vertex_kappa: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 || i + 1 == n {
                    return 0.0;
                }
                let s = path.arc[i];
                let before = path.point_at((s - CURVATURE_BASE).max(0.0));
                let after = path.point_at((s + CURVATURE_BASE).min(path.length()));
                circumcircle_curvature(before, path.vertices[i], after).min(MAX_CURVATURE)
            })
            .collect();
        path.segment_curvature = vertex_kappa.windows(2).map(|w| w[0].max(w[1])).collect();
        path
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn extension_direction(&self) -> Vec2 {
        self.extension
    }

    /// Index of the segment containing `s`, or `None` on the extension.
    fn segment(&self, s: f64) -> Option<usize> {
        if self.vertices.len() < 2 || s >= self.length() {
            return None;
        }
        let idx = self.arc.partition_point(|a| *a <= s);
        Some(idx.saturating_sub(1).min(self.vertices.len() - 2))
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.max(0.0);
        match self.segment(s) {
            Some(i) => {
                let len = self.arc[i + 1] - self.arc[i];
                self.vertices[i].lerp(self.vertices[i + 1], (s - self.arc[i]) / len)
            }
            None => *self.vertices.last().unwrap() + self.extension * (s - self.length()),
        }
    }

    /// Unit tangent at `s`.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        match self.segment(s.max(0.0)) {
            Some(i) => {
                let d = self.vertices[i + 1] - self.vertices[i];
                d * (1.0 / d.norm())
            }
            None => self.extension,
        }
    }

    /// Curvature at `s`; segments are right-closed at their start vertex.
    pub fn curvature_at(&self, s: f64) -> f64 {
        self.segment(s.max(0.0))
            .map_or(0.0, |i| self.segment_curvature[i])
    }

    /// Distance from `p` to the path, including its extension ray.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        let mut best = f64::INFINITY;
        for w in self.vertices.windows(2) {
            best = best.min(point_segment_distance(p, w[0], w[1]));
        }
        let end = *self.vertices.last().unwrap();
        let t = (p - end).dot(self.extension).max(0.0);
        best.min(p.distance(end + self.extension * t))
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Upper speed bound along a path that respects the lateral limit everywhere
/// and can always be met by braking at the longitudinal limit.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedCap {
    knots: Vec<f64>,
    /// Squared speed bound at each knot.
    cap2: Vec<f64>,
    v_max2: f64,
}

impl SpeedCap {
    pub fn new(path: &Path, v_max: f64, a_lon_max: f64, a_lat_max: f64) -> Self {
        let v_max2 = v_max * v_max;
        let n = path.vertices.len();
        let knots = path.arc.clone();
        let mut cap2: Vec<f64> = (0..n)
            .map(|i| {
                let left = if i > 0 { path.segment_curvature[i - 1] } else { 0.0 };
                let right = if i + 1 < n { path.segment_curvature[i] } else { 0.0 };
                let kappa = left.max(right);
                if kappa > 0.0 {
                    v_max2.min(a_lat_max / kappa)
                } else {
                    v_max2
                }
            })
            .collect();
        for i in (0..n.saturating_sub(1)).rev() {
            let reachable = cap2[i + 1] + 2.0 * a_lon_max * (knots[i + 1] - knots[i]);
            cap2[i] = cap2[i].min(reachable);
        }
        Self { knots, cap2, v_max2 }
    }

    /// Squared speed bound at `s`.
    pub fn cap2_at(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        let last = self.knots.len() - 1;
        if s >= self.knots[last] {
            return self.cap2[last].max(0.0).min(self.v_max2);
        }
        let i = self.knots.partition_point(|k| *k <= s).saturating_sub(1);
        let span = self.knots[i + 1] - self.knots[i];
        let f = (s - self.knots[i]) / span;
        self.cap2[i] + (self.cap2[i + 1] - self.cap2[i]) * f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_curvature() {
        let r = 20.0;
        let pts: Vec<Vec2> = (0..200)
            .map(|i| Vec2::from_angle(i as f64 * 0.025) * r)
            .collect();
        let p = Path::new(&pts, 0.0);
        let k = p.curvature_at(p.length() / 2.0);
        assert!((k - 1.0 / r).abs() < 1e-4, "kappa {k}");
    }

    #[test]
    fn straight_path_and_extension() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0)];
        let p = Path::new(&pts, 0.0);
        assert_eq!(p.vertices().len(), 3);
        assert_eq!(p.length(), 3.0);
        assert_eq!(p.curvature_at(1.5), 0.0);
        assert_eq!(p.point_at(5.0), Vec2::new(5.0, 0.0));
        assert!(p.distance_to(Vec2::new(10.0, 0.0)) < 1e-12);
    }

    #[test]
    fn sharp_corner_is_clamped() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(0.01, 0.0), Vec2::new(0.01, 0.01)];
        let p = Path::new(&pts, 0.0);
        assert!(p.curvature_at(0.0) <= MAX_CURVATURE);
    }

    #[test]
    fn single_point_path_extends() {
        let p = Path::new(&[Vec2::new(1.0, 1.0)], std::f64::consts::FRAC_PI_2);
        assert_eq!(p.length(), 0.0);
        let q = p.point_at(2.0);
        assert!(q.distance(Vec2::new(1.0, 3.0)) < 1e-12);
    }

    #[test]
    fn cap_brakes_ahead_of_curve() {
        // 50 m straight, then a 10 m radius quarter turn.
        let mut pts: Vec<Vec2> = (0..=50).map(|i| Vec2::new(i as f64, 0.0)).collect();
        for k in 1..=30 {
            let a = k as f64 / 30.0 * std::f64::consts::FRAC_PI_2;
            pts.push(Vec2::new(50.0 + 10.0 * a.sin(), 10.0 - 10.0 * a.cos()));
        }
        let p = Path::new(&pts, std::f64::consts::FRAC_PI_2);
        let cap = SpeedCap::new(&p, 20.0, 1.47, 1.18);
        let turn = cap.cap2_at(55.0);
        assert!(turn <= 1.18 * 10.5);
        // Far before the curve the bound relaxes at the braking rate.
        assert!(cap.cap2_at(10.0) > turn);
        assert!(cap.cap2_at(10.0) <= turn + 2.0 * 1.47 * 45.0 + 1e-9);
    }
}
