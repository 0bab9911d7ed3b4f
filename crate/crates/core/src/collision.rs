//! Three-disk vehicle collision test.

use thiserror::Error;

use crate::types::{kinematics, Footprint, Vec2};

/// Disks at the vehicle center and at both bumpers, all of radius width / 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskSet {
    pub centers: [Vec2; 3],
    pub radius: f64,
}

/// Position and heading of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

pub fn disk_centers(x: f64, y: f64, heading: f64, length: f64, width: f64) -> DiskSet {
    let radius = width / 2.0;
    let offset = (length / 2.0 - radius).max(0.0);
    let c = Vec2::new(x, y);
    let u = Vec2::from_angle(heading) * offset;
    DiskSet {
        centers: [c - u, c, c + u],
        radius,
    }
}

impl DiskSet {
    pub fn of(pose: Pose, fp: Footprint) -> Self {
        disk_centers(pose.position.x, pose.position.y, pose.heading, fp.length, fp.width)
    }

    /// Smallest distance between any two disk centers of the two sets.
    pub fn min_center_distance(&self, other: &DiskSet) -> f64 {
        let mut d = f64::INFINITY;
        for a in &self.centers {
            for b in &other.centers {
                d = d.min(a.distance(*b));
            }
        }
        d
    }

    pub fn overlaps(&self, other: &DiskSet) -> bool {
        self.min_center_distance(other) < self.radius + other.radius
    }
}

pub fn poses_collide(a: Pose, fa: Footprint, b: Pose, fb: Footprint) -> bool {
    DiskSet::of(a, fa).overlaps(&DiskSet::of(b, fb))
}

/// Poses along a position sequence, heading from finite differences.
pub fn poses_from_points(points: &[Vec2], initial_heading: f64) -> Vec<Pose> {
    kinematics(points, 1.0, initial_heading)
        .into_iter()
        .zip(points)
        .map(|(k, p)| Pose {
            position: *p,
            heading: k.heading,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("trajectories differ in length ({0} vs {1})")]
pub struct LengthMismatch(pub usize, pub usize);

/// True if the vehicles overlap at any shared sample.
pub fn is_collision(a: &[Vec2], b: &[Vec2], fa: Footprint, fb: Footprint) -> Result<bool, LengthMismatch> {
    if a.len() != b.len() {
        return Err(LengthMismatch(a.len(), b.len()));
    }
    is_collision_poses(&poses_from_points(a, 0.0), &poses_from_points(b, 0.0), fa, fb)
}

pub fn is_collision_poses(a: &[Pose], b: &[Pose], fa: Footprint, fb: Footprint) -> Result<bool, LengthMismatch> {
    if a.len() != b.len() {
        return Err(LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).any(|(pa, pb)| poses_collide(*pa, fa, *pb, fb)))
}
