//! Yaw-oriented boxes and ray queries against them.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

/// Box with a vertical-axis rotation. Local `x` is the box's length axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub center: Point3<f64>,
    pub half_extents: Vector3<f64>,
    /// Radians, counterclockwise about `+z`.
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut min = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self { min, max }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }

    pub fn contains(&self, other: &Aabb, tol: f64) -> bool {
        (0..3).all(|k| other.min[k] >= self.min[k] - tol && other.max[k] <= self.max[k] + tol)
    }

    pub fn to_box(&self) -> Box3 {
        Box3::axis_aligned(self.min, self.max)
    }
}

impl Box3 {
    pub fn new(center: Point3<f64>, half_extents: Vector3<f64>, yaw: f64) -> Self {
        Self {
            center,
            half_extents,
            yaw,
        }
    }

    pub fn axis_aligned(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self {
            center: nalgebra::center(&min, &max),
            half_extents: (max - min) * 0.5,
            yaw: 0.0,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.half_extents.iter().all(|h| h.is_finite() && *h > 0.0)
            && self.center.iter().all(|c| c.is_finite())
            && self.yaw.is_finite()
    }

    /// Unit vectors of the local x and y axes in world coordinates.
    pub fn axes(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (s, c) = self.yaw.sin_cos();
        (Vector3::new(c, s, 0.0), Vector3::new(-s, c, 0.0))
    }

    pub fn to_local(&self, p: &Point3<f64>) -> Vector3<f64> {
        let (ax, ay) = self.axes();
        let d = p - self.center;
        Vector3::new(d.dot(&ax), d.dot(&ay), d.z)
    }

    pub fn to_local_dir(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let (ax, ay) = self.axes();
        Vector3::new(v.dot(&ax), v.dot(&ay), v.z)
    }

    pub fn from_local(&self, local: &Vector3<f64>) -> Point3<f64> {
        let (ax, ay) = self.axes();
        self.center + ax * local.x + ay * local.y + Vector3::z() * local.z
    }

    /// Corners ordered by the bits of their index: bit 0 picks +x, bit 1 +y, bit 2 +z (local).
    pub fn corners(&self) -> [Point3<f64>; 8] {
        let h = self.half_extents;
        std::array::from_fn(|k| {
            let sx = if k & 1 != 0 { 1.0 } else { -1.0 };
            let sy = if k & 2 != 0 { 1.0 } else { -1.0 };
            let sz = if k & 4 != 0 { 1.0 } else { -1.0 };
            self.from_local(&Vector3::new(sx * h.x, sy * h.y, sz * h.z))
        })
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.corners().iter())
    }

    pub fn contains_point(&self, p: &Point3<f64>) -> bool {
        let l = self.to_local(p);
        (0..3).all(|k| l[k].abs() <= self.half_extents[k])
    }

    /// Entry distance along `origin + t * dir` for `t >= 0`, or `None` on a miss.
    /// An origin inside the box reports `Some(0.0)`.
    pub fn ray_entry(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.to_local(origin);
        let d = self.to_local_dir(dir);
        let mut t_min = 0.0_f64;
        let mut t_max = f64::INFINITY;
        for k in 0..3 {
            let h = self.half_extents[k];
            if d[k].abs() < 1e-15 {
                if o[k].abs() > h {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[k];
            let (t0, t1) = {
                let a = (-h - o[k]) * inv;
                let b = (h - o[k]) * inv;
                if a < b { (a, b) } else { (b, a) }
            };
            t_min = t_min.max(t0);
            t_max = t_max.min(t1);
            if t_min > t_max {
                return None;
            }
        }
        Some(t_min)
    }

    /// The six faces as (outward unit normal, face center, in-plane half axes).
    pub fn faces(&self) -> [Face; 6] {
        let (ax, ay) = self.axes();
        let az = Vector3::z();
        let h = self.half_extents;
        let face = |n: Vector3<f64>, dist: f64, u: Vector3<f64>, v: Vector3<f64>| Face {
            normal: n,
            center: self.center + n * dist,
            u,
            v,
        };
        [
            face(ax, h.x, ay * h.y, az * h.z),
            face(-ax, h.x, ay * h.y, az * h.z),
            face(ay, h.y, ax * h.x, az * h.z),
            face(-ay, h.y, ax * h.x, az * h.z),
            face(az, h.z, ax * h.x, ay * h.y),
            face(-az, h.z, ax * h.x, ay * h.y),
        ]
    }

    /// Reflection through the vertical plane `x = plane_x`.
    pub fn mirrored_x(&self, plane_x: f64) -> Box3 {
        Box3 {
            center: Point3::new(2.0 * plane_x - self.center.x, self.center.y, self.center.z),
            half_extents: self.half_extents,
            yaw: std::f64::consts::PI - self.yaw,
        }
    }
}

/// Rectangular face; points are `center + a * u + b * v` for `a, b` in `[-1, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct Face {
    pub normal: Vector3<f64>,
    pub center: Point3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl Face {
    pub fn faces_point(&self, p: &Point3<f64>) -> bool {
        (p - self.center).dot(&self.normal) > 1e-12
    }

    /// Centers of an `s x s` grid of equal cells covering the face.
    pub fn sample_points(&self, s: usize) -> impl Iterator<Item = Point3<f64>> + '_ {
        let step = 2.0 / s as f64;
        (0..s).flat_map(move |a| {
            (0..s).map(move |b| {
                let fa = -1.0 + (a as f64 + 0.5) * step;
                let fb = -1.0 + (b as f64 + 0.5) * step;
                self.center + self.u * fa + self.v * fb
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn unit_box_at(x: f64) -> Box3 {
        Box3::new(Point3::new(x, 0.0, 0.0), Vector3::new(1.0, 1.0, 1.0), 0.0)
    }

    #[test]
    fn axis_ray_hits_at_center_minus_half_extent() {
        let b = unit_box_at(10.0);
        let t = b.ray_entry(&Point3::origin(), &Vector3::x()).unwrap();
        assert!((t - 9.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_outside_ray_misses() {
        let b = unit_box_at(10.0);
        assert!(b.ray_entry(&Point3::new(0.0, 2.0, 0.0), &Vector3::x()).is_none());
        assert!(b.ray_entry(&Point3::origin(), &-Vector3::x()).is_none());
    }

    #[test]
    fn yawed_box_hit_distance() {
        // long box rotated to lie along y: its x half-extent now spans y
        let b = Box3::new(Point3::new(0.0, 10.0, 0.0), Vector3::new(3.0, 0.5, 1.0), FRAC_PI_2);
        let t = b.ray_entry(&Point3::origin(), &Vector3::y()).unwrap();
        assert!((t - 7.0).abs() < 1e-9, "{t}");
        let aabb = b.aabb();
        assert!((aabb.max.y - 13.0).abs() < 1e-9);
        assert!((aabb.max.x - 0.5).abs() < 1e-9);
    }

    #[test]
    fn origin_inside_reports_zero() {
        let b = unit_box_at(0.0);
        assert_eq!(b.ray_entry(&Point3::origin(), &Vector3::z()), Some(0.0));
    }

    #[test]
    fn faces_and_samples() {
        let b = unit_box_at(0.0);
        let faces = b.faces();
        let eye = Point3::new(5.0, 0.0, 0.0);
        let facing: Vec<_> = faces.iter().filter(|f| f.faces_point(&eye)).collect();
        assert_eq!(facing.len(), 1);
        let pts: Vec<_> = facing[0].sample_points(4).collect();
        assert_eq!(pts.len(), 16);
        assert!(pts.iter().all(|p| (p.x - 1.0).abs() < 1e-12 && p.y.abs() < 1.0 && p.z.abs() < 1.0));
        let diag = Point3::new(5.0, 5.0, 5.0);
        assert_eq!(faces.iter().filter(|f| f.faces_point(&diag)).count(), 3);
    }

    #[test]
    fn corners_match_aabb() {
        let b = Box3::axis_aligned(Point3::new(0.0, 1.0, 2.0), Point3::new(3.0, 5.0, 4.0));
        let aabb = b.aabb();
        assert!((aabb.min - Point3::new(0.0, 1.0, 2.0)).norm() < 1e-12);
        assert!((aabb.max - Point3::new(3.0, 5.0, 4.0)).norm() < 1e-12);
        assert!(b.contains_point(&Point3::new(1.0, 2.0, 3.0)));
        assert!(!b.contains_point(&Point3::new(-0.1, 2.0, 3.0)));
    }
}
