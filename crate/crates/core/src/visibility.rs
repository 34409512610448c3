//! Pinhole-camera visibility of a target vehicle.
//!
//! The camera sits on the ego roof, level, looking along the ego heading.
//! A target's camera-facing faces are sampled on an `s x s` grid of cell
//! centers; a sample counts as visible when it lies in the frustum and the
//! sight line from the camera reaches it before any other opaque node.
//! The visible fraction is visible samples over in-frustum samples.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Box3};
use crate::scene::{NodeKind, SceneGraph, SceneNode};

pub const SWEEP_SCHEMA: &str = "sweep/1";
pub const DEFAULT_RESOLUTION: usize = 24;
pub const DEFAULT_STEP: f64 = 0.5;
pub const SWEEP_CSV_HEADER: &str = "s_m,x,y,heading_rad,in_frustum,visible_fraction,confidence_ext";

const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VisibilityError {
    #[error("unknown target \"{0}\"")]
    UnknownTarget(String),
    #[error("target \"{0}\" is not a vehicle")]
    NotAVehicle(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("sweep step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("path has no vertices")]
    EmptyPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    /// Meters above the floor point under the ego.
    pub mount_height: f64,
    pub horizontal_fov_deg: f64,
    /// Image width over height.
    pub aspect: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            mount_height: 1.6,
            horizontal_fov_deg: 60.0,
            aspect: 16.0 / 9.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), VisibilityError> {
        if !(self.horizontal_fov_deg > 0.0 && self.horizontal_fov_deg < 180.0) {
            return Err(VisibilityError::InvalidCamera(format!(
                "horizontal fov {} not in (0, 180)",
                self.horizontal_fov_deg
            )));
        }
        if !(self.mount_height > 0.0 && self.mount_height.is_finite()) {
            return Err(VisibilityError::InvalidCamera(format!(
                "mount height {} must be positive",
                self.mount_height
            )));
        }
        if !(self.aspect > 0.0 && self.aspect.is_finite()) {
            return Err(VisibilityError::InvalidCamera(format!("aspect {} must be positive", self.aspect)));
        }
        Ok(())
    }
}

/// Planar pose: position in meters, heading in radians counterclockwise from `+x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl EgoPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    pub apex: Point3<f64>,
    pub forward: Vector3<f64>,
    pub right: Vector3<f64>,
    pub up: Vector3<f64>,
    pub tan_half_h: f64,
    pub tan_half_v: f64,
}

impl Frustum {
    pub fn horizontal_half_angle(&self) -> f64 {
        self.tan_half_h.atan()
    }

    pub fn vertical_half_angle(&self) -> f64 {
        self.tan_half_v.atan()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let d = p - self.apex;
        let depth = d.dot(&self.forward);
        depth > 0.0
            && d.dot(&self.right).abs() <= depth * self.tan_half_h
            && d.dot(&self.up).abs() <= depth * self.tan_half_v
    }
}

pub fn make_camera(ego: &EgoPose, cfg: &CameraConfig) -> Frustum {
    let (s, c) = ego.heading.sin_cos();
    let tan_half_h = (cfg.horizontal_fov_deg.to_radians() / 2.0).tan();
    Frustum {
        apex: Point3::new(ego.x, ego.y, cfg.mount_height),
        forward: Vector3::new(c, s, 0.0),
        right: Vector3::new(s, -c, 0.0),
        up: Vector3::z(),
        tan_half_h,
        tan_half_v: tan_half_h / cfg.aspect,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccluderShare {
    pub id: String,
    /// Share of in-frustum samples whose first hit is this node.
    pub blocked_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilitySample {
    pub ego: EgoPose,
    pub target_id: String,
    /// Target footprint center and yaw at sampling time.
    pub target: EgoPose,
    pub visible_fraction: f64,
    pub in_frustum: bool,
    pub eligible_points: usize,
    pub occluders: Vec<OccluderShare>,
}

struct Occluder<'a> {
    id: &'a str,
    node: &'a SceneNode,
    bbox: Box3,
    aabb: Aabb,
}

/// Opaque nodes of a scene prepared for repeated queries.
pub struct VisibilityEngine<'a> {
    scene: &'a SceneGraph,
    occluders: Vec<Occluder<'a>>,
    resolution: usize,
}

impl<'a> VisibilityEngine<'a> {
    pub fn new(scene: &'a SceneGraph) -> Self {
        let occluders = scene
            .nodes
            .iter()
            .filter(|n| n.kind.is_opaque())
            .map(|n| Occluder {
                id: &n.id,
                node: n,
                bbox: n.bbox,
                aabb: n.bbox.aabb(),
            })
            .collect();
        Self {
            scene,
            occluders,
            resolution: DEFAULT_RESOLUTION,
        }
    }

    /// Samples per face side.
    pub fn with_resolution(mut self, s: usize) -> Self {
        self.resolution = s.max(1);
        self
    }

    pub fn target_box(&self, target_id: &str) -> Result<Box3, VisibilityError> {
        let node = self
            .scene
            .node(target_id)
            .ok_or_else(|| VisibilityError::UnknownTarget(target_id.to_owned()))?;
        if node.kind != NodeKind::Vehicle {
            return Err(VisibilityError::NotAVehicle(target_id.to_owned()));
        }
        Ok(node.bbox)
    }

    pub fn visible_fraction(
        &self,
        ego: &EgoPose,
        cfg: &CameraConfig,
        target_id: &str,
    ) -> Result<VisibilitySample, VisibilityError> {
        cfg.validate()?;
        let bbox = self.target_box(target_id)?;
        Ok(self.sample_with_box(ego, cfg, target_id, &bbox))
    }

    /// Like [`visible_fraction`](Self::visible_fraction) with the target moved to `target_box`.
    pub fn sample_with_box(
        &self,
        ego: &EgoPose,
        cfg: &CameraConfig,
        target_id: &str,
        target_box: &Box3,
    ) -> VisibilitySample {
        let frustum = make_camera(ego, cfg);
        let reach = target_box.aabb().union(&Aabb::from_points([&frustum.apex]));
        let candidates: Vec<&Occluder> = self
            .occluders
            .iter()
            .filter(|o| o.id != target_id && o.aabb.overlaps(&reach))
            .collect();

        let mut eligible = 0usize;
        let mut visible = 0usize;
        let mut blocked: BTreeMap<&str, usize> = BTreeMap::new();
        for face in target_box.faces().iter().filter(|f| f.faces_point(&frustum.apex)) {
            for p in face.sample_points(self.resolution) {
                if !frustum.contains(&p) {
                    continue;
                }
                eligible += 1;
                let ray = p - frustum.apex;
                let dist = ray.norm();
                let dir = ray / dist;
                let first = candidates
                    .iter()
                    .filter_map(|o| o.bbox.ray_entry(&frustum.apex, &dir).map(|t| (t, o.id)))
                    .filter(|(t, _)| *t < dist - HIT_EPS)
                    .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
                match first {
                    Some((_, id)) => *blocked.entry(id).or_default() += 1,
                    None => visible += 1,
                }
            }
        }
        let share = |k: usize| if eligible == 0 { 0.0 } else { k as f64 / eligible as f64 };
        VisibilitySample {
            ego: *ego,
            target_id: target_id.to_owned(),
            target: EgoPose::new(target_box.center.x, target_box.center.y, target_box.yaw),
            visible_fraction: share(visible),
            in_frustum: eligible > 0,
            eligible_points: eligible,
            occluders: blocked
                .into_iter()
                .map(|(id, k)| OccluderShare {
                    id: id.to_owned(),
                    blocked_fraction: share(k),
                })
                .collect(),
        }
    }

    /// Nearest opaque node hit by the ray, skipping `ignore`.
    pub fn ray_intersect(
        &self,
        origin: &Point3<f64>,
        dir: &Vector3<f64>,
        ignore: &HashSet<&str>,
    ) -> Option<(String, f64)> {
        self.occluders
            .iter()
            .filter(|o| !ignore.contains(o.id))
            .filter_map(|o| o.bbox.ray_entry(origin, dir).map(|t| (t, o.id)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
            .map(|(t, id)| (id.to_owned(), t))
    }

    /// Whether the straight segment between two points passes through any
    /// opaque node accepted by `filter`.
    pub fn segment_blocked(
        &self,
        from: &Point3<f64>,
        to: &Point3<f64>,
        filter: impl Fn(&SceneNode) -> bool,
    ) -> bool {
        let ray = to - from;
        let dist = ray.norm();
        if dist == 0.0 {
            return false;
        }
        let dir = ray / dist;
        self.occluders
            .iter()
            .filter(|o| filter(o.node))
            .any(|o| o.bbox.ray_entry(from, &dir).is_some_and(|t| t < dist - HIT_EPS))
    }
}

pub fn ray_intersect(
    scene: &SceneGraph,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    ignore: &HashSet<&str>,
) -> Option<(String, f64)> {
    VisibilityEngine::new(scene).ray_intersect(origin, dir, ignore)
}

pub fn visible_fraction(
    scene: &SceneGraph,
    ego: &EgoPose,
    cfg: &CameraConfig,
    target_id: &str,
) -> Result<VisibilitySample, VisibilityError> {
    VisibilityEngine::new(scene).visible_fraction(ego, cfg, target_id)
}

/// Points at arc lengths `0, step, 2 step, ...` along a polyline, each with
/// the heading of the segment it lies on. A sample exactly on an interior
/// vertex takes the heading of the following segment. A path of zero length
/// yields one sample carrying the first vertex's heading.
pub fn sample_path(path: &[EgoPose], step: f64) -> Result<Vec<(f64, EgoPose)>, VisibilityError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(VisibilityError::InvalidStep(step));
    }
    let first = *path.first().ok_or(VisibilityError::EmptyPath)?;
    let segments: Vec<(EgoPose, EgoPose, f64, f64)> = path
        .windows(2)
        .filter_map(|w| {
            let len = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            (len > 0.0).then_some((w[0], w[1], len, (w[1].y - w[0].y).atan2(w[1].x - w[0].x)))
        })
        .collect();
    let total: f64 = segments.iter().map(|s| s.2).sum();
    if segments.is_empty() {
        return Ok(vec![(0.0, first)]);
    }
    let count = (total / step + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut seg = 0usize;
    let mut seg_start = 0.0;
    for k in 0..count {
        let s = k as f64 * step;
        while seg + 1 < segments.len() && s >= seg_start + segments[seg].2 {
            seg_start += segments[seg].2;
            seg += 1;
        }
        let (a, b, len, heading) = segments[seg];
        let u = ((s - seg_start) / len).clamp(0.0, 1.0);
        out.push((
            s,
            EgoPose::new(a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u, heading),
        ));
    }
    Ok(out)
}

/// Which body moves along the sweep path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mover {
    Ego,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub s_m: f64,
    #[serde(flatten)]
    pub sample: VisibilitySample,
}

impl SweepSample {
    pub fn mover_pose(&self, mover: Mover) -> EgoPose {
        match mover {
            Mover::Ego => self.sample.ego,
            Mover::Target => self.sample.target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionSweep {
    pub target_id: String,
    pub mover: Mover,
    pub step: f64,
    pub path: Vec<EgoPose>,
    pub samples: Vec<SweepSample>,
}

impl OcclusionSweep {
    pub fn fractions(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.sample.visible_fraction)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let pose = s.mover_pose(self.mover);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},",
                s.s_m, pose.x, pose.y, pose.heading, s.sample.in_frustum, s.sample.visible_fraction
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            schema: &'static str,
            #[serde(flatten)]
            sweep: &'a OcclusionSweep,
        }
        let mut text = serde_json::to_string_pretty(&Doc {
            schema: SWEEP_SCHEMA,
            sweep: self,
        })
        .expect("sweep serializes");
        text.push('\n');
        text
    }
}

impl VisibilityEngine<'_> {
    /// Moves the ego along `path` and samples the target every `step` meters.
    pub fn sweep(
        &self,
        path: &[EgoPose],
        cfg: &CameraConfig,
        target_id: &str,
        step: f64,
    ) -> Result<OcclusionSweep, VisibilityError> {
        cfg.validate()?;
        let bbox = self.target_box(target_id)?;
        let poses = sample_path(path, step)?;
        let samples = poses
            .par_iter()
            .map(|(s, pose)| SweepSample {
                s_m: *s,
                sample: self.sample_with_box(pose, cfg, target_id, &bbox),
            })
            .collect();
        Ok(OcclusionSweep {
            target_id: target_id.to_owned(),
            mover: Mover::Ego,
            step,
            path: path.to_vec(),
            samples,
        })
    }

    /// Holds the ego fixed and moves the target footprint along `path`,
    /// aligning its length axis with the path tangent.
    pub fn sweep_target(
        &self,
        ego: &EgoPose,
        path: &[EgoPose],
        cfg: &CameraConfig,
        target_id: &str,
        step: f64,
    ) -> Result<OcclusionSweep, VisibilityError> {
        cfg.validate()?;
        let bbox = self.target_box(target_id)?;
        let poses = sample_path(path, step)?;
        let samples = poses
            .par_iter()
            .map(|(s, pose)| {
                let moved = Box3::new(Point3::new(pose.x, pose.y, bbox.center.z), bbox.half_extents, pose.heading);
                SweepSample {
                    s_m: *s,
                    sample: self.sample_with_box(ego, cfg, target_id, &moved),
                }
            })
            .collect();
        Ok(OcclusionSweep {
            target_id: target_id.to_owned(),
            mover: Mover::Target,
            step,
            path: path.to_vec(),
            samples,
        })
    }
}

pub fn sweep(
    scene: &SceneGraph,
    path: &[EgoPose],
    cfg: &CameraConfig,
    target_id: &str,
    step: f64,
) -> Result<OcclusionSweep, VisibilityError> {
    VisibilityEngine::new(scene).sweep(path, cfg, target_id, step)
}
