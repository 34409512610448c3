//! Scene graph synthesis from a classified plan.
//!
//! Nodes are emitted in a fixed order: floor tiles with their markings,
//! then the column network, the ceiling, lamps and ramp markers. Vehicles
//! are appended by [`populate_vehicles`].

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{lane_subtype_name, park_subtype_name, ClassifiedGrid};
use crate::geom::Box3;
use crate::grid::{CellKind, CellRef};

pub const SCENE_SCHEMA: &str = "scene/1";
pub const OCCUPANCY_SCHEMA: &str = "occupancy/1";

pub const CEILING_HEIGHT: f64 = 3.0;
pub const COLUMN_SIZE: f64 = 0.5;
pub const FLOOR_THICKNESS: f64 = 0.02;
pub const CEILING_THICKNESS: f64 = 0.1;
const MARKING_THICKNESS: f64 = 0.01;
const MARKING_INSET: f64 = 0.9;
const LAMP_HALF: [f64; 3] = [0.3, 0.3, 0.025];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    FloorTile,
    LaneMarking,
    ParkingMarking,
    Column,
    CeilingPanel,
    Lamp,
    Vehicle,
    RampMarker,
}

impl NodeKind {
    /// Whether the node stops sight lines.
    pub fn is_opaque(self) -> bool {
        matches!(
            self,
            NodeKind::FloorTile | NodeKind::Column | NodeKind::CeilingPanel | NodeKind::Vehicle
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleSize {
    Small,
    Medium,
    Large,
}

impl VehicleSize {
    pub const ALL: [VehicleSize; 3] = [VehicleSize::Small, VehicleSize::Medium, VehicleSize::Large];

    /// Length, width, height in meters.
    pub fn dimensions(self) -> [f64; 3] {
        match self {
            VehicleSize::Small => [4.2, 1.8, 1.5],
            VehicleSize::Medium => [4.9, 1.9, 1.8],
            VehicleSize::Large => [5.9, 2.1, 2.4],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleSize::Small => "small",
            VehicleSize::Medium => "medium",
            VehicleSize::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }

    /// Box resting on the floor at `(x, y)` with its length along `yaw`.
    pub fn box_at(self, x: f64, y: f64, yaw: f64) -> Box3 {
        let [l, w, h] = self.dimensions();
        Box3::new(
            Point3::new(x, y, FLOOR_THICKNESS + h / 2.0),
            Vector3::new(l / 2.0, w / 2.0, h / 2.0),
            yaw,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightLevel {
    #[default]
    Bright,
    Clear,
    Moderate,
    Dim,
}

impl LightLevel {
    pub const ALL: [LightLevel; 4] = [
        LightLevel::Bright,
        LightLevel::Clear,
        LightLevel::Moderate,
        LightLevel::Dim,
    ];

    /// Share of eligible lamp sites that are populated, in percent.
    pub fn coverage_percent(self) -> usize {
        match self {
            LightLevel::Bright | LightLevel::Clear => 100,
            LightLevel::Moderate => 70,
            LightLevel::Dim => 40,
        }
    }

    pub fn coverage(self) -> f64 {
        self.coverage_percent() as f64 / 100.0
    }

    pub fn intensity(self) -> f64 {
        match self {
            LightLevel::Bright => 1.0,
            _ => 0.6,
        }
    }

    /// `ceil(coverage * sites)`, in exact integer arithmetic.
    pub fn lamp_count(self, sites: usize) -> usize {
        (self.coverage_percent() * sites).div_ceil(100)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LightLevel::Bright => "bright",
            LightLevel::Clear => "clear",
            LightLevel::Moderate => "moderate",
            LightLevel::Dim => "dim",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub id: String,
    pub kind: NodeKind,
    #[serde(flatten)]
    pub bbox: Box3,
    pub tags: BTreeMap<String, String>,
}

impl SceneNode {
    pub fn new(id: impl Into<String>, kind: NodeKind, bbox: Box3) -> Self {
        Self {
            id: id.into(),
            kind,
            bbox,
            tags: BTreeMap::new(),
        }
    }

    pub fn tag(mut self, key: &str, value: impl Into<String>) -> Self {
        self.tags.insert(key.to_owned(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub light_level: LightLevel,
    pub bounds: Box3,
    pub nodes: Vec<SceneNode>,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema mismatch: expected \"{SCENE_SCHEMA}\", found \"{0}\"")]
    Schema(String),
    #[error("duplicate node id \"{0}\"")]
    DuplicateId(String),
    #[error("node \"{0}\" has a degenerate box")]
    DegenerateBox(String),
    #[error("vehicle \"{0}\" lacks a valid vehicle_size tag")]
    VehicleSize(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneDocument {
    schema: String,
    #[serde(flatten)]
    scene: SceneGraph,
}

impl SceneGraph {
    /// Scene whose bounds are the union of its node boxes.
    pub fn from_nodes(nodes: Vec<SceneNode>, light_level: LightLevel) -> Self {
        let bounds = nodes
            .iter()
            .map(|n| n.bbox.aabb())
            .reduce(|a, b| a.union(&b))
            .map_or_else(
                || Box3::new(Point3::origin(), Vector3::new(0.5, 0.5, 0.5), 0.0),
                |a| a.to_box(),
            );
        Self {
            light_level,
            bounds,
            nodes,
        }
    }

    pub fn node(&self, id: &str) -> Option<&SceneNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Copy with `node` added; bounds grow to contain it.
    pub fn with_node(&self, node: SceneNode) -> SceneGraph {
        let mut out = self.clone();
        out.bounds = out.bounds.aabb().union(&node.bbox.aabb()).to_box();
        out.nodes.push(node);
        out
    }

    pub fn without_node(&self, id: &str) -> SceneGraph {
        let mut out = self.clone();
        out.nodes.retain(|n| n.id != id);
        out
    }

    pub fn to_json(&self) -> String {
        let doc = SceneDocument {
            schema: SCENE_SCHEMA.into(),
            scene: self.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("scene serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let doc: SceneDocument = serde_json::from_str(text)?;
        if doc.schema != SCENE_SCHEMA {
            return Err(SceneError::Schema(doc.schema));
        }
        let scene = doc.scene;
        let mut seen = HashSet::new();
        for node in &scene.nodes {
            if !seen.insert(node.id.as_str()) {
                return Err(SceneError::DuplicateId(node.id.clone()));
            }
            if !node.bbox.is_well_formed() {
                return Err(SceneError::DegenerateBox(node.id.clone()));
            }
            if node.kind == NodeKind::Vehicle
                && node.tags.get("vehicle_size").and_then(|s| VehicleSize::parse(s)).is_none()
            {
                return Err(SceneError::VehicleSize(node.id.clone()));
            }
        }
        Ok(scene)
    }

    /// Triangle mesh of every node box, `+z` up, meters. Twelve triangles per box.
    pub fn to_obj(&self) -> String {
        // two triangles per face, corner indices per Box3::corners
        const TRIS: [[usize; 3]; 12] = [
            [0, 2, 3], [0, 3, 1], // -z
            [4, 5, 7], [4, 7, 6], // +z
            [0, 1, 5], [0, 5, 4], // -y
            [2, 6, 7], [2, 7, 3], // +y
            [0, 4, 6], [0, 6, 2], // -x
            [1, 3, 7], [1, 7, 5], // +x
        ];
        let mut out = String::new();
        let _ = writeln!(out, "# scene export: {} nodes", self.nodes.len());
        for (k, node) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "o {}", node.id);
            for c in node.bbox.corners() {
                let _ = writeln!(out, "v {} {} {}", c.x, c.y, c.z);
            }
            let base = 8 * k + 1;
            for t in TRIS {
                let _ = writeln!(out, "f {} {} {}", base + t[0], base + t[1], base + t[2]);
            }
        }
        out
    }
}

/// Axis-aligned footprint of a grid square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    fn slab(&self, z0: f64, z1: f64, inset: f64) -> Box3 {
        let (cx, cy) = self.center();
        Box3::new(
            Point3::new(cx, cy, (z0 + z1) / 2.0),
            Vector3::new(
                (self.x1 - self.x0) / 2.0 * inset,
                (self.y1 - self.y0) / 2.0 * inset,
                (z1 - z0) / 2.0,
            ),
            0.0,
        )
    }
}

fn prefix_sums(widths: &[f64]) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(widths.iter().scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        }))
        .collect()
}

/// World rectangle of every square, row-major. Column `j` spans
/// `[sum C[..j], sum C[..=j]]` in x; row `i` spans `[sum R[..i], sum R[..=i]]` in y.
pub fn layout_cells(grid: &ClassifiedGrid) -> Vec<(CellRef, Rect)> {
    let spec = grid.spec();
    let xs = prefix_sums(spec.col_widths());
    let ys = prefix_sums(spec.row_widths());
    spec.cells()
        .map(|c| {
            (
                c,
                Rect {
                    x0: xs[c.j],
                    x1: xs[c.j + 1],
                    y0: ys[c.i],
                    y1: ys[c.i + 1],
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthOptions {
    pub light: LightLevel,
    /// Interior corners `(a, b)` whose column is left out. Corner `(a, b)` is
    /// shared by rows `a - 1, a` and columns `b - 1, b`.
    pub pruned_columns: Vec<CellRef>,
}

fn cell_tag(c: CellRef) -> String {
    format!("{},{}", c.i, c.j)
}

pub fn synthesize(grid: &ClassifiedGrid, options: &SynthOptions) -> SceneGraph {
    let spec = grid.spec();
    let (m, n) = (spec.m(), spec.n());
    let rects = layout_cells(grid);
    let h = CEILING_HEIGHT;
    let mut nodes = Vec::new();

    for (cell, rect) in &rects {
        let cc = grid.get(*cell).expect("cell in grid");
        if cc.kind == CellKind::Obstacle {
            continue;
        }
        let suffix = format!("{}-{}", cell.i, cell.j);
        nodes.push(
            SceneNode::new(format!("tile-{suffix}"), NodeKind::FloorTile, rect.slab(0.0, FLOOR_THICKNESS, 1.0))
                .tag("cell", cell_tag(*cell))
                .tag("code", cc.kind.code().to_string()),
        );
        let marking = rect.slab(FLOOR_THICKNESS, FLOOR_THICKNESS + MARKING_THICKNESS, MARKING_INSET);
        let turns = cc.rotation.quarter_turns().to_string();
        if let Some(sub) = cc.lane_subtype {
            let mut node = SceneNode::new(format!("lane-mark-{suffix}"), NodeKind::LaneMarking, marking)
                .tag("cell", cell_tag(*cell))
                .tag("subtype", lane_subtype_name(sub))
                .tag("quarter_turns", turns);
            if let Some(v) = cc.render_variant {
                let name = serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_owned));
                node = node.tag("variant", name.unwrap_or_default());
            }
            nodes.push(node);
        } else if let Some(sub) = cc.park_subtype {
            nodes.push(
                SceneNode::new(format!("park-mark-{suffix}"), NodeKind::ParkingMarking, marking)
                    .tag("cell", cell_tag(*cell))
                    .tag("subtype", park_subtype_name(sub))
                    .tag("quarter_turns", turns),
            );
        }
    }

    let xs = prefix_sums(spec.col_widths());
    let ys = prefix_sums(spec.row_widths());
    let pruned: HashSet<CellRef> = options.pruned_columns.iter().copied().collect();
    for a in 1..m {
        for b in 1..n {
            let touching = [(a - 1, b - 1), (a - 1, b), (a, b - 1), (a, b)]
                .iter()
                .any(|&(i, j)| grid.get(CellRef::new(i, j)).is_some_and(|c| c.kind != CellKind::Obstacle));
            if !touching || pruned.contains(&CellRef::new(a, b)) {
                continue;
            }
            let half = COLUMN_SIZE / 2.0;
            nodes.push(
                SceneNode::new(
                    format!("column-{a}-{b}"),
                    NodeKind::Column,
                    Box3::new(Point3::new(xs[b], ys[a], h / 2.0), Vector3::new(half, half, h / 2.0), 0.0),
                )
                .tag("corner", format!("{a},{b}"))
                .tag("role", "pillar"),
            );
        }
    }
    for (cell, rect) in &rects {
        if grid.get(*cell).is_some_and(|c| c.kind == CellKind::Obstacle) {
            nodes.push(
                SceneNode::new(format!("slab-{}-{}", cell.i, cell.j), NodeKind::Column, rect.slab(0.0, h, 1.0))
                    .tag("cell", cell_tag(*cell))
                    .tag("role", "slab"),
            );
        }
    }

    for (cell, rect) in &rects {
        nodes.push(
            SceneNode::new(
                format!("ceiling-{}-{}", cell.i, cell.j),
                NodeKind::CeilingPanel,
                rect.slab(h - CEILING_THICKNESS, h, 1.0),
            )
            .tag("cell", cell_tag(*cell)),
        );
    }

    for (cell, rect) in &rects {
        let kind = grid.get(*cell).map(|c| c.kind);
        if let Some(ramp @ (CellKind::Entrance | CellKind::Exit)) = kind {
            let z0 = FLOOR_THICKNESS + MARKING_THICKNESS;
            nodes.push(
                SceneNode::new(
                    format!("ramp-{}-{}", cell.i, cell.j),
                    NodeKind::RampMarker,
                    rect.slab(z0, z0 + MARKING_THICKNESS, 0.5),
                )
                .tag("cell", cell_tag(*cell))
                .tag("ramp", if ramp == CellKind::Entrance { "entrance" } else { "exit" }),
            );
        }
    }

    let envelope = Box3::axis_aligned(Point3::origin(), Point3::new(xs[n], ys[m], h));
    let scene = SceneGraph {
        light_level: options.light,
        bounds: envelope,
        nodes,
    };
    place_lamps(&scene, options.light)
}

/// Replaces every lamp with the preset population for `level`. Lamp sites
/// are the lane markings in node order; the first `ceil(coverage * sites)`
/// are lit, so a dimmer level's lamps are always a subset of a brighter one's.
pub fn place_lamps(scene: &SceneGraph, level: LightLevel) -> SceneGraph {
    let mut nodes: Vec<SceneNode> = scene.nodes.iter().filter(|n| n.kind != NodeKind::Lamp).cloned().collect();
    let top = scene.bounds.aabb().max.z;
    let sites: Vec<&SceneNode> = nodes.iter().filter(|n| n.kind == NodeKind::LaneMarking).collect();
    let lamps: Vec<SceneNode> = sites
        .iter()
        .take(level.lamp_count(sites.len()))
        .map(|site| {
            let suffix = site.id.strip_prefix("lane-mark-").unwrap_or(&site.id);
            let z = top - CEILING_THICKNESS - LAMP_HALF[2];
            let mut lamp = SceneNode::new(
                format!("lamp-{suffix}"),
                NodeKind::Lamp,
                Box3::new(
                    Point3::new(site.bbox.center.x, site.bbox.center.y, z),
                    Vector3::from(LAMP_HALF),
                    0.0,
                ),
            )
            .tag("intensity", level.intensity().to_string());
            if let Some(cell) = site.tags.get("cell") {
                lamp = lamp.tag("cell", cell.clone());
            }
            lamp
        })
        .collect();
    let insert_at = nodes
        .iter()
        .rposition(|n| {
            matches!(
                n.kind,
                NodeKind::FloorTile
                    | NodeKind::LaneMarking
                    | NodeKind::ParkingMarking
                    | NodeKind::Column
                    | NodeKind::CeilingPanel
            )
        })
        .map_or(0, |p| p + 1);
    nodes.splice(insert_at..insert_at, lamps);
    SceneGraph {
        light_level: level,
        bounds: scene.bounds,
        nodes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub cell: CellRef,
    pub size: VehicleSize,
    #[serde(default = "default_true")]
    pub parked: bool,
    #[serde(default)]
    pub color: String,
    /// Allows placement on lanes and on parking squares with no lane access.
    #[serde(default)]
    pub force: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OccupancyPlan {
    pub entries: Vec<PlanEntry>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("cell {0} referenced more than once")]
    DuplicateCell(CellRef),
    #[error("cell {0} is outside the grid")]
    OutOfBounds(CellRef),
    #[error("cell {cell} is {kind:?}; vehicles need a reachable parking square (set force to override)")]
    NotParking { cell: CellRef, kind: CellKind },
    #[error("cell {0} is an obstacle")]
    Obstacle(CellRef),
    #[error("occupancy document: {0}")]
    Document(String),
}

impl OccupancyPlan {
    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        #[derive(Deserialize)]
        struct Doc {
            schema: String,
            entries: Vec<PlanEntry>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| PlanError::Document(e.to_string()))?;
        if doc.schema != OCCUPANCY_SCHEMA {
            return Err(PlanError::Document(format!(
                "schema mismatch: expected \"{OCCUPANCY_SCHEMA}\", found \"{}\"",
                doc.schema
            )));
        }
        Ok(Self { entries: doc.entries })
    }
}

/// Returns a copy of `scene` with one vehicle per plan entry, centered in
/// its square and facing the square's rotation direction.
pub fn populate_vehicles(
    scene: &SceneGraph,
    grid: &ClassifiedGrid,
    plan: &OccupancyPlan,
) -> Result<SceneGraph, PlanError> {
    let spec = grid.spec();
    let rects = layout_cells(grid);
    let mut seen = HashSet::new();
    let mut out = scene.clone();
    let mut bounds = scene.bounds.aabb();
    for entry in &plan.entries {
        let cell = entry.cell;
        let cc = grid.get(cell).ok_or(PlanError::OutOfBounds(cell))?;
        if !seen.insert(cell) {
            return Err(PlanError::DuplicateCell(cell));
        }
        match cc.kind {
            CellKind::Obstacle => return Err(PlanError::Obstacle(cell)),
            CellKind::ParkingOrFree if entry.force || cc.lane_adjacency > 0 => {}
            kind if entry.force && kind != CellKind::ParkingOrFree => {}
            kind => return Err(PlanError::NotParking { cell, kind }),
        }
        let rect = rects[cell.i * spec.n() + cell.j].1;
        let (cx, cy) = rect.center();
        let facing = cc.rotation.facing();
        let bbox = entry.size.box_at(cx, cy, facing.world_angle());
        let [length, width, _] = entry.size.dimensions();
        let (depth, span) = match facing.index() % 2 {
            0 => (rect.y1 - rect.y0, rect.x1 - rect.x0),
            _ => (rect.x1 - rect.x0, rect.y1 - rect.y0),
        };
        let mut node = SceneNode::new(format!("vehicle-{}-{}", cell.i, cell.j), NodeKind::Vehicle, bbox)
            .tag("cell", cell_tag(cell))
            .tag("vehicle_size", entry.size.as_str())
            .tag("parked", entry.parked.to_string())
            .tag("occupied", "true");
        if !entry.color.is_empty() {
            node = node.tag("color", entry.color.clone());
        }
        if length > depth || width > span {
            node = node.tag("overhang", "true");
        }
        bounds = bounds.union(&bbox.aabb());
        out.nodes.push(node);
    }
    out.bounds = bounds.to_box();
    Ok(out)
}
