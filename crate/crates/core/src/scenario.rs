//! Occlusion scenarios, sweep statistics and the difficulty score.
//!
//! Every builder lays out a small garage patch in world meters (floor, ceiling,
//! lane markings as lamp sites, columns, parked vehicles) together with the
//! path the camera or the target follows.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::FRAC_PI_2;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geom::Box3;
use crate::scene::{
    place_lamps, LightLevel, NodeKind, SceneGraph, SceneNode, VehicleSize, CEILING_HEIGHT, CEILING_THICKNESS,
    COLUMN_SIZE, FLOOR_THICKNESS,
};
use crate::visibility::{
    CameraConfig, EgoPose, Mover, OcclusionSweep, VisibilityEngine, VisibilityError, DEFAULT_RESOLUTION, DEFAULT_STEP,
};

pub const SCENARIO_SCHEMA: &str = "scenario/1";
pub const REPORT_SCHEMA: &str = "report/1";
/// Visible fraction below which a sample counts toward a blackout run.
pub const BLACKOUT_THRESHOLD: f64 = 0.2;
/// Visible fraction a recovered target must hold after its sightline clears.
pub const RECOVERY_THRESHOLD: f64 = 0.9;

const LEG_LENGTH: f64 = 40.0;
const STALL_DEPTH: f64 = 6.0;
const STALL_WIDTH: f64 = 2.5;
const ROW_EDGE: f64 = 3.0;
const MARK_SPACING: f64 = 5.0;
const START_LATTICE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("construction: {0}")]
    Construction(String),
    #[error("scenario has no targets")]
    NoTargets,
    #[error("slot {0} used more than once")]
    DuplicateSlot(Slot),
    #[error(transparent)]
    Visibility(#[from] VisibilityError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("no sweeps to score")]
    NoSweeps,
    #[error("sweep for \"{0}\" has no samples")]
    EmptySweep(String),
    #[error("bad weights: {0}")]
    BadWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioLabel {
    Case1CornerColumn,
    Case2ParkedEgo,
    Case3ParkedRows,
    LightOnly,
    /// A user-supplied scene, path and target list.
    Custom,
}

/// Parking positions of the compound-occlusion row, nearest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Close,
    Medium,
    Far,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Close, Slot::Medium, Slot::Far];

    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Close => "close",
            Slot::Medium => "medium",
            Slot::Far => "far",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl std::fmt::Display for Slot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Case1Params {
    /// Gap between each lane edge and the corner column.
    pub column_setback: f64,
    pub lane_width: f64,
    /// Distance along the second leg from the corner to the target.
    pub target_distance: f64,
    pub target_size: VehicleSize,
}

impl Default for Case1Params {
    fn default() -> Self {
        Self {
            column_setback: 0.25,
            lane_width: 5.5,
            target_distance: 6.0,
            target_size: VehicleSize::Small,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Case2Params {
    /// Forward distance from the camera to the column at the side of the ego's space.
    pub column_offset: f64,
    /// Forward distance from the camera to the centerline of the lane ahead.
    pub lane_distance: f64,
    pub target_size: VehicleSize,
}

impl Default for Case2Params {
    fn default() -> Self {
        Self {
            column_offset: 3.0,
            lane_distance: 8.0,
            target_size: VehicleSize::Medium,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotEntry {
    pub slot: Slot,
    pub size: VehicleSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Case3Params {
    pub layout: Vec<SlotEntry>,
    /// Straight ego path length along the lane.
    pub path_length: f64,
    /// Along-lane position of the row's zero offset, measured from the path start.
    pub row_origin: f64,
    pub close_offset: f64,
    pub medium_offset: f64,
    pub far_offset: f64,
}

impl Default for Case3Params {
    fn default() -> Self {
        Self {
            layout: Vec::new(),
            path_length: 10.0,
            row_origin: 10.0,
            close_offset: 4.0,
            medium_offset: 8.0,
            far_offset: 12.0,
        }
    }
}

impl Case3Params {
    pub fn with_layout(layout: Vec<SlotEntry>) -> Self {
        Self {
            layout,
            ..Default::default()
        }
    }

    pub fn offset(&self, slot: Slot) -> f64 {
        match slot {
            Slot::Close => self.close_offset,
            Slot::Medium => self.medium_offset,
            Slot::Far => self.far_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightOnlyParams {
    pub target_distance: f64,
    pub path_length: f64,
}

impl Default for LightOnlyParams {
    fn default() -> Self {
        Self {
            target_distance: 20.0,
            path_length: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "label", content = "params", rename_all = "snake_case")]
pub enum ScenarioParams {
    Case1CornerColumn(Case1Params),
    Case2ParkedEgo(Case2Params),
    Case3ParkedRows(Case3Params),
    LightOnly(LightOnlyParams),
}

/// A scenario parameter document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub light: LightLevel,
    #[serde(flatten)]
    pub params: ScenarioParams,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Document(e.to_string()))?;
        check_schema(&mut doc, SCENARIO_SCHEMA)?;
        serde_json::from_value(doc).map_err(|e| ScenarioError::Document(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        with_schema(SCENARIO_SCHEMA, self)
    }

    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let scn = match &self.params {
            ScenarioParams::Case1CornerColumn(p) => build_case1(p)?,
            ScenarioParams::Case2ParkedEgo(p) => build_case2(p)?,
            ScenarioParams::Case3ParkedRows(p) => build_case3(p)?,
            ScenarioParams::LightOnly(p) => build_light_only(p)?,
        };
        Ok(scn.with_light(self.light))
    }
}

fn check_schema(doc: &mut Value, expected: &str) -> Result<(), ScenarioError> {
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| ScenarioError::Document("expected a JSON object".into()))?;
    match obj.remove("schema") {
        Some(Value::String(s)) if s == expected => Ok(()),
        Some(other) => Err(ScenarioError::Document(format!(
            "schema mismatch: expected \"{expected}\", found {other}"
        ))),
        None => Err(ScenarioError::Document("missing schema".into())),
    }
}

/// Pretty JSON with a leading `schema` key and a trailing newline.
fn with_schema(schema: &'static str, body: &impl Serialize) -> String {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        schema: &'static str,
        #[serde(flatten)]
        body: &'a T,
    }
    let mut text = serde_json::to_string_pretty(&Doc { schema, body }).expect("document serializes");
    text.push('\n');
    text
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: ScenarioLabel,
    pub scene: SceneGraph,
    /// The camera path; a single pose when the target moves instead.
    pub ego_path: Vec<EgoPose>,
    pub target_ids: Vec<String>,
    pub mover: Mover,
    /// Path of the moving target when `mover` is `Target`.
    pub target_path: Vec<EgoPose>,
    pub params: BTreeMap<String, Value>,
}

impl Scenario {
    /// A scenario over an arbitrary scene where the camera moves along `ego_path`.
    pub fn custom(scene: SceneGraph, ego_path: Vec<EgoPose>, target_ids: Vec<String>) -> Result<Self, ScenarioError> {
        if target_ids.is_empty() {
            return Err(ScenarioError::NoTargets);
        }
        if ego_path.is_empty() {
            return Err(VisibilityError::EmptyPath.into());
        }
        for id in &target_ids {
            match scene.node(id) {
                None => return Err(VisibilityError::UnknownTarget(id.clone()).into()),
                Some(n) if n.kind != NodeKind::Vehicle => return Err(VisibilityError::NotAVehicle(id.clone()).into()),
                Some(_) => {}
            }
        }
        Ok(Self {
            label: ScenarioLabel::Custom,
            scene,
            ego_path,
            target_ids,
            mover: Mover::Ego,
            target_path: Vec::new(),
            params: BTreeMap::new(),
        })
    }

    pub fn with_light(&self, level: LightLevel) -> Scenario {
        Scenario {
            scene: apply_light_level(&self.scene, level),
            ..self.clone()
        }
    }

    pub fn with_scene(&self, scene: SceneGraph) -> Scenario {
        Scenario { scene, ..self.clone() }
    }
}

pub fn apply_light_level(scene: &SceneGraph, level: LightLevel) -> SceneGraph {
    place_lamps(scene, level)
}

fn slab(id: &str, kind: NodeKind, x: [f64; 2], y: [f64; 2], z: [f64; 2]) -> SceneNode {
    SceneNode::new(
        id,
        kind,
        Box3::axis_aligned(Point3::new(x[0], y[0], z[0]), Point3::new(x[1], y[1], z[1])),
    )
}

fn shell(x: [f64; 2], y: [f64; 2]) -> [SceneNode; 2] {
    [
        slab("floor", NodeKind::FloorTile, x, y, [0.0, FLOOR_THICKNESS]),
        slab(
            "ceiling",
            NodeKind::CeilingPanel,
            x,
            y,
            [CEILING_HEIGHT - CEILING_THICKNESS, CEILING_HEIGHT],
        ),
    ]
}

/// Short dashes every few meters along a lane centerline; they double as lamp sites.
fn lane_marks(prefix: &str, from: (f64, f64), to: (f64, f64)) -> Vec<SceneNode> {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len = dx.hypot(dy);
    let count = (len / MARK_SPACING).floor() as usize + 1;
    (0..count)
        .map(|k| {
            let u = if len == 0.0 { 0.0 } else { k as f64 * MARK_SPACING / len };
            let (x, y) = (from.0 + dx * u, from.1 + dy * u);
            SceneNode::new(
                format!("lane-mark-{prefix}{k}"),
                NodeKind::LaneMarking,
                Box3::new(
                    Point3::new(x, y, FLOOR_THICKNESS + 0.005),
                    Vector3::new(0.5, 0.075, 0.005),
                    dy.atan2(dx),
                ),
            )
        })
        .collect()
}

fn column(id: &str, x: f64, y: f64) -> SceneNode {
    let h = COLUMN_SIZE / 2.0;
    SceneNode::new(
        id,
        NodeKind::Column,
        Box3::new(
            Point3::new(x, y, CEILING_HEIGHT / 2.0),
            Vector3::new(h, h, CEILING_HEIGHT / 2.0),
            0.0,
        ),
    )
    .tag("role", "pillar")
}

fn vehicle(id: &str, size: VehicleSize, x: f64, y: f64, yaw: f64) -> SceneNode {
    SceneNode::new(id, NodeKind::Vehicle, size.box_at(x, y, yaw))
        .tag("vehicle_size", size.as_str())
        .tag("parked", "true")
        .tag("occupied", "true")
}

/// Orders nodes floor, markings, columns, ceiling, vehicles and adds lamps.
fn assemble(mut nodes: Vec<SceneNode>) -> SceneGraph {
    let rank = |k: NodeKind| match k {
        NodeKind::FloorTile | NodeKind::LaneMarking | NodeKind::ParkingMarking => 0,
        NodeKind::Column => 1,
        NodeKind::CeilingPanel => 2,
        NodeKind::Lamp => 3,
        NodeKind::RampMarker => 4,
        NodeKind::Vehicle => 5,
    };
    nodes.sort_by_key(|n| rank(n.kind));
    place_lamps(&SceneGraph::from_nodes(nodes, LightLevel::Bright), LightLevel::Bright)
}

fn require(cond: bool, what: &str) -> Result<(), ScenarioError> {
    if cond {
        Ok(())
    } else {
        Err(ScenarioError::Construction(what.to_owned()))
    }
}

fn finite_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn param_map(value: impl Serialize) -> BTreeMap<String, Value> {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => map.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}

/// L-shaped lane turning right around a corner column, target parked nose-in
/// in a stall off the far side of the second leg.
///
/// The inner lane corner sits at the origin: the first leg runs along `+y`
/// over `x in [-w, 0]`, the second along `+x` over `y in [0, w]`. The camera
/// drives the first leg's centerline. The path starts at the approach pose
/// where the column, standing between camera and target, hides the largest
/// share of the target, and ends at the last 0.5 m step before the corner that
/// still has the target in view.
pub fn build_case1(p: &Case1Params) -> Result<Scenario, ScenarioError> {
    require(finite_positive(p.lane_width), "lane_width must be positive")?;
    require(
        p.column_setback.is_finite() && p.column_setback >= 0.0,
        "column_setback must be non-negative",
    )?;
    require(finite_positive(p.target_distance), "target_distance must be positive")?;
    let w = p.lane_width;
    let c = p.column_setback + COLUMN_SIZE / 2.0;
    let [length, _, _] = p.target_size.dimensions();
    let target_y = w + STALL_DEPTH - length / 2.0;
    let col = column("column-corner", c, -c);
    let target = vehicle("target", p.target_size, p.target_distance, target_y, FRAC_PI_2);
    require(
        !col.bbox.aabb().overlaps(&target.bbox.aabb()),
        "target overlaps the corner column",
    )?;

    let x_max = p.target_distance + length + 10.0;
    let mut nodes: Vec<SceneNode> = shell([-w - 1.0, x_max], [-LEG_LENGTH - 1.0, w + STALL_DEPTH + 0.5]).into();
    nodes.extend(lane_marks("a", (-w / 2.0, -LEG_LENGTH), (-w / 2.0, w / 2.0)));
    nodes.extend(lane_marks("b", (MARK_SPACING - w / 2.0, w / 2.0), (x_max, w / 2.0)));
    nodes.push(col);
    nodes.push(target);
    let scene = assemble(nodes);

    let cfg = CameraConfig::default();
    let engine = VisibilityEngine::new(&scene);
    let target_box = engine.target_box("target")?;
    let x0 = -w / 2.0;
    let pose_at = |y: f64| EgoPose::new(x0, y, FRAC_PI_2);
    let lattice = (LEG_LENGTH / START_LATTICE).round() as usize;
    let mut start: Option<(f64, f64)> = None;
    for k in 0..lattice {
        let y = -LEG_LENGTH + k as f64 * START_LATTICE;
        let pose = pose_at(y);
        let apex = Point3::new(x0, y, cfg.mount_height);
        if !engine.segment_blocked(&apex, &target_box.center, |n| n.kind == NodeKind::Column) {
            continue;
        }
        let s = engine.sample_with_box(&pose, &cfg, "target", &target_box);
        if s.in_frustum && start.is_none_or(|(_, f)| s.visible_fraction < f) {
            start = Some((y, s.visible_fraction));
        }
    }
    let (y0, _) = start.ok_or_else(|| {
        ScenarioError::Construction("no approach pose has the column between camera and target".into())
    })?;
    let mut y1 = y0;
    loop {
        let next = y1 + DEFAULT_STEP;
        if next >= 0.0 || !engine.sample_with_box(&pose_at(next), &cfg, "target", &target_box).in_frustum {
            break;
        }
        y1 = next;
    }

    let mut params = param_map(p);
    params.insert("start_y".into(), Value::from(y0));
    params.insert("end_y".into(), Value::from(y1));
    Ok(Scenario {
        label: ScenarioLabel::Case1CornerColumn,
        scene,
        ego_path: vec![pose_at(y0), pose_at(y1)],
        target_ids: vec!["target".into()],
        mover: Mover::Ego,
        target_path: Vec::new(),
        params,
    })
}

/// Ego parked facing a cross lane with a column at the front corner of its
/// space; the target drives the lane from left to right.
///
/// The camera sits at the origin looking along `+y`; the column stands beside
/// the space at `x = 1.5`, `column_offset` ahead; the lane centerline is
/// `y = lane_distance`. The target path spans the camera's horizontal view of
/// the lane plus one vehicle length on each side.
pub fn build_case2(p: &Case2Params) -> Result<Scenario, ScenarioError> {
    require(finite_positive(p.column_offset), "column_offset must be positive")?;
    require(finite_positive(p.lane_distance), "lane_distance must be positive")?;
    let [length, width, _] = p.target_size.dimensions();
    require(
        p.column_offset + COLUMN_SIZE / 2.0 < p.lane_distance - width / 2.0,
        "target path passes through the column",
    )?;
    let d = p.lane_distance;
    let span = d * (CameraConfig::default().horizontal_fov_deg.to_radians() / 2.0).tan() + length;
    let column_x = STALL_WIDTH / 2.0 + COLUMN_SIZE / 2.0;

    let mut nodes: Vec<SceneNode> = shell([-span - length, span + length], [-STALL_DEPTH, d + 3.0]).into();
    nodes.extend(lane_marks("", (-span, d), (span, d)));
    nodes.push(column("column-side", column_x, p.column_offset));
    nodes.push(vehicle("target", p.target_size, -span, d, 0.0).tag("parked", "false"));
    let scene = assemble(nodes);

    Ok(Scenario {
        label: ScenarioLabel::Case2ParkedEgo,
        scene,
        ego_path: vec![EgoPose::new(0.0, 0.0, FRAC_PI_2)],
        target_ids: vec!["target".into()],
        mover: Mover::Target,
        target_path: vec![EgoPose::new(-span, d, 0.0), EgoPose::new(span, d, 0.0)],
        params: param_map(p),
    })
}

/// Perpendicular parking row on the right of a straight lane, vehicles
/// pulled in nose first. The camera drives the lane centerline `x = 0`
/// along `+y`; each slot's along-lane position is `row_origin` plus its offset.
/// Every parked vehicle is a target, listed in layout order.
pub fn build_case3(p: &Case3Params) -> Result<Scenario, ScenarioError> {
    if p.layout.is_empty() {
        return Err(ScenarioError::NoTargets);
    }
    require(finite_positive(p.path_length), "path_length must be positive")?;
    require(p.row_origin.is_finite(), "row_origin must be finite")?;
    let mut seen = HashSet::new();
    for e in &p.layout {
        if !seen.insert(e.slot) {
            return Err(ScenarioError::DuplicateSlot(e.slot));
        }
    }
    let mut ys: Vec<f64> = Slot::ALL.iter().map(|s| p.offset(*s)).collect();
    ys.sort_by(f64::total_cmp);
    require(
        ys.iter().all(|v| v.is_finite()) && ys.windows(2).all(|w| w[1] - w[0] >= STALL_WIDTH),
        "slot offsets must be at least one stall width apart",
    )?;

    let far_y = p.row_origin + ys[2] + STALL_WIDTH;
    let mut nodes: Vec<SceneNode> = shell([-4.0, ROW_EDGE + STALL_DEPTH + 1.0], [-5.0, far_y + 5.0]).into();
    nodes.extend(lane_marks("", (0.0, 0.0), (0.0, far_y)));
    let mut target_ids = Vec::new();
    for e in &p.layout {
        let [length, _, _] = e.size.dimensions();
        let id = format!("vehicle-{}", e.slot);
        nodes.push(
            vehicle(&id, e.size, ROW_EDGE + length / 2.0, p.row_origin + p.offset(e.slot), 0.0)
                .tag("slot", e.slot.as_str()),
        );
        target_ids.push(id);
    }
    let scene = assemble(nodes);

    let mut params = param_map(p);
    params.remove("layout");
    for e in &p.layout {
        params.insert(format!("slot_{}", e.slot), Value::from(e.size.as_str()));
    }
    Ok(Scenario {
        label: ScenarioLabel::Case3ParkedRows,
        scene,
        ego_path: vec![
            EgoPose::new(0.0, 0.0, FRAC_PI_2),
            EgoPose::new(0.0, p.path_length, FRAC_PI_2),
        ],
        target_ids,
        mover: Mover::Ego,
        target_path: Vec::new(),
        params,
    })
}

/// Unobstructed straight lane with a target parked ahead, the control setup
/// for comparing light levels.
pub fn build_light_only(p: &LightOnlyParams) -> Result<Scenario, ScenarioError> {
    require(finite_positive(p.path_length), "path_length must be positive")?;
    let [length, _, _] = VehicleSize::Medium.dimensions();
    require(
        p.target_distance.is_finite() && p.target_distance - length / 2.0 > p.path_length,
        "target must stay ahead of the path end",
    )?;
    let mut nodes: Vec<SceneNode> = shell([-4.0, 4.0], [-5.0, p.target_distance + length + 5.0]).into();
    nodes.extend(lane_marks("", (0.0, 0.0), (0.0, p.target_distance)));
    nodes.push(vehicle("target", VehicleSize::Medium, 0.0, p.target_distance, FRAC_PI_2));
    Ok(Scenario {
        label: ScenarioLabel::LightOnly,
        scene: assemble(nodes),
        ego_path: vec![
            EgoPose::new(0.0, 0.0, FRAC_PI_2),
            EgoPose::new(0.0, p.path_length, FRAC_PI_2),
        ],
        target_ids: vec!["target".into()],
        mover: Mover::Ego,
        target_path: Vec::new(),
        params: param_map(p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub occlusion: f64,
    pub blackout: f64,
    pub light: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            occlusion: 0.4,
            blackout: 0.4,
            light: 0.2,
        }
    }
}

impl Weights {
    pub fn new(occlusion: f64, blackout: f64, light: f64) -> Result<Self, ScoreError> {
        let w = Self {
            occlusion,
            blackout,
            light,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        let parts = [self.occlusion, self.blackout, self.light];
        if parts.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ScoreError::BadWeights("weights must be finite and non-negative".into()));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ScoreError::BadWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Parses `"w_occ,w_blk,w_lit"`.
    pub fn parse(text: &str) -> Result<Self, ScoreError> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ScoreError::BadWeights(format!("{text:?}: {e}")))?;
        match parts[..] {
            [a, b, c] => Self::new(a, b, c),
            _ => Err(ScoreError::BadWeights(format!("expected three weights, got {}", parts.len()))),
        }
    }
}

pub fn light_term(level: LightLevel) -> f64 {
    match level {
        LightLevel::Bright => 0.0,
        LightLevel::Clear => 0.2,
        LightLevel::Moderate => 0.5,
        LightLevel::Dim => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScore {
    pub total: f64,
    pub occlusion_term: f64,
    pub blackout_term: f64,
    pub light_term: f64,
    pub weights: Weights,
}

/// Length of the longest run of consecutive values below `threshold`.
pub fn longest_run_below(values: impl IntoIterator<Item = f64>, threshold: f64) -> usize {
    let (mut best, mut run) = (0, 0);
    for v in values {
        run = if v < threshold { run + 1 } else { 0 };
        best = best.max(run);
    }
    best
}

/// Occlusion is the mean of `1 - visible_fraction` over all samples of all
/// sweeps; blackout is the longest sub-threshold run of any sweep divided by
/// that sweep's sample count.
pub fn score(sweeps: &[OcclusionSweep], level: LightLevel, weights: Weights) -> Result<DifficultyScore, ScoreError> {
    weights.validate()?;
    if sweeps.is_empty() {
        return Err(ScoreError::NoSweeps);
    }
    if let Some(empty) = sweeps.iter().find(|s| s.samples.is_empty()) {
        return Err(ScoreError::EmptySweep(empty.target_id.clone()));
    }
    let count: usize = sweeps.iter().map(|s| s.samples.len()).sum();
    let occlusion_term = sweeps.iter().flat_map(|s| s.fractions()).map(|f| 1.0 - f).sum::<f64>() / count as f64;
    let blackout_term = sweeps
        .iter()
        .map(|s| longest_run_below(s.fractions(), BLACKOUT_THRESHOLD) as f64 / s.samples.len() as f64)
        .fold(0.0, f64::max);
    let light_term = light_term(level);
    let total =
        100.0 * (weights.occlusion * occlusion_term + weights.blackout * blackout_term + weights.light * light_term);
    Ok(DifficultyScore {
        total,
        occlusion_term,
        blackout_term,
        light_term,
        weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub target_id: String,
    /// Minimum over samples with the target in view; 0 when it never is.
    pub min_visible: f64,
    /// Mean over the same samples as `min_visible`.
    pub mean_visible: f64,
    pub in_frustum_samples: usize,
    /// Arc length of the first fully visible sample.
    pub first_full_visibility_m: Option<f64>,
}

impl TargetStats {
    pub fn from_sweep(sweep: &OcclusionSweep) -> Self {
        let in_view: Vec<f64> = sweep
            .samples
            .iter()
            .filter(|s| s.sample.in_frustum)
            .map(|s| s.sample.visible_fraction)
            .collect();
        Self {
            target_id: sweep.target_id.clone(),
            min_visible: if in_view.is_empty() {
                0.0
            } else {
                in_view.iter().copied().fold(f64::INFINITY, f64::min)
            },
            mean_visible: if in_view.is_empty() {
                0.0
            } else {
                in_view.iter().sum::<f64>() / in_view.len() as f64
            },
            in_frustum_samples: in_view.len(),
            first_full_visibility_m: sweep
                .samples
                .iter()
                .find(|s| s.sample.visible_fraction >= 1.0)
                .map(|s| s.s_m),
        }
    }
}

/// Where the camera-to-target-center segment stops crossing any column, and
/// how the sweep behaves from there on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingCheck {
    /// First sample from which no later segment crosses a column.
    pub clearing_index: Option<usize>,
    pub clearing_s_m: Option<f64>,
    pub start_fraction: f64,
    /// Every sample from the clearing index on reaches the recovery threshold.
    pub recovered: bool,
    /// Fractions never decrease from the clearing index on.
    pub monotone: bool,
}

impl ClearingCheck {
    pub fn holds(&self) -> bool {
        self.clearing_index.is_some() && self.recovered && self.monotone
    }
}

pub fn clearing_check(scene: &SceneGraph, sweep: &OcclusionSweep, cfg: &CameraConfig) -> ClearingCheck {
    let engine = VisibilityEngine::new(scene);
    let z = scene.node(&sweep.target_id).map_or(0.0, |n| n.bbox.center.z);
    let blocked: Vec<bool> = sweep
        .samples
        .iter()
        .map(|s| {
            let apex = Point3::new(s.sample.ego.x, s.sample.ego.y, cfg.mount_height);
            let center = Point3::new(s.sample.target.x, s.sample.target.y, z);
            engine.segment_blocked(&apex, &center, |n| n.kind == NodeKind::Column)
        })
        .collect();
    let clearing_index = match blocked.iter().rposition(|b| *b) {
        None => Some(0),
        Some(last) if last + 1 < blocked.len() => Some(last + 1),
        Some(_) => None,
    };
    let tail: Vec<f64> = clearing_index.map_or_else(Vec::new, |k| sweep.fractions().skip(k).collect());
    ClearingCheck {
        clearing_index,
        clearing_s_m: clearing_index.map(|k| sweep.samples[k].s_m),
        start_fraction: sweep.samples.first().map_or(0.0, |s| s.sample.visible_fraction),
        recovered: clearing_index.is_some() && tail.iter().all(|f| *f >= RECOVERY_THRESHOLD),
        monotone: tail.windows(2).all(|w| w[1] >= w[0]),
    }
}

/// Effect of one parked vehicle on another's sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundPair {
    pub occluder: String,
    pub target: String,
    pub occluder_size: Option<VehicleSize>,
    pub target_size: Option<VehicleSize>,
    /// Minimum in-view fraction with only the target parked.
    pub min_solo: f64,
    /// Minimum in-view fraction with the target and the occluder parked.
    pub min_with: f64,
    /// Samples where the occluder lowers the target's fraction.
    pub affected_samples: usize,
    /// The paired sweep never exceeds the solo sweep.
    pub pointwise_le: bool,
}

fn size_of(scene: &SceneGraph, id: &str) -> Option<VehicleSize> {
    scene
        .node(id)
        .and_then(|n| n.tags.get("vehicle_size"))
        .and_then(|s| VehicleSize::parse(s))
}

/// Sweep settings shared by every target of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub weights: Weights,
    pub step: f64,
    pub resolution: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            step: DEFAULT_STEP,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

fn sweep_target(
    scn: &Scenario,
    scene: &SceneGraph,
    cfg: &CameraConfig,
    opts: &RunOptions,
    id: &str,
) -> Result<OcclusionSweep, VisibilityError> {
    let engine = VisibilityEngine::new(scene).with_resolution(opts.resolution);
    match scn.mover {
        Mover::Ego => engine.sweep(&scn.ego_path, cfg, id, opts.step),
        Mover::Target => engine.sweep_target(&scn.ego_path[0], &scn.target_path, cfg, id, opts.step),
    }
}

/// Every ordered (occluder, target) pair among the scenario's targets.
pub fn compound_pairs(scn: &Scenario, cfg: &CameraConfig, opts: &RunOptions) -> Result<Vec<CompoundPair>, ScenarioError> {
    let mut pairs = Vec::new();
    for target in &scn.target_ids {
        let others: HashSet<&str> = scn.target_ids.iter().filter(|t| *t != target).map(String::as_str).collect();
        let solo_scene = SceneGraph {
            nodes: scn.scene.nodes.iter().filter(|n| !others.contains(n.id.as_str())).cloned().collect(),
            ..scn.scene.clone()
        };
        let solo = sweep_target(scn, &solo_scene, cfg, opts, target)?;
        let solo_stats = TargetStats::from_sweep(&solo);
        for occluder in &scn.target_ids {
            if occluder == target {
                continue;
            }
            let node = scn.scene.node(occluder).expect("target exists").clone();
            let paired = sweep_target(scn, &solo_scene.with_node(node), cfg, opts, target)?;
            let diffs: Vec<(f64, f64)> = solo.fractions().zip(paired.fractions()).collect();
            pairs.push(CompoundPair {
                occluder: occluder.clone(),
                target: target.clone(),
                occluder_size: size_of(&scn.scene, occluder),
                target_size: size_of(&scn.scene, target),
                min_solo: solo_stats.min_visible,
                min_with: TargetStats::from_sweep(&paired).min_visible,
                affected_samples: diffs.iter().filter(|(a, b)| b < a).count(),
                pointwise_le: diffs.iter().all(|(a, b)| b <= a),
            });
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub label: ScenarioLabel,
    pub params: BTreeMap<String, Value>,
    pub light_level: LightLevel,
    pub camera: CameraConfig,
    pub sweeps: Vec<OcclusionSweep>,
    pub stats: Vec<TargetStats>,
    pub score: DifficultyScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clearing: Option<ClearingCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compound_pairs: Vec<CompoundPair>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        with_schema(REPORT_SCHEMA, self)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Document(e.to_string()))?;
        check_schema(&mut doc, REPORT_SCHEMA)?;
        serde_json::from_value(doc).map_err(|e| ScenarioError::Document(e.to_string()))
    }

    pub fn rescore(&self, weights: Weights) -> Result<DifficultyScore, ScoreError> {
        score(&self.sweeps, self.light_level, weights)
    }

    pub fn sweep(&self, target_id: &str) -> Option<&OcclusionSweep> {
        self.sweeps.iter().find(|s| s.target_id == target_id)
    }
}

pub fn run_scenario(scn: &Scenario, cfg: &CameraConfig) -> Result<ScenarioReport, ScenarioError> {
    run_scenario_with(scn, cfg, &RunOptions::default())
}

/// Sweeps every target along the path and reduces the sweeps to statistics
/// and a score. Case 1 reports its clearing check and case 3 its compound pairs.
pub fn run_scenario_with(scn: &Scenario, cfg: &CameraConfig, opts: &RunOptions) -> Result<ScenarioReport, ScenarioError> {
    if scn.target_ids.is_empty() {
        return Err(ScenarioError::NoTargets);
    }
    if scn.ego_path.is_empty() {
        return Err(VisibilityError::EmptyPath.into());
    }
    cfg.validate()?;
    let sweeps = scn
        .target_ids
        .iter()
        .map(|id| sweep_target(scn, &scn.scene, cfg, opts, id))
        .collect::<Result<Vec<_>, _>>()?;
    let score = score(&sweeps, scn.scene.light_level, opts.weights)?;
    let clearing = (scn.label == ScenarioLabel::Case1CornerColumn).then(|| clearing_check(&scn.scene, &sweeps[0], cfg));
    let compound_pairs = if scn.label == ScenarioLabel::Case3ParkedRows {
        compound_pairs(scn, cfg, opts)?
    } else {
        Vec::new()
    };
    Ok(ScenarioReport {
        label: scn.label,
        params: scn.params.clone(),
        light_level: scn.scene.light_level,
        camera: *cfg,
        stats: sweeps.iter().map(TargetStats::from_sweep).collect(),
        sweeps,
        score,
        clearing,
        compound_pairs,
    })
}
