//! Per-square classification: lane adjacency count, lane and parking
//! subtypes, and the quarter-turn rotation that aligns each canonical model
//! with its lane neighbors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    cell_kind, neighbor_set, validate, CellKind, CellRef, Direction, GarageSpec, GridError,
    ValidationReport,
};

pub const CLASSIFIED_SCHEMA: &str = "classified-grid/1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("cell {cell} is {kind:?}, which has no {expected} subtype")]
    WrongKind {
        cell: CellRef,
        kind: CellKind,
        expected: &'static str,
    },
    #[error("spec failed validation with {} violation(s)", .0.violations.len())]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneSubtype {
    Crossroads,
    TJunction,
    Straight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParkSubtype {
    Type1,
    Type2,
    Type3,
    Type4,
}

/// Model used to draw a `Straight` lane square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderVariant {
    /// Open on two opposite edges.
    Axis,
    /// Open on two perpendicular edges.
    Corner,
    /// Open on one edge (or isolated).
    DeadEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subtype {
    Lane(LaneSubtype),
    Park(ParkSubtype),
}

/// Counterclockwise quarter-turns from the canonical orientation, whose
/// primary open edge faces north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rotation(u8);

impl Rotation {
    pub fn new(quarter_turns: usize) -> Self {
        Self((quarter_turns % 4) as u8)
    }

    pub fn quarter_turns(self) -> usize {
        self.0 as usize
    }

    /// Direction the canonical north edge faces after rotation.
    pub fn facing(self) -> Direction {
        Direction::from_index(self.quarter_turns())
    }

    pub fn radians(self) -> f64 {
        self.quarter_turns() as f64 * std::f64::consts::FRAC_PI_2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedCell {
    pub cell: CellRef,
    pub kind: CellKind,
    pub lane_adjacency: u8,
    pub lane_subtype: Option<LaneSubtype>,
    pub park_subtype: Option<ParkSubtype>,
    pub render_variant: Option<RenderVariant>,
    pub rotation: Rotation,
    /// Bit `d` set iff the neighbor in direction `d` is drivable.
    #[serde(skip)]
    pub lane_mask: u8,
}

impl ClassifiedCell {
    /// Open edges of the rotated model as a direction mask. Parking squares
    /// report their single entry edge; obstacles report none.
    pub fn open_edges(&self) -> u8 {
        let canonical: u8 = match (self.lane_subtype, self.render_variant, self.park_subtype) {
            (Some(LaneSubtype::Crossroads), ..) => 0b1111,
            (Some(LaneSubtype::TJunction), ..) => bit(Direction::North) | bit(Direction::East) | bit(Direction::West),
            (Some(LaneSubtype::Straight), Some(RenderVariant::Axis), _) => bit(Direction::North) | bit(Direction::South),
            (Some(LaneSubtype::Straight), Some(RenderVariant::Corner), _) => bit(Direction::North) | bit(Direction::East),
            (Some(LaneSubtype::Straight), ..) => bit(Direction::North),
            (None, _, Some(ParkSubtype::Type4)) => 0,
            (None, _, Some(_)) => bit(Direction::North),
            _ => 0,
        };
        rotate_mask(canonical, self.rotation.quarter_turns())
    }

    /// Smallest number of quarter-turns that maps this square's model onto
    /// itself. Rotations are only meaningful modulo this period.
    pub fn rotation_period(&self) -> usize {
        if self.kind == CellKind::Obstacle {
            1
        } else {
            mask_period(self.lane_mask)
        }
    }
}

/// Classified squares in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedGrid {
    spec: GarageSpec,
    cells: Vec<ClassifiedCell>,
}

impl ClassifiedGrid {
    pub fn spec(&self) -> &GarageSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[ClassifiedCell] {
        &self.cells
    }

    pub fn get(&self, cell: CellRef) -> Option<&ClassifiedCell> {
        (cell.i < self.spec.m() && cell.j < self.spec.n())
            .then(|| &self.cells[cell.i * self.spec.n() + cell.j])
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct CellDoc<'a> {
            i: usize,
            j: usize,
            kind: CellKind,
            code: i64,
            lane_adjacency: u8,
            subtype: Option<&'a str>,
            render_variant: Option<RenderVariant>,
            quarter_turns: usize,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            schema: &'static str,
            m: usize,
            n: usize,
            cells: Vec<CellDoc<'a>>,
        }
        let cells = self
            .cells
            .iter()
            .map(|c| CellDoc {
                i: c.cell.i,
                j: c.cell.j,
                kind: c.kind,
                code: c.kind.code(),
                lane_adjacency: c.lane_adjacency,
                subtype: c
                    .lane_subtype
                    .map(lane_subtype_name)
                    .or(c.park_subtype.map(park_subtype_name)),
                render_variant: c.render_variant,
                quarter_turns: c.rotation.quarter_turns(),
            })
            .collect();
        let doc = Doc {
            schema: CLASSIFIED_SCHEMA,
            m: self.spec.m(),
            n: self.spec.n(),
            cells,
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("classified grid serializes");
        text.push('\n');
        text
    }
}

pub fn lane_subtype_name(s: LaneSubtype) -> &'static str {
    match s {
        LaneSubtype::Crossroads => "crossroads",
        LaneSubtype::TJunction => "t_junction",
        LaneSubtype::Straight => "straight",
    }
}

pub fn park_subtype_name(s: ParkSubtype) -> &'static str {
    match s {
        ParkSubtype::Type1 => "type1",
        ParkSubtype::Type2 => "type2",
        ParkSubtype::Type3 => "type3",
        ParkSubtype::Type4 => "type4",
    }
}

fn bit(d: Direction) -> u8 {
    1 << d.index()
}

/// Rotates a direction mask by `k` counterclockwise quarter-turns.
pub fn rotate_mask(mask: u8, k: usize) -> u8 {
    let k = (k % 4) as u32;
    ((mask << k) | (mask >> ((4 - k) % 4))) & 0b1111
}

fn mask_period(mask: u8) -> usize {
    (1..=4).find(|&k| rotate_mask(mask, k) == mask).unwrap_or(4)
}

/// Lane adjacency count: how many of the four neighbors are lane squares.
pub fn count_lane_neighbors(spec: &GarageSpec, cell: CellRef) -> Result<u8, ClassifyError> {
    Ok(neighbor_set(spec, cell)?.drivable_mask().count_ones() as u8)
}

pub fn classify_lane(spec: &GarageSpec, cell: CellRef) -> Result<LaneSubtype, ClassifyError> {
    let kind = cell_kind(spec, cell)?;
    if !kind.is_drivable() {
        return Err(ClassifyError::WrongKind {
            cell,
            kind,
            expected: "lane",
        });
    }
    Ok(lane_subtype_for(count_lane_neighbors(spec, cell)?))
}

fn lane_subtype_for(count: u8) -> LaneSubtype {
    match count {
        4 => LaneSubtype::Crossroads,
        3 => LaneSubtype::TJunction,
        _ => LaneSubtype::Straight,
    }
}

pub fn classify_parking(spec: &GarageSpec, cell: CellRef) -> Result<ParkSubtype, ClassifyError> {
    let kind = cell_kind(spec, cell)?;
    if kind != CellKind::ParkingOrFree {
        return Err(ClassifyError::WrongKind {
            cell,
            kind,
            expected: "parking",
        });
    }
    Ok(park_subtype_for(neighbor_set(spec, cell)?.drivable_mask()))
}

fn park_subtype_for(mask: u8) -> ParkSubtype {
    match mask.count_ones() {
        3 | 4 => ParkSubtype::Type1,
        // opposite sides: N+S or E+W
        2 if mask == 0b0101 || mask == 0b1010 => ParkSubtype::Type1,
        2 => ParkSubtype::Type2,
        1 => ParkSubtype::Type3,
        _ => ParkSubtype::Type4,
    }
}

fn render_variant_for(mask: u8) -> RenderVariant {
    match mask {
        0b0101 | 0b1010 => RenderVariant::Axis,
        m if m.count_ones() == 2 => RenderVariant::Corner,
        _ => RenderVariant::DeadEnd,
    }
}

/// Rotation as a function of the lane-neighbor pattern alone, so that
/// rotating the plan adds one quarter-turn (modulo the pattern's period).
///
/// | lane neighbors        | quarter-turns                    |
/// |-----------------------|----------------------------------|
/// | none or all four      | 0                                |
/// | one, toward `d`       | `d`                              |
/// | opposite pair         | 0 for N/S, 1 for E/W             |
/// | perpendicular `d,d+1` | `d` (N/E 0, E/S 1, S/W 2, W/N 3) |
/// | three, missing `d`    | `d + 2` (faces the middle arm)   |
fn rotation_for_mask(mask: u8) -> Rotation {
    let has = |d: usize| mask & (1 << (d % 4)) != 0;
    let turns = match mask.count_ones() {
        1 => (0..4).find(|&d| has(d)).unwrap_or(0),
        2 if mask == 0b0101 => 0,
        2 if mask == 0b1010 => 1,
        2 => (0..4).find(|&d| has(d) && has(d + 1)).unwrap_or(0),
        3 => (0..4).find(|&d| !has(d)).map_or(0, |missing| missing + 2),
        _ => 0,
    };
    Rotation::new(turns)
}

pub fn assign_rotation(
    spec: &GarageSpec,
    cell: CellRef,
    subtype: Subtype,
) -> Result<Rotation, ClassifyError> {
    let kind = cell_kind(spec, cell)?;
    let mask = neighbor_set(spec, cell)?.drivable_mask();
    let consistent = match subtype {
        Subtype::Lane(s) => kind.is_drivable() && s == lane_subtype_for(mask.count_ones() as u8),
        Subtype::Park(s) => kind == CellKind::ParkingOrFree && s == park_subtype_for(mask),
    };
    if !consistent {
        return Err(ClassifyError::WrongKind {
            cell,
            kind,
            expected: match subtype {
                Subtype::Lane(_) => "matching lane",
                Subtype::Park(_) => "matching parking",
            },
        });
    }
    if subtype == Subtype::Park(ParkSubtype::Type4) {
        return Ok(Rotation::default());
    }
    Ok(rotation_for_mask(mask))
}

fn classify_cell(spec: &GarageSpec, cell: CellRef) -> Result<ClassifiedCell, ClassifyError> {
    let kind = cell_kind(spec, cell)?;
    let mask = neighbor_set(spec, cell)?.drivable_mask();
    let count = mask.count_ones() as u8;
    let (lane_subtype, park_subtype, render_variant, rotation) = match kind {
        CellKind::Obstacle => (None, None, None, Rotation::default()),
        CellKind::ParkingOrFree => (None, Some(park_subtype_for(mask)), None, rotation_for_mask(mask)),
        _ => {
            let subtype = lane_subtype_for(count);
            let variant = (subtype == LaneSubtype::Straight).then(|| render_variant_for(mask));
            (Some(subtype), None, variant, rotation_for_mask(mask))
        }
    };
    Ok(ClassifiedCell {
        cell,
        kind,
        lane_adjacency: count,
        lane_subtype,
        park_subtype,
        render_variant,
        rotation,
        lane_mask: mask,
    })
}

/// Classifies and rotates every square of a valid plan.
pub fn classify_all(spec: &GarageSpec) -> Result<ClassifiedGrid, ClassifyError> {
    let report = validate(spec);
    if !report.ok {
        return Err(ClassifyError::Invalid(report));
    }
    let cells = spec
        .cells()
        .map(|cell| classify_cell(spec, cell))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ClassifiedGrid {
        spec: spec.clone(),
        cells,
    })
}
