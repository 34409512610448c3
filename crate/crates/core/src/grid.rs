//! Matrix encoding of a garage plan.
//!
//! A plan is three arrays: the structure matrix (one integer code per grid
//! square), the per-row extents and the per-column extents. Row `i` spans
//! `row_widths[i]` meters along world `+y`; column `j` spans `col_widths[j]`
//! meters along world `+x`.
//!
//! Directions are named as the matrix reads when printed: north is row `i - 1`
//! (world `-y`), east is column `j + 1` (world `+x`). Seen from above with
//! `+z` up, the sequence N, E, S, W is a counterclockwise walk.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEC_SCHEMA: &str = "garage-spec/1";

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema mismatch: expected \"{SPEC_SCHEMA}\", found \"{0}\"")]
    Schema(String),
    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("structure matrix is empty")]
    Empty,
    #[error("{file} line {line}: {message}")]
    Csv {
        file: String,
        line: usize,
        message: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("cell ({i}, {j}) out of bounds for {m}x{n} grid")]
    OutOfBounds { i: usize, j: usize, m: usize, n: usize },
    #[error("cell ({i}, {j}) holds invalid code {code}")]
    InvalidCode { i: usize, j: usize, code: i64 },
}

/// Kind of a grid square, bijective with the structure-matrix codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Obstacle,
    ParkingOrFree,
    Lane,
    Entrance,
    Exit,
}

impl CellKind {
    pub const ALL: [CellKind; 5] = [
        CellKind::Obstacle,
        CellKind::ParkingOrFree,
        CellKind::Lane,
        CellKind::Entrance,
        CellKind::Exit,
    ];

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(CellKind::Obstacle),
            0 => Some(CellKind::ParkingOrFree),
            1 => Some(CellKind::Lane),
            2 => Some(CellKind::Entrance),
            3 => Some(CellKind::Exit),
            _ => None,
        }
    }

    pub fn code(self) -> i64 {
        match self {
            CellKind::Obstacle => -1,
            CellKind::ParkingOrFree => 0,
            CellKind::Lane => 1,
            CellKind::Entrance => 2,
            CellKind::Exit => 3,
        }
    }

    /// Lanes and ramps carry traffic and count as lane squares for adjacency.
    pub fn is_drivable(self) -> bool {
        matches!(self, CellKind::Lane | CellKind::Entrance | CellKind::Exit)
    }
}

/// Zero-based grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub i: usize,
    pub j: usize,
}

impl CellRef {
    pub const fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    /// Counterclockwise order; the index of a direction is its quarter-turn count from north.
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Self {
        Self::ALL[index % 4]
    }

    pub fn opposite(self) -> Self {
        self.turned(2)
    }

    pub fn turned(self, quarter_turns: usize) -> Self {
        Self::from_index(self.index() + quarter_turns)
    }

    /// `(di, dj)` step to the neighbor in this direction.
    pub fn offset(self) -> (isize, isize) {
        match self {
            Direction::North => (-1, 0),
            Direction::East => (0, 1),
            Direction::South => (1, 0),
            Direction::West => (0, -1),
        }
    }

    /// World heading in radians, counterclockwise from `+x`.
    pub fn world_angle(self) -> f64 {
        (self.index() as f64 - 1.0) * std::f64::consts::FRAC_PI_2
    }
}

/// Kinds of the four axis-adjacent squares; `None` when off-grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NeighborSet {
    pub north: Option<CellKind>,
    pub east: Option<CellKind>,
    pub south: Option<CellKind>,
    pub west: Option<CellKind>,
}

impl NeighborSet {
    pub fn get(&self, dir: Direction) -> Option<CellKind> {
        match dir {
            Direction::North => self.north,
            Direction::East => self.east,
            Direction::South => self.south,
            Direction::West => self.west,
        }
    }

    /// Bit `d` set iff the neighbor in direction `d` is drivable.
    pub fn drivable_mask(&self) -> u8 {
        Direction::ALL
            .iter()
            .filter(|d| self.get(**d).is_some_and(CellKind::is_drivable))
            .fold(0, |mask, d| mask | (1 << d.index()))
    }
}

/// The three input arrays. Shape consistency between them is checked by
/// [`validate`], not at construction, so that malformed plans can be reported.
#[derive(Debug, Clone, PartialEq)]
pub struct GarageSpec {
    structure: Vec<Vec<i64>>,
    row_widths: Vec<f64>,
    col_widths: Vec<f64>,
}

impl GarageSpec {
    /// Fails only when the structure matrix is empty or ragged.
    pub fn new(
        structure: Vec<Vec<i64>>,
        row_widths: Vec<f64>,
        col_widths: Vec<f64>,
    ) -> Result<Self, ParseError> {
        let expected = structure.first().map(Vec::len).ok_or(ParseError::Empty)?;
        if expected == 0 {
            return Err(ParseError::Empty);
        }
        if let Some((row, r)) = structure.iter().enumerate().find(|(_, r)| r.len() != expected) {
            return Err(ParseError::RaggedRow {
                row,
                expected,
                found: r.len(),
            });
        }
        Ok(Self {
            structure,
            row_widths,
            col_widths,
        })
    }

    pub fn m(&self) -> usize {
        self.structure.len()
    }

    pub fn n(&self) -> usize {
        self.structure[0].len()
    }

    pub fn structure(&self) -> &[Vec<i64>] {
        &self.structure
    }

    pub fn row_widths(&self) -> &[f64] {
        &self.row_widths
    }

    pub fn col_widths(&self) -> &[f64] {
        &self.col_widths
    }

    pub fn code(&self, cell: CellRef) -> Result<i64, GridError> {
        self.check_bounds(cell)?;
        Ok(self.structure[cell.i][cell.j])
    }

    pub fn check_bounds(&self, cell: CellRef) -> Result<(), GridError> {
        if cell.i < self.m() && cell.j < self.n() {
            Ok(())
        } else {
            Err(GridError::OutOfBounds {
                i: cell.i,
                j: cell.j,
                m: self.m(),
                n: self.n(),
            })
        }
    }

    /// Neighbor coordinate in `dir`, or `None` when it falls off the grid.
    pub fn step(&self, cell: CellRef, dir: Direction) -> Option<CellRef> {
        let (di, dj) = dir.offset();
        let i = cell.i.checked_add_signed(di)?;
        let j = cell.j.checked_add_signed(dj)?;
        (i < self.m() && j < self.n()).then_some(CellRef { i, j })
    }

    pub fn cells(&self) -> impl Iterator<Item = CellRef> + '_ {
        let n = self.n();
        (0..self.m()).flat_map(move |i| (0..n).map(move |j| CellRef { i, j }))
    }

    /// Rotates the plan a quarter-turn counterclockwise in the world frame.
    /// Cell `(i, j)` moves to `(j, m - 1 - i)`; the new row extents are the old
    /// column extents and the new column extents are the old row extents reversed.
    pub fn rotated_quarter(&self) -> GarageSpec {
        let (m, n) = (self.m(), self.n());
        let structure = (0..n)
            .map(|ni| (0..m).map(|nj| self.structure[m - 1 - nj][ni]).collect())
            .collect();
        GarageSpec {
            structure,
            row_widths: self.col_widths.clone(),
            col_widths: self.row_widths.iter().rev().copied().collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        let doc: SpecDocument = serde_json::from_str(text)?;
        if doc.schema != SPEC_SCHEMA {
            return Err(ParseError::Schema(doc.schema));
        }
        Self::new(doc.structure, doc.row_widths_m, doc.col_widths_m)
    }

    /// Canonical document text. One structure row per line.
    pub fn to_json(&self) -> String {
        let num = |v: &f64| serde_json::to_string(v).unwrap_or_else(|_| "null".into());
        let mut out = String::new();
        out.push_str("{\n");
        out.push_str(&format!("  \"schema\": \"{SPEC_SCHEMA}\",\n"));
        out.push_str("  \"structure\": [\n");
        for (i, row) in self.structure.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(i64::to_string).collect();
            let sep = if i + 1 < self.structure.len() { "," } else { "" };
            out.push_str(&format!("    [{}]{sep}\n", cells.join(", ")));
        }
        out.push_str("  ],\n");
        let rows: Vec<String> = self.row_widths.iter().map(num).collect();
        let cols: Vec<String> = self.col_widths.iter().map(num).collect();
        out.push_str(&format!("  \"row_widths_m\": [{}],\n", rows.join(", ")));
        out.push_str(&format!("  \"col_widths_m\": [{}]\n", cols.join(", ")));
        out.push_str("}\n");
        out
    }

    /// Loads `structure.csv`, `rows.csv` and `cols.csv` from a directory.
    /// The width files may hold their values on one line or one per line.
    pub fn from_csv_dir(dir: &Path) -> Result<Self, ParseError> {
        let structure = read_csv_records("structure.csv", &dir.join("structure.csv"))?
            .into_iter()
            .map(|(line, rec)| {
                rec.iter()
                    .map(|field| {
                        field.parse::<i64>().map_err(|_| ParseError::Csv {
                            file: "structure.csv".into(),
                            line,
                            message: format!("non-integer cell \"{field}\""),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rows = read_width_file("rows.csv", &dir.join("rows.csv"))?;
        let cols = read_width_file("cols.csv", &dir.join("cols.csv"))?;
        Self::new(structure, rows, cols)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDocument {
    schema: String,
    structure: Vec<Vec<i64>>,
    row_widths_m: Vec<f64>,
    col_widths_m: Vec<f64>,
}

fn read_csv_records(name: &str, path: &Path) -> Result<Vec<(usize, Vec<String>)>, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(name, e))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(name, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<String> = record
            .iter()
            .filter(|f| !f.is_empty())
            .map(str::to_owned)
            .collect();
        if !fields.is_empty() {
            out.push((line, fields));
        }
    }
    Ok(out)
}

fn read_width_file(name: &str, path: &Path) -> Result<Vec<f64>, ParseError> {
    let mut widths = Vec::new();
    for (line, rec) in read_csv_records(name, path)? {
        for field in rec {
            let value = field.parse::<f64>().map_err(|_| ParseError::Csv {
                file: name.into(),
                line,
                message: format!("non-numeric width \"{field}\""),
            })?;
            widths.push(value);
        }
    }
    Ok(widths)
}

fn csv_error(name: &str, e: csv::Error) -> ParseError {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return ParseError::Io(io);
        }
        unreachable!()
    }
    ParseError::Csv {
        file: name.into(),
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

pub fn cell_kind(spec: &GarageSpec, cell: CellRef) -> Result<CellKind, GridError> {
    let code = spec.code(cell)?;
    CellKind::from_code(code).ok_or(GridError::InvalidCode {
        i: cell.i,
        j: cell.j,
        code,
    })
}

pub fn neighbor_set(spec: &GarageSpec, cell: CellRef) -> Result<NeighborSet, GridError> {
    spec.check_bounds(cell)?;
    let kind_at = |dir| {
        spec.step(cell, dir)
            .map(|c| cell_kind(spec, c))
            .transpose()
    };
    Ok(NeighborSet {
        north: kind_at(Direction::North)?,
        east: kind_at(Direction::East)?,
        south: kind_at(Direction::South)?,
        west: kind_at(Direction::West)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleId {
    /// Row-width vector length must equal the number of structure rows.
    RowWidthsLen,
    /// Column-width vector length must equal the number of structure columns.
    ColWidthsLen,
    /// Every code lies in `-1..=3`.
    CellCodeRange,
    WidthPositive,
    /// At least one lane, entrance or exit square.
    NoLanes,
}

impl RuleId {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::RowWidthsLen => "row-widths-len",
            RuleId::ColWidthsLen => "col-widths-len",
            RuleId::CellCodeRange => "cell-code-range",
            RuleId::WidthPositive => "width-positive",
            RuleId::NoLanes => "no-lanes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "kebab-case")]
pub enum Location {
    RowWidths,
    ColWidths,
    RowWidth { index: usize },
    ColWidth { index: usize },
    Cell { i: usize, j: usize },
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: RuleId,
    pub location: Location,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return writeln!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{}: {}", v.rule.as_str(), v.message)?;
        }
        Ok(())
    }
}

pub fn validate(spec: &GarageSpec) -> ValidationReport {
    let (m, n) = (spec.m(), spec.n());
    let mut violations = Vec::new();
    if spec.row_widths.len() != m {
        violations.push(Violation {
            rule: RuleId::RowWidthsLen,
            location: Location::RowWidths,
            message: format!("row vector length {} != m={m}", spec.row_widths.len()),
        });
    }
    if spec.col_widths.len() != n {
        violations.push(Violation {
            rule: RuleId::ColWidthsLen,
            location: Location::ColWidths,
            message: format!("column vector length {} != n={n}", spec.col_widths.len()),
        });
    }
    for (index, w) in spec.row_widths.iter().enumerate() {
        if !(w.is_finite() && *w > 0.0) {
            violations.push(Violation {
                rule: RuleId::WidthPositive,
                location: Location::RowWidth { index },
                message: format!("row width {index} is {w}, must be positive and finite"),
            });
        }
    }
    for (index, w) in spec.col_widths.iter().enumerate() {
        if !(w.is_finite() && *w > 0.0) {
            violations.push(Violation {
                rule: RuleId::WidthPositive,
                location: Location::ColWidth { index },
                message: format!("column width {index} is {w}, must be positive and finite"),
            });
        }
    }
    let mut lanes = 0usize;
    for cell in spec.cells() {
        let code = spec.structure[cell.i][cell.j];
        match CellKind::from_code(code) {
            Some(kind) if kind.is_drivable() => lanes += 1,
            Some(_) => {}
            None => violations.push(Violation {
                rule: RuleId::CellCodeRange,
                location: Location::Cell { i: cell.i, j: cell.j },
                message: format!("code {code} at {cell} outside [-1, 3]"),
            }),
        }
    }
    if lanes == 0 {
        violations.push(Violation {
            rule: RuleId::NoLanes,
            location: Location::Grid,
            message: "garage has no lane, entrance or exit squares".into(),
        });
    }
    ValidationReport {
        ok: violations.is_empty(),
        violations,
    }
}
