#![allow(dead_code)]

use garage_core::classify::{classify_all, rotate_mask, ClassifiedGrid, LaneSubtype, ParkSubtype};
use garage_core::geom::Box3;
use garage_core::grid::{CellRef, GarageSpec};
use garage_core::scene::{layout_cells, LightLevel, NodeKind, SceneGraph, SceneNode};
use garage_core::visibility::{CameraConfig, EgoPose};
use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Codes counted as lane squares by the adjacency count.
pub const LANE_CODES: [i64; 3] = [1, 2, 3];

pub fn random_code(rng: &mut ChaCha8Rng) -> i64 {
    match rng.random_range(0..10) {
        0 => -1,
        1..=4 => 0,
        5..=8 => 1,
        _ => rng.random_range(2..=3),
    }
}

/// A valid spec of at most `max_dim` rows and columns.
pub fn random_spec(rng: &mut ChaCha8Rng, max_dim: usize) -> GarageSpec {
    let m = rng.random_range(1..=max_dim);
    let n = rng.random_range(1..=max_dim);
    let mut structure: Vec<Vec<i64>> = (0..m).map(|_| (0..n).map(|_| random_code(rng)).collect()).collect();
    if !structure.iter().flatten().any(|c| LANE_CODES.contains(c)) {
        let (i, j) = (rng.random_range(0..m), rng.random_range(0..n));
        structure[i][j] = 1;
    }
    let width = |rng: &mut ChaCha8Rng| (rng.random_range(2.0..7.0_f64) * 4.0).round() / 4.0;
    let rows = (0..m).map(|_| width(rng)).collect();
    let cols = (0..n).map(|_| width(rng)).collect();
    GarageSpec::new(structure, rows, cols).expect("rectangular")
}

/// Lane subtype by lane-neighbor count.
pub fn oracle_lane(cnt: u32) -> LaneSubtype {
    const TABLE: [LaneSubtype; 5] = [
        LaneSubtype::Straight,
        LaneSubtype::Straight,
        LaneSubtype::Straight,
        LaneSubtype::TJunction,
        LaneSubtype::Crossroads,
    ];
    TABLE[cnt as usize]
}

/// Parking subtype by lane-neighbor mask, bits N=1, E=2, S=4, W=8.
pub fn oracle_park(mask: u8) -> ParkSubtype {
    use ParkSubtype::*;
    const TABLE: [ParkSubtype; 16] = [
        Type4, // none
        Type3, // N
        Type3, // E
        Type2, // N E
        Type3, // S
        Type1, // N S
        Type2, // E S
        Type1, // N E S
        Type3, // W
        Type2, // N W
        Type1, // E W
        Type1, // N E W
        Type2, // S W
        Type1, // N S W
        Type1, // E S W
        Type1, // all
    ];
    TABLE[mask as usize]
}

/// Axis-aligned box given by corners.
#[derive(Debug, Clone, Copy)]
pub struct Aabb3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb3 {
    pub fn to_box(self) -> Box3 {
        Box3::axis_aligned(Point3::from(self.min), Point3::from(self.max))
    }

    /// Whether the open segment `a + t (b - a)`, `0 < t < 1`, meets the box.
    fn cuts(&self, a: [f64; 3], b: [f64; 3]) -> bool {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for k in 0..3 {
            let d = b[k] - a[k];
            if d.abs() < 1e-15 {
                if a[k] < self.min[k] || a[k] > self.max[k] {
                    return false;
                }
                continue;
            }
            let t0 = (self.min[k] - a[k]) / d;
            let t1 = (self.max[k] - a[k]) / d;
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
            if lo > hi {
                return false;
            }
        }
        lo < 1.0 - 1e-9
    }
}

/// Brute-force visible fraction of an axis-aligned target: sample every face
/// that faces the camera on an `s x s` grid, keep points inside the view
/// cone, and count those whose sight line meets no occluder.
pub fn oracle_fraction(ego: &EgoPose, cfg: &CameraConfig, target: &Aabb3, occluders: &[Aabb3], s: usize) -> f64 {
    let apex = [ego.x, ego.y, cfg.mount_height];
    let fwd = [ego.heading.cos(), ego.heading.sin(), 0.0];
    let right = [ego.heading.sin(), -ego.heading.cos(), 0.0];
    let tan_h = (cfg.horizontal_fov_deg.to_radians() / 2.0).tan();
    let tan_v = tan_h / cfg.aspect;
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (mut eligible, mut visible) = (0usize, 0usize);
    for axis in 0..3 {
        for (side, plane) in [(-1.0, target.min[axis]), (1.0, target.max[axis])] {
            if (apex[axis] - plane) * side <= 0.0 {
                continue;
            }
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for a in 0..s {
                for b in 0..s {
                    let mut p = [0.0; 3];
                    p[axis] = plane;
                    p[u] = target.min[u] + (target.max[u] - target.min[u]) * (a as f64 + 0.5) / s as f64;
                    p[v] = target.min[v] + (target.max[v] - target.min[v]) * (b as f64 + 0.5) / s as f64;
                    let d = [p[0] - apex[0], p[1] - apex[1], p[2] - apex[2]];
                    let depth = dot(d, fwd);
                    if !(depth > 0.0 && dot(d, right).abs() <= depth * tan_h && d[2].abs() <= depth * tan_v) {
                        continue;
                    }
                    eligible += 1;
                    if !occluders.iter().any(|o| o.cuts(apex, p)) {
                        visible += 1;
                    }
                }
            }
        }
    }
    if eligible == 0 {
        0.0
    } else {
        visible as f64 / eligible as f64
    }
}

/// Camera at the origin looking along `+y` at a target whose only visible face
/// is the plane `y = depth`, with one occluder casting a strip-shaped shadow.
#[derive(Debug, Clone)]
pub struct StripFixture {
    pub name: String,
    pub target: Aabb3,
    pub occluder: Aabb3,
    pub occluder_kind: NodeKind,
    pub analytic: f64,
}

pub const FIXTURE_EGO: EgoPose = EgoPose {
    x: 0.0,
    y: 0.0,
    heading: std::f64::consts::FRAC_PI_2,
};

impl StripFixture {
    pub fn scene(&self) -> SceneGraph {
        SceneGraph::from_nodes(
            vec![
                SceneNode::new("occluder", self.occluder_kind, self.occluder.to_box()),
                SceneNode::new("target", NodeKind::Vehicle, self.target.to_box()),
            ],
            LightLevel::Bright,
        )
    }

    pub fn oracle(&self, s: usize) -> f64 {
        oracle_fraction(&FIXTURE_EGO, &CameraConfig::default(), &self.target, &[self.occluder], s)
    }
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// The target front face spans `[-w, w]` in x and `[z0, z1]` in z at depth `y0`.
fn target_box(w: f64, y0: f64, z0: f64, z1: f64) -> Aabb3 {
    Aabb3 {
        min: [-w, y0, z0],
        max: [w, y0 + 4.0, z1],
    }
}

/// A full-height column over `[a, b] x [c, d]`: its shadow on the face plane is
/// the x-range swept by its near and far edges.
pub fn column_fixture(name: &str, w: f64, y0: f64, a: f64, b: f64, c: f64, d: f64) -> StripFixture {
    let cam_z = CameraConfig::default().mount_height;
    let (z0, z1) = (cam_z - 0.9, cam_z + 0.9);
    let proj = |x: f64, y: f64| x * y0 / y;
    let lo = proj(a, c).min(proj(a, d));
    let hi = proj(b, c).max(proj(b, d));
    StripFixture {
        name: name.to_owned(),
        target: target_box(w, y0, z0, z1),
        occluder: Aabb3 {
            min: [a, c, 0.0],
            max: [b, d, 3.2],
        },
        occluder_kind: NodeKind::Column,
        analytic: 1.0 - overlap((lo, hi), (-w, w)) / (2.0 * w),
    }
}

/// A wide overhead beam with underside `zb` over depths `[c, d]`: its shadow is
/// everything above the projection of the far underside edge.
pub fn beam_fixture(name: &str, w: f64, y0: f64, zb: f64, c: f64, d: f64) -> StripFixture {
    let cam_z = CameraConfig::default().mount_height;
    let (z0, z1) = (cam_z - 0.9, cam_z + 0.9);
    let lo = cam_z + (zb - cam_z) * y0 / d;
    StripFixture {
        name: name.to_owned(),
        target: target_box(w, y0, z0, z1),
        occluder: Aabb3 {
            min: [-30.0, c, zb],
            max: [30.0, d, 3.2],
        },
        occluder_kind: NodeKind::CeilingPanel,
        analytic: 1.0 - overlap((lo, f64::INFINITY), (z0, z1)) / (z1 - z0),
    }
}

/// The column's inner edge sits on the target's center line and its shadow
/// covers the whole right half of the face.
pub fn half_column_fixture() -> StripFixture {
    column_fixture("half-column", 1.0, 10.0, 0.0, 0.6, 4.0, 4.6)
}

/// Fifty single-occluder fixtures; the first is the half-column case.
pub fn strip_fixtures() -> Vec<StripFixture> {
    let mut r = rng(0x5eed_0005);
    let mut out = vec![half_column_fixture()];
    while out.len() < 50 {
        let k = out.len();
        let y0: f64 = r.random_range(6.0..14.0);
        let w = r.random_range(0.6..2.0);
        let c: f64 = r.random_range(2.0..y0 - 1.5);
        let d = (c + r.random_range(0.2..1.0)).min(y0 - 0.5);
        if k % 3 == 2 {
            let zb = r.random_range(1.7..2.6);
            out.push(beam_fixture(&format!("beam-{k}"), w, y0, zb, c, d));
        } else {
            let centre = r.random_range(-1.5 * w..1.5 * w) * c / y0;
            let half = r.random_range(0.1..0.9);
            out.push(column_fixture(&format!("column-{k}"), w, y0, centre - half, centre + half, c, d));
        }
    }
    out
}

/// One square with a chosen kind and chosen neighbors; `None` marks an edge of the grid.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub spec: GarageSpec,
    pub cell: CellRef,
    pub center: i64,
    /// North, east, south, west.
    pub neighbors: [Option<i64>; 4],
}

impl Neighborhood {
    pub fn lane_mask(&self) -> u8 {
        self.neighbors
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_some_and(|c| LANE_CODES.contains(&c)))
            .fold(0, |m, (d, _)| m | (1 << d))
    }
}

/// Every center code crossed with every neighbor state (off-grid or any code)
/// in each of the four directions.
pub fn all_neighborhoods() -> Vec<Neighborhood> {
    let states: Vec<Option<i64>> = std::iter::once(None).chain((-1..=3).map(Some)).collect();
    let mut out = Vec::new();
    for center in -1..=3 {
        for &north in &states {
            for &east in &states {
                for &south in &states {
                    for &west in &states {
                        let rows = 1 + north.is_some() as usize + south.is_some() as usize;
                        let cols = 1 + west.is_some() as usize + east.is_some() as usize;
                        let (ci, cj) = (north.is_some() as usize, west.is_some() as usize);
                        let mut s = vec![vec![0_i64; cols]; rows];
                        s[ci][cj] = center;
                        if let Some(c) = north {
                            s[ci - 1][cj] = c;
                        }
                        if let Some(c) = south {
                            s[ci + 1][cj] = c;
                        }
                        if let Some(c) = west {
                            s[ci][cj - 1] = c;
                        }
                        if let Some(c) = east {
                            s[ci][cj + 1] = c;
                        }
                        out.push(Neighborhood {
                            spec: GarageSpec::new(s, vec![5.0; rows], vec![5.0; cols]).expect("rectangular"),
                            cell: CellRef::new(ci, cj),
                            center,
                            neighbors: [north, east, south, west],
                        });
                    }
                }
            }
        }
    }
    out
}

/// Compares the classifier against the lookup tables for one neighborhood.
pub fn check_neighborhood(nb: &Neighborhood) -> Result<(), String> {
    use garage_core::classify::{classify_lane, classify_parking, count_lane_neighbors};
    let mask = nb.lane_mask();
    let cnt = count_lane_neighbors(&nb.spec, nb.cell).map_err(|e| e.to_string())?;
    if u32::from(cnt) != mask.count_ones() {
        return Err(format!("{nb:?}: count {cnt}"));
    }
    let lane = classify_lane(&nb.spec, nb.cell);
    let park = classify_parking(&nb.spec, nb.cell);
    match nb.center {
        c if LANE_CODES.contains(&c) => {
            if lane.as_ref().ok() != Some(&oracle_lane(mask.count_ones())) || park.is_ok() {
                return Err(format!("{nb:?}: lane {lane:?} park {park:?}"));
            }
        }
        0 => {
            if park.as_ref().ok() != Some(&oracle_park(mask)) || lane.is_ok() {
                return Err(format!("{nb:?}: lane {lane:?} park {park:?}"));
            }
        }
        _ => {
            if lane.is_ok() || park.is_ok() {
                return Err(format!("{nb:?}: obstacle classified"));
            }
        }
    }
    Ok(())
}

pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn json_files(sub: &str) -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(fixtures_dir().join(sub))
        .expect("fixture directory")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files
}

/// Emit, parse and re-emit every spec and scene document in the fixture
/// corpus. Returns one `(name, outcome)` per document.
pub fn corpus_round_trips() -> Vec<(String, Result<(), String>)> {
    use garage_core::scenario::ScenarioFile;
    let mut out = Vec::new();
    let check = |first: String, second: String, original: Option<&str>| -> Result<(), String> {
        if first != second {
            return Err("re-emit differs".into());
        }
        match original {
            Some(o) if o != first => Err("emit differs from file".into()),
            _ => Ok(()),
        }
    };
    for path in json_files("specs") {
        let text = std::fs::read_to_string(&path).unwrap();
        let r = GarageSpec::from_json(&text).map_err(|e| e.to_string()).and_then(|s| {
            let first = s.to_json();
            let second = GarageSpec::from_json(&first).map_err(|e| e.to_string())?.to_json();
            check(first, second, Some(&text))
        });
        out.push((format!("spec {}", path.display()), r));
    }
    let csv = GarageSpec::from_csv_dir(&fixtures_dir().join("csv_spec")).map_err(|e| e.to_string()).and_then(|s| {
        let first = s.to_json();
        let back = GarageSpec::from_json(&first).map_err(|e| e.to_string())?;
        if back != s {
            return Err("csv spec changed".into());
        }
        check(first, back.to_json(), None)
    });
    out.push(("spec csv_spec".into(), csv));
    for path in json_files("scenes") {
        let text = std::fs::read_to_string(&path).unwrap();
        let r = SceneGraph::from_json(&text).map_err(|e| e.to_string()).and_then(|s| {
            let first = s.to_json();
            let second = SceneGraph::from_json(&first).map_err(|e| e.to_string())?.to_json();
            check(first, second, Some(&text))
        });
        out.push((format!("scene {}", path.display()), r));
    }
    for path in json_files("scenarios").into_iter().filter(|p| {
        std::fs::read_to_string(p).is_ok_and(|t| t.contains("\"scenario/1\""))
    }) {
        let text = std::fs::read_to_string(&path).unwrap();
        let r = ScenarioFile::from_json(&text).map_err(|e| e.to_string()).and_then(|s| {
            let first = s.to_json();
            let second = ScenarioFile::from_json(&first).map_err(|e| e.to_string())?.to_json();
            check(first, second, None)
        });
        out.push((format!("scenario {}", path.display()), r));
    }
    out
}

fn rotated_cell(spec: &GarageSpec, c: CellRef) -> CellRef {
    CellRef::new(c.j, spec.m() - 1 - c.i)
}

pub fn check_rotation(spec: &GarageSpec) -> Result<(), String> {
    let base = classify_all(spec).map_err(|e| e.to_string())?;
    let turned = classify_all(&spec.rotated_quarter()).map_err(|e| e.to_string())?;
    for a in base.cells() {
        let b = turned.get(rotated_cell(spec, a.cell)).ok_or("missing cell")?;
        let same = a.kind == b.kind
            && a.lane_adjacency == b.lane_adjacency
            && a.lane_subtype == b.lane_subtype
            && a.park_subtype == b.park_subtype
            && a.render_variant == b.render_variant
            && b.lane_mask == rotate_mask(a.lane_mask, 1);
        let period = a.rotation_period();
        let turns_ok = (b.rotation.quarter_turns() + 4 - a.rotation.quarter_turns()) % period == 1 % period;
        let edges_ok = (0..4)
            .step_by(period)
            .any(|k| b.open_edges() == rotate_mask(a.open_edges(), 1 + k));
        if !(same && turns_ok && edges_ok) {
            return Err(format!("cell {} -> {}: {a:?} vs {b:?}", a.cell, b.cell));
        }
    }
    Ok(())
}

pub fn tiling_error(grid: &ClassifiedGrid) -> Result<(), String> {
    let rects = layout_cells(grid);
    let spec = grid.spec();
    let total: f64 = spec.row_widths().iter().sum::<f64>() * spec.col_widths().iter().sum::<f64>();
    let area: f64 = rects.iter().map(|(_, r)| r.area()).sum();
    if ((area - total) / total).abs() > 1e-9 {
        return Err(format!("area {area} vs {total}"));
    }
    for (k, (_, a)) in rects.iter().enumerate() {
        for (_, b) in &rects[k + 1..] {
            let ox = a.x1.min(b.x1) - a.x0.max(b.x0);
            let oy = a.y1.min(b.y1) - a.y0.max(b.y0);
            if ox > 1e-9 && oy > 1e-9 {
                return Err(format!("{a:?} overlaps {b:?}"));
            }
        }
    }
    Ok(())
}
