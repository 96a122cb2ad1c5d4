//! Plot, building and neighbourhood geometry.
//!
//! World frame: `x` points east, `y` north, `z` up, origin at the plot centre
//! on the ground. Every grid in the crate is stored row-major with the north row
//! first and the west column first.

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

/// Side length of the heightmap control grid.
pub const HEIGHTMAP_SIZE: usize = 5;
/// Number of heightmap control points.
pub const HEIGHTMAP_CELLS: usize = HEIGHTMAP_SIZE * HEIGHTMAP_SIZE;

/// Triangles smaller than this are dropped from meshes.
const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Geometry of the plot and its possible neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Side of the square plot, m.
    pub plot_size: f64,
    /// Maximum building height, m. Also the depth-map normalization.
    pub height_cap: f64,
    /// Obstruction extent parallel to the plot side, m.
    pub obstruction_width: f64,
    /// Obstruction extent perpendicular to the plot side, m.
    pub obstruction_depth: f64,
    pub obstruction_height: f64,
    /// Gap between the plot edge and the obstruction's near face, m.
    pub obstruction_setback: f64,
    /// Offsets of the obstruction centre along its side, m, one per slot.
    /// Must be symmetric (`offsets[k] == -offsets[P-1-k]`) for mirroring.
    pub slot_offsets: Vec<f64>,
    /// Side of the square area covered by a depth map, m.
    pub world_extent: f64,
    /// Vertex lattice used to mesh heightmaps for simulation.
    pub mesh_resolution: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            plot_size: 10.0,
            height_cap: 10.0,
            obstruction_width: 10.0,
            obstruction_depth: 5.0,
            obstruction_height: 10.0,
            obstruction_setback: 5.0,
            slot_offsets: alloc::vec![-10.0, -6.0, -2.0, 2.0, 6.0, 10.0],
            world_extent: 32.0,
            mesh_resolution: 11,
        }
    }
}

impl SceneConfig {
    pub fn positions_per_side(&self) -> usize {
        self.slot_offsets.len()
    }

    pub fn plot_area(&self) -> f64 {
        self.plot_size * self.plot_size
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("plot_size", self.plot_size),
            ("height_cap", self.height_cap),
            ("obstruction_width", self.obstruction_width),
            ("obstruction_depth", self.obstruction_depth),
            ("obstruction_height", self.obstruction_height),
            ("world_extent", self.world_extent),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "{name} must be positive"
                )));
            }
        }
        if self.slot_offsets.is_empty() {
            return Err(Error::InvalidArgument(
                "slot_offsets must not be empty".into(),
            ));
        }
        if self.mesh_resolution < HEIGHTMAP_SIZE {
            return Err(Error::InvalidArgument(alloc::format!(
                "mesh_resolution must be at least {HEIGHTMAP_SIZE}"
            )));
        }
        Ok(())
    }
}

/// 5×5 grid of building heights spanning the plot, pitch `plot_size / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heightmap {
    pub heights: [[f64; HEIGHTMAP_SIZE]; HEIGHTMAP_SIZE],
}

impl Heightmap {
    pub fn new(heights: [[f64; HEIGHTMAP_SIZE]; HEIGHTMAP_SIZE], cap: f64) -> Result<Self> {
        let hm = Self { heights };
        hm.validate(cap)?;
        Ok(hm)
    }

    pub fn flat(height: f64) -> Self {
        Self {
            heights: [[height; HEIGHTMAP_SIZE]; HEIGHTMAP_SIZE],
        }
    }

    pub fn from_flat_slice(values: &[f64], cap: f64) -> Result<Self> {
        if values.len() != HEIGHTMAP_CELLS {
            return Err(Error::InvalidArgument(alloc::format!(
                "heightmap needs {HEIGHTMAP_CELLS} values, got {}",
                values.len()
            )));
        }
        let mut heights = [[0.0; HEIGHTMAP_SIZE]; HEIGHTMAP_SIZE];
        for (i, v) in values.iter().enumerate() {
            heights[i / HEIGHTMAP_SIZE][i % HEIGHTMAP_SIZE] = *v;
        }
        Self::new(heights, cap)
    }

    pub fn validate(&self, cap: f64) -> Result<()> {
        for &h in self.heights.iter().flatten() {
            if !(0.0..=cap).contains(&h) {
                return Err(Error::HeightOutOfRange { value: h, cap });
            }
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.heights.iter().flatten().copied()
    }

    /// Rounds every height to `f32`, the precision of stored datasets.
    pub fn quantized(&self) -> Self {
        let mut out = *self;
        for h in out.heights.iter_mut().flatten() {
            *h = *h as f32 as f64;
        }
        out
    }

    /// Reflection across the north–south axis (`x → −x`).
    pub fn mirrored(&self) -> Self {
        let mut out = *self;
        for row in out.heights.iter_mut() {
            row.reverse();
        }
        out
    }

    pub fn to_field(&self, cfg: &SceneConfig) -> HeightField {
        HeightField {
            n: HEIGHTMAP_SIZE,
            heights: self.values().collect(),
            pitch: cfg.plot_size / (HEIGHTMAP_SIZE - 1) as f64,
            center: [0.0, 0.0],
        }
    }

    /// Exact volume of the bilinear surface over the plot, m³.
    pub fn volume(&self, cfg: &SceneConfig) -> f64 {
        self.to_field(cfg).volume()
    }
}

/// Square grid of heights at regular spacing, centred on `center`.
///
/// Used both for resampled heightmaps and for fields decoded from depth maps.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub n: usize,
    /// Row-major, north row first.
    pub heights: Vec<f64>,
    /// Vertex spacing, m.
    pub pitch: f64,
    pub center: [f64; 2],
}

impl HeightField {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.heights[row * self.n + col]
    }

    /// World `x` of a column. Written so that column `j` and `n-1-j` are exact
    /// negatives around the centre.
    pub fn x(&self, col: usize) -> f64 {
        let m = (self.n - 1) as f64;
        self.center[0] + (2.0 * col as f64 - m) * (0.5 * self.pitch)
    }

    /// World `y` of a row (row 0 is north).
    pub fn y(&self, row: usize) -> f64 {
        let m = (self.n - 1) as f64;
        self.center[1] - (2.0 * row as f64 - m) * (0.5 * self.pitch)
    }

    pub fn half_span(&self) -> f64 {
        0.5 * self.pitch * (self.n - 1) as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.pitch * self.pitch
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(0.0, f64::max)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let h = self.half_span() + 1e-9;
        (x - self.center[0]).abs() <= h && (y - self.center[1]).abs() <= h
    }

    /// Bilinear height at a world point, clamped to the grid.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let m = (self.n - 1) as f64;
        let u = ((x - self.center[0] + self.half_span()) / self.pitch).clamp(0.0, m);
        let v = ((self.center[1] + self.half_span() - y) / self.pitch).clamp(0.0, m);
        let c = (math::floor(u) as usize).min(self.n - 2);
        let r = (math::floor(v) as usize).min(self.n - 2);
        let fu = u - c as f64;
        let fv = v - r as f64;
        let top = self.at(r, c) * (1.0 - fu) + self.at(r, c + 1) * fu;
        let bottom = self.at(r + 1, c) * (1.0 - fu) + self.at(r + 1, c + 1) * fu;
        top * (1.0 - fv) + bottom * fv
    }

    /// Bilinear resampling onto a `resolution × resolution` lattice over the
    /// same span. Weights are formed from integers so the result is exactly
    /// mirror-equivariant.
    pub fn resample(&self, resolution: usize) -> HeightField {
        assert!(resolution >= 2 && self.n >= 2);
        let den = resolution - 1;
        let weights: Vec<(usize, f64, f64)> = (0..resolution)
            .map(|j| {
                let num = j * (self.n - 1);
                let (mut i, mut m) = (num / den, num % den);
                if i == self.n - 1 {
                    i -= 1;
                    m = den;
                }
                (i, (den - m) as f64 / den as f64, m as f64 / den as f64)
            })
            .collect();
        let mut heights = Vec::with_capacity(resolution * resolution);
        for &(r, w0y, w1y) in &weights {
            for &(c, w0x, w1x) in &weights {
                let top = self.at(r, c) * w0x + self.at(r, c + 1) * w1x;
                let bottom = self.at(r + 1, c) * w0x + self.at(r + 1, c + 1) * w1x;
                heights.push(top * w0y + bottom * w1y);
            }
        }
        HeightField {
            n: resolution,
            heights,
            pitch: self.pitch * (self.n - 1) as f64 / den as f64,
            center: self.center,
        }
    }

    pub fn volume(&self) -> f64 {
        heightfield_volume(&self.heights, self.n, self.cell_area())
    }
}

/// Exact integral of the bilinear interpolant of an `n × n` grid: each cell
/// contributes the mean of its four corners times `cell_area`.
pub fn heightfield_volume(heights: &[f64], n: usize, cell_area: f64) -> f64 {
    assert_eq!(heights.len(), n * n, "heightfield is not {n}×{n}");
    let mut total = 0.0;
    for r in 0..n.saturating_sub(1) {
        for c in 0..n - 1 {
            let s = heights[r * n + c]
                + heights[r * n + c + 1]
                + heights[(r + 1) * n + c]
                + heights[(r + 1) * n + c + 1];
            total += 0.25 * s;
        }
    }
    total * cell_area
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    East,
    South,
    West,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Obstruction {
    pub side: Side,
    pub slot: usize,
}

/// Up to one obstruction on each of the east, south and west sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub east: Option<usize>,
    pub south: Option<usize>,
    pub west: Option<usize>,
}

impl BoundaryCondition {
    pub const EMPTY: Self = Self {
        east: None,
        south: None,
        west: None,
    };

    pub fn from_obstructions(obstructions: &[Obstruction], positions: usize) -> Result<Self> {
        let mut bc = Self::EMPTY;
        for o in obstructions {
            if o.slot >= positions {
                return Err(Error::SlotOutOfRange {
                    slot: o.slot,
                    positions,
                });
            }
            let entry = match o.side {
                Side::East => &mut bc.east,
                Side::South => &mut bc.south,
                Side::West => &mut bc.west,
            };
            if entry.is_some() {
                return Err(Error::InvalidArgument(alloc::format!(
                    "more than one obstruction on the {:?} side",
                    o.side
                )));
            }
            *entry = Some(o.slot);
        }
        Ok(bc)
    }

    pub fn obstructions(&self) -> impl Iterator<Item = Obstruction> {
        [
            (Side::East, self.east),
            (Side::South, self.south),
            (Side::West, self.west),
        ]
        .into_iter()
        .filter_map(|(side, slot)| slot.map(|slot| Obstruction { side, slot }))
    }

    pub fn is_empty(&self) -> bool {
        self.east.is_none() && self.south.is_none() && self.west.is_none()
    }

    fn mixed_radix_code(&self, positions: usize) -> usize {
        let digit = |o: Option<usize>| o.map_or(0, |s| s + 1);
        let base = positions + 1;
        digit(self.east) * base * base + digit(self.south) * base + digit(self.west)
    }

    /// Canonical id: the mixed-radix code `(east, south, west)` in base `P+1`,
    /// shifted down by one to skip the all-absent code.
    pub fn id(&self, positions: usize) -> Result<u32> {
        for o in self.obstructions() {
            if o.slot >= positions {
                return Err(Error::SlotOutOfRange {
                    slot: o.slot,
                    positions,
                });
            }
        }
        if self.is_empty() {
            return Err(Error::InvalidArgument(
                "the empty boundary condition has no id".into(),
            ));
        }
        Ok((self.mixed_radix_code(positions) - 1) as u32)
    }

    pub fn from_id(id: u32, positions: usize) -> Result<Self> {
        let base = positions + 1;
        let code = id as usize + 1;
        if code >= base * base * base {
            return Err(Error::UnknownBoundaryCondition(id));
        }
        let opt = |d: usize| if d == 0 { None } else { Some(d - 1) };
        Ok(Self {
            east: opt(code / (base * base)),
            south: opt((code / base) % base),
            west: opt(code % base),
        })
    }

    /// Reflection across the north–south axis: east and west swap, south slots
    /// map to the slot with the negated offset.
    pub fn mirrored(&self, cfg: &SceneConfig) -> Result<Self> {
        let south = match self.south {
            None => None,
            Some(slot) => {
                let offset = *cfg.slot_offsets.get(slot).ok_or(Error::SlotOutOfRange {
                    slot,
                    positions: cfg.positions_per_side(),
                })?;
                let mirror = cfg
                    .slot_offsets
                    .iter()
                    .position(|&o| o == -offset)
                    .ok_or_else(|| {
                        Error::InvalidArgument("slot offsets are not mirror-symmetric".into())
                    })?;
                Some(mirror)
            }
        };
        Ok(Self {
            east: self.west,
            south,
            west: self.east,
        })
    }
}

/// Every non-empty boundary condition with `positions` slots per side, in
/// canonical id order. There are `(P+1)³ − 1` of them.
pub fn enumerate_boundary_conditions(positions: usize) -> Vec<BoundaryCondition> {
    assert!(positions >= 1, "positions_per_side must be at least 1");
    let count = (positions + 1).pow(3) - 1;
    (0..count as u32)
        .map(|id| BoundaryCondition::from_id(id, positions).expect("id within range"))
        .collect()
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        const EPS: f64 = 1e-9;
        x >= self.min[0] - EPS
            && x <= self.max[0] + EPS
            && y >= self.min[1] - EPS
            && y <= self.max[1] + EPS
    }

    pub fn mirrored_x(&self) -> Self {
        Self {
            min: [-self.max[0], self.min[1], self.min[2]],
            max: [-self.min[0], self.max[1], self.max[2]],
        }
    }
}

pub fn obstruction_box(o: Obstruction, cfg: &SceneConfig) -> Result<Aabb> {
    let offset = *cfg.slot_offsets.get(o.slot).ok_or(Error::SlotOutOfRange {
        slot: o.slot,
        positions: cfg.positions_per_side(),
    })?;
    let half = 0.5 * cfg.plot_size;
    let near = half + cfg.obstruction_setback;
    let far = near + cfg.obstruction_depth;
    let (along_min, along_max) = (
        offset - 0.5 * cfg.obstruction_width,
        offset + 0.5 * cfg.obstruction_width,
    );
    let h = cfg.obstruction_height;
    Ok(match o.side {
        Side::South => Aabb {
            min: [along_min, -far, 0.0],
            max: [along_max, -near, h],
        },
        Side::East => Aabb {
            min: [near, along_min, 0.0],
            max: [far, along_max, h],
        },
        Side::West => Aabb {
            min: [-far, along_min, 0.0],
            max: [-near, along_max, h],
        },
    })
}

pub fn boundary_boxes(bc: &BoundaryCondition, cfg: &SceneConfig) -> Result<Vec<Aabb>> {
    bc.obstructions().map(|o| obstruction_box(o, cfg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceTag {
    Building,
    Obstruction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [[f64; 3]; 3],
    /// Outward unit normal.
    pub normal: [f64; 3],
    pub area: f64,
    pub tag: FaceTag,
}

impl Triangle {
    /// Builds a triangle, flipping the winding if needed so the normal has a
    /// non-negative component along `outward`. Returns `None` for degenerate input.
    fn oriented(
        a: [f64; 3],
        b: [f64; 3],
        c: [f64; 3],
        outward: [f64; 3],
        tag: FaceTag,
    ) -> Option<Self> {
        let cross = cross(sub(b, a), sub(c, a));
        let len = math::sqrt(dot(cross, cross));
        let area = 0.5 * len;
        if area <= MIN_TRIANGLE_AREA {
            return None;
        }
        let mut normal = [cross[0] / len, cross[1] / len, cross[2] / len];
        let mut vertices = [a, b, c];
        if dot(normal, outward) < 0.0 {
            normal = [-normal[0], -normal[1], -normal[2]];
            vertices = [a, c, b];
        }
        Some(Self {
            vertices,
            normal,
            area,
            tag,
        })
    }

    pub fn centroid(&self) -> [f64; 3] {
        let [a, b, c] = self.vertices;
        [
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
            (a[2] + b[2] + c[2]) / 3.0,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneMesh {
    pub triangles: Vec<Triangle>,
}

impl SceneMesh {
    pub fn area(&self) -> f64 {
        math::ordered_sum(self.triangles.iter().map(|t| t.area))
    }

    /// Area of the upward-facing (roof) triangles.
    pub fn top_area(&self) -> f64 {
        math::ordered_sum(
            self.triangles
                .iter()
                .filter(|t| t.normal[2] > 1e-9)
                .map(|t| t.area),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

/// Triangulates a heightfield: two triangles per cell on top, vertical walls
/// from the boundary down to `z = 0`, no bottom. Roof triangles lying entirely
/// on the ground are dropped.
///
/// Cells west of the centre line split along their NW–SE diagonal, the others
/// along NE–SW, so the mesh of a mirrored field is the mirror of the mesh
/// whenever the cell count is even.
pub fn mesh_heightfield(field: &HeightField) -> SceneMesh {
    let n = field.n;
    let m = n - 1;
    let mut triangles = Vec::with_capacity(2 * m * m + 8 * m);
    let vertex = |r: usize, c: usize| [field.x(c), field.y(r), field.at(r, c)];
    let up = [0.0, 0.0, 1.0];
    let west_half = |c: usize| 2 * c + 1 < m;

    for r in 0..m {
        for c in 0..m {
            let nw = vertex(r, c);
            let ne = vertex(r, c + 1);
            let sw = vertex(r + 1, c);
            let se = vertex(r + 1, c + 1);
            let tris = if west_half(c) {
                [[nw, sw, se], [nw, se, ne]]
            } else {
                [[ne, nw, sw], [ne, sw, se]]
            };
            for [a, b, cc] in tris {
                if a[2] == 0.0 && b[2] == 0.0 && cc[2] == 0.0 {
                    continue;
                }
                triangles.extend(Triangle::oriented(a, b, cc, up, FaceTag::Building));
            }
        }
    }

    let mut wall = |a: [f64; 3], b: [f64; 3], outward: [f64; 3]| {
        let a0 = [a[0], a[1], 0.0];
        let b0 = [b[0], b[1], 0.0];
        triangles.extend(Triangle::oriented(a0, b0, b, outward, FaceTag::Building));
        triangles.extend(Triangle::oriented(a0, b, a, outward, FaceTag::Building));
    };
    // North and south walls: the anchor endpoint is the one nearer the
    // centre line so the diagonal pattern mirrors.
    for (row, outward) in [(0, [0.0, 1.0, 0.0]), (m, [0.0, -1.0, 0.0])] {
        for c in 0..m {
            let (a, b) = if west_half(c) {
                (vertex(row, c), vertex(row, c + 1))
            } else {
                (vertex(row, c + 1), vertex(row, c))
            };
            wall(a, b, outward);
        }
    }
    for (col, outward) in [(m, [1.0, 0.0, 0.0]), (0, [-1.0, 0.0, 0.0])] {
        for r in 0..m {
            wall(vertex(r, col), vertex(r + 1, col), outward);
        }
    }
    SceneMesh { triangles }
}

/// Meshes a heightmap after bilinear resampling to `resolution` vertices per side.
pub fn heightmap_to_mesh(h: &Heightmap, resolution: usize, cfg: &SceneConfig) -> Result<SceneMesh> {
    h.validate(cfg.height_cap)?;
    if resolution < HEIGHTMAP_SIZE {
        return Err(Error::InvalidArgument(alloc::format!(
            "mesh resolution must be at least {HEIGHTMAP_SIZE}"
        )));
    }
    Ok(mesh_heightfield(&h.to_field(cfg).resample(resolution)))
}

/// The five exposed faces (no bottom) of an obstruction box.
pub fn box_mesh(b: &Aabb) -> SceneMesh {
    let [x0, y0, z0] = b.min;
    let [x1, y1, z1] = b.max;
    let quads: [([[f64; 3]; 4], [f64; 3]); 5] = [
        (
            [[x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]],
            [0.0, 0.0, 1.0],
        ),
        (
            [[x0, y1, z0], [x1, y1, z0], [x1, y1, z1], [x0, y1, z1]],
            [0.0, 1.0, 0.0],
        ),
        (
            [[x0, y0, z0], [x1, y0, z0], [x1, y0, z1], [x0, y0, z1]],
            [0.0, -1.0, 0.0],
        ),
        (
            [[x1, y0, z0], [x1, y1, z0], [x1, y1, z1], [x1, y0, z1]],
            [1.0, 0.0, 0.0],
        ),
        (
            [[x0, y0, z0], [x0, y1, z0], [x0, y1, z1], [x0, y0, z1]],
            [-1.0, 0.0, 0.0],
        ),
    ];
    let mut triangles = Vec::with_capacity(10);
    for ([a, b, c, d], outward) in quads {
        triangles.extend(Triangle::oriented(a, b, c, outward, FaceTag::Obstruction));
        triangles.extend(Triangle::oriented(a, c, d, outward, FaceTag::Obstruction));
    }
    SceneMesh { triangles }
}

/// Building mesh plus the obstruction boxes around it.
#[derive(Debug, Clone)]
pub struct Scene {
    pub field: HeightField,
    pub building: SceneMesh,
    pub obstructions: Vec<Aabb>,
}

impl Scene {
    pub fn from_field(
        field: HeightField,
        bc: &BoundaryCondition,
        cfg: &SceneConfig,
    ) -> Result<Self> {
        let building = mesh_heightfield(&field);
        Ok(Self {
            field,
            building,
            obstructions: boundary_boxes(bc, cfg)?,
        })
    }

    /// Scene for a heightmap meshed at `cfg.mesh_resolution`.
    pub fn from_heightmap(
        h: &Heightmap,
        bc: &BoundaryCondition,
        cfg: &SceneConfig,
    ) -> Result<Self> {
        h.validate(cfg.height_cap)?;
        Self::from_field(h.to_field(cfg).resample(cfg.mesh_resolution), bc, cfg)
    }

    /// Building and obstruction triangles in one mesh.
    pub fn full_mesh(&self) -> SceneMesh {
        let mut mesh = self.building.clone();
        for b in &self.obstructions {
            mesh.triangles.extend(box_mesh(b).triangles);
        }
        mesh
    }
}

#[inline]
pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Flat roof at the height that gives `target_volume`.
pub fn baseline_flat_roof(
    target_volume: f64,
    allow_empty: bool,
    cfg: &SceneConfig,
) -> Result<Heightmap> {
    let max = cfg.plot_area() * cfg.height_cap;
    if target_volume == 0.0 && allow_empty {
        return Ok(Heightmap::flat(0.0));
    }
    if !(target_volume > 0.0 && target_volume <= max) {
        return Err(Error::InvalidArgument(alloc::format!(
            "target volume {target_volume} outside (0, {max}]"
        )));
    }
    Ok(Heightmap::flat(target_volume / cfg.plot_area()))
}

/// Single-slope roof facing south: the cap height on the north edge, falling
/// by `tan(tilt)` per metre southward, clamped at the ground.
pub fn baseline_tilted_roof(tilt_deg: f64, cfg: &SceneConfig) -> Result<Heightmap> {
    if !(0.0..90.0).contains(&tilt_deg) {
        return Err(Error::InvalidArgument(alloc::format!(
            "tilt {tilt_deg}° outside [0, 90)"
        )));
    }
    let slope = math::tan(tilt_deg.to_radians());
    let pitch = cfg.plot_size / (HEIGHTMAP_SIZE - 1) as f64;
    let mut heights = [[0.0; HEIGHTMAP_SIZE]; HEIGHTMAP_SIZE];
    for (r, row) in heights.iter_mut().enumerate() {
        let h = (cfg.height_cap - r as f64 * pitch * slope).clamp(0.0, cfg.height_cap);
        row.fill(h);
    }
    Ok(Heightmap { heights })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomKind {
    Uniform,
    Gaussian,
}

/// Mean and standard deviation of the Gaussian random baseline, m.
pub const GAUSSIAN_BASELINE: (f64, f64) = (5.0, 1.5);

pub fn baseline_random(kind: RandomKind, rng: &mut crate::Rng, cfg: &SceneConfig) -> Heightmap {
    let cap = cfg.height_cap;
    let mut heights = [[0.0; HEIGHTMAP_SIZE]; HEIGHTMAP_SIZE];
    match kind {
        RandomKind::Uniform => {
            for h in heights.iter_mut().flatten() {
                *h = rng.random_range(0.0..=cap);
            }
        }
        RandomKind::Gaussian => {
            let normal =
                Normal::new(GAUSSIAN_BASELINE.0, GAUSSIAN_BASELINE.1).expect("valid sigma");
            for h in heights.iter_mut().flatten() {
                *h = normal.sample(rng).clamp(0.0, cap);
            }
        }
    }
    Heightmap { heights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn cfg() -> SceneConfig {
        SceneConfig::default()
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_boundary_conditions(6).len(), 342);
        assert_eq!(enumerate_boundary_conditions(1).len(), 7);
        assert_eq!(enumerate_boundary_conditions(2).len(), 26);
    }

    #[test]
    fn ids_are_a_bijection() {
        for p in 1..=8 {
            let all = enumerate_boundary_conditions(p);
            assert_eq!(all.len(), (p + 1).pow(3) - 1);
            for (i, bc) in all.iter().enumerate() {
                assert!(!bc.is_empty());
                assert_eq!(bc.id(p).unwrap(), i as u32);
                assert_eq!(BoundaryCondition::from_id(i as u32, p).unwrap(), *bc);
            }
        }
        assert!(BoundaryCondition::from_id(342, 6).is_err());
    }

    #[test]
    fn obstruction_rules() {
        let err = BoundaryCondition::from_obstructions(
            &[
                Obstruction {
                    side: Side::East,
                    slot: 0,
                },
                Obstruction {
                    side: Side::East,
                    slot: 1,
                },
            ],
            6,
        );
        assert!(err.is_err());
        assert!(obstruction_box(
            Obstruction {
                side: Side::South,
                slot: 6
            },
            &cfg()
        )
        .is_err());
    }

    #[test]
    fn south_box_is_centred_with_single_zero_offset() {
        let c = SceneConfig {
            slot_offsets: alloc::vec![0.0],
            ..cfg()
        };
        let b = obstruction_box(
            Obstruction {
                side: Side::South,
                slot: 0,
            },
            &c,
        )
        .unwrap();
        assert_eq!(b.min[0], -b.max[0]);
        assert_eq!(b.max[1], -10.0);
        assert_eq!(b.min[1], -15.0);
        assert_eq!(b.max[2], 10.0);
    }

    #[test]
    fn east_and_west_boxes_mirror() {
        let c = cfg();
        for slot in 0..6 {
            let e = obstruction_box(
                Obstruction {
                    side: Side::East,
                    slot,
                },
                &c,
            )
            .unwrap();
            let w = obstruction_box(
                Obstruction {
                    side: Side::West,
                    slot,
                },
                &c,
            )
            .unwrap();
            assert_eq!(e.mirrored_x(), w);
            assert_eq!(e.max[2], c.obstruction_height);
        }
    }

    #[test]
    fn mirrored_bc_maps_boxes_to_mirror_images() {
        let c = cfg();
        for bc in enumerate_boundary_conditions(6) {
            let m = bc.mirrored(&c).unwrap();
            let mut a: Vec<_> = boundary_boxes(&bc, &c)
                .unwrap()
                .iter()
                .map(Aabb::mirrored_x)
                .collect();
            let mut b = boundary_boxes(&m, &c).unwrap();
            let key = |x: &Aabb| {
                (
                    x.min[0] as i64,
                    x.min[1] as i64,
                    x.max[0] as i64,
                    x.max[1] as i64,
                )
            };
            a.sort_by_key(key);
            b.sort_by_key(key);
            assert_eq!(a, b);
            assert_eq!(m.mirrored(&c).unwrap(), bc);
        }
    }

    #[test]
    fn zero_heightmap_meshes_to_nothing() {
        let mesh = heightmap_to_mesh(&Heightmap::flat(0.0), 11, &cfg()).unwrap();
        assert!(mesh.is_empty());
    }

    #[test]
    fn full_height_slab_area() {
        let mesh = heightmap_to_mesh(&Heightmap::flat(10.0), 5, &cfg()).unwrap();
        assert!((mesh.area() - 500.0).abs() < 1e-9);
        assert!((mesh.top_area() - 100.0).abs() < 1e-9);
        for t in &mesh.triangles {
            let n = t.normal;
            assert!((dot(n, n) - 1.0).abs() < 1e-12);
            assert!(t.area > 0.0);
        }
    }

    #[test]
    fn ramp_resamples_to_a_plane() {
        let mut heights = [[0.0; 5]; 5];
        for row in heights.iter_mut() {
            for (c, h) in row.iter_mut().enumerate() {
                *h = 2.5 * c as f64;
            }
        }
        let field = Heightmap { heights }.to_field(&cfg()).resample(11);
        for r in 0..11 {
            for c in 0..11 {
                assert!((field.at(r, c) - c as f64).abs() < 1e-12);
            }
        }
        let mesh = mesh_heightfield(&field);
        let slope = 1.0 / math::sqrt(2.0);
        for t in mesh.triangles.iter().filter(|t| t.normal[2] > 1e-9) {
            assert!((t.normal[0] + slope).abs() < 1e-12);
            assert!((t.normal[2] - slope).abs() < 1e-12);
        }
    }

    #[test]
    fn volume_examples() {
        let c = cfg();
        assert!((Heightmap::flat(1.0).volume(&c) - 100.0).abs() < 1e-12);
        assert_eq!(Heightmap::flat(0.0).volume(&c), 0.0);
        let mut heights = [[0.0; 5]; 5];
        for row in heights.iter_mut() {
            for (col, h) in row.iter_mut().enumerate() {
                *h = 2.5 * col as f64;
            }
        }
        assert!((Heightmap { heights }.volume(&c) - 500.0).abs() < 1e-9);
    }

    #[test]
    fn mirrored_mesh_is_mirror_of_mesh() {
        let c = cfg();
        let mut rng = seeded_rng(3, 0);
        let h = baseline_random(RandomKind::Uniform, &mut rng, &c);
        let a = heightmap_to_mesh(&h, 11, &c).unwrap();
        let b = heightmap_to_mesh(&h.mirrored(), 11, &c).unwrap();
        assert_eq!(a.triangles.len(), b.triangles.len());
        let canon = |t: &Triangle, flip: bool| {
            let mut v: Vec<[i64; 3]> = t
                .vertices
                .iter()
                .map(|p| {
                    let x = if flip { -p[0] } else { p[0] };
                    [(x * 1e9) as i64, (p[1] * 1e9) as i64, (p[2] * 1e9) as i64]
                })
                .collect();
            v.sort();
            v
        };
        let mut sa: Vec<_> = a.triangles.iter().map(|t| canon(t, true)).collect();
        let mut sb: Vec<_> = b.triangles.iter().map(|t| canon(t, false)).collect();
        sa.sort();
        sb.sort();
        assert_eq!(sa, sb);
    }

    #[test]
    fn baselines() {
        let c = cfg();
        assert_eq!(
            baseline_flat_roof(100.0, false, &c).unwrap(),
            Heightmap::flat(1.0)
        );
        assert_eq!(
            baseline_flat_roof(1000.0, false, &c).unwrap(),
            Heightmap::flat(10.0)
        );
        assert!(baseline_flat_roof(0.0, false, &c).is_err());
        assert_eq!(
            baseline_flat_roof(0.0, true, &c).unwrap(),
            Heightmap::flat(0.0)
        );
        assert!(baseline_flat_roof(1000.1, false, &c).is_err());

        assert_eq!(
            baseline_tilted_roof(0.0, &c).unwrap(),
            Heightmap::flat(10.0)
        );
        let t42 = baseline_tilted_roof(42.0, &c).unwrap();
        assert_eq!(t42.heights[0][0], 10.0);
        assert!((t42.heights[4][2] - (10.0 - 10.0 * 0.9004040442978399)).abs() < 1e-9);
        assert!((t42.heights[4][2] - 1.00).abs() < 0.01);
        let t45 = baseline_tilted_roof(45.0, &c).unwrap();
        assert!(t45.heights[4][0].abs() < 1e-12);
    }

    #[test]
    fn random_baselines() {
        let c = cfg();
        let a = baseline_random(RandomKind::Uniform, &mut seeded_rng(9, 1), &c);
        let b = baseline_random(RandomKind::Uniform, &mut seeded_rng(9, 1), &c);
        assert_eq!(a, b);
        assert!(a.values().all(|h| (0.0..=10.0).contains(&h)));

        let mut rng = seeded_rng(11, 0);
        let mut sums = [0.0; HEIGHTMAP_CELLS];
        let n = 10_000;
        for _ in 0..n {
            let g = baseline_random(RandomKind::Gaussian, &mut rng, &c);
            for (s, h) in sums.iter_mut().zip(g.values()) {
                *s += h;
            }
        }
        for s in sums {
            assert!((s / n as f64 - 5.0).abs() < 0.1);
        }
    }
}
