//! Direct-beam winter sky and per-face irradiance with ray-cast shadows.
//!
//! The sky is a list of hourly sun directions over a date window, each with
//! unit weight. A face receives `Σ weight · max(0, n·s)` over the samples whose
//! ray from the face centroid escapes both the obstruction boxes and the
//! building itself.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::scene::{dot, Aabb, HeightField, Scene, SceneMesh, Triangle};
use crate::{Error, Result};

/// Ray origins are pushed this far along the face normal, m.
pub const RAY_OFFSET: f64 = 1e-3;
const T_MIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkyConfig {
    /// Site latitude, degrees north.
    pub latitude: f64,
    /// First day of the window, day of year (1–365).
    pub start_day: u32,
    /// Last day of the window, inclusive. Smaller than `start_day` wraps
    /// through the new year.
    pub end_day: u32,
    /// Spacing of samples in solar hours, symmetric about noon.
    pub hour_step: f64,
}

impl Default for SkyConfig {
    /// Boston, November 1 through March 31, hourly.
    fn default() -> Self {
        Self {
            latitude: 42.36,
            start_day: 305,
            end_day: 90,
            hour_step: 1.0,
        }
    }
}

impl SkyConfig {
    pub fn days(&self) -> Vec<u32> {
        if self.start_day <= self.end_day {
            (self.start_day..=self.end_day).collect()
        } else {
            (self.start_day..=365).chain(1..=self.end_day).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunSample {
    pub day: u32,
    /// Solar time, hours.
    pub hour: f64,
    /// Unit vector toward the sun (east, north, up).
    pub direction: [f64; 3],
    pub weight: f64,
}

impl SunSample {
    pub fn altitude_deg(&self) -> f64 {
        math::asin(self.direction[2]).to_degrees()
    }

    /// Compass azimuth, degrees clockwise from north.
    pub fn azimuth_deg(&self) -> f64 {
        let a = math::atan2(self.direction[0], self.direction[1]).to_degrees();
        if a < 0.0 {
            a + 360.0
        } else {
            a
        }
    }
}

/// Cooper's declination, degrees.
pub fn declination_deg(day: u32) -> f64 {
    23.45 * math::sin((360.0 * (284.0 + day as f64) / 365.0).to_radians())
}

/// Sun direction for a latitude, declination and hour angle (degrees, negative
/// before noon). `±hour_angle` give exact mirror images across the meridian.
pub fn sun_direction(latitude_deg: f64, declination_deg: f64, hour_angle_deg: f64) -> [f64; 3] {
    let (phi, delta) = (latitude_deg.to_radians(), declination_deg.to_radians());
    let omega = hour_angle_deg.abs().to_radians();
    let sin_omega = libm::copysign(math::sin(omega), hour_angle_deg);
    let cos_omega = math::cos(omega);
    let (sp, cp) = (math::sin(phi), math::cos(phi));
    let (sd, cd) = (math::sin(delta), math::cos(delta));
    let v = [
        -cd * sin_omega,
        cp * sd - sp * cd * cos_omega,
        sp * sd + cp * cd * cos_omega,
    ];
    let len = math::sqrt(dot(v, v));
    [v[0] / len, v[1] / len, v[2] / len]
}

/// Sun positions above the horizon, day-major then hour-minor.
pub fn winter_sun_samples(cfg: &SkyConfig) -> Result<Vec<SunSample>> {
    if cfg.latitude.abs() >= 66.0 {
        return Err(Error::InvalidArgument(
            "latitude must be within ±66°".into(),
        ));
    }
    if !(cfg.hour_step > 0.0 && cfg.hour_step <= 12.0) {
        return Err(Error::InvalidArgument(
            "hour_step must be in (0, 12]".into(),
        ));
    }
    if !(1..=365).contains(&cfg.start_day) || !(1..=365).contains(&cfg.end_day) {
        return Err(Error::InvalidArgument(
            "window days must be in 1..=365".into(),
        ));
    }
    let half = math::floor(12.0 / cfg.hour_step + 1e-9) as i64;
    let mut samples = Vec::new();
    for day in cfg.days() {
        let delta = declination_deg(day);
        for k in -half..=half {
            let hours_from_noon = k as f64 * cfg.hour_step;
            let direction = sun_direction(cfg.latitude, delta, 15.0 * hours_from_noon);
            if direction[2] > 1e-9 {
                samples.push(SunSample {
                    day,
                    hour: 12.0 + hours_from_noon,
                    direction,
                    weight: 1.0,
                });
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptySky);
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkyModel {
    pub config: SkyConfig,
    pub samples: Vec<SunSample>,
}

impl SkyModel {
    pub fn new(config: SkyConfig) -> Result<Self> {
        let samples = winter_sun_samples(&config)?;
        Ok(Self { config, samples })
    }

    /// A sky from explicit samples, e.g. a single sun for analytic checks.
    pub fn from_samples(config: SkyConfig, samples: Vec<SunSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySky);
        }
        if samples
            .iter()
            .any(|s| !(s.direction[2] > 0.0 && s.weight > 0.0))
        {
            return Err(Error::InvalidArgument(
                "sun samples must be above the horizon with positive weight".into(),
            ));
        }
        Ok(Self { config, samples })
    }

    pub fn total_weight(&self) -> f64 {
        math::ordered_sum(self.samples.iter().map(|s| s.weight))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.weight *= factor;
        }
        out
    }
}

/// Slab test: distance along the ray to the box, if hit beyond `T_MIN`.
pub fn ray_box(origin: [f64; 3], dir: [f64; 3], b: &Aabb) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        if dir[axis].abs() < 1e-15 {
            if origin[axis] < b.min[axis] || origin[axis] > b.max[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[axis];
        let (mut a, mut c) = (
            (b.min[axis] - origin[axis]) * inv,
            (b.max[axis] - origin[axis]) * inv,
        );
        if a > c {
            core::mem::swap(&mut a, &mut c);
        }
        t0 = t0.max(a);
        t1 = t1.min(c);
        if t0 > t1 {
            return None;
        }
    }
    if t1 < T_MIN {
        return None;
    }
    Some(t0.max(0.0))
}

/// Möller–Trumbore, two-sided, edges inclusive.
pub fn ray_triangle(origin: [f64; 3], dir: [f64; 3], tri: &[[f64; 3]; 3]) -> Option<f64> {
    let [a, b, c] = *tri;
    let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    ray_triangle_edges(origin, dir, a, e1, e2)
}

#[inline]
fn ray_triangle_edges(
    origin: [f64; 3],
    dir: [f64; 3],
    a: [f64; 3],
    e1: [f64; 3],
    e2: [f64; 3],
) -> Option<f64> {
    const EDGE_EPS: f64 = 1e-12;
    let p = crate::scene::cross(dir, e2);
    let det = dot(e1, p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = [origin[0] - a[0], origin[1] - a[1], origin[2] - a[2]];
    let u = dot(s, p) * inv;
    if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&u) {
        return None;
    }
    let q = crate::scene::cross(s, e1);
    let v = dot(dir, q) * inv;
    if v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
        return None;
    }
    let t = dot(e2, q) * inv;
    (t > T_MIN).then_some(t)
}

#[derive(Debug, Clone, Copy)]
struct PackedTriangle {
    a: [f64; 3],
    e1: [f64; 3],
    e2: [f64; 3],
}

/// Occlusion structure: obstruction boxes plus the building's roof triangles
/// bucketed by heightfield cell and traversed with a 2-D DDA.
///
/// Only roof triangles are indexed. A ray leaving a building face can reach a
/// wall only by first passing under the roof, so the walls never shadow
/// anything the roof does not already shadow.
#[derive(Debug, Clone)]
pub struct Occluders {
    boxes: Vec<Aabb>,
    cells: usize,
    pitch: f64,
    x_west: f64,
    y_north: f64,
    cell_max: Vec<f64>,
    cell_tris: Vec<[Option<PackedTriangle>; 2]>,
    max_height: f64,
}

impl Occluders {
    pub fn new(field: &HeightField, building: &SceneMesh, boxes: &[Aabb]) -> Self {
        let cells = field.n - 1;
        let half = field.half_span();
        let x_west = field.center[0] - half;
        let y_north = field.center[1] + half;
        let mut cell_max = alloc::vec![0.0f64; cells * cells];
        for r in 0..cells {
            for c in 0..cells {
                cell_max[r * cells + c] = field
                    .at(r, c)
                    .max(field.at(r, c + 1))
                    .max(field.at(r + 1, c))
                    .max(field.at(r + 1, c + 1));
            }
        }
        let mut cell_tris = alloc::vec![[None, None]; cells * cells];
        for t in building.triangles.iter().filter(|t| t.normal[2] > 1e-9) {
            let [cx, cy, _] = t.centroid();
            let c = (((cx - x_west) / field.pitch) as usize).min(cells - 1);
            let r = (((y_north - cy) / field.pitch) as usize).min(cells - 1);
            let [a, b, cc] = t.vertices;
            let packed = PackedTriangle {
                a,
                e1: [b[0] - a[0], b[1] - a[1], b[2] - a[2]],
                e2: [cc[0] - a[0], cc[1] - a[1], cc[2] - a[2]],
            };
            let slot = &mut cell_tris[r * cells + c];
            if slot[0].is_none() {
                slot[0] = Some(packed);
            } else {
                debug_assert!(slot[1].is_none(), "more than two roof triangles in a cell");
                slot[1] = Some(packed);
            }
        }
        Self {
            boxes: boxes.to_vec(),
            cells,
            pitch: field.pitch,
            x_west,
            y_north,
            cell_max,
            cell_tris,
            max_height: field.max_height(),
        }
    }

    pub fn for_scene(scene: &Scene) -> Self {
        Self::new(&scene.field, &scene.building, &scene.obstructions)
    }

    /// True when a ray from `origin` toward `dir` (unit, `dir.z > 0`) hits nothing.
    pub fn visible(&self, origin: [f64; 3], dir: [f64; 3]) -> bool {
        if self.boxes.iter().any(|b| ray_box(origin, dir, b).is_some()) {
            return false;
        }
        !self.hits_roof(origin, dir)
    }

    fn hits_roof(&self, origin: [f64; 3], dir: [f64; 3]) -> bool {
        if origin[2] > self.max_height || self.cells == 0 {
            return false;
        }
        let span = self.pitch * self.cells as f64;
        let lo = [self.x_west, self.y_north - span];
        let hi = [self.x_west + span, self.y_north];
        // Clip the horizontal projection to the grid rectangle.
        let mut t_enter = 0.0f64;
        let mut t_exit = f64::INFINITY;
        for axis in 0..2 {
            if dir[axis].abs() < 1e-15 {
                if origin[axis] < lo[axis] || origin[axis] > hi[axis] {
                    return false;
                }
            } else {
                let inv = 1.0 / dir[axis];
                let (mut a, mut b) = (
                    (lo[axis] - origin[axis]) * inv,
                    (hi[axis] - origin[axis]) * inv,
                );
                if a > b {
                    core::mem::swap(&mut a, &mut b);
                }
                t_enter = t_enter.max(a);
                t_exit = t_exit.min(b);
            }
        }
        if t_enter >= t_exit {
            return false;
        }
        // Column index grows eastward, row index southward.
        let px = origin[0] + dir[0] * t_enter;
        let py = origin[1] + dir[1] * t_enter;
        let last = self.cells as i64 - 1;
        let mut col = (math::floor((px - self.x_west) / self.pitch) as i64).clamp(0, last);
        let mut row = (math::floor((self.y_north - py) / self.pitch) as i64).clamp(0, last);
        let step_col: i64 = if dir[0] > 0.0 { 1 } else { -1 };
        let step_row: i64 = if dir[1] < 0.0 { 1 } else { -1 };
        let next_boundary_t = |axis: usize, idx: i64| -> f64 {
            if dir[axis].abs() < 1e-15 {
                return f64::INFINITY;
            }
            let edge = if axis == 0 {
                self.x_west + (idx + i64::from(dir[0] > 0.0)) as f64 * self.pitch
            } else {
                self.y_north - (idx + i64::from(dir[1] < 0.0)) as f64 * self.pitch
            };
            (edge - origin[axis]) / dir[axis]
        };
        let mut t_col = next_boundary_t(0, col);
        let mut t_row = next_boundary_t(1, row);
        let dt_col = if dir[0].abs() < 1e-15 {
            f64::INFINITY
        } else {
            self.pitch / dir[0].abs()
        };
        let dt_row = if dir[1].abs() < 1e-15 {
            f64::INFINITY
        } else {
            self.pitch / dir[1].abs()
        };
        let mut t_cell = t_enter;
        loop {
            let z_in = origin[2] + dir[2] * t_cell;
            if z_in > self.max_height {
                return false;
            }
            let idx = row as usize * self.cells + col as usize;
            if z_in <= self.cell_max[idx] + 1e-9 {
                for t in self.cell_tris[idx].iter().flatten() {
                    if ray_triangle_edges(origin, dir, t.a, t.e1, t.e2).is_some() {
                        return true;
                    }
                }
            }
            if t_col < t_row {
                t_cell = t_col;
                col += step_col;
                t_col += dt_col;
            } else {
                t_cell = t_row;
                row += step_row;
                t_row += dt_row;
            }
            if t_cell >= t_exit || col < 0 || col > last || row < 0 || row > last {
                return false;
            }
        }
    }
}

/// Received beam irradiance per unit area of one face, summed over the sky.
pub fn face_irradiance(face: &Triangle, occluders: &Occluders, sky: &SkyModel) -> f64 {
    let n = face.normal;
    let c = face.centroid();
    let origin = [
        c[0] + RAY_OFFSET * n[0],
        c[1] + RAY_OFFSET * n[1],
        c[2] + RAY_OFFSET * n[2],
    ];
    let mut total = 0.0;
    for s in &sky.samples {
        let cos = dot(n, s.direction);
        if cos > 0.0 && occluders.visible(origin, s.direction) {
            total += s.weight * cos;
        }
    }
    total
}

/// Area-weighted mean irradiance over the building faces.
pub fn avg_radiation(scene: &Scene, sky: &SkyModel) -> Result<f64> {
    let occluders = Occluders::for_scene(scene);
    let mut weighted = 0.0;
    let mut area = 0.0;
    for face in &scene.building.triangles {
        weighted += face_irradiance(face, &occluders, sky) * face.area;
        area += face.area;
    }
    if area <= 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    Ok(weighted / area)
}
