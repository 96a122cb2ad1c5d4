//! Top-view depth maps of a scene, the plot/boundary pixel masks, decoding
//! back to a heightfield, and the in-memory dataset with its train/test split.
//!
//! A depth map covers `world_extent × world_extent` metres centred on the plot
//! with 16×16 pixels. Each pixel holds the scene height at its centre divided
//! by the height cap, so brighter is taller.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::optimizer::PerfPoint;
use crate::scene::{boundary_boxes, BoundaryCondition, HeightField, Heightmap, SceneConfig};
use crate::{math, Error, Result};

pub const IMAGE_SIZE: usize = 16;
pub const PIXELS: usize = IMAGE_SIZE * IMAGE_SIZE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    /// Row-major, north row first, west column first.
    pub pixels: Vec<f32>,
}

impl DepthMap {
    pub fn new(pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != PIXELS {
            return Err(Error::ShapeMismatch(alloc::format!(
                "depth map needs {PIXELS} pixels, got {}",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(
                "depth map pixels must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { pixels })
    }

    pub fn zeros() -> Self {
        Self {
            pixels: alloc::vec![0.0; PIXELS],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * IMAGE_SIZE + col]
    }
}

/// World coordinates of a pixel centre.
pub fn pixel_center(row: usize, col: usize, cfg: &SceneConfig) -> (f64, f64) {
    let size = cfg.world_extent / IMAGE_SIZE as f64;
    let half = 0.5 * cfg.world_extent;
    (
        -half + (col as f64 + 0.5) * size,
        half - (row as f64 + 0.5) * size,
    )
}

fn inside_plot(x: f64, y: f64, cfg: &SceneConfig) -> bool {
    let h = 0.5 * cfg.plot_size + 1e-9;
    x.abs() <= h && y.abs() <= h
}

/// Plot and boundary pixel masks; they partition the image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMasks {
    pub plot: Vec<bool>,
    pub boundary: Vec<bool>,
    /// First row and column of the plot block and its side length.
    pub plot_origin: (usize, usize),
    pub plot_side: usize,
}

impl PixelMasks {
    pub fn new(cfg: &SceneConfig) -> Result<Self> {
        let mut plot = alloc::vec![false; PIXELS];
        for r in 0..IMAGE_SIZE {
            for c in 0..IMAGE_SIZE {
                let (x, y) = pixel_center(r, c, cfg);
                plot[r * IMAGE_SIZE + c] = inside_plot(x, y, cfg);
            }
        }
        let rows: Vec<usize> = (0..IMAGE_SIZE)
            .filter(|&r| (0..IMAGE_SIZE).any(|c| plot[r * IMAGE_SIZE + c]))
            .collect();
        let cols: Vec<usize> = (0..IMAGE_SIZE)
            .filter(|&c| (0..IMAGE_SIZE).any(|r| plot[r * IMAGE_SIZE + c]))
            .collect();
        let (Some(&r0), Some(&c0)) = (rows.first(), cols.first()) else {
            return Err(Error::InvalidArgument(
                "no pixel centre falls inside the plot".into(),
            ));
        };
        let side = rows.len();
        let rectangular = cols.len() == side
            && rows.windows(2).all(|w| w[1] == w[0] + 1)
            && cols.windows(2).all(|w| w[1] == w[0] + 1)
            && plot.iter().filter(|&&p| p).count() == side * side;
        if !rectangular || side < 2 {
            return Err(Error::InvalidArgument(
                "plot pixels do not form a square block of at least 2×2".into(),
            ));
        }
        let boundary = plot.iter().map(|p| !p).collect();
        Ok(Self {
            plot,
            boundary,
            plot_origin: (r0, c0),
            plot_side: side,
        })
    }

    pub fn plot_count(&self) -> usize {
        self.plot_side * self.plot_side
    }
}

/// Top-view depth map of a boundary condition and, optionally, a building.
pub fn rasterize_scene(
    bc: &BoundaryCondition,
    h: Option<&Heightmap>,
    cfg: &SceneConfig,
) -> Result<DepthMap> {
    let boxes = boundary_boxes(bc, cfg)?;
    let field = match h {
        Some(h) => {
            h.validate(cfg.height_cap)?;
            Some(h.to_field(cfg))
        }
        None => None,
    };
    let mut pixels = Vec::with_capacity(PIXELS);
    for r in 0..IMAGE_SIZE {
        for c in 0..IMAGE_SIZE {
            let (x, y) = pixel_center(r, c, cfg);
            let mut height = 0.0f64;
            if let Some(field) = &field {
                if inside_plot(x, y, cfg) {
                    height = height.max(field.sample(x, y));
                }
            }
            for b in &boxes {
                if b.contains_xy(x, y) {
                    height = height.max(b.max[2]);
                }
            }
            pixels.push((height / cfg.height_cap).clamp(0.0, 1.0) as f32);
        }
    }
    Ok(DepthMap { pixels })
}

/// Plot block of any 16×16 image as a heightfield (pixel × height cap).
pub fn decode_pixels(pixels: &[f32], masks: &PixelMasks, cfg: &SceneConfig) -> HeightField {
    assert_eq!(pixels.len(), PIXELS);
    let (r0, c0) = masks.plot_origin;
    let n = masks.plot_side;
    let mut heights = Vec::with_capacity(n * n);
    for r in r0..r0 + n {
        for c in c0..c0 + n {
            debug_assert!(masks.plot[r * IMAGE_SIZE + c]);
            heights.push(pixels[r * IMAGE_SIZE + c] as f64 * cfg.height_cap);
        }
    }
    let (x_first, y_first) = pixel_center(r0, c0, cfg);
    let (x_last, y_last) = pixel_center(r0 + n - 1, c0 + n - 1, cfg);
    HeightField {
        n,
        heights,
        pitch: cfg.world_extent / IMAGE_SIZE as f64,
        center: [0.5 * (x_first + x_last), 0.5 * (y_first + y_last)],
    }
}

pub fn decode_to_heightfield(d: &DepthMap, cfg: &SceneConfig) -> Result<HeightField> {
    let masks = PixelMasks::new(cfg)?;
    Ok(decode_pixels(&d.pixels, &masks, cfg))
}

/// Samples a heightfield at the 5×5 heightmap grid points, clamped to the cap.
pub fn heightfield_to_heightmap(field: &HeightField, cfg: &SceneConfig) -> Heightmap {
    let pitch = cfg.plot_size / 4.0;
    let mut heights = [[0.0; 5]; 5];
    for (r, row) in heights.iter_mut().enumerate() {
        for (c, h) in row.iter_mut().enumerate() {
            let x = -0.5 * cfg.plot_size + c as f64 * pitch;
            let y = 0.5 * cfg.plot_size - r as f64 * pitch;
            *h = field.sample(x, y).clamp(0.0, cfg.height_cap);
        }
    }
    Heightmap { heights }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Unassigned,
    Train,
    Test,
}

impl Split {
    pub fn flag(self) -> u8 {
        match self {
            Split::Unassigned => 0,
            Split::Train => 1,
            Split::Test => 2,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Split::Unassigned),
            1 => Some(Split::Train),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

/// One (boundary condition, optimal geometry) pair. Numeric fields carry
/// `f32` precision so a stored dataset reproduces them bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub bc_id: u32,
    pub heightmap: [f32; 25],
    pub depth: DepthMap,
    pub avg_radiation: f32,
    pub volume: f32,
    pub split: Split,
}

impl DatasetRecord {
    pub fn new(
        bc: &BoundaryCondition,
        heightmap: &Heightmap,
        perf: &PerfPoint,
        cfg: &SceneConfig,
    ) -> Result<Self> {
        let q = heightmap.quantized();
        let depth = rasterize_scene(bc, Some(&q), cfg)?;
        let mut hm = [0.0f32; 25];
        for (dst, v) in hm.iter_mut().zip(q.values()) {
            *dst = v as f32;
        }
        Ok(Self {
            bc_id: bc.id(cfg.positions_per_side())?,
            heightmap: hm,
            depth,
            avg_radiation: perf.avg_radiation as f32,
            volume: perf.volume as f32,
            split: Split::Unassigned,
        })
    }

    pub fn source_heightmap(&self) -> Heightmap {
        let mut heights = [[0.0; 5]; 5];
        for (i, v) in self.heightmap.iter().enumerate() {
            heights[i / 5][i % 5] = *v as f64;
        }
        Heightmap { heights }
    }

    pub fn perf(&self, vol_target: f64) -> PerfPoint {
        PerfPoint::new(self.avg_radiation as f64, self.volume as f64, vol_target)
    }

    pub fn boundary_condition(&self, cfg: &SceneConfig) -> Result<BoundaryCondition> {
        BoundaryCondition::from_id(self.bc_id, cfg.positions_per_side())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub world_extent: f32,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn new(world_extent: f32) -> Self {
        Self {
            world_extent,
            records: Vec::new(),
        }
    }

    pub fn bc_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.bc_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &DatasetRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_bc_ids(&self, split: Split) -> Vec<u32> {
        let mut ids: Vec<u32> = self.split_records(split).map(|r| r.bc_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn records_by_bc(&self) -> BTreeMap<u32, Vec<&DatasetRecord>> {
        let mut map: BTreeMap<u32, Vec<&DatasetRecord>> = BTreeMap::new();
        for r in &self.records {
            map.entry(r.bc_id).or_default().push(r);
        }
        map
    }
}

/// Assigns whole boundary conditions to train or test. Shuffles the sorted bc
/// ids with the seed and sends the first `round(fraction · n)` to train,
/// keeping at least one on each side when there are two or more.
pub fn split_dataset(ds: &mut Dataset, fraction: f64, seed: u64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(
            "split fraction must lie in [0, 1]".into(),
        ));
    }
    let mut ids = ds.bc_ids();
    let n = ids.len();
    let mut rng = crate::seeded_rng(seed, 0x5917);
    ids.shuffle(&mut rng);
    let mut n_train = math::round(fraction * n as f64) as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    let train: BTreeMap<u32, bool> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i < n_train))
        .collect();
    for r in &mut ds.records {
        r.split = if train[&r.bc_id] {
            Split::Train
        } else {
            Split::Test
        };
    }
    Ok(())
}
