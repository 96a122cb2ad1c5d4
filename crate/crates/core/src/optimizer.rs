//! Scalarized objective and the simulated-annealing search over heightmaps.

use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::pareto::{self, FrontPoint};
use crate::scene::{
    BoundaryCondition, Heightmap, Scene, SceneConfig, HEIGHTMAP_CELLS, HEIGHTMAP_SIZE,
};
use crate::solar::{self, SkyModel};
use crate::{Error, Result};

/// Weight of the squared volume deviation in the scalar objective.
pub const VOLUME_PENALTY: f64 = 1e-3;

/// The two raw objectives of a geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfPoint {
    pub avg_radiation: f64,
    /// m³
    pub volume: f64,
    /// `(target − volume)²`, m⁶
    pub vol_dev_sq: f64,
}

impl PerfPoint {
    pub fn new(avg_radiation: f64, volume: f64, vol_target: f64) -> Self {
        let dev = vol_target - volume;
        Self {
            avg_radiation,
            volume,
            vol_dev_sq: dev * dev,
        }
    }

    /// Both objectives in minimization form.
    pub fn objectives(&self) -> [f64; 2] {
        [-self.avg_radiation, self.vol_dev_sq]
    }
}

/// `J = −avg_radiation + vol_dev_sq · 10⁻³`
pub fn scalarize(p: &PerfPoint) -> f64 {
    -p.avg_radiation + p.vol_dev_sq * VOLUME_PENALTY
}

/// Evaluates heightmaps against one sky and scene configuration.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub scene: SceneConfig,
    pub sky: SkyModel,
    pub vol_target: f64,
}

impl Evaluator {
    pub fn new(scene: SceneConfig, sky: SkyModel, vol_target: f64) -> Self {
        Self {
            scene,
            sky,
            vol_target,
        }
    }

    /// Radiation from the mesh at the configured resolution, volume from the
    /// exact bilinear integral of the heightmap.
    pub fn evaluate(&self, h: &Heightmap, bc: &BoundaryCondition) -> Result<PerfPoint> {
        let scene = Scene::from_heightmap(h, bc, &self.scene)?;
        let radiation = solar::avg_radiation(&scene, &self.sky)?;
        Ok(PerfPoint::new(
            radiation,
            h.volume(&self.scene),
            self.vol_target,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaConfig {
    pub steps: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Half-width of the uniform height perturbation, m.
    pub delta: f64,
    /// m³
    pub vol_target: f64,
    /// Geometries kept per boundary condition.
    pub select_k: usize,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            t_start: 1.0,
            t_end: 1e-3,
            delta: 1.0,
            vol_target: 100.0,
            select_k: 10,
        }
    }
}

impl SaConfig {
    /// Geometric cooling factor taking `t_start` to `t_end` over `steps`.
    pub fn cooling_factor(&self) -> f64 {
        math::powf(self.t_end / self.t_start, 1.0 / self.steps as f64)
    }

    pub fn temperature(&self, step: usize) -> f64 {
        self.t_start * math::powf(self.cooling_factor(), step as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaStep {
    pub index: usize,
    pub heightmap: Heightmap,
    pub perf: PerfPoint,
    pub j: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaTrace {
    pub config: SaConfig,
    pub initial: Heightmap,
    pub initial_perf: PerfPoint,
    /// One entry per proposed candidate, accepted or not.
    pub steps: Vec<SaStep>,
}

impl SaTrace {
    pub fn initial_j(&self) -> f64 {
        scalarize(&self.initial_perf)
    }

    /// Best `J` seen up to and including each step, starting from the initial state.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = self.initial_j();
        self.steps
            .iter()
            .map(|s| {
                best = best.min(s.j);
                best
            })
            .collect()
    }

    /// Lowest-`J` geometry, including the starting point.
    pub fn best(&self) -> (Heightmap, PerfPoint) {
        let mut out = (self.initial, self.initial_perf);
        let mut best = self.initial_j();
        for s in &self.steps {
            if s.j < best {
                best = s.j;
                out = (s.heightmap, s.perf);
            }
        }
        out
    }

    pub fn front_points(&self) -> Vec<FrontPoint> {
        self.steps
            .iter()
            .map(|s| FrontPoint::new(s.perf.objectives(), s.index))
            .collect()
    }

    /// The `k` Pareto-optimal steps kept for the dataset.
    pub fn select(&self, k: usize) -> Result<Vec<&SaStep>> {
        let picked = pareto::select_k(&self.front_points(), k)?;
        Ok(picked.iter().map(|p| &self.steps[p.payload]).collect())
    }
}

/// Perturbs one uniformly chosen cell by `U[−delta, delta]`, clamped to `[0, cap]`.
pub fn propose_neighbor(h: &Heightmap, delta: f64, cap: f64, rng: &mut crate::Rng) -> Heightmap {
    let mut out = *h;
    let cell = rng.random_range(0..HEIGHTMAP_CELLS);
    let step = rng.random_range(-delta..=delta);
    let v = &mut out.heights[cell / HEIGHTMAP_SIZE][cell % HEIGHTMAP_SIZE];
    *v = (*v + step).clamp(0.0, cap);
    out
}

/// Metropolis annealing from the flat roof that meets the target volume.
/// Every candidate is recorded with both raw objectives.
pub fn sa_optimize(
    bc: &BoundaryCondition,
    cfg: &SaConfig,
    eval: &Evaluator,
    rng: &mut crate::Rng,
) -> Result<SaTrace> {
    if cfg.steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if !(cfg.t_start > 0.0 && cfg.t_end > 0.0 && cfg.delta > 0.0) {
        return Err(Error::InvalidArgument(
            "temperatures and delta must be positive".into(),
        ));
    }
    let cap = eval.scene.height_cap;
    let initial = Heightmap::flat((cfg.vol_target / eval.scene.plot_area()).clamp(0.0, cap));
    let initial_perf = eval.evaluate(&initial, bc)?;
    let alpha = cfg.cooling_factor();

    let mut current = initial;
    let mut current_j = scalarize(&initial_perf);
    let mut temperature = cfg.t_start;
    let mut steps = Vec::with_capacity(cfg.steps);
    for index in 0..cfg.steps {
        let candidate = propose_neighbor(&current, cfg.delta, cap, rng);
        let perf = match eval.evaluate(&candidate, bc) {
            Ok(p) => p,
            // An all-zero candidate has no surface; it receives nothing.
            Err(Error::DegenerateGeometry) => {
                PerfPoint::new(0.0, candidate.volume(&eval.scene), cfg.vol_target)
            }
            Err(e) => return Err(e),
        };
        let j = scalarize(&perf);
        let delta_j = j - current_j;
        let accepted = delta_j <= 0.0 || rng.random::<f64>() < math::exp(-delta_j / temperature);
        if accepted {
            current = candidate;
            current_j = j;
        }
        steps.push(SaStep {
            index,
            heightmap: candidate,
            perf,
            j,
            accepted,
        });
        temperature *= alpha;
    }
    Ok(SaTrace {
        config: cfg.clone(),
        initial,
        initial_perf,
        steps,
    })
}
