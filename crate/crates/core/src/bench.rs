//! Evaluation of depth maps through one shared path, grouped results, and the
//! per-boundary-condition statistics and hypervolumes compared by the bench.
//!
//! Every geometry, whether a dataset record, a reconstruction, an inference or
//! a baseline, is rasterized to 16×16, decoded back to a heightfield and
//! evaluated from that heightfield, so all groups share the same resampling.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{decode_to_heightfield, rasterize_scene, DepthMap};
use crate::math::{self, Real};
use crate::nn::{reparameterize, Tensor, VaeModel, LATENT_DIM};
use crate::optimizer::{Evaluator, PerfPoint};
use crate::pareto::{self, FrontPoint};
use crate::scene::{
    baseline_flat_roof, baseline_random, baseline_tilted_roof, BoundaryCondition, Heightmap,
    RandomKind, Scene,
};
use crate::{Error, Result};

/// Tilt of the south-facing baseline roof, degrees.
pub const TILTED_BASELINE_DEG: f64 = 42.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthEval {
    pub perf: PerfPoint,
    /// The decoded geometry had no surface; radiation is reported as 0.
    pub degenerate: bool,
}

/// Decodes the plot heightfield, meshes it at its own resolution and
/// evaluates it against the boundary condition.
pub fn evaluate_depthmap(
    d: &DepthMap,
    bc: &BoundaryCondition,
    eval: &Evaluator,
) -> Result<DepthEval> {
    let field = decode_to_heightfield(d, &eval.scene)?;
    let volume = field.volume();
    let scene = Scene::from_field(field, bc, &eval.scene)?;
    let (radiation, degenerate) = match crate::solar::avg_radiation(&scene, &eval.sky) {
        Ok(r) => (r, false),
        Err(Error::DegenerateGeometry) => (0.0, true),
        Err(e) => return Err(e),
    };
    Ok(DepthEval {
        perf: PerfPoint::new(radiation, volume, eval.vol_target),
        degenerate,
    })
}

/// Rasterizes a heightmap with its boundary condition and evaluates it.
pub fn evaluate_heightmap(
    h: &Heightmap,
    bc: &BoundaryCondition,
    eval: &Evaluator,
) -> Result<(DepthMap, DepthEval)> {
    let d = rasterize_scene(bc, Some(&h.quantized()), &eval.scene)?;
    let e = evaluate_depthmap(&d, bc, eval)?;
    Ok((d, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupLabel {
    TestSet,
    Reconstruction,
    Inference,
    BaselineFlat,
    BaselineTilted,
    RandomUniform,
    RandomGaussian,
}

impl GroupLabel {
    pub const ALL: [GroupLabel; 7] = [
        GroupLabel::TestSet,
        GroupLabel::Reconstruction,
        GroupLabel::Inference,
        GroupLabel::BaselineFlat,
        GroupLabel::BaselineTilted,
        GroupLabel::RandomUniform,
        GroupLabel::RandomGaussian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupLabel::TestSet => "test_set",
            GroupLabel::Reconstruction => "reconstruction",
            GroupLabel::Inference => "inference",
            GroupLabel::BaselineFlat => "baseline_flat",
            GroupLabel::BaselineTilted => "baseline_tilted",
            GroupLabel::RandomUniform => "random_uniform",
            GroupLabel::RandomGaussian => "random_gaussian",
        }
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub depth: DepthMap,
    pub eval: DepthEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGroup {
    pub label: GroupLabel,
    pub bc_id: u32,
    pub samples: Vec<EvalSample>,
}

impl EvalGroup {
    pub fn front_points(&self) -> Vec<FrontPoint> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| FrontPoint::new(s.eval.perf.objectives(), i))
            .collect()
    }

    pub fn stats(&self) -> GroupStats {
        GroupStats::of(self.samples.iter().map(|s| &s.eval))
    }
}

/// Mean and population standard deviation of both objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean_radiation: f64,
    pub std_radiation: f64,
    pub mean_vol_dev_sq: f64,
    pub std_vol_dev_sq: f64,
    pub degenerate: usize,
}

impl GroupStats {
    pub fn of<'a>(evals: impl Iterator<Item = &'a DepthEval>) -> Self {
        let evals: Vec<&DepthEval> = evals.collect();
        let rad: Vec<f64> = evals.iter().map(|e| e.perf.avg_radiation).collect();
        let vdq: Vec<f64> = evals.iter().map(|e| e.perf.vol_dev_sq).collect();
        let (mean_radiation, std_radiation) = mean_std(&rad);
        let (mean_vol_dev_sq, std_vol_dev_sq) = mean_std(&vdq);
        Self {
            n: evals.len(),
            mean_radiation,
            std_radiation,
            mean_vol_dev_sq,
            std_vol_dev_sq,
            degenerate: evals.iter().filter(|e| e.degenerate).count(),
        }
    }
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = math::ordered_sum(v.iter().copied()) / n;
    let var = math::ordered_sum(v.iter().map(|x| (x - mean) * (x - mean))) / n;
    (mean, math::sqrt(var))
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Both means of `a` lie within `k` pooled standard deviations of those of `b`,
/// where the pooled deviation is `√((σa² + σb²)/2)` per axis.
pub fn means_within_pooled_std(a: &GroupStats, b: &GroupStats, k: f64) -> bool {
    let pooled = |sa: f64, sb: f64| math::sqrt(0.5 * (sa * sa + sb * sb));
    let rad_ok =
        (a.mean_radiation - b.mean_radiation).abs() <= k * pooled(a.std_radiation, b.std_radiation);
    let vdq_ok = (a.mean_vol_dev_sq - b.mean_vol_dev_sq).abs()
        <= k * pooled(a.std_vol_dev_sq, b.std_vol_dev_sq);
    rad_ok && vdq_ok
}

/// `n` sigmoid images decoded from reparameterized samples of one encoded image.
pub fn reconstruction_samples(
    model: &VaeModel<f32>,
    image: &DepthMap,
    n: usize,
    rng: &mut crate::Rng,
) -> Result<Vec<DepthMap>> {
    let x = Tensor::from_vec(&[1, 16, 16, 1], image.pixels.clone())?;
    let (mu, logvar) = model.encode(&x)?;
    let repeat = |t: &Tensor<f32>| Tensor {
        shape: alloc::vec![n, LATENT_DIM],
        data: t.data.repeat(n),
    };
    let z = reparameterize(&repeat(&mu), &repeat(&logvar), rng);
    let logits = model.decode(&z)?;
    Ok(logits
        .data
        .chunks_exact(256)
        .map(|c| DepthMap {
            pixels: c.iter().map(|l| l.sigmoid()).collect(),
        })
        .collect())
}

/// The four reference generators, in a fixed order: flat roof at the target
/// volume, 42° south-tilted roof, then `n_random` uniform and `n_random`
/// Gaussian heightmaps.
pub fn baseline_heightmaps(
    eval: &Evaluator,
    n_random: usize,
    rng: &mut crate::Rng,
) -> Result<Vec<(GroupLabel, Vec<Heightmap>)>> {
    let cfg = &eval.scene;
    let flat = baseline_flat_roof(eval.vol_target, false, cfg)?;
    let tilted = baseline_tilted_roof(TILTED_BASELINE_DEG, cfg)?;
    let uniform = (0..n_random)
        .map(|_| baseline_random(RandomKind::Uniform, rng, cfg))
        .collect();
    let gaussian = (0..n_random)
        .map(|_| baseline_random(RandomKind::Gaussian, rng, cfg))
        .collect();
    Ok(alloc::vec![
        (GroupLabel::BaselineFlat, alloc::vec![flat]),
        (GroupLabel::BaselineTilted, alloc::vec![tilted]),
        (GroupLabel::RandomUniform, uniform),
        (GroupLabel::RandomGaussian, gaussian),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypervolumeRow {
    pub bc_id: u32,
    pub reference: [f64; 2],
    pub hv_test: f64,
    pub hv_reconstruction: f64,
    pub hv_inference: f64,
}

/// Hypervolumes of the test, reconstruction and inference fronts of one
/// boundary condition under their common reference point.
pub fn hypervolume_row(
    test: &EvalGroup,
    recon: &EvalGroup,
    infer: &EvalGroup,
) -> Result<HypervolumeRow> {
    if test.bc_id != recon.bc_id || test.bc_id != infer.bc_id {
        return Err(Error::InvalidArgument(
            "hypervolume groups must share one boundary condition".into(),
        ));
    }
    let sets = [
        test.front_points(),
        recon.front_points(),
        infer.front_points(),
    ];
    if sets.iter().any(|s| s.is_empty()) {
        return Err(Error::InsufficientPoints {
            needed: 1,
            available: 0,
        });
    }
    let refs: Vec<&[FrontPoint]> = sets.iter().map(|s| s.as_slice()).collect();
    let reference = pareto::common_reference_point(&refs)?;
    Ok(HypervolumeRow {
        bc_id: test.bc_id,
        reference,
        hv_test: pareto::hypervolume_2d(&sets[0], reference),
        hv_reconstruction: pareto::hypervolume_2d(&sets[1], reference),
        hv_inference: pareto::hypervolume_2d(&sets[2], reference),
    })
}
