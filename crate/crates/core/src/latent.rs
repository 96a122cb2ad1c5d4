//! Generating geometries for a boundary condition by gradient descent over the
//! decoder's latent input.
//!
//! The objective compares only the boundary pixels of the decoded image with
//! the bare boundary-condition depth map (sigmoid cross-entropy). An optional
//! guidance term pulls the plot pixels towards a designer's heightmap.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::codec::{rasterize_scene, DepthMap, PixelMasks, PIXELS};
use crate::math::{self, Real};
use crate::nn::{AdamConfig, AdamState, Tensor, VaeModel, LATENT_DIM};
use crate::scene::{BoundaryCondition, Heightmap, SceneConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentSearchConfig {
    pub lr: f64,
    pub iterations: usize,
    pub restarts: usize,
    /// Stop once the best loss has improved by less than `tolerance` over
    /// this many consecutive iterations.
    pub patience: usize,
    pub tolerance: f64,
}

impl Default for LatentSearchConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            iterations: 400,
            restarts: 100,
            patience: 50,
            tolerance: 1e-6,
        }
    }
}

impl LatentSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.iterations == 0 {
            return Err(Error::InvalidArgument(
                "latent search needs lr > 0 and at least one iteration".into(),
            ));
        }
        Ok(())
    }
}

/// Pull towards a designer's geometry on the plot pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Guidance {
    /// Rasterized user heightmap (bare building, no obstructions).
    pub image: DepthMap,
    pub lambda: f64,
}

impl Guidance {
    pub fn new(user: &Heightmap, lambda: f64, cfg: &SceneConfig) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(
                "guidance weight must be a finite value ≥ 0".into(),
            ));
        }
        Ok(Self {
            image: rasterize_scene(&BoundaryCondition::EMPTY, Some(user), cfg)?,
            lambda,
        })
    }
}

/// What a latent search minimizes for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentObjective {
    pub bc: BoundaryCondition,
    /// Bare boundary-condition depth map.
    pub target: DepthMap,
    pub masks: PixelMasks,
    pub guidance: Option<Guidance>,
}

impl LatentObjective {
    pub fn new(
        bc: &BoundaryCondition,
        guidance: Option<Guidance>,
        cfg: &SceneConfig,
    ) -> Result<Self> {
        Ok(Self {
            bc: *bc,
            target: rasterize_scene(bc, None, cfg)?,
            masks: PixelMasks::new(cfg)?,
            guidance,
        })
    }

    /// Boundary term only.
    pub fn boundary_loss<T: Real>(&self, logits: &[T]) -> f64 {
        boundary_loss(&self.target, logits, &self.masks)
    }

    /// Boundary term plus the guidance term.
    pub fn loss<T: Real>(&self, logits: &[T]) -> f64 {
        let mut l = self.boundary_loss(logits);
        if let Some(g) = &self.guidance {
            l += guidance_term(g, logits, &self.masks);
        }
        l
    }

    /// `∂loss/∂logit` for every pixel.
    pub fn gradient<T: Real>(&self, logits: &[T]) -> Vec<T> {
        assert_eq!(logits.len(), PIXELS);
        let mut g = alloc::vec![T::ZERO; PIXELS];
        for i in 0..PIXELS {
            let s = logits[i].sigmoid();
            if self.masks.boundary[i] {
                g[i] = s - T::from_f64(self.target.pixels[i] as f64);
            } else if let Some(gd) = &self.guidance {
                let two_lambda = T::from_f64(2.0 * gd.lambda);
                g[i] = two_lambda * (s - T::from_f64(gd.image.pixels[i] as f64)) * s * (T::ONE - s);
            }
        }
        g
    }
}

/// Σ over boundary pixels of the sigmoid cross-entropy against the target.
pub fn boundary_loss<T: Real>(target: &DepthMap, logits: &[T], masks: &PixelMasks) -> f64 {
    assert_eq!(logits.len(), PIXELS, "boundary loss expects a 16×16 image");
    let mut l = 0.0;
    for i in 0..PIXELS {
        if masks.boundary[i] {
            l += math::sigmoid_cross_entropy(logits[i].to_f64(), target.pixels[i] as f64);
        }
    }
    l
}

fn guidance_term<T: Real>(g: &Guidance, logits: &[T], masks: &PixelMasks) -> f64 {
    let mut l = 0.0;
    for i in 0..PIXELS {
        if masks.plot[i] {
            let d = logits[i].to_f64().sigmoid() - g.image.pixels[i] as f64;
            l += d * d;
        }
    }
    g.lambda * l
}

/// `boundary_loss + λ · Σ_plot (σ(logit) − user)²`
pub fn guided_loss<T: Real>(
    target: &DepthMap,
    guidance: &Guidance,
    logits: &[T],
    masks: &PixelMasks,
) -> f64 {
    boundary_loss(target, logits, masks) + guidance_term(guidance, logits, masks)
}

/// Objective value and `∂/∂z` through the decoder (no parameter gradients).
pub fn loss_and_latent_grad<T: Real>(
    model: &VaeModel<T>,
    objective: &LatentObjective,
    z: &[T],
) -> Result<(f64, Vec<T>)> {
    let zt = Tensor {
        shape: alloc::vec![1, LATENT_DIM],
        data: z.to_vec(),
    };
    let tr = model.decode_trace(&zt)?;
    let loss = objective.loss(&tr.logits.data);
    let dl = Tensor {
        shape: tr.logits.shape.clone(),
        data: objective.gradient(&tr.logits.data),
    };
    let dz = model.decoder_backward(&tr, &dl, None);
    Ok((loss, dz.data))
}

/// Outcome of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRun {
    pub restart: usize,
    /// Best latent vector found.
    pub z: Vec<f32>,
    /// Objective at `z` (boundary loss plus any guidance term).
    pub loss: f64,
    /// Boundary loss alone at `z`.
    pub boundary_loss: f64,
    /// Objective evaluations performed.
    pub iterations: usize,
    /// Best objective after each evaluation.
    pub best_trace: Vec<f64>,
}

/// Starting point of a restart: `z₀ ~ N(0, I)` from its own stream.
pub fn initial_latent(seed: u64, restart: usize) -> Vec<f32> {
    let mut rng = crate::seeded_rng(seed, restart as u64);
    crate::nn::standard_normal::<f32>(&[1, LATENT_DIM], &mut rng).data
}

/// Adam on `z` from the restart's random start, keeping the best point seen.
/// Independent of every other restart.
pub fn search_restart(
    model: &VaeModel<f32>,
    objective: &LatentObjective,
    cfg: &LatentSearchConfig,
    seed: u64,
    restart: usize,
) -> Result<LatentRun> {
    cfg.validate()?;
    let mut z = initial_latent(seed, restart);
    let mut adam = AdamState::<f32>::new(&[LATENT_DIM], AdamConfig::default());
    let mut best_z = z.clone();
    let mut best = f64::INFINITY;
    let mut anchor = f64::INFINITY;
    let mut anchor_iter = 0;
    let mut best_trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let (loss, grad) = loss_and_latent_grad(model, objective, &z)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("latent objective"));
        }
        if loss < best {
            best = loss;
            best_z.copy_from_slice(&z);
        }
        best_trace.push(best);
        if best < anchor - cfg.tolerance {
            anchor = best;
            anchor_iter = it;
        } else if it - anchor_iter >= cfg.patience {
            break;
        }
        adam.update(&mut [&mut z], &[&grad], cfg.lr);
    }
    let logits = model.decode(&Tensor {
        shape: alloc::vec![1, LATENT_DIM],
        data: best_z.clone(),
    })?;
    Ok(LatentRun {
        restart,
        boundary_loss: objective.boundary_loss(&logits.data),
        z: best_z,
        loss: best,
        iterations: best_trace.len(),
        best_trace,
    })
}

/// Sigmoid image of the decoder at `z`.
pub fn decode_depth(model: &VaeModel<f32>, z: &[f32]) -> Result<DepthMap> {
    if z.len() != LATENT_DIM {
        return Err(Error::ShapeMismatch(alloc::format!(
            "latent vector must have {LATENT_DIM} entries"
        )));
    }
    let logits = model.decode(&Tensor {
        shape: alloc::vec![1, LATENT_DIM],
        data: z.to_vec(),
    })?;
    Ok(DepthMap {
        pixels: logits.data.iter().map(|l| l.sigmoid()).collect(),
    })
}

/// All restarts of one query, in restart order.
pub fn infer_latent(
    model: &VaeModel<f32>,
    objective: &LatentObjective,
    cfg: &LatentSearchConfig,
    seed: u64,
) -> Result<Vec<LatentRun>> {
    (0..cfg.restarts)
        .map(|r| search_restart(model, objective, cfg, seed, r))
        .collect()
}
