//! Pipeline stages over many boundary conditions: annealing, training,
//! latent inference and the benchmark. Work is spread with rayon; results
//! are always collected in a fixed order so outputs do not depend on the
//! thread count.

use std::time::Instant;

use heliogen_core::bench::{
    baseline_heightmaps, evaluate_depthmap, evaluate_heightmap, hypervolume_row,
    reconstruction_samples, DepthEval, EvalGroup, EvalSample, GroupLabel, HypervolumeRow,
};
use heliogen_core::codec::{split_dataset, Dataset, DatasetRecord, DepthMap, Split};
use heliogen_core::latent::{
    boundary_loss, decode_depth, search_restart, LatentObjective, LatentSearchConfig,
};
use heliogen_core::nn::{standard_normal, train, EpochStats, Tensor, TrainHistory, VaeModel, LATENT_DIM};
use heliogen_core::optimizer::{sa_optimize, Evaluator, SaTrace};
use heliogen_core::scene::{enumerate_boundary_conditions, BoundaryCondition};
use heliogen_core::solar::SkyModel;
use heliogen_core::seeded_rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::format::{Checkpoint, CheckpointMeta};

// RNG streams. Per-item streams put the item index in the low bits.
const SUBSET_STREAM: u64 = 0xB0 << 40;
const SA_STREAM: u64 = 0x5A << 40;
const RECON_STREAM: u64 = 0xEC << 40;
const BASELINE_STREAM: u64 = 0xBA << 40;
const RANDOM_LATENT_STREAM: u64 = 0x2A << 40;

/// Runs `f` on a rayon pool capped at `threads` workers (all cores if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn evaluator(cfg: &Config) -> Result<Evaluator> {
    let sky = SkyModel::new(cfg.sky.clone())?;
    Ok(Evaluator::new(cfg.scene.clone(), sky, cfg.sa.vol_target))
}

/// All boundary conditions, or a seeded subset of `dataset.bcs` of them in id order.
pub fn select_bcs(cfg: &Config) -> Result<Vec<BoundaryCondition>> {
    let all = enumerate_boundary_conditions(cfg.scene.positions_per_side());
    match cfg.dataset.bcs {
        None => Ok(all),
        Some(n) if n == 0 || n > all.len() => Err(Error::Usage(format!(
            "--bcs must lie in 1..={}",
            all.len()
        ))),
        Some(n) => {
            let mut picked = all;
            picked.shuffle(&mut seeded_rng(cfg.seed, SUBSET_STREAM));
            picked.truncate(n);
            let p = cfg.scene.positions_per_side();
            picked.sort_by_key(|bc| bc.id(p).expect("enumerated"));
            Ok(picked)
        }
    }
}

pub struct AnnealRun {
    pub bc_id: u32,
    pub trace: SaTrace,
    pub seconds: f64,
}

/// Anneals one boundary condition with its own RNG stream.
pub fn anneal(bc: &BoundaryCondition, cfg: &Config, eval: &Evaluator) -> Result<AnnealRun> {
    let bc_id = bc.id(cfg.scene.positions_per_side())?;
    let mut rng = seeded_rng(cfg.seed, SA_STREAM | bc_id as u64);
    let start = Instant::now();
    let trace = sa_optimize(bc, &cfg.sa, eval, &mut rng)?;
    let seconds = start.elapsed().as_secs_f64();
    log::debug!("bc {bc_id}: {} steps in {seconds:.2} s", cfg.sa.steps);
    Ok(AnnealRun {
        bc_id,
        trace,
        seconds,
    })
}

pub struct GeneratedDataset {
    pub dataset: Dataset,
    pub runs: Vec<AnnealRun>,
}

/// Anneals every selected boundary condition, keeps `select_k` Pareto-optimal
/// geometries of each, and splits the result by boundary condition.
pub fn generate_dataset(cfg: &Config, eval: &Evaluator) -> Result<GeneratedDataset> {
    let bcs = select_bcs(cfg)?;
    log::info!("annealing {} boundary conditions, {} steps each", bcs.len(), cfg.sa.steps);
    let runs: Vec<AnnealRun> = bcs
        .par_iter()
        .map(|bc| anneal(bc, cfg, eval))
        .collect::<Result<_>>()?;
    let mut dataset = Dataset::new(cfg.scene.world_extent as f32);
    for (bc, run) in bcs.iter().zip(&runs) {
        for step in run.trace.select(cfg.sa.select_k)? {
            dataset.records.push(DatasetRecord::new(bc, &step.heightmap, &step.perf, &cfg.scene)?);
        }
    }
    split_dataset(&mut dataset, cfg.dataset.train_fraction, cfg.seed)?;
    Ok(GeneratedDataset { dataset, runs })
}

pub fn config_hash(cfg: &heliogen_core::nn::TrainConfig) -> u32 {
    crc32fast::hash(serde_json::to_string(cfg).expect("serializes").as_bytes())
}

/// Trains with `cfg.train` under the global seed. `on_epoch` also receives
/// the checkpoint of that epoch.
pub fn train_checkpoint(
    ds: &Dataset,
    cfg: &Config,
    mut on_epoch: impl FnMut(&EpochStats, &Checkpoint),
) -> Result<(Checkpoint, TrainHistory)> {
    let tcfg = heliogen_core::nn::TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let hash = config_hash(&tcfg);
    let meta = |s: &EpochStats| CheckpointMeta {
        epoch: s.epoch as u32,
        seed: tcfg.seed,
        config_hash: hash,
        train_loss: s.train_loss,
        val_loss: s.val_loss,
    };
    let (model, history) = train(ds, &tcfg, |s, m| {
        on_epoch(
            s,
            &Checkpoint {
                meta: meta(s),
                model: m.clone(),
            },
        )
    })?;
    let last = history
        .last()
        .copied()
        .ok_or_else(|| Error::Usage("training needs at least one epoch".into()))?;
    Ok((
        Checkpoint {
            meta: meta(&last),
            model,
        },
        history,
    ))
}

/// One latent-search result, decoded and evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub restart: usize,
    pub z: Vec<f32>,
    pub depth: DepthMap,
    pub loss: f64,
    pub boundary_loss: f64,
    pub iterations: usize,
    pub eval: DepthEval,
}

/// Runs every restart (in parallel), then decodes and evaluates each result.
/// Output is in restart order.
pub fn infer_candidates(
    model: &VaeModel<f32>,
    objective: &LatentObjective,
    latent: &LatentSearchConfig,
    seed: u64,
    eval: &Evaluator,
) -> Result<Vec<Candidate>> {
    (0..latent.restarts)
        .into_par_iter()
        .map(|r| {
            let run = search_restart(model, objective, latent, seed, r)?;
            let depth = decode_depth(model, &run.z)?;
            let e = evaluate_depthmap(&depth, &objective.bc, eval)?;
            Ok(Candidate {
                restart: r,
                z: run.z,
                depth,
                loss: run.loss,
                boundary_loss: run.boundary_loss,
                iterations: run.iterations,
                eval: e,
            })
        })
        .collect()
}

/// Boundary losses of images decoded from `n` prior samples `z ~ N(0, I)`.
pub fn random_latent_boundary_losses(
    model: &VaeModel<f32>,
    objective: &LatentObjective,
    n: usize,
    seed: u64,
    bc_id: u32,
) -> Result<Vec<f64>> {
    let mut rng = seeded_rng(seed, RANDOM_LATENT_STREAM | bc_id as u64);
    let z: Tensor<f32> = standard_normal(&[n, LATENT_DIM], &mut rng);
    let logits = model.decode(&z)?;
    Ok(logits
        .data
        .chunks_exact(256)
        .map(|l| boundary_loss(&objective.target, l, &objective.masks))
        .collect())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundaryLossRow {
    pub bc_id: u32,
    pub source: &'static str,
    pub index: usize,
    pub boundary_loss: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TimingRow {
    pub bc_id: u32,
    pub sa_seconds: f64,
    pub inference_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub sa_steps: usize,
    pub restarts: usize,
    pub mean_sa_seconds: f64,
    pub mean_inference_seconds: f64,
    pub ratio: f64,
}

/// Wall-clock comparison on one thread: a full annealing run against a full
/// latent search (every restart, decoded to a depth map) per boundary condition.
pub fn timing_report(
    model: &VaeModel<f32>,
    bc_ids: &[u32],
    cfg: &Config,
    eval: &Evaluator,
) -> Result<TimingReport> {
    let p = cfg.scene.positions_per_side();
    let mut rows = Vec::with_capacity(bc_ids.len());
    for &id in bc_ids {
        let bc = BoundaryCondition::from_id(id, p)?;
        let sa_seconds = anneal(&bc, cfg, eval)?.seconds;
        let objective = LatentObjective::new(&bc, None, &cfg.scene)?;
        let start = Instant::now();
        for r in 0..cfg.latent.restarts {
            let run = search_restart(model, &objective, &cfg.latent, cfg.seed, r)?;
            std::hint::black_box(decode_depth(model, &run.z)?);
        }
        let inference_seconds = start.elapsed().as_secs_f64();
        log::info!("timing bc {id}: annealing {sa_seconds:.3} s, inference {inference_seconds:.3} s");
        rows.push(TimingRow {
            bc_id: id,
            sa_seconds,
            inference_seconds,
        });
    }
    let n = rows.len().max(1) as f64;
    let mean_sa_seconds = rows.iter().map(|r| r.sa_seconds).sum::<f64>() / n;
    let mean_inference_seconds = rows.iter().map(|r| r.inference_seconds).sum::<f64>() / n;
    Ok(TimingReport {
        rows,
        sa_steps: cfg.sa.steps,
        restarts: cfg.latent.restarts,
        mean_sa_seconds,
        mean_inference_seconds,
        ratio: mean_sa_seconds / mean_inference_seconds,
    })
}

pub struct EvaluationReport {
    /// Per test boundary condition, every group label in [`GroupLabel::ALL`] order.
    pub groups: Vec<EvalGroup>,
    pub hypervolumes: Vec<HypervolumeRow>,
    pub boundary_losses: Vec<BoundaryLossRow>,
    pub timings: Option<TimingReport>,
}

impl EvaluationReport {
    pub fn group(&self, bc_id: u32, label: GroupLabel) -> Option<&EvalGroup> {
        self.groups
            .iter()
            .find(|g| g.bc_id == bc_id && g.label == label)
    }

    pub fn bc_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.groups.iter().map(|g| g.bc_id).collect();
        ids.dedup();
        ids
    }
}

fn evaluate_depths(depths: Vec<DepthMap>, bc: &BoundaryCondition, eval: &Evaluator) -> Result<Vec<EvalSample>> {
    depths
        .into_par_iter()
        .map(|depth| {
            let e = evaluate_depthmap(&depth, bc, eval)?;
            Ok(EvalSample { depth, eval: e })
        })
        .collect()
}

struct BcEvaluation {
    groups: Vec<EvalGroup>,
    hypervolume: HypervolumeRow,
    boundary_losses: Vec<BoundaryLossRow>,
}

fn evaluate_bc(
    model: &VaeModel<f32>,
    records: &[&DatasetRecord],
    bc_id: u32,
    cfg: &Config,
    eval: &Evaluator,
) -> Result<BcEvaluation> {
    let bc = BoundaryCondition::from_id(bc_id, cfg.scene.positions_per_side())?;
    let group = |label, samples| EvalGroup {
        label,
        bc_id,
        samples,
    };

    let test = evaluate_depths(records.iter().map(|r| r.depth.clone()).collect(), &bc, eval)?;

    let mut recon_depths = Vec::new();
    for (k, r) in records.iter().enumerate() {
        let mut rng = seeded_rng(cfg.seed, RECON_STREAM | (bc_id as u64) << 16 | k as u64);
        recon_depths.extend(reconstruction_samples(model, &r.depth, cfg.evaluate.recon_samples, &mut rng)?);
    }
    let recon = evaluate_depths(recon_depths, &bc, eval)?;

    let objective = LatentObjective::new(&bc, None, &cfg.scene)?;
    let candidates = infer_candidates(model, &objective, &cfg.latent, cfg.seed, eval)?;
    let mut boundary_losses: Vec<BoundaryLossRow> = candidates
        .iter()
        .map(|c| BoundaryLossRow {
            bc_id,
            source: "inference",
            index: c.restart,
            boundary_loss: c.boundary_loss,
        })
        .collect();
    let random = random_latent_boundary_losses(model, &objective, cfg.latent.restarts, cfg.seed, bc_id)?;
    boundary_losses.extend(random.into_iter().enumerate().map(|(i, l)| BoundaryLossRow {
        bc_id,
        source: "random_latent",
        index: i,
        boundary_loss: l,
    }));
    let inference = candidates
        .into_iter()
        .map(|c| EvalSample {
            depth: c.depth,
            eval: c.eval,
        })
        .collect();

    let mut groups = vec![
        group(GroupLabel::TestSet, test),
        group(GroupLabel::Reconstruction, recon),
        group(GroupLabel::Inference, inference),
    ];
    let mut rng = seeded_rng(cfg.seed, BASELINE_STREAM | bc_id as u64);
    for (label, heightmaps) in baseline_heightmaps(eval, cfg.evaluate.random_samples, &mut rng)? {
        let samples = heightmaps
            .par_iter()
            .map(|h| {
                let (depth, e) = evaluate_heightmap(h, &bc, eval)?;
                Ok(EvalSample { depth, eval: e })
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push(group(label, samples));
    }
    let hypervolume = hypervolume_row(&groups[0], &groups[1], &groups[2])?;
    Ok(BcEvaluation {
        groups,
        hypervolume,
        boundary_losses,
    })
}

/// Evaluates every test boundary condition of `ds` through the shared
/// depth-map path, plus the optional timing comparison.
pub fn evaluate(
    model: &VaeModel<f32>,
    ds: &Dataset,
    cfg: &Config,
    eval: &Evaluator,
) -> Result<EvaluationReport> {
    let by_bc = ds.records_by_bc();
    let test_ids = ds.split_bc_ids(Split::Test);
    if test_ids.is_empty() {
        return Err(heliogen_core::Error::EmptySplit("test").into());
    }
    log::info!("evaluating {} test boundary conditions", test_ids.len());
    let per_bc: Vec<BcEvaluation> = test_ids
        .par_iter()
        .map(|id| evaluate_bc(model, &by_bc[id], *id, cfg, eval))
        .collect::<Result<_>>()?;
    let timings = match cfg.evaluate.timing_bcs {
        0 => None,
        n => {
            let ids: Vec<u32> = test_ids.iter().copied().take(n).collect();
            Some(timing_report(model, &ids, cfg, eval)?)
        }
    };
    let mut report = EvaluationReport {
        groups: Vec::new(),
        hypervolumes: Vec::new(),
        boundary_losses: Vec::new(),
        timings,
    };
    for b in per_bc {
        report.groups.extend(b.groups);
        report.hypervolumes.push(b.hypervolume);
        report.boundary_losses.extend(b.boundary_losses);
    }
    Ok(report)
}

