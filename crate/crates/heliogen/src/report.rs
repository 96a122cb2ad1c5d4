//! CSV outputs. Floats are written in shortest round-trip form, so reruns
//! with identical seeds give identical bytes.

use std::path::Path;

use heliogen_core::nn::EpochStats;
use heliogen_core::optimizer::SaTrace;
use heliogen_core::pareto::pareto_front;
use heliogen_core::solar::SkyModel;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{EvaluationReport, TimingReport};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct ScatterRow {
    group: &'static str,
    bc_id: u32,
    index: usize,
    radiation: f64,
    volume: f64,
    vol_dev_sq: f64,
    degenerate: bool,
}

#[derive(Serialize)]
struct FrontRow {
    group: &'static str,
    bc_id: u32,
    rank: usize,
    index: usize,
    radiation: f64,
    vol_dev_sq: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    group: &'static str,
    bc_id: u32,
    n: usize,
    mean_radiation: f64,
    std_radiation: f64,
    mean_vol_dev_sq: f64,
    std_vol_dev_sq: f64,
    degenerate: usize,
}

#[derive(Serialize)]
struct HypervolumeCsv {
    bc_id: u32,
    reference_radiation: f64,
    reference_vol_dev_sq: f64,
    hv_test: f64,
    hv_reconstruction: f64,
    hv_inference: f64,
}

#[derive(Serialize)]
struct TimingCsv {
    bc_id: String,
    sa_seconds: f64,
    inference_seconds: f64,
    sa_steps: usize,
    restarts: usize,
}

/// Writes scatter, fronts, summary, hypervolumes and boundary-loss CSVs into
/// `dir`, and timings.csv when the report has timings.
pub fn write_evaluation(report: &EvaluationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rows(
        &dir.join("scatter.csv"),
        report.groups.iter().flat_map(|g| {
            g.samples.iter().enumerate().map(|(i, s)| ScatterRow {
                group: g.label.as_str(),
                bc_id: g.bc_id,
                index: i,
                radiation: s.eval.perf.avg_radiation,
                volume: s.eval.perf.volume,
                vol_dev_sq: s.eval.perf.vol_dev_sq,
                degenerate: s.eval.degenerate,
            })
        }),
    )?;
    write_rows(
        &dir.join("fronts.csv"),
        report.groups.iter().flat_map(|g| {
            pareto_front(&g.front_points())
                .into_iter()
                .enumerate()
                .map(|(rank, p)| FrontRow {
                    group: g.label.as_str(),
                    bc_id: g.bc_id,
                    rank,
                    index: p.payload,
                    radiation: -p.objectives[0],
                    vol_dev_sq: p.objectives[1],
                })
                .collect::<Vec<_>>()
        }),
    )?;
    write_rows(
        &dir.join("summary.csv"),
        report.groups.iter().map(|g| {
            let s = g.stats();
            SummaryRow {
                group: g.label.as_str(),
                bc_id: g.bc_id,
                n: s.n,
                mean_radiation: s.mean_radiation,
                std_radiation: s.std_radiation,
                mean_vol_dev_sq: s.mean_vol_dev_sq,
                std_vol_dev_sq: s.std_vol_dev_sq,
                degenerate: s.degenerate,
            }
        }),
    )?;
    write_rows(
        &dir.join("hypervolumes.csv"),
        report.hypervolumes.iter().map(|h| HypervolumeCsv {
            bc_id: h.bc_id,
            // Back to simulator units: the first objective is −radiation.
            reference_radiation: -h.reference[0],
            reference_vol_dev_sq: h.reference[1],
            hv_test: h.hv_test,
            hv_reconstruction: h.hv_reconstruction,
            hv_inference: h.hv_inference,
        }),
    )?;
    write_rows(&dir.join("boundary_losses.csv"), &report.boundary_losses)?;
    if let Some(t) = &report.timings {
        write_timings(t, &dir.join("timings.csv"))?;
    }
    Ok(())
}

/// One row per timed boundary condition, then a `mean` row.
pub fn write_timings(t: &TimingReport, path: &Path) -> Result<()> {
    let rows = t
        .rows
        .iter()
        .map(|r| TimingCsv {
            bc_id: r.bc_id.to_string(),
            sa_seconds: r.sa_seconds,
            inference_seconds: r.inference_seconds,
            sa_steps: t.sa_steps,
            restarts: t.restarts,
        })
        .chain(std::iter::once(TimingCsv {
            bc_id: "mean".into(),
            sa_seconds: t.mean_sa_seconds,
            inference_seconds: t.mean_inference_seconds,
            sa_steps: t.sa_steps,
            restarts: t.restarts,
        }));
    write_rows(path, rows)
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    train_loss: f64,
    train_recon: f64,
    train_kl: f64,
    val_loss: f64,
}

pub fn write_losses(epochs: &[EpochStats], path: &Path) -> Result<()> {
    write_rows(
        path,
        epochs.iter().map(|e| LossRow {
            epoch: e.epoch,
            train_loss: e.train_loss,
            train_recon: e.train_recon,
            train_kl: e.train_kl,
            val_loss: e.val_loss,
        }),
    )
}

#[derive(Serialize)]
struct TraceRow {
    step: usize,
    radiation: f64,
    volume: f64,
    vol_dev_sq: f64,
    j: f64,
    accepted: bool,
}

pub fn write_trace(trace: &SaTrace, path: &Path) -> Result<()> {
    write_rows(
        path,
        trace.steps.iter().map(|s| TraceRow {
            step: s.index,
            radiation: s.perf.avg_radiation,
            volume: s.perf.volume,
            vol_dev_sq: s.perf.vol_dev_sq,
            j: s.j,
            accepted: s.accepted,
        }),
    )
}

#[derive(Serialize)]
struct SunRow {
    day: u32,
    hour: f64,
    altitude_deg: f64,
    azimuth_deg: f64,
    x: f64,
    y: f64,
    z: f64,
    weight: f64,
}

pub fn write_sky(sky: &SkyModel, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in &sky.samples {
        w.serialize(SunRow {
            day: s.day,
            hour: s.hour,
            altitude_deg: s.altitude_deg(),
            azimuth_deg: s.azimuth_deg(),
            x: s.direction[0],
            y: s.direction[1],
            z: s.direction[2],
            weight: s.weight,
        })?;
    }
    w.flush().map_err(|e| Error::io("sky table", e))
}

/// A 5×5 heightmap as five comma-separated rows, north row first.
pub fn read_heightmap_csv(path: &Path, cap: f64) -> Result<heliogen_core::scene::Heightmap> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Usage(format!("{}: {other:?}", path.display())),
        })?;
    let mut values = Vec::with_capacity(25);
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Usage(format!(
                "{}: each row needs 5 heights, got {}",
                path.display(),
                rec.len()
            )));
        }
        for field in rec.iter() {
            values.push(field.parse::<f64>().map_err(|e| {
                Error::Usage(format!("{}: bad height {field:?}: {e}", path.display()))
            })?);
        }
    }
    if values.len() != 25 {
        return Err(Error::Usage(format!(
            "{}: expected 5 rows of 5 heights",
            path.display()
        )));
    }
    Ok(heliogen_core::scene::Heightmap::from_flat_slice(&values, cap)?)
}
