//! Command-line interface. Flags override the configuration file, which
//! overrides the built-in defaults.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use heliogen_core::codec::{Dataset, DatasetRecord, Split};
use heliogen_core::latent::{Guidance, LatentObjective};
use heliogen_core::scene::BoundaryCondition;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::{format, pipeline, report, service};

#[derive(Debug, Parser)]
#[command(name = "heliogen", version, about = "Solar-driven massing generation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file (default: $HELIOGEN_CONFIG, else built-in defaults).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Anneal boundary conditions and write a dataset file.
    GenerateDataset {
        /// Number of boundary conditions (seeded subset); all when omitted.
        #[arg(long)]
        bcs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write one annealing trace CSV per boundary condition here.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Train the VAE on a dataset file.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also write `<out>.epoch-N` every N epochs.
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Generate geometries for one boundary condition by latent search.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bc_id: u32,
        #[arg(long)]
        restarts: Option<usize>,
        /// 5×5 guide heightmap CSV (five rows, north first).
        #[arg(long, requires = "lambda")]
        guide: Option<PathBuf>,
        #[arg(long, requires = "guide")]
        lambda: Option<f64>,
        /// Results as a dataset file, best boundary loss first.
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark a model against a dataset's test split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also time annealing against inference on this many test boundary conditions.
        #[arg(long)]
        timing_bcs: Option<usize>,
        #[arg(long)]
        recon_samples: Option<usize>,
        #[arg(long)]
        random_samples: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Annealing steps for the timing comparison.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sky model utilities.
    Sky {
        #[command(subcommand)]
        command: SkyCommand,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Subcommand)]
pub enum SkyCommand {
    /// Write the weighted sun samples as CSV.
    Dump {
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.global.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_millis()
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = Config::resolve(cli.global.config.as_deref())?;
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    apply_overrides(&mut cfg, &cli.command);
    cfg.validate()?;
    log::info!("config {}", cfg.log_line());
    let threads = cli.global.threads;
    match cli.command {
        Command::GenerateDataset { out, trace_dir, .. } => {
            pipeline::with_threads(threads, || generate_dataset(&cfg, &out, trace_dir.as_deref()))?
        }
        Command::Train {
            dataset,
            out,
            log,
            checkpoint_every,
            ..
        } => pipeline::with_threads(threads, || {
            train(&cfg, &dataset, &out, log.as_deref(), checkpoint_every)
        })?,
        Command::Infer {
            model,
            bc_id,
            guide,
            lambda,
            out,
            ..
        } => pipeline::with_threads(threads, || {
            infer(&cfg, &model, bc_id, guide.as_deref().zip(lambda), &out)
        })?,
        Command::Evaluate {
            model,
            dataset,
            out_dir,
            ..
        } => pipeline::with_threads(threads, || evaluate(&cfg, &model, &dataset, &out_dir))?,
        Command::Sky {
            command: SkyCommand::Dump { out },
        } => sky_dump(&cfg, out.as_deref()),
        Command::Serve { model, host, port } => serve(cfg, model.as_deref(), &host, port, threads),
    }
}

fn apply_overrides(cfg: &mut Config, cmd: &Command) {
    match *cmd {
        Command::GenerateDataset { bcs, steps, .. } => {
            if bcs.is_some() {
                cfg.dataset.bcs = bcs;
            }
            if let Some(s) = steps {
                cfg.sa.steps = s;
            }
        }
        Command::Train {
            epochs, batch, lr, ..
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(b) = batch {
                cfg.train.batch = b;
            }
            if let Some(l) = lr {
                cfg.train.lr = l;
            }
        }
        Command::Infer { restarts, .. } => {
            if let Some(r) = restarts {
                cfg.latent.restarts = r;
            }
        }
        Command::Evaluate {
            timing_bcs,
            recon_samples,
            random_samples,
            restarts,
            steps,
            ..
        } => {
            if let Some(n) = timing_bcs {
                cfg.evaluate.timing_bcs = n;
            }
            if let Some(n) = recon_samples {
                cfg.evaluate.recon_samples = n;
            }
            if let Some(n) = random_samples {
                cfg.evaluate.random_samples = n;
            }
            if let Some(r) = restarts {
                cfg.latent.restarts = r;
            }
            if let Some(s) = steps {
                cfg.sa.steps = s;
            }
        }
        Command::Sky { .. } | Command::Serve { .. } => {}
    }
}

fn generate_dataset(cfg: &Config, out: &Path, trace_dir: Option<&Path>) -> Result<()> {
    let eval = pipeline::evaluator(cfg)?;
    let generated = pipeline::generate_dataset(cfg, &eval)?;
    if let Some(dir) = trace_dir {
        for run in &generated.runs {
            report::write_trace(&run.trace, &dir.join(format!("trace_bc{:03}.csv", run.bc_id)))?;
        }
    }
    format::write_dataset(&generated.dataset, out)?;
    let ds = &generated.dataset;
    log::info!(
        "wrote {} records ({} train / {} test boundary conditions) to {}",
        ds.records.len(),
        ds.split_bc_ids(Split::Train).len(),
        ds.split_bc_ids(Split::Test).len(),
        out.display()
    );
    Ok(())
}

fn train(
    cfg: &Config,
    dataset: &Path,
    out: &Path,
    loss_log: Option<&Path>,
    every: Option<usize>,
) -> Result<()> {
    if every == Some(0) {
        return Err(Error::Usage("--checkpoint-every must be positive".into()));
    }
    let ds = format::read_dataset(dataset)?;
    let mut periodic: Option<Error> = None;
    let (ckpt, history) = pipeline::train_checkpoint(&ds, cfg, |stats, ck| {
        log::info!(
            "epoch {:>4}  train {:.5}  (recon {:.5}, kl {:.5})  val {:.5}",
            stats.epoch,
            stats.train_loss,
            stats.train_recon,
            stats.train_kl,
            stats.val_loss
        );
        if let Some(n) = every {
            if stats.epoch % n == 0 && periodic.is_none() {
                let mut name = out.as_os_str().to_owned();
                name.push(format!(".epoch-{}", stats.epoch));
                if let Err(e) = format::write_checkpoint(ck, Path::new(&name)) {
                    periodic = Some(e);
                }
            }
        }
    })?;
    if let Some(e) = periodic {
        return Err(e);
    }
    format::write_checkpoint(&ckpt, out)?;
    if let Some(p) = loss_log {
        report::write_losses(&history.epochs, p)?;
    }
    log::info!("wrote checkpoint (epoch {}) to {}", ckpt.meta.epoch, out.display());
    Ok(())
}

fn infer(
    cfg: &Config,
    model: &Path,
    bc_id: u32,
    guide: Option<(&Path, f64)>,
    out: &Path,
) -> Result<()> {
    let (ckpt, _) = format::read_checkpoint(model)?;
    let scene = &cfg.scene;
    let bc = BoundaryCondition::from_id(bc_id, scene.positions_per_side())?;
    let guidance = match guide {
        Some((path, lambda)) => {
            let h = report::read_heightmap_csv(path, scene.height_cap)?;
            Some(Guidance::new(&h, lambda, scene)?)
        }
        None => None,
    };
    let objective = LatentObjective::new(&bc, guidance, scene)?;
    let eval = pipeline::evaluator(cfg)?;
    let mut cands = pipeline::infer_candidates(&ckpt.model, &objective, &cfg.latent, cfg.seed, &eval)?;
    cands.sort_by(|a, b| {
        a.boundary_loss
            .total_cmp(&b.boundary_loss)
            .then(a.restart.cmp(&b.restart))
    });
    let mut ds = Dataset::new(scene.world_extent as f32);
    for c in &cands {
        let field = heliogen_core::codec::decode_to_heightfield(&c.depth, scene)?;
        let h = heliogen_core::codec::heightfield_to_heightmap(&field, scene);
        let mut rec = DatasetRecord::new(&bc, &h, &c.eval.perf, scene)?;
        // Keep the decoded image itself, not a re-rasterization of its 5×5 fit.
        rec.depth = c.depth.clone();
        rec.split = Split::Test;
        ds.records.push(rec);
        log::info!(
            "restart {:>3}  boundary loss {:.5}  radiation {:.2}  volume {:.2}{}",
            c.restart,
            c.boundary_loss,
            c.eval.perf.avg_radiation,
            c.eval.perf.volume,
            if c.eval.degenerate { "  (degenerate)" } else { "" }
        );
    }
    format::write_dataset(&ds, out)
}

fn evaluate(cfg: &Config, model: &Path, dataset: &Path, out_dir: &Path) -> Result<()> {
    let (ckpt, _) = format::read_checkpoint(model)?;
    let ds = format::read_dataset(dataset)?;
    let eval = pipeline::evaluator(cfg)?;
    let rep = pipeline::evaluate(&ckpt.model, &ds, cfg, &eval)?;
    report::write_evaluation(&rep, out_dir)?;
    for h in &rep.hypervolumes {
        log::info!(
            "bc {:>3}  HV test {:.4}  reconstruction {:.4}  inference {:.4}",
            h.bc_id,
            h.hv_test,
            h.hv_reconstruction,
            h.hv_inference
        );
    }
    if let Some(t) = &rep.timings {
        log::info!(
            "annealing {:.3} s vs inference {:.3} s per boundary condition ({:.1}x)",
            t.mean_sa_seconds,
            t.mean_inference_seconds,
            t.ratio
        );
    }
    Ok(())
}

fn sky_dump(cfg: &Config, out: Option<&Path>) -> Result<()> {
    let sky = heliogen_core::solar::SkyModel::new(cfg.sky.clone())?;
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            report::write_sky(&sky, f)
        }
        None => report::write_sky(&sky, std::io::stdout().lock()),
    }
}

fn serve(cfg: Config, model: Option<&Path>, host: &str, port: u16, threads: Option<usize>) -> Result<()> {
    let model = model.map(format::read_checkpoint).transpose()?;
    if model.is_none() {
        log::warn!("no --model given; /api/generate and /api/model/info will answer 409");
    }
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Error::Usage(format!("bad address {host}:{port}: {e}")))?;
    let eval = pipeline::evaluator(&cfg)?;
    let state = Arc::new(service::AppState::new(model, eval, cfg));
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = threads {
        rt.worker_threads(n.max(1));
    }
    let rt = rt.enable_all().build().map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(async move {
        let (local, server) = service::bind(state, addr)
            .await
            .map_err(|e| Error::io(addr.to_string(), e))?;
        log::info!("listening on http://{local}");
        tokio::select! {
            r = server => r.map_err(|e| Error::io(local.to_string(), e)),
            _ = tokio::signal::ctrl_c() => {
                log::info!("shutting down");
                Ok(())
            }
        }
    })
}
