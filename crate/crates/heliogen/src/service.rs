//! JSON-over-HTTP service backing the interactive studio.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{rejection::JsonRejection, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use heliogen_core::bench::evaluate_heightmap;
use heliogen_core::codec::{decode_to_heightfield, rasterize_scene};
use heliogen_core::latent::{Guidance, LatentObjective};
use heliogen_core::nn::{FC_WIDTH, LATENT_DIM};
use heliogen_core::optimizer::{scalarize, Evaluator};
use heliogen_core::scene::{enumerate_boundary_conditions, BoundaryCondition, Heightmap};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::config::Config;
use crate::format::{Checkpoint, CheckpointMeta};
use crate::pipeline::infer_candidates;

pub const MAX_COUNT: usize = 100;
pub const DEFAULT_COUNT: usize = 20;

pub struct AppState {
    pub model: Option<(Checkpoint, u32)>,
    pub eval: Evaluator,
    pub config: Config,
    requests: AtomicU64,
}

impl AppState {
    pub fn new(model: Option<(Checkpoint, u32)>, eval: Evaluator, config: Config) -> Self {
        Self {
            model,
            eval,
            config,
            requests: AtomicU64::new(0),
        }
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl From<heliogen_core::Error> for ApiError {
    fn from(e: heliogen_core::Error) -> Self {
        use heliogen_core::Error as E;
        let status = match e {
            E::HeightOutOfRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            E::InvalidArgument(_) | E::SlotOutOfRange { .. } | E::UnknownBoundaryCondition(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self(status, e.to_string())
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

/// A boundary condition given either by id or by its three slots.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum BcRequest {
    Id { id: u32 },
    Slots {
        #[serde(default)]
        east: Option<usize>,
        #[serde(default)]
        south: Option<usize>,
        #[serde(default)]
        west: Option<usize>,
    },
}

impl BcRequest {
    fn resolve(&self, positions: usize) -> Result<BoundaryCondition, ApiError> {
        let bc = match *self {
            BcRequest::Id { id } => BoundaryCondition::from_id(id, positions)?,
            BcRequest::Slots { east, south, west } => BoundaryCondition { east, south, west },
        };
        // Validates slots against the configured positions.
        bc.id(positions)?;
        Ok(bc)
    }
}

#[derive(Debug, Serialize)]
pub struct BcInfo {
    pub id: u32,
    pub east: Option<usize>,
    pub south: Option<usize>,
    pub west: Option<usize>,
    /// The boundary-only depth map, 16×16 row-major, north row first.
    pub preview: Vec<f32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceRequest {
    pub heightmap: Vec<Vec<f64>>,
    pub lambda: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub bc: BcRequest,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub guidance: Option<GuidanceRequest>,
}

#[derive(Debug, Serialize)]
pub struct HeightFieldJson {
    pub n: usize,
    pub pitch: f64,
    pub center: [f64; 2],
    pub heights: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct GeneratedGeometry {
    pub restart: usize,
    pub depth: Vec<f32>,
    pub heightfield: HeightFieldJson,
    pub radiation: f64,
    pub volume: f64,
    pub vol_dev_sq: f64,
    pub boundary_loss: f64,
    pub degenerate: bool,
}

#[derive(Debug, Serialize)]
pub struct GenerateResponse {
    pub bc_id: u32,
    pub seed: u64,
    pub results: Vec<GeneratedGeometry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    pub heightmap: Vec<Vec<f64>>,
    pub bc: BcRequest,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EvaluateResponse {
    pub radiation: f64,
    pub volume: f64,
    pub vol_dev_sq: f64,
    pub j: f64,
}

#[derive(Debug, Serialize)]
pub struct ModelInfo {
    pub latent_dim: usize,
    pub fc_width: usize,
    pub parameter_count: usize,
    pub meta: CheckpointMeta,
    pub checkpoint_crc: u32,
    pub requests_served: u64,
}

fn heightmap_from_rows(rows: &[Vec<f64>], cap: f64) -> Result<Heightmap, ApiError> {
    if rows.len() != 5 || rows.iter().any(|r| r.len() != 5) {
        return Err(ApiError::bad_request("heightmap must be 5 rows of 5 heights"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Heightmap::from_flat_slice(&flat, cap)?)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}"))
    })?
}

async fn boundary_conditions(State(s): State<Arc<AppState>>) -> ApiResult<Vec<BcInfo>> {
    s.requests.fetch_add(1, Ordering::Relaxed);
    let st = s.clone();
    let list = blocking(move || {
        let p = st.config.scene.positions_per_side();
        enumerate_boundary_conditions(p)
            .iter()
            .map(|bc| {
                Ok(BcInfo {
                    id: bc.id(p)?,
                    east: bc.east,
                    south: bc.south,
                    west: bc.west,
                    preview: rasterize_scene(bc, None, &st.config.scene)?.pixels,
                })
            })
            .collect()
    })
    .await?;
    Ok(Json(list))
}

async fn generate(
    State(s): State<Arc<AppState>>,
    req: Result<Json<GenerateRequest>, JsonRejection>,
) -> ApiResult<GenerateResponse> {
    s.requests.fetch_add(1, Ordering::Relaxed);
    let Json(req) = req?;
    let count = req.count.unwrap_or(DEFAULT_COUNT);
    if !(1..=MAX_COUNT).contains(&count) {
        return Err(ApiError::bad_request(format!("count must lie in 1..={MAX_COUNT}")));
    }
    let scene = &s.config.scene;
    let bc = req.bc.resolve(scene.positions_per_side())?;
    let guidance = match &req.guidance {
        Some(g) => {
            let h = heightmap_from_rows(&g.heightmap, scene.height_cap)?;
            Some(Guidance::new(&h, g.lambda, scene)?)
        }
        None => None,
    };
    if s.model.is_none() {
        return Err(ApiError(StatusCode::CONFLICT, "no model loaded".into()));
    }
    let seed = req.seed.unwrap_or(s.config.seed);
    let st = s.clone();
    let resp = blocking(move || {
        let (ckpt, _) = st.model.as_ref().expect("checked above");
        let scene = &st.config.scene;
        let objective = LatentObjective::new(&bc, guidance, scene)?;
        let latent = heliogen_core::latent::LatentSearchConfig {
            restarts: count,
            ..st.config.latent.clone()
        };
        let mut cands = infer_candidates(&ckpt.model, &objective, &latent, seed, &st.eval)
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        cands.sort_by(|a, b| {
            a.boundary_loss
                .total_cmp(&b.boundary_loss)
                .then(a.restart.cmp(&b.restart))
        });
        let results = cands
            .into_iter()
            .map(|c| {
                let f = decode_to_heightfield(&c.depth, scene)?;
                Ok(GeneratedGeometry {
                    restart: c.restart,
                    depth: c.depth.pixels,
                    heightfield: HeightFieldJson {
                        n: f.n,
                        pitch: f.pitch,
                        center: f.center,
                        heights: f.heights,
                    },
                    radiation: c.eval.perf.avg_radiation,
                    volume: c.eval.perf.volume,
                    vol_dev_sq: c.eval.perf.vol_dev_sq,
                    boundary_loss: c.boundary_loss,
                    degenerate: c.eval.degenerate,
                })
            })
            .collect::<Result<_, ApiError>>()?;
        Ok(GenerateResponse {
            bc_id: bc.id(scene.positions_per_side())?,
            seed,
            results,
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn evaluate(
    State(s): State<Arc<AppState>>,
    req: Result<Json<EvaluateRequest>, JsonRejection>,
) -> ApiResult<EvaluateResponse> {
    s.requests.fetch_add(1, Ordering::Relaxed);
    let Json(req) = req?;
    let bc = req.bc.resolve(s.config.scene.positions_per_side())?;
    let h = heightmap_from_rows(&req.heightmap, s.config.scene.height_cap)
        .map_err(|ApiError(_, m)| ApiError::bad_request(m))?;
    let st = s.clone();
    let resp = blocking(move || {
        let (_, e) = evaluate_heightmap(&h, &bc, &st.eval)?;
        Ok(EvaluateResponse {
            radiation: e.perf.avg_radiation,
            volume: e.perf.volume,
            vol_dev_sq: e.perf.vol_dev_sq,
            j: scalarize(&e.perf),
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn model_info(State(s): State<Arc<AppState>>) -> ApiResult<ModelInfo> {
    let served = s.requests.fetch_add(1, Ordering::Relaxed) + 1;
    let (ckpt, crc) = s
        .model
        .as_ref()
        .ok_or_else(|| ApiError(StatusCode::CONFLICT, "no model loaded".into()))?;
    Ok(Json(ModelInfo {
        latent_dim: LATENT_DIM,
        fc_width: FC_WIDTH,
        parameter_count: ckpt.model.parameter_count(),
        meta: ckpt.meta,
        checkpoint_crc: *crc,
        requests_served: served,
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/boundary-conditions", get(boundary_conditions))
        .route("/api/generate", post(generate))
        .route("/api/evaluate", post(evaluate))
        .route("/api/model/info", get(model_info))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` (port 0 picks a free port) and returns the bound address with
/// the server future.
pub async fn bind(
    state: Arc<AppState>,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(state);
    Ok((local, async move { axum::serve(listener, app).await }))
}
