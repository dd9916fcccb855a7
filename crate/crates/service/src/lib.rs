//! HTTP service: `/generate`, `/edit`, `/health`, `/models`, `/runs/{id}`.

pub mod error;
pub mod runs;
pub mod types;

use std::sync::{Arc, OnceLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use facefuse::config::Config;
use facefuse::editor::{DirectionCache, InvertedFace};
use facefuse::generator::{GeneratedImage, Provenance};
use facefuse::image::RgbImage;
use facefuse::pipeline::{EditSpec, ModelInfo, Pipeline};
use facefuse::spatial::Modality;
use facefuse::toy;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use error::ApiError;
use runs::{RunRecord, RunStore};
use types::{
    decode_b64, decode_latent, latent_b64, png_b64, EditRequest, EditResponse, GenerateRequest, GenerateResponse,
    SpatialPayload,
};

/// Shared, read-mostly service state. The model set is installed once and
/// never mutated afterwards.
pub struct AppState {
    model: OnceLock<Arc<Pipeline>>,
    model_digest: OnceLock<String>,
    cache: DirectionCache,
    runs: RunStore,
}

impl AppState {
    pub fn new(runs_dir: impl Into<std::path::PathBuf>) -> Self {
        Self {
            model: OnceLock::new(),
            model_digest: OnceLock::new(),
            cache: DirectionCache::new(),
            runs: RunStore::new(runs_dir),
        }
    }

    /// Installs the model set; later calls are ignored.
    pub fn install(&self, pipeline: Pipeline) {
        let digest = {
            let info = serde_json::to_vec(&pipeline.info()).expect("model info serializes");
            hex::encode(Sha256::digest(info))
        };
        if self.model.set(Arc::new(pipeline)).is_ok() {
            let _ = self.model_digest.set(digest);
        }
    }

    pub fn is_ready(&self) -> bool {
        self.model.get().is_some()
    }

    fn model(&self) -> Result<(Arc<Pipeline>, String), ApiError> {
        match (self.model.get(), self.model_digest.get()) {
            (Some(m), Some(d)) => Ok((m.clone(), d.clone())),
            _ => Err(ApiError::unavailable("models are still loading")),
        }
    }

    pub fn runs(&self) -> &RunStore {
        &self.runs
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/models", get(models))
        .route("/generate", post(generate))
        .route("/edit", post(edit))
        .route("/runs/{id}", get(run))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: if st.is_ready() { "ok" } else { "loading" },
    })
}

#[derive(Debug, Serialize)]
struct ModelsResponse {
    #[serde(flatten)]
    info: ModelInfo,
    digest: String,
}

async fn models(State(st): State<Arc<AppState>>) -> Result<Json<ModelsResponse>, ApiError> {
    let (p, digest) = st.model()?;
    Ok(Json(ModelsResponse { info: p.info(), digest }))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

/// Content address of a request under a given model set.
fn request_id(kind: &str, request: &serde_json::Value, model_digest: &str) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    h.update(serde_json::to_vec(request).expect("json value serializes"));
    h.update(model_digest.as_bytes());
    hex::encode(&h.finalize()[..16])
}

fn num_classes(p: &Pipeline) -> usize {
    p.codec(Modality::Mask)
        .map_or(toy::NUM_CLASSES, |c| c.config().num_classes)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn generate(
    State(st): State<Arc<AppState>>,
    payload: Result<Json<GenerateRequest>, JsonRejection>,
) -> Result<Json<GenerateResponse>, ApiError> {
    let req = body(payload)?;
    let (p, digest) = st.model()?;
    let spatial = req.spatial.decode(num_classes(&p))?;
    let st2 = st.clone();
    blocking(move || {
        let (img, w) = p.generate(&req.text, &spatial)?;
        let request = serde_json::to_value(&req).map_err(|e| ApiError::internal(e.to_string()))?;
        let id = request_id("generate", &request, &digest);
        let resp = GenerateResponse {
            request_id: id.clone(),
            image: png_b64(&img.image)?,
            latent_w: latent_b64(vec![w.dim()], w.values().to_vec())?,
        };
        let layers = p.generator().num_layers();
        let wp = facefuse::generator::LatentCodePlus::broadcast(&w, layers);
        st2.runs.put(&RunRecord {
            request_id: id,
            kind: "generate".into(),
            request,
            image: resp.image.clone(),
            latent: latent_b64(vec![layers, w.dim()], wp.flatten())?,
            spatial: Some(req.spatial.clone()),
            model_digest: digest,
        })?;
        Ok(Json(resp))
    })
    .await
}

/// Resolves the edit source and the spatial context of a referenced run.
fn edit_source(
    st: &AppState,
    p: &Pipeline,
    req: &EditRequest,
) -> Result<(InvertedFace, Option<SpatialPayload>), ApiError> {
    let given = [req.latent_ref.is_some(), req.latent.is_some(), req.image.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given > 1 {
        return Err(ApiError::bad_request(
            "give only one of `latent_ref`, `latent`, `image`",
        ));
    }
    if let Some(id) = &req.latent_ref {
        let rec = st.runs.get(id)?;
        let arr = st.runs.latent(id)?;
        return Ok((InvertedFace::from_array(&arr, p.generator(), id.clone())?, rec.spatial));
    }
    if let Some(l) = &req.latent {
        return Ok((
            InvertedFace::from_array(&decode_latent(l)?, p.generator(), "inline latent")?,
            None,
        ));
    }
    let hint = "send `latent` (base64 L x D_w array) or `latent_ref` (a previous run id)";
    match &req.image {
        Some(png) => {
            let image = GeneratedImage {
                image: RgbImage::from_png(&decode_b64(png)?)?,
                provenance: Provenance::External,
            };
            InvertedFace::invert(&image, p.inverter(), p.generator(), "uploaded image")
                .map(|f| (f, None))
                .map_err(|e| ApiError::unprocessable(format!("{e}; {hint}")))
        }
        None => Err(ApiError::unprocessable(format!(
            "no source latent and no inversion adapter for an image; {hint}"
        ))),
    }
}

fn edit_spec(req: &EditRequest, context: Option<SpatialPayload>, nc: usize) -> Result<EditSpec, ApiError> {
    let text = req.pivot_text.is_some() || req.target_text.is_some();
    let spatial = req.spatial_pivot.is_some() || req.spatial_target.is_some();
    match (text, spatial) {
        (true, false) => {
            let target = req
                .target_text
                .clone()
                .ok_or_else(|| ApiError::bad_request("`target_text` is required for a text edit"))?;
            let pivot = req.pivot_text.clone().unwrap_or_else(|| toy::DEFAULT_PIVOT.to_string());
            let ctx = req
                .context
                .clone()
                .or(context)
                .filter(|c| !c.is_empty())
                .ok_or_else(|| {
                    ApiError::bad_request(
                        "text edits need `context` (a spatial input) unless `latent_ref` names a run that has one",
                    )
                })?;
            Ok(EditSpec::Text {
                pivot,
                target,
                spatial: ctx.decode(nc)?,
            })
        }
        (false, true) => match (&req.spatial_pivot, &req.spatial_target) {
            (Some(a), Some(b)) => Ok(EditSpec::Spatial {
                pivot: a.decode(nc)?,
                target: b.decode(nc)?,
                f_img: None,
            }),
            _ => Err(ApiError::bad_request(
                "spatial edits need both `spatial_pivot` and `spatial_target`",
            )),
        },
        (true, true) => Err(ApiError::bad_request(
            "give either a text pair or a spatial pair, not both",
        )),
        (false, false) => Err(ApiError::bad_request("give a text pair or a spatial pair")),
    }
}

async fn edit(
    State(st): State<Arc<AppState>>,
    payload: Result<Json<EditRequest>, JsonRejection>,
) -> Result<Json<EditResponse>, ApiError> {
    let req = body(payload)?;
    if !req.beta.is_finite() {
        return Err(ApiError::bad_request("`beta` must be finite"));
    }
    let (p, digest) = st.model()?;
    let st2 = st.clone();
    blocking(move || {
        let (src, context) = edit_source(&st2, &p, &req)?;
        let spec = edit_spec(&req, context.clone(), num_classes(&p))?;
        let (dir, cached) = p.direction(&src, &spec, Some(&st2.cache))?;
        let wp = facefuse::editor::apply_edit(&src.wp_src, &dir, req.beta)?;
        let img = p.generator().synthesize_plus(&wp)?;
        let request = serde_json::to_value(&req).map_err(|e| ApiError::internal(e.to_string()))?;
        let id = request_id("edit", &request, &digest);
        let latent = latent_b64(vec![wp.num_layers(), wp.dim()], wp.flatten())?;
        let resp = EditResponse {
            request_id: id.clone(),
            image: png_b64(&img.image)?,
            latent_wplus: latent.clone(),
            direction_cached: cached,
        };
        st2.runs.put(&RunRecord {
            request_id: id,
            kind: "edit".into(),
            request,
            image: resp.image.clone(),
            latent,
            spatial: req.context.clone().or(context),
            model_digest: digest,
        })?;
        Ok(Json(resp))
    })
    .await
}

async fn run(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<RunRecord>, ApiError> {
    Ok(Json(st.runs.get(&id)?))
}

/// Binds the configured port, loads the model set in the background, and
/// serves until the process ends.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let port = config
        .port()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
    let host = config.server.host.clone();
    let state = Arc::new(AppState::new(config.server.runs_dir.clone()));
    let loader = state.clone();
    tokio::task::spawn_blocking(move || match Pipeline::load_configured(&config) {
        Ok(p) => {
            log::info!("models loaded from {}", config.model_dir.display());
            loader.install(p);
        }
        Err(e) => log::error!("loading models from {}: {e}", config.model_dir.display()),
    });
    let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
