//! HTTP front end for guidance-driven enhancement.
//!
//! Three JSON endpoints sit over one read-only checkpoint:
//!
//! * `POST /api/enhance` takes a multipart form with a `low` image part and
//!   either a `guidance` image part or a `guidance_id` text field naming a
//!   gallery entry. The reply is an [`EnhanceResponse`].
//! * `GET /api/health` answers 503 until the checkpoint is loaded, then 200
//!   with its identifier.
//! * `GET /api/gallery` lists the bundled guidance images, darkest first.

mod error;
pub mod gallery;

use std::io::Cursor;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use axum::extract::{DefaultBodyLimit, Multipart, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use cidn_core::metrics::{histogram_alignment, luminance_histogram, HISTOGRAM_BINS};
use cidn_core::model::checkpoint_id;
use cidn_core::{ImageTensor, ModelState};
use serde::Serialize;
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use error::ApiError;
pub use gallery::{Gallery, GalleryEntry, GalleryItem};

/// Runtime limits and policy.
#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Largest accepted image, in pixels (height times width).
    pub max_pixels: u64,
    /// Simultaneous inferences; further requests wait.
    pub max_concurrent: usize,
    /// Largest accepted request body, in bytes.
    pub body_limit: usize,
    /// Origin allowed by CORS; `None` allows any origin.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_pixels: 4096 * 4096,
            max_concurrent: 2,
            body_limit: 64 << 20,
            cors_origin: None,
        }
    }
}

struct Loaded {
    model: ModelState,
    id: String,
}

/// Shared, read-only service state. The checkpoint slot is filled once.
pub struct AppState {
    config: ServiceConfig,
    gallery: Gallery,
    loaded: OnceLock<Loaded>,
    permits: Semaphore,
}

impl AppState {
    pub fn new(config: ServiceConfig, gallery: Gallery) -> Arc<Self> {
        let permits = Semaphore::new(config.max_concurrent.max(1));
        Arc::new(AppState {
            config,
            gallery,
            loaded: OnceLock::new(),
            permits,
        })
    }

    /// Installs the model. Returns false if one was already installed.
    pub fn install(&self, model: ModelState, id: String) -> bool {
        self.loaded.set(Loaded { model, id }).is_ok()
    }

    /// Reads, verifies and installs a checkpoint file; returns its id.
    pub fn load_checkpoint(&self, path: &Path) -> cidn_core::Result<String> {
        let bytes = std::fs::read(path).map_err(|e| cidn_core::Error::io(path, e))?;
        let model = ModelState::from_bytes(&bytes).map_err(|e| match e {
            cidn_core::Error::Checkpoint(m) => {
                cidn_core::Error::Checkpoint(format!("{}: {m}", path.display()))
            }
            other => other,
        })?;
        let id = checkpoint_id(&bytes);
        self.install(model, id.clone());
        Ok(id)
    }

    pub fn checkpoint_id(&self) -> Option<&str> {
        self.loaded.get().map(|l| l.id.as_str())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = match &state.config.cors_origin {
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => CorsLayer::new().allow_origin(AllowOrigin::exact(v)),
            Err(_) => {
                log::warn!("ignoring malformed CORS origin {origin:?}");
                CorsLayer::new()
            }
        },
        None => CorsLayer::new().allow_origin(AllowOrigin::any()),
    }
    .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
    .allow_headers([axum::http::header::CONTENT_TYPE]);

    Router::new()
        .route("/api/enhance", post(enhance))
        .route("/api/health", get(health))
        .route("/api/gallery", get(list_gallery))
        .layer(DefaultBodyLimit::max(state.config.body_limit))
        .layer(cors)
        .with_state(state)
}

/// Binds `addr`, then loads the checkpoint in the background so health
/// checks can report progress. Runs until the server stops.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>, checkpoint: &Path) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    let loader = Arc::clone(&state);
    let path = checkpoint.to_path_buf();
    tokio::task::spawn_blocking(move || match loader.load_checkpoint(&path) {
        Ok(id) => log::info!("checkpoint {id} ready"),
        Err(e) => log::error!("cannot load checkpoint: {e}"),
    });
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint_id: Option<String>,
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match state.checkpoint_id() {
        Some(id) => Json(Health {
            status: "ready",
            checkpoint_id: Some(id.to_string()),
        })
        .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(Health {
                status: "loading",
                checkpoint_id: None,
            }),
        )
            .into_response(),
    }
}

async fn list_gallery(State(state): State<Arc<AppState>>) -> Json<Vec<GalleryItem>> {
    Json(state.gallery.items())
}

/// Body of a successful `POST /api/enhance`.
#[derive(Clone, Debug, Serialize)]
pub struct EnhanceResponse {
    /// Base-64 PNG of the enhanced image, same size as the low input.
    pub enhanced_png: String,
    pub width: usize,
    pub height: usize,
    pub guidance_histogram: Vec<f64>,
    pub output_histogram: Vec<f64>,
    /// Histogram intersection of output and guidance luminance.
    pub alignment: f64,
    pub checkpoint_id: String,
    pub elapsed_ms: f64,
}

enum Guidance {
    Upload(Vec<u8>),
    Gallery(String),
}

async fn enhance(
    State(state): State<Arc<AppState>>,
    mut form: Multipart,
) -> Result<Json<EnhanceResponse>, ApiError> {
    if state.loaded.get().is_none() {
        return Err(ApiError::NotReady);
    }
    let started = Instant::now();
    let mut low = None;
    let mut guidance = None;
    while let Some(field) = form.next_field().await? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "low" => low = Some(field.bytes().await?.to_vec()),
            "guidance" => guidance = Some(Guidance::Upload(field.bytes().await?.to_vec())),
            "guidance_id" => guidance = Some(Guidance::Gallery(field.text().await?.trim().to_string())),
            other => log::debug!("ignoring form part {other:?}"),
        }
    }
    let low = low.ok_or(ApiError::MissingPart("low"))?;
    let low = decode_part("low", &low, state.config.max_pixels)?;
    let guidance = match guidance.ok_or(ApiError::MissingPart("guidance"))? {
        Guidance::Upload(bytes) => decode_part("guidance", &bytes, state.config.max_pixels)?,
        Guidance::Gallery(id) => state
            .gallery
            .image(&id)
            .cloned()
            .ok_or(ApiError::UnknownGuidance(id))?,
    };

    let _permit = state.permits.acquire().await.map_err(|_| ApiError::NotReady)?;
    let worker = Arc::clone(&state);
    let (out, guidance_histogram, output_histogram, alignment) =
        tokio::task::spawn_blocking(move || -> cidn_core::Result<_> {
            let loaded = worker.loaded.get().expect("checked above");
            let out = loaded.model.enhance_any(&low, &guidance)?;
            let gh = luminance_histogram(&guidance, HISTOGRAM_BINS)?;
            let oh = luminance_histogram(&out, HISTOGRAM_BINS)?;
            let alignment = histogram_alignment(&oh, &gh)?;
            Ok((out, gh, oh, alignment))
        })
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;

    Ok(Json(EnhanceResponse {
        enhanced_png: BASE64.encode(out.encode_png()),
        width: out.width(),
        height: out.height(),
        guidance_histogram,
        output_histogram,
        alignment,
        checkpoint_id: state.checkpoint_id().unwrap_or_default().to_string(),
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    }))
}

/// Checks the header-declared size against the cap before decoding pixels.
fn decode_part(part: &'static str, bytes: &[u8], max_pixels: u64) -> Result<ImageTensor, ApiError> {
    let undecodable = |message: String| ApiError::Undecodable { part, message };
    let reader = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| undecodable(e.to_string()))?;
    let (w, h) = reader
        .into_dimensions()
        .map_err(|e| undecodable(e.to_string()))?;
    if w as u64 * h as u64 > max_pixels {
        return Err(ApiError::TooLarge {
            part,
            width: w,
            height: h,
            max_pixels,
        });
    }
    ImageTensor::decode(bytes).map_err(|e| undecodable(e.to_string()))
}
