//! Stateless HTTP front end for risk estimates, what-if grids and CCR
//! date-of-birth scrubbing.
//!
//! Every JSON body is canonical (sorted keys, six significant digits) so
//! responses compare byte-for-byte with the library's own serialization.
//! Uploaded documents live in memory for the duration of one request.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Multipart, State};
use axum::http::{header, HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use qilink::canonical::to_canonical_string;
use qilink::demographics::{BirthDate, BirthLevel, Gender, KeyLevel, ZipCode, ZipLevel};
use qilink::identifiability::{risk_report, RiskQuery};
use qilink::ingestion::PopulationTable;
use qilink::remediation::{ccr_set_birth, whatif, BirthEdit, CcrDocument};
use qilink::Error;
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_UPLOAD_CAP: usize = 10 * 1024 * 1024;
pub const SUMMARY_HEADER: &str = "x-edit-summary";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub table: Option<Arc<PopulationTable>>,
    pub upload_cap: usize,
    /// Reference year for ages; the current year when unset.
    pub as_of_year: Option<i32>,
    /// Static UI assets served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(table: Option<PopulationTable>) -> Self {
        ServiceConfig {
            table: table.map(Arc::new),
            upload_cap: DEFAULT_UPLOAD_CAP,
            as_of_year: None,
            ui_dir: None,
        }
    }
}

/// Non-2xx body: a machine token, human text and the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub field: Option<&'static str>,
}

impl ApiError {
    fn new(
        status: StatusCode,
        code: &'static str,
        message: impl Into<String>,
        field: Option<&'static str>,
    ) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            field,
        }
    }

    fn bad(code: &'static str, message: impl Into<String>, field: Option<&'static str>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message, field)
    }

    pub fn body(&self) -> String {
        to_canonical_string(
            &json!({"code": self.code, "message": self.message, "field": self.field}),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, self.body())
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn library_error(e: Error, field: Option<&'static str>) -> ApiError {
    let code = match &e {
        Error::InvalidZip(_) => "invalid_zip",
        Error::InvalidGender(_) => "invalid_gender",
        Error::InvalidBirthDate { .. } => "invalid_dob",
        Error::RefinementRequested { .. } => "refinement_requested",
        Error::NotWellFormed(_) => "not_well_formed",
        Error::UnrecognizedBirthText(_) => "unrecognized_birth_text",
        Error::InvalidConfig(_) => "invalid_request",
        _ => "internal",
    };
    if code == "internal" {
        return ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, code, e.to_string(), None);
    }
    ApiError::bad(code, e.to_string(), field)
}

#[derive(Debug, Clone, Deserialize)]
pub struct EstimateRequest {
    pub zip: String,
    pub gender: String,
    pub dob: String,
    #[serde(default)]
    pub window: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct WhatIfRequest {
    #[serde(flatten)]
    pub person: EstimateRequest,
    pub target_birth: String,
    pub target_zip: String,
}

impl EstimateRequest {
    /// Validates into a library query before any computation.
    pub fn to_query(&self, as_of_year: Option<i32>) -> Result<RiskQuery, ApiError> {
        let zip = ZipCode::zip5(self.zip.trim()).map_err(|e| library_error(e, Some("zip")))?;
        let gender = Gender::parse(&self.gender).map_err(|e| library_error(e, Some("gender")))?;
        let birth = BirthDate::parse(&self.dob).map_err(|e| library_error(e, Some("dob")))?;
        if birth.year().is_none() {
            return Err(ApiError::bad(
                "invalid_dob",
                "a birth year is required",
                Some("dob"),
            ));
        }
        if self.window == Some(0) {
            return Err(ApiError::bad(
                "invalid_window",
                "window must be at least one year",
                Some("window"),
            ));
        }
        let mut q = RiskQuery::new(zip, gender, birth);
        q.window_years = self.window;
        if let Some(y) = as_of_year {
            q.as_of_year = y;
        }
        Ok(q)
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad("invalid_request", e.to_string(), None))
}

fn table(cfg: &ServiceConfig) -> Result<&PopulationTable, ApiError> {
    cfg.table.as_deref().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "table_not_loaded",
            "no population table is loaded",
            None,
        )
    })
}

/// The `/api/estimate` body for a raw JSON request.
pub fn estimate_body(cfg: &ServiceConfig, body: &[u8]) -> Result<String, ApiError> {
    let table = table(cfg)?;
    let req: EstimateRequest = parse_json(body)?;
    let query = req.to_query(cfg.as_of_year)?;
    let report = risk_report(&query, table).map_err(|e| library_error(e, Some("dob")))?;
    Ok(report.to_canonical_json())
}

/// The `/api/whatif` body for a raw JSON request.
pub fn whatif_body(cfg: &ServiceConfig, body: &[u8]) -> Result<String, ApiError> {
    let table = table(cfg)?;
    let req: WhatIfRequest = parse_json(body)?;
    let query = req.person.to_query(cfg.as_of_year)?;
    let birth =
        BirthLevel::parse(&req.target_birth).map_err(|e| library_error(e, Some("target_birth")))?;
    let zip = ZipLevel::parse(&req.target_zip).map_err(|e| library_error(e, Some("target_zip")))?;
    let result = whatif(&query, table, KeyLevel::new(birth, zip)).map_err(|e| {
        let field = match &e {
            Error::RefinementRequested { field: "zip", .. } => Some("target_zip"),
            Error::RefinementRequested { .. } => Some("target_birth"),
            _ => Some("dob"),
        };
        library_error(e, field)
    })?;
    Ok(result.to_canonical_json())
}

pub fn health_body(cfg: &ServiceConfig) -> String {
    let loaded = if cfg.table.is_some() {
        "loaded"
    } else {
        "missing"
    };
    to_canonical_string(&json!({"status": "ok", "population_table": loaded, "version": VERSION}))
}

async fn estimate(State(cfg): State<Arc<ServiceConfig>>, body: Bytes) -> Response {
    match estimate_body(&cfg, &body) {
        Ok(b) => json_response(StatusCode::OK, b),
        Err(e) => e.into_response(),
    }
}

async fn what_if(State(cfg): State<Arc<ServiceConfig>>, body: Bytes) -> Response {
    match whatif_body(&cfg, &body) {
        Ok(b) => json_response(StatusCode::OK, b),
        Err(e) => e.into_response(),
    }
}

async fn health(State(cfg): State<Arc<ServiceConfig>>) -> Response {
    json_response(StatusCode::OK, health_body(&cfg))
}

fn too_large(cap: usize) -> ApiError {
    ApiError::new(
        StatusCode::PAYLOAD_TOO_LARGE,
        "payload_too_large",
        format!("upload exceeds {cap} bytes"),
        Some("file"),
    )
}

fn multipart_error(e: axum::extract::multipart::MultipartError, cap: usize) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        too_large(cap)
    } else {
        ApiError::bad("invalid_request", e.body_text(), None)
    }
}

async fn scrub(State(cfg): State<Arc<ServiceConfig>>, mut form: Multipart) -> Response {
    match scrub_inner(&cfg, &mut form).await {
        Ok(resp) => resp,
        Err(e) => e.into_response(),
    }
}

async fn scrub_inner(cfg: &ServiceConfig, form: &mut Multipart) -> Result<Response, ApiError> {
    let cap = cfg.upload_cap;
    let mut file: Option<Vec<u8>> = None;
    let mut mode: Option<String> = None;
    while let Some(mut field) = form
        .next_field()
        .await
        .map_err(|e| multipart_error(e, cap))?
    {
        match field.name() {
            Some("file") => {
                let mut buf = Vec::new();
                while let Some(chunk) = field.chunk().await.map_err(|e| multipart_error(e, cap))? {
                    if buf.len() + chunk.len() > cap {
                        return Err(too_large(cap));
                    }
                    buf.extend_from_slice(&chunk);
                }
                file = Some(buf);
            }
            Some("mode") => mode = Some(field.text().await.map_err(|e| multipart_error(e, cap))?),
            _ => {}
        }
    }
    let file =
        file.ok_or_else(|| ApiError::bad("invalid_request", "missing file part", Some("file")))?;
    let mode =
        mode.ok_or_else(|| ApiError::bad("invalid_request", "missing mode part", Some("mode")))?;
    let mode = BirthEdit::parse(&mode).map_err(|e| library_error(e, Some("mode")))?;
    let doc = CcrDocument::parse(file).map_err(|e| library_error(e, Some("file")))?;
    let edit = ccr_set_birth(&doc, mode).map_err(|e| library_error(e, Some("file")))?;
    let summary =
        HeaderValue::from_str(&edit.summary.to_canonical_json()).expect("canonical JSON is ASCII");
    Ok((
        StatusCode::OK,
        [
            (
                header::CONTENT_TYPE,
                HeaderValue::from_static("application/xml"),
            ),
            (HeaderName::from_static(SUMMARY_HEADER), summary),
        ],
        Body::from(edit.output),
    )
        .into_response())
}

pub fn router(cfg: ServiceConfig) -> Router {
    let cap = cfg.upload_cap;
    let ui = cfg.ui_dir.clone();
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any)
        .expose_headers([HeaderName::from_static(SUMMARY_HEADER)]);
    let api = Router::new()
        .route("/api/estimate", post(estimate))
        .route("/api/whatif", post(what_if))
        // multipart framing needs some room beyond the file itself
        .route(
            "/api/ccr/scrub",
            post(scrub).layer(DefaultBodyLimit::max(cap.saturating_add(64 * 1024))),
        )
        .route("/api/health", get(health))
        .with_state(Arc::new(cfg));
    let app = match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors)
}

pub async fn serve(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(cfg)).await
}
