//! Localhost agent: serves the overlay pages and holds the unlocked key store
//! for the crypto API they call. Only the agent's own origin (or clients that
//! send no Origin, such as local tools) may use the crypto endpoints.

pub mod assets;
pub mod bench;

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mg_core::{
    armor_decode, parse_package, resolve_scheme, EncryptOptions, Error, KeyDirectory, Keyring, Keystore, SchemeEnv,
    SchemeId,
};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::client::KeyServerClient;
use crate::error::{ApiError, ApiResult};
use assets::AssetBundle;
use bench::BenchRecord;

pub const DEFAULT_PORT: u16 = 8747;

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub keystore: PathBuf,
    pub key_server: Option<String>,
    pub assets_dir: Option<PathBuf>,
    pub bench_results: PathBuf,
    pub session_idle: Duration,
}

impl AgentConfig {
    pub fn new(keystore: impl Into<PathBuf>, bench_results: impl Into<PathBuf>) -> Self {
        AgentConfig {
            keystore: keystore.into(),
            key_server: None,
            assets_dir: None,
            bench_results: bench_results.into(),
            session_idle: Duration::from_secs(30 * 60),
        }
    }
}

struct Session {
    token: String,
    ring: Arc<Keyring>,
    last_used: Instant,
}

struct Inner {
    config: AgentConfig,
    allowed_origins: Vec<String>,
    assets: AssetBundle,
    session: Mutex<Option<Session>>,
    bench_file: Mutex<()>,
}

#[derive(Clone)]
pub struct Agent {
    inner: Arc<Inner>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UnlockRequest {
    pub master_password: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UnlockResponse {
    pub token: String,
    pub idle_timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySystemInfo {
    pub scheme_id: SchemeId,
    pub fingerprint: String,
    pub identity: String,
    pub label: String,
    pub can_have_recipients: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PackageRequest {
    /// Fingerprint (or prefix), label, or scheme name.
    pub key_system: String,
    #[serde(default)]
    pub recipients: Vec<String>,
    pub plaintext: String,
    #[serde(default)]
    pub sign: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PackageResponse {
    pub armored: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UnpackageRequest {
    pub armored: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UnpackageResponse {
    pub plaintext: String,
    pub scheme_id: SchemeId,
    pub fingerprint: String,
}

/// Attaches the scheme's remediation form to recoverable failures.
fn scheme_error(scheme_id: SchemeId, e: Error) -> ApiError {
    let remediation = resolve_scheme(scheme_id as u8).map(|s| s.handle_error(&e)).ok();
    let api = ApiError::from(e);
    match remediation {
        Some(r) if r.code.is_recoverable() => api.with_remediation(r),
        _ => api,
    }
}

fn locked() -> ApiError {
    ApiError::new(StatusCode::LOCKED, "locked", "unlock the agent first")
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))
}

impl Agent {
    /// `origin` is the agent's own base URL, e.g. `http://127.0.0.1:8747`.
    pub fn new(config: AgentConfig, origin: &str) -> std::io::Result<Self> {
        let origin = origin.trim_end_matches('/').to_owned();
        let mut allowed_origins = vec![origin.clone()];
        if let Some(port) = origin.rsplit(':').next() {
            allowed_origins.push(format!("http://localhost:{port}"));
            allowed_origins.push(format!("http://127.0.0.1:{port}"));
        }
        let assets = AssetBundle::load(config.assets_dir.as_deref(), &origin)?;
        Ok(Agent {
            inner: Arc::new(Inner {
                config,
                allowed_origins,
                assets,
                session: Mutex::new(None),
                bench_file: Mutex::new(()),
            }),
        })
    }

    pub fn router(&self) -> Router {
        let crypto = Router::new()
            .route("/api/unlock", post(unlock))
            .route("/api/keysystems", get(list_keysystems))
            .route("/api/package", post(package))
            .route("/api/unpackage", post(unpackage))
            .route_layer(middleware::from_fn_with_state(self.clone(), origin_policy));
        let mut router = Router::new()
            .merge(crypto)
            .route("/api/bench", post(bench_intake).options(bench_preflight));
        for asset in &assets::ASSETS {
            router = router.route(asset.route, get(serve_asset));
        }
        router
            .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
            .with_state(self.clone())
    }

    pub fn lock(&self) {
        *self.inner.session.lock().expect("poisoned") = None;
    }

    fn session(&self, headers: &HeaderMap) -> ApiResult<Arc<Keyring>> {
        let mut guard = self.inner.session.lock().expect("poisoned");
        let Some(session) = guard.as_mut() else { return Err(locked()) };
        if session.last_used.elapsed() >= self.inner.config.session_idle {
            *guard = None;
            return Err(locked());
        }
        let presented = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim);
        if presented != Some(session.token.as_str()) {
            return Err(ApiError::unauthorized());
        }
        session.last_used = Instant::now();
        Ok(session.ring.clone())
    }

    fn directory(&self) -> Option<KeyServerClient> {
        self.inner.config.key_server.as_deref().map(KeyServerClient::new)
    }
}

async fn origin_policy(State(agent): State<Agent>, request: Request, next: Next) -> Response {
    if let Some(origin) = request.headers().get(header::ORIGIN) {
        let ok = origin
            .to_str()
            .map(|o| agent.inner.allowed_origins.iter().any(|a| a == o))
            .unwrap_or(false);
        if !ok {
            return ApiError::new(StatusCode::FORBIDDEN, "forbidden_origin", "requests from this origin are not allowed")
                .into_response();
        }
    }
    next.run(request).await
}

async fn serve_asset(State(agent): State<Agent>, uri: axum::http::Uri) -> Response {
    match agent.inner.assets.get(uri.path()) {
        Some((content_type, body)) => (
            [
                (header::CONTENT_TYPE, content_type),
                (header::X_CONTENT_TYPE_OPTIONS, "nosniff"),
                (header::CACHE_CONTROL, "no-store"),
            ],
            body.to_owned(),
        )
            .into_response(),
        None => ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route").into_response(),
    }
}

async fn unlock(State(agent): State<Agent>, Json(req): Json<UnlockRequest>) -> ApiResult<Json<UnlockResponse>> {
    let path = agent.inner.config.keystore.clone();
    let password = Zeroizing::new(req.master_password);
    let ring = blocking(move || -> mg_core::Result<Keyring> {
        let store = Keystore::open(&path, &password)?;
        Keyring::from_records(store.records())
    })
    .await?
    .map_err(|e| match e {
        Error::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "no_keystore", "no key store found; create one with the CLI"),
        other => ApiError::from(other),
    })?;
    let mut bytes = [0u8; 32];
    OsRng.fill_bytes(&mut bytes);
    let token = hex::encode(bytes);
    *agent.inner.session.lock().expect("poisoned") =
        Some(Session { token: token.clone(), ring: Arc::new(ring), last_used: Instant::now() });
    tracing::info!("agent unlocked");
    Ok(Json(UnlockResponse { token, idle_timeout_secs: agent.inner.config.session_idle.as_secs() }))
}

async fn list_keysystems(State(agent): State<Agent>, headers: HeaderMap) -> ApiResult<Json<Vec<KeySystemInfo>>> {
    let ring = agent.session(&headers)?;
    Ok(Json(
        ring.systems()
            .map(|s| KeySystemInfo {
                scheme_id: s.scheme_id(),
                fingerprint: s.fingerprint().to_hex(),
                identity: s.identity().to_owned(),
                label: s.label().to_owned(),
                can_have_recipients: s.can_have_recipients(),
            })
            .collect(),
    ))
}

async fn package(
    State(agent): State<Agent>,
    headers: HeaderMap,
    Json(req): Json<PackageRequest>,
) -> ApiResult<Json<PackageResponse>> {
    let ring = agent.session(&headers)?;
    let directory = agent.directory();
    let armored = blocking(move || -> ApiResult<String> {
        let system = ring.select(&req.key_system).map_err(ApiError::from)?;
        let scheme_id = system.scheme_id();
        let plaintext = Zeroizing::new(req.plaintext.into_bytes());
        let mut rng = OsRng;
        let mut env = SchemeEnv::new(&mut rng);
        if let Some(d) = directory.as_ref() {
            env = env.with_directory(d as &dyn KeyDirectory);
        }
        let package = system
            .encrypt(&mut env, &req.recipients, &plaintext, EncryptOptions { sign: req.sign })
            .map_err(|e| scheme_error(scheme_id, e))?;
        Ok(package.to_armor().map_err(ApiError::from)?.into_string())
    })
    .await??;
    Ok(Json(PackageResponse { armored }))
}

async fn unpackage(
    State(agent): State<Agent>,
    headers: HeaderMap,
    Json(req): Json<UnpackageRequest>,
) -> ApiResult<Json<UnpackageResponse>> {
    let ring = agent.session(&headers)?;
    let response = blocking(move || -> ApiResult<UnpackageResponse> {
        let bytes = armor_decode(req.armored.trim()).map_err(ApiError::from)?;
        let package = parse_package(&bytes).map_err(|e| ApiError::from(Error::from(e)))?;
        let opened = ring
            .open_with_password(&package, req.password.as_deref())
            .map_err(|e| scheme_error(package.scheme_id, e))?;
        let plaintext = String::from_utf8(opened.plaintext).map_err(|_| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "binary_payload", "message is not text; use the CLI")
        })?;
        Ok(UnpackageResponse { plaintext, scheme_id: package.scheme_id, fingerprint: opened.fingerprint.to_hex() })
    })
    .await??;
    Ok(Json(response))
}

fn cors(mut response: Response) -> Response {
    let h = response.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("POST, OPTIONS"));
    h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type"));
    response
}

async fn bench_preflight() -> Response {
    cors(StatusCode::NO_CONTENT.into_response())
}

/// Accepts from any origin: records are timing numbers only and the bench
/// pages are served from a separate fixture origin.
async fn bench_intake(State(agent): State<Agent>, body: Bytes) -> Response {
    let result = (|| -> ApiResult<BenchRecord> {
        let record: BenchRecord =
            serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed bench record: {e}")))?;
        record.validate().map_err(ApiError::bad_request)?;
        Ok(record)
    })();
    let response = match result {
        Err(e) => e.into_response(),
        Ok(record) => {
            let _guard = agent.inner.bench_file.lock().expect("poisoned");
            let mut line = serde_json::to_vec(&record).expect("record serializes");
            line.push(b'\n');
            let written = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&agent.inner.config.bench_results)
                .and_then(|mut f| f.write_all(&line));
            match written {
                Ok(()) => StatusCode::NO_CONTENT.into_response(),
                Err(e) => ApiError::internal(format!("cannot write bench results: {e}")).into_response(),
            }
        }
    };
    cors(response)
}
