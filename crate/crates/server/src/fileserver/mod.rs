//! Capability-addressed blob storage. Anyone may upload; a blob can only be
//! fetched by presenting the capability returned at upload.

use std::collections::HashMap;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{ConnectInfo, DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use mg_core::Capability;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ApiError, ApiResult};

pub const DEFAULT_MAX_BLOB: usize = 25 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct FileServerConfig {
    /// Blob directory; `None` keeps blobs in memory.
    pub data_dir: Option<PathBuf>,
    pub max_blob: usize,
    /// Requests allowed per client IP per window.
    pub rate_limit: u32,
    pub rate_window: Duration,
}

impl Default for FileServerConfig {
    fn default() -> Self {
        FileServerConfig {
            data_dir: None,
            max_blob: DEFAULT_MAX_BLOB,
            rate_limit: 600,
            rate_window: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Uploaded {
    pub capability: Capability,
}

enum Storage {
    Memory(Mutex<HashMap<String, Bytes>>),
    Disk(PathBuf),
}

struct Inner {
    config: FileServerConfig,
    storage: Storage,
    windows: Mutex<HashMap<IpAddr, (Instant, u32)>>,
}

#[derive(Clone)]
pub struct FileServer {
    inner: Arc<Inner>,
}

/// Stored name for a capability, so a directory listing reveals nothing usable.
fn blob_name(capability: &Capability) -> String {
    hex::encode(Sha256::digest(capability.as_str().as_bytes()))
}

impl FileServer {
    pub fn open(config: FileServerConfig) -> std::io::Result<Self> {
        let storage = match &config.data_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                Storage::Disk(dir.clone())
            }
            None => Storage::Memory(Mutex::new(HashMap::new())),
        };
        Ok(FileServer { inner: Arc::new(Inner { config, storage, windows: Mutex::new(HashMap::new()) }) })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/files", post(upload))
            .route("/files/{capability}", get(download))
            .layer(DefaultBodyLimit::max(self.inner.config.max_blob))
            .with_state(self.clone())
    }

    /// Raw stored bytes for a capability, for leak tests.
    #[doc(hidden)]
    pub fn stored_bytes(&self, capability: &Capability) -> Option<Vec<u8>> {
        self.read(capability).ok().flatten().map(|b| b.to_vec())
    }

    fn check_rate(&self, ip: IpAddr) -> ApiResult<()> {
        let cfg = &self.inner.config;
        let mut windows = self.inner.windows.lock().expect("poisoned");
        let now = Instant::now();
        let entry = windows.entry(ip).or_insert((now, 0));
        if now.duration_since(entry.0) >= cfg.rate_window {
            *entry = (now, 0);
        }
        entry.1 += 1;
        if entry.1 > cfg.rate_limit {
            return Err(ApiError::new(StatusCode::TOO_MANY_REQUESTS, "rate_limited", "too many requests; slow down"));
        }
        Ok(())
    }

    fn write(&self, capability: &Capability, blob: Bytes) -> std::io::Result<bool> {
        match &self.inner.storage {
            Storage::Memory(m) => {
                let mut m = m.lock().expect("poisoned");
                if m.contains_key(capability.as_str()) {
                    return Ok(false);
                }
                m.insert(capability.as_str().to_owned(), blob);
                Ok(true)
            }
            Storage::Disk(dir) => {
                let path = dir.join(blob_name(capability));
                if path.exists() {
                    return Ok(false);
                }
                let mut suffix = [0u8; 8];
                OsRng.fill_bytes(&mut suffix);
                let tmp = dir.join(format!(".{}.tmp", hex::encode(suffix)));
                std::fs::write(&tmp, &blob)?;
                std::fs::rename(&tmp, &path)?;
                Ok(true)
            }
        }
    }

    fn read(&self, capability: &Capability) -> std::io::Result<Option<Bytes>> {
        match &self.inner.storage {
            Storage::Memory(m) => Ok(m.lock().expect("poisoned").get(capability.as_str()).cloned()),
            Storage::Disk(dir) => match std::fs::read(dir.join(blob_name(capability))) {
                Ok(b) => Ok(Some(Bytes::from(b))),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e),
            },
        }
    }
}

async fn upload(
    State(fs): State<FileServer>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<(StatusCode, Json<Uploaded>)> {
    fs.check_rate(peer.ip())?;
    let body = body.map_err(|rejection| {
        if rejection.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                "payload_too_large",
                format!("blobs are limited to {} bytes", fs.inner.config.max_blob),
            )
        } else {
            ApiError::bad_request(rejection.body_text())
        }
    })?;
    if body.is_empty() {
        return Err(ApiError::bad_request("empty upload"));
    }
    let size = body.len();
    let fs2 = fs.clone();
    let capability = tokio::task::spawn_blocking(move || -> std::io::Result<Capability> {
        loop {
            let capability = Capability::random(&mut OsRng);
            if fs2.write(&capability, body.clone())? {
                return Ok(capability);
            }
        }
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(|e| ApiError::internal(format!("storage: {e}")))?;
    tracing::info!(size, "blob stored");
    Ok((StatusCode::CREATED, Json(Uploaded { capability })))
}

async fn download(
    State(fs): State<FileServer>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    UrlPath(raw): UrlPath<String>,
) -> ApiResult<impl IntoResponse> {
    fs.check_rate(peer.ip())?;
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such blob");
    let capability: Capability = raw.parse().map_err(|_| not_found())?;
    let fs2 = fs.clone();
    let blob = tokio::task::spawn_blocking(move || fs2.read(&capability))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::internal(format!("storage: {e}")))?
        .ok_or_else(not_found)?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], blob))
}
