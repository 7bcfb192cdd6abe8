//! The saved key-server login, kept beside the key store.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedSession {
    pub key_server: String,
    pub username: String,
    pub token: String,
    pub expires_at: u64,
}

pub fn path_for(keystore: &Path) -> PathBuf {
    let mut name = keystore.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".session");
    keystore.with_file_name(name)
}

pub fn load(path: &Path) -> Option<SavedSession> {
    serde_json::from_slice(&std::fs::read(path).ok()?).ok()
}

/// Written owner-only: the token is a bearer credential.
pub fn save(path: &Path, session: &SavedSession) -> std::io::Result<()> {
    let mut options = std::fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options.open(path)?;
    file.write_all(&serde_json::to_vec_pretty(session).map_err(std::io::Error::other)?)?;
    file.sync_all()
}
