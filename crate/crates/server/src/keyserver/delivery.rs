//! Channels that deliver ownership-proof codes to the identity's owner.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofMessage {
    pub identity: String,
    pub proof_id: String,
    pub code: String,
    pub expires_at: u64,
}

pub trait ProofDelivery: Send + Sync {
    fn deliver(&self, message: &ProofMessage) -> std::io::Result<()>;
}

/// Keeps the latest message per identity in memory, for tests.
#[derive(Clone, Default)]
pub struct CaptureDelivery {
    inbox: Arc<Mutex<HashMap<String, ProofMessage>>>,
}

impl CaptureDelivery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn latest(&self, identity: &str) -> Option<ProofMessage> {
        self.inbox.lock().expect("poisoned").get(identity).cloned()
    }
}

impl ProofDelivery for CaptureDelivery {
    fn deliver(&self, message: &ProofMessage) -> std::io::Result<()> {
        self.inbox
            .lock()
            .expect("poisoned")
            .insert(message.identity.clone(), message.clone());
        Ok(())
    }
}

/// Writes each message to `<dir>/<identity>.json`, standing in for a mail
/// transport.
pub struct OutboxDelivery {
    dir: PathBuf,
}

impl OutboxDelivery {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(OutboxDelivery { dir })
    }

    pub fn file_for(dir: &std::path::Path, identity: &str) -> PathBuf {
        let safe: String = identity
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "@._-+".contains(c) { c } else { '_' })
            .collect();
        dir.join(format!("{safe}.json"))
    }
}

impl ProofDelivery for OutboxDelivery {
    fn deliver(&self, message: &ProofMessage) -> std::io::Result<()> {
        let path = Self::file_for(&self.dir, &message.identity);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(message).map_err(std::io::Error::other)?)?;
        std::fs::rename(tmp, path)
    }
}
