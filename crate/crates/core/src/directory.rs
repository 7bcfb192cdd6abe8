//! Client view of the key server: public-key discovery and publication, IBE
//! parameters and private-key escrow.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::rngs::OsRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ibe::{bb1, Bls12Group, MasterSecret, PublicParams};
use crate::identity::normalize_identity;
use crate::package::SchemeId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedKey {
    pub identity: String,
    pub scheme_id: SchemeId,
    #[serde(with = "crate::serde_b64")]
    pub key_material: Vec<u8>,
    /// Seconds since the Unix epoch.
    pub published_at: u64,
}

/// Operations a key scheme needs from the key server. Public lookups must not
/// require credentials; publication and extraction act on behalf of an
/// authenticated owner.
pub trait KeyDirectory: Send + Sync {
    /// `Error::UnknownRecipient` when nothing is published for `identity`.
    fn public_key(&self, identity: &str) -> Result<PublishedKey>;
    fn publish_key(&self, identity: &str, scheme_id: SchemeId, key_material: &[u8]) -> Result<()>;
    fn ibe_params(&self) -> Result<Vec<u8>>;
    fn extract_ibe_key(&self, identity: &str) -> Result<Vec<u8>>;
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

struct Shared {
    keys: HashMap<String, PublishedKey>,
    params: PublicParams<Bls12Group>,
    master: MasterSecret<Bls12Group>,
}

/// In-process stand-in for the key server, for tests and benchmarks.
#[derive(Clone)]
pub struct MemoryKeyServer {
    shared: Arc<Mutex<Shared>>,
}

impl Default for MemoryKeyServer {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryKeyServer {
    pub fn new() -> Self {
        let (params, master) = bb1::setup(&Bls12Group, &mut OsRng);
        MemoryKeyServer {
            shared: Arc::new(Mutex::new(Shared { keys: HashMap::new(), params, master })),
        }
    }

    /// A client that has proven ownership of `owned`.
    pub fn client(&self, owned: &[&str]) -> MemoryDirectory {
        MemoryDirectory {
            server: self.clone(),
            owned: owned.iter().filter_map(|i| normalize_identity(i).ok()).collect(),
        }
    }
}

pub struct MemoryDirectory {
    server: MemoryKeyServer,
    owned: HashSet<String>,
}

impl MemoryDirectory {
    fn check_owner(&self, identity: &str) -> Result<String> {
        let id = normalize_identity(identity)?;
        if !self.owned.contains(&id) {
            return Err(Error::NotOwner(id));
        }
        Ok(id)
    }
}

impl KeyDirectory for MemoryDirectory {
    fn public_key(&self, identity: &str) -> Result<PublishedKey> {
        let id = normalize_identity(identity)?;
        let shared = self.server.shared.lock().expect("poisoned");
        shared.keys.get(&id).cloned().ok_or(Error::UnknownRecipient(id))
    }

    fn publish_key(&self, identity: &str, scheme_id: SchemeId, key_material: &[u8]) -> Result<()> {
        let id = self.check_owner(identity)?;
        let mut shared = self.server.shared.lock().expect("poisoned");
        shared.keys.insert(
            id.clone(),
            PublishedKey { identity: id, scheme_id, key_material: key_material.to_vec(), published_at: unix_now() },
        );
        Ok(())
    }

    fn ibe_params(&self) -> Result<Vec<u8>> {
        let shared = self.server.shared.lock().expect("poisoned");
        Ok(shared.params.encode(&Bls12Group))
    }

    fn extract_ibe_key(&self, identity: &str) -> Result<Vec<u8>> {
        let id = self.check_owner(identity)?;
        let shared = self.server.shared.lock().expect("poisoned");
        let v = bb1::hash_identity(&Bls12Group, &id)?;
        let key = bb1::extract(&Bls12Group, &shared.params, &shared.master, v, &mut OsRng);
        Ok(key.encode(&Bls12Group))
    }
}
