//! Request and response bodies of the key server.

use mg_core::SchemeId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccountCreated {
    pub username: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: String,
    pub expires_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProofStarted {
    pub proof_id: String,
    pub identity: String,
    pub expires_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProofCode {
    pub code: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityOwned {
    pub identity: String,
    pub owner: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublishRequest {
    pub scheme_id: SchemeId,
    #[serde(with = "mg_core::serde_b64")]
    pub key_material: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IbeParams {
    #[serde(with = "mg_core::serde_b64")]
    pub params: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractRequest {
    pub identity: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractedKey {
    pub identity: String,
    #[serde(with = "mg_core::serde_b64")]
    pub key: Vec<u8>,
}
