//! Blocking HTTP clients for the key server and file server.

use std::time::Duration;

use mg_core::{BlobStore, Capability, Error, KeyDirectory, PublishedKey, Result, SchemeId};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::de::DeserializeOwned;
use ureq::http::Response;
use ureq::Body;

use crate::error::ErrorBody;
use crate::keyserver::api::*;

/// Everything except unreserved URL characters.
const SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~').remove(b'@');

const MAX_RESPONSE: u64 = 64 * 1024 * 1024;

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .into()
}

fn transport(base: &str, e: ureq::Error) -> Error {
    Error::ServerUnreachable(format!("{base}: {e}"))
}

fn read_json<T: DeserializeOwned>(resp: &mut Response<Body>) -> Result<T> {
    resp.body_mut()
        .with_config()
        .limit(MAX_RESPONSE)
        .read_json()
        .map_err(|e| Error::Remote(format!("bad response body: {e}")))
}

/// Error body of a failed call, or a placeholder when it is not JSON.
fn error_body(resp: &mut Response<Body>) -> ErrorBody {
    let status = resp.status();
    read_json::<ErrorBody>(resp).unwrap_or_else(|_| ErrorBody {
        code: "http".into(),
        message: format!("HTTP {status}"),
        remediation: None,
    })
}

/// Key-server client. Public lookups work without logging in.
pub struct KeyServerClient {
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl KeyServerClient {
    pub fn new(base_url: &str) -> Self {
        KeyServerClient { base: base_url.trim_end_matches('/').to_owned(), token: None, agent: agent() }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn identity_url(&self, identity: &str, rest: &str) -> String {
        self.url(&format!("/identities/{}{rest}", utf8_percent_encode(identity, SEGMENT)))
    }

    fn auth(&self) -> Result<String> {
        self.token
            .as_ref()
            .map(|t| format!("Bearer {t}"))
            .ok_or_else(|| Error::InvalidInput("not logged in to the key server".into()))
    }

    fn fail(&self, mut resp: Response<Body>, identity: &str) -> Error {
        let status = resp.status().as_u16();
        let body = error_body(&mut resp);
        match (status, body.code.as_str()) {
            (403, _) => Error::NotOwner(identity.to_owned()),
            (409, _) => Error::Exists(body.message),
            (404, _) => Error::NotFound(body.message),
            (401, _) => Error::Remote(format!("unauthorized: {}", body.message)),
            (400, "invalid_identity") => Error::InvalidIdentity(identity.to_owned()),
            _ => Error::Remote(format!("{} ({status}): {}", body.code, body.message)),
        }
    }

    pub fn create_account(&self, username: &str, password: &str) -> Result<()> {
        let resp = self
            .agent
            .post(&self.url("/accounts"))
            .send_json(Credentials { username: username.into(), password: password.into() })
            .map_err(|e| transport(&self.base, e))?;
        if resp.status() == 201 {
            Ok(())
        } else {
            Err(self.fail(resp, ""))
        }
    }

    pub fn login(&mut self, username: &str, password: &str) -> Result<SessionToken> {
        let mut resp = self
            .agent
            .post(&self.url("/session"))
            .send_json(Credentials { username: username.into(), password: password.into() })
            .map_err(|e| transport(&self.base, e))?;
        if resp.status() != 200 {
            return Err(self.fail(resp, ""));
        }
        let token: SessionToken = read_json(&mut resp)?;
        self.token = Some(token.token.clone());
        Ok(token)
    }

    pub fn start_proof(&self, identity: &str) -> Result<ProofStarted> {
        let mut resp = self
            .agent
            .post(&self.identity_url(identity, "/proof"))
            .header("Authorization", &self.auth()?)
            .send_empty()
            .map_err(|e| transport(&self.base, e))?;
        if resp.status() != 201 {
            return Err(self.fail(resp, identity));
        }
        read_json(&mut resp)
    }

    pub fn complete_proof(&self, identity: &str, proof_id: &str, code: &str) -> Result<IdentityOwned> {
        let url = self.identity_url(identity, &format!("/proof/{}", utf8_percent_encode(proof_id, SEGMENT)));
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &self.auth()?)
            .send_json(ProofCode { code: code.into() })
            .map_err(|e| transport(&self.base, e))?;
        match resp.status().as_u16() {
            200 => read_json(&mut resp),
            400 => Err(Error::InvalidInput(error_body(&mut resp).message)),
            410 => Err(Error::Remote(error_body(&mut resp).message)),
            _ => Err(self.fail(resp, identity)),
        }
    }

    pub fn release(&self, identity: &str) -> Result<()> {
        let resp = self
            .agent
            .delete(&self.identity_url(identity, ""))
            .header("Authorization", &self.auth()?)
            .call()
            .map_err(|e| transport(&self.base, e))?;
        if resp.status() == 204 {
            Ok(())
        } else {
            Err(self.fail(resp, identity))
        }
    }
}

impl KeyDirectory for KeyServerClient {
    fn public_key(&self, identity: &str) -> Result<PublishedKey> {
        let mut resp = self
            .agent
            .get(&self.identity_url(identity, "/publicKey"))
            .call()
            .map_err(|e| transport(&self.base, e))?;
        match resp.status().as_u16() {
            200 => read_json(&mut resp),
            404 => Err(Error::UnknownRecipient(identity.to_owned())),
            _ => Err(self.fail(resp, identity)),
        }
    }

    fn publish_key(&self, identity: &str, scheme_id: SchemeId, key_material: &[u8]) -> Result<()> {
        let resp = self
            .agent
            .put(&self.identity_url(identity, "/publicKey"))
            .header("Authorization", &self.auth()?)
            .send_json(PublishRequest { scheme_id, key_material: key_material.to_vec() })
            .map_err(|e| transport(&self.base, e))?;
        if resp.status() == 204 {
            Ok(())
        } else {
            Err(self.fail(resp, identity))
        }
    }

    fn ibe_params(&self) -> Result<Vec<u8>> {
        let mut resp = self.agent.get(&self.url("/ibe/params")).call().map_err(|e| transport(&self.base, e))?;
        if resp.status() != 200 {
            return Err(self.fail(resp, ""));
        }
        Ok(read_json::<IbeParams>(&mut resp)?.params)
    }

    fn extract_ibe_key(&self, identity: &str) -> Result<Vec<u8>> {
        let mut resp = self
            .agent
            .post(&self.url("/ibe/extract"))
            .header("Authorization", &self.auth()?)
            .send_json(ExtractRequest { identity: identity.into() })
            .map_err(|e| transport(&self.base, e))?;
        if resp.status() != 200 {
            return Err(self.fail(resp, identity));
        }
        Ok(read_json::<ExtractedKey>(&mut resp)?.key)
    }
}

pub struct FileServerClient {
    base: String,
    agent: ureq::Agent,
}

impl FileServerClient {
    pub fn new(base_url: &str) -> Self {
        FileServerClient { base: base_url.trim_end_matches('/').to_owned(), agent: agent() }
    }
}

impl BlobStore for FileServerClient {
    fn put(&self, blob: &[u8]) -> Result<Capability> {
        let mut resp = self
            .agent
            .post(&format!("{}/files", self.base))
            .header("Content-Type", "application/octet-stream")
            .send(blob)
            .map_err(|e| transport(&self.base, e))?;
        match resp.status().as_u16() {
            201 => Ok(read_json::<crate::fileserver::Uploaded>(&mut resp)?.capability),
            413 => {
                // The server states its limit in the message.
                let message = error_body(&mut resp).message;
                let limit = message.split_whitespace().find_map(|w| w.parse().ok()).unwrap_or(0);
                Err(Error::PayloadTooLarge { size: blob.len() as u64, limit })
            }
            _ => {
                let body = error_body(&mut resp);
                Err(Error::Remote(format!("{}: {}", body.code, body.message)))
            }
        }
    }

    fn get(&self, capability: &Capability) -> Result<Vec<u8>> {
        let mut resp = self
            .agent
            .get(&format!("{}/files/{}", self.base, capability))
            .call()
            .map_err(|e| transport(&self.base, e))?;
        match resp.status().as_u16() {
            200 => resp
                .body_mut()
                .with_config()
                .limit(MAX_RESPONSE)
                .read_to_vec()
                .map_err(|e| Error::Remote(e.to_string())),
            404 => Err(Error::NotFound(capability.to_string())),
            _ => {
                let body = error_body(&mut resp);
                Err(Error::Remote(format!("{}: {}", body.code, body.message)))
            }
        }
    }
}
