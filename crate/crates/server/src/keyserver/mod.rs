//! Key server: accounts, identity-ownership proofs, public-key directory and
//! IBE parameter and private-key escrow.

pub mod api;
pub mod delivery;
pub mod journal;

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use mg_core::directory::unix_now;
use mg_core::ibe::{bb1, BilinearGroup, Bls12Group, MasterSecret, PublicParams};
use mg_core::scheme::password::derive_key;
use mg_core::scheme::rsa::decode_public_key;
use mg_core::{aead, normalize_identity, PublishedKey, SchemeId};
use rand::rngs::OsRng;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::error::{ApiError, ApiResult};
use api::*;
use delivery::{ProofDelivery, ProofMessage};
use journal::{Event, Journal};

const MAX_KEY_MATERIAL: usize = 64 * 1024;
const SEAL_ITERATIONS: u32 = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("a server passphrase is required to persist the IBE master secret")]
    MissingPassphrase,
    #[error("wrong server passphrase or corrupt IBE key file")]
    BadPassphrase,
    #[error("corrupt IBE key file: {0}")]
    CorruptParams(String),
}

pub struct KeyServerConfig {
    /// Journal and IBE key file location; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// Protects the IBE master secret at rest.
    pub passphrase: String,
    pub delivery: Arc<dyn ProofDelivery>,
    pub password_iterations: u32,
    pub proof_ttl: Duration,
    pub token_ttl: Duration,
    pub max_code_attempts: u32,
}

impl KeyServerConfig {
    pub fn in_memory(delivery: Arc<dyn ProofDelivery>) -> Self {
        KeyServerConfig {
            data_dir: None,
            passphrase: String::new(),
            delivery,
            password_iterations: 100_000,
            proof_ttl: Duration::from_secs(15 * 60),
            token_ttl: Duration::from_secs(24 * 60 * 60),
            max_code_attempts: 3,
        }
    }
}

struct Account {
    salt: [u8; 16],
    iterations: u32,
    verifier: [u8; 32],
    owned: BTreeSet<String>,
}

struct Proof {
    identity: String,
    username: String,
    code: String,
    expires: Instant,
    failures: u32,
    invalidated: bool,
}

struct Session {
    username: String,
    expires: Instant,
}

#[derive(Default)]
struct Store {
    accounts: HashMap<String, Account>,
    owners: HashMap<String, String>,
    keys: HashMap<String, PublishedKey>,
    proofs: HashMap<String, Proof>,
    sessions: HashMap<String, Session>,
    journal: Option<Journal>,
}

impl Store {
    fn apply(&mut self, event: Event) {
        match event {
            Event::AccountCreated { username, salt, iterations, verifier } => {
                let (Ok(salt), Ok(verifier)) = (hex::decode(salt), hex::decode(verifier)) else { return };
                let (Ok(salt), Ok(verifier)) = (salt.try_into(), verifier.try_into()) else { return };
                self.accounts.insert(username, Account { salt, iterations, verifier, owned: BTreeSet::new() });
            }
            Event::IdentityClaimed { identity, username } => {
                if let Some(a) = self.accounts.get_mut(&username) {
                    a.owned.insert(identity.clone());
                    self.owners.insert(identity, username);
                }
            }
            Event::IdentityReleased { identity } => {
                if let Some(owner) = self.owners.remove(&identity) {
                    if let Some(a) = self.accounts.get_mut(&owner) {
                        a.owned.remove(&identity);
                    }
                }
                self.keys.remove(&identity);
            }
            Event::KeyPublished { key } => {
                self.keys.insert(key.identity.clone(), key);
            }
        }
    }

    /// Journals `event` and then applies it.
    fn commit(&mut self, event: Event) -> ApiResult<()> {
        if let Some(j) = self.journal.as_mut() {
            j.append(&event).map_err(|e| ApiError::internal(format!("journal write failed: {e}")))?;
        }
        self.apply(event);
        Ok(())
    }
}

struct Inner {
    config: KeyServerConfig,
    state: Mutex<Store>,
    params: PublicParams<Bls12Group>,
    params_bytes: Vec<u8>,
    master: MasterSecret<Bls12Group>,
}

#[derive(Clone)]
pub struct KeyServer {
    inner: Arc<Inner>,
}

#[derive(Serialize, Deserialize)]
struct IbeKeyFile {
    #[serde(with = "mg_core::serde_b64")]
    params: Vec<u8>,
    /// `salt(16) ‖ iterations(u32 LE) ‖ nonce(12) ‖ AES-GCM(master)`.
    #[serde(with = "mg_core::serde_b64")]
    sealed_master: Vec<u8>,
}

fn seal_master(passphrase: &str, master: &[u8]) -> Result<Vec<u8>, StartupError> {
    let mut salt = [0u8; 16];
    OsRng.fill_bytes(&mut salt);
    let key = derive_key(passphrase, &salt, SEAL_ITERATIONS).map_err(|_| StartupError::MissingPassphrase)?;
    let mut out = salt.to_vec();
    out.extend_from_slice(&SEAL_ITERATIONS.to_le_bytes());
    let nonce = aead::random_nonce(&mut OsRng);
    out.extend_from_slice(&nonce);
    let header = out[..20].to_vec();
    out.extend_from_slice(&aead::seal(&key, &nonce, &header, master));
    Ok(out)
}

fn unseal_master(passphrase: &str, sealed: &[u8]) -> Result<Zeroizing<Vec<u8>>, StartupError> {
    if sealed.len() < 32 + aead::TAG_LEN {
        return Err(StartupError::CorruptParams("sealed master secret truncated".into()));
    }
    let iterations = u32::from_le_bytes(sealed[16..20].try_into().expect("length checked"));
    if iterations == 0 || iterations > mg_core::scheme::password::MAX_ITERATIONS {
        return Err(StartupError::CorruptParams("iteration count".into()));
    }
    let key = derive_key(passphrase, &sealed[..16], iterations).map_err(|_| StartupError::MissingPassphrase)?;
    let nonce: [u8; 12] = sealed[20..32].try_into().expect("length checked");
    aead::open(&key, &nonce, &sealed[..20], &sealed[32..])
        .map(Zeroizing::new)
        .map_err(|_| StartupError::BadPassphrase)
}

fn load_or_create_ibe(
    data_dir: Option<&Path>,
    passphrase: &str,
) -> Result<(PublicParams<Bls12Group>, MasterSecret<Bls12Group>), StartupError> {
    let grp = Bls12Group;
    let Some(dir) = data_dir else {
        return Ok(bb1::setup(&grp, &mut OsRng));
    };
    if passphrase.is_empty() {
        return Err(StartupError::MissingPassphrase);
    }
    let path = dir.join("ibe.json");
    if path.exists() {
        let file: IbeKeyFile = serde_json::from_slice(&std::fs::read(&path)?)
            .map_err(|e| StartupError::CorruptParams(e.to_string()))?;
        let params = PublicParams::decode(&grp, &file.params).map_err(|e| StartupError::CorruptParams(e.to_string()))?;
        let master_bytes = unseal_master(passphrase, &file.sealed_master)?;
        let master = MasterSecret::decode(&grp, &master_bytes).map_err(|e| StartupError::CorruptParams(e.to_string()))?;
        if grp.pair(&params.g1, &params.g2) != params.v0 || master.msk != grp.exp(&params.g2, &master.alpha) {
            return Err(StartupError::CorruptParams("master secret does not match parameters".into()));
        }
        return Ok((params, master));
    }
    let (params, master) = bb1::setup(&grp, &mut OsRng);
    let master_bytes = Zeroizing::new(master.encode(&grp));
    let file = IbeKeyFile { params: params.encode(&grp), sealed_master: seal_master(passphrase, &master_bytes)? };
    let tmp = dir.join("ibe.json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(&file).map_err(std::io::Error::other)?)?;
    std::fs::rename(&tmp, &path)?;
    Ok((params, master))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(axum::http::header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn random_hex(n: usize) -> String {
    let mut bytes = vec![0u8; n];
    OsRng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

fn valid_username(u: &str) -> bool {
    (1..=64).contains(&u.len()) && u.bytes().all(|b| b.is_ascii_alphanumeric() || b"._-".contains(&b))
}

fn identity_param(raw: &str) -> ApiResult<String> {
    normalize_identity(raw).map_err(ApiError::from)
}

fn unix_at(instant: Instant) -> u64 {
    unix_now() + instant.saturating_duration_since(Instant::now()).as_secs()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))
}

impl KeyServer {
    pub fn open(mut config: KeyServerConfig) -> Result<Self, StartupError> {
        let mut state = Store::default();
        if let Some(dir) = &config.data_dir {
            std::fs::create_dir_all(dir)?;
            let (journal, events) = Journal::open(&dir.join("journal.jsonl"))?;
            for e in events {
                state.apply(e);
            }
            state.journal = Some(journal);
        }
        let (params, master) = load_or_create_ibe(config.data_dir.as_deref(), &config.passphrase)?;
        config.passphrase.clear();
        Ok(KeyServer {
            inner: Arc::new(Inner {
                params_bytes: params.encode(&Bls12Group),
                params,
                master,
                state: Mutex::new(state),
                config,
            }),
        })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/accounts", post(create_account))
            .route("/session", post(login))
            .route("/identities/{id}", delete(release_identity))
            .route("/identities/{id}/proof", post(start_proof))
            .route("/identities/{id}/proof/{proof_id}", post(complete_proof))
            .route("/identities/{id}/publicKey", get(get_public_key).put(publish_key))
            .route("/ibe/params", get(ibe_params))
            .route("/ibe/extract", post(extract_key))
            .with_state(self.clone())
    }

    /// Encoded master secret, for leak tests that scan responses for it.
    #[doc(hidden)]
    pub fn master_secret_encoding(&self) -> Vec<u8> {
        self.inner.master.encode(&Bls12Group)
    }

    pub fn owner_of(&self, identity: &str) -> Option<String> {
        let id = normalize_identity(identity).ok()?;
        self.lock().owners.get(&id).cloned()
    }

    fn lock(&self) -> MutexGuard<'_, Store> {
        self.inner.state.lock().expect("key server state poisoned")
    }

    fn authenticate(&self, headers: &HeaderMap) -> ApiResult<String> {
        let token = bearer(headers).ok_or_else(ApiError::unauthorized)?;
        let mut state = self.lock();
        match state.sessions.get(token) {
            Some(s) if s.expires > Instant::now() => Ok(s.username.clone()),
            Some(_) => {
                state.sessions.remove(token);
                Err(ApiError::unauthorized())
            }
            None => Err(ApiError::unauthorized()),
        }
    }

    fn require_owner(state: &Store, identity: &str, username: &str) -> ApiResult<()> {
        if state.owners.get(identity).map(String::as_str) != Some(username) {
            return Err(ApiError::new(StatusCode::FORBIDDEN, "not_owner", format!("{username} does not own {identity}")));
        }
        Ok(())
    }
}

async fn create_account(State(ks): State<KeyServer>, Json(req): Json<Credentials>) -> ApiResult<(StatusCode, Json<AccountCreated>)> {
    if !valid_username(&req.username) {
        return Err(ApiError::bad_request("username must be 1-64 characters of [A-Za-z0-9._-]"));
    }
    if req.password.is_empty() {
        return Err(ApiError::bad_request("password must not be empty"));
    }
    let taken = || ApiError::new(StatusCode::CONFLICT, "username_taken", "username already exists");
    if ks.lock().accounts.contains_key(&req.username) {
        return Err(taken());
    }
    let iterations = ks.inner.config.password_iterations;
    let mut salt = [0u8; 16];
    OsRng.fill_bytes(&mut salt);
    let password = Zeroizing::new(req.password);
    let verifier = blocking(move || derive_key(&password, &salt, iterations)).await??;

    let mut state = ks.lock();
    if state.accounts.contains_key(&req.username) {
        return Err(taken());
    }
    state.commit(Event::AccountCreated {
        username: req.username.clone(),
        salt: hex::encode(salt),
        iterations,
        verifier: hex::encode(*verifier),
    })?;
    tracing::info!(username = %req.username, "account created");
    Ok((StatusCode::CREATED, Json(AccountCreated { username: req.username })))
}

async fn login(State(ks): State<KeyServer>, Json(req): Json<Credentials>) -> ApiResult<Json<SessionToken>> {
    let bad = || ApiError::new(StatusCode::UNAUTHORIZED, "bad_credentials", "unknown username or wrong password");
    let (salt, iterations, verifier) = {
        let state = ks.lock();
        let a = state.accounts.get(&req.username).ok_or_else(bad)?;
        (a.salt, a.iterations, a.verifier)
    };
    if req.password.is_empty() {
        return Err(bad());
    }
    let password = Zeroizing::new(req.password);
    let derived = blocking(move || derive_key(&password, &salt, iterations)).await??;
    if !ct_eq(&derived[..], &verifier) {
        return Err(bad());
    }
    let token = random_hex(32);
    let expires = Instant::now() + ks.inner.config.token_ttl;
    let mut state = ks.lock();
    let now = Instant::now();
    state.sessions.retain(|_, s| s.expires > now);
    state.sessions.insert(token.clone(), Session { username: req.username, expires });
    Ok(Json(SessionToken { token, expires_at: unix_at(expires) }))
}

async fn start_proof(
    State(ks): State<KeyServer>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<(StatusCode, Json<ProofStarted>)> {
    let username = ks.authenticate(&headers)?;
    let identity = identity_param(&id)?;
    let message = {
        let mut state = ks.lock();
        if let Some(owner) = state.owners.get(&identity) {
            if owner != &username {
                return Err(ApiError::new(StatusCode::CONFLICT, "identity_held", format!("{identity} is owned by another account")));
            }
        }
        let now = Instant::now();
        state.proofs.retain(|_, p| p.expires > now);
        let proof_id = random_hex(16);
        let code = format!("{:06}", OsRng.gen_range(0..1_000_000u32));
        let expires = now + ks.inner.config.proof_ttl;
        state.proofs.insert(
            proof_id.clone(),
            Proof { identity: identity.clone(), username, code: code.clone(), expires, failures: 0, invalidated: false },
        );
        ProofMessage { identity: identity.clone(), proof_id, code, expires_at: unix_at(expires) }
    };
    ks.inner
        .config
        .delivery
        .deliver(&message)
        .map_err(|e| ApiError::internal(format!("proof delivery failed: {e}")))?;
    Ok((
        StatusCode::CREATED,
        Json(ProofStarted { proof_id: message.proof_id, identity, expires_at: message.expires_at }),
    ))
}

async fn complete_proof(
    State(ks): State<KeyServer>,
    headers: HeaderMap,
    UrlPath((id, proof_id)): UrlPath<(String, String)>,
    Json(req): Json<ProofCode>,
) -> ApiResult<Json<IdentityOwned>> {
    let username = ks.authenticate(&headers)?;
    let identity = identity_param(&id)?;
    let max_failures = ks.inner.config.max_code_attempts;
    let mut state = ks.lock();
    let unknown = || ApiError::new(StatusCode::NOT_FOUND, "unknown_proof", "no such proof");
    let proof = state.proofs.get_mut(&proof_id).ok_or_else(unknown)?;
    if proof.identity != identity || proof.username != username {
        return Err(unknown());
    }
    if proof.invalidated || proof.expires <= Instant::now() {
        return Err(ApiError::new(StatusCode::GONE, "proof_expired", "proof expired or invalidated; start a new one"));
    }
    if !ct_eq(proof.code.as_bytes(), req.code.trim().as_bytes()) {
        proof.failures += 1;
        if proof.failures >= max_failures {
            proof.invalidated = true;
        }
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_code", "incorrect proof code"));
    }
    state.proofs.remove(&proof_id);
    match state.owners.get(&identity) {
        Some(owner) if owner == &username => {}
        Some(_) => {
            return Err(ApiError::new(StatusCode::CONFLICT, "identity_held", format!("{identity} is owned by another account")))
        }
        None => state.commit(Event::IdentityClaimed { identity: identity.clone(), username: username.clone() })?,
    }
    tracing::info!(%identity, %username, "identity claimed");
    Ok(Json(IdentityOwned { identity, owner: username }))
}

async fn release_identity(
    State(ks): State<KeyServer>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<StatusCode> {
    let username = ks.authenticate(&headers)?;
    let identity = identity_param(&id)?;
    let mut state = ks.lock();
    KeyServer::require_owner(&state, &identity, &username)?;
    state.commit(Event::IdentityReleased { identity: identity.clone() })?;
    tracing::info!(%identity, "identity released");
    Ok(StatusCode::NO_CONTENT)
}

async fn publish_key(
    State(ks): State<KeyServer>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<PublishRequest>,
) -> ApiResult<StatusCode> {
    let username = ks.authenticate(&headers)?;
    let identity = identity_param(&id)?;
    if req.key_material.is_empty() || req.key_material.len() > MAX_KEY_MATERIAL {
        return Err(ApiError::bad_request("key material must be 1 byte to 64 KiB"));
    }
    match req.scheme_id {
        SchemeId::Rsa => {
            decode_public_key(&req.key_material)?;
        }
        other => return Err(ApiError::bad_request(format!("the {other} scheme has no public keys to publish"))),
    }
    let mut state = ks.lock();
    KeyServer::require_owner(&state, &identity, &username)?;
    state.commit(Event::KeyPublished {
        key: PublishedKey { identity, scheme_id: req.scheme_id, key_material: req.key_material, published_at: unix_now() },
    })?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_public_key(State(ks): State<KeyServer>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<PublishedKey>> {
    let identity = identity_param(&id)?;
    ks.lock()
        .keys
        .get(&identity)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no key published for {identity}")))
}

async fn ibe_params(State(ks): State<KeyServer>) -> Json<IbeParams> {
    Json(IbeParams { params: ks.inner.params_bytes.clone() })
}

async fn extract_key(
    State(ks): State<KeyServer>,
    headers: HeaderMap,
    Json(req): Json<ExtractRequest>,
) -> ApiResult<Json<ExtractedKey>> {
    let username = ks.authenticate(&headers)?;
    let identity = identity_param(&req.identity)?;
    KeyServer::require_owner(&ks.lock(), &identity, &username)?;
    let inner = ks.inner.clone();
    let id = identity.clone();
    let key = blocking(move || -> mg_core::Result<Vec<u8>> {
        let grp = Bls12Group;
        let v = bb1::hash_identity(&grp, &id)?;
        Ok(bb1::extract(&grp, &inner.params, &inner.master, v, &mut OsRng).encode(&grp))
    })
    .await??;
    Ok(Json(ExtractedKey { identity, key }))
}
