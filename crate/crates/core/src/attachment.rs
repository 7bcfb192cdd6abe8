//! Encrypted file attachments.
//!
//! A file is sealed under a fresh content key and uploaded as an opaque blob
//! (`nonce ‖ ciphertext`). The manifest holding the capability, content key
//! and blob hash travels inside the encrypted message body, so the file server
//! sees neither plaintext nor keys.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zeroize::Zeroizing;

use crate::aead::{self, KEY_LEN, NONCE_LEN};
use crate::error::{Error, Result};
use crate::scheme::SecureRng;

pub const CAPABILITY_BYTES: usize = 16;

/// Unguessable handle naming a blob on the file server: 16 random bytes as
/// unpadded base64url.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Capability(String);

impl Capability {
    pub fn random(rng: &mut dyn SecureRng) -> Self {
        let mut bytes = [0u8; CAPABILITY_BYTES];
        rng.fill_bytes(&mut bytes);
        Capability(URL_SAFE_NO_PAD.encode(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Capability {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        match URL_SAFE_NO_PAD.decode(&s) {
            Ok(b) if b.len() == CAPABILITY_BYTES && URL_SAFE_NO_PAD.encode(&b) == s => Ok(Capability(s)),
            _ => Err(Error::InvalidInput(format!("invalid capability {s:?}"))),
        }
    }
}

impl std::str::FromStr for Capability {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Capability::try_from(s.to_owned())
    }
}

impl From<Capability> for String {
    fn from(c: Capability) -> String {
        c.0
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentManifest {
    pub capability: Capability,
    #[serde(with = "crate::serde_b64")]
    pub content_key: Vec<u8>,
    /// SHA-256 of the plaintext file.
    #[serde(with = "hex::serde")]
    pub sha256: [u8; 32],
    pub filename: String,
    /// Plaintext size in bytes.
    pub size: u64,
}

impl fmt::Debug for AttachmentManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AttachmentManifest")
            .field("capability", &self.capability)
            .field("sha256", &hex::encode(self.sha256))
            .field("filename", &self.filename)
            .field("size", &self.size)
            .finish_non_exhaustive()
    }
}

pub trait BlobStore: Send + Sync {
    fn put(&self, blob: &[u8]) -> Result<Capability>;
    /// `Error::NotFound` for unknown capabilities.
    fn get(&self, capability: &Capability) -> Result<Vec<u8>>;
}

#[derive(Clone, Default)]
pub struct MemoryBlobStore {
    blobs: Arc<Mutex<HashMap<Capability, Vec<u8>>>>,
}

impl MemoryBlobStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Overwrites a stored blob, for substitution tests.
    pub fn replace(&self, capability: &Capability, blob: Vec<u8>) {
        self.blobs.lock().expect("poisoned").insert(capability.clone(), blob);
    }
}

impl BlobStore for MemoryBlobStore {
    fn put(&self, blob: &[u8]) -> Result<Capability> {
        let capability = Capability::random(&mut rand::rngs::OsRng);
        self.blobs.lock().expect("poisoned").insert(capability.clone(), blob.to_vec());
        Ok(capability)
    }

    fn get(&self, capability: &Capability) -> Result<Vec<u8>> {
        self.blobs
            .lock()
            .expect("poisoned")
            .get(capability)
            .cloned()
            .ok_or_else(|| Error::NotFound(capability.to_string()))
    }
}

fn blob_aad(filename: &str) -> Vec<u8> {
    let mut aad = b"messageguard attachment\0".to_vec();
    aad.extend_from_slice(filename.as_bytes());
    aad
}

/// Seals `contents` under a fresh key, returning the blob and the key.
pub fn seal_attachment(rng: &mut dyn SecureRng, filename: &str, contents: &[u8]) -> (Vec<u8>, Zeroizing<[u8; KEY_LEN]>) {
    let key = Zeroizing::new(aead::random_key(rng));
    let nonce = aead::random_nonce(rng);
    let mut blob = nonce.to_vec();
    blob.extend_from_slice(&aead::seal(&key, &nonce, &blob_aad(filename), contents));
    (blob, key)
}

pub fn upload(
    store: &dyn BlobStore,
    rng: &mut dyn SecureRng,
    filename: &str,
    contents: &[u8],
) -> Result<AttachmentManifest> {
    let (blob, key) = seal_attachment(rng, filename, contents);
    let capability = store.put(&blob)?;
    Ok(AttachmentManifest {
        capability,
        content_key: key.to_vec(),
        sha256: Sha256::digest(contents).into(),
        filename: filename.to_owned(),
        size: contents.len() as u64,
    })
}

/// Decrypts a downloaded blob and checks it against the manifest hash.
pub fn open_blob(manifest: &AttachmentManifest, blob: &[u8]) -> Result<Vec<u8>> {
    let key: [u8; KEY_LEN] = manifest.content_key.as_slice().try_into().map_err(|_| Error::IntegrityFailure)?;
    let key = Zeroizing::new(key);
    if blob.len() < NONCE_LEN {
        return Err(Error::IntegrityFailure);
    }
    let (nonce, ct) = blob.split_at(NONCE_LEN);
    let nonce: [u8; NONCE_LEN] = nonce.try_into().expect("split at nonce length");
    let plaintext = aead::open(&key, &nonce, &blob_aad(&manifest.filename), ct)?;
    if plaintext.len() as u64 != manifest.size || Sha256::digest(&plaintext).as_slice() != manifest.sha256 {
        return Err(Error::IntegrityFailure);
    }
    Ok(plaintext)
}

pub fn download(store: &dyn BlobStore, manifest: &AttachmentManifest) -> Result<Vec<u8>> {
    open_blob(manifest, &store.get(&manifest.capability)?)
}

const BODY_MAGIC: &[u8] = b"\0MGA1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Envelope {
    #[serde(with = "crate::serde_b64")]
    text: Vec<u8>,
    attachments: Vec<AttachmentManifest>,
}

/// Message body with attachment manifests.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MessageBody {
    pub text: Vec<u8>,
    pub attachments: Vec<AttachmentManifest>,
}

impl MessageBody {
    /// Bodies without attachments encode as the bare text.
    pub fn encode(&self) -> Vec<u8> {
        if self.attachments.is_empty() && !self.text.starts_with(BODY_MAGIC) {
            return self.text.clone();
        }
        let json = serde_json::to_vec(&Envelope { text: self.text.clone(), attachments: self.attachments.clone() })
            .expect("envelope serializes");
        let mut out = BODY_MAGIC.to_vec();
        out.extend_from_slice(&json);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        match bytes.strip_prefix(BODY_MAGIC) {
            None => Ok(MessageBody { text: bytes.to_vec(), attachments: Vec::new() }),
            Some(json) => {
                let env: Envelope = serde_json::from_slice(json)
                    .map_err(|e| Error::InvalidInput(format!("attachment envelope: {e}")))?;
                Ok(MessageBody { text: env.text, attachments: env.attachments })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    #[test]
    fn capability_format() {
        let c = Capability::random(&mut OsRng);
        assert_eq!(c.as_str().len(), 22);
        assert!(c.as_str().parse::<Capability>().is_ok());
        assert!("short".parse::<Capability>().is_err());
        assert!("AAAAAAAAAAAAAAAAAAAAAB".parse::<Capability>().is_err());
    }

    #[test]
    fn upload_download_and_substitution() {
        let store = MemoryBlobStore::new();
        let data = b"attachment contents".repeat(100);
        let m = upload(&store, &mut OsRng, "notes.txt", &data).unwrap();
        assert_eq!(download(&store, &m).unwrap(), data);

        let other = upload(&store, &mut OsRng, "notes.txt", b"other").unwrap();
        store.replace(&m.capability, store.get(&other.capability).unwrap());
        assert!(matches!(download(&store, &m), Err(Error::IntegrityFailure)));

        let mut wrong_hash = other.clone();
        wrong_hash.sha256 = m.sha256;
        assert!(matches!(download(&store, &wrong_hash), Err(Error::IntegrityFailure)));
        assert_eq!(other.sha256, <[u8; 32]>::from(Sha256::digest(b"other")));

        let mut wrong_key = other.clone();
        wrong_key.content_key[0] ^= 1;
        assert!(matches!(download(&store, &wrong_key), Err(Error::IntegrityFailure)));
        assert!(matches!(
            download(&store, &AttachmentManifest { capability: Capability::random(&mut OsRng), ..other }),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn body_envelope() {
        let plain = MessageBody { text: b"hi".to_vec(), attachments: vec![] };
        assert_eq!(plain.encode(), b"hi");
        assert_eq!(MessageBody::decode(b"hi").unwrap(), plain);

        let store = MemoryBlobStore::new();
        let m = upload(&store, &mut OsRng, "a.bin", b"abc").unwrap();
        let body = MessageBody { text: b"see attached".to_vec(), attachments: vec![m] };
        assert_eq!(MessageBody::decode(&body.encode()).unwrap(), body);

        let tricky = MessageBody { text: b"\0MGA1 not an envelope".to_vec(), attachments: vec![] };
        assert_eq!(MessageBody::decode(&tricky.encode()).unwrap(), tricky);
    }
}
