//! Encrypted on-disk store of key-system records.
//!
//! File layout: `salt(16) ‖ iterations(u32 LE) ‖ nonce(12) ‖ AES-256-GCM(json)`
//! with the salt and iteration count as associated data. The key is
//! PBKDF2-HMAC-SHA256 of the master password.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::aead::{self, KEY_LEN, NONCE_LEN};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::scheme::password::{derive_key, DEFAULT_ITERATIONS, MAX_ITERATIONS, SALT_LEN};
use crate::scheme::KeySystemRecord;

const HEADER_LEN: usize = SALT_LEN + 4;

#[derive(Serialize, Deserialize)]
struct Body {
    version: u32,
    records: Vec<KeySystemRecord>,
}

pub struct Keystore {
    path: PathBuf,
    salt: [u8; SALT_LEN],
    iterations: u32,
    key: Zeroizing<[u8; KEY_LEN]>,
    records: Vec<KeySystemRecord>,
}

impl std::fmt::Debug for Keystore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keystore")
            .field("path", &self.path)
            .field("records", &self.records.len())
            .finish_non_exhaustive()
    }
}

impl Keystore {
    pub fn init(path: impl AsRef<Path>, master_password: &str) -> Result<Self> {
        Self::init_with_iterations(path, master_password, DEFAULT_ITERATIONS)
    }

    pub fn init_with_iterations(path: impl AsRef<Path>, master_password: &str, iterations: u32) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if path.exists() {
            return Err(Error::Exists(path.display().to_string()));
        }
        if iterations == 0 || iterations > MAX_ITERATIONS {
            return Err(Error::InvalidInput(format!("unsupported iteration count {iterations}")));
        }
        let mut salt = [0u8; SALT_LEN];
        OsRng.fill_bytes(&mut salt);
        let key = derive_key(master_password, &salt, iterations)?;
        let store = Keystore { path, salt, iterations, key, records: Vec::new() };
        store.save()?;
        Ok(store)
    }

    pub fn open(path: impl AsRef<Path>, master_password: &str) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::NotFound(path.display().to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        if bytes.len() < HEADER_LEN + NONCE_LEN + aead::TAG_LEN {
            return Err(Error::CorruptStore("file truncated".into()));
        }
        let (header, rest) = bytes.split_at(HEADER_LEN);
        let (nonce, ciphertext) = rest.split_at(NONCE_LEN);
        let salt: [u8; SALT_LEN] = header[..SALT_LEN].try_into().expect("length checked");
        let iterations = u32::from_le_bytes(header[SALT_LEN..].try_into().expect("length checked"));
        if iterations == 0 || iterations > MAX_ITERATIONS {
            return Err(Error::CorruptStore(format!("iteration count {iterations}")));
        }
        let key = derive_key(master_password, &salt, iterations)?;
        let nonce: [u8; NONCE_LEN] = nonce.try_into().expect("length checked");
        let plaintext = Zeroizing::new(
            aead::open(&key, &nonce, header, ciphertext).map_err(|_| Error::WrongPassword)?,
        );
        let body: Body =
            serde_json::from_slice(&plaintext).map_err(|e| Error::CorruptStore(e.to_string()))?;
        if body.version != 1 {
            return Err(Error::CorruptStore(format!("unsupported version {}", body.version)));
        }
        Ok(Keystore { path, salt, iterations, key, records: body.records })
    }

    /// Opens the store, creating an empty one if the file does not exist.
    pub fn open_or_init(path: impl AsRef<Path>, master_password: &str, iterations: u32) -> Result<Self> {
        match Self::open(path.as_ref(), master_password) {
            Err(Error::NotFound(_)) => Self::init_with_iterations(path, master_password, iterations),
            other => other,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Records ordered by scheme, identity, then fingerprint.
    pub fn records(&self) -> &[KeySystemRecord] {
        &self.records
    }

    pub fn get(&self, fingerprint: &Fingerprint) -> Option<&KeySystemRecord> {
        self.records.iter().find(|r| &r.fingerprint == fingerprint)
    }

    /// Inserts or replaces the record with the same fingerprint, then saves.
    pub fn put(&mut self, record: KeySystemRecord) -> Result<()> {
        self.records.retain(|r| r.fingerprint != record.fingerprint);
        self.records.push(record);
        self.records.sort_by(|a, b| {
            (a.scheme_id as u8, &a.identity, a.fingerprint.0).cmp(&(b.scheme_id as u8, &b.identity, b.fingerprint.0))
        });
        self.save()
    }

    pub fn remove(&mut self, fingerprint: &Fingerprint) -> Result<KeySystemRecord> {
        let index = self
            .records
            .iter()
            .position(|r| &r.fingerprint == fingerprint)
            .ok_or_else(|| Error::NotFound(fingerprint.to_hex()))?;
        let record = self.records.remove(index);
        self.save()?;
        Ok(record)
    }

    /// Writes the whole store to a temporary file and renames it into place.
    pub fn save(&self) -> Result<()> {
        let body = Zeroizing::new(
            serde_json::to_vec(&Body { version: 1, records: self.records.clone() })
                .map_err(|e| Error::CorruptStore(e.to_string()))?,
        );
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(&self.salt);
        header.extend_from_slice(&self.iterations.to_le_bytes());
        let nonce = aead::random_nonce(&mut OsRng);
        let ciphertext = aead::seal(&self.key, &nonce, &header, &body);

        let dir = match self.path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir)?;
        let file_name = self.path.file_name().and_then(|n| n.to_str()).unwrap_or("keystore");
        let tmp = dir.join(format!(".{file_name}.{:016x}.tmp", OsRng.next_u64()));
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&header)?;
        file.write_all(&nonce)?;
        file.write_all(&ciphertext)?;
        file.sync_all()?;
        drop(file);
        fs::rename(&tmp, &self.path).inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })?;
        Ok(())
    }
}
