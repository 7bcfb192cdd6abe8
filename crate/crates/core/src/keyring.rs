//! The set of key systems a user holds, and package routing to them.

use crate::armor::{armor_decode, PayloadSpan};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::package::{parse_package, MessagePackage, SchemeId};
use crate::scheme::password::PasswordSystem;
use crate::scheme::{resolve_scheme, KeySystem, KeySystemRecord};

/// Result of opening a package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Opened {
    pub fingerprint: Fingerprint,
    pub plaintext: Vec<u8>,
}

fn unique<T>(mut hits: Vec<T>) -> Option<T> {
    (hits.len() == 1).then(|| hits.remove(0))
}

#[derive(Default)]
pub struct Keyring {
    systems: Vec<Box<dyn KeySystem>>,
}

impl Keyring {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: &[KeySystemRecord]) -> Result<Self> {
        let mut ring = Keyring::new();
        for record in records {
            ring.add(resolve_scheme(record.scheme_id as u8)?.deserialize(record)?);
        }
        Ok(ring)
    }

    /// Adds a system, replacing any with the same fingerprint.
    pub fn add(&mut self, system: Box<dyn KeySystem>) {
        self.systems.retain(|s| s.fingerprint() != system.fingerprint());
        self.systems.push(system);
    }

    pub fn systems(&self) -> impl Iterator<Item = &dyn KeySystem> {
        self.systems.iter().map(|s| s.as_ref())
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn get(&self, fingerprint: &Fingerprint) -> Option<&dyn KeySystem> {
        self.systems().find(|s| &s.fingerprint() == fingerprint)
    }

    /// Finds a system by full fingerprint hex, hex prefix (at least 4
    /// characters, unambiguous), label, or scheme name when exactly one system
    /// of that scheme exists.
    pub fn select(&self, selector: &str) -> Result<&dyn KeySystem> {
        let sel = selector.trim().to_ascii_lowercase();
        if sel.len() >= 4 && sel.bytes().all(|b| b.is_ascii_hexdigit()) {
            let hits: Vec<_> = self.systems().filter(|s| s.fingerprint().to_hex().starts_with(&sel)).collect();
            if let Some(s) = unique(hits) {
                return Ok(s);
            }
        }
        let hits: Vec<_> = self.systems().filter(|s| s.label().eq_ignore_ascii_case(&sel)).collect();
        if let Some(s) = unique(hits) {
            return Ok(s);
        }
        if let Some(id) = SchemeId::from_name(&sel) {
            let hits: Vec<_> = self.systems().filter(|s| s.scheme_id() == id).collect();
            if let Some(s) = unique(hits) {
                return Ok(s);
            }
        }
        Err(Error::UnknownKeySystem(selector.to_owned()))
    }

    /// Decrypts with the first system addressed by the package. When systems
    /// are addressed but all fail, the first failure is returned. A signature
    /// by a key held in this ring is checked first; signatures by other keys
    /// are left to the caller.
    pub fn open(&self, package: &MessagePackage) -> Result<Opened> {
        if let Some(sig) = &package.signature {
            if let Some(signer) = self.get(&sig.signer_fingerprint) {
                if !signer.verify(&package.signed_data(), &sig.signature)? {
                    return Err(Error::BadSignature);
                }
            }
        }
        let mut first_error = None;
        for system in self.systems().filter(|s| s.scheme_id() == package.scheme_id) {
            let fingerprint = system.fingerprint();
            if package.recipient(&fingerprint).is_none() {
                continue;
            }
            match system.decrypt(package) {
                Ok(plaintext) => return Ok(Opened { fingerprint, plaintext }),
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        Err(first_error.unwrap_or(Error::NoMatchingKey))
    }

    /// Like [`Keyring::open`], but for password packages falls back to
    /// deriving the key from `password` without storing anything.
    pub fn open_with_password(&self, package: &MessagePackage, password: Option<&str>) -> Result<Opened> {
        match (self.open(package), password) {
            (Ok(o), _) => Ok(o),
            (Err(e), Some(pw)) if package.scheme_id == SchemeId::Password => {
                if !matches!(e, Error::NoMatchingKey | Error::PasswordRequired(_)) {
                    return Err(e);
                }
                let system = PasswordSystem::from_package("ephemeral", pw, package, false)?;
                let plaintext = system.decrypt(package)?;
                Ok(Opened { fingerprint: system.fingerprint(), plaintext })
            }
            (Err(e), _) => Err(e),
        }
    }

    pub fn open_armored(&self, armored: &str, password: Option<&str>) -> Result<Opened> {
        let package = parse_package(&armor_decode(armored)?)?;
        self.open_with_password(&package, password)
    }

    /// Opens every payload found in `text`, in order.
    pub fn open_spans(&self, spans: &[PayloadSpan], password: Option<&str>) -> Vec<Result<Opened>> {
        spans.iter().map(|s| self.open_armored(s.armored.as_str(), password)).collect()
    }
}
