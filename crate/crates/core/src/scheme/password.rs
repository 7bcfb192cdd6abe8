//! Shared-password key system.
//!
//! Key material is PBKDF2-HMAC-SHA256(password, salt, iterations). The salt and
//! iteration count travel in the package's single recipient block so anyone who
//! knows the password can re-derive the key. A four-byte verification tag lets a
//! wrong password be told apart from a corrupted package.

use std::collections::BTreeMap;

use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::Sha256;
use zeroize::Zeroizing;

use crate::aead::{self, KEY_LEN};
use crate::error::{Error, Result};
use crate::fingerprint::{compute_fingerprint, Fingerprint};
use crate::package::{Flags, MessagePackage, RecipientBlock, SchemeId};
use crate::scheme::{
    base_error, ensure_scheme, EncryptOptions, ErrorCode, FormSchema, FormValues, InputKind,
    KeyScheme, KeySystem, KeySystemRecord, SchemeEnv, SchemeError,
};
use crate::varint::Reader;

pub const SALT_LEN: usize = 16;
pub const TAG_LEN: usize = 4;
pub const DEFAULT_ITERATIONS: u32 = 100_000;
/// Upper bound accepted from untrusted packages.
pub const MAX_ITERATIONS: u32 = 10_000_000;

const CHECK_LABEL: &[u8] = b"messageguard password check";

pub fn derive_key(password: &str, salt: &[u8], iterations: u32) -> Result<Zeroizing<[u8; KEY_LEN]>> {
    if password.is_empty() {
        return Err(Error::EmptyPassword);
    }
    if iterations == 0 {
        return Err(Error::InvalidInput("iterations must be at least 1".into()));
    }
    let mut key = Zeroizing::new([0u8; KEY_LEN]);
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, iterations, key.as_mut());
    Ok(key)
}

fn verification_tag(key: &[u8; KEY_LEN]) -> [u8; TAG_LEN] {
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("any key length");
    mac.update(CHECK_LABEL);
    let out = mac.finalize().into_bytes();
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&out[..TAG_LEN]);
    tag
}

fn fingerprint_for(salt: &[u8; SALT_LEN], tag: &[u8; TAG_LEN]) -> Fingerprint {
    let mut material = Vec::with_capacity(SALT_LEN + TAG_LEN);
    material.extend_from_slice(salt);
    material.extend_from_slice(tag);
    compute_fingerprint(&material).expect("non-empty")
}

fn block_params(block: &RecipientBlock) -> Result<([u8; SALT_LEN], u32)> {
    let mut r = Reader::new(&block.wrapped_key);
    let salt = r.array::<SALT_LEN>()?;
    let iterations = u32::from_le_bytes(r.array()?);
    r.finish()?;
    if iterations == 0 || iterations > MAX_ITERATIONS {
        return Err(Error::InvalidInput(format!("unsupported iteration count {iterations}")));
    }
    Ok((salt, iterations))
}

pub struct PasswordSystem {
    label: String,
    salt: [u8; SALT_LEN],
    iterations: u32,
    tag: [u8; TAG_LEN],
    fingerprint: Fingerprint,
    stored: bool,
    key: Option<Zeroizing<[u8; KEY_LEN]>>,
}

impl PasswordSystem {
    pub fn create<R: RngCore + ?Sized>(
        label: &str,
        password: &str,
        stored: bool,
        iterations: u32,
        rng: &mut R,
    ) -> Result<Self> {
        if label.trim().is_empty() {
            return Err(Error::InvalidInput("label must not be empty".into()));
        }
        let mut salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        Self::derive(label, password, salt, iterations, stored)
    }

    fn derive(label: &str, password: &str, salt: [u8; SALT_LEN], iterations: u32, stored: bool) -> Result<Self> {
        let key = derive_key(password, &salt, iterations)?;
        let tag = verification_tag(&key);
        Ok(PasswordSystem {
            label: label.trim().to_owned(),
            salt,
            iterations,
            tag,
            fingerprint: fingerprint_for(&salt, &tag),
            stored,
            key: Some(key),
        })
    }

    /// Re-derives the sender's key system from a received package and a
    /// password shared out of band.
    pub fn from_package(label: &str, password: &str, package: &MessagePackage, stored: bool) -> Result<Self> {
        ensure_scheme(SchemeId::Password, package)?;
        let block = package.recipients.first().ok_or(Error::NoMatchingKey)?;
        let (salt, iterations) = block_params(block)?;
        let system = Self::derive(label, password, salt, iterations, stored)?;
        if system.fingerprint != block.fingerprint {
            return Err(Error::WrongPassword);
        }
        Ok(system)
    }

    /// Supplies the password for a system restored without key material.
    pub fn unlock(&self, password: &str) -> Result<Self> {
        let system = Self::derive(&self.label, password, self.salt, self.iterations, self.stored)?;
        if system.tag != self.tag {
            return Err(Error::WrongPassword);
        }
        Ok(system)
    }

    pub fn is_stored(&self) -> bool {
        self.stored
    }

    pub fn has_key(&self) -> bool {
        self.key.is_some()
    }

    pub fn salt(&self) -> &[u8; SALT_LEN] {
        &self.salt
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    fn key(&self) -> Result<&[u8; KEY_LEN]> {
        self.key
            .as_deref()
            .ok_or_else(|| Error::PasswordRequired(self.label.clone()))
    }

    pub fn encrypt_with<R: RngCore + ?Sized>(&self, rng: &mut R, plaintext: &[u8]) -> Result<MessagePackage> {
        let key = self.key()?;
        let mut wrapped = Vec::with_capacity(SALT_LEN + 4);
        wrapped.extend_from_slice(&self.salt);
        wrapped.extend_from_slice(&self.iterations.to_le_bytes());
        let mut nonce = [0u8; aead::NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let mut package = MessagePackage {
            scheme_id: SchemeId::Password,
            flags: Flags::for_parts(1, false),
            recipients: vec![RecipientBlock { fingerprint: self.fingerprint, wrapped_key: wrapped }],
            nonce,
            ciphertext: Vec::new(),
            signature: None,
        };
        package.ciphertext = aead::seal(key, &package.nonce, &package.associated_data(), plaintext);
        Ok(package)
    }

    pub fn from_state(record: &KeySystemRecord) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptStore(format!("password key system: {m}"));
        let mut r = Reader::new(&record.state);
        let stored = match r.byte().map_err(|_| corrupt("empty state"))? {
            0 => false,
            1 => true,
            _ => return Err(corrupt("bad stored flag")),
        };
        let salt = r.array::<SALT_LEN>().map_err(|_| corrupt("salt"))?;
        let iterations = u32::from_le_bytes(r.array().map_err(|_| corrupt("iterations"))?);
        let tag = r.array::<TAG_LEN>().map_err(|_| corrupt("tag"))?;
        let key = if stored {
            Some(Zeroizing::new(r.array::<KEY_LEN>().map_err(|_| corrupt("key"))?))
        } else {
            None
        };
        r.finish().map_err(|_| corrupt("trailing bytes"))?;
        let fingerprint = fingerprint_for(&salt, &tag);
        if fingerprint != record.fingerprint {
            return Err(corrupt("fingerprint mismatch"));
        }
        Ok(PasswordSystem {
            label: record.label().to_owned(),
            salt,
            iterations,
            tag,
            fingerprint,
            stored,
            key,
        })
    }
}

impl KeySystem for PasswordSystem {
    fn scheme_id(&self) -> SchemeId {
        SchemeId::Password
    }

    fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    fn identity(&self) -> &str {
        ""
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn can_have_recipients(&self) -> bool {
        false
    }

    fn encrypt(
        &self,
        env: &mut SchemeEnv<'_>,
        _recipients: &[String],
        plaintext: &[u8],
        options: EncryptOptions,
    ) -> Result<MessagePackage> {
        if options.sign {
            return Err(Error::Unsupported("password"));
        }
        self.encrypt_with(env.rng, plaintext)
    }

    fn decrypt(&self, package: &MessagePackage) -> Result<Vec<u8>> {
        ensure_scheme(SchemeId::Password, package)?;
        let Some(block) = package.recipient(&self.fingerprint) else {
            let same_salt = package
                .recipients
                .iter()
                .filter_map(|b| block_params(b).ok())
                .any(|(salt, _)| salt == self.salt);
            return Err(if same_salt { Error::WrongPassword } else { Error::FingerprintMismatch(self.fingerprint) });
        };
        if block_params(block)? != (self.salt, self.iterations) {
            return Err(Error::IntegrityFailure);
        }
        aead::open(self.key()?, &package.nonce, &package.associated_data(), &package.ciphertext)
    }

    fn serialize(&self) -> KeySystemRecord {
        let mut state = Vec::with_capacity(1 + SALT_LEN + 4 + TAG_LEN + KEY_LEN);
        state.push(u8::from(self.stored));
        state.extend_from_slice(&self.salt);
        state.extend_from_slice(&self.iterations.to_le_bytes());
        state.extend_from_slice(&self.tag);
        if self.stored {
            state.extend_from_slice(self.key.as_deref().expect("stored systems always hold their key"));
        }
        let mut attributes = BTreeMap::new();
        attributes.insert("label".to_owned(), self.label.clone());
        attributes.insert("stored".to_owned(), self.stored.to_string());
        attributes.insert("iterations".to_owned(), self.iterations.to_string());
        KeySystemRecord {
            scheme_id: SchemeId::Password,
            fingerprint: self.fingerprint,
            identity: String::new(),
            can_have_recipients: false,
            attributes,
            state,
        }
    }
}

pub struct PasswordScheme;

impl PasswordScheme {
    fn password_form() -> FormSchema {
        FormSchema::builder()
            .field("password", "Shared password", InputKind::Password, true)
            .build()
    }
}

fn parse_stored(values: &FormValues) -> Result<bool> {
    match values.get("stored").map(String::as_str) {
        None | Some("") | Some("yes") | Some("true") => Ok(true),
        Some("no") | Some("false") => Ok(false),
        Some(other) => Err(Error::InvalidInput(format!("stored must be yes or no, got {other:?}"))),
    }
}

fn parse_iterations(values: &FormValues) -> Result<u32> {
    match values.get("iterations") {
        None => Ok(DEFAULT_ITERATIONS),
        Some(v) => v
            .parse::<u32>()
            .ok()
            .filter(|n| (1..=MAX_ITERATIONS).contains(n))
            .ok_or_else(|| Error::InvalidInput(format!("bad iteration count {v:?}"))),
    }
}

impl KeyScheme for PasswordScheme {
    fn id(&self) -> SchemeId {
        SchemeId::Password
    }

    fn form(&self) -> FormSchema {
        FormSchema::builder()
            .field("label", "Name for this password", InputKind::Text, true)
            .field("password", "Shared password", InputKind::Password, true)
            .field("stored", "Remember the derived key", InputKind::Choice, false)
            .build()
    }

    fn create(&self, values: &FormValues, env: &mut SchemeEnv<'_>) -> Result<Box<dyn KeySystem>> {
        let password = values.get("password").map(String::as_str).unwrap_or_default();
        if password.is_empty() {
            return Err(Error::EmptyPassword);
        }
        self.form().check(values)?;
        let system = PasswordSystem::create(
            &values["label"],
            password,
            parse_stored(values)?,
            parse_iterations(values)?,
            env.rng,
        )?;
        Ok(Box::new(system))
    }

    /// Only the label can change; a new password is a new key system.
    fn update(&self, system: &dyn KeySystem, values: &FormValues, _env: &mut SchemeEnv<'_>) -> Result<Box<dyn KeySystem>> {
        let mut record = system.serialize();
        if record.scheme_id != SchemeId::Password {
            return Err(Error::SchemeMismatch { expected: "password", found: record.scheme_id.name() });
        }
        if let Some(label) = values.get("label").filter(|l| !l.trim().is_empty()) {
            record.attributes.insert("label".into(), label.trim().to_owned());
        }
        Ok(Box::new(PasswordSystem::from_state(&record)?))
    }

    fn deserialize(&self, record: &KeySystemRecord) -> Result<Box<dyn KeySystem>> {
        Ok(Box::new(PasswordSystem::from_state(record)?))
    }

    fn handle_error(&self, error: &Error) -> SchemeError {
        if let Some(e) = base_error(error) {
            return e;
        }
        match error {
            Error::WrongPassword => SchemeError::new(ErrorCode::WrongPassword, "the password does not match", Self::password_form()),
            Error::PasswordRequired(label) => SchemeError::new(
                ErrorCode::MissingKey,
                format!("enter the shared password for {label}"),
                Self::password_form(),
            ),
            Error::NoMatchingKey | Error::FingerprintMismatch(_) => SchemeError::new(
                ErrorCode::MissingKey,
                "no saved password matches this message; enter the shared password",
                Self::password_form(),
            ),
            other => SchemeError::other(other.to_string()),
        }
    }
}
