//! Key management contracts.
//!
//! A [`KeyScheme`] is the factory side of a key-management approach: it
//! describes the inputs it needs as a [`FormSchema`], builds key systems from
//! filled-in forms and turns failures into remediation prompts. A
//! [`KeySystem`] is one instantiated scheme bound to one identity; it encrypts
//! for any number of recipients and decrypts packages addressed to its own
//! fingerprint.

pub mod ibe;
pub mod password;
pub mod rsa;

use std::collections::BTreeMap;

use rand::CryptoRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::directory::KeyDirectory;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::package::{MessagePackage, SchemeId};

pub use self::ibe::IbeScheme;
pub use self::password::PasswordScheme;
pub use self::rsa::RsaScheme;

/// Object-safe handle on a cryptographic RNG.
pub trait SecureRng: RngCore + CryptoRng {}
impl<T: RngCore + CryptoRng> SecureRng for T {}

/// Persisted form of a key system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySystemRecord {
    pub scheme_id: SchemeId,
    pub fingerprint: Fingerprint,
    pub identity: String,
    pub can_have_recipients: bool,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    #[serde(with = "crate::serde_b64")]
    pub state: Vec<u8>,
}

impl KeySystemRecord {
    pub fn label(&self) -> &str {
        self.attributes.get("label").map(String::as_str).unwrap_or(&self.identity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Text,
    Password,
    Identity,
    Choice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormField {
    pub field_name: String,
    pub label: String,
    pub input_kind: InputKind,
    pub required: bool,
}

/// Declarative description of the inputs a scheme needs; the browser overlay
/// renders it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FormSchema {
    pub fields: Vec<FormField>,
}

impl FormSchema {
    pub fn builder() -> FormSchemaBuilder {
        FormSchemaBuilder::default()
    }

    pub fn field(&self, name: &str) -> Option<&FormField> {
        self.fields.iter().find(|f| f.field_name == name)
    }

    /// Checks that every required field has a non-empty value.
    pub fn check(&self, values: &FormValues) -> Result<()> {
        for f in self.fields.iter().filter(|f| f.required) {
            if values.get(&f.field_name).map_or(true, |v| v.is_empty()) {
                return Err(Error::InvalidInput(format!("missing field {}", f.field_name)));
            }
        }
        Ok(())
    }
}

#[derive(Default)]
pub struct FormSchemaBuilder {
    fields: Vec<FormField>,
}

impl FormSchemaBuilder {
    pub fn field(mut self, name: &str, label: &str, kind: InputKind, required: bool) -> Self {
        assert!(
            self.fields.iter().all(|f| f.field_name != name),
            "duplicate form field {name}"
        );
        self.fields.push(FormField {
            field_name: name.to_owned(),
            label: label.to_owned(),
            input_kind: kind,
            required,
        });
        self
    }

    pub fn build(self) -> FormSchema {
        FormSchema { fields: self.fields }
    }
}

pub type FormValues = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    MissingKey,
    ExpiredCredentials,
    WrongPassword,
    ServerUnreachable,
    Other,
}

impl ErrorCode {
    pub fn is_recoverable(self) -> bool {
        !matches!(self, ErrorCode::Other)
    }
}

/// A failure as presented to the user, with the form that resolves it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remediation: Option<FormSchema>,
}

impl SchemeError {
    pub fn new(code: ErrorCode, message: impl Into<String>, remediation: FormSchema) -> Self {
        SchemeError { code, message: message.into(), remediation: Some(remediation) }
    }

    pub fn other(message: impl Into<String>) -> Self {
        SchemeError { code: ErrorCode::Other, message: message.into(), remediation: None }
    }
}

/// What a scheme may reach while creating or using a key system.
pub struct SchemeEnv<'a> {
    pub directory: Option<&'a dyn KeyDirectory>,
    pub rng: &'a mut dyn SecureRng,
}

impl<'a> SchemeEnv<'a> {
    pub fn new(rng: &'a mut dyn SecureRng) -> Self {
        SchemeEnv { directory: None, rng }
    }

    pub fn with_directory(mut self, directory: &'a dyn KeyDirectory) -> Self {
        self.directory = Some(directory);
        self
    }

    pub fn directory(&self) -> Result<&'a dyn KeyDirectory> {
        self.directory
            .ok_or_else(|| Error::ServerUnreachable("no key server configured".into()))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EncryptOptions {
    pub sign: bool,
}

pub trait KeySystem: Send + Sync {
    fn scheme_id(&self) -> SchemeId;
    fn fingerprint(&self) -> Fingerprint;
    fn identity(&self) -> &str;
    fn label(&self) -> &str;
    fn can_have_recipients(&self) -> bool;

    /// Encrypts `plaintext` for `recipients`. Systems without recipients ignore
    /// the list.
    fn encrypt(
        &self,
        env: &mut SchemeEnv<'_>,
        recipients: &[String],
        plaintext: &[u8],
        options: EncryptOptions,
    ) -> Result<MessagePackage>;

    fn decrypt(&self, package: &MessagePackage) -> Result<Vec<u8>>;

    fn sign(&self, _rng: &mut dyn SecureRng, _data: &[u8]) -> Result<Vec<u8>> {
        Err(Error::Unsupported(self.scheme_id().name()))
    }

    /// Verifies `signature` against this system's own public key.
    fn verify(&self, _data: &[u8], _signature: &[u8]) -> Result<bool> {
        Err(Error::Unsupported(self.scheme_id().name()))
    }

    fn serialize(&self) -> KeySystemRecord;
}

pub trait KeyScheme: Send + Sync {
    fn id(&self) -> SchemeId;

    fn name(&self) -> &'static str {
        self.id().name()
    }

    /// Inputs needed by [`KeyScheme::create`] and [`KeyScheme::update`].
    fn form(&self) -> FormSchema;

    fn create(&self, values: &FormValues, env: &mut SchemeEnv<'_>) -> Result<Box<dyn KeySystem>>;

    fn update(
        &self,
        system: &dyn KeySystem,
        values: &FormValues,
        env: &mut SchemeEnv<'_>,
    ) -> Result<Box<dyn KeySystem>>;

    fn deserialize(&self, record: &KeySystemRecord) -> Result<Box<dyn KeySystem>>;

    fn handle_error(&self, error: &Error) -> SchemeError;
}

pub(crate) fn ensure_scheme(expected: SchemeId, package: &MessagePackage) -> Result<()> {
    if package.scheme_id != expected {
        return Err(Error::SchemeMismatch { expected: expected.name(), found: package.scheme_id.name() });
    }
    Ok(())
}

pub(crate) fn base_error(error: &Error) -> Option<SchemeError> {
    match error {
        Error::ServerUnreachable(msg) => Some(SchemeError::new(
            ErrorCode::ServerUnreachable,
            format!("key server unreachable: {msg}"),
            FormSchema::builder()
                .field("key_server", "Key server URL", InputKind::Text, true)
                .build(),
        )),
        _ => None,
    }
}

static PASSWORD: PasswordScheme = PasswordScheme;
static RSA: RsaScheme = RsaScheme;
static IBE: IbeScheme = IbeScheme;

/// All registered schemes in scheme-id order.
pub fn schemes() -> [&'static dyn KeyScheme; 3] {
    [&PASSWORD, &RSA, &IBE]
}

pub fn resolve_scheme(id: u8) -> Result<&'static dyn KeyScheme> {
    match SchemeId::try_from(id) {
        Ok(SchemeId::Password) => Ok(&PASSWORD),
        Ok(SchemeId::Rsa) => Ok(&RSA),
        Ok(SchemeId::Ibe) => Ok(&IBE),
        Err(_) => Err(Error::UnknownScheme(format!("{id:#04x}"))),
    }
}

pub fn resolve_scheme_name(name: &str) -> Result<&'static dyn KeyScheme> {
    SchemeId::from_name(name)
        .map(|id| resolve_scheme(id as u8).expect("registered"))
        .ok_or_else(|| Error::UnknownScheme(name.to_owned()))
}
