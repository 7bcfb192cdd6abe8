use thiserror::Error;

use crate::fingerprint::Fingerprint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Reason a binary package failed to parse or assemble.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackageError {
    #[error("package truncated")]
    Truncated,
    #[error("{0} trailing bytes after package")]
    TrailingBytes(usize),
    #[error("varint overflow")]
    VarintOverflow,
    #[error("unknown scheme id {0:#04x}")]
    UnknownScheme(u8),
    #[error("unknown flag bits {0:#04x}")]
    UnknownFlags(u8),
    #[error("package has no recipient blocks")]
    NoRecipients,
    #[error("ciphertext shorter than the authentication tag")]
    ShortCiphertext,
    #[error("flags do not match the optional blocks present")]
    FlagMismatch,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty payload")]
    EmptyPayload,
    #[error("malformed armor")]
    MalformedArmor,
    #[error("invalid package: {0}")]
    InvalidPackage(#[from] PackageError),
    #[error("unknown scheme {0}")]
    UnknownScheme(String),
    #[error("package scheme {found} cannot be handled by a {expected} key system")]
    SchemeMismatch { expected: &'static str, found: &'static str },
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("wrong password")]
    WrongPassword,
    #[error("password required to use key system {0}")]
    PasswordRequired(String),
    #[error("package is not addressed to key system {0}")]
    FingerprintMismatch(Fingerprint),
    #[error("no key system can decrypt this package")]
    NoMatchingKey,
    #[error("integrity check failed")]
    IntegrityFailure,
    #[error("signature verification failed")]
    BadSignature,
    #[error("unknown recipient {0}")]
    UnknownRecipient(String),
    #[error("unknown key system {0}")]
    UnknownKeySystem(String),
    #[error("operation not supported by the {0} scheme")]
    Unsupported(&'static str),
    #[error("invalid identity {0:?}")]
    InvalidIdentity(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("caller does not own identity {0}")]
    NotOwner(String),
    #[error("server unreachable: {0}")]
    ServerUnreachable(String),
    #[error("key store already exists at {0}")]
    Exists(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("corrupt key store: {0}")]
    CorruptStore(String),
    #[error("payload too large: {size} bytes exceeds {limit}")]
    PayloadTooLarge { size: u64, limit: u64 },
    #[error("remote error: {0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
