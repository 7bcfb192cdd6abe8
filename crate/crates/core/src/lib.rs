//! MessageGuard core: the binary message package and its text armor, the key
//! scheme contracts with password, RSA and identity-based implementations,
//! the encrypted key store, and encrypted attachments.

pub mod aead;
pub mod armor;
pub mod attachment;
pub mod directory;
pub mod error;
pub mod fingerprint;
pub mod ibe;
pub mod identity;
pub mod keyring;
pub mod keystore;
pub mod package;
pub mod scheme;
pub mod serde_b64;
pub mod varint;

pub use armor::{armor_decode, armor_encode, scan_text, ArmoredText, PayloadSpan};
pub use attachment::{AttachmentManifest, BlobStore, Capability, MemoryBlobStore, MessageBody};
pub use directory::{KeyDirectory, MemoryKeyServer, PublishedKey};
pub use error::{Error, PackageError, Result};
pub use fingerprint::{compute_fingerprint, Fingerprint};
pub use identity::normalize_identity;
pub use keyring::{Keyring, Opened};
pub use keystore::Keystore;
pub use package::{assemble_package, parse_package, Flags, MessagePackage, RecipientBlock, SchemeId, SignatureBlock};
pub use scheme::{
    resolve_scheme, resolve_scheme_name, schemes, EncryptOptions, ErrorCode, FormSchema, FormValues, KeyScheme,
    KeySystem, KeySystemRecord, SchemeEnv, SchemeError, SecureRng,
};
