//! PGP-style public-key scheme: RSA-2048 identity keys published to the key
//! server, RSA-OAEP(SHA-256) wrapping of a per-message AES-256-GCM key, and
//! optional RSA-PSS(SHA-256) package signatures.
//!
//! Public-key transport encoding, also the fingerprint input:
//! `LEB128(len) ‖ modulus (big-endian) ‖ LEB128(len) ‖ exponent (big-endian)`.

use std::collections::BTreeMap;

use rand::rngs::OsRng;
use rsa::pkcs8::{DecodePrivateKey, EncodePrivateKey};
use rsa::traits::PublicKeyParts;
use rsa::{BigUint, Oaep, Pss, RsaPrivateKey, RsaPublicKey};
use sha2::{Digest, Sha256};

use crate::aead;
use crate::directory::KeyDirectory;
use crate::error::{Error, Result};
use crate::fingerprint::{compute_fingerprint, Fingerprint};
use crate::identity::normalize_identity;
use crate::package::{Flags, MessagePackage, RecipientBlock, SchemeId, SignatureBlock};
use crate::scheme::{
    base_error, ensure_scheme, EncryptOptions, ErrorCode, FormSchema, FormValues, InputKind,
    KeyScheme, KeySystem, KeySystemRecord, SchemeEnv, SchemeError, SecureRng,
};
use crate::varint::{write_bytes, Reader};

pub const RSA_BITS: usize = 2048;

pub fn encode_public_key(key: &RsaPublicKey) -> Vec<u8> {
    let mut out = Vec::with_capacity(RSA_BITS / 8 + 8);
    write_bytes(&mut out, &key.n().to_bytes_be());
    write_bytes(&mut out, &key.e().to_bytes_be());
    out
}

pub fn decode_public_key(bytes: &[u8]) -> Result<RsaPublicKey> {
    let bad = |m: &str| Error::InvalidInput(format!("RSA public key: {m}"));
    let mut r = Reader::new(bytes);
    let n = BigUint::from_bytes_be(r.bytes().map_err(|_| bad("modulus"))?);
    let e = BigUint::from_bytes_be(r.bytes().map_err(|_| bad("exponent"))?);
    r.finish().map_err(|_| bad("trailing bytes"))?;
    if n.bits() != RSA_BITS {
        return Err(bad("modulus must be 2048 bits"));
    }
    RsaPublicKey::new(n, e).map_err(|e| bad(&e.to_string()))
}

pub fn public_fingerprint(key: &RsaPublicKey) -> Fingerprint {
    compute_fingerprint(&encode_public_key(key)).expect("non-empty")
}

pub fn sign(key: &RsaPrivateKey, rng: &mut dyn SecureRng, data: &[u8]) -> Vec<u8> {
    let digest = Sha256::digest(data);
    key.sign_with_rng(&mut &mut *rng, Pss::new::<Sha256>(), &digest)
        .expect("PSS signing with a 2048-bit key cannot fail")
}

/// Never errors: any malformed or mismatched signature is just `false`.
pub fn verify(key: &RsaPublicKey, data: &[u8], signature: &[u8]) -> bool {
    let digest = Sha256::digest(data);
    key.verify(Pss::new::<Sha256>(), &digest, signature).is_ok()
}

/// Checks the optional signature block of `package` against `signer`.
pub fn verify_package(package: &MessagePackage, signer: &RsaPublicKey) -> bool {
    match &package.signature {
        Some(sig) => {
            sig.signer_fingerprint == public_fingerprint(signer)
                && verify(signer, &package.signed_data(), &sig.signature)
        }
        None => false,
    }
}

/// Hybrid encryption to already-resolved recipient keys. The plaintext is
/// encrypted once; the session key is OAEP-wrapped per recipient.
pub fn encrypt_to_keys(
    rng: &mut dyn SecureRng,
    recipients: &[RsaPublicKey],
    plaintext: &[u8],
    signer: Option<&RsaSystem>,
) -> Result<MessagePackage> {
    if recipients.is_empty() {
        return Err(Error::InvalidInput("at least one recipient is required".into()));
    }
    let session_key = zeroize::Zeroizing::new(aead::random_key(rng));
    let mut blocks: Vec<RecipientBlock> = Vec::with_capacity(recipients.len());
    for key in recipients {
        let fingerprint = public_fingerprint(key);
        if blocks.iter().any(|b| b.fingerprint == fingerprint) {
            continue;
        }
        let wrapped_key = key
            .encrypt(&mut &mut *rng, Oaep::new::<Sha256>(), session_key.as_ref())
            .map_err(|e| Error::InvalidInput(format!("RSA-OAEP: {e}")))?;
        blocks.push(RecipientBlock { fingerprint, wrapped_key });
    }
    let mut package = MessagePackage {
        scheme_id: SchemeId::Rsa,
        flags: Flags::for_parts(blocks.len(), signer.is_some()),
        recipients: blocks,
        nonce: aead::random_nonce(rng),
        ciphertext: Vec::new(),
        signature: signer.map(|s| SignatureBlock { signer_fingerprint: s.fingerprint, signature: Vec::new() }),
    };
    package.ciphertext = aead::seal(&session_key, &package.nonce, &package.associated_data(), plaintext);
    if let Some(s) = signer {
        let signature = sign(&s.private, rng, &package.signed_data());
        package.signature.as_mut().expect("set above").signature = signature;
    }
    Ok(package)
}

pub struct RsaSystem {
    identity: String,
    label: String,
    private: RsaPrivateKey,
    public: RsaPublicKey,
    fingerprint: Fingerprint,
}

impl RsaSystem {
    pub fn generate(identity: &str, rng: &mut dyn SecureRng) -> Result<Self> {
        let identity = normalize_identity(identity)?;
        let private = RsaPrivateKey::new(&mut &mut *rng, RSA_BITS)
            .map_err(|e| Error::InvalidInput(format!("RSA key generation: {e}")))?;
        Ok(Self::from_private(identity.clone(), identity, private))
    }

    /// Generates a keypair and publishes its public half. Nothing is returned
    /// unless publication succeeded.
    pub fn generate_and_publish(identity: &str, directory: &dyn KeyDirectory, rng: &mut dyn SecureRng) -> Result<Self> {
        let system = Self::generate(identity, rng)?;
        directory.publish_key(&system.identity, SchemeId::Rsa, &encode_public_key(&system.public))?;
        Ok(system)
    }

    fn from_private(identity: String, label: String, private: RsaPrivateKey) -> Self {
        let public = private.to_public_key();
        let fingerprint = public_fingerprint(&public);
        RsaSystem { identity, label, private, public, fingerprint }
    }

    pub fn public_key(&self) -> &RsaPublicKey {
        &self.public
    }

    pub fn public_key_bytes(&self) -> Vec<u8> {
        encode_public_key(&self.public)
    }

    pub fn from_state(record: &KeySystemRecord) -> Result<Self> {
        let private = RsaPrivateKey::from_pkcs8_der(&record.state)
            .map_err(|e| Error::CorruptStore(format!("RSA private key: {e}")))?;
        if private.size() * 8 != RSA_BITS {
            return Err(Error::CorruptStore("RSA key is not 2048 bits".into()));
        }
        let system = Self::from_private(record.identity.clone(), record.label().to_owned(), private);
        if system.fingerprint != record.fingerprint {
            return Err(Error::CorruptStore("RSA fingerprint mismatch".into()));
        }
        Ok(system)
    }
}

pub fn resolve_recipient(directory: &dyn KeyDirectory, identity: &str) -> Result<RsaPublicKey> {
    let published = directory.public_key(identity)?;
    if published.scheme_id != SchemeId::Rsa {
        return Err(Error::UnknownRecipient(published.identity));
    }
    decode_public_key(&published.key_material).map_err(|_| Error::UnknownRecipient(published.identity))
}

impl KeySystem for RsaSystem {
    fn scheme_id(&self) -> SchemeId {
        SchemeId::Rsa
    }

    fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    fn identity(&self) -> &str {
        &self.identity
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn can_have_recipients(&self) -> bool {
        true
    }

    fn encrypt(
        &self,
        env: &mut SchemeEnv<'_>,
        recipients: &[String],
        plaintext: &[u8],
        options: EncryptOptions,
    ) -> Result<MessagePackage> {
        let mut keys = Vec::with_capacity(recipients.len());
        for id in recipients {
            if normalize_identity(id)? == self.identity {
                keys.push(self.public.clone());
            } else {
                keys.push(resolve_recipient(env.directory()?, id)?);
            }
        }
        encrypt_to_keys(env.rng, &keys, plaintext, options.sign.then_some(self))
    }

    fn decrypt(&self, package: &MessagePackage) -> Result<Vec<u8>> {
        ensure_scheme(SchemeId::Rsa, package)?;
        let block = package.recipient(&self.fingerprint).ok_or(Error::NoMatchingKey)?;
        let session_key = self
            .private
            .decrypt_blinded(&mut OsRng, Oaep::new::<Sha256>(), &block.wrapped_key)
            .map_err(|_| Error::IntegrityFailure)?;
        let session_key: zeroize::Zeroizing<[u8; aead::KEY_LEN]> = zeroize::Zeroizing::new(
            session_key.as_slice().try_into().map_err(|_| Error::IntegrityFailure)?,
        );
        aead::open(&session_key, &package.nonce, &package.associated_data(), &package.ciphertext)
    }

    fn sign(&self, rng: &mut dyn SecureRng, data: &[u8]) -> Result<Vec<u8>> {
        Ok(sign(&self.private, rng, data))
    }

    fn verify(&self, data: &[u8], signature: &[u8]) -> Result<bool> {
        Ok(verify(&self.public, data, signature))
    }

    fn serialize(&self) -> KeySystemRecord {
        let der = self.private.to_pkcs8_der().expect("PKCS#8 encoding of a valid key");
        let mut attributes = BTreeMap::new();
        attributes.insert("label".to_owned(), self.label.clone());
        attributes.insert("bits".to_owned(), RSA_BITS.to_string());
        KeySystemRecord {
            scheme_id: SchemeId::Rsa,
            fingerprint: self.fingerprint,
            identity: self.identity.clone(),
            can_have_recipients: true,
            attributes,
            state: der.as_bytes().to_vec(),
        }
    }
}

pub struct RsaScheme;

impl KeyScheme for RsaScheme {
    fn id(&self) -> SchemeId {
        SchemeId::Rsa
    }

    fn form(&self) -> FormSchema {
        FormSchema::builder()
            .field("identity", "Your email address", InputKind::Identity, true)
            .field("label", "Name for this key", InputKind::Text, false)
            .build()
    }

    fn create(&self, values: &FormValues, env: &mut SchemeEnv<'_>) -> Result<Box<dyn KeySystem>> {
        self.form().check(values)?;
        let directory = env.directory()?;
        let mut system = RsaSystem::generate_and_publish(&values["identity"], directory, env.rng)?;
        if let Some(label) = values.get("label").filter(|l| !l.trim().is_empty()) {
            system.label = label.trim().to_owned();
        }
        Ok(Box::new(system))
    }

    /// Republishes the public key and optionally relabels.
    fn update(&self, system: &dyn KeySystem, values: &FormValues, env: &mut SchemeEnv<'_>) -> Result<Box<dyn KeySystem>> {
        let mut record = system.serialize();
        if record.scheme_id != SchemeId::Rsa {
            return Err(Error::SchemeMismatch { expected: "rsa", found: record.scheme_id.name() });
        }
        if let Some(label) = values.get("label").filter(|l| !l.trim().is_empty()) {
            record.attributes.insert("label".into(), label.trim().to_owned());
        }
        let system = RsaSystem::from_state(&record)?;
        env.directory()?
            .publish_key(&system.identity, SchemeId::Rsa, &system.public_key_bytes())?;
        Ok(Box::new(system))
    }

    fn deserialize(&self, record: &KeySystemRecord) -> Result<Box<dyn KeySystem>> {
        Ok(Box::new(RsaSystem::from_state(record)?))
    }

    fn handle_error(&self, error: &Error) -> SchemeError {
        if let Some(e) = base_error(error) {
            return e;
        }
        match error {
            Error::NoMatchingKey => SchemeError::new(
                ErrorCode::MissingKey,
                "this message was not encrypted to any of your RSA keys",
                self.form(),
            ),
            Error::UnknownRecipient(id) => SchemeError::new(
                ErrorCode::MissingKey,
                format!("{id} has not published a public key"),
                FormSchema::builder()
                    .field("recipients", "Recipients", InputKind::Identity, true)
                    .build(),
            ),
            Error::NotOwner(id) => SchemeError::new(
                ErrorCode::ExpiredCredentials,
                format!("prove ownership of {id} with the key server first"),
                FormSchema::builder()
                    .field("username", "Key server username", InputKind::Text, true)
                    .field("password", "Key server password", InputKind::Password, true)
                    .build(),
            ),
            other => SchemeError::other(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directory::MemoryKeyServer;
    use std::sync::OnceLock;

    fn pool() -> &'static [RsaPrivateKey] {
        static POOL: OnceLock<Vec<RsaPrivateKey>> = OnceLock::new();
        POOL.get_or_init(|| (0..3).map(|_| RsaPrivateKey::new(&mut OsRng, RSA_BITS).unwrap()).collect())
    }

    fn system(i: usize, id: &str) -> RsaSystem {
        RsaSystem::from_private(id.into(), id.into(), pool()[i].clone())
    }

    #[test]
    fn public_key_encoding_roundtrip() {
        let sys = system(0, "a@x.com");
        let bytes = sys.public_key_bytes();
        assert_eq!(decode_public_key(&bytes).unwrap(), sys.public);
        assert!(decode_public_key(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn two_recipients_share_one_ciphertext() {
        let (a, b) = (system(0, "a@x.com"), system(1, "b@x.com"));
        let package = encrypt_to_keys(&mut OsRng, &[a.public.clone(), b.public.clone()], b"hi both", None).unwrap();
        assert_eq!(package.recipients.len(), 2);
        assert!(package.flags.multi_recipient());
        assert_eq!(a.decrypt(&package).unwrap(), b"hi both");
        assert_eq!(b.decrypt(&package).unwrap(), b"hi both");
        let c = system(2, "c@x.com");
        assert!(matches!(c.decrypt(&package), Err(Error::NoMatchingKey)));
    }

    #[test]
    fn tampered_wrapped_key() {
        let a = system(0, "a@x.com");
        let mut package = encrypt_to_keys(&mut OsRng, std::slice::from_ref(&a.public), b"x", None).unwrap();
        package.recipients[0].wrapped_key[10] ^= 1;
        assert!(matches!(a.decrypt(&package), Err(Error::IntegrityFailure)));
    }

    #[test]
    fn sign_verify() {
        let (a, b) = (system(0, "a@x.com"), system(1, "b@x.com"));
        let sig = a.sign(&mut OsRng, b"abc").unwrap();
        assert!(verify(&a.public, b"abc", &sig));
        assert!(!verify(&a.public, b"abd", &sig));
        assert!(!verify(&b.public, b"abc", &sig));
        let mut bad = sig.clone();
        bad[0] ^= 0x80;
        assert!(!verify(&a.public, b"abc", &bad));
        assert!(!verify(&a.public, b"abc", &[]));
    }

    #[test]
    fn signed_package() {
        let (a, b) = (system(0, "a@x.com"), system(1, "b@x.com"));
        let mut package = encrypt_to_keys(&mut OsRng, std::slice::from_ref(&b.public), b"signed", Some(&a)).unwrap();
        let reparsed = crate::package::parse_package(&crate::package::assemble_package(&package).unwrap()).unwrap();
        assert!(verify_package(&reparsed, &a.public));
        assert!(!verify_package(&reparsed, &b.public));
        assert_eq!(b.decrypt(&reparsed).unwrap(), b"signed");
        package.signature.as_mut().unwrap().signature[5] ^= 1;
        assert!(!verify_package(&package, &a.public));
    }

    #[test]
    fn publish_flow() {
        let server = MemoryKeyServer::new();
        let owner = server.client(&["bob@x.com"]);
        let stranger = server.client(&[]);
        assert!(matches!(
            RsaSystem::generate_and_publish("bob@x.com", &stranger, &mut OsRng),
            Err(Error::NotOwner(_))
        ));
        let bob = RsaSystem::generate_and_publish("Bob@X.com", &owner, &mut OsRng).unwrap();
        let published = stranger.public_key("bob@x.com").unwrap();
        assert_eq!(published.key_material, bob.public_key_bytes());

        let mut rng = OsRng;
        let alice = system(0, "alice@x.com");
        let mut env = SchemeEnv::new(&mut rng).with_directory(&stranger);
        let package = alice
            .encrypt(&mut env, &["bob@x.com".into()], b"to bob", EncryptOptions::default())
            .unwrap();
        assert_eq!(bob.decrypt(&package).unwrap(), b"to bob");
        assert!(matches!(
            alice.encrypt(&mut env, &["nobody@x.com".into()], b"x", EncryptOptions::default()),
            Err(Error::UnknownRecipient(_))
        ));
    }

    #[test]
    fn record_roundtrip() {
        let a = system(0, "a@x.com");
        let record = a.serialize();
        let restored = RsaSystem::from_state(&record).unwrap();
        assert_eq!(restored.fingerprint(), a.fingerprint());
        let mut corrupt = record.clone();
        corrupt.fingerprint = Fingerprint([0; 16]);
        assert!(RsaSystem::from_state(&corrupt).is_err());
    }
}
