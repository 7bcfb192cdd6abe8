//! Identity-based scheme: anyone holding the key server's public parameters
//! can encrypt to an email address; the owner of the address obtains the
//! matching private key from the server after proving ownership.

use std::collections::BTreeMap;

use crate::directory::KeyDirectory;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::ibe::kem::{identity_fingerprint, kem_decrypt, kem_encrypt};
use crate::ibe::{bb1, Bls12Group, PrivateKey, PublicParams};
use crate::identity::normalize_identity;
use crate::package::{MessagePackage, SchemeId};
use crate::scheme::{
    base_error, ensure_scheme, EncryptOptions, ErrorCode, FormSchema, FormValues, InputKind,
    KeyScheme, KeySystem, KeySystemRecord, SchemeEnv, SchemeError, SecureRng,
};
use crate::varint::{write_bytes, Reader};

const GROUP: Bls12Group = Bls12Group;

pub struct IbeSystem {
    identity: String,
    label: String,
    params_bytes: Vec<u8>,
    params: PublicParams<Bls12Group>,
    key: PrivateKey<Bls12Group>,
    fingerprint: Fingerprint,
}

impl IbeSystem {
    /// Builds a system from server parameters and an extracted key, rejecting
    /// keys that are for another identity or do not decrypt under `params`.
    pub fn from_parts(identity: &str, label: &str, params_bytes: &[u8], key_bytes: &[u8], rng: &mut dyn SecureRng) -> Result<Self> {
        let identity = normalize_identity(identity)?;
        let params = PublicParams::decode(&GROUP, params_bytes)?;
        let key = PrivateKey::decode(&GROUP, key_bytes)?;
        if key.v != bb1::hash_identity(&GROUP, &identity)? {
            return Err(Error::InvalidInput(format!("extracted key is not for {identity}")));
        }
        let system = IbeSystem {
            fingerprint: identity_fingerprint(params_bytes, &identity)?,
            label: label.to_owned(),
            identity,
            params_bytes: params_bytes.to_vec(),
            params,
            key,
        };
        let probe = kem_encrypt(&GROUP, &system.params, std::slice::from_ref(&system.identity), b"probe", rng)?;
        if system.decrypt(&probe).ok().as_deref() != Some(b"probe".as_slice()) {
            return Err(Error::InvalidInput("extracted key does not match the IBE parameters".into()));
        }
        Ok(system)
    }

    pub fn from_directory(identity: &str, directory: &dyn KeyDirectory, rng: &mut dyn SecureRng) -> Result<Self> {
        let params = directory.ibe_params()?;
        let key = directory.extract_ibe_key(identity)?;
        let id = normalize_identity(identity)?;
        Self::from_parts(&id, &id, &params, &key, rng)
    }

    pub fn params_bytes(&self) -> &[u8] {
        &self.params_bytes
    }

    pub fn from_state(record: &KeySystemRecord) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptStore(format!("IBE state: {m}"));
        let mut r = Reader::new(&record.state);
        let params_bytes = r.bytes().map_err(|_| corrupt("parameters"))?.to_vec();
        let key_bytes = r.bytes().map_err(|_| corrupt("key"))?;
        r.finish().map_err(|_| corrupt("trailing bytes"))?;
        let params = PublicParams::decode(&GROUP, &params_bytes).map_err(|_| corrupt("parameters"))?;
        let key = PrivateKey::decode(&GROUP, key_bytes).map_err(|_| corrupt("key"))?;
        let fingerprint = identity_fingerprint(&params_bytes, &record.identity)?;
        if fingerprint != record.fingerprint {
            return Err(corrupt("fingerprint mismatch"));
        }
        Ok(IbeSystem {
            identity: record.identity.clone(),
            label: record.label().to_owned(),
            params_bytes,
            params,
            key,
            fingerprint,
        })
    }
}

impl KeySystem for IbeSystem {
    fn scheme_id(&self) -> SchemeId {
        SchemeId::Ibe
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
        if options.sign {
            return Err(Error::Unsupported("ibe signatures"));
        }
        kem_encrypt(&GROUP, &self.params, recipients, plaintext, env.rng)
    }

    fn decrypt(&self, package: &MessagePackage) -> Result<Vec<u8>> {
        ensure_scheme(SchemeId::Ibe, package)?;
        kem_decrypt(&GROUP, &self.key, &self.fingerprint, package)
    }

    fn serialize(&self) -> KeySystemRecord {
        let mut state = Vec::new();
        write_bytes(&mut state, &self.params_bytes);
        write_bytes(&mut state, &self.key.encode(&GROUP));
        let mut attributes = BTreeMap::new();
        attributes.insert("label".to_owned(), self.label.clone());
        KeySystemRecord {
            scheme_id: SchemeId::Ibe,
            fingerprint: self.fingerprint,
            identity: self.identity.clone(),
            can_have_recipients: true,
            attributes,
            state,
        }
    }
}

pub struct IbeScheme;

impl KeyScheme for IbeScheme {
    fn id(&self) -> SchemeId {
        SchemeId::Ibe
    }

    fn form(&self) -> FormSchema {
        FormSchema::builder()
            .field("identity", "Your email address", InputKind::Identity, true)
            .field("label", "Name for this key", InputKind::Text, false)
            .build()
    }

    fn create(&self, values: &FormValues, env: &mut SchemeEnv<'_>) -> Result<Box<dyn KeySystem>> {
        self.form().check(values)?;
        let mut system = IbeSystem::from_directory(&values["identity"], env.directory()?, env.rng)?;
        if let Some(label) = values.get("label").filter(|l| !l.trim().is_empty()) {
            system.label = label.trim().to_owned();
        }
        Ok(Box::new(system))
    }

    /// Re-extracts the private key, picking up new server parameters.
    fn update(&self, system: &dyn KeySystem, values: &FormValues, env: &mut SchemeEnv<'_>) -> Result<Box<dyn KeySystem>> {
        if system.scheme_id() != SchemeId::Ibe {
            return Err(Error::SchemeMismatch { expected: "ibe", found: system.scheme_id().name() });
        }
        let mut fresh = IbeSystem::from_directory(system.identity(), env.directory()?, env.rng)?;
        fresh.label = values
            .get("label")
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .unwrap_or(system.label())
            .to_owned();
        Ok(Box::new(fresh))
    }

    fn deserialize(&self, record: &KeySystemRecord) -> Result<Box<dyn KeySystem>> {
        Ok(Box::new(IbeSystem::from_state(record)?))
    }

    fn handle_error(&self, error: &Error) -> SchemeError {
        if let Some(e) = base_error(error) {
            return e;
        }
        match error {
            Error::NoMatchingKey => SchemeError::new(
                ErrorCode::MissingKey,
                "this message is for an identity you have no key for",
                self.form(),
            ),
            Error::NotOwner(id) => SchemeError::new(
                ErrorCode::ExpiredCredentials,
                format!("prove ownership of {id} with the key server to obtain its key"),
                FormSchema::builder()
                    .field("username", "Key server username", InputKind::Text, true)
                    .field("password", "Key server password", InputKind::Password, true)
                    .build(),
            ),
            other => SchemeError::other(other.to_string()),
        }
    }
}
