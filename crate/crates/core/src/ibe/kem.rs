//! BB1 as a key-encapsulation mechanism for the message package.
//!
//! One random `k ∈ GT` per message; the AEAD key is `SHA-256(encode(k))`.
//! Each recipient block carries `BB1.Encrypt(v_i, k)` and is addressed to
//! `fingerprint(params ‖ 0x00 ‖ identity_i)`.

use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::bb1::{self, Ciphertext, PrivateKey, PublicParams};
use super::group::BilinearGroup;
use crate::aead::{self, KEY_LEN};
use crate::error::{Error, Result};
use crate::fingerprint::{compute_fingerprint, Fingerprint};
use crate::identity::normalize_identity;
use crate::package::{Flags, MessagePackage, RecipientBlock, SchemeId};

/// Fingerprint of the key system holding the private key for `identity`.
pub fn identity_fingerprint(params_bytes: &[u8], identity: &str) -> Result<Fingerprint> {
    let id = normalize_identity(identity)?;
    let mut material = params_bytes.to_vec();
    material.push(0);
    material.extend_from_slice(id.as_bytes());
    compute_fingerprint(&material)
}

fn kem_key<G: BilinearGroup>(group: &G, k: &G::Target) -> [u8; KEY_LEN] {
    Sha256::digest(group.encode_target(k)).into()
}

pub fn kem_encrypt<G: BilinearGroup, R: RngCore + CryptoRng + ?Sized>(
    group: &G,
    params: &PublicParams<G>,
    identities: &[String],
    plaintext: &[u8],
    rng: &mut R,
) -> Result<MessagePackage> {
    let mut ids = identities
        .iter()
        .map(|i| normalize_identity(i))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::HashSet::new();
    ids.retain(|i| seen.insert(i.clone()));
    if ids.is_empty() {
        return Err(Error::InvalidInput("IBE encryption needs at least one identity".into()));
    }

    let base = group.pair(&params.g, &params.g);
    let k = group.target_exp(&base, &group.random_scalar(rng));
    let params_bytes = params.encode(group);

    let mut recipients = Vec::with_capacity(ids.len());
    for id in &ids {
        let v = bb1::hash_identity(group, id)?;
        let ct = bb1::encrypt(group, params, &v, &k, rng);
        recipients.push(RecipientBlock {
            fingerprint: identity_fingerprint(&params_bytes, id)?,
            wrapped_key: ct.encode(group),
        });
    }

    let mut package = MessagePackage {
        scheme_id: SchemeId::Ibe,
        flags: Flags::for_parts(recipients.len(), false),
        recipients,
        nonce: aead::random_nonce(rng),
        ciphertext: Vec::new(),
        signature: None,
    };
    package.ciphertext = aead::seal(&kem_key(group, &k), &package.nonce, &package.associated_data(), plaintext);
    Ok(package)
}

pub fn kem_decrypt<G: BilinearGroup>(
    group: &G,
    key: &PrivateKey<G>,
    fingerprint: &Fingerprint,
    package: &MessagePackage,
) -> Result<Vec<u8>> {
    if package.scheme_id != SchemeId::Ibe {
        return Err(Error::SchemeMismatch { expected: "ibe", found: package.scheme_id.name() });
    }
    let block = package.recipient(fingerprint).ok_or(Error::NoMatchingKey)?;
    let ct = Ciphertext::decode(group, &block.wrapped_key).ok_or(Error::IntegrityFailure)?;
    let k = bb1::decrypt(group, key, &ct);
    aead::open(&kem_key(group, &k), &package.nonce, &package.associated_data(), &package.ciphertext)
}
