//! Boneh–Boyen selective-identity IBE (BB1) over a symmetric bilinear group.
//!
//! ```text
//! Setup:    α ←$ Z_q*, g1 = g^α, g2, h ←$ G, v0 = e(g1, g2); msk = g2^α
//! Extract:  r ←$ Z_q*, d0 = msk · (g1^v · h)^r, d1 = g^r
//! Encrypt:  s ←$ Z_q*, C1 = m · v0^s, C2 = g^s, C3 = (g1^v · h)^s
//! Decrypt:  m = C1 · e(d1, C3) / e(d0, C2)
//! ```

use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::group::BilinearGroup;
use crate::error::{Error, Result};
use crate::identity::normalize_identity;
use crate::varint::{write_bytes, Reader};

#[derive(Debug, Clone, PartialEq)]
pub struct PublicParams<G: BilinearGroup> {
    pub g: G::Element,
    pub g1: G::Element,
    pub g2: G::Element,
    pub h: G::Element,
    pub v0: G::Target,
}

/// Held only by the key server.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterSecret<G: BilinearGroup> {
    pub alpha: G::Scalar,
    pub msk: G::Element,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivateKey<G: BilinearGroup> {
    pub v: G::Scalar,
    pub d0: G::Element,
    pub d1: G::Element,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext<G: BilinearGroup> {
    pub c1: G::Target,
    pub c2: G::Element,
    pub c3: G::Element,
}

/// `v = SHA-256(normalized identity) mod q`.
pub fn hash_identity<G: BilinearGroup>(group: &G, identity: &str) -> Result<G::Scalar> {
    let id = normalize_identity(identity)?;
    Ok(group.scalar_from_digest(&Sha256::digest(id.as_bytes())))
}

pub fn setup_with<G: BilinearGroup>(
    group: &G,
    alpha: G::Scalar,
    g2: G::Element,
    h: G::Element,
) -> (PublicParams<G>, MasterSecret<G>) {
    let g = group.generator();
    let g1 = group.exp(&g, &alpha);
    let v0 = group.pair(&g1, &g2);
    let msk = group.exp(&g2, &alpha);
    (PublicParams { g, g1, g2, h, v0 }, MasterSecret { alpha, msk })
}

pub fn setup<G: BilinearGroup, R: RngCore + CryptoRng + ?Sized>(
    group: &G,
    rng: &mut R,
) -> (PublicParams<G>, MasterSecret<G>) {
    let alpha = group.random_scalar(rng);
    let g = group.generator();
    let g2 = group.exp(&g, &group.random_scalar(rng));
    let h = group.exp(&g, &group.random_scalar(rng));
    setup_with(group, alpha, g2, h)
}

/// `g1^v · h`, the identity-specific base shared by Extract and Encrypt.
fn identity_base<G: BilinearGroup>(group: &G, params: &PublicParams<G>, v: &G::Scalar) -> G::Element {
    group.op(&group.exp(&params.g1, v), &params.h)
}

pub fn extract_with<G: BilinearGroup>(
    group: &G,
    params: &PublicParams<G>,
    master: &MasterSecret<G>,
    v: G::Scalar,
    r: &G::Scalar,
) -> PrivateKey<G> {
    let base = identity_base(group, params, &v);
    let d0 = group.op(&master.msk, &group.exp(&base, r));
    let d1 = group.exp(&params.g, r);
    PrivateKey { v, d0, d1 }
}

pub fn extract<G: BilinearGroup, R: RngCore + CryptoRng + ?Sized>(
    group: &G,
    params: &PublicParams<G>,
    master: &MasterSecret<G>,
    v: G::Scalar,
    rng: &mut R,
) -> PrivateKey<G> {
    let r = group.random_scalar(rng);
    extract_with(group, params, master, v, &r)
}

pub fn encrypt_with<G: BilinearGroup>(
    group: &G,
    params: &PublicParams<G>,
    v: &G::Scalar,
    m: &G::Target,
    s: &G::Scalar,
) -> Ciphertext<G> {
    let c1 = group.target_op(m, &group.target_exp(&params.v0, s));
    let c2 = group.exp(&params.g, s);
    let c3 = group.exp(&identity_base(group, params, v), s);
    Ciphertext { c1, c2, c3 }
}

pub fn encrypt<G: BilinearGroup, R: RngCore + CryptoRng + ?Sized>(
    group: &G,
    params: &PublicParams<G>,
    v: &G::Scalar,
    m: &G::Target,
    rng: &mut R,
) -> Ciphertext<G> {
    let s = group.random_scalar(rng);
    encrypt_with(group, params, v, m, &s)
}

/// A key for the wrong identity yields a wrong element, not an error.
pub fn decrypt<G: BilinearGroup>(group: &G, key: &PrivateKey<G>, ct: &Ciphertext<G>) -> G::Target {
    let num = group.target_op(&ct.c1, &group.pair(&key.d1, &ct.c3));
    group.target_div(&num, &group.pair(&key.d0, &ct.c2))
}

fn decode<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidInput(format!("invalid {what} encoding")))
}

impl<G: BilinearGroup> PublicParams<G> {
    pub fn encode(&self, group: &G) -> Vec<u8> {
        let mut out = Vec::new();
        write_bytes(&mut out, &group.descriptor());
        for e in [&self.g, &self.g1, &self.g2, &self.h] {
            write_bytes(&mut out, &group.encode_element(e));
        }
        write_bytes(&mut out, &group.encode_target(&self.v0));
        out
    }

    /// Rejects parameters from another group, a non-standard generator, or a
    /// `v0` inconsistent with `e(g1, g2)`.
    pub fn decode(group: &G, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.bytes()? != group.descriptor().as_slice() {
            return Err(Error::InvalidInput("IBE parameters belong to a different group".into()));
        }
        let g = decode(group.decode_element(r.bytes()?), "g")?;
        let g1 = decode(group.decode_element(r.bytes()?), "g1")?;
        let g2 = decode(group.decode_element(r.bytes()?), "g2")?;
        let h = decode(group.decode_element(r.bytes()?), "h")?;
        let v0 = decode(group.decode_target(r.bytes()?), "v0")?;
        r.finish()?;
        if g != group.generator() || v0 != group.pair(&g1, &g2) {
            return Err(Error::InvalidInput("inconsistent IBE parameters".into()));
        }
        Ok(PublicParams { g, g1, g2, h, v0 })
    }
}

impl<G: BilinearGroup> MasterSecret<G> {
    pub fn encode(&self, group: &G) -> Vec<u8> {
        let mut out = Vec::new();
        write_bytes(&mut out, &group.encode_scalar(&self.alpha));
        write_bytes(&mut out, &group.encode_element(&self.msk));
        out
    }

    pub fn decode(group: &G, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let alpha = decode(group.decode_scalar(r.bytes()?), "alpha")?;
        let msk = decode(group.decode_element(r.bytes()?), "master secret")?;
        r.finish()?;
        Ok(MasterSecret { alpha, msk })
    }
}

impl<G: BilinearGroup> PrivateKey<G> {
    pub fn encode(&self, group: &G) -> Vec<u8> {
        let mut out = Vec::new();
        write_bytes(&mut out, &group.encode_scalar(&self.v));
        write_bytes(&mut out, &group.encode_element(&self.d0));
        write_bytes(&mut out, &group.encode_element(&self.d1));
        out
    }

    pub fn decode(group: &G, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let v = decode(group.decode_scalar(r.bytes()?), "identity scalar")?;
        let d0 = decode(group.decode_element(r.bytes()?), "d0")?;
        let d1 = decode(group.decode_element(r.bytes()?), "d1")?;
        r.finish()?;
        Ok(PrivateKey { v, d0, d1 })
    }
}

impl<G: BilinearGroup> Ciphertext<G> {
    pub fn encode(&self, group: &G) -> Vec<u8> {
        let mut out = Vec::new();
        write_bytes(&mut out, &group.encode_target(&self.c1));
        write_bytes(&mut out, &group.encode_element(&self.c2));
        write_bytes(&mut out, &group.encode_element(&self.c3));
        out
    }

    pub fn decode(group: &G, bytes: &[u8]) -> Option<Self> {
        let mut r = Reader::new(bytes);
        let c1 = group.decode_target(r.bytes().ok()?)?;
        let c2 = group.decode_element(r.bytes().ok()?)?;
        let c3 = group.decode_element(r.bytes().ok()?)?;
        r.finish().ok()?;
        Some(Ciphertext { c1, c2, c3 })
    }
}
