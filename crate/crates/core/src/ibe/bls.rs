//! BLS12-381 backend with a symmetric pairing.
//!
//! BLS12-381 pairs G1 with G2. A source element here is the pair
//! `(P^x, Q^x)` for the fixed generators `P ∈ G1`, `Q ∈ G2`, and
//! `e((a1, a2), (b1, b2)) = ê(a1, b2)`. Because both components share the
//! exponent, `e(a, b) = ê(P, Q)^(xy) = e(b, a)`.
//!
//! Encodings:
//! - scalar: 32-byte big-endian, canonical (`< r`)
//! - element: compressed G1 (48 bytes) ‖ compressed G2 (96 bytes), arkworks format
//! - target: compressed GT (576 bytes), arkworks format

use ark_bls12_381::{Bls12_381, Fr, G1Projective, G2Projective};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::PrimeGroup;
use ark_ff::{BigInteger, PrimeField, UniformRand, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::{CryptoRng, RngCore};

use super::group::BilinearGroup;

pub const BLS12_381_TAG: u8 = 0x01;
const G1_LEN: usize = 48;
const G2_LEN: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymElement {
    pub g1: G1Projective,
    pub g2: G2Projective,
}

pub type Gt = PairingOutput<Bls12_381>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Bls12Group;

fn ser<T: CanonicalSerialize>(v: &T) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.compressed_size());
    v.serialize_compressed(&mut out).expect("writing to a Vec cannot fail");
    out
}

impl BilinearGroup for Bls12Group {
    type Scalar = Fr;
    type Element = SymElement;
    type Target = Gt;

    fn descriptor(&self) -> Vec<u8> {
        vec![BLS12_381_TAG]
    }

    fn generator(&self) -> SymElement {
        SymElement { g1: G1Projective::generator(), g2: G2Projective::generator() }
    }

    fn op(&self, a: &SymElement, b: &SymElement) -> SymElement {
        SymElement { g1: a.g1 + b.g1, g2: a.g2 + b.g2 }
    }

    fn exp(&self, a: &SymElement, k: &Fr) -> SymElement {
        SymElement { g1: a.g1 * k, g2: a.g2 * k }
    }

    fn pair(&self, a: &SymElement, b: &SymElement) -> Gt {
        Bls12_381::pairing(a.g1, b.g2)
    }

    fn target_op(&self, a: &Gt, b: &Gt) -> Gt {
        *a + *b
    }

    fn target_inv(&self, a: &Gt) -> Gt {
        -*a
    }

    fn target_exp(&self, a: &Gt, k: &Fr) -> Gt {
        *a * k
    }

    fn target_identity(&self) -> Gt {
        Gt::zero()
    }

    fn scalar_from_u64(&self, v: u64) -> Fr {
        Fr::from(v)
    }

    fn random_scalar<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> Fr {
        loop {
            let s = Fr::rand(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    fn scalar_from_digest(&self, digest: &[u8]) -> Fr {
        Fr::from_be_bytes_mod_order(digest)
    }

    fn encode_scalar(&self, s: &Fr) -> Vec<u8> {
        s.into_bigint().to_bytes_be()
    }

    fn decode_scalar(&self, bytes: &[u8]) -> Option<Fr> {
        if bytes.len() != 32 {
            return None;
        }
        let s = Fr::from_be_bytes_mod_order(bytes);
        (s.into_bigint().to_bytes_be() == bytes).then_some(s)
    }

    fn encode_element(&self, e: &SymElement) -> Vec<u8> {
        let mut out = ser(&e.g1);
        out.extend_from_slice(&ser(&e.g2));
        out
    }

    fn decode_element(&self, bytes: &[u8]) -> Option<SymElement> {
        if bytes.len() != G1_LEN + G2_LEN {
            return None;
        }
        let g1 = G1Projective::deserialize_compressed(&bytes[..G1_LEN]).ok()?;
        let g2 = G2Projective::deserialize_compressed(&bytes[G1_LEN..]).ok()?;
        Some(SymElement { g1, g2 })
    }

    fn encode_target(&self, t: &Gt) -> Vec<u8> {
        ser(t)
    }

    fn decode_target(&self, bytes: &[u8]) -> Option<Gt> {
        let mut reader = bytes;
        let t = Gt::deserialize_compressed(&mut reader).ok()?;
        reader.is_empty().then_some(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    #[test]
    fn bilinearity() {
        let grp = Bls12Group;
        let g = grp.generator();
        let base = grp.pair(&g, &g);
        assert_ne!(base, grp.target_identity());
        for _ in 0..5 {
            let a = grp.random_scalar(&mut OsRng);
            let b = grp.random_scalar(&mut OsRng);
            let lhs = grp.pair(&grp.exp(&g, &a), &grp.exp(&g, &b));
            assert_eq!(lhs, grp.target_exp(&base, &(a * b)));
            // symmetric emulation
            assert_eq!(lhs, grp.pair(&grp.exp(&g, &b), &grp.exp(&g, &a)));
        }
    }

    #[test]
    fn encodings_roundtrip() {
        let grp = Bls12Group;
        let s = grp.random_scalar(&mut OsRng);
        let e = grp.exp(&grp.generator(), &s);
        let t = grp.pair(&e, &grp.generator());
        assert_eq!(grp.decode_scalar(&grp.encode_scalar(&s)), Some(s));
        assert_eq!(grp.encode_element(&e).len(), G1_LEN + G2_LEN);
        assert_eq!(grp.decode_element(&grp.encode_element(&e)), Some(e));
        assert_eq!(grp.decode_target(&grp.encode_target(&t)), Some(t));
        assert_eq!(grp.decode_scalar(&[0xff; 32]), None);
        assert_eq!(grp.decode_element(&[0u8; 10]), None);
    }

    #[test]
    fn scalar_from_digest_is_big_endian() {
        let grp = Bls12Group;
        let mut digest = [0u8; 32];
        digest[31] = 5;
        assert_eq!(grp.scalar_from_digest(&digest), Fr::from(5u64));
    }
}
