use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;

pub const FINGERPRINT_LEN: usize = 16;

/// Identifies one key system: the first 16 bytes of SHA-256 over its
/// canonical public material.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Fingerprint(pub [u8; FINGERPRINT_LEN]);

impl Fingerprint {
    pub fn as_bytes(&self) -> &[u8; FINGERPRINT_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.to_hex())
    }
}

impl FromStr for Fingerprint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bytes = hex::decode(s).map_err(|_| Error::InvalidInput(format!("bad fingerprint {s:?}")))?;
        let arr: [u8; FINGERPRINT_LEN] = bytes
            .try_into()
            .map_err(|_| Error::InvalidInput(format!("fingerprint must be {FINGERPRINT_LEN} bytes")))?;
        Ok(Fingerprint(arr))
    }
}

impl TryFrom<String> for Fingerprint {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<Fingerprint> for String {
    fn from(f: Fingerprint) -> String {
        f.to_hex()
    }
}

pub fn compute_fingerprint(public_material: &[u8]) -> Result<Fingerprint, Error> {
    if public_material.is_empty() {
        return Err(Error::InvalidInput("fingerprint input must not be empty".into()));
    }
    let digest = Sha256::digest(public_material);
    let mut out = [0u8; FINGERPRINT_LEN];
    out.copy_from_slice(&digest[..FINGERPRINT_LEN]);
    Ok(Fingerprint(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};

    #[test]
    fn abc_vector() {
        // FIPS 180-2 SHA-256("abc") = ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad
        let fp = compute_fingerprint(b"abc").unwrap();
        assert_eq!(fp.to_hex(), "ba7816bf8f01cfea414140de5dae2223");
    }

    #[test]
    fn empty_input_rejected() {
        assert!(compute_fingerprint(b"").is_err());
    }

    #[test]
    fn single_bit_flips_change_fingerprint() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let len = rng.gen_range(1..64);
            let mut data = vec![0u8; len];
            rng.fill_bytes(&mut data);
            let a = compute_fingerprint(&data).unwrap();
            let bit = rng.gen_range(0..len * 8);
            data[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(a, compute_fingerprint(&data).unwrap());
        }
    }

    #[test]
    fn hex_roundtrip() {
        let fp = compute_fingerprint(b"x").unwrap();
        assert_eq!(fp.to_hex().parse::<Fingerprint>().unwrap(), fp);
        assert!("abcd".parse::<Fingerprint>().is_err());
    }
}
