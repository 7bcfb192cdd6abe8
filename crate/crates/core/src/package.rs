//! Compact binary message package.
//!
//! ```text
//! scheme_id(1) ‖ flags(1) ‖ recipient_count(LEB128)
//!   ‖ { fingerprint(16) ‖ wrapped_key_len(LEB128) ‖ wrapped_key }*
//!   ‖ nonce(12) ‖ ciphertext_len(LEB128) ‖ ciphertext (tag appended)
//!   ‖ [ signer_fingerprint(16) ‖ sig_len(LEB128) ‖ signature ]   if HAS_SIGNATURE
//! ```
//!
//! There is no version field; the armor label carries the format identity.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aead::{NONCE_LEN, TAG_LEN};
use crate::armor::{armor_decode, armor_encode, ArmoredText};
use crate::error::{PackageError, Result};
use crate::fingerprint::{Fingerprint, FINGERPRINT_LEN};
use crate::varint::{write_bytes, write_uvarint, Reader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum SchemeId {
    Password = 0x01,
    Rsa = 0x02,
    Ibe = 0x03,
}

impl SchemeId {
    pub const ALL: [SchemeId; 3] = [SchemeId::Password, SchemeId::Rsa, SchemeId::Ibe];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Password => "password",
            SchemeId::Rsa => "rsa",
            SchemeId::Ibe => "ibe",
        }
    }

    pub fn from_name(name: &str) -> Option<SchemeId> {
        SchemeId::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl TryFrom<u8> for SchemeId {
    type Error = PackageError;

    fn try_from(b: u8) -> Result<Self, PackageError> {
        match b {
            0x01 => Ok(SchemeId::Password),
            0x02 => Ok(SchemeId::Rsa),
            0x03 => Ok(SchemeId::Ibe),
            other => Err(PackageError::UnknownScheme(other)),
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flags(u8);

impl Flags {
    pub const HAS_SIGNATURE: u8 = 0x01;
    pub const MULTI_RECIPIENT: u8 = 0x02;
    const KNOWN: u8 = Self::HAS_SIGNATURE | Self::MULTI_RECIPIENT;

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn has_signature(self) -> bool {
        self.0 & Self::HAS_SIGNATURE != 0
    }

    pub fn multi_recipient(self) -> bool {
        self.0 & Self::MULTI_RECIPIENT != 0
    }

    pub fn from_bits(bits: u8) -> Result<Flags, PackageError> {
        if bits & !Self::KNOWN != 0 {
            return Err(PackageError::UnknownFlags(bits));
        }
        Ok(Flags(bits))
    }

    pub(crate) fn for_parts(recipients: usize, signed: bool) -> Flags {
        let mut bits = 0;
        if signed {
            bits |= Self::HAS_SIGNATURE;
        }
        if recipients > 1 {
            bits |= Self::MULTI_RECIPIENT;
        }
        Flags(bits)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecipientBlock {
    pub fingerprint: Fingerprint,
    pub wrapped_key: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureBlock {
    pub signer_fingerprint: Fingerprint,
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessagePackage {
    pub scheme_id: SchemeId,
    pub flags: Flags,
    pub recipients: Vec<RecipientBlock>,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub signature: Option<SignatureBlock>,
}

impl MessagePackage {
    pub fn validate(&self) -> Result<(), PackageError> {
        if self.recipients.is_empty() {
            return Err(PackageError::NoRecipients);
        }
        if self.ciphertext.len() < TAG_LEN {
            return Err(PackageError::ShortCiphertext);
        }
        if self.flags.has_signature() != self.signature.is_some()
            || self.flags.multi_recipient() != (self.recipients.len() > 1)
        {
            return Err(PackageError::FlagMismatch);
        }
        Ok(())
    }

    pub fn recipient(&self, fingerprint: &Fingerprint) -> Option<&RecipientBlock> {
        self.recipients.iter().find(|b| &b.fingerprint == fingerprint)
    }

    fn write_prefix(&self, out: &mut Vec<u8>) {
        out.push(self.scheme_id as u8);
        out.push(self.flags.bits());
        write_uvarint(out, self.recipients.len() as u64);
        for block in &self.recipients {
            out.extend_from_slice(block.fingerprint.as_bytes());
            write_bytes(out, &block.wrapped_key);
        }
        out.extend_from_slice(&self.nonce);
    }

    /// Data authenticated by the AEAD: every header byte up to the nonce, plus
    /// the signer fingerprint when the package is signed. The ciphertext can be
    /// produced once this is fixed.
    pub fn associated_data(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_prefix(&mut out);
        if let Some(sig) = &self.signature {
            out.extend_from_slice(sig.signer_fingerprint.as_bytes());
        }
        out
    }

    /// Bytes covered by the optional signature: the whole package except the
    /// signature value itself.
    pub fn signed_data(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_prefix(&mut out);
        write_bytes(&mut out, &self.ciphertext);
        if let Some(sig) = &self.signature {
            out.extend_from_slice(sig.signer_fingerprint.as_bytes());
        }
        out
    }

    pub fn to_armor(&self) -> Result<ArmoredText> {
        armor_encode(&assemble_package(self)?)
    }

    pub fn from_armor(text: &str) -> Result<MessagePackage> {
        Ok(parse_package(&armor_decode(text)?)?)
    }
}

pub fn assemble_package(p: &MessagePackage) -> Result<Vec<u8>, PackageError> {
    p.validate()?;
    let mut out = Vec::with_capacity(64 + p.ciphertext.len());
    p.write_prefix(&mut out);
    write_bytes(&mut out, &p.ciphertext);
    if let Some(sig) = &p.signature {
        out.extend_from_slice(sig.signer_fingerprint.as_bytes());
        write_bytes(&mut out, &sig.signature);
    }
    Ok(out)
}

pub fn parse_package(bytes: &[u8]) -> Result<MessagePackage, PackageError> {
    let mut r = Reader::new(bytes);
    let scheme_id = SchemeId::try_from(r.byte()?)?;
    let flags = Flags::from_bits(r.byte()?)?;
    let count = r.uvarint()?;
    // Each block needs at least 17 bytes, which bounds the allocation.
    if count > (r.remaining() / (FINGERPRINT_LEN + 1)) as u64 {
        return Err(PackageError::Truncated);
    }
    let mut recipients = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let fingerprint = Fingerprint(r.array()?);
        let wrapped_key = r.bytes()?.to_vec();
        recipients.push(RecipientBlock { fingerprint, wrapped_key });
    }
    let nonce = r.array()?;
    let ciphertext = r.bytes()?.to_vec();
    let signature = if flags.has_signature() {
        let signer_fingerprint = Fingerprint(r.array()?);
        let signature = r.bytes()?.to_vec();
        Some(SignatureBlock { signer_fingerprint, signature })
    } else {
        None
    };
    r.finish()?;
    let package = MessagePackage { scheme_id, flags, recipients, nonce, ciphertext, signature };
    package.validate()?;
    Ok(package)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> MessagePackage {
        MessagePackage {
            scheme_id: SchemeId::Password,
            flags: Flags::default(),
            recipients: vec![RecipientBlock {
                fingerprint: Fingerprint([0xaa; 16]),
                wrapped_key: vec![],
            }],
            nonce: [0x11; 12],
            ciphertext: vec![0x22; 17],
            signature: None,
        }
    }

    #[test]
    fn minimal_layout_offsets() {
        let bytes = assemble_package(&minimal()).unwrap();
        // 1 scheme + 1 flags + 1 count + 16 fp + 1 wk_len + 12 nonce + 1 ct_len + 17 ct
        assert_eq!(bytes.len(), 50);
        assert_eq!(bytes[0], 0x01);
        assert_eq!(bytes[1], 0x00);
        assert_eq!(bytes[2], 0x01);
        assert_eq!(&bytes[3..19], &[0xaa; 16]);
        assert_eq!(bytes[19], 0x00);
        assert_eq!(&bytes[20..32], &[0x11; 12]);
        assert_eq!(bytes[32], 17);
        assert_eq!(&bytes[33..50], &[0x22; 17]);
    }

    #[test]
    fn signature_flag_without_block() {
        let mut p = minimal();
        p.flags = Flags(Flags::HAS_SIGNATURE);
        assert_eq!(assemble_package(&p), Err(PackageError::FlagMismatch));
    }

    #[test]
    fn multi_recipient_flag_must_match() {
        let mut p = minimal();
        p.recipients.push(p.recipients[0].clone());
        assert_eq!(assemble_package(&p), Err(PackageError::FlagMismatch));
        p.flags = Flags::for_parts(2, false);
        assert!(assemble_package(&p).is_ok());
    }

    #[test]
    fn no_recipients_or_short_ciphertext() {
        let mut p = minimal();
        p.recipients.clear();
        assert_eq!(assemble_package(&p), Err(PackageError::NoRecipients));
        let mut p = minimal();
        p.ciphertext.truncate(15);
        assert_eq!(assemble_package(&p), Err(PackageError::ShortCiphertext));
    }

    #[test]
    fn truncated_stream() {
        let bytes = assemble_package(&minimal()).unwrap();
        for cut in 0..bytes.len() {
            assert!(parse_package(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn trailing_byte() {
        let mut bytes = assemble_package(&minimal()).unwrap();
        bytes.push(0);
        assert_eq!(parse_package(&bytes), Err(PackageError::TrailingBytes(1)));
    }

    #[test]
    fn unknown_scheme() {
        let mut bytes = assemble_package(&minimal()).unwrap();
        bytes[0] = 0x7f;
        assert_eq!(parse_package(&bytes), Err(PackageError::UnknownScheme(0x7f)));
    }

    #[test]
    fn unknown_flag_bits() {
        let mut bytes = assemble_package(&minimal()).unwrap();
        bytes[1] = 0x80;
        assert_eq!(parse_package(&bytes), Err(PackageError::UnknownFlags(0x80)));
    }

    #[test]
    fn huge_recipient_count_does_not_allocate() {
        let bytes = [0x01, 0x00, 0xff, 0xff, 0xff, 0xff, 0x0f];
        assert_eq!(parse_package(&bytes), Err(PackageError::Truncated));
    }

    #[test]
    fn signed_roundtrip() {
        let mut p = minimal();
        p.flags = Flags::for_parts(1, true);
        p.signature = Some(SignatureBlock {
            signer_fingerprint: Fingerprint([0x33; 16]),
            signature: vec![9; 256],
        });
        let bytes = assemble_package(&p).unwrap();
        assert_eq!(parse_package(&bytes).unwrap(), p);
        assert!(p.associated_data().ends_with(&[0x33; 16]));
    }
}
