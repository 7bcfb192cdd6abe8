//! ASCII armor for binary packages and detection of armored payloads in text.
//!
//! Grammar: `MG1.` ‖ base64url(package, unpadded) ‖ `.END`, no whitespace anywhere.

use std::fmt;
use std::sync::OnceLock;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ARMOR_PREFIX: &str = "MG1.";
pub const ARMOR_SUFFIX: &str = ".END";
pub const ARMOR_PATTERN: &str = r"MG1\.[A-Za-z0-9_-]+\.END";

fn armor_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(ARMOR_PATTERN).expect("static pattern"))
}

/// Armored package text. Always satisfies the armor grammar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ArmoredText(String);

impl ArmoredText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn decode(&self) -> Vec<u8> {
        armor_decode(&self.0).expect("ArmoredText is validated on construction")
    }
}

impl fmt::Display for ArmoredText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for ArmoredText {
    type Error = Error;

    fn try_from(text: String) -> Result<Self> {
        armor_decode(&text)?;
        Ok(ArmoredText(text))
    }
}

impl std::str::FromStr for ArmoredText {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArmoredText::try_from(s.to_owned())
    }
}

impl From<ArmoredText> for String {
    fn from(a: ArmoredText) -> String {
        a.0
    }
}

pub fn armor_encode(package: &[u8]) -> Result<ArmoredText> {
    if package.is_empty() {
        return Err(Error::EmptyPayload);
    }
    let body = URL_SAFE_NO_PAD.encode(package);
    Ok(ArmoredText(format!("{ARMOR_PREFIX}{body}{ARMOR_SUFFIX}")))
}

/// Strict inverse of [`armor_encode`]. Non-canonical trailing bits in the last
/// base64 character are rejected, so every package has exactly one armoring.
pub fn armor_decode(text: &str) -> Result<Vec<u8>> {
    let body = text
        .strip_prefix(ARMOR_PREFIX)
        .and_then(|rest| rest.strip_suffix(ARMOR_SUFFIX))
        .ok_or(Error::MalformedArmor)?;
    if body.is_empty()
        || !body
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
    {
        return Err(Error::MalformedArmor);
    }
    let bytes = URL_SAFE_NO_PAD
        .decode(body)
        .map_err(|_| Error::MalformedArmor)?;
    if bytes.is_empty() {
        return Err(Error::MalformedArmor);
    }
    Ok(bytes)
}

/// One armored payload found by [`scan_text`]. Offsets count Unicode scalar
/// values, `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadSpan {
    pub start: usize,
    pub end: usize,
    pub armored: ArmoredText,
}

pub fn scan_text(text: &str) -> Vec<PayloadSpan> {
    let mut spans = Vec::new();
    let mut chars_before = 0usize;
    let mut last_byte = 0usize;
    for m in armor_regex().find_iter(text) {
        chars_before += text[last_byte..m.start()].chars().count();
        let len = m.as_str().chars().count();
        last_byte = m.start();
        if let Ok(armored) = m.as_str().parse::<ArmoredText>() {
            spans.push(PayloadSpan {
                start: chars_before,
                end: chars_before + len,
                armored,
            });
        }
    }
    spans
}
