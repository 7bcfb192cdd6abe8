use crate::error::{Error, Result};

/// Canonical form of a recipient identifier (e.g. an email address):
/// surrounding whitespace trimmed and lowercased.
pub fn normalize_identity(raw: &str) -> Result<String> {
    let id = raw.trim().to_lowercase();
    if id.is_empty() || id.chars().any(|c| c.is_control() || c.is_whitespace()) {
        return Err(Error::InvalidIdentity(raw.to_owned()));
    }
    Ok(id)
}
