//! Unsigned LEB128 and a small cursor used by every binary encoding in the crate.

use crate::error::PackageError;

pub fn write_uvarint(out: &mut Vec<u8>, mut value: u64) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

/// Writes `LEB128(len) ‖ bytes`.
pub fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    write_uvarint(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], PackageError> {
        if self.remaining() < n {
            return Err(PackageError::Truncated);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], PackageError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn byte(&mut self) -> Result<u8, PackageError> {
        Ok(self.take(1)?[0])
    }

    /// Rejects encodings longer than ten bytes, values above `u64::MAX`,
    /// and non-minimal trailing zero groups.
    pub fn uvarint(&mut self) -> Result<u64, PackageError> {
        let mut value: u64 = 0;
        for i in 0..10 {
            let byte = self.byte()?;
            let low = u64::from(byte & 0x7f);
            if i == 9 && low > 1 {
                return Err(PackageError::VarintOverflow);
            }
            value |= low << (7 * i);
            if byte & 0x80 == 0 {
                if i > 0 && byte == 0 {
                    return Err(PackageError::VarintOverflow);
                }
                return Ok(value);
            }
        }
        Err(PackageError::VarintOverflow)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], PackageError> {
        let len = self.uvarint()?;
        let len = usize::try_from(len).map_err(|_| PackageError::Truncated)?;
        self.take(len)
    }

    pub fn finish(&self) -> Result<(), PackageError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(PackageError::TrailingBytes(n)),
        }
    }
}
