//! Byte-level encoding shared by every checkpoint and dataset format.
//!
//! All formats are little-endian: a 4-byte magic, a `u32` format
//! version, format-specific header fields, then payload. Encoding and
//! decoding are exact inverses at the byte level.

use alloc::string::String;
use alloc::vec::Vec;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    BadVersion { expected: u32, found: u32 },
    #[error("truncated input: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("trailing garbage: {extra} bytes past the end of the payload")]
    TrailingBytes { extra: usize },
    #[error("invalid field: {0}")]
    Invalid(String),
}

pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.put_u32(FORMAT_VERSION);
        w
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Opens a reader and checks magic and version.
    pub fn new(buf: &'a [u8], magic: &[u8; 4]) -> Result<Self, CodecError> {
        let mut r = Reader { buf, pos: 0 };
        let found = r.take_array::<4>()?;
        if &found != magic {
            return Err(CodecError::BadMagic {
                expected: *magic,
                found,
            });
        }
        let version = r.take_u32()?;
        if version != FORMAT_VERSION {
            return Err(CodecError::BadVersion {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        Ok(r)
    }

    fn take_array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        if self.pos + N > self.buf.len() {
            return Err(CodecError::Truncated {
                expected: self.pos + N,
                actual: self.buf.len(),
            });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        Ok(out)
    }

    pub fn take_u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take_array::<1>()?[0])
    }

    pub fn take_u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take_array::<4>()?))
    }

    pub fn take_u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take_array::<8>()?))
    }

    pub fn take_f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.take_array::<4>()?))
    }

    /// Remaining unread byte count.
    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Fails unless every byte has been consumed.
    pub fn expect_end(&self) -> Result<(), CodecError> {
        if self.pos != self.buf.len() {
            return Err(CodecError::TrailingBytes {
                extra: self.buf.len() - self.pos,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_primitives() {
        let mut w = Writer::new(b"TEST");
        w.put_u8(7);
        w.put_u32(0xdead_beef);
        w.put_u64(u64::MAX - 1);
        w.put_f32(1.5);
        let bytes = w.finish();

        let mut r = Reader::new(&bytes, b"TEST").unwrap();
        assert_eq!(r.take_u8().unwrap(), 7);
        assert_eq!(r.take_u32().unwrap(), 0xdead_beef);
        assert_eq!(r.take_u64().unwrap(), u64::MAX - 1);
        assert_eq!(r.take_f32().unwrap(), 1.5);
        r.expect_end().unwrap();
    }

    #[test]
    fn wrong_magic_is_reported() {
        let bytes = Writer::new(b"AAAA").finish();
        let err = Reader::new(&bytes, b"BBBB").unwrap_err();
        assert_eq!(
            err,
            CodecError::BadMagic {
                expected: *b"BBBB",
                found: *b"AAAA"
            }
        );
    }

    #[test]
    fn truncation_names_lengths() {
        let mut w = Writer::new(b"TEST");
        w.put_u64(1);
        let mut bytes = w.finish();
        bytes.truncate(bytes.len() - 3);
        let mut r = Reader::new(&bytes, b"TEST").unwrap();
        let err = r.take_u64().unwrap_err();
        assert_eq!(
            err,
            CodecError::Truncated {
                expected: 16,
                actual: 13
            }
        );
    }
}
