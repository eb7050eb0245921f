//! Deterministic binary encoding used for content addressing.
//!
//! Layout rules shared by every encoded type:
//!
//! - every top-level value starts with a one-byte type tag ([`Tag`]);
//! - integers are fixed-width big-endian (`u32` for lengths and counts,
//!   `i64` for timestamps, `u64` for sequence numbers);
//! - strings are a `u32` byte length followed by UTF-8;
//! - maps are emitted in ascending key order, sets in ascending order;
//! - object references are the raw 32 digest bytes.
//!
//! Decoders reject trailing bytes and out-of-order collections, so each
//! value has exactly one encoding.

use crate::id::{ObjectId, DIGEST_LEN};

/// Leading type byte of every encoded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Tag {
    Blob = 0x01,
    Node = 0x02,
    ModelObject = 0x03,
    Tree = 0x04,
    Commit = 0x05,
    ModelGraph = 0x10,
    Workspace = 0x11,
    Contribution = 0x20,
}

impl Tag {
    pub fn from_byte(byte: u8) -> Option<Tag> {
        Some(match byte {
            0x01 => Tag::Blob,
            0x02 => Tag::Node,
            0x03 => Tag::ModelObject,
            0x04 => Tag::Tree,
            0x05 => Tag::Commit,
            0x10 => Tag::ModelGraph,
            0x11 => Tag::Workspace,
            0x20 => Tag::Contribution,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("expected tag {expected:?}, found byte {found:#04x}")]
    WrongTag { expected: Tag, found: u8 },
    #[error("invalid UTF-8 at offset {0}")]
    Utf8(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("non-canonical encoding: {0}")]
    NonCanonical(&'static str),
    #[error("invalid value: {0}")]
    Invalid(String),
}

/// Types with a canonical, injective byte encoding.
pub trait Canonical: Sized {
    fn encode_into(&self, enc: &mut Encoder);
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError>;

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::default();
        self.encode_into(&mut enc);
        enc.finish()
    }

    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let value = Self::decode_from(&mut dec)?;
        dec.finish()?;
        Ok(value)
    }
}

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn tag(&mut self, tag: Tag) {
        self.buf.push(tag as u8);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    /// Collection length. Panics past `u32::MAX` entries.
    pub fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("collection too large to encode"));
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.len(b.len());
        self.buf.extend_from_slice(b);
    }

    pub fn id(&mut self, id: &ObjectId) {
        self.buf.extend_from_slice(id.as_bytes());
    }

    pub fn raw(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::Truncated(self.pos));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn expect_tag(&mut self, expected: Tag) -> Result<(), DecodeError> {
        let found = self.u8()?;
        if found != expected as u8 {
            return Err(DecodeError::WrongTag { expected, found });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn count(&mut self) -> Result<usize, DecodeError> {
        let n = self.u32()? as usize;
        // A count can never exceed the remaining input; guards allocations.
        if n > self.buf.len() - self.pos {
            return Err(DecodeError::Truncated(self.pos));
        }
        Ok(n)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.count()?;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String, DecodeError> {
        let start = self.pos;
        let b = self.bytes()?;
        std::str::from_utf8(b)
            .map(str::to_owned)
            .map_err(|_| DecodeError::Utf8(start))
    }

    pub fn id(&mut self) -> Result<ObjectId, DecodeError> {
        let b = self.take(DIGEST_LEN)?;
        Ok(ObjectId::from_bytes(b.try_into().unwrap()))
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.pos..];
        self.pos = self.buf.len();
        out
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

/// Checks that `items` is strictly ascending.
pub(crate) fn ensure_ascending<T: Ord>(items: &[T], what: &'static str) -> Result<(), DecodeError> {
    if items.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(DecodeError::NonCanonical(what))
    }
}

pub(crate) fn encode_str_map(enc: &mut Encoder, map: &std::collections::BTreeMap<String, String>) {
    enc.len(map.len());
    for (k, v) in map {
        enc.str(k);
        enc.str(v);
    }
}

pub(crate) fn decode_str_map(
    dec: &mut Decoder<'_>,
    what: &'static str,
) -> Result<std::collections::BTreeMap<String, String>, DecodeError> {
    let n = dec.count()?;
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        pairs.push((dec.str()?, dec.str()?));
    }
    let keys: Vec<&String> = pairs.iter().map(|(k, _)| k).collect();
    ensure_ascending(&keys, what)?;
    Ok(pairs.into_iter().collect())
}

pub(crate) fn encode_str_set(enc: &mut Encoder, set: &std::collections::BTreeSet<String>) {
    enc.len(set.len());
    for s in set {
        enc.str(s);
    }
}

pub(crate) fn decode_str_set(
    dec: &mut Decoder<'_>,
    what: &'static str,
) -> Result<std::collections::BTreeSet<String>, DecodeError> {
    let n = dec.count()?;
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        items.push(dec.str()?);
    }
    ensure_ascending(&items, what)?;
    Ok(items.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_are_big_endian() {
        let mut enc = Encoder::default();
        enc.u32(1);
        enc.i64(-2);
        assert_eq!(
            enc.finish(),
            vec![0, 0, 0, 1, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xfe]
        );
    }

    #[test]
    fn strings_are_length_prefixed() {
        let mut enc = Encoder::default();
        enc.str("hé");
        assert_eq!(enc.finish(), vec![0, 0, 0, 3, b'h', 0xc3, 0xa9]);
    }

    #[test]
    fn truncated_input_is_an_error() {
        let mut dec = Decoder::new(&[0, 0, 0, 9, b'a']);
        assert!(matches!(dec.str(), Err(DecodeError::Truncated(_))));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut dec = Decoder::new(&[1, 2]);
        dec.u8().unwrap();
        assert_eq!(dec.finish(), Err(DecodeError::Trailing(1)));
    }
}
