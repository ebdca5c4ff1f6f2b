//! Little-endian binary encoding shared by the corpus, checkpoint and
//! direction-basis file formats. Every file ends in a SHA-256 digest of the
//! preceding bytes.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};
use crate::ndmath::Matrix;

pub const DIGEST_LEN: usize = 32;

/// SHA-256 digest, used for content hashes and fingerprints.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Default)]
pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, vs: &[f32]) {
        self.buf.reserve(vs.len() * 4);
        for &v in vs {
            self.f32(v);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.bytes(s.as_bytes());
    }

    /// `rows: u32, cols: u32`, then the row-major payload.
    pub fn matrix(&mut self, m: &Matrix) {
        self.u32(m.rows() as u32);
        self.u32(m.cols() as u32);
        self.f32s(m.as_slice());
    }

    /// Body without trailing digest; used for content hashing.
    pub fn body(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(mut self) -> Vec<u8> {
        let d = Digest::of(&self.buf);
        self.buf.extend_from_slice(&d.0);
        self.buf
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    /// Validates magic and trailing digest, then positions the reader just
    /// past the magic.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < magic.len() + DIGEST_LEN {
            return Err(Error::format(
                bytes.len(),
                format!("file too short ({} bytes)", bytes.len()),
            ));
        }
        if &bytes[..4] != magic {
            return Err(Error::format(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&bytes[..4]),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let split = bytes.len() - DIGEST_LEN;
        let (body, stored) = bytes.split_at(split);
        let computed = Digest::of(body);
        if computed.0 != stored {
            return Err(Error::HashMismatch {
                stored: stored.iter().map(|b| format!("{b:02x}")).collect(),
                computed: computed.to_hex(),
            });
        }
        Ok(Self { buf: body, pos: 4 })
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos,
                format!("truncated while reading {what}: need {n} bytes, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn digest(&mut self, what: &str) -> Result<Digest> {
        Ok(Digest(self.take(DIGEST_LEN, what)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let start = self.pos;
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format(start, "length overflow"))?, what)?;
        let vals: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(start + 4 * i, format!("non-finite value in {what}")));
        }
        Ok(vals)
    }

    pub fn str(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let start = self.pos;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::format(start, format!("{what} is not UTF-8")))
    }

    pub fn matrix(&mut self, what: &str) -> Result<Matrix> {
        let rows = self.u32(what)? as usize;
        let cols = self.u32(what)? as usize;
        let data = self.f32s(rows.saturating_mul(cols), what)?;
        Matrix::from_vec(rows, cols, data).map_err(|e| Error::format(self.pos, e.to_string()))
    }

    /// Matrix whose shape must equal `shape`.
    pub fn matrix_shaped(&mut self, shape: (usize, usize), what: &str) -> Result<Matrix> {
        let at = self.pos;
        let m = self.matrix(what)?;
        if m.shape() != shape {
            return Err(Error::format(
                at,
                format!("{what}: expected shape {shape:?}, found {:?}", m.shape()),
            ));
        }
        Ok(m)
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.pos,
                format!("{} trailing bytes before digest", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }

    pub fn expect_version(&mut self, supported: u32) -> Result<u32> {
        let at = self.pos;
        let v = self.u32("format version")?;
        if v != supported {
            return Err(Error::format(at, format!("unsupported format version {v} (supported: {supported})")));
        }
        Ok(v)
    }
}
