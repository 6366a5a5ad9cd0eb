//! Little-endian binary framing shared by the `.rnds` and `.rnnw` files.
//!
//! Both files are a fixed header, a run of `f32` values and a CRC32
//! trailer. The checksum covers every byte before the trailer, header
//! included, so a flipped byte anywhere in the file fails to load.

use std::fs;
use std::path::Path;

use crate::error::{Error, FormatError, Result};

pub const FORMAT_VERSION: u32 = 1;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: [u8; 4], capacity: usize) -> Self {
        let mut buf = Vec::with_capacity(capacity + 64);
        buf.extend_from_slice(&magic);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Self { buf }
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f32s(&mut self, vals: impl IntoIterator<Item = f32>) -> &mut Self {
        for v in vals {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    pub fn f64s(&mut self, vals: impl IntoIterator<Item = f64>) -> &mut Self {
        for v in vals {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version and positions the cursor after them.
    pub fn open(data: &'a [u8], magic: [u8; 4]) -> Result<Self, FormatError> {
        if data.len() < 8 {
            return Err(FormatError::Truncated(format!(
                "{} bytes is shorter than the 8-byte preamble",
                data.len()
            )));
        }
        let found = [data[0], data[1], data[2], data[3]];
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: magic,
                found,
            });
        }
        let version = u32::from_le_bytes(data[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(FormatError::VersionMismatch {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        Ok(Self { data, pos: 8 })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.data.len() {
            return Err(FormatError::Truncated(format!(
                "file ends inside {what} (needs {} bytes at offset {}, file has {})",
                n,
                self.pos,
                self.data.len()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn bytes3(&mut self, what: &str) -> Result<[u8; 3], FormatError> {
        let b = self.take(3, what)?;
        Ok([b[0], b[1], b[2]])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// Verifies that exactly `n_values` f32s plus the trailer remain, then
    /// the checksum. Call after the header has been read.
    pub fn expect_payload(&self, n_values: usize) -> Result<(), FormatError> {
        self.expect_bytes(n_values.checked_mul(4))
    }

    /// As [`Reader::expect_payload`] for a payload of `n_values` f64s.
    pub fn expect_payload64(&self, n_values: usize) -> Result<(), FormatError> {
        self.expect_bytes(n_values.checked_mul(8))
    }

    fn expect_bytes(&self, payload: Option<usize>) -> Result<(), FormatError> {
        let need = payload
            .and_then(|b| b.checked_add(4 + self.pos))
            .ok_or_else(|| FormatError::Dimension("payload size overflows".into()))?;
        if self.data.len() < need {
            return Err(FormatError::Truncated(format!(
                "payload needs {need} bytes, file has {}",
                self.data.len()
            )));
        }
        if self.data.len() > need {
            return Err(FormatError::TrailingBytes(self.data.len() - need));
        }
        let body = &self.data[..self.data.len() - 4];
        let stored = u32::from_le_bytes(self.data[self.data.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(FormatError::ChecksumFailure { stored, computed });
        }
        Ok(())
    }

    pub fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, FormatError> {
        let b = self.take(n * 4, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, FormatError> {
        let b = self.take(n * 8, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::from)
}
