//! Little-endian encoding helpers shared by every binary file format.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::{Error, Result, PAGE_SIZE};

/// Buffered writer that remembers its path and how many bytes it has emitted.
pub(crate) struct Encoder {
    path: PathBuf,
    inner: BufWriter<File>,
    written: u64,
}

impl Encoder {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner: BufWriter::with_capacity(1 << 20, file),
            written: 0,
        })
    }

    pub fn bytes(&mut self, buf: &[u8]) -> Result<()> {
        self.inner
            .write_all(buf)
            .map_err(|e| Error::io(&self.path, e))?;
        self.written += buf.len() as u64;
        Ok(())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn i64(&mut self, v: i64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64_slice(&mut self, vs: &[u64]) -> Result<()> {
        for &v in vs {
            self.u64(v)?;
        }
        Ok(())
    }

    /// Length-prefixed `u64` array.
    pub fn u64_array(&mut self, vs: &[u64]) -> Result<()> {
        self.u64(vs.len() as u64)?;
        self.u64_slice(vs)
    }

    pub fn position(&self) -> u64 {
        self.written
    }

    /// Zero-fill up to the next multiple of the page size.
    pub fn pad_to_page(&mut self) -> Result<()> {
        let target = self.written.next_multiple_of(PAGE_SIZE);
        self.pad_to(target)
    }

    pub fn pad_to(&mut self, offset: u64) -> Result<()> {
        debug_assert!(offset >= self.written);
        const ZEROS: [u8; 4096] = [0; 4096];
        while self.written < offset {
            let n = ((offset - self.written) as usize).min(ZEROS.len());
            self.bytes(&ZEROS[..n])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Cursor over an in-memory file image. Every read is bounds-checked and
/// reports truncation as a format error naming the file.
pub(crate) struct Decoder<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(path: &'a Path, buf: &'a [u8]) -> Self {
        Self { path, buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| {
                Error::format(
                    self.path,
                    format!("truncated: need {n} bytes at offset {}", self.pos),
                )
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let got = self.take(8)?;
        if got != expected {
            return Err(Error::format(
                self.path,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads a length field and checks it against the bytes still available,
    /// so corrupt lengths fail cleanly instead of triggering huge allocations.
    pub fn len(&mut self, elem_bytes: usize) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(elem_bytes as u64) > remaining {
            return Err(Error::format(
                self.path,
                format!("length {n} exceeds remaining {remaining} bytes"),
            ));
        }
        Ok(n as usize)
    }

    pub fn u64_vec(&mut self, n: usize) -> Result<Vec<u64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| self.err("length overflow"))?,
        )?;
        Ok(decode_u64s(bytes))
    }

    pub fn i64_vec(&mut self, n: usize) -> Result<Vec<i64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| self.err("length overflow"))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Length-prefixed `u64` array.
    pub fn u64_array(&mut self) -> Result<Vec<u64>> {
        let n = self.len(8)?;
        self.u64_vec(n)
    }

    pub fn seek(&mut self, pos: usize) -> Result<()> {
        if pos > self.buf.len() {
            return Err(self.err(format!("offset {pos} past end of file")));
        }
        self.pos = pos;
        Ok(())
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn err(&self, reason: impl Into<String>) -> Error {
        Error::format(self.path, reason)
    }
}

pub(crate) fn decode_u64s(bytes: &[u8]) -> Vec<u64> {
    bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
